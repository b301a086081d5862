//! Energies, the Nehari-type coefficient pair `(t₁, t₂)`, the reduced
//! functional `J_β` on the `L⁴` constraint manifold and its derivative.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, GridDomain};

/// Which functional is being studied: the symmetric one (both components
/// sign-changing) or the one with `|u₂⁺|₄` in place of `|u₂|₄` (first
/// component sign-changing, second positive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    SignChanging,
    SemiNodal,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::SignChanging => "sign_changing",
            Mode::SemiNodal => "semi_nodal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub beta: f64,
    pub mode: Mode,
}

impl SystemParams {
    pub fn new(lambda1: f64, lambda2: f64, mu1: f64, mu2: f64, beta: f64, mode: Mode) -> Result<Self> {
        let p = SystemParams { lambda1, lambda2, mu1, mu2, beta, mode };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("mu1", self.mu1), ("mu2", self.mu2)] {
            if !(v > 0.0 && v.is_finite()) {
                bad.push(format!("{name} must be > 0 (got {v})"));
            }
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            bad.push(format!("beta must be ≥ 0 (paper regime) (got {})", self.beta));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(bad.join("; ")))
        }
    }

    pub fn lambda(&self, i: usize) -> f64 {
        if i == 1 { self.lambda1 } else { self.lambda2 }
    }

    pub fn mu(&self, i: usize) -> f64 {
        if i == 1 { self.mu1 } else { self.mu2 }
    }
}

/// A pair normalised onto the constraint manifold: `|u₁|₄ = 1` and
/// `|u₂|₄ = 1` (sign-changing) or `|u₂⁺|₄ = 1` (semi-nodal).
#[derive(Debug, Clone, PartialEq)]
pub struct StatePair {
    pub u1: Field,
    pub u2: Field,
    pub mode: Mode,
}

impl StatePair {
    /// Rescales each component onto the manifold.
    pub fn normalized(dom: &GridDomain, u1: Field, u2: Field, mode: Mode) -> Result<Self> {
        dom.check(&u1)?;
        dom.check(&u2)?;
        if !u1.is_finite() || !u2.is_finite() {
            return Err(Error::DegenerateSeed("non-finite entries".into()));
        }
        let n1 = dom.l4(&u1);
        let n2 = second_constraint_norm(dom, &u2, mode);
        if n1 == 0.0 {
            return Err(Error::DegenerateSeed("first component vanishes".into()));
        }
        if n2 == 0.0 {
            return Err(Error::DegenerateSeed(match mode {
                Mode::SignChanging => "second component vanishes".into(),
                Mode::SemiNodal => "positive part of the second component vanishes".into(),
            }));
        }
        Ok(StatePair { u1: u1.scaled(1.0 / n1), u2: u2.scaled(1.0 / n2), mode })
    }

    /// Largest deviation of the two constraint norms from 1.
    pub fn constraint_drift(&self, dom: &GridDomain) -> f64 {
        let a = (dom.l4(&self.u1) - 1.0).abs();
        let b = (second_constraint_norm(dom, &self.u2, self.mode) - 1.0).abs();
        a.max(b)
    }

    pub fn component(&self, i: usize) -> &Field {
        if i == 1 { &self.u1 } else { &self.u2 }
    }
}

/// `|u₂|₄` or `|u₂⁺|₄` depending on the mode.
pub fn second_constraint_norm(dom: &GridDomain, u2: &Field, mode: Mode) -> f64 {
    second_quartic(dom, u2, mode).sqrt().sqrt()
}

fn second_quartic(dom: &GridDomain, u2: &Field, mode: Mode) -> f64 {
    match mode {
        Mode::SignChanging => dom.l4_pow4(u2),
        Mode::SemiNodal => dom.integrate_with(u2, u2, |a, _| {
            let p = a.max(0.0);
            let p2 = p * p;
            p2 * p2
        }),
    }
}

/// The scalar integrals every formula of the reduced functional is built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    /// `‖u₁‖²_{λ₁}`
    pub h1: f64,
    /// `‖u₂‖²_{λ₂}`
    pub h2: f64,
    /// `|u₁|₄⁴`
    pub q1: f64,
    /// `|u₂|₄⁴`, or `|u₂⁺|₄⁴` in semi-nodal mode
    pub q2: f64,
    /// `∫ u₁² u₂²` (always the full `u₂`)
    pub coupling: f64,
}

pub fn moments(dom: &GridDomain, params: &SystemParams, u1: &Field, u2: &Field) -> Moments {
    Moments {
        h1: dom.norm_h_sq_unchecked(u1, params.lambda1),
        h2: dom.norm_h_sq_unchecked(u2, params.lambda2),
        q1: dom.l4_pow4(u1),
        q2: second_quartic(dom, u2, params.mode),
        coupling: dom.integrate_with(u1, u2, |a, b| a * a * b * b),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TPair {
    pub t1: f64,
    pub t2: f64,
    /// `μ₁μ₂|u₁|₄⁴|u₂|₄⁴ − β²(∫u₁²u₂²)²`
    pub denom: f64,
    /// `μ₂|u₂|₄⁴‖u₁‖² − β‖u₂‖²∫u₁²u₂²`
    pub cond1: f64,
    /// `μ₁|u₁|₄⁴‖u₂‖² − β‖u₁‖²∫u₁²u₂²`
    pub cond2: f64,
}

impl TPair {
    pub fn min(&self) -> f64 {
        self.t1.min(self.t2)
    }

    pub fn max(&self) -> f64 {
        self.t1.max(self.t2)
    }

    pub fn get(&self, i: usize) -> f64 {
        if i == 1 { self.t1 } else { self.t2 }
    }
}

pub fn t_from_moments(params: &SystemParams, m: &Moments) -> Result<TPair> {
    let b = params.beta;
    let cond1 = params.mu2 * m.q2 * m.h1 - b * m.h2 * m.coupling;
    let cond2 = params.mu1 * m.q1 * m.h2 - b * m.h1 * m.coupling;
    let denom = params.mu1 * params.mu2 * m.q1 * m.q2 - b * b * m.coupling * m.coupling;
    if !(cond1 > 0.0) {
        return Err(Error::BetaTooLarge { violated: "first solvability condition", value: cond1 });
    }
    if !(cond2 > 0.0) {
        return Err(Error::BetaTooLarge { violated: "second solvability condition", value: cond2 });
    }
    if !(denom > 0.0) {
        return Err(Error::BetaTooLarge { violated: "coefficient determinant", value: denom });
    }
    Ok(TPair { t1: cond1 / denom, t2: cond2 / denom, denom, cond1, cond2 })
}

fn check_mode(params: &SystemParams, state: &StatePair) -> Result<()> {
    if params.mode != state.mode {
        return Err(Error::Mode("state mode differs from parameter mode"));
    }
    Ok(())
}

/// `E_β(u₁, u₂)` for an arbitrary pair.
pub fn energy_e(dom: &GridDomain, params: &SystemParams, u1: &Field, u2: &Field) -> f64 {
    let h1 = dom.norm_h_sq_unchecked(u1, params.lambda1);
    let h2 = dom.norm_h_sq_unchecked(u2, params.lambda2);
    let c = dom.integrate_with(u1, u2, |a, b| a * a * b * b);
    0.5 * (h1 + h2) - 0.25 * (params.mu1 * dom.l4_pow4(u1) + params.mu2 * dom.l4_pow4(u2))
        - 0.5 * params.beta * c
}

/// `Ẽ_β`: `E_β` with `μ₂|u₂|₄⁴` replaced by `μ₂|u₂⁺|₄⁴`.
pub fn energy_e_tilde(dom: &GridDomain, params: &SystemParams, u1: &Field, u2: &Field) -> Result<f64> {
    if params.mode != Mode::SemiNodal {
        return Err(Error::Mode("energy_e_tilde requires semi_nodal mode"));
    }
    let h1 = dom.norm_h_sq_unchecked(u1, params.lambda1);
    let h2 = dom.norm_h_sq_unchecked(u2, params.lambda2);
    let c = dom.integrate_with(u1, u2, |a, b| a * a * b * b);
    let q2p = second_quartic(dom, u2, Mode::SemiNodal);
    Ok(0.5 * (h1 + h2) - 0.25 * (params.mu1 * dom.l4_pow4(u1) + params.mu2 * q2p) - 0.5 * params.beta * c)
}

/// The energy matching the mode: `E_β` or `Ẽ_β`.
pub fn energy_for_mode(dom: &GridDomain, params: &SystemParams, u1: &Field, u2: &Field) -> f64 {
    match params.mode {
        Mode::SignChanging => energy_e(dom, params, u1, u2),
        Mode::SemiNodal => energy_e_tilde(dom, params, u1, u2).expect("mode checked"),
    }
}

pub fn t_coefficients(dom: &GridDomain, params: &SystemParams, state: &StatePair) -> Result<TPair> {
    check_mode(params, state)?;
    t_from_moments(params, &moments(dom, params, &state.u1, &state.u2))
}

/// `sup_{s₁,s₂≥0} E(√s₁u₁, √s₂u₂) = ¼(t₁‖u₁‖² + t₂‖u₂‖²)`.
pub fn sup_energy(dom: &GridDomain, params: &SystemParams, state: &StatePair) -> Result<f64> {
    check_mode(params, state)?;
    let m = moments(dom, params, &state.u1, &state.u2);
    let t = t_from_moments(params, &m)?;
    Ok(0.25 * (t.t1 * m.h1 + t.t2 * m.h2))
}

pub fn j_from_moments(params: &SystemParams, m: &Moments) -> Result<f64> {
    let b = params.beta;
    let den = params.mu1 * params.mu2 - b * b * m.coupling * m.coupling;
    if !(den > 0.0) {
        return Err(Error::BetaTooLarge { violated: "reduced functional denominator", value: den });
    }
    let num = params.mu2 * m.h1 * m.h1 - 2.0 * b * m.h1 * m.h2 * m.coupling + params.mu1 * m.h2 * m.h2;
    Ok(0.25 * num / den)
}

/// Reduced functional `J_β`. Its formula has the unit `L⁴` constraints
/// absorbed, so it coincides with [`sup_energy`] only on the manifold; off the
/// manifold it is the literal expression (needed for derivative checks).
pub fn energy_j(dom: &GridDomain, params: &SystemParams, state: &StatePair) -> Result<f64> {
    check_mode(params, state)?;
    j_from_moments(params, &moments(dom, params, &state.u1, &state.u2))
}

/// `J_β'(u)[(φ, ψ)]`, valid at points of the manifold.
pub fn dj_directional(
    dom: &GridDomain,
    params: &SystemParams,
    state: &StatePair,
    dir1: &Field,
    dir2: &Field,
) -> Result<f64> {
    dom.check(dir1)?;
    dom.check(dir2)?;
    let t = t_coefficients(dom, params, state)?;
    Ok(dj_with_t(dom, params, state, &t, dir1, dir2))
}

pub(crate) fn dj_with_t(
    dom: &GridDomain,
    params: &SystemParams,
    state: &StatePair,
    t: &TPair,
    dir1: &Field,
    dir2: &Field,
) -> f64 {
    let (u1, u2) = (&state.u1, &state.u2);
    let b = params.beta;
    let a1 = dom.inner_h_unchecked(u1, dir1, params.lambda1);
    let a2 = dom.inner_h_unchecked(u2, dir2, params.lambda2);
    let w = dom.quad_weight();
    let (mut c1, mut c2) = (0.0, 0.0);
    for p in 0..dom.len() {
        let (x, y) = (u1[p], u2[p]);
        c1 += x * y * y * dir1[p];
        c2 += x * x * y * dir2[p];
    }
    t.t1 * a1 - t.t1 * t.t2 * b * w * c1 + t.t2 * a2 - t.t1 * t.t2 * b * w * c2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    /// `½ < |u₁|₄⁴ < 2` and the same for the mode's second quartic.
    pub l4_window_ok: bool,
    pub conditions_ok: bool,
    pub denom_positive: bool,
    /// Both numerators of the reduced-functional domain are positive and its
    /// denominator `μ₁μ₂ − β²(∫u₁²u₂²)²` is positive.
    pub reduced_domain_ok: bool,
    pub empirical_s: f64,
    pub shifted_coercive: bool,
    pub cond1: f64,
    pub cond2: f64,
    pub denom: f64,
    /// Smallest observed ratio `(‖v‖² − βt_j∫u_j²v²)/‖v‖²` over probes and components.
    pub coercivity_ratio: f64,
}

impl MembershipReport {
    pub fn admissible(&self) -> bool {
        self.l4_window_ok && self.conditions_ok && self.denom_positive && self.reduced_domain_ok && self.shifted_coercive
    }
}

pub(crate) const PROBE_SEED: u64 = 0x5eed_c0e4;

pub fn check_membership(dom: &GridDomain, params: &SystemParams, state: &StatePair) -> MembershipReport {
    let s = dom.empirical_sobolev(params.lambda1.min(params.lambda2), 100, PROBE_SEED);
    check_membership_with_s(dom, params, state, s)
}

/// [`check_membership`] with a precomputed empirical Sobolev constant.
pub fn check_membership_with_s(dom: &GridDomain, params: &SystemParams, state: &StatePair, empirical_s: f64) -> MembershipReport {
    check_membership_probes(dom, params, state, empirical_s, &[])
}

/// Membership check whose coercivity sample also includes `extra` probes.
pub fn check_membership_probes(
    dom: &GridDomain,
    params: &SystemParams,
    state: &StatePair,
    empirical_s: f64,
    extra: &[&Field],
) -> MembershipReport {
    let m = moments(dom, params, &state.u1, &state.u2);
    let b = params.beta;
    let cond1 = params.mu2 * m.q2 * m.h1 - b * m.h2 * m.coupling;
    let cond2 = params.mu1 * m.q1 * m.h2 - b * m.h1 * m.coupling;
    let denom = params.mu1 * params.mu2 * m.q1 * m.q2 - b * b * m.coupling * m.coupling;
    let window = |q: f64| q > 0.5 && q < 2.0;
    let reduced_domain_ok = params.mu2 * m.h1 - b * m.h2 * m.coupling > 0.0
        && params.mu1 * m.h2 - b * m.h1 * m.coupling > 0.0
        && params.mu1 * params.mu2 - b * b * m.coupling * m.coupling > 0.0;
    let mut coercivity_ratio = f64::NEG_INFINITY;
    let mut shifted_coercive = false;
    if let Ok(t) = t_from_moments(params, &m) {
        coercivity_ratio = f64::INFINITY;
        let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED ^ 0x9e37);
        let probes = (0..20).map(|k| dom.smoothed_noise(&mut rng, 2 * k)).chain(extra.iter().map(|f| (*f).clone()));
        for v in probes {
            for i in 1..=2 {
                let (uj, tj) = if i == 1 { (&state.u2, t.t2) } else { (&state.u1, t.t1) };
                let nv = dom.norm_h_sq_unchecked(&v, params.lambda(i));
                let pot = dom.integrate_with(uj, &v, |a, c| a * a * c * c);
                if nv > 0.0 {
                    coercivity_ratio = coercivity_ratio.min((nv - b * tj * pot) / nv);
                }
            }
        }
        shifted_coercive = coercivity_ratio >= 0.5;
    }

    MembershipReport {
        l4_window_ok: window(m.q1) && window(m.q2),
        conditions_ok: cond1 > 0.0 && cond2 > 0.0,
        denom_positive: denom > 0.0,
        reduced_domain_ok,
        empirical_s,
        shifted_coercive,
        cond1,
        cond2,
        denom,
        coercivity_ratio,
    }
}

/// `L⁴` distance to the cone of componentwise-signed pairs: the smallest
/// nodal mass `|u_i^∓|₄` over both components, or over `u₁` only in
/// semi-nodal mode.
pub fn cone_distance(dom: &GridDomain, state: &StatePair) -> f64 {
    let l4p = |u: &Field| dom.l4(&u.positive_part());
    let l4m = |u: &Field| dom.l4(&u.negative_part());
    let d1 = l4p(&state.u1).min(l4m(&state.u1));
    match state.mode {
        Mode::SignChanging => d1.min(l4p(&state.u2)).min(l4m(&state.u2)),
        Mode::SemiNodal => d1,
    }
}

/// The sign flips `σ₁(u₁,u₂) = (−u₁,u₂)` and `σ₂(u₁,u₂) = (u₁,−u₂)`.
pub fn apply_sigma(i: usize, state: &StatePair) -> Result<StatePair> {
    match i {
        1 => Ok(StatePair { u1: state.u1.neg(), u2: state.u2.clone(), mode: state.mode }),
        2 if state.mode == Mode::SemiNodal => Err(Error::Mode("sigma_2 is not a symmetry in semi_nodal mode")),
        2 => Ok(StatePair { u1: state.u1.clone(), u2: state.u2.neg(), mode: state.mode }),
        _ => Err(Error::Mode("sigma index must be 1 or 2")),
    }
}
