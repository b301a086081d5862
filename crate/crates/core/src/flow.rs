//! Descending flow `dη/dt = −V(η)` on the constraint manifold, discretised by
//! explicit Euler with backtracking on `J_β` and per-step projection back to
//! the unit `L⁴` constraints; recovery and classification of the physical
//! solution at a zero of `V`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{
    check_membership_probes, cone_distance, dj_with_t, energy_e, energy_for_mode, j_from_moments, moments,
    second_constraint_norm, MembershipReport, Mode, StatePair, SystemParams, TPair, PROBE_SEED,
};
use crate::grid::{Field, GridDomain};
use crate::linear::{vector_field, CgOptions, VectorField};

/// Allowed increase of `J` on an accepted step (rounding slack).
pub const J_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub dt0: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Convergence threshold on `‖V‖_H`.
    pub tol_v: f64,
    pub max_steps: usize,
    pub backtrack_factor: f64,
    pub renorm: bool,
    pub record_every: usize,
    /// Keep every recorded state in [`FlowResult::states`].
    pub record_states: bool,
    pub cg: CgOptions,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            dt0: 0.1,
            dt_min: 1e-10,
            dt_max: 1.0,
            tol_v: 1e-8,
            max_steps: 5000,
            backtrack_factor: 0.5,
            renorm: true,
            record_every: 1,
            record_states: false,
            cg: CgOptions::default(),
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt0 && self.dt0 <= self.dt_max) {
            bad.push(format!(
                "need 0 < dt_min <= dt0 <= dt_max (got {}, {}, {})",
                self.dt_min, self.dt0, self.dt_max
            ));
        }
        if !(self.tol_v > 0.0) {
            bad.push(format!("tol_v must be > 0 (got {})", self.tol_v));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            bad.push(format!("backtrack_factor must lie in (0, 1) (got {})", self.backtrack_factor));
        }
        if self.record_every == 0 {
            bad.push("record_every must be >= 1".into());
        }
        if !(self.cg.tol > 0.0) {
            bad.push(format!("cg tol must be > 0 (got {})", self.cg.tol));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxSteps,
    Stalled,
    LeftAdmissibleRegion,
}

/// Per-run audit of the flow's structural guarantees. Step-dependent
/// entries are `None` when no step was accepted.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FlowAudit {
    /// `min (J'(u)[V] − ½·min(t₁,t₂)‖V‖²_H + 1e-8)` over accepted steps.
    pub descent_margin: Option<f64>,
    /// Same with the per-component bound `Σ (t_i/2)‖V_i‖²_{λ_i}`.
    pub descent_margin_sharp: Option<f64>,
    /// Largest `J(next) − J(prev)` over accepted steps.
    pub max_j_increase: Option<f64>,
    /// Accepted steps with `J(next) > J(prev) + J_SLACK`.
    pub j_violations: usize,
    /// Accepted steps whose starting state passed the membership check and
    /// so entered the descent margins.
    pub descent_checked: usize,
    /// Accepted steps from states outside the admissible region.
    pub descent_skipped: usize,
    /// Largest constraint deviation after an accepted step.
    pub max_constraint_drift: f64,
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
}

fn fold(slot: &mut Option<f64>, v: f64, f: fn(f64, f64) -> f64) {
    *slot = Some(slot.map_or(v, |s| f(s, v)));
}

impl FlowAudit {
    pub fn passed(&self) -> bool {
        self.descent_margin.is_none_or(|m| m >= 0.0) && self.j_violations == 0 && self.max_constraint_drift <= 1e-12
    }
}

#[derive(Debug, Clone)]
pub struct FlowResult {
    pub final_state: StatePair,
    /// `V` at the final state.
    pub final_field: VectorField,
    pub converged: bool,
    pub stop_reason: StopReason,
    /// Accepted steps.
    pub steps: usize,
    /// Accepted plus rejected trial steps.
    pub trials: usize,
    pub recorded_steps: Vec<usize>,
    pub j_history: Vec<f64>,
    pub vnorm_history: Vec<f64>,
    pub cone_history: Vec<f64>,
    pub diagnostics: Vec<MembershipReport>,
    pub states: Vec<StatePair>,
    pub audit: FlowAudit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: StatePair,
    pub accepted: bool,
    pub dt: f64,
}

enum Trial {
    Accepted { state: StatePair, field: VectorField, j: f64 },
    Rejected { admissible: bool },
}

fn project(dom: &GridDomain, state: StatePair) -> Option<StatePair> {
    let n1 = dom.l4(&state.u1);
    let n2 = second_constraint_norm(dom, &state.u2, state.mode);
    if !(n1 > 0.0 && n2 > 0.0 && n1.is_finite() && n2.is_finite()) {
        return None;
    }
    Some(StatePair { u1: state.u1.scaled(1.0 / n1), u2: state.u2.scaled(1.0 / n2), mode: state.mode })
}

fn j_value(dom: &GridDomain, params: &SystemParams, state: &StatePair) -> Result<f64> {
    j_from_moments(params, &moments(dom, params, &state.u1, &state.u2))
}

fn try_step(
    dom: &GridDomain,
    params: &SystemParams,
    state: &StatePair,
    field: &VectorField,
    j: f64,
    dt: f64,
    cfg: &FlowConfig,
) -> Trial {
    let raw = StatePair {
        u1: state.u1.add_scaled(-dt, &field.v1),
        u2: state.u2.add_scaled(-dt, &field.v2),
        mode: state.mode,
    };
    let candidate = if cfg.renorm {
        match project(dom, raw) {
            Some(c) => c,
            None => return Trial::Rejected { admissible: false },
        }
    } else {
        raw
    };
    let jc = match j_value(dom, params, &candidate) {
        Ok(v) => v,
        Err(_) => return Trial::Rejected { admissible: false },
    };
    if !(jc - j <= J_SLACK) {
        return Trial::Rejected { admissible: true };
    }
    match vector_field(dom, params, &candidate, &cfg.cg) {
        Ok(f) => Trial::Accepted { state: candidate, field: f, j: jc },
        Err(Error::CgStalled { .. }) => Trial::Rejected { admissible: true },
        Err(_) => Trial::Rejected { admissible: false },
    }
}

/// One explicit Euler step `u − dt·V(u)` followed by projection onto the
/// manifold. Rejected steps return the input state and a shrunken step.
pub fn flow_step(
    dom: &GridDomain,
    params: &SystemParams,
    state: &StatePair,
    dt: f64,
    cfg: &FlowConfig,
) -> Result<StepOutcome> {
    let field = vector_field(dom, params, state, &cfg.cg)?;
    if field.norm_h == 0.0 {
        return Ok(StepOutcome { state: state.clone(), accepted: true, dt });
    }
    let j = j_value(dom, params, state)?;
    match try_step(dom, params, state, &field, j, dt, cfg) {
        Trial::Accepted { state, .. } => Ok(StepOutcome { state, accepted: true, dt: (dt / cfg.backtrack_factor).min(cfg.dt_max) }),
        Trial::Rejected { admissible } => {
            let next = cfg.backtrack_factor * dt;
            if next < cfg.dt_min {
                return Err(if admissible {
                    Error::FlowStalled { dt: next }
                } else {
                    Error::LeftAdmissibleRegion(format!("no admissible candidate down to dt = {dt:e}"))
                });
            }
            Ok(StepOutcome { state: state.clone(), accepted: false, dt: next })
        }
    }
}

/// Integrates the flow from `seed` until `‖V‖_H ≤ tol_v`, `max_steps`
/// accepted steps, or a stall. Only an inadmissible seed is an error.
pub fn run_flow(dom: &GridDomain, params: &SystemParams, seed: &StatePair, cfg: &FlowConfig) -> Result<FlowResult> {
    cfg.validate()?;
    if params.mode != seed.mode {
        return Err(Error::Mode("seed mode differs from parameter mode"));
    }
    let mut state = seed.clone();
    let mut field = vector_field(dom, params, &state, &cfg.cg)?;
    let mut j = j_value(dom, params, &state)?;
    let empirical_s = dom.empirical_sobolev(params.lambda1.min(params.lambda2), 100, PROBE_SEED);

    let mut res = FlowResult {
        final_state: state.clone(),
        final_field: field.clone(),
        converged: false,
        stop_reason: StopReason::MaxSteps,
        steps: 0,
        trials: 0,
        recorded_steps: Vec::new(),
        j_history: Vec::new(),
        vnorm_history: Vec::new(),
        cone_history: Vec::new(),
        diagnostics: Vec::new(),
        states: Vec::new(),
        audit: FlowAudit::default(),
    };
    let mut dt = cfg.dt0;
    let mut last_recorded = usize::MAX;

    let report = |state: &StatePair, field: &VectorField| {
        check_membership_probes(dom, params, state, empirical_s, &[&field.v1, &field.v2])
    };
    let record = |res: &mut FlowResult, state: &StatePair, field: &VectorField, j: f64, rep: MembershipReport| {
        res.recorded_steps.push(res.steps);
        res.j_history.push(j);
        res.vnorm_history.push(field.norm_h);
        res.cone_history.push(cone_distance(dom, state));
        res.diagnostics.push(rep);
        if cfg.record_states {
            res.states.push(state.clone());
        }
    };

    loop {
        let t = field.k.t;
        fold(&mut res.audit.t_min, t.min(), f64::min);
        fold(&mut res.audit.t_max, t.max(), f64::max);
        let done = field.norm_h <= cfg.tol_v;
        let rep = report(&state, &field);
        let admissible = rep.admissible();
        if (res.steps.is_multiple_of(cfg.record_every) || done) && last_recorded != res.steps {
            record(&mut res, &state, &field, j, rep);
            last_recorded = res.steps;
        }
        if done {
            res.converged = true;
            res.stop_reason = StopReason::Converged;
            break;
        }
        if res.steps >= cfg.max_steps {
            res.stop_reason = StopReason::MaxSteps;
            break;
        }
        res.trials += 1;
        match try_step(dom, params, &state, &field, j, dt, cfg) {
            Trial::Accepted { state: next, field: next_field, j: next_j } => {
                if admissible {
                    let (dj, sharp) = descent_terms(dom, params, &state, &field, &t);
                    let n2 = field.norm_h * field.norm_h;
                    let tol = 1e-8;
                    fold(&mut res.audit.descent_margin, dj - (0.5 * t.min() * n2 - tol), f64::min);
                    fold(&mut res.audit.descent_margin_sharp, dj - (sharp - tol), f64::min);
                    res.audit.descent_checked += 1;
                } else {
                    res.audit.descent_skipped += 1;
                }
                let inc = next_j - j;
                fold(&mut res.audit.max_j_increase, inc, f64::max);
                if inc > J_SLACK {
                    res.audit.j_violations += 1;
                }
                res.audit.max_constraint_drift = res.audit.max_constraint_drift.max(next.constraint_drift(dom));
                state = next;
                field = next_field;
                j = next_j;
                res.steps += 1;
                dt = (dt / cfg.backtrack_factor).min(cfg.dt_max);
            }
            Trial::Rejected { admissible } => {
                dt *= cfg.backtrack_factor;
                if dt < cfg.dt_min {
                    res.stop_reason = if admissible { StopReason::Stalled } else { StopReason::LeftAdmissibleRegion };
                    break;
                }
            }
        }
    }
    if last_recorded != res.steps {
        let rep = report(&state, &field);
        record(&mut res, &state, &field, j, rep);
    }
    res.final_state = state;
    res.final_field = field;
    Ok(res)
}

/// `J'(u)[V(u)]` and the per-component lower bound `Σ (t_i/2)‖V_i‖²_{λ_i}`.
pub fn descent_terms(dom: &GridDomain, params: &SystemParams, state: &StatePair, field: &VectorField, t: &TPair) -> (f64, f64) {
    let dj = dj_with_t(dom, params, state, t, &field.v1, &field.v2);
    let sharp = 0.5 * t.t1 * dom.norm_h_sq_unchecked(&field.v1, params.lambda1)
        + 0.5 * t.t2 * dom.norm_h_sq_unchecked(&field.v2, params.lambda2);
    (dj, sharp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Positive,
    SignChanging,
    SemiNodal,
    SemiTrivial,
    Unclassified,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Positive => "positive",
            Classification::SignChanging => "sign_changing",
            Classification::SemiNodal => "semi_nodal",
            Classification::SemiTrivial => "semi_trivial",
            Classification::Unclassified => "unclassified",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentSign {
    Positive,
    /// One-signed but negative; its negation is the positive representative.
    Negative,
    ChangesSign,
    Trivial,
}

pub fn component_sign(dom: &GridDomain, v: &Field, delta: f64) -> ComponentSign {
    let total = dom.l4(v);
    if total <= delta {
        return ComponentSign::Trivial;
    }
    let plus = dom.l4(&v.positive_part());
    let minus = dom.l4(&v.negative_part());
    if plus.min(minus) > delta * total {
        ComponentSign::ChangesSign
    } else if minus <= delta * total {
        ComponentSign::Positive
    } else {
        ComponentSign::Negative
    }
}

/// Solution type from the relative nodal masses of each component.
pub fn classify(dom: &GridDomain, v1: &Field, v2: &Field, delta: f64) -> Classification {
    use ComponentSign::*;
    let s = [component_sign(dom, v1, delta), component_sign(dom, v2, delta)];
    let one_signed = |c: ComponentSign| matches!(c, Positive | Negative);
    match s {
        [Trivial, _] | [_, Trivial] => Classification::SemiTrivial,
        [ChangesSign, ChangesSign] => Classification::SignChanging,
        [a, b] if one_signed(a) && one_signed(b) => Classification::Positive,
        [ChangesSign, b] if one_signed(b) => Classification::SemiNodal,
        [a, ChangesSign] if one_signed(a) => Classification::SemiNodal,
        _ => Classification::Unclassified,
    }
}

/// Discrete `L²` residuals of the system, each divided by `max(1, ‖v_i‖₂)`.
pub fn residual(dom: &GridDomain, params: &SystemParams, v1: &Field, v2: &Field) -> (f64, f64) {
    let l1 = dom.apply_laplacian(v1).expect("conforming");
    let l2 = dom.apply_laplacian(v2).expect("conforming");
    let (mut r1, mut r2) = (0.0, 0.0);
    for p in 0..dom.len() {
        let (a, b) = (v1[p], v2[p]);
        let e1 = l1[p] + params.lambda1 * a - params.mu1 * a * a * a - params.beta * a * b * b;
        let e2 = l2[p] + params.lambda2 * b - params.mu2 * b * b * b - params.beta * a * a * b;
        r1 += e1 * e1;
        r2 += e2 * e2;
    }
    let w = dom.quad_weight();
    let n1 = dom.norm_lp(v1, 2).expect("conforming");
    let n2 = dom.norm_lp(v2, 2).expect("conforming");
    ((w * r1).sqrt() / n1.max(1.0), (w * r2).sqrt() / n2.max(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalSolution {
    #[serde(skip)]
    pub v1: Field,
    #[serde(skip)]
    pub v2: Field,
    pub mode: Mode,
    /// `E_β(v₁, v₂)`
    pub energy: f64,
    /// `J_β` at the manifold state the solution was recovered from.
    pub j_value: f64,
    pub residual1: f64,
    pub residual2: f64,
    pub classification: Classification,
    pub t_pair: TPair,
    pub alpha1: f64,
    pub alpha2: f64,
    pub norm_v: f64,
    pub cone_distance: f64,
    pub source_seed: String,
    pub warnings: Vec<String>,
}

impl PhysicalSolution {
    pub fn residual_sum(&self) -> f64 {
        self.residual1 + self.residual2
    }

    /// `‖(v₁, v₂)‖_H`
    pub fn norm_h(&self, dom: &GridDomain, params: &SystemParams) -> f64 {
        (dom.norm_h_sq_unchecked(&self.v1, params.lambda1)
            + dom.norm_h_sq_unchecked(&self.v2, params.lambda2))
        .sqrt()
    }
}

/// Rescales a zero of `V` to `(√t₁u₁, √t₂u₂)`, evaluates residuals and energy
/// and classifies it. One-signed negative components are flipped to their
/// positive representative whenever the flip is a symmetry of the mode.
pub fn recover_solution(
    dom: &GridDomain,
    params: &SystemParams,
    state: &StatePair,
    cfg: &FlowConfig,
    delta: f64,
    source_seed: &str,
) -> Result<PhysicalSolution> {
    let field = vector_field(dom, params, state, &cfg.cg)?;
    recover_with_field(dom, params, state, &field, cfg.tol_v, delta, source_seed)
}

pub(crate) fn recover_with_field(
    dom: &GridDomain,
    params: &SystemParams,
    state: &StatePair,
    field: &VectorField,
    tol_v: f64,
    delta: f64,
    source_seed: &str,
) -> Result<PhysicalSolution> {
    if field.norm_h > tol_v {
        return Err(Error::NotConverged { norm_v: field.norm_h, tol: tol_v });
    }
    let t = field.k.t;
    let mut v1 = state.u1.scaled(t.t1.sqrt());
    let mut v2 = state.u2.scaled(t.t2.sqrt());
    if component_sign(dom, &v1, delta) == ComponentSign::Negative {
        v1 = v1.neg();
    }
    if params.mode == Mode::SignChanging && component_sign(dom, &v2, delta) == ComponentSign::Negative {
        v2 = v2.neg();
    }
    let (residual1, residual2) = residual(dom, params, &v1, &v2);
    let mut warnings = Vec::new();
    let mut classification = classify(dom, &v1, &v2, delta);
    let (alpha1, alpha2) = (field.k.alpha1, field.k.alpha2);
    let alpha_tol = 100.0 * tol_v;
    if (alpha1 - 1.0).abs() > alpha_tol || (alpha2 - 1.0).abs() > alpha_tol {
        warnings.push(format!(
            "spurious-fixed-point: alpha = ({alpha1}, {alpha2}) not within {alpha_tol:e} of 1"
        ));
        classification = Classification::Unclassified;
    }
    let j = j_value(dom, params, state)?;
    Ok(PhysicalSolution {
        energy: energy_e(dom, params, &v1, &v2),
        j_value: j,
        residual1,
        residual2,
        classification,
        t_pair: t,
        alpha1,
        alpha2,
        norm_v: field.norm_h,
        cone_distance: cone_distance(dom, state),
        source_seed: source_seed.to_string(),
        warnings,
        mode: params.mode,
        v1,
        v2,
    })
}

/// Energy of a recovered pair under the functional matching the mode.
pub fn mode_energy(dom: &GridDomain, params: &SystemParams, sol: &PhysicalSolution) -> f64 {
    energy_for_mode(dom, params, &sol.v1, &sol.v2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::{apply_sigma, energy_j};
    use std::f64::consts::PI;

    fn square(n: usize) -> GridDomain {
        GridDomain::build_rectangle(n, n, 1.0, 1.0).unwrap()
    }

    fn params(beta: f64, mode: Mode) -> SystemParams {
        SystemParams::new(1.0, 1.0, 1.0, 1.0, beta, mode).unwrap()
    }

    fn sine(d: &GridDomain, k: f64, m: f64) -> Field {
        d.symmetrize(&d.sample(|x, y| (k * PI * x).sin() * (m * PI * y).sin()), 1e-9)
    }

    fn bump(d: &GridDomain) -> Field {
        d.sample(|x, y| x * (1.0 - x) * y * (1.0 - y))
    }

    fn odd_pair(d: &GridDomain, mode: Mode) -> StatePair {
        let u2 = match mode {
            Mode::SignChanging => sine(d, 1.0, 2.0),
            Mode::SemiNodal => sine(d, 1.0, 1.0),
        };
        StatePair::normalized(d, sine(d, 2.0, 1.0), u2, mode).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(FlowConfig::default().validate().is_ok());
        let bad = FlowConfig { dt_min: 1.0, dt0: 0.1, tol_v: 0.0, backtrack_factor: 1.0, ..Default::default() };
        match bad.validate() {
            Err(Error::Config(v)) => assert_eq!(v.len(), 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn accepted_step_keeps_constraint_and_decreases_j() {
        let d = square(16);
        for mode in [Mode::SignChanging, Mode::SemiNodal] {
            let p = params(0.05, mode);
            let s = odd_pair(&d, mode);
            let j0 = energy_j(&d, &p, &s).unwrap();
            let out = flow_step(&d, &p, &s, 0.1, &FlowConfig::default()).unwrap();
            assert!(out.accepted);
            assert!((out.dt - 0.2).abs() < 1e-15);
            assert!((d.l4(&out.state.u1) - 1.0).abs() <= 1e-12);
            assert!((second_constraint_norm(&d, &out.state.u2, mode) - 1.0).abs() <= 1e-12);
            assert!(energy_j(&d, &p, &out.state).unwrap() <= j0 + 1e-12);
        }
    }

    #[test]
    fn rejected_step_returns_state_and_shrinks_dt() {
        let d = square(16);
        let p = params(0.05, Mode::SignChanging);
        let s = StatePair::normalized(&d, sine(&d, 2.0, 1.0).add_scaled(0.4, &bump(&d)), sine(&d, 1.0, 2.0), Mode::SignChanging).unwrap();
        let wide = FlowConfig { dt_max: 1e6, ..Default::default() };
        let dt = (0..20)
            .map(|k| 2f64.powi(k))
            .find(|&dt| !flow_step(&d, &p, &s, dt, &wide).unwrap().accepted)
            .expect("some step size is rejected");
        let out = flow_step(&d, &p, &s, dt, &wide).unwrap();
        assert_eq!(out.state, s);
        assert_eq!(out.dt, 0.5 * dt);

        let tight = FlowConfig { dt0: dt, dt_min: dt, dt_max: dt, ..Default::default() };
        assert!(matches!(flow_step(&d, &p, &s, dt, &tight), Err(Error::FlowStalled { .. })));
    }

    #[test]
    fn converged_state_is_a_fixed_point() {
        let d = square(16);
        let p = params(0.05, Mode::SignChanging);
        let cfg = FlowConfig::default();
        let r = run_flow(&d, &p, &odd_pair(&d, Mode::SignChanging), &cfg).unwrap();
        assert!(r.converged && r.stop_reason == StopReason::Converged);
        assert!(*r.vnorm_history.last().unwrap() <= cfg.tol_v);
        for w in r.j_history.windows(2) {
            assert!(w[1] <= w[0] + J_SLACK);
        }
        assert_eq!(r.recorded_steps.len(), r.steps + 1);
        assert!(r.audit.passed());

        let again = run_flow(&d, &p, &r.final_state, &cfg).unwrap();
        assert!(again.converged && again.steps <= 1);
    }

    #[test]
    fn trajectories_commute_with_sign_flips() {
        let d = square(12);
        for (mode, sigmas) in [(Mode::SignChanging, vec![1, 2]), (Mode::SemiNodal, vec![1])] {
            let p = params(0.05, mode);
            let cfg = FlowConfig { record_states: true, max_steps: 30, ..Default::default() };
            let s = odd_pair(&d, mode);
            let base = run_flow(&d, &p, &s, &cfg).unwrap();
            for i in sigmas {
                let flipped = run_flow(&d, &p, &apply_sigma(i, &s).unwrap(), &cfg).unwrap();
                assert_eq!(base.states.len(), flipped.states.len());
                for (a, b) in base.states.iter().zip(&flipped.states) {
                    let ga = apply_sigma(i, a).unwrap();
                    assert!(ga.u1.max_abs_diff(&b.u1) <= 1e-8 && ga.u2.max_abs_diff(&b.u2) <= 1e-8);
                }
            }
        }
    }

    #[test]
    fn residual_of_zero_and_of_a_forced_pair() {
        let d = square(10);
        let p = params(0.3, Mode::SignChanging);
        let z = Field::zeros(d.len());
        assert_eq!(residual(&d, &p, &z, &z), (0.0, 0.0));

        // constant fields: −Δ_h c is c/h² times the number of missing neighbours
        let (a, b) = (0.7, -0.4);
        let (v1, v2) = (d.constant(a), d.constant(b));
        let (r1, r2) = residual(&d, &p, &v1, &v2);
        let ih2 = 1.0 / (d.h() * d.h());
        let mut f1 = 0.0;
        let mut f2 = 0.0;
        for q in 0..d.len() {
            let missing = d.neighbors(q).iter().filter(|&&n| n == crate::grid::NO_NEIGHBOR).count() as f64;
            let e1 = missing * ih2 * a + a - a * a * a - 0.3 * a * b * b;
            let e2 = missing * ih2 * b + b - b * b * b - 0.3 * a * a * b;
            f1 += e1 * e1 * d.quad_weight();
            f2 += e2 * e2 * d.quad_weight();
        }
        let n1 = (a * a * d.len() as f64 * d.quad_weight()).sqrt();
        let n2 = (b * b * d.len() as f64 * d.quad_weight()).sqrt();
        assert!((r1 - f1.sqrt() / n1.max(1.0)).abs() <= 1e-12 * r1);
        assert!((r2 - f2.sqrt() / n2.max(1.0)).abs() <= 1e-12 * r2);
    }

    #[test]
    fn classification_cases() {
        let d = square(16);
        let odd = sine(&d, 2.0, 1.0);
        let odd2 = sine(&d, 1.0, 2.0);
        let pos = bump(&d);
        let z = Field::zeros(d.len());
        assert_eq!(classify(&d, &odd, &odd2, 1e-3), Classification::SignChanging);
        assert_eq!(classify(&d, &odd, &pos, 1e-3), Classification::SemiNodal);
        assert_eq!(classify(&d, &pos.neg(), &odd, 1e-3), Classification::SemiNodal);
        assert_eq!(classify(&d, &pos, &z, 1e-3), Classification::SemiTrivial);
        assert_eq!(classify(&d, &pos, &pos.neg(), 1e-3), Classification::Positive);
        assert_eq!(component_sign(&d, &pos.neg(), 1e-3), ComponentSign::Negative);
        // a sliver of negative mass below delta still counts as one-signed
        let mostly = pos.add_scaled(-1e-5, &odd.map(f64::abs));
        assert_eq!(component_sign(&d, &mostly, 1e-3), ComponentSign::Positive);
    }

    #[test]
    fn recovery_matches_reduced_functional() {
        let d = square(16);
        let cfg = FlowConfig::default();
        for (beta, mode) in [(0.05, Mode::SignChanging), (0.05, Mode::SemiNodal), (0.0, Mode::SignChanging)] {
            let p = params(beta, mode);
            let r = run_flow(&d, &p, &odd_pair(&d, mode), &cfg).unwrap();
            assert!(r.converged);
            let sol = recover_solution(&d, &p, &r.final_state, &cfg, 1e-3, "odd").unwrap();
            assert!(sol.warnings.is_empty());
            assert!(sol.residual1.max(sol.residual2) <= 1e-6, "{sol:?}");
            assert!((sol.energy - sol.j_value).abs() <= 1e-8 * sol.j_value);
            assert!((mode_energy(&d, &p, &sol) - sol.energy).abs() <= 1e-8 * sol.energy);
            match mode {
                Mode::SignChanging => assert_eq!(sol.classification, Classification::SignChanging),
                Mode::SemiNodal => {
                    assert_eq!(sol.classification, Classification::SemiNodal);
                    assert!(sol.v2.iter().all(|&v| v > 0.0));
                }
            }
        }
    }

    #[test]
    fn recovery_requires_convergence() {
        let d = square(12);
        let p = params(0.05, Mode::SignChanging);
        let s = odd_pair(&d, Mode::SignChanging);
        assert!(matches!(
            recover_solution(&d, &p, &s, &FlowConfig::default(), 1e-3, "raw"),
            Err(Error::NotConverged { .. })
        ));
    }
}
