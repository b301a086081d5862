//! Shifted Schrödinger operators `−Δ_h + λ − c(x)`, a conjugate-gradient
//! solver for them, and the normalised solution operator `K` with its vector
//! field `V(u) = u − K(u)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{t_coefficients, Mode, StatePair, SystemParams, TPair};
use crate::grid::{Field, GridDomain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CgOptions {
    /// Relative residual target `‖Ax − b‖₂ ≤ tol·‖b‖₂`.
    pub tol: f64,
    /// Defaults to ten times the node count.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub maxiter: Option<usize>,
    /// Diagonal (Jacobi) preconditioning.
    pub jacobi: bool,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions { tol: 1e-10, maxiter: None, jacobi: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgSolution {
    pub x: Field,
    pub iterations: usize,
    /// Final relative residual, recomputed from the operator.
    pub residual: f64,
}

fn shifted_into(dom: &GridDomain, lambda: f64, potential: &[f64], v: &[f64], out: &mut [f64]) {
    dom.laplacian_into(v, out);
    for ((o, &c), &x) in out.iter_mut().zip(potential).zip(v) {
        *o += (lambda - c) * x;
    }
}

/// `(−Δ_h + λ − c) v` where `c` is the precomposed potential `β t_j u_j²`.
pub fn apply_shifted(dom: &GridDomain, lambda: f64, potential: &Field, v: &Field) -> Result<Field> {
    dom.check(potential)?;
    dom.check(v)?;
    let mut out = Field::zeros(dom.len());
    shifted_into(dom, lambda, potential.values(), v.values(), out.values_mut());
    Ok(out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cg_solve(
    dom: &GridDomain,
    lambda: f64,
    potential: &Field,
    rhs: &Field,
    opts: &CgOptions,
) -> Result<CgSolution> {
    dom.check(potential)?;
    dom.check(rhs)?;
    let n = dom.len();
    let maxiter = opts.maxiter.unwrap_or(10 * n);
    let b = rhs.values();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(CgSolution { x: Field::zeros(n), iterations: 0, residual: 0.0 });
    }
    let c = potential.values();
    let inv_diag: Option<Vec<f64>> = opts.jacobi.then(|| {
        let d0 = 4.0 / (dom.h() * dom.h()) + lambda;
        c.iter().map(|ci| 1.0 / (d0 - ci)).collect()
    });
    let precond = |r: &[f64], z: &mut [f64]| match &inv_diag {
        Some(d) => z.iter_mut().zip(r).zip(d).for_each(|((zi, ri), di)| *zi = ri * di),
        None => z.copy_from_slice(r),
    };

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let target = opts.tol * bnorm;
    let mut iterations = 0;
    let mut rnorm = bnorm;
    while rnorm > target {
        if iterations >= maxiter {
            return Err(Error::CgStalled { iterations, residual: rnorm / bnorm });
        }
        shifted_into(dom, lambda, c, &p, &mut ap);
        let curv = dot(&p, &ap);
        if !(curv > 0.0) {
            return Err(Error::OperatorIndefinite { iteration: iterations, curvature: curv });
        }
        let alpha = rz / curv;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rnorm = dot(&r, &r).sqrt();
        iterations += 1;
    }
    shifted_into(dom, lambda, c, &x, &mut ap);
    let true_res = ap.iter().zip(b).map(|(a, bi)| (a - bi) * (a - bi)).sum::<f64>().sqrt() / bnorm;
    Ok(CgSolution { x: Field::from_vec(x), iterations, residual: true_res })
}

/// Output of the solution operator `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct KResult {
    pub w1: Field,
    pub w2: Field,
    pub alpha1: f64,
    pub alpha2: f64,
    pub cg_iters: [usize; 2],
    pub solve_residuals: [f64; 2],
    /// Coefficients the linear problems were built from.
    pub t: TPair,
}

fn cube(u: &Field) -> Field {
    u.map(|x| x * x * x)
}

/// The right-hand side cube for component 2: `u₂³` or `(u₂⁺)³`.
pub(crate) fn second_cube(u2: &Field, mode: Mode) -> Field {
    match mode {
        Mode::SignChanging => cube(u2),
        Mode::SemiNodal => u2.map(|x| {
            let p = x.max(0.0);
            p * p * p
        }),
    }
}

/// Solves `(−Δ + λ_i − βt_j u_j²) w̃_i = μ_i t_i u_i³` for both components and
/// normalises `w_i = w̃_i / ∫u_i³w̃_i`.
pub fn compute_k(dom: &GridDomain, params: &SystemParams, state: &StatePair, opts: &CgOptions) -> Result<KResult> {
    let t = t_coefficients(dom, params, state)?;
    let (u1, u2) = (&state.u1, &state.u2);
    let b = params.beta;
    let cube1 = cube(u1);
    let cube2 = second_cube(u2, state.mode);
    let pot1 = u2.map(|y| b * t.t2 * y * y);
    let pot2 = u1.map(|x| b * t.t1 * x * x);
    let rhs1 = cube1.scaled(params.mu1 * t.t1);
    let rhs2 = cube2.scaled(params.mu2 * t.t2);
    let (s1, s2) = rayon::join(
        || cg_solve(dom, params.lambda1, &pot1, &rhs1, opts),
        || cg_solve(dom, params.lambda2, &pot2, &rhs2, opts),
    );
    let (s1, s2) = (s1?, s2?);
    let n1 = dom.dot(&cube1, &s1.x);
    let n2 = dom.dot(&cube2, &s2.x);
    if !(n1 > 0.0) {
        return Err(Error::NormalizationNonpositive { component: 1, value: n1 });
    }
    if !(n2 > 0.0) {
        return Err(Error::NormalizationNonpositive { component: 2, value: n2 });
    }
    let (alpha1, alpha2) = (1.0 / n1, 1.0 / n2);
    Ok(KResult {
        w1: s1.x.scaled(alpha1),
        w2: s2.x.scaled(alpha2),
        alpha1,
        alpha2,
        cg_iters: [s1.iterations, s2.iterations],
        solve_residuals: [s1.residual, s2.residual],
        t,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub v1: Field,
    pub v2: Field,
    /// `‖V‖_H = (‖V₁‖²_{λ₁} + ‖V₂‖²_{λ₂})^{1/2}`
    pub norm_h: f64,
    pub k: KResult,
}

/// `V(u) = u − K(u)`.
pub fn vector_field(dom: &GridDomain, params: &SystemParams, state: &StatePair, opts: &CgOptions) -> Result<VectorField> {
    let k = compute_k(dom, params, state, opts)?;
    let v1 = state.u1.sub(&k.w1);
    let v2 = state.u2.sub(&k.w2);
    let n1 = dom.norm_h_sq_unchecked(&v1, params.lambda1);
    let n2 = dom.norm_h_sq_unchecked(&v2, params.lambda2);
    Ok(VectorField { v1, v2, norm_h: (n1 + n2).max(0.0).sqrt(), k })
}
