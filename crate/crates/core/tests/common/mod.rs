//! Independent oracles shared by the integration tests. Nothing here calls
//! the library's operators: neighbourhoods are rebuilt from node coordinates
//! and every sum is an explicit loop.

#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use nodalflow::functional::check_membership;
use nodalflow::{Field, GridDomain, Mode, StatePair, SystemParams};
use rand::Rng;

/// Node adjacency recovered from physical coordinates.
pub fn adjacency(dom: &GridDomain) -> Vec<Vec<usize>> {
    let h = dom.h();
    let pts: Vec<[f64; 2]> = (0..dom.len()).map(|p| dom.coords(p)).collect();
    pts.iter()
        .map(|a| {
            pts.iter()
                .enumerate()
                .filter(|(_, b)| {
                    let (dx, dy) = ((a[0] - b[0]).abs(), (a[1] - b[1]).abs());
                    ((dx - h).abs() < 1e-9 * h && dy < 1e-9 * h) || ((dy - h).abs() < 1e-9 * h && dx < 1e-9 * h)
                })
                .map(|(q, _)| q)
                .collect()
        })
        .collect()
}

/// Dense `−Δ_h + λ − diag(pot)` built from coordinates.
pub fn dense_operator(dom: &GridDomain, lambda: f64, pot: &[f64]) -> DMatrix<f64> {
    let n = dom.len();
    let ih2 = 1.0 / (dom.h() * dom.h());
    let mut m = DMatrix::zeros(n, n);
    for (p, nb) in adjacency(dom).into_iter().enumerate() {
        m[(p, p)] = 4.0 * ih2 + lambda - pot[p];
        for q in nb {
            m[(p, q)] = -ih2;
        }
    }
    m
}

pub fn vec_of(f: &Field) -> DVector<f64> {
    DVector::from_column_slice(f.values())
}

/// `‖u‖²_λ` as `h² uᵀ A u` with the dense operator.
pub fn h_norm_sq(dom: &GridDomain, a: &DMatrix<f64>, u: &Field) -> f64 {
    let v = vec_of(u);
    dom.h() * dom.h() * v.dot(&(a * &v))
}

pub struct OracleMoments {
    pub h1: f64,
    pub h2: f64,
    pub q1: f64,
    pub q2: f64,
    pub c: f64,
}

pub fn moments(dom: &GridDomain, p: &SystemParams, s: &StatePair) -> OracleMoments {
    let w = dom.h() * dom.h();
    let zero = vec![0.0; dom.len()];
    let a1 = dense_operator(dom, p.lambda1, &zero);
    let a2 = dense_operator(dom, p.lambda2, &zero);
    let (mut q1, mut q2, mut c) = (0.0, 0.0, 0.0);
    for i in 0..dom.len() {
        let (x, y) = (s.u1[i], s.u2[i]);
        let y4 = if s.mode == Mode::SemiNodal { y.max(0.0) } else { y };
        q1 += w * x.powi(4);
        q2 += w * y4.powi(4);
        c += w * x * x * y * y;
    }
    OracleMoments { h1: h_norm_sq(dom, &a1, &s.u1), h2: h_norm_sq(dom, &a2, &s.u2), q1, q2, c }
}

/// Sum of `sin(kπξ) sin(mπη)` over `1 ≤ k, m ≤ 3` with random weights, on
/// box-relative coordinates.
pub fn random_smooth(dom: &GridDomain, rng: &mut impl Rng, lx: f64, ly: f64) -> Field {
    let c: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
    dom.sample(|x, y| {
        let mut s = 0.0;
        for k in 0..3 {
            for m in 0..3 {
                s += c[3 * k + m] * ((k + 1) as f64 * PI * x / lx).sin() * ((m + 1) as f64 * PI * y / ly).sin();
            }
        }
        s
    })
}

pub fn random_params(rng: &mut impl Rng, mode: Mode) -> SystemParams {
    SystemParams::new(
        rng.gen_range(0.5..2.0),
        rng.gen_range(0.5..2.0),
        rng.gen_range(0.5..2.0),
        rng.gen_range(0.5..2.0),
        rng.gen_range(0.0..0.1),
        mode,
    )
    .unwrap()
}

/// Random state on the unit square that passes the membership check.
pub fn random_admissible(dom: &GridDomain, rng: &mut impl Rng, mode: Mode) -> (SystemParams, StatePair) {
    loop {
        let p = random_params(rng, mode);
        let u1 = random_smooth(dom, rng, 1.0, 1.0);
        let mut u2 = random_smooth(dom, rng, 1.0, 1.0);
        if mode == Mode::SemiNodal {
            let b = dom.sample(|x, y| (PI * x).sin() * (PI * y).sin());
            u2 = b.add_scaled(0.2, &u2);
        }
        let Ok(s) = StatePair::normalized(dom, u1, u2, mode) else { continue };
        if check_membership(dom, &p, &s).admissible() {
            return (p, s);
        }
    }
}

/// `−Δ_h v₁ + λ₁v₁ − μ₁v₁³ − βv₁v₂²` and its partner, stencil rebuilt from
/// coordinates.
pub fn forcing(dom: &GridDomain, p: &SystemParams, v1: &Field, v2: &Field) -> (Vec<f64>, Vec<f64>) {
    let ih2 = 1.0 / (dom.h() * dom.h());
    let adj = adjacency(dom);
    let mut f1 = vec![0.0; dom.len()];
    let mut f2 = vec![0.0; dom.len()];
    for i in 0..dom.len() {
        let (a, b) = (v1[i], v2[i]);
        let l1: f64 = 4.0 * a - adj[i].iter().map(|&q| v1[q]).sum::<f64>();
        let l2: f64 = 4.0 * b - adj[i].iter().map(|&q| v2[q]).sum::<f64>();
        f1[i] = ih2 * l1 + p.lambda1 * a - p.mu1 * a * a * a - p.beta * a * b * b;
        f2[i] = ih2 * l2 + p.lambda2 * b - p.mu2 * b * b * b - p.beta * a * a * b;
    }
    (f1, f2)
}

pub fn l2(dom: &GridDomain, f: &[f64]) -> f64 {
    (dom.h() * dom.h() * f.iter().map(|x| x * x).sum::<f64>()).sqrt()
}

/// Scalar solution of `−Δv + λv = μv³` on a rectangle lattice whose nodes
/// are `nx × ny`, restricted to fields odd under `x ↦ 1 − x` (when `odd_x`)
/// and `y ↦ 1 − y` (when `odd_y`), by the normalised iteration
/// `u ← (−Δ_h + λ)⁻¹u³ / |·|₄` with a hand-written CG. Returns the energy
/// `¼‖v‖²_λ` of the rescaled solution.
pub fn scalar_energy(nx: usize, ny: usize, lambda: f64, mu: f64, k: f64, m: f64, odd_x: bool, odd_y: bool) -> f64 {
    let h = 1.0 / (nx as f64 + 1.0);
    let idx = |i: usize, j: usize| j * nx + i;
    let n = nx * ny;
    let apply = |u: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for j in 0..ny {
            for i in 0..nx {
                let mut s = 4.0 * u[idx(i, j)];
                if i > 0 {
                    s -= u[idx(i - 1, j)];
                }
                if i + 1 < nx {
                    s -= u[idx(i + 1, j)];
                }
                if j > 0 {
                    s -= u[idx(i, j - 1)];
                }
                if j + 1 < ny {
                    s -= u[idx(i, j + 1)];
                }
                out[idx(i, j)] = s / (h * h) + lambda * u[idx(i, j)];
            }
        }
        out
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let solve = |b: &[f64]| -> Vec<f64> {
        let mut x = vec![0.0; n];
        let mut r = b.to_vec();
        let mut d = r.clone();
        let bn = dot(b, b).sqrt();
        let mut rr = dot(&r, &r);
        for _ in 0..10 * n {
            if rr.sqrt() <= 1e-13 * bn {
                break;
            }
            let ad = apply(&d);
            let a = rr / dot(&d, &ad);
            for i in 0..n {
                x[i] += a * d[i];
                r[i] -= a * ad[i];
            }
            let rr2 = dot(&r, &r);
            for i in 0..n {
                d[i] = r[i] + rr2 / rr * d[i];
            }
            rr = rr2;
        }
        x
    };
    let symmetrize = |u: &mut Vec<f64>| {
        let mut v = u.clone();
        for j in 0..ny {
            for i in 0..nx {
                let sx = if odd_x { -1.0 } else { 1.0 };
                let sy = if odd_y { -1.0 } else { 1.0 };
                v[idx(i, j)] = 0.25
                    * (u[idx(i, j)] + sx * u[idx(nx - 1 - i, j)] + sy * u[idx(i, ny - 1 - j)] + sx * sy * u[idx(nx - 1 - i, ny - 1 - j)]);
            }
        }
        *u = v;
    };
    let l4 = |u: &[f64]| (h * h * u.iter().map(|x| x.powi(4)).sum::<f64>()).powf(0.25);
    let mut u: Vec<f64> = (0..n)
        .map(|p| {
            let (i, j) = (p % nx, p / nx);
            let (x, y) = ((i + 1) as f64 * h, (j + 1) as f64 * h);
            (k * PI * x).sin() * (m * PI * y).sin()
        })
        .collect();
    symmetrize(&mut u);
    let nu = l4(&u);
    u.iter_mut().for_each(|x| *x /= nu);
    for _ in 0..500 {
        let cube: Vec<f64> = u.iter().map(|x| x * x * x).collect();
        let mut w = solve(&cube);
        symmetrize(&mut w);
        let nw = l4(&w);
        w.iter_mut().for_each(|x| *x /= nw);
        let diff = w.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        u = w;
        if diff < 1e-12 {
            break;
        }
    }
    // at a normalised critical point t = ‖u‖²/μ and E = ¼ t ‖u‖²
    let hn = h * h * dot(&u, &apply(&u));
    0.25 * hn * hn / mu
}
