//! Masked uniform 2D lattices with homogeneous Dirichlet boundary.
//!
//! The discrete Laplacian is the 5-point stencil and quadrature is the lumped
//! cell rule (weight `h²` per interior node). With this pairing the discrete
//! Dirichlet form `∫|∇u|²` is exactly `⟨u, −Δ_h u⟩`, so every energy and norm in
//! the crate is evaluated through [`GridDomain::inner_h`] rather than through
//! difference quotients.

use std::ops::{Index, IndexMut};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Marker for a missing (Dirichlet) neighbor in the connectivity table.
pub const NO_NEIGHBOR: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    /// `nx × ny` interior nodes strictly inside `[0, lx] × [0, ly]`.
    Rectangle { nx: usize, ny: usize, lx: f64, ly: f64 },
    /// Staircase disk of the given radius centred at the origin.
    Disk { n: usize, radius: f64 },
}

/// One scalar per interior node.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Field(Vec<f64>);

impl Field {
    pub fn zeros(len: usize) -> Self {
        Field(vec![0.0; len])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Field(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field(self.0.iter().map(|&x| f(x)).collect())
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert_eq!(self.len(), other.len());
        Field(self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn scaled(&self, c: f64) -> Field {
        self.map(|x| c * x)
    }

    /// `self + a * other`
    pub fn add_scaled(&self, a: f64, other: &Field) -> Field {
        self.zip_map(other, |x, y| x + a * y)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_map(other, |x, y| x - y)
    }

    pub fn neg(&self) -> Field {
        self.map(|x| -x)
    }

    /// Nodewise `max(u, 0)`.
    pub fn positive_part(&self) -> Field {
        self.map(|x| x.max(0.0))
    }

    /// Nodewise `max(-u, 0)`.
    pub fn negative_part(&self) -> Field {
        self.map(|x| (-x).max(0.0))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Index<usize> for Field {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Field {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl From<Vec<f64>> for Field {
    fn from(v: Vec<f64>) -> Self {
        Field(v)
    }
}

/// Compensated (Neumaier) summation.
pub(crate) fn ksum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = s + v;
        if s.abs() >= v.abs() {
            c += (s - t) + v;
        } else {
            c += (v - t) + s;
        }
        s = t;
    }
    s + c
}

#[derive(Debug, Clone)]
pub struct GridDomain {
    shape: Shape,
    h: f64,
    inv_h2: f64,
    /// Bounding lattice dimensions (columns, rows).
    lattice: (usize, usize),
    /// Physical coordinates of lattice node (0, 0).
    origin: [f64; 2],
    mask: Vec<bool>,
    interior: Vec<(usize, usize)>,
    /// Left, right, down, up.
    neighbors: Vec<[u32; 4]>,
}

impl GridDomain {
    pub fn build_rectangle(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::InvalidGrid(format!("rectangle needs nx, ny >= 3 (got {nx}x{ny})")));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::InvalidGrid(format!("side lengths must be positive (got {lx}, {ly})")));
        }
        let hx = lx / (nx as f64 + 1.0);
        let hy = ly / (ny as f64 + 1.0);
        if (hx - hy).abs() > 1e-12 * hx.max(hy) {
            return Err(Error::AnisotropicMesh { hx, hy });
        }
        let mask = vec![true; nx * ny];
        Ok(Self::from_mask(Shape::Rectangle { nx, ny, lx, ly }, hx, (nx, ny), [hx, hx], mask))
    }

    pub fn build_disk(n: usize, radius: f64) -> Result<Self> {
        if n < 8 {
            return Err(Error::InvalidGrid(format!("disk needs n >= 8 (got {n})")));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidGrid(format!("radius must be positive (got {radius})")));
        }
        let h = 2.0 * radius / (n as f64 + 1.0);
        let k = (radius / h).ceil() as usize;
        let side = 2 * k + 1;
        let mut mask = vec![false; side * side];
        for j in 0..side {
            for i in 0..side {
                let x = (i as f64 - k as f64) * h;
                let y = (j as f64 - k as f64) * h;
                mask[j * side + i] = (x * x + y * y).sqrt() < radius;
            }
        }
        let origin = [-(k as f64) * h, -(k as f64) * h];
        let dom = Self::from_mask(Shape::Disk { n, radius }, h, (side, side), origin, mask);
        if dom.len() < 5 {
            return Err(Error::DomainTooCoarse { interior: dom.len() });
        }
        Ok(dom)
    }

    pub fn build(shape: Shape) -> Result<Self> {
        match shape {
            Shape::Rectangle { nx, ny, lx, ly } => Self::build_rectangle(nx, ny, lx, ly),
            Shape::Disk { n, radius } => Self::build_disk(n, radius),
        }
    }

    fn from_mask(shape: Shape, h: f64, lattice: (usize, usize), origin: [f64; 2], mask: Vec<bool>) -> Self {
        let (cols, rows) = lattice;
        let mut index = vec![NO_NEIGHBOR; cols * rows];
        let mut interior = Vec::new();
        for j in 0..rows {
            for i in 0..cols {
                if mask[j * cols + i] {
                    index[j * cols + i] = interior.len() as u32;
                    interior.push((i, j));
                }
            }
        }
        let at = |i: isize, j: isize| -> u32 {
            if i < 0 || j < 0 || i as usize >= cols || j as usize >= rows {
                NO_NEIGHBOR
            } else {
                index[j as usize * cols + i as usize]
            }
        };
        let neighbors = interior
            .iter()
            .map(|&(i, j)| {
                let (i, j) = (i as isize, j as isize);
                [at(i - 1, j), at(i + 1, j), at(i, j - 1), at(i, j + 1)]
            })
            .collect();
        GridDomain {
            shape,
            h,
            inv_h2: 1.0 / (h * h),
            lattice,
            origin,
            mask,
            interior,
            neighbors,
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Number of interior nodes.
    pub fn len(&self) -> usize {
        self.interior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interior.is_empty()
    }

    pub fn quad_weight(&self) -> f64 {
        self.h * self.h
    }

    pub fn lattice_dims(&self) -> (usize, usize) {
        self.lattice
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Lattice position `(column, row)` of interior node `p`.
    pub fn lattice_index(&self, p: usize) -> (usize, usize) {
        self.interior[p]
    }

    pub fn neighbors(&self, p: usize) -> [u32; 4] {
        self.neighbors[p]
    }

    /// Physical coordinates of interior node `p`.
    pub fn coords(&self, p: usize) -> [f64; 2] {
        let (i, j) = self.interior[p];
        [self.origin[0] + i as f64 * self.h, self.origin[1] + j as f64 * self.h]
    }

    /// Samples `f(x, y)` at every interior node.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Field {
        Field((0..self.len()).map(|p| {
            let [x, y] = self.coords(p);
            f(x, y)
        }).collect())
    }

    /// Node permutations induced by the lattice reflections that map the
    /// domain onto itself: `x ↦ −x`, `y ↦ −y` about the centre and, when
    /// the lattice is square, the diagonal swap `x ↔ y`.
    pub fn reflections(&self) -> Vec<Vec<usize>> {
        let (cols, rows) = self.lattice;
        let mut index = vec![usize::MAX; cols * rows];
        for (p, &(i, j)) in self.interior.iter().enumerate() {
            index[j * cols + i] = p;
        }
        let mut maps: Vec<Box<dyn Fn(usize, usize) -> (usize, usize)>> = vec![
            Box::new(move |i, j| (cols - 1 - i, j)),
            Box::new(move |i, j| (i, rows - 1 - j)),
        ];
        if cols == rows {
            maps.push(Box::new(|i, j| (j, i)));
        }
        maps.iter()
            .filter_map(|m| {
                self.interior
                    .iter()
                    .map(|&(i, j)| {
                        let (a, b) = m(i, j);
                        let q = index[b * cols + a];
                        (q != usize::MAX).then_some(q)
                    })
                    .collect::<Option<Vec<usize>>>()
            })
            .collect()
    }

    /// Makes every reflection parity that `u` already has up to `rel_tol`
    /// (relative to `max |u|`) hold exactly in floating point.
    pub fn symmetrize(&self, u: &Field, rel_tol: f64) -> Field {
        let mut u = u.clone();
        let scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return u;
        }
        for perm in self.reflections() {
            for parity in [1.0, -1.0] {
                let dev = (0..u.len()).fold(0.0f64, |m, p| m.max((u[p] - parity * u[perm[p]]).abs()));
                if dev <= rel_tol * scale {
                    u = Field((0..u.len()).map(|p| 0.5 * (u[p] + parity * u[perm[p]])).collect());
                    break;
                }
            }
        }
        u
    }

    pub fn constant(&self, c: f64) -> Field {
        Field(vec![c; self.len()])
    }

    pub fn check(&self, u: &Field) -> Result<()> {
        if u.len() != self.len() {
            return Err(Error::NonConforming { expected: self.len(), got: u.len() });
        }
        Ok(())
    }

    /// `out = −Δ_h u` without conformity checks.
    pub(crate) fn laplacian_into(&self, u: &[f64], out: &mut [f64]) {
        let get = |q: u32| if q == NO_NEIGHBOR { 0.0 } else { u[q as usize] };
        for (p, nb) in self.neighbors.iter().enumerate() {
            // pairing the sums keeps the stencil exactly reflection-symmetric in floating point
            let s = (get(nb[0]) + get(nb[1])) + (get(nb[2]) + get(nb[3]));
            out[p] = (4.0 * u[p] - s) * self.inv_h2;
        }
    }

    /// Negative 5-point Laplacian `(4u(p) − Σ u(q)) / h²` with zero Dirichlet data.
    pub fn apply_laplacian(&self, u: &Field) -> Result<Field> {
        self.check(u)?;
        let mut out = Field::zeros(self.len());
        self.laplacian_into(u.values(), out.values_mut());
        Ok(out)
    }

    pub fn integrate(&self, u: &Field) -> Result<f64> {
        self.check(u)?;
        Ok(self.sum(u.values()))
    }

    pub(crate) fn sum(&self, u: &[f64]) -> f64 {
        self.quad_weight() * ksum(u.iter().copied())
    }

    /// `∫ u v`
    pub fn dot(&self, u: &Field, v: &Field) -> f64 {
        debug_assert_eq!(u.len(), v.len());
        self.quad_weight() * ksum(u.iter().zip(v.iter()).map(|(a, b)| a * b))
    }

    /// `∫ f(u, v)` over interior nodes.
    pub fn integrate_with(&self, u: &Field, v: &Field, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.quad_weight() * ksum(u.iter().zip(v.iter()).map(|(&a, &b)| f(a, b)))
    }

    pub fn norm_lp(&self, u: &Field, p: u32) -> Result<f64> {
        self.check(u)?;
        match p {
            2 => Ok(self.integrate_with(u, u, |a, _| a * a).sqrt()),
            4 => Ok(self.l4_pow4(u).sqrt().sqrt()),
            other => Err(Error::UnsupportedExponent(other)),
        }
    }

    /// `|u|₄⁴`
    pub fn l4_pow4(&self, u: &Field) -> f64 {
        self.integrate_with(u, u, |a, _| {
            let a2 = a * a;
            a2 * a2
        })
    }

    /// `|u|₄`
    pub fn l4(&self, u: &Field) -> f64 {
        self.l4_pow4(u).sqrt().sqrt()
    }

    /// Bilinear form `∫ ∇u·∇v + λ u v` realised as `⟨u, (−Δ_h + λ) v⟩`.
    pub fn inner_h(&self, u: &Field, v: &Field, lambda: f64) -> Result<f64> {
        self.check(u)?;
        self.check(v)?;
        if lambda < 0.0 {
            return Err(Error::NegativeLambda(lambda));
        }
        Ok(self.inner_h_unchecked(u, v, lambda))
    }

    pub(crate) fn inner_h_unchecked(&self, u: &Field, v: &Field, lambda: f64) -> f64 {
        let mut lv = vec![0.0; self.len()];
        self.laplacian_into(v.values(), &mut lv);
        self.quad_weight() * ksum(u.iter().zip(&lv).zip(v.iter()).map(|((a, l), b)| a * (l + lambda * b)))
    }

    /// `‖u‖²_λ` as a sum of squared edge differences (boundary links included),
    /// which avoids the cancellation in `⟨u, −Δ_h u⟩`.
    pub(crate) fn norm_h_sq_unchecked(&self, u: &Field, lambda: f64) -> f64 {
        let lh2 = lambda * self.quad_weight();
        ksum(self.neighbors.iter().enumerate().map(|(p, nb)| {
            let a = u[p];
            let mut e = lh2 * a * a;
            for (k, &q) in nb.iter().enumerate() {
                if q == NO_NEIGHBOR {
                    e += a * a;
                } else if k % 2 == 1 {
                    let d = a - u[q as usize];
                    e += d * d;
                }
            }
            e
        }))
    }

    /// Squared norm `‖u‖²_λ`.
    pub fn norm_h_lambda(&self, u: &Field, lambda: f64) -> Result<f64> {
        self.check(u)?;
        if lambda < 0.0 {
            return Err(Error::NegativeLambda(lambda));
        }
        Ok(self.norm_h_sq_unchecked(u, lambda))
    }

    /// Random field: white noise in `[-1, 1]` followed by `passes` rounds of
    /// neighbor averaging (Dirichlet zero outside).
    pub fn smoothed_noise<R: Rng + ?Sized>(&self, rng: &mut R, passes: usize) -> Field {
        let mut u: Vec<f64> = (0..self.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut next = vec![0.0; self.len()];
        for _ in 0..passes {
            for (p, nb) in self.neighbors.iter().enumerate() {
                let s: f64 = nb.iter().map(|&q| if q == NO_NEIGHBOR { 0.0 } else { u[q as usize] }).sum();
                next[p] = 0.5 * u[p] + 0.125 * s;
            }
            std::mem::swap(&mut u, &mut next);
        }
        Field(u)
    }

    /// Empirical surrogate for the Sobolev constant: the minimum of
    /// `‖v‖²_λ / |v|₄²` over `samples` random fields of mixed smoothness.
    pub fn empirical_sobolev(&self, lambda: f64, samples: usize, seed: u64) -> f64 {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..samples)
            .map(|k| {
                let v = self.smoothed_noise(&mut rng, 4 * (k % 8));
                let l4 = self.l4(&v);
                if l4 == 0.0 {
                    f64::INFINITY
                } else {
                    self.norm_h_sq_unchecked(&v, lambda) / (l4 * l4)
                }
            })
            .fold(f64::INFINITY, f64::min)
    }
}
