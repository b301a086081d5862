//! Symmetry-structured initial states, multi-seed campaigns, deduplication
//! modulo the sign symmetries and least-energy selection.

use std::cmp::Ordering;
use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{recover_with_field, run_flow, Classification, FlowAudit, FlowConfig, PhysicalSolution, StopReason};
use crate::functional::{Mode, StatePair, SystemParams};
use crate::grid::{Field, GridDomain, Shape};

/// Relative tolerance under which a sampled profile's reflection parities
/// are snapped to exact.
const PARITY_TOL: f64 = 1e-9;

/// Smoothing passes applied to random seeds.
const RANDOM_PASSES: usize = 12;

/// Analytic profile for one component. Coordinates are taken relative to the
/// bounding box of the domain (`[0, lx] × [0, ly]` for a rectangle,
/// `[−r, r]²` for a disk).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SeedKind {
    /// `sin(kπξ) sin(mπη)` with `ξ, η ∈ (0, 1)` the box-relative coordinates.
    SineMode { k: u32, m: u32 },
    /// `(1 − ρ²)₊²`, `ρ` the box-relative distance to the centre.
    RadialBump,
    /// `ρˡ (1 − ρ²)₊ cos(lθ)` about the centre.
    AngularMode { l: u32 },
    /// `ξ^px (1 − ξ²) · η^py (1 − η²)` with `ξ, η ∈ (−1, 1)` centred
    /// coordinates; `px`, `py` set the parity in each direction.
    TensorProduct { px: u32, py: u32 },
    /// Smoothed uniform noise from a ChaCha8 stream seeded by `rng_seed`.
    Random { rng_seed: u64 },
}

impl SeedKind {
    /// Whether the profile is nonnegative everywhere by construction.
    pub fn is_nonnegative(&self) -> bool {
        match *self {
            SeedKind::SineMode { k, m } => k == 1 && m == 1,
            SeedKind::RadialBump => true,
            SeedKind::AngularMode { l } => l == 0,
            SeedKind::TensorProduct { px, py } => px % 2 == 0 && py % 2 == 0,
            SeedKind::Random { .. } => false,
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        match *self {
            SeedKind::SineMode { k, m } if k == 0 || m == 0 => Err(format!("sine_mode needs k, m >= 1 (got {k}, {m})")),
            _ => Ok(()),
        }
    }

    pub fn sample(&self, dom: &GridDomain) -> Field {
        let (x0, y0, wx, wy) = match dom.shape() {
            Shape::Rectangle { lx, ly, .. } => (0.0, 0.0, lx, ly),
            Shape::Disk { radius, .. } => (-radius, -radius, 2.0 * radius, 2.0 * radius),
        };
        // box-relative (0, 1) and centred (−1, 1) coordinates
        let rel = move |x: f64, y: f64| ((x - x0) / wx, (y - y0) / wy);
        let cen = move |x: f64, y: f64| {
            let (a, b) = rel(x, y);
            (2.0 * a - 1.0, 2.0 * b - 1.0)
        };
        let raw = match *self {
            SeedKind::SineMode { k, m } => dom.sample(|x, y| {
                let (a, b) = rel(x, y);
                (k as f64 * PI * a).sin() * (m as f64 * PI * b).sin()
            }),
            SeedKind::RadialBump => dom.sample(|x, y| {
                let (a, b) = cen(x, y);
                let s = (1.0 - a * a - b * b).max(0.0);
                s * s
            }),
            SeedKind::AngularMode { l } => dom.sample(|x, y| {
                let (a, b) = cen(x, y);
                let r2 = a * a + b * b;
                r2.sqrt().powi(l as i32) * (1.0 - r2).max(0.0) * (l as f64 * b.atan2(a)).cos()
            }),
            SeedKind::TensorProduct { px, py } => dom.sample(|x, y| {
                let (a, b) = cen(x, y);
                a.powi(px as i32) * (1.0 - a * a) * b.powi(py as i32) * (1.0 - b * b)
            }),
            SeedKind::Random { rng_seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
                return dom.smoothed_noise(&mut rng, RANDOM_PASSES);
            }
        };
        dom.symmetrize(&raw, PARITY_TOL)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSpec {
    pub id: String,
    pub u1: SeedKind,
    pub u2: SeedKind,
}

impl SeedSpec {
    pub fn new(id: impl Into<String>, u1: SeedKind, u2: SeedKind) -> Self {
        SeedSpec { id: id.into(), u1, u2 }
    }

    pub fn validate(&self, mode: Mode) -> std::result::Result<(), Vec<String>> {
        let mut bad = Vec::new();
        if self.id.is_empty() {
            bad.push("seed id must be nonempty".to_string());
        }
        for (name, k) in [("u1", &self.u1), ("u2", &self.u2)] {
            if let Err(e) = k.validate() {
                bad.push(format!("seed {}: {name}: {e}", self.id));
            }
        }
        if mode == Mode::SemiNodal && !self.u2.is_nonnegative() {
            bad.push(format!("seed {}: semi_nodal mode requires a nonnegative u2 profile", self.id));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(bad)
        }
    }
}

/// Profiles are O(1); a sampled maximum below this is rounding noise.
const ZERO_PROFILE: f64 = 1e-10;

/// Samples both profiles and projects onto the constraint manifold.
pub fn make_seed(dom: &GridDomain, spec: &SeedSpec, mode: Mode) -> Result<StatePair> {
    spec.validate(mode).map_err(|v| Error::DegenerateSeed(v.join("; ")))?;
    let (u1, u2) = (spec.u1.sample(dom), spec.u2.sample(dom));
    for (name, u) in [("u1", &u1), ("u2", &u2)] {
        if u.iter().all(|v| v.abs() <= ZERO_PROFILE) {
            return Err(Error::DegenerateSeed(format!("seed {}: {name} profile vanishes on the grid", spec.id)));
        }
    }
    StatePair::normalized(dom, u1, u2, mode).map_err(|e| Error::DegenerateSeed(format!("seed {}: {e}", spec.id)))
}

/// Named seed collections.
pub fn library(name: &str, mode: Mode) -> Result<Vec<SeedSpec>> {
    use SeedKind::*;
    let sine = |k, m| SineMode { k, m };
    let specs = match (name, mode) {
        ("lattice", Mode::SignChanging) => vec![
            SeedSpec::new("s21x12", sine(2, 1), sine(1, 2)),
            SeedSpec::new("s22x22", sine(2, 2), sine(2, 2)),
            SeedSpec::new("s31x13", sine(3, 1), sine(1, 3)),
        ],
        ("lattice", Mode::SemiNodal) => vec![
            SeedSpec::new("s21xb", sine(2, 1), sine(1, 1)),
            SeedSpec::new("s22xb", sine(2, 2), sine(1, 1)),
            SeedSpec::new("s31xb", sine(3, 1), RadialBump),
        ],
        ("positive", _) => vec![
            SeedSpec::new("b11", sine(1, 1), sine(1, 1)),
            SeedSpec::new("bump", RadialBump, RadialBump),
        ],
        ("disk", Mode::SignChanging) => vec![
            SeedSpec::new("a1xa1", AngularMode { l: 1 }, AngularMode { l: 1 }),
            SeedSpec::new("a2xa2", AngularMode { l: 2 }, AngularMode { l: 2 }),
            SeedSpec::new("t10x01", TensorProduct { px: 1, py: 0 }, TensorProduct { px: 0, py: 1 }),
        ],
        ("disk", Mode::SemiNodal) => vec![
            SeedSpec::new("a1xb", AngularMode { l: 1 }, RadialBump),
            SeedSpec::new("a2xb", AngularMode { l: 2 }, RadialBump),
        ],
        _ => return Err(Error::Config(vec![format!("unknown seed library {name:?} for mode {}", mode.as_str())])),
    };
    Ok(specs)
}

pub const LIBRARIES: [&str; 3] = ["lattice", "positive", "disk"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignConfig {
    pub flow: FlowConfig,
    /// Relative nodal-mass threshold for classification.
    pub delta: f64,
    pub dedup_tol: f64,
    /// Largest accepted PDE residual for a retained solution.
    pub residual_tol: f64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig { flow: FlowConfig::default(), delta: 1e-3, dedup_tol: 1e-3, residual_tol: 1e-6 }
    }
}

/// Outcome of one seed's run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed_id: String,
    pub converged: bool,
    pub stop_reason: Option<StopReason>,
    pub steps: usize,
    pub final_norm_v: Option<f64>,
    pub energy: Option<f64>,
    pub classification: Option<Classification>,
    pub residual1: Option<f64>,
    pub residual2: Option<f64>,
    pub t1: Option<f64>,
    pub t2: Option<f64>,
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    pub cone_distance: Option<f64>,
    /// Recorded states whose membership check failed.
    pub admissibility_failures: usize,
    /// Whether the solution entered the deduplicated set.
    pub retained: bool,
    pub audit: Option<FlowAudit>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SolutionSet {
    /// Sorted by energy, ascending.
    pub solutions: Vec<PhysicalSolution>,
    pub dedup_tol: f64,
    pub params: SystemParams,
}

impl SolutionSet {
    pub fn count(&self, class: Classification) -> usize {
        self.solutions.iter().filter(|s| s.classification == class).count()
    }

    pub fn of_class(&self, class: Classification) -> impl Iterator<Item = &PhysicalSolution> {
        self.solutions.iter().filter(move |s| s.classification == class)
    }
}

#[derive(Debug, Clone)]
pub struct CampaignReport {
    /// One record per seed, ordered by seed id.
    pub records: Vec<SeedRecord>,
    pub set: SolutionSet,
}

fn blank_record(id: &str) -> SeedRecord {
    SeedRecord {
        seed_id: id.to_string(),
        converged: false,
        stop_reason: None,
        steps: 0,
        final_norm_v: None,
        energy: None,
        classification: None,
        residual1: None,
        residual2: None,
        t1: None,
        t2: None,
        alpha1: None,
        alpha2: None,
        cone_distance: None,
        admissibility_failures: 0,
        retained: false,
        audit: None,
        warnings: Vec::new(),
        error: None,
    }
}

fn failed_record(id: &str, err: &Error) -> SeedRecord {
    SeedRecord { error: Some(err.to_string()), ..blank_record(id) }
}

fn run_seed(
    dom: &GridDomain,
    params: &SystemParams,
    spec: &SeedSpec,
    cfg: &CampaignConfig,
) -> (SeedRecord, Option<PhysicalSolution>) {
    let seed = match make_seed(dom, spec, params.mode) {
        Ok(s) => s,
        Err(e) => return (failed_record(&spec.id, &e), None),
    };
    let res = match run_flow(dom, params, &seed, &cfg.flow) {
        Ok(r) => r,
        Err(e) => return (failed_record(&spec.id, &e), None),
    };
    let mut rec = SeedRecord {
        seed_id: spec.id.clone(),
        converged: res.converged,
        stop_reason: Some(res.stop_reason),
        steps: res.steps,
        final_norm_v: Some(res.final_field.norm_h),
        cone_distance: res.cone_history.last().copied(),
        admissibility_failures: res.diagnostics.iter().filter(|d| !d.admissible()).count(),
        audit: Some(res.audit),
        ..blank_record(&spec.id)
    };
    if !res.converged {
        return (rec, None);
    }
    match recover_with_field(dom, params, &res.final_state, &res.final_field, cfg.flow.tol_v, cfg.delta, &spec.id) {
        Ok(sol) => {
            rec.energy = Some(sol.energy);
            rec.classification = Some(sol.classification);
            rec.residual1 = Some(sol.residual1);
            rec.residual2 = Some(sol.residual2);
            rec.t1 = Some(sol.t_pair.t1);
            rec.t2 = Some(sol.t_pair.t2);
            rec.alpha1 = Some(sol.alpha1);
            rec.alpha2 = Some(sol.alpha2);
            rec.warnings = sol.warnings.clone();
            if sol.residual1.max(sol.residual2) > cfg.residual_tol {
                rec.warnings.push(format!(
                    "residual ({:e}, {:e}) above threshold {:e}",
                    sol.residual1, sol.residual2, cfg.residual_tol
                ));
                return (rec, None);
            }
            (rec, Some(sol))
        }
        Err(e) => {
            rec.error = Some(e.to_string());
            (rec, None)
        }
    }
}

/// Runs every seed (in parallel), recovers converged states, deduplicates
/// and sorts by energy. Per-seed failures are recorded, never fatal.
pub fn run_campaign(dom: &GridDomain, params: &SystemParams, specs: &[SeedSpec], cfg: &CampaignConfig) -> Result<CampaignReport> {
    if specs.is_empty() {
        return Err(Error::Config(vec!["seed list is empty".into()]));
    }
    params.validate()?;
    cfg.flow.validate()?;
    let mut order: Vec<&SeedSpec> = specs.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    let outcomes: Vec<(SeedRecord, Option<PhysicalSolution>)> =
        order.par_iter().map(|spec| run_seed(dom, params, spec, cfg)).collect();

    let mut records = Vec::with_capacity(outcomes.len());
    let mut found = Vec::new();
    for (rec, sol) in outcomes {
        records.push(rec);
        found.extend(sol);
    }
    let solutions = deduplicate(dom, params, found, cfg.dedup_tol)?;
    for rec in records.iter_mut() {
        rec.retained = solutions.iter().any(|s| s.source_seed == rec.seed_id);
    }
    Ok(CampaignReport { records, set: SolutionSet { solutions, dedup_tol: cfg.dedup_tol, params: *params } })
}

fn energy_order(a: &PhysicalSolution, b: &PhysicalSolution) -> Ordering {
    a.energy
        .total_cmp(&b.energy)
        .then(a.residual_sum().total_cmp(&b.residual_sum()))
        .then_with(|| a.source_seed.cmp(&b.source_seed))
}

/// `min_g ‖a − g(b)‖_H` over the mode's symmetry group.
pub fn orbit_distance(dom: &GridDomain, params: &SystemParams, a: &PhysicalSolution, b: &PhysicalSolution) -> f64 {
    let signs: &[(f64, f64)] = match params.mode {
        Mode::SignChanging => &[(1.0, 1.0), (-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)],
        Mode::SemiNodal => &[(1.0, 1.0), (-1.0, 1.0)],
    };
    signs
        .iter()
        .map(|&(s1, s2)| {
            let d1 = a.v1.add_scaled(-s1, &b.v1);
            let d2 = a.v2.add_scaled(-s2, &b.v2);
            (dom.norm_h_sq_unchecked(&d1, params.lambda1) + dom.norm_h_sq_unchecked(&d2, params.lambda2)).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Greedy pass in energy order keeping a solution iff its symmetry orbit is
/// farther than `tol·(1 + ‖a‖_H)` from every retained one.
pub fn deduplicate(
    dom: &GridDomain,
    params: &SystemParams,
    mut list: Vec<PhysicalSolution>,
    tol: f64,
) -> Result<Vec<PhysicalSolution>> {
    if !(tol > 0.0) {
        return Err(Error::Config(vec![format!("dedup_tol must be > 0 (got {tol})")]));
    }
    list.sort_by(energy_order);
    let mut kept: Vec<PhysicalSolution> = Vec::new();
    for cand in list {
        let far = kept.iter().all(|k| orbit_distance(dom, params, &cand, k) > tol * (1.0 + cand.norm_h(dom, params)));
        if far {
            kept.push(cand);
        }
    }
    Ok(kept)
}

/// Minimum-energy member of `class`; ties go to the smaller residual sum,
/// then the smaller seed id.
pub fn least_energy_select(set: &SolutionSet, class: Classification) -> Result<&PhysicalSolution> {
    set.of_class(class)
        .min_by(|a, b| energy_order(a, b))
        .ok_or_else(|| Error::ClassNotFound(class.as_str().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::recover_solution;

    fn square(n: usize) -> GridDomain {
        GridDomain::build_rectangle(n, n, 1.0, 1.0).unwrap()
    }

    fn params(mode: Mode) -> SystemParams {
        SystemParams::new(1.0, 1.0, 1.0, 1.0, 0.05, mode).unwrap()
    }

    #[test]
    fn seed_profiles() {
        let d = square(20);
        let s = make_seed(&d, &SeedSpec::new("a", SeedKind::SineMode { k: 1, m: 1 }, SeedKind::SineMode { k: 2, m: 1 }), Mode::SignChanging).unwrap();
        assert!(s.u1.iter().all(|&v| v > 0.0));
        let plus = d.l4(&s.u2.positive_part());
        let minus = d.l4(&s.u2.negative_part());
        assert!(plus > 0.5 && (plus - minus).abs() <= 1e-14);
        assert!((d.l4(&s.u1) - 1.0).abs() <= 1e-14 && (d.l4(&s.u2) - 1.0).abs() <= 1e-14);

        let semi = make_seed(&d, &SeedSpec::new("b", SeedKind::SineMode { k: 2, m: 1 }, SeedKind::RadialBump), Mode::SemiNodal).unwrap();
        assert!(semi.u2.iter().all(|&v| v >= 0.0));
        assert!((d.l4(&semi.u2.positive_part()) - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn every_kind_samples_on_both_shapes() {
        let kinds = [
            SeedKind::SineMode { k: 2, m: 3 },
            SeedKind::RadialBump,
            SeedKind::AngularMode { l: 2 },
            SeedKind::TensorProduct { px: 1, py: 2 },
            SeedKind::Random { rng_seed: 9 },
        ];
        for d in [square(12), GridDomain::build_disk(16, 1.0).unwrap()] {
            for k in kinds {
                let f = k.sample(&d);
                assert!(f.is_finite() && !f.is_zero(), "{k:?}");
                if k.is_nonnegative() {
                    assert!(f.iter().all(|&v| v >= 0.0));
                }
            }
        }
        let d = square(12);
        assert_eq!(SeedKind::Random { rng_seed: 3 }.sample(&d), SeedKind::Random { rng_seed: 3 }.sample(&d));
    }

    #[test]
    fn seed_errors() {
        let d = square(8);
        let vanishing = SeedSpec::new("z", SeedKind::SineMode { k: 9, m: 1 }, SeedKind::RadialBump);
        assert!(matches!(make_seed(&d, &vanishing, Mode::SignChanging), Err(Error::DegenerateSeed(_))));
        let signed_u2 = SeedSpec::new("s", SeedKind::RadialBump, SeedKind::SineMode { k: 2, m: 1 });
        assert!(matches!(make_seed(&d, &signed_u2, Mode::SemiNodal), Err(Error::DegenerateSeed(_))));
        assert!(signed_u2.validate(Mode::SignChanging).is_ok());
        assert!(SeedSpec::new("k", SeedKind::SineMode { k: 0, m: 1 }, SeedKind::RadialBump).validate(Mode::SignChanging).is_err());
        assert!(library("nope", Mode::SignChanging).is_err());
        for name in LIBRARIES {
            for mode in [Mode::SignChanging, Mode::SemiNodal] {
                if let Ok(specs) = library(name, mode) {
                    assert!(specs.iter().all(|s| s.validate(mode).is_ok()));
                }
            }
        }
    }

    fn solved(d: &GridDomain, p: &SystemParams, spec: &SeedSpec) -> PhysicalSolution {
        let cfg = FlowConfig::default();
        let r = run_flow(d, p, &make_seed(d, spec, p.mode).unwrap(), &cfg).unwrap();
        recover_solution(d, p, &r.final_state, &cfg, 1e-3, &spec.id).unwrap()
    }

    fn flipped(s: &PhysicalSolution, a: f64, b: f64, id: &str) -> PhysicalSolution {
        PhysicalSolution { v1: s.v1.scaled(a), v2: s.v2.scaled(b), source_seed: id.into(), ..s.clone() }
    }

    #[test]
    fn dedup_identifies_symmetry_orbits() {
        let d = square(14);
        let p = params(Mode::SignChanging);
        let a = solved(&d, &p, &SeedSpec::new("a", SeedKind::SineMode { k: 2, m: 1 }, SeedKind::SineMode { k: 1, m: 2 }));
        for (s1, s2) in [(-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)] {
            let out = deduplicate(&d, &p, vec![a.clone(), flipped(&a, s1, s2, "b")], 1e-3).unwrap();
            assert_eq!(out.len(), 1);
            assert_eq!(out[0].source_seed, "a");
        }
        let other = solved(&d, &p, &SeedSpec::new("c", SeedKind::SineMode { k: 2, m: 2 }, SeedKind::SineMode { k: 2, m: 2 }));
        assert_eq!(deduplicate(&d, &p, vec![other.clone(), a.clone()], 1e-3).unwrap().len(), 2);
        assert!(deduplicate(&d, &p, vec![a], 0.0).is_err());

        let ps = params(Mode::SemiNodal);
        let s = solved(&d, &ps, &SeedSpec::new("s", SeedKind::SineMode { k: 2, m: 1 }, SeedKind::RadialBump));
        assert!(s.v2.iter().all(|&v| v > 0.0));
        assert_eq!(deduplicate(&d, &ps, vec![s.clone(), flipped(&s, -1.0, 1.0, "t")], 1e-3).unwrap().len(), 1);
        // σ₂ is not a symmetry of the semi-nodal functional
        assert_eq!(deduplicate(&d, &ps, vec![s.clone(), flipped(&s, 1.0, -1.0, "t")], 1e-3).unwrap().len(), 2);
    }

    #[test]
    fn least_energy_selection() {
        let d = square(10);
        let p = params(Mode::SignChanging);
        let a = solved(&d, &p, &SeedSpec::new("a", SeedKind::SineMode { k: 2, m: 1 }, SeedKind::SineMode { k: 1, m: 2 }));
        let mut set = SolutionSet { solutions: vec![a.clone()], dedup_tol: 1e-3, params: p };
        assert_eq!(least_energy_select(&set, Classification::SignChanging).unwrap().source_seed, "a");
        assert!(matches!(least_energy_select(&set, Classification::Positive), Err(Error::ClassNotFound(_))));

        let higher = PhysicalSolution { energy: a.energy + 1.0, source_seed: "0".into(), ..a.clone() };
        let tie = PhysicalSolution { source_seed: "0".into(), ..a.clone() };
        let worse_tie = PhysicalSolution { residual1: a.residual1 + 1.0, source_seed: "00".into(), ..a.clone() };
        set.solutions = vec![higher, worse_tie, a.clone(), tie];
        assert_eq!(least_energy_select(&set, Classification::SignChanging).unwrap().source_seed, "0");
    }

    #[test]
    fn campaign_filters_dedups_and_is_deterministic() {
        let d = square(14);
        let p = params(Mode::SignChanging);
        let odd = SeedSpec::new("odd", SeedKind::SineMode { k: 2, m: 1 }, SeedKind::SineMode { k: 1, m: 2 });
        let specs = vec![
            SeedSpec::new("twin", odd.u1, odd.u2),
            odd.clone(),
            SeedSpec::new("pos", SeedKind::RadialBump, SeedKind::RadialBump),
            SeedSpec::new("bad", SeedKind::SineMode { k: 15, m: 1 }, SeedKind::RadialBump),
        ];
        let cfg = CampaignConfig::default();
        let r = run_campaign(&d, &p, &specs, &cfg).unwrap();
        let ids: Vec<&str> = r.records.iter().map(|x| x.seed_id.as_str()).collect();
        assert_eq!(ids, ["bad", "odd", "pos", "twin"]);
        assert!(r.records[0].error.as_deref().unwrap().contains("degenerate"));
        assert_eq!(r.set.count(Classification::SignChanging), 1);
        assert_eq!(r.set.count(Classification::Positive), 1);
        assert!(r.records[1].retained && !r.records[3].retained);
        for w in r.set.solutions.windows(2) {
            assert!(w[0].energy <= w[1].energy);
        }
        let again = run_campaign(&d, &p, &specs, &cfg).unwrap();
        assert_eq!(again.records, r.records);

        let only_positive = run_campaign(&d, &p, &specs[2..3], &cfg).unwrap();
        assert_eq!(only_positive.set.count(Classification::SignChanging), 0);
        assert_eq!(only_positive.records.len(), 1);
        assert!(run_campaign(&d, &p, &[], &cfg).is_err());
    }
}
