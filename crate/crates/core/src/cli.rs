//! Run configuration, campaign orchestration and machine-readable outputs.
//!
//! A configuration is a JSON document with five sections:
//!
//! ```json
//! {
//!   "domain": { "shape": "rectangle", "nx": 64, "ny": 64, "lx": 1.0, "ly": 1.0 },
//!   "params": { "lambda1": 1, "lambda2": 1, "mu1": 1, "mu2": 1, "beta": 0.05 },
//!   "flow":   { "tol_v": 1e-8 },
//!   "seeds":  { "library": "lattice" },
//!   "output": { "dir": "out" }
//! }
//! ```
//!
//! Defaults:
//!
//! | key | default |
//! |-----|---------|
//! | `params.mode` | `sign_changing` |
//! | `flow.dt0` | 0.1 |
//! | `flow.dt_min` / `flow.dt_max` | 1e-10 / 1.0 |
//! | `flow.tol_v` | 1e-8 |
//! | `flow.max_steps` | 5000 |
//! | `flow.backtrack_factor` | 0.5 |
//! | `flow.renorm` | true |
//! | `flow.record_every` | 1 |
//! | `flow.cg.tol` | 1e-10 |
//! | `flow.cg.maxiter` | 10 × node count |
//! | `flow.cg.jacobi` | false |
//! | `seeds.classes` | the mode's own class |
//! | `seeds.delta` | 1e-3 |
//! | `seeds.dedup_tol` | 1e-3 |
//! | `seeds.residual_tol` | 1e-6 |
//! | `seeds.random_count` / `seeds.rng_seed` | 0 / 0 |
//! | `output.dir` | `out` |
//! | `output.emit_fields` | false |

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::flow::{classify, residual, Classification, FlowConfig};
use crate::functional::{energy_e, Mode, SystemParams};
use crate::grid::{Field, GridDomain, Shape};
use crate::linear::CgOptions;
use crate::seeds::{library, run_campaign, CampaignConfig, SeedKind, SeedRecord, SeedSpec, SolutionSet, LIBRARIES};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SUMMARY_FILE: &str = "summary.json";

/// Relative agreement required when re-scoring emitted fields.
pub const RESCORE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub library: Option<String>,
    #[serde(default)]
    pub list: Vec<SeedSpec>,
    #[serde(default)]
    pub random_count: usize,
    #[serde(default)]
    pub rng_seed: u64,
    pub classes: Vec<Classification>,
    pub delta: f64,
    pub dedup_tol: f64,
    pub residual_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub emit_fields: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: Shape,
    pub params: SystemParams,
    pub flow: FlowConfig,
    pub seeds: SeedsConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    /// Library seeds, then explicit ones, then `random_count` random pairs.
    pub fn seed_specs(&self) -> Result<Vec<SeedSpec>> {
        let mut specs = match &self.seeds.library {
            Some(name) => library(name, self.params.mode)?,
            None => Vec::new(),
        };
        specs.extend(self.seeds.list.iter().cloned());
        let mut rng = ChaCha8Rng::seed_from_u64(self.seeds.rng_seed);
        for i in 0..self.seeds.random_count {
            let u1 = SeedKind::Random { rng_seed: rng.next_u64() };
            let u2 = match self.params.mode {
                Mode::SignChanging => SeedKind::Random { rng_seed: rng.next_u64() },
                Mode::SemiNodal => SeedKind::RadialBump,
            };
            specs.push(SeedSpec::new(format!("r{i:04}"), u1, u2));
        }
        Ok(specs)
    }

    pub fn campaign(&self) -> CampaignConfig {
        CampaignConfig {
            flow: self.flow,
            delta: self.seeds.delta,
            dedup_tol: self.seeds.dedup_tol,
            residual_tol: self.seeds.residual_tol,
        }
    }

    /// The configuration as JSON in the input schema.
    pub fn echo(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

// ---------------------------------------------------------------------------
// parsing

struct Checker<'a> {
    text: &'a str,
    errors: Vec<String>,
}

#[derive(Clone, Copy)]
enum Ty {
    Num,
    UInt,
    Bool,
    Str,
    Obj,
    Arr,
}

impl Ty {
    fn name(self) -> &'static str {
        match self {
            Ty::Num => "a number",
            Ty::UInt => "a nonnegative integer",
            Ty::Bool => "a boolean",
            Ty::Str => "a string",
            Ty::Obj => "an object",
            Ty::Arr => "an array",
        }
    }

    fn accepts(self, v: &Value) -> bool {
        match self {
            Ty::Num => v.is_number(),
            Ty::UInt => v.is_u64(),
            Ty::Bool => v.is_boolean(),
            Ty::Str => v.is_string(),
            Ty::Obj => v.is_object(),
            Ty::Arr => v.is_array(),
        }
    }
}

/// `(key, type, required)`
type Schema = &'static [(&'static str, Ty, bool)];

const DOMAIN_RECT: Schema = &[("shape", Ty::Str, true), ("nx", Ty::UInt, true), ("ny", Ty::UInt, true), ("lx", Ty::Num, true), ("ly", Ty::Num, true)];
const DOMAIN_DISK: Schema = &[("shape", Ty::Str, true), ("n", Ty::UInt, true), ("radius", Ty::Num, true)];
const PARAMS: Schema = &[
    ("lambda1", Ty::Num, true),
    ("lambda2", Ty::Num, true),
    ("mu1", Ty::Num, true),
    ("mu2", Ty::Num, true),
    ("beta", Ty::Num, true),
    ("mode", Ty::Str, false),
];
const FLOW: Schema = &[
    ("dt0", Ty::Num, false),
    ("dt_min", Ty::Num, false),
    ("dt_max", Ty::Num, false),
    ("tol_v", Ty::Num, false),
    ("max_steps", Ty::UInt, false),
    ("backtrack_factor", Ty::Num, false),
    ("renorm", Ty::Bool, false),
    ("record_every", Ty::UInt, false),
    ("record_states", Ty::Bool, false),
    ("cg", Ty::Obj, false),
];
const CG: Schema = &[("tol", Ty::Num, false), ("maxiter", Ty::UInt, false), ("jacobi", Ty::Bool, false)];
const SEEDS: Schema = &[
    ("library", Ty::Str, false),
    ("list", Ty::Arr, false),
    ("random_count", Ty::UInt, false),
    ("rng_seed", Ty::UInt, false),
    ("classes", Ty::Arr, false),
    ("delta", Ty::Num, false),
    ("dedup_tol", Ty::Num, false),
    ("residual_tol", Ty::Num, false),
];
const SEED_SPEC: Schema = &[("id", Ty::Str, true), ("u1", Ty::Obj, true), ("u2", Ty::Obj, true)];
const OUTPUT: Schema = &[("dir", Ty::Str, false), ("emit_fields", Ty::Bool, false)];
const TOP: Schema = &[("domain", Ty::Obj, true), ("params", Ty::Obj, true), ("flow", Ty::Obj, false), ("seeds", Ty::Obj, true), ("output", Ty::Obj, false)];

fn seed_kind_schema(kind: &str) -> Option<Schema> {
    const SINE: Schema = &[("kind", Ty::Str, true), ("k", Ty::UInt, true), ("m", Ty::UInt, true)];
    const BUMP: Schema = &[("kind", Ty::Str, true)];
    const ANGULAR: Schema = &[("kind", Ty::Str, true), ("l", Ty::UInt, true)];
    const TENSOR: Schema = &[("kind", Ty::Str, true), ("px", Ty::UInt, true), ("py", Ty::UInt, true)];
    const RANDOM: Schema = &[("kind", Ty::Str, true), ("rng_seed", Ty::UInt, true)];
    Some(match kind {
        "sine_mode" => SINE,
        "radial_bump" => BUMP,
        "angular_mode" => ANGULAR,
        "tensor_product" => TENSOR,
        "random" => RANDOM,
        _ => return None,
    })
}

/// 1-based line of the line containing byte offset `pos`.
fn line_at(text: &str, pos: usize) -> usize {
    text[..pos.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Best-effort location of a dotted key path in the source text.
fn locate(text: &str, path: &[String]) -> Option<usize> {
    let mut from = 0;
    let mut found = None;
    for key in path.iter().filter(|k| k.parse::<usize>().is_err()) {
        let needle = format!("\"{key}\"");
        let mut at = from;
        loop {
            let off = text[at..].find(&needle)? + at;
            let rest = text[off + needle.len()..].trim_start();
            if rest.starts_with(':') {
                found = Some(off);
                from = off + needle.len();
                break;
            }
            at = off + needle.len();
        }
    }
    found.map(|p| line_at(text, p))
}

impl<'a> Checker<'a> {
    fn err(&mut self, path: &[String], msg: impl AsRef<str>) {
        let name = path.join(".");
        match locate(self.text, path) {
            Some(line) => self.errors.push(format!("{name} (line {line}): {}", msg.as_ref())),
            None => self.errors.push(format!("{name}: {}", msg.as_ref())),
        }
    }

    /// Checks keys and value types of `obj`; returns whether it is
    /// structurally sound.
    fn object(&mut self, obj: &Map<String, Value>, schema: Schema, path: &[String]) -> bool {
        let before = self.errors.len();
        for key in obj.keys() {
            if !schema.iter().any(|(k, _, _)| k == key) {
                let mut p = path.to_vec();
                p.push(key.clone());
                let allowed: Vec<&str> = schema.iter().map(|(k, _, _)| *k).collect();
                self.err(&p, format!("unknown key (allowed: {})", allowed.join(", ")));
            }
        }
        for &(key, ty, required) in schema {
            let mut p = path.to_vec();
            p.push(key.to_string());
            match obj.get(key) {
                None if required => {
                    let name = p.join(".");
                    self.errors.push(format!("{name}: missing required key"));
                }
                Some(v) if !ty.accepts(v) => self.err(&p, format!("expected {}, found {}", ty.name(), short(v))),
                _ => {}
            }
        }
        self.errors.len() == before
    }
}

fn short(v: &Value) -> String {
    let s = v.to_string();
    if s.len() > 40 {
        format!("{}…", &s[..40])
    } else {
        s
    }
}

fn p(parts: &[&str]) -> Vec<String> {
    parts.iter().map(|s| s.to_string()).collect()
}

/// Key whose value starts before `(line, column)`: the last `"key":` in the
/// text up to that point.
fn key_before(text: &str, line: usize, column: usize) -> Option<String> {
    let mut off = 0;
    for (i, l) in text.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            off += column.min(l.len());
            break;
        }
        off += l.len();
    }
    let head = &text[..off.min(text.len())];
    let colon = head.rfind(':')?;
    let before = head[..colon].trim_end().strip_suffix('"')?;
    let open = before.rfind('"')?;
    Some(before[open + 1..].to_string())
}

/// Parses and validates a configuration, reporting every violation.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let root: Value = serde_json::from_str(text).map_err(|e| {
        let (line, col) = (e.line(), e.column());
        let msg = match key_before(text, line, col) {
            Some(key) => format!("malformed value for key \"{key}\" at line {line}, column {col}: {e}"),
            None => format!("malformed configuration at line {line}, column {col}: {e}"),
        };
        Error::Config(vec![msg])
    })?;
    let mut ck = Checker { text, errors: Vec::new() };
    let Some(top) = root.as_object() else {
        return Err(Error::Config(vec!["configuration must be a JSON object".into()]));
    };
    ck.object(top, TOP, &[]);

    let empty = Map::new();
    let section = |k: &str| top.get(k).and_then(Value::as_object).unwrap_or(&empty);

    // domain
    let domain = section("domain");
    let shape = match domain.get("shape").and_then(Value::as_str) {
        Some("rectangle") => ck.object(domain, DOMAIN_RECT, &p(&["domain"])).then_some(()).and_then(|_| {
            let g = |k: &str| domain[k].clone();
            Some(Shape::Rectangle {
                nx: g("nx").as_u64()? as usize,
                ny: g("ny").as_u64()? as usize,
                lx: g("lx").as_f64()?,
                ly: g("ly").as_f64()?,
            })
        }),
        Some("disk") => ck.object(domain, DOMAIN_DISK, &p(&["domain"])).then_some(()).and_then(|_| {
            Some(Shape::Disk { n: domain["n"].as_u64()? as usize, radius: domain["radius"].as_f64()? })
        }),
        Some(other) => {
            ck.err(&p(&["domain", "shape"]), format!("unknown shape {other:?} (expected rectangle or disk)"));
            None
        }
        None if top.contains_key("domain") => {
            ck.errors.push("domain.shape: missing required key".into());
            None
        }
        None => None,
    };
    if let Some(s) = shape {
        if let Err(e) = GridDomain::build(s) {
            ck.err(&p(&["domain"]), e.to_string());
        }
    }

    // params
    let params_obj = section("params");
    let mut params = None;
    if top.contains_key("params") && ck.object(params_obj, PARAMS, &p(&["params"])) {
        let g = |k: &str| params_obj[k].as_f64().unwrap_or(f64::NAN);
        let mode = match params_obj.get("mode").and_then(Value::as_str) {
            None | Some("sign_changing") => Some(Mode::SignChanging),
            Some("semi_nodal") => Some(Mode::SemiNodal),
            Some(other) => {
                ck.err(&p(&["params", "mode"]), format!("unknown mode {other:?} (expected sign_changing or semi_nodal)"));
                None
            }
        };
        if let Some(mode) = mode {
            let sp = SystemParams { lambda1: g("lambda1"), lambda2: g("lambda2"), mu1: g("mu1"), mu2: g("mu2"), beta: g("beta"), mode };
            match sp.validate() {
                Ok(()) => params = Some(sp),
                Err(Error::InvalidParams(m)) => {
                    for part in m.split("; ") {
                        let key = part.split_whitespace().next().unwrap_or("");
                        ck.err(&p(&["params", key]), part);
                    }
                }
                Err(e) => ck.errors.push(format!("params: {e}")),
            }
        }
    }
    let mode = params.map(|p| p.mode).unwrap_or(Mode::SignChanging);

    // flow
    let mut flow = FlowConfig::default();
    if let Some(fo) = top.get("flow").and_then(Value::as_object) {
        if ck.object(fo, FLOW, &p(&["flow"])) {
            let num = |k: &str, d: f64| fo.get(k).and_then(Value::as_f64).unwrap_or(d);
            let uint = |k: &str, d: usize| fo.get(k).and_then(Value::as_u64).map_or(d, |v| v as usize);
            let flag = |k: &str, d: bool| fo.get(k).and_then(Value::as_bool).unwrap_or(d);
            flow.dt0 = num("dt0", flow.dt0);
            flow.dt_min = num("dt_min", flow.dt_min);
            flow.dt_max = num("dt_max", flow.dt_max);
            flow.tol_v = num("tol_v", flow.tol_v);
            flow.max_steps = uint("max_steps", flow.max_steps);
            flow.backtrack_factor = num("backtrack_factor", flow.backtrack_factor);
            flow.renorm = flag("renorm", flow.renorm);
            flow.record_every = uint("record_every", flow.record_every);
            flow.record_states = flag("record_states", flow.record_states);
            if let Some(cg) = fo.get("cg").and_then(Value::as_object) {
                if ck.object(cg, CG, &p(&["flow", "cg"])) {
                    let d = CgOptions::default();
                    flow.cg = CgOptions {
                        tol: cg.get("tol").and_then(Value::as_f64).unwrap_or(d.tol),
                        maxiter: cg.get("maxiter").and_then(Value::as_u64).map(|v| v as usize),
                        jacobi: cg.get("jacobi").and_then(Value::as_bool).unwrap_or(d.jacobi),
                    };
                }
            }
            if let Err(Error::Config(v)) = flow.validate() {
                for m in v {
                    ck.errors.push(format!("flow: {m}"));
                }
            }
        }
    }

    // seeds
    let so = section("seeds");
    let campaign = CampaignConfig::default();
    let mut seeds = SeedsConfig {
        library: None,
        list: Vec::new(),
        random_count: 0,
        rng_seed: 0,
        classes: vec![default_class(mode)],
        delta: campaign.delta,
        dedup_tol: campaign.dedup_tol,
        residual_tol: campaign.residual_tol,
    };
    if top.contains_key("seeds") && ck.object(so, SEEDS, &p(&["seeds"])) {
        seeds.library = so.get("library").and_then(Value::as_str).map(str::to_string);
        if let Some(name) = &seeds.library {
            if !LIBRARIES.contains(&name.as_str()) || library(name, mode).is_err() {
                ck.err(&p(&["seeds", "library"]), format!("unknown library {name:?} for mode {} (known: {})", mode.as_str(), LIBRARIES.join(", ")));
            }
        }
        seeds.random_count = so.get("random_count").and_then(Value::as_u64).unwrap_or(0) as usize;
        seeds.rng_seed = so.get("rng_seed").and_then(Value::as_u64).unwrap_or(0);
        for (key, slot) in [("delta", &mut seeds.delta), ("dedup_tol", &mut seeds.dedup_tol), ("residual_tol", &mut seeds.residual_tol)] {
            if let Some(v) = so.get(key).and_then(Value::as_f64) {
                *slot = v;
            }
            if !(*slot > 0.0) {
                ck.err(&p(&["seeds", key]), format!("must be > 0 (got {slot})"));
            }
        }
        if let Some(list) = so.get("classes").and_then(Value::as_array) {
            seeds.classes.clear();
            for (i, c) in list.iter().enumerate() {
                match serde_json::from_value::<Classification>(c.clone()) {
                    Ok(cl) => seeds.classes.push(cl),
                    Err(_) => ck.err(&p(&["seeds", "classes", &i.to_string()]), format!("unknown class {}", short(c))),
                }
            }
            if seeds.classes.is_empty() {
                ck.err(&p(&["seeds", "classes"]), "at least one class must be requested");
            }
        }
        if let Some(list) = so.get("list").and_then(Value::as_array) {
            for (i, item) in list.iter().enumerate() {
                let ip = p(&["seeds", "list", &i.to_string()]);
                let Some(obj) = item.as_object() else {
                    ck.err(&ip, "expected an object");
                    continue;
                };
                if !ck.object(obj, SEED_SPEC, &ip) {
                    continue;
                }
                let mut ok = true;
                for comp in ["u1", "u2"] {
                    let mut cp = ip.clone();
                    cp.push(comp.into());
                    let c = obj[comp].as_object().expect("checked");
                    match c.get("kind").and_then(Value::as_str).and_then(|k| seed_kind_schema(k).map(|s| (k, s))) {
                        Some((_, schema)) => ok &= ck.object(c, schema, &cp),
                        None => {
                            cp.push("kind".into());
                            ck.err(&cp, "expected one of sine_mode, radial_bump, angular_mode, tensor_product, random");
                            ok = false;
                        }
                    }
                }
                if ok {
                    match serde_json::from_value::<SeedSpec>(item.clone()) {
                        Ok(spec) => seeds.list.push(spec),
                        Err(e) => ck.err(&ip, e.to_string()),
                    }
                }
            }
        }
        if seeds.library.is_none() && seeds.list.is_empty() && seeds.random_count == 0 && ck.errors.is_empty() {
            ck.errors.push("seeds: no seeds (give library, list or random_count)".into());
        }
    }

    // output
    let mut output = OutputConfig { dir: PathBuf::from("out"), emit_fields: false };
    if let Some(oo) = top.get("output").and_then(Value::as_object) {
        if ck.object(oo, OUTPUT, &p(&["output"])) {
            if let Some(d) = oo.get("dir").and_then(Value::as_str) {
                output.dir = PathBuf::from(d);
            }
            output.emit_fields = oo.get("emit_fields").and_then(Value::as_bool).unwrap_or(false);
        }
    }

    let (Some(domain), Some(params)) = (shape, params) else {
        if ck.errors.is_empty() {
            ck.errors.push("incomplete configuration".into());
        }
        return Err(Error::Config(ck.errors));
    };
    let cfg = RunConfig { domain, params, flow, seeds, output };
    if ck.errors.is_empty() {
        match cfg.seed_specs() {
            Ok(specs) => {
                let mut ids = BTreeMap::new();
                for s in &specs {
                    if let Err(v) = s.validate(mode) {
                        ck.errors.extend(v.into_iter().map(|m| format!("seeds: {m}")));
                    }
                    if !s.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                        ck.errors.push(format!("seeds: id {:?} may only contain [A-Za-z0-9_-]", s.id));
                    }
                    *ids.entry(s.id.clone()).or_insert(0usize) += 1;
                }
                for (id, n) in ids {
                    if n > 1 {
                        ck.errors.push(format!("seeds: duplicate seed id {id:?}"));
                    }
                }
            }
            Err(Error::Config(v)) => ck.errors.extend(v),
            Err(e) => ck.errors.push(e.to_string()),
        }
    }
    if ck.errors.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(ck.errors))
    }
}

pub fn default_class(mode: Mode) -> Classification {
    match mode {
        Mode::SignChanging => Classification::SignChanging,
        Mode::SemiNodal => Classification::SemiNodal,
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

// ---------------------------------------------------------------------------
// report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeastEnergy {
    pub seed_id: String,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub seeds_run: usize,
    pub converged: usize,
    pub requested: Vec<Classification>,
    /// Retained (deduplicated) solutions per class.
    pub counts: BTreeMap<Classification, usize>,
    pub least_energy: BTreeMap<Classification, LeastEnergy>,
    pub missing: Vec<Classification>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditBlock {
    pub descent_margin_min: Option<f64>,
    pub descent_margin_sharp_min: Option<f64>,
    pub j_monotonicity_violations: usize,
    pub max_j_increase: Option<f64>,
    pub max_constraint_drift: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionEntry {
    pub seed_id: String,
    pub classification: Classification,
    pub energy: f64,
    pub residual1: f64,
    pub residual2: f64,
    pub norm_h: f64,
    pub field_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: RunConfig,
    pub version: String,
    /// Seconds; the only field that differs between identical runs.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub exit_code: i32,
    pub records: Vec<SeedRecord>,
    pub solutions: Vec<SolutionEntry>,
    pub summary: CampaignSummary,
    pub audit: AuditBlock,
    pub provenance: Provenance,
}

impl SolveReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// The summary with the wall-time field zeroed, for reproducibility
    /// comparisons.
    pub fn without_wall_time(&self) -> SolveReport {
        let mut r = self.clone();
        r.provenance.wall_time = 0.0;
        r
    }
}

fn opt_fold(acc: Option<f64>, v: Option<f64>, f: fn(f64, f64) -> f64) -> Option<f64> {
    match (acc, v) {
        (Some(a), Some(b)) => Some(f(a, b)),
        (a, b) => a.or(b),
    }
}

fn audit_block(records: &[SeedRecord]) -> AuditBlock {
    let mut b = AuditBlock {
        descent_margin_min: None,
        descent_margin_sharp_min: None,
        j_monotonicity_violations: 0,
        max_j_increase: None,
        max_constraint_drift: 0.0,
        passed: true,
    };
    for a in records.iter().filter_map(|r| r.audit.as_ref()) {
        b.descent_margin_min = opt_fold(b.descent_margin_min, a.descent_margin, f64::min);
        b.descent_margin_sharp_min = opt_fold(b.descent_margin_sharp_min, a.descent_margin_sharp, f64::min);
        b.max_j_increase = opt_fold(b.max_j_increase, a.max_j_increase, f64::max);
        b.j_monotonicity_violations += a.j_violations;
        b.max_constraint_drift = b.max_constraint_drift.max(a.max_constraint_drift);
        b.passed &= a.passed();
    }
    b
}

pub fn field_file_name(seed_id: &str) -> String {
    format!("solution_{seed_id}.csv")
}

/// Result of [`run`]: the report plus the solutions it describes.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: SolveReport,
    pub set: SolutionSet,
    pub domain: GridDomain,
}

/// Executes the campaign. Exit code 0 when every requested class was found
/// and every audit passed, 1 otherwise.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    let start = Instant::now();
    let dom = GridDomain::build(cfg.domain)?;
    let specs = cfg.seed_specs()?;
    let camp = run_campaign(&dom, &cfg.params, &specs, &cfg.campaign())?;

    let mut counts = BTreeMap::new();
    let mut least = BTreeMap::new();
    for s in &camp.set.solutions {
        *counts.entry(s.classification).or_insert(0) += 1;
        // solutions are energy-sorted, so the first of each class is least
        least.entry(s.classification).or_insert_with(|| LeastEnergy { seed_id: s.source_seed.clone(), energy: s.energy });
    }
    let missing: Vec<Classification> = cfg.seeds.classes.iter().copied().filter(|c| !counts.contains_key(c)).collect();
    let audit = audit_block(&camp.records);
    let exit_code = if missing.is_empty() && audit.passed { 0 } else { 1 };
    let solutions = camp
        .set
        .solutions
        .iter()
        .map(|s| SolutionEntry {
            seed_id: s.source_seed.clone(),
            classification: s.classification,
            energy: s.energy,
            residual1: s.residual1,
            residual2: s.residual2,
            norm_h: s.norm_h(&dom, &cfg.params),
            field_file: cfg.output.emit_fields.then(|| field_file_name(&s.source_seed)),
        })
        .collect();
    let report = SolveReport {
        exit_code,
        summary: CampaignSummary {
            seeds_run: camp.records.len(),
            converged: camp.records.iter().filter(|r| r.converged).count(),
            requested: cfg.seeds.classes.clone(),
            counts,
            least_energy: least,
            missing,
        },
        records: camp.records,
        solutions,
        audit,
        provenance: Provenance { config: cfg.clone(), version: VERSION.to_string(), wall_time: start.elapsed().as_secs_f64() },
    };
    Ok(RunOutcome { report, set: camp.set, domain: dom })
}

/// Creates the output directory and checks that it accepts files.
pub fn prepare_output(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let probe = dir.join(".nodalflow-write-probe");
    fs::write(&probe, b"").map_err(|e| Error::Io(format!("{} is not writable: {e}", dir.display())))?;
    let _ = fs::remove_file(probe);
    Ok(())
}

/// Writes `summary.json` and, with `emit_fields`, one CSV per solution.
pub fn emit_outputs(out: &RunOutcome, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if out.report.provenance.config.output.emit_fields {
        for s in &out.set.solutions {
            let path = dir.join(field_file_name(&s.source_seed));
            write_fields(&path, &out.domain, &s.v1, &s.v2)?;
            written.push(path);
        }
    }
    let path = dir.join(SUMMARY_FILE);
    fs::write(&path, out.report.to_json())?;
    written.push(path);
    Ok(written)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// CSV with header `x,y,u1,u2`, one row per interior node in row-major order.
pub fn write_fields(path: &Path, dom: &GridDomain, v1: &Field, v2: &Field) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["x", "y", "u1", "u2"]).map_err(csv_err)?;
    for p in 0..dom.len() {
        let [x, y] = dom.coords(p);
        let row = [x, y, v1[p], v2[p]].map(|v| format!("{v:.16e}"));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a field file, checking its node coordinates against `dom`.
pub fn read_fields(path: &Path, dom: &GridDomain) -> Result<(Field, Field)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().collect::<Vec<_>>() != ["x", "y", "u1", "u2"] {
        return Err(Error::Io(format!("{}: header must be x,y,u1,u2", path.display())));
    }
    let (mut v1, mut v2) = (Vec::with_capacity(dom.len()), Vec::with_capacity(dom.len()));
    for (p, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| Error::Io(format!("{}: row {}: {e}", path.display(), p + 2))))
            .collect::<Result<_>>()?;
        if p >= dom.len() {
            return Err(Error::NonConforming { expected: dom.len(), got: p + 1 });
        }
        let [x, y] = dom.coords(p);
        if (vals[0] - x).abs() > 1e-12 * (1.0 + x.abs()) || (vals[1] - y).abs() > 1e-12 * (1.0 + y.abs()) {
            return Err(Error::Io(format!("{}: row {} is not node {p}", path.display(), p + 2)));
        }
        v1.push(vals[2]);
        v2.push(vals[3]);
    }
    if v1.len() != dom.len() {
        return Err(Error::NonConforming { expected: dom.len(), got: v1.len() });
    }
    Ok((Field::from_vec(v1), Field::from_vec(v2)))
}

/// Outcome of re-verifying an emitted summary.
#[derive(Debug, Clone, Default)]
pub struct AuditOutcome {
    pub checked: Vec<String>,
    pub failures: Vec<String>,
}

impl AuditOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() { 0 } else { 1 }
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= RESCORE_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Re-verifies a summary: count consistency, audit flags and, for every
/// emitted field file, energy, residuals, class and semi-nodal positivity.
pub fn audit_summary(summary_path: &Path) -> Result<AuditOutcome> {
    let text = fs::read_to_string(summary_path).map_err(|e| Error::Io(format!("{}: {e}", summary_path.display())))?;
    let report: SolveReport =
        serde_json::from_str(&text).map_err(|e| Error::Io(format!("{}: not a summary: {e}", summary_path.display())))?;
    let cfg = &report.provenance.config;
    let dom = GridDomain::build(cfg.domain)?;
    let dir = summary_path.parent().unwrap_or(Path::new("."));
    let mut out = AuditOutcome::default();

    for (class, n) in &report.summary.counts {
        let retained = report.records.iter().filter(|r| r.retained && r.classification == Some(*class)).count();
        if retained != *n {
            out.failures.push(format!("{}: summary count {n} but {retained} retained records", class.as_str()));
        }
    }
    out.checked.push("class counts".into());
    if !report.audit.passed {
        out.failures.push("flow audit reported a failure".into());
    }
    for s in &report.solutions {
        let Some(file) = &s.field_file else { continue };
        let (v1, v2) = read_fields(&dir.join(file), &dom)?;
        let e = energy_e(&dom, &cfg.params, &v1, &v2);
        let (r1, r2) = residual(&dom, &cfg.params, &v1, &v2);
        let class = classify(&dom, &v1, &v2, cfg.seeds.delta);
        if !close(e, s.energy) {
            out.failures.push(format!("{}: energy {e} differs from reported {}", s.seed_id, s.energy));
        }
        if !close(r1, s.residual1) || !close(r2, s.residual2) {
            out.failures.push(format!("{}: residuals ({r1:e}, {r2:e}) differ from reported", s.seed_id));
        }
        if r1.max(r2) > cfg.seeds.residual_tol {
            out.failures.push(format!("{}: residual above threshold", s.seed_id));
        }
        if class != s.classification {
            out.failures.push(format!("{}: reclassified as {}", s.seed_id, class.as_str()));
        }
        if s.classification == Classification::SemiNodal {
            let min = v2.iter().fold(f64::INFINITY, |m, &v| m.min(v));
            if min < -1e-12 {
                out.failures.push(format!("{}: u2 has a negative entry {min:e}", s.seed_id));
            }
        }
        out.checked.push(file.clone());
    }
    Ok(out)
}
