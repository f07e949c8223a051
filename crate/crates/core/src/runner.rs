//! Run configuration, ensemble orchestration and run-directory artifacts.
//!
//! A run directory holds `manifest.json` (the configuration verbatim plus
//! everything needed to re-execute it), `summary.json` (deterministic: no
//! timings), `events.json`, `dimension.json` and optionally thinned
//! trajectories under `trajectories/`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::analytics::{
    collision_rates, dimension_from_counts, CollisionEvent, DimensionEstimate, PathAnalysis, PathAnalyzer,
    ScaleWindow, ScalingRow,
};
use crate::engine::{is_admissible, simulate_path, PathObserver, PathStats, Recorder, SeedLineage, StepPolicy};
use crate::models::{
    default_grid_size, dimension_bound_predictor, interior_grid, make_preset, CoefficientModel, DimensionBounds,
    PresetSpec,
};
use crate::roots::{Family, RootSystem, Weights};
use crate::seeding::{par_map_indexed, point_seed, rng_from_seed, trajectory_seed};

pub const CONFIG_SCHEMA: &str = "weylsim.run-config.v1";
pub const MANIFEST_FORMAT: &str = "weylsim.manifest.v1";
pub const SUMMARY_FORMAT: &str = "weylsim.summary.v1";
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "WEYLSIM_OUTPUT_ROOT";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not valid JSON: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl RunError {
    /// Process exit code: 1 I/O, 2 configuration, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Io { .. } => 1,
            RunError::Parse { .. } | RunError::Invalid(_) => 2,
            RunError::Numerical(_) => 3,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        RunError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Starting point of every trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum X0Spec {
    Explicit(Vec<f64>),
    Named(X0Named),
    /// Equispaced point projected onto the walls of the listed positive roots.
    Boundary { boundary: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum X0Named {
    Equispaced,
}

impl Default for X0Spec {
    fn default() -> Self {
        X0Spec::Named(X0Named::Equispaced)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightsSpec {
    Named(WeightsNamed),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightsNamed {
    /// `w_alpha = |alpha|`: projections become distances to the walls.
    RootNorms,
    Uniform,
}

impl Default for WeightsSpec {
    fn default() -> Self {
        WeightsSpec::Named(WeightsNamed::RootNorms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryDump {
    /// Number of trajectories (the first ones by index) to persist.
    pub count: usize,
    /// Keep every `stride`-th accepted sample.
    pub stride: usize,
}

/// Swept parameter values and the preset they produce.
pub type SweepPoint = (Vec<(String, f64)>, PresetSpec);

/// A validated run configuration with defaults filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub family: Family,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(flatten)]
    pub preset: PresetSpec,
    pub x0: X0Spec,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub policy: StepPolicy,
    pub ensemble: usize,
    pub seed: u64,
    pub eps_grid: Vec<f64>,
    /// eps whose event intervals feed the dimension estimate.
    pub dim_eps: f64,
    pub scale_window: ScaleWindow,
    /// Box counts are stored for levels `0..=count_levels`.
    pub count_levels: usize,
    pub weights: WeightsSpec,
    pub output_dir: Option<PathBuf>,
    pub workers: usize,
    pub trajectories: Option<TrajectoryDump>,
    /// Events stored per trajectory and eps in `events.json`.
    pub keep_events: usize,
    /// Interior grid size for the predictor constants.
    pub predictor_grid: usize,
    /// Parameter grid for `sweep` (one or two preset parameters).
    pub sweep: Option<BTreeMap<String, Vec<f64>>>,
}

const REQUIRED: [&str; 6] = ["family", "N", "preset", "T", "ensemble", "seed"];
const PRESET_PARAMS: [&str; 7] = ["k", "k1", "k2", "kappa", "a", "p", "q"];
const OPTIONAL: [&str; 15] = [
    "schema",
    "x0",
    "policy",
    "eps_grid",
    "dim_eps",
    "scale_window",
    "count_levels",
    "weights",
    "output_dir",
    "workers",
    "trajectories",
    "keep_events",
    "predictor_grid",
    "sweep",
    "name",
];

/// Parameters accepted by each preset.
pub fn preset_params(preset: &str) -> Option<&'static [&'static str]> {
    Some(match preset {
        "dyson" | "bessel_general" => &["k"],
        "bessel_b" => &["k1", "k2"],
        "wishart" => &["kappa", "a"],
        "jacobi" => &["k", "p", "q"],
        _ => return None,
    })
}

fn preset_values(spec: &PresetSpec) -> Vec<(&'static str, f64)> {
    match *spec {
        PresetSpec::Dyson { k } | PresetSpec::BesselGeneral { k } => vec![("k", k)],
        PresetSpec::BesselB { k1, k2 } => vec![("k1", k1), ("k2", k2)],
        PresetSpec::Wishart { kappa, a } => vec![("kappa", kappa), ("a", a)],
        PresetSpec::Jacobi { k, p, q } => vec![("k", k), ("p", p), ("q", q)],
        PresetSpec::Custom => vec![],
    }
}

/// `spec` with parameter `name` replaced by `value`.
pub fn with_param(spec: PresetSpec, name: &str, value: f64) -> Option<PresetSpec> {
    let mut s = spec;
    match (&mut s, name) {
        (PresetSpec::Dyson { k } | PresetSpec::BesselGeneral { k } | PresetSpec::Jacobi { k, .. }, "k") => *k = value,
        (PresetSpec::BesselB { k1, .. }, "k1") => *k1 = value,
        (PresetSpec::BesselB { k2, .. }, "k2") => *k2 = value,
        (PresetSpec::Wishart { kappa, .. }, "kappa") => *kappa = value,
        (PresetSpec::Wishart { a, .. }, "a") => *a = value,
        (PresetSpec::Jacobi { p, .. }, "p") => *p = value,
        (PresetSpec::Jacobi { q, .. }, "q") => *q = value,
        _ => return None,
    }
    Some(s)
}

fn take<T: serde::de::DeserializeOwned>(obj: &Map<String, Value>, key: &str, errs: &mut Vec<String>) -> Option<T> {
    let v = obj.get(key)?;
    match serde_json::from_value(v.clone()) {
        Ok(t) => Some(t),
        Err(e) => {
            errs.push(format!("`{key}`: {e}"));
            None
        }
    }
}

/// Reads and validates a config file (a run manifest is accepted too; its
/// embedded config is used).
pub fn load_config(path: &Path) -> Result<(RunConfig, Value), RunError> {
    let text = fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| RunError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let value = match value.get("manifest_format") {
        Some(_) => value
            .get("config")
            .cloned()
            .ok_or_else(|| RunError::Invalid(vec!["manifest has no `config` entry".into()]))?,
        None => value,
    };
    let cfg = parse_config(&value)?;
    Ok((cfg, value))
}

/// Validates a config document, reporting every violation found.
pub fn parse_config(value: &Value) -> Result<RunConfig, RunError> {
    let obj = value
        .as_object()
        .ok_or_else(|| RunError::Invalid(vec!["the configuration must be a JSON object".into()]))?;
    let mut errs = Vec::new();
    for key in REQUIRED {
        if !obj.contains_key(key) {
            let why = if key == "seed" {
                " (runs must be reproducible: give an explicit master seed)"
            } else {
                ""
            };
            errs.push(format!("missing required field `{key}`{why}"));
        }
    }
    for key in obj.keys() {
        let k = key.as_str();
        if !REQUIRED.contains(&k) && !PRESET_PARAMS.contains(&k) && !OPTIONAL.contains(&k) {
            errs.push(format!("unknown field `{key}`"));
        }
    }
    if let Some(s) = obj.get("schema") {
        if s.as_str() != Some(CONFIG_SCHEMA) {
            errs.push(format!("`schema` must be \"{CONFIG_SCHEMA}\", got {s}"));
        }
    }

    let family = take::<String>(obj, "family", &mut errs).and_then(|s| match s.parse::<Family>() {
        Ok(f) => Some(f),
        Err(e) => {
            errs.push(format!("`family`: {e}"));
            None
        }
    });
    let n: Option<usize> = take(obj, "N", &mut errs);
    let preset = parse_preset(obj, &mut errs);
    let x0: X0Spec = take(obj, "x0", &mut errs).unwrap_or_default();
    let horizon: Option<f64> = take(obj, "T", &mut errs);
    let policy: StepPolicy = take(obj, "policy", &mut errs).unwrap_or_default();
    let ensemble: Option<usize> = take(obj, "ensemble", &mut errs);
    let seed: Option<u64> = take(obj, "seed", &mut errs);
    let eps_grid: Vec<f64> = take(obj, "eps_grid", &mut errs).unwrap_or_else(|| vec![1e-2, 1e-3, 1e-4]);
    let dim_eps: Option<f64> = take(obj, "dim_eps", &mut errs);
    let scale_window: Option<ScaleWindow> = take(obj, "scale_window", &mut errs);
    let count_levels: Option<usize> = take(obj, "count_levels", &mut errs);
    let weights: WeightsSpec = take(obj, "weights", &mut errs).unwrap_or_default();
    let output_dir: Option<PathBuf> = take(obj, "output_dir", &mut errs);
    let workers: usize = take(obj, "workers", &mut errs).unwrap_or(0);
    let trajectories: Option<TrajectoryDump> = take(obj, "trajectories", &mut errs);
    let keep_events: usize = take(obj, "keep_events", &mut errs).unwrap_or(5);
    let predictor_grid: Option<usize> = take(obj, "predictor_grid", &mut errs);
    let sweep: Option<BTreeMap<String, Vec<f64>>> = take(obj, "sweep", &mut errs);
    let _name: Option<String> = take(obj, "name", &mut errs);

    let (Some(family), Some(n), Some(preset), Some(horizon), Some(ensemble), Some(seed)) =
        (family, n, preset, horizon, ensemble, seed)
    else {
        return Err(RunError::Invalid(errs));
    };
    let window = scale_window.unwrap_or_else(|| ScaleWindow::default_for(horizon.max(0.0), policy.dt_max));
    let cfg = RunConfig {
        family,
        n,
        preset,
        x0,
        horizon,
        policy,
        ensemble,
        seed,
        dim_eps: dim_eps.unwrap_or_else(|| eps_grid.iter().copied().fold(f64::INFINITY, f64::min)),
        eps_grid,
        scale_window: window,
        count_levels: count_levels.unwrap_or((window.max_level + 4).min(40)),
        weights,
        output_dir,
        workers,
        trajectories,
        keep_events,
        predictor_grid: predictor_grid.unwrap_or_else(|| default_grid_size(n)),
        sweep,
    };
    errs.extend(cfg.violations());
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(RunError::Invalid(errs))
    }
}

fn parse_preset(obj: &Map<String, Value>, errs: &mut Vec<String>) -> Option<PresetSpec> {
    let name = take::<String>(obj, "preset", errs)?;
    let Some(params) = preset_params(&name) else {
        if name == "custom" {
            errs.push("preset `custom` needs coefficient functions and can only be used from the library API".into());
        } else {
            errs.push(format!(
                "unknown preset `{name}` (expected dyson, bessel_general, bessel_b, wishart or jacobi)"
            ));
        }
        return None;
    };
    let sweep = obj.get("sweep").and_then(Value::as_object);
    let mut sub = Map::new();
    sub.insert("preset".into(), Value::String(name.clone()));
    let mut ok = true;
    for key in PRESET_PARAMS {
        match (obj.get(key), params.contains(&key)) {
            (Some(v), true) => {
                sub.insert(key.into(), v.clone());
            }
            (Some(_), false) => {
                errs.push(format!("`{key}` is not a parameter of preset {name} (expects {params:?})"));
                ok = false;
            }
            // a swept parameter may be omitted; its first value stands in
            (None, true) if sweep.and_then(|m| m.get(key)).is_some() => {
                let first = sweep
                    .and_then(|m| m.get(key))
                    .and_then(|v| v.get(0))
                    .cloned()
                    .unwrap_or(Value::from(1.0));
                sub.insert(key.into(), first);
            }
            (None, true) => {
                errs.push(format!("preset {name} requires parameter `{key}`"));
                ok = false;
            }
            (None, false) => {}
        }
    }
    if !ok {
        return None;
    }
    match serde_json::from_value::<PresetSpec>(Value::Object(sub)) {
        Ok(p) => Some(p),
        Err(e) => {
            errs.push(format!("preset {name}: {e}"));
            None
        }
    }
}

impl RunConfig {
    /// Every numeric or structural constraint that fails.
    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let rs = match RootSystem::build(self.family, self.n) {
            Ok(rs) => Some(rs),
            Err(e) => {
                errs.push(format!("root system: {e}"));
                None
            }
        };
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            errs.push(format!("`T` must be positive and finite, got {}", self.horizon));
        }
        if self.ensemble == 0 {
            errs.push("`ensemble` must be at least 1".into());
        }
        if let Err(e) = self.policy.validate() {
            errs.push(format!("`policy`: {e}"));
        }
        if self.eps_grid.is_empty() {
            errs.push("`eps_grid` must not be empty".into());
        }
        if self.eps_grid.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            errs.push(format!("`eps_grid` entries must be positive, got {:?}", self.eps_grid));
        }
        if self.eps_grid.windows(2).any(|w| w[1] >= w[0]) {
            errs.push(format!("`eps_grid` must be strictly decreasing, got {:?}", self.eps_grid));
        }
        if !(self.dim_eps > 0.0 && self.dim_eps.is_finite()) {
            errs.push(format!("`dim_eps` must be positive, got {}", self.dim_eps));
        }
        if let Err(e) = self.scale_window.validate() {
            errs.push(format!("`scale_window`: {e}"));
        }
        if self.scale_window.max_level > self.count_levels {
            errs.push(format!(
                "`scale_window.max_level` = {} exceeds `count_levels` = {}",
                self.scale_window.max_level, self.count_levels
            ));
        }
        if self.count_levels > 60 {
            errs.push(format!("`count_levels` must be at most 60, got {}", self.count_levels));
        }
        if let Some(d) = self.trajectories {
            if d.stride == 0 {
                errs.push("`trajectories.stride` must be at least 1".into());
            }
        }
        if self.predictor_grid == 0 {
            errs.push("`predictor_grid` must be at least 1".into());
        }
        if let WeightsSpec::Explicit(w) = &self.weights {
            if let Some(rs) = &rs {
                if let Err(e) = Weights::new(w.clone()).and_then(|w| w.check_for(rs)) {
                    errs.push(format!("`weights`: {e}"));
                }
            }
        }
        let presets = match self.points() {
            Ok(points) => points.into_iter().map(|(_, p)| p).collect(),
            Err(e) => {
                errs.extend(e);
                vec![]
            }
        };
        if self.sweep.is_none() {
            if let Err(e) = make_preset(self.preset, self.family, self.n) {
                errs.push(format!("preset: {e}"));
            }
        } else {
            let mut seen = std::collections::BTreeSet::new();
            for p in &presets {
                if let Err(e) = make_preset(*p, self.family, self.n) {
                    if seen.insert(e.to_string()) {
                        errs.push(format!("sweep point {p:?}: {e}"));
                    }
                }
            }
        }
        if let (Some(rs), Some(p)) = (&rs, presets.first().copied().or(Some(self.preset))) {
            if let Ok(model) = make_preset(p, self.family, self.n) {
                match resolve_x0(&self.x0, rs, &model) {
                    Ok(x) => {
                        if !is_admissible(&model, rs, &x, self.policy.wall_tol.max(1e-12)) {
                            errs.push(format!("`x0` {x:?} is outside the closed chamber or the domain"));
                        }
                    }
                    Err(e) => errs.push(e),
                }
            }
        }
        errs
    }

    /// Grid points of a sweep as `(parameter values, preset)`; a config
    /// without `sweep` is a single point.
    pub fn points(&self) -> Result<Vec<SweepPoint>, Vec<String>> {
        let Some(sweep) = &self.sweep else {
            return Ok(vec![(vec![], self.preset)]);
        };
        let mut errs = Vec::new();
        if sweep.is_empty() || sweep.len() > 2 {
            errs.push(format!("`sweep` must vary one or two parameters, got {}", sweep.len()));
        }
        let params = preset_params(self.preset.name()).unwrap_or(&[]);
        for (k, v) in sweep {
            if !params.contains(&k.as_str()) {
                errs.push(format!("`sweep.{k}` is not a parameter of preset {}", self.preset.name()));
            }
            if v.is_empty() {
                errs.push(format!("`sweep.{k}` must list at least one value"));
            }
            if v.iter().any(|x| !x.is_finite()) {
                errs.push(format!("`sweep.{k}` values must be finite"));
            }
        }
        if !errs.is_empty() {
            return Err(errs);
        }
        let mut points: Vec<(Vec<(String, f64)>, PresetSpec)> = vec![(vec![], self.preset)];
        for (k, values) in sweep {
            let mut next = Vec::new();
            for (assign, spec) in &points {
                for &v in values {
                    let mut a = assign.clone();
                    a.push((k.clone(), v));
                    next.push((a, with_param(*spec, k, v).expect("checked parameter name")));
                }
            }
            points = next;
        }
        Ok(points)
    }

    pub fn root_system(&self) -> Result<RootSystem, RunError> {
        RootSystem::build(self.family, self.n).map_err(|e| RunError::Invalid(vec![e.to_string()]))
    }

    pub fn weights_for(&self, rs: &RootSystem) -> Result<Weights, RunError> {
        match &self.weights {
            WeightsSpec::Named(WeightsNamed::RootNorms) => Ok(Weights::root_norms(rs)),
            WeightsSpec::Named(WeightsNamed::Uniform) => Ok(Weights::uniform(rs)),
            WeightsSpec::Explicit(w) => Weights::new(w.clone())
                .and_then(|w| w.check_for(rs).map(|_| w))
                .map_err(|e| RunError::Invalid(vec![e.to_string()])),
        }
    }

    /// Default run directory name.
    pub fn run_name(&self) -> String {
        format!("{}-{}{}-seed{}", self.preset.name(), self.family, self.n, self.seed)
    }

    /// `output_dir` if set, else `<root>/<run name>` with `root` from the
    /// caller (typically the environment) or `runs`.
    pub fn output_dir_with_root(&self, root: Option<&Path>) -> PathBuf {
        match &self.output_dir {
            Some(d) => d.clone(),
            None => root.unwrap_or(Path::new("runs")).join(self.run_name()),
        }
    }
}

/// An interior point with evenly spaced coordinates for the model's chamber
/// and domain.
pub fn equispaced_point(rs: &RootSystem, model: &CoefficientModel) -> Vec<f64> {
    let n = rs.dim();
    let dom = model.domain();
    if dom.is_bounded_below() && dom.is_bounded_above() {
        let w = dom.upper - dom.lower;
        return (0..n).map(|i| dom.lower + w * (i + 1) as f64 / (n + 1) as f64).collect();
    }
    if dom.is_bounded_below() {
        return (0..n).map(|i| dom.lower + (i + 1) as f64).collect();
    }
    match rs.family() {
        Family::A => (0..n).map(|i| i as f64 - (n - 1) as f64 / 2.0).collect(),
        Family::B | Family::D => (0..n).map(|i| (i + 1) as f64).collect(),
    }
}

/// Resolves the start point of a run.
pub fn resolve_x0(spec: &X0Spec, rs: &RootSystem, model: &CoefficientModel) -> Result<Vec<f64>, String> {
    match spec {
        X0Spec::Explicit(x) => {
            if x.len() != rs.dim() {
                return Err(format!("`x0` has {} coordinates, N = {}", x.len(), rs.dim()));
            }
            Ok(x.clone())
        }
        X0Spec::Named(X0Named::Equispaced) => Ok(equispaced_point(rs, model)),
        X0Spec::Boundary { boundary } => {
            if boundary.is_empty() {
                return Err("`x0.boundary` must list at least one positive-root index".into());
            }
            if let Some(&b) = boundary.iter().find(|&&b| b >= rs.num_positive()) {
                return Err(format!(
                    "`x0.boundary` index {b} out of range (there are {} positive roots)",
                    rs.num_positive()
                ));
            }
            // alternating projections onto the walls; they are linear subspaces
            let mut x = equispaced_point(rs, model);
            let roots = rs.sparse_roots();
            for _ in 0..10_000 {
                let mut moved = 0.0f64;
                for &b in boundary {
                    let r = &roots[b];
                    let c = r.dot(&x) / r.norm_sq();
                    for (i, v) in r.entries() {
                        x[i] -= c * v;
                        moved = moved.max((c * v).abs());
                    }
                }
                if moved < 1e-15 {
                    break;
                }
            }
            for &b in boundary {
                if roots[b].dot(&x).abs() > 1e-12 {
                    return Err(format!("walls {boundary:?} do not intersect near the equispaced point"));
                }
            }
            Ok(x)
        }
    }
}

/// Per-trajectory failure, reported without stopping the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFailure {
    pub index: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepTotals {
    pub accepted: u64,
    pub rejected: u64,
    pub floor_resamples: u64,
    pub entry_substeps: u64,
    pub projections: u64,
    pub smallest_dt: f64,
}

impl StepTotals {
    fn add(&mut self, s: &PathStats) {
        self.accepted += s.accepted;
        self.rejected += s.rejected;
        self.floor_resamples += s.floor_resamples;
        self.entry_substeps += s.entry_substeps;
        self.projections += s.projections;
        self.smallest_dt = if self.smallest_dt == 0.0 {
            s.smallest_dt
        } else {
            self.smallest_dt.min(s.smallest_dt)
        };
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionSummary {
    pub eps: f64,
    #[serde(flatten)]
    pub estimate: DimensionEstimate,
}

/// Deterministic run results (no timings), written as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub format: String,
    pub family: Family,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(flatten)]
    pub preset: PresetSpec,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub x0: Vec<f64>,
    pub ensemble: usize,
    pub seed: u64,
    pub completed: usize,
    pub failures: Vec<TrajectoryFailure>,
    pub exploded: usize,
    /// Fraction of completed trajectories with any event at the finest eps.
    pub event_rate: f64,
    pub rates: Vec<ScalingRow>,
    pub dimension: DimensionSummary,
    pub predictor: DimensionBounds,
    pub steps: StepTotals,
    /// Smallest weighted projection over all paths.
    pub min_projection: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub manifest_format: String,
    pub toolkit_version: String,
    /// The configuration document exactly as given.
    pub config: Value,
    /// The same configuration with every default made explicit.
    pub resolved: RunConfig,
    pub trajectory_seeds: Vec<u64>,
    pub wall_clock_seconds: f64,
    pub per_trajectory_steps: Vec<u64>,
    pub summary: RunSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredEps {
    pub eps: f64,
    pub total_events: usize,
    pub any_order1: bool,
    pub any_multiple: bool,
    pub events: Vec<CollisionEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredTrajectoryEvents {
    pub index: usize,
    pub seed: u64,
    pub per_eps: Vec<StoredEps>,
}

/// `events.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventsFile {
    pub eps_grid: Vec<f64>,
    pub keep_events: usize,
    pub trajectories: Vec<StoredTrajectoryEvents>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledCounts {
    pub eps: f64,
    /// Summed over trajectories, levels `0..=count_levels`.
    pub counts: Vec<u64>,
}

/// `dimension.json`: the estimate plus pooled box counts at every eps, which
/// is all a re-analysis at another eps of the grid or another window needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionFile {
    pub horizon: f64,
    pub samples: usize,
    pub dim_eps: f64,
    pub scale_window: ScaleWindow,
    pub count_levels: usize,
    pub estimate: DimensionEstimate,
    pub pooled: Vec<PooledCounts>,
}

/// What a finished run returns.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub events: EventsFile,
    pub dimension: DimensionFile,
}

struct PathResult {
    analysis: PathAnalysis,
    stats: PathStats,
    record: Option<crate::engine::TrajectoryRecord>,
}

struct Prepared {
    rs: RootSystem,
    model: CoefficientModel,
    weights: Weights,
    x0: Vec<f64>,
}

fn prepare(cfg: &RunConfig, preset: PresetSpec) -> Result<Prepared, RunError> {
    let rs = cfg.root_system()?;
    let model = make_preset(preset, cfg.family, cfg.n).map_err(|e| RunError::Invalid(vec![e.to_string()]))?;
    let weights = cfg.weights_for(&rs)?;
    let x0 = resolve_x0(&cfg.x0, &rs, &model).map_err(|e| RunError::Invalid(vec![e]))?;
    Ok(Prepared {
        rs,
        model,
        weights,
        x0,
    })
}

fn simulate_one(cfg: &RunConfig, p: &Prepared, master: u64, index: usize) -> Result<PathResult, String> {
    let seed = trajectory_seed(master, index as u64);
    let mut rng = rng_from_seed(seed);
    let mut analyzer = PathAnalyzer::new(
        &p.rs,
        &p.weights,
        &cfg.eps_grid,
        cfg.dim_eps,
        cfg.horizon,
        cfg.count_levels,
        cfg.keep_events,
    )
    .map_err(|e| e.to_string())?;
    let mut recorder = cfg
        .trajectories
        .filter(|d| index < d.count)
        .map(|d| Recorder::new(p.rs.dim(), d.stride));
    let mut observer = |t: f64, x: &[f64], dt: f64| {
        analyzer.observe(t, x, dt);
        if let Some(r) = recorder.as_mut() {
            r.observe(t, x, dt);
        }
    };
    let stats = simulate_path(&p.model, &p.rs, &p.x0, cfg.horizon, &cfg.policy, &mut rng, &mut observer)
        .map_err(|e| e.to_string())?;
    let lineage = SeedLineage {
        master_seed: master,
        index: index as u64,
        seed,
    };
    Ok(PathResult {
        analysis: analyzer.finish(),
        stats: stats.clone(),
        record: recorder.map(|r| r.finish(lineage, stats)),
    })
}

struct Ensemble {
    summary: RunSummary,
    events: EventsFile,
    dimension: DimensionFile,
    seeds: Vec<u64>,
    steps: Vec<u64>,
    records: Vec<crate::engine::TrajectoryRecord>,
}

fn assemble(
    cfg: &RunConfig,
    preset: PresetSpec,
    p: &Prepared,
    master: u64,
    results: Vec<Result<PathResult, String>>,
) -> Result<Ensemble, RunError> {
    let grid = interior_grid(&p.rs, &p.model, cfg.predictor_grid, master);
    let predictor = dimension_bound_predictor(&p.model, &p.rs, &grid).map_err(|e| RunError::Numerical(e.to_string()))?;

    let seeds: Vec<u64> = (0..cfg.ensemble).map(|i| trajectory_seed(master, i as u64)).collect();
    let mut failures = Vec::new();
    let mut analyses = Vec::new();
    let mut totals = StepTotals::default();
    let mut steps = Vec::with_capacity(cfg.ensemble);
    let mut exploded = 0;
    let mut records = Vec::new();
    let mut stored = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(r) => {
                totals.add(&r.stats);
                steps.push(r.stats.accepted);
                exploded += r.stats.explosion_time.is_some() as usize;
                stored.push(StoredTrajectoryEvents {
                    index: i,
                    seed: seeds[i],
                    per_eps: r
                        .analysis
                        .per_eps
                        .iter()
                        .map(|s| StoredEps {
                            eps: s.eps,
                            total_events: s.total_events,
                            any_order1: s.any_order1,
                            any_multiple: s.any_multiple,
                            events: s.events.clone(),
                        })
                        .collect(),
                });
                records.extend(r.record);
                analyses.push(r.analysis);
            }
            Err(error) => {
                steps.push(0);
                failures.push(TrajectoryFailure {
                    index: i,
                    seed: seeds[i],
                    error,
                });
            }
        }
    }
    if analyses.is_empty() {
        return Err(RunError::Numerical(format!(
            "all {} trajectories failed; first error: {}",
            cfg.ensemble,
            failures.first().map(|f| f.error.as_str()).unwrap_or("none")
        )));
    }

    let rates = collision_rates(&analyses, &cfg.eps_grid).map_err(|e| RunError::Numerical(e.to_string()))?;
    let finest = *cfg.eps_grid.last().expect("validated non-empty");
    let event_rate = analyses
        .iter()
        .filter(|a| a.per_eps.iter().any(|s| s.eps == finest && s.total_events > 0))
        .count() as f64
        / analyses.len() as f64;

    // pooled counts for the grid eps and dim_eps (which may be extra)
    let mut pooled: Vec<PooledCounts> = analyses[0]
        .per_eps
        .iter()
        .map(|s| PooledCounts {
            eps: s.eps,
            counts: vec![0; cfg.count_levels + 1],
        })
        .collect();
    for a in &analyses {
        for (pc, s) in pooled.iter_mut().zip(&a.per_eps) {
            for (c, v) in pc.counts.iter_mut().zip(&s.box_counts) {
                *c += v;
            }
        }
    }
    let dim_counts = &pooled
        .iter()
        .find(|pc| pc.eps == cfg.dim_eps)
        .expect("dim eps is always analysed")
        .counts;
    let estimate = dimension_from_counts(dim_counts, analyses.len(), cfg.horizon, cfg.scale_window)
        .map_err(|e| RunError::Numerical(e.to_string()))?;
    let min_projection = analyses.iter().map(|a| a.min_value).fold(f64::INFINITY, f64::min);

    let summary = RunSummary {
        format: SUMMARY_FORMAT.into(),
        family: cfg.family,
        n: cfg.n,
        preset,
        horizon: cfg.horizon,
        x0: p.x0.clone(),
        ensemble: cfg.ensemble,
        seed: master,
        completed: analyses.len(),
        failures,
        exploded,
        event_rate,
        rates,
        dimension: DimensionSummary {
            eps: cfg.dim_eps,
            estimate: estimate.clone(),
        },
        predictor,
        steps: totals,
        min_projection,
    };
    Ok(Ensemble {
        summary,
        events: EventsFile {
            eps_grid: cfg.eps_grid.clone(),
            keep_events: cfg.keep_events,
            trajectories: stored,
        },
        dimension: DimensionFile {
            horizon: cfg.horizon,
            samples: analyses.len(),
            dim_eps: cfg.dim_eps,
            scale_window: cfg.scale_window,
            count_levels: cfg.count_levels,
            estimate,
            pooled,
        },
        seeds,
        steps,
        records,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| RunError::Numerical(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| RunError::io(path, e))
}

fn create_dir(dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))
}

/// Runs the ensemble and writes the run directory `dir`.
///
/// `raw` is the configuration document as given; it is echoed verbatim into
/// the manifest.
pub fn run_simulate(cfg: &RunConfig, raw: &Value, dir: &Path) -> Result<RunOutcome, RunError> {
    let start = Instant::now();
    let p = prepare(cfg, cfg.preset)?;
    let results = par_map_indexed(cfg.ensemble, cfg.workers, |i| simulate_one(cfg, &p, cfg.seed, i));
    let ens = assemble(cfg, cfg.preset, &p, cfg.seed, results)?;

    create_dir(dir)?;
    if !ens.records.is_empty() {
        let tdir = dir.join("trajectories");
        create_dir(&tdir)?;
        for rec in &ens.records {
            let path = tdir.join(format!("traj_{:05}.csv", rec.lineage.index));
            fs::write(&path, rec.to_csv(&p.rs)).map_err(|e| RunError::io(&path, e))?;
        }
    }
    let manifest = RunManifest {
        manifest_format: MANIFEST_FORMAT.into(),
        toolkit_version: TOOLKIT_VERSION.into(),
        config: raw.clone(),
        resolved: cfg.clone(),
        trajectory_seeds: ens.seeds,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        per_trajectory_steps: ens.steps,
        summary: ens.summary,
    };
    // bulky and machine-oriented: compact
    let events = dir.join("events.json");
    let text = serde_json::to_string(&ens.events).map_err(|e| RunError::Numerical(e.to_string()))?;
    fs::write(&events, text + "\n").map_err(|e| RunError::io(&events, e))?;
    write_json(&dir.join("dimension.json"), &ens.dimension)?;
    write_json(&dir.join("summary.json"), &manifest.summary)?;
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(RunOutcome {
        dir: dir.to_path_buf(),
        manifest,
        events: ens.events,
        dimension: ens.dimension,
    })
}

/// One row of a sweep table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub point: usize,
    pub seed: u64,
    pub params: BTreeMap<String, f64>,
    pub predicted: f64,
    pub lower: Option<f64>,
    pub upper: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub status: crate::analytics::EstimateStatus,
    pub event_rate: f64,
    pub rates: Vec<ScalingRow>,
    pub completed: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    pub format: String,
    pub toolkit_version: String,
    pub config: Value,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("point");
        let names: Vec<String> = self
            .rows
            .first()
            .map(|r| r.params.keys().cloned().collect())
            .unwrap_or_default();
        for n in &names {
            s.push_str(&format!(",{n}"));
        }
        s.push_str(",predicted,lower,upper,estimate,stderr,status,event_rate");
        if let Some(r) = self.rows.first() {
            for row in &r.rates {
                s.push_str(&format!(",order1_rate@{e:e},multiple_rate@{e:e}", e = row.eps));
            }
        }
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.point.to_string());
            for n in &names {
                s.push_str(&format!(",{}", r.params[n]));
            }
            let lower = r.lower.map(|l| l.to_string()).unwrap_or_default();
            let status = serde_json::to_value(r.status)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default();
            s.push_str(&format!(
                ",{},{lower},{},{},{},{status},{}",
                r.predicted, r.upper, r.estimate, r.stderr, r.event_rate
            ));
            for row in &r.rates {
                s.push_str(&format!(",{},{}", row.order1_rate, row.multiple_rate));
            }
            s.push('\n');
        }
        s
    }
}

/// Runs every grid point of `cfg.sweep` and writes `sweep.csv`,
/// `sweep.json` and `manifest.json` into `dir`.
///
/// Point `p` uses master seed `point_seed(seed, p)`; trajectories of all
/// points run in one parallel pool.
pub fn run_sweep(cfg: &RunConfig, raw: &Value, dir: &Path) -> Result<SweepTable, RunError> {
    let start = Instant::now();
    let points = cfg.points().map_err(RunError::Invalid)?;
    let prepared = points
        .iter()
        .map(|(_, preset)| prepare(cfg, *preset))
        .collect::<Result<Vec<_>, _>>()?;
    let masters: Vec<u64> = (0..points.len()).map(|p| point_seed(cfg.seed, p as u64)).collect();
    let per = cfg.ensemble;
    let mut flat = par_map_indexed(points.len() * per, cfg.workers, |j| {
        let (p, i) = (j / per, j % per);
        simulate_one(cfg, &prepared[p], masters[p], i)
    });
    let mut rows = Vec::with_capacity(points.len());
    for (p, (assign, preset)) in points.iter().enumerate().rev() {
        let results = flat.split_off(p * per);
        let ens = assemble(cfg, *preset, &prepared[p], masters[p], results)?;
        let s = ens.summary;
        rows.push(SweepRow {
            point: p,
            seed: masters[p],
            params: if assign.is_empty() {
                preset_values(preset).into_iter().map(|(k, v)| (k.to_string(), v)).collect()
            } else {
                assign.iter().cloned().collect()
            },
            predicted: s.predictor.point(),
            lower: s.predictor.lower,
            upper: s.predictor.upper,
            estimate: s.dimension.estimate.value,
            stderr: s.dimension.estimate.stderr,
            status: s.dimension.estimate.status,
            event_rate: s.event_rate,
            rates: s.rates,
            completed: s.completed,
            failures: s.failures.len(),
        });
    }
    rows.reverse();
    let table = SweepTable {
        format: "weylsim.sweep.v1".into(),
        toolkit_version: TOOLKIT_VERSION.into(),
        config: raw.clone(),
        rows,
    };
    create_dir(dir)?;
    let csv = dir.join("sweep.csv");
    fs::write(&csv, table.to_csv()).map_err(|e| RunError::io(&csv, e))?;
    write_json(&dir.join("sweep.json"), &table)?;
    write_json(
        &dir.join("manifest.json"),
        &serde_json::json!({
            "manifest_format": MANIFEST_FORMAT,
            "toolkit_version": TOOLKIT_VERSION,
            "config": raw,
            "resolved": cfg,
            "point_seeds": masters,
            "wall_clock_seconds": start.elapsed().as_secs_f64(),
        }),
    )?;
    Ok(table)
}

/// Result of re-analysing a run directory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reanalysis {
    pub run_dir: PathBuf,
    pub eps: f64,
    pub estimate: DimensionEstimate,
    /// eps values with stored counts.
    pub available_eps: Vec<f64>,
    pub count_levels: usize,
}

/// Recomputes the dimension estimate of a finished run at another eps of its
/// grid and/or another scale window, from the pooled counts in
/// `dimension.json`.
pub fn reanalyze_dimension(
    run_dir: &Path,
    eps: Option<f64>,
    window: Option<ScaleWindow>,
) -> Result<Reanalysis, RunError> {
    let path = run_dir.join("dimension.json");
    let text = fs::read_to_string(&path).map_err(|e| RunError::io(&path, e))?;
    let file: DimensionFile = serde_json::from_str(&text).map_err(|e| RunError::Parse {
        path: path.clone(),
        message: e.to_string(),
    })?;
    let eps = eps.unwrap_or(file.dim_eps);
    let available: Vec<f64> = file.pooled.iter().map(|p| p.eps).collect();
    let counts = file
        .pooled
        .iter()
        .find(|p| ((p.eps - eps) / eps).abs() < 1e-9)
        .ok_or_else(|| {
            RunError::Invalid(vec![format!(
                "no stored counts at eps = {eps}; this run has counts at {available:?} (re-run with that eps in eps_grid)"
            )])
        })?;
    let window = window.unwrap_or(file.scale_window);
    if window.max_level > file.count_levels {
        return Err(RunError::Invalid(vec![format!(
            "window reaches level {} but counts were stored up to level {}",
            window.max_level, file.count_levels
        )]));
    }
    let estimate = dimension_from_counts(&counts.counts, file.samples, file.horizon, window)
        .map_err(|e| RunError::Invalid(vec![e.to_string()]))?;
    Ok(Reanalysis {
        run_dir: run_dir.to_path_buf(),
        eps: counts.eps,
        estimate,
        available_eps: available,
        count_levels: file.count_levels,
    })
}
