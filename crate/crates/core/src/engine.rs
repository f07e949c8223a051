//! Euler–Maruyama integration of the particle SDE inside the closed Weyl
//! chamber.
//!
//! The step size adapts to the smallest gap,
//! `dt = clamp(c * (gap^2)^p, dt_min, dt_max)`, where the gap of a root is
//! `<x, alpha>` measured in units of the local diffusion along `alpha`
//! (for `sigma = 1` this is just `<x, alpha>`), and distances to finite
//! domain walls count as gaps too.
//!
//! A proposal that leaves the chamber is rejected and the step is halved.
//! Halving splits the already drawn Brownian increment with a Brownian
//! bridge, so a rejected step refines the same noise path instead of
//! discarding it. Only at `dt_min` is fresh noise drawn, with a retry
//! budget. States that land exactly on a wall are pushed back inside by a
//! deterministic sub-step using only the repulsive drift.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::CoefficientModel;
use crate::roots::RootSystem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("drift is singular at the boundary: <x, alpha> = {projection} for root #{root}")]
    SingularDrift { root: usize, projection: f64 },
    #[error("stuck at t = {t}: {retries} consecutive rejections at dt_min (state {x:?})")]
    StuckStep { t: f64, x: Vec<f64>, retries: usize },
    #[error("start point {x:?} is outside the closed chamber or domain")]
    StartOutside { x: Vec<f64> },
    #[error("boundary entry failed after {0} sub-steps")]
    EntryFailed(usize),
    #[error("invalid step policy: {0}")]
    InvalidPolicy(String),
    #[error("state has {got} coordinates, the root system has {expected}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WallMode {
    RejectAndHalve,
    ProjectToBoundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepPolicy {
    pub dt_max: f64,
    pub dt_min: f64,
    /// Safety factor `c`.
    pub safety: f64,
    /// Exponent `p` applied to the squared gap.
    pub gap_exponent: f64,
    pub wall_mode: WallMode,
    /// Accepted states satisfy `<x, alpha> >= -wall_tol`.
    pub wall_tol: f64,
    /// Pseudo-gap floor for the boundary entry sub-step.
    pub entry_eps: f64,
    pub explosion_radius: f64,
    /// Consecutive rejections tolerated at `dt_min` before giving up.
    pub retry_budget: usize,
}

impl Default for StepPolicy {
    fn default() -> Self {
        Self {
            dt_max: 1e-3,
            dt_min: 1e-10,
            safety: 0.1,
            gap_exponent: 1.0,
            wall_mode: WallMode::RejectAndHalve,
            wall_tol: 0.0,
            entry_eps: 1e-8,
            explosion_radius: 1e6,
            retry_budget: 10_000,
        }
    }
}

impl StepPolicy {
    pub fn with_dt_max(dt_max: f64) -> Self {
        Self {
            dt_max,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::InvalidPolicy(m.to_string()));
        if !(self.dt_min > 0.0) {
            return bad("dt_min must be positive");
        }
        if !(self.dt_max >= self.dt_min) || !self.dt_max.is_finite() {
            return bad("dt_max must be finite and >= dt_min");
        }
        if !(self.safety > 0.0) || !(self.gap_exponent > 0.0) {
            return bad("safety factor and gap exponent must be positive");
        }
        if !(self.wall_tol >= 0.0) || !(self.entry_eps > 0.0) || !(self.explosion_radius > 0.0) {
            return bad("wall_tol >= 0, entry_eps > 0 and explosion_radius > 0 are required");
        }
        Ok(())
    }

    /// Step size for a given squared (diffusion-normalized) gap.
    #[inline]
    pub fn adaptive_dt(&self, gap_sq: f64) -> f64 {
        let raw = if self.gap_exponent == 1.0 {
            self.safety * gap_sq
        } else {
            self.safety * gap_sq.powf(self.gap_exponent)
        };
        raw.clamp(self.dt_min, self.dt_max)
    }
}

/// Outcome of a single proposal.
#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Accepted(Vec<f64>),
    Rejected(Vec<f64>),
}

/// Receives the path as it is generated: once at `t = 0` with `dt = 0`, then
/// after every accepted step.
pub trait PathObserver {
    fn observe(&mut self, t: f64, x: &[f64], dt: f64);
}

impl<F: FnMut(f64, &[f64], f64)> PathObserver for F {
    fn observe(&mut self, t: f64, x: &[f64], dt: f64) {
        self(t, x, dt)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PathStats {
    pub accepted: u64,
    pub rejected: u64,
    /// Fresh-noise redraws at `dt_min`.
    pub floor_resamples: u64,
    pub entry_substeps: u64,
    pub projections: u64,
    pub smallest_dt: f64,
    pub final_t: f64,
    /// Time at which `|x|` exceeded the explosion radius.
    pub explosion_time: Option<f64>,
}

/// `sum_alpha k_alpha(x) alpha_i / <x, alpha>` plus `b(x_i)`, written into `out`.
///
/// Gaps are floored at `floor`; in strict mode a non-positive gap is an
/// error instead.
fn drift_into(
    model: &CoefficientModel,
    rs: &RootSystem,
    x: &[f64],
    floor: f64,
    strict: bool,
    include_b: bool,
    out: &mut [f64],
) -> Result<(), EngineError> {
    for (o, &xi) in out.iter_mut().zip(x) {
        *o = if include_b { model.drift_b(xi) } else { 0.0 };
    }
    for (a, r) in rs.sparse_roots().iter().enumerate() {
        let mut p = r.dot(x);
        if strict && !(p > 0.0) {
            return Err(EngineError::SingularDrift {
                root: a,
                projection: p,
            });
        }
        p = p.max(floor);
        let k = model.coupling(a, r, x);
        let s = k / p;
        for (i, c) in r.entries() {
            out[i] += s * c;
        }
    }
    Ok(())
}

/// Squared gap of the configuration in diffusion units (roots and walls).
pub fn gap_sq(model: &CoefficientModel, rs: &RootSystem, x: &[f64]) -> f64 {
    let unit = model.has_unit_sigma();
    let mut g = f64::INFINITY;
    for r in rs.sparse_roots() {
        let p = r.dot(x);
        let v = if unit {
            p * p
        } else {
            let d: f64 = r.entries().map(|(i, c)| c * c * model.sigma(x[i]).powi(2)).sum();
            if d > 0.0 {
                p * p * r.norm_sq() / d
            } else if p == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        };
        g = g.min(v);
    }
    let dom = model.domain();
    if dom.is_bounded_below() || dom.is_bounded_above() {
        for &xi in x {
            let d = (xi - dom.lower).min(dom.upper - xi);
            let s2 = model.sigma(xi).powi(2);
            let v = if s2 > 0.0 { d * d / s2 } else { 0.0 };
            g = g.min(if d <= 0.0 { 0.0 } else { v });
        }
    }
    g
}

/// Whether `x` lies in the closed chamber (up to `tol`) and in the domain.
pub fn is_admissible(model: &CoefficientModel, rs: &RootSystem, x: &[f64], tol: f64) -> bool {
    admissible(model, rs, x, tol)
}

fn admissible(model: &CoefficientModel, rs: &RootSystem, x: &[f64], tol: f64) -> bool {
    let dom = model.domain();
    x.iter().all(|v| v.is_finite() && dom.contains(*v))
        && rs.sparse_roots().iter().all(|r| r.dot(x) >= -tol)
}

fn on_wall(rs: &RootSystem, x: &[f64]) -> bool {
    rs.sparse_roots().iter().any(|r| r.dot(x) <= 0.0)
}

/// Euler–Maruyama proposal from `x` with Brownian increment `dw` over `h`.
///
/// Gaps below `gap_floor` enter the drift as `gap_floor`: once a gap is far
/// below the noise scale of the smallest step, the raw `k / gap` drift
/// would throw the state across the opposite walls.
#[allow(clippy::too_many_arguments)]
fn propose(
    model: &CoefficientModel,
    rs: &RootSystem,
    x: &[f64],
    h: f64,
    dw: &[f64],
    gap_floor: f64,
    drift: &mut [f64],
    out: &mut [f64],
) -> Result<(), EngineError> {
    drift_into(model, rs, x, gap_floor, true, true, drift)?;
    let unit = model.has_unit_sigma();
    for i in 0..x.len() {
        let s = if unit { 1.0 } else { model.sigma(x[i]) };
        out[i] = x[i] + s * dw[i] + drift[i] * h;
    }
    Ok(())
}

/// One Euler–Maruyama step with standard normal `noise`. The proposal is
/// returned as accepted when it stays in the closed chamber (within the
/// policy's wall tolerance) and in the domain.
pub fn advance_step(
    x: &[f64],
    model: &CoefficientModel,
    rs: &RootSystem,
    dt: f64,
    noise: &[f64],
    policy: &StepPolicy,
) -> Result<StepOutcome, EngineError> {
    if x.len() != rs.dim() || noise.len() != rs.dim() {
        return Err(EngineError::Dimension {
            expected: rs.dim(),
            got: x.len().min(noise.len()),
        });
    }
    let sq = dt.sqrt();
    let dw: Vec<f64> = noise.iter().map(|z| z * sq).collect();
    let mut drift = vec![0.0; x.len()];
    let mut out = vec![0.0; x.len()];
    propose(model, rs, x, dt, &dw, 0.0, &mut drift, &mut out)?;
    if admissible(model, rs, &out, policy.wall_tol) {
        Ok(StepOutcome::Accepted(out))
    } else {
        Ok(StepOutcome::Rejected(out))
    }
}

/// Deterministic push off the walls: `x += h * sum k_alpha alpha / max(<x,alpha>, eps)`
/// with `h = eps^2`. Returns the step used.
pub fn boundary_entry_substep(
    model: &CoefficientModel,
    rs: &RootSystem,
    x: &mut [f64],
    eps: f64,
) -> f64 {
    let mut drift = vec![0.0; x.len()];
    drift_into(model, rs, x, eps, false, false, &mut drift).expect("floored drift is finite");
    let h = eps * eps;
    for (xi, d) in x.iter_mut().zip(&drift) {
        *xi += h * d;
    }
    h
}

/// Dykstra's alternating projection onto the closed chamber, i.e. the
/// intersection of the simple-root half-spaces, then clamped to the domain.
pub fn project_to_chamber(model: &CoefficientModel, rs: &RootSystem, x: &mut [f64]) {
    let simple: Vec<_> = rs.simple_indices().iter().map(|&s| rs.sparse_roots()[s]).collect();
    let mut incr = vec![vec![0.0; x.len()]; simple.len()];
    let mut tmp = vec![0.0; x.len()];
    for _ in 0..500 {
        let mut change = 0.0f64;
        for (s, r) in simple.iter().enumerate() {
            for i in 0..x.len() {
                tmp[i] = x[i] + incr[s][i];
            }
            let p = r.dot(&tmp);
            let shift = if p < 0.0 { p / r.norm_sq() } else { 0.0 };
            for i in 0..x.len() {
                let mut nx = tmp[i];
                for (j, c) in r.entries() {
                    if j == i {
                        nx -= shift * c;
                    }
                }
                incr[s][i] = tmp[i] - nx;
                change = change.max((nx - x[i]).abs());
                x[i] = nx;
            }
        }
        if change < 1e-15 {
            break;
        }
    }
    let dom = model.domain();
    for v in x.iter_mut() {
        *v = v.clamp(dom.lower, dom.upper);
    }
    // rounding can leave a projection at -1e-17; snap it to the wall
    for r in &simple {
        if r.dot(x) < 0.0 {
            let shift = r.dot(x) / r.norm_sq();
            for (j, c) in r.entries() {
                x[j] -= shift * c;
            }
        }
    }
}

struct Segment {
    h: f64,
    dw: Vec<f64>,
}

fn split<R: Rng>(seg: Segment, rng: &mut R, stack: &mut Vec<Segment>) {
    let h2 = 0.5 * seg.h;
    let sd = 0.5 * seg.h.sqrt();
    let first: Vec<f64> = seg
        .dw
        .iter()
        .map(|w| 0.5 * w + sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let second: Vec<f64> = seg.dw.iter().zip(&first).map(|(w, f)| w - f).collect();
    stack.push(Segment { h: h2, dw: second });
    stack.push(Segment { h: h2, dw: first });
}

fn fresh<R: Rng>(h: f64, n: usize, rng: &mut R) -> Segment {
    let sd = h.sqrt();
    Segment {
        h,
        dw: (0..n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect(),
    }
}

/// Integrates one path over `[0, horizon]`, streaming states to `observer`.
pub fn simulate_path<R: Rng, O: PathObserver>(
    model: &CoefficientModel,
    rs: &RootSystem,
    x0: &[f64],
    horizon: f64,
    policy: &StepPolicy,
    rng: &mut R,
    observer: &mut O,
) -> Result<PathStats, EngineError> {
    policy.validate()?;
    let n = rs.dim();
    if x0.len() != n {
        return Err(EngineError::Dimension {
            expected: n,
            got: x0.len(),
        });
    }
    if !admissible(model, rs, x0, policy.wall_tol) {
        return Err(EngineError::StartOutside { x: x0.to_vec() });
    }
    let mut stats = PathStats {
        smallest_dt: f64::INFINITY,
        ..PathStats::default()
    };
    let mut x = x0.to_vec();
    let mut t = 0.0;
    observer.observe(t, &x, 0.0);
    if horizon <= 0.0 {
        stats.smallest_dt = 0.0;
        return Ok(stats);
    }

    let enter = |x: &mut Vec<f64>, t: &mut f64, stats: &mut PathStats, obs: &mut O| {
        let mut count = 0;
        while on_wall(rs, x) {
            if count >= 64 {
                return Err(EngineError::EntryFailed(count));
            }
            let h = boundary_entry_substep(model, rs, x, policy.entry_eps);
            *t += h;
            count += 1;
            stats.entry_substeps += 1;
            obs.observe(*t, x, h);
        }
        Ok(())
    };
    enter(&mut x, &mut t, &mut stats, observer)?;

    let mut stack: Vec<Segment> = Vec::new();
    let mut drift = vec![0.0; n];
    let mut prop = vec![0.0; n];
    let mut floor_retries = 0usize;
    let r2 = policy.explosion_radius * policy.explosion_radius;

    while t < horizon {
        let remaining = horizon - t;
        let target = policy.adaptive_dt(gap_sq(model, rs, &x));
        let seg = match stack.pop() {
            Some(s) => s,
            None => fresh(target.min(remaining), n, rng),
        };
        if seg.h > target * (1.0 + 1e-12) && 0.5 * seg.h >= policy.dt_min {
            split(seg, rng, &mut stack);
            continue;
        }
        propose(model, rs, &x, seg.h, &seg.dw, policy.entry_eps, &mut drift, &mut prop)?;
        let mut accepted = admissible(model, rs, &prop, policy.wall_tol);
        if !accepted {
            stats.rejected += 1;
            if 0.5 * seg.h >= policy.dt_min {
                split(seg, rng, &mut stack);
                continue;
            }
            if policy.wall_mode == WallMode::ProjectToBoundary {
                project_to_chamber(model, rs, &mut prop);
                stats.projections += 1;
                accepted = true;
            } else {
                floor_retries += 1;
                stats.floor_resamples += 1;
                if floor_retries > policy.retry_budget {
                    return Err(EngineError::StuckStep {
                        t,
                        x: x.clone(),
                        retries: floor_retries - 1,
                    });
                }
                stack.push(fresh(seg.h, n, rng));
                continue;
            }
        }
        debug_assert!(accepted);
        floor_retries = 0;
        x.copy_from_slice(&prop);
        // snap the last step onto the horizon
        t = if seg.h >= remaining * (1.0 - 1e-12) && stack.is_empty() {
            horizon
        } else {
            t + seg.h
        };
        stats.accepted += 1;
        stats.smallest_dt = stats.smallest_dt.min(seg.h);
        observer.observe(t, &x, seg.h);
        if x.iter().map(|v| v * v).sum::<f64>() > r2 {
            stats.explosion_time = Some(t);
            break;
        }
        if on_wall(rs, &x) {
            stack.clear();
            enter(&mut x, &mut t, &mut stats, observer)?;
        }
    }
    stats.final_t = t;
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedLineage {
    pub master_seed: u64,
    pub index: u64,
    pub seed: u64,
}

/// A stored (optionally thinned) path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub n: usize,
    pub times: Vec<f64>,
    /// Row-major, `n` coordinates per sample.
    pub states: Vec<f64>,
    /// Step that led to each sample (0 for the start).
    pub step_sizes: Vec<f64>,
    pub lineage: SeedLineage,
    /// Explosion flagged before the horizon.
    pub exploded: bool,
    pub stats: PathStats,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.n..(i + 1) * self.n]
    }

    pub fn horizon(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// CSV with header `t,x_1..x_N,dt,min_gap`.
    pub fn to_csv(&self, rs: &RootSystem) -> String {
        let mut s = String::from("t");
        for i in 1..=self.n {
            s.push_str(&format!(",x_{i}"));
        }
        s.push_str(",dt,min_gap\n");
        for i in 0..self.len() {
            s.push_str(&format!("{:e}", self.times[i]));
            for v in self.state(i) {
                s.push_str(&format!(",{v:e}"));
            }
            s.push_str(&format!(",{:e},{:e}\n", self.step_sizes[i], rs.min_projection(self.state(i))));
        }
        s
    }

    /// Parses the CSV written by [`to_csv`](Self::to_csv).
    pub fn from_csv(text: &str, lineage: SeedLineage) -> Result<Self, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty trajectory file")?;
        let cols = header.split(',').count();
        if cols < 4 {
            return Err(format!("unexpected trajectory header `{header}`"));
        }
        let n = cols - 3;
        let mut rec = TrajectoryRecord {
            n,
            times: vec![],
            states: vec![],
            step_sizes: vec![],
            lineage,
            exploded: false,
            stats: PathStats::default(),
        };
        for (ln, line) in lines.enumerate() {
            let vals: Result<Vec<f64>, _> = line.split(',').map(str::parse::<f64>).collect();
            let vals = vals.map_err(|e| format!("line {}: {e}", ln + 2))?;
            if vals.len() != cols {
                return Err(format!("line {}: expected {cols} fields", ln + 2));
            }
            rec.times.push(vals[0]);
            rec.states.extend_from_slice(&vals[1..=n]);
            rec.step_sizes.push(vals[n + 1]);
        }
        Ok(rec)
    }
}

/// Observer that stores every `stride`-th sample (and always the last one).
pub struct Recorder {
    stride: usize,
    seen: usize,
    n: usize,
    pending: Option<(f64, Vec<f64>, f64)>,
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub step_sizes: Vec<f64>,
}

impl Recorder {
    pub fn new(n: usize, stride: usize) -> Self {
        Self {
            stride: stride.max(1),
            seen: 0,
            n,
            pending: None,
            times: vec![],
            states: vec![],
            step_sizes: vec![],
        }
    }

    fn push(&mut self, t: f64, x: &[f64], dt: f64) {
        self.times.push(t);
        self.states.extend_from_slice(x);
        self.step_sizes.push(dt);
    }

    pub fn finish(mut self, lineage: SeedLineage, stats: PathStats) -> TrajectoryRecord {
        if let Some((t, x, dt)) = self.pending.take() {
            self.push(t, &x, dt);
        }
        TrajectoryRecord {
            n: self.n,
            times: self.times,
            states: self.states,
            step_sizes: self.step_sizes,
            lineage,
            exploded: stats.explosion_time.is_some(),
            stats,
        }
    }
}

impl PathObserver for Recorder {
    fn observe(&mut self, t: f64, x: &[f64], dt: f64) {
        if self.seen.is_multiple_of(self.stride) {
            self.push(t, x, dt);
            self.pending = None;
        } else {
            self.pending = Some((t, x.to_vec(), dt));
        }
        self.seen += 1;
    }
}

/// Simulates and stores a full trajectory (stride 1).
pub fn simulate_trajectory(
    model: &CoefficientModel,
    rs: &RootSystem,
    x0: &[f64],
    horizon: f64,
    policy: &StepPolicy,
    lineage: SeedLineage,
) -> Result<TrajectoryRecord, EngineError> {
    simulate_trajectory_thinned(model, rs, x0, horizon, policy, lineage, 1)
}

pub fn simulate_trajectory_thinned(
    model: &CoefficientModel,
    rs: &RootSystem,
    x0: &[f64],
    horizon: f64,
    policy: &StepPolicy,
    lineage: SeedLineage,
    stride: usize,
) -> Result<TrajectoryRecord, EngineError> {
    let mut rng = crate::seeding::rng_from_seed(lineage.seed);
    let mut rec = Recorder::new(rs.dim(), stride);
    let stats = simulate_path(model, rs, x0, horizon, policy, &mut rng, &mut rec)?;
    Ok(rec.finish(lineage, stats))
}

/// Fixed-grid Euler–Maruyama driven by caller-supplied increments; used for
/// strong-convergence checks where several step sizes share one noise path.
/// Returns `None` if the path leaves the chamber.
pub fn fixed_grid_path(
    model: &CoefficientModel,
    rs: &RootSystem,
    x0: &[f64],
    h: f64,
    increments: &[Vec<f64>],
) -> Result<Option<Vec<f64>>, EngineError> {
    let n = rs.dim();
    let mut x = x0.to_vec();
    let mut drift = vec![0.0; n];
    let mut prop = vec![0.0; n];
    for dw in increments {
        propose(model, rs, &x, h, dw, 0.0, &mut drift, &mut prop)?;
        if !admissible(model, rs, &prop, 0.0) || on_wall(rs, &prop) {
            return Ok(None);
        }
        x.copy_from_slice(&prop);
    }
    Ok(Some(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{make_preset, PresetSpec};
    use crate::roots::Family;
    use crate::seeding::rng_from_seed;
    use approx::assert_relative_eq;

    fn lineage(seed: u64) -> SeedLineage {
        SeedLineage {
            master_seed: 0,
            index: 0,
            seed,
        }
    }

    #[test]
    fn hand_evaluated_dyson_step() {
        let rs = RootSystem::build(Family::A, 2).unwrap();
        let m = CoefficientModel::dyson(1.0, 2).unwrap();
        let out = advance_step(&[-1.0, 1.0], &m, &rs, 0.01, &[0.0, 0.0], &StepPolicy::default()).unwrap();
        match out {
            StepOutcome::Accepted(x) => {
                assert_relative_eq!(x[0], -1.005, epsilon = 1e-15);
                assert_relative_eq!(x[1], 1.005, epsilon = 1e-15);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tiny_coupling_no_noise_is_still() {
        let rs = RootSystem::build(Family::A, 3).unwrap();
        let m = CoefficientModel::dyson(1e-12, 3).unwrap();
        let x0 = [0.0, 1.0, 2.5];
        let StepOutcome::Accepted(x) = advance_step(&x0, &m, &rs, 0.1, &[0.0; 3], &StepPolicy::default()).unwrap() else {
            panic!()
        };
        for (a, b) in x.iter().zip(&x0) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn crossing_proposal_is_rejected() {
        let rs = RootSystem::build(Family::A, 2).unwrap();
        let m = CoefficientModel::dyson(0.1, 2).unwrap();
        let out = advance_step(&[0.0, 0.1], &m, &rs, 0.01, &[5.0, -5.0], &StepPolicy::default()).unwrap();
        assert!(matches!(out, StepOutcome::Rejected(_)));
    }

    #[test]
    fn boundary_state_is_singular() {
        let rs = RootSystem::build(Family::A, 2).unwrap();
        let m = CoefficientModel::dyson(0.5, 2).unwrap();
        assert!(matches!(
            advance_step(&[1.0, 1.0], &m, &rs, 0.01, &[0.0; 2], &StepPolicy::default()),
            Err(EngineError::SingularDrift { .. })
        ));
    }

    #[test]
    fn zero_horizon_keeps_only_start() {
        let rs = RootSystem::build(Family::B, 2).unwrap();
        let m = CoefficientModel::bessel_b(0.3, 0.4, 2).unwrap();
        let rec = simulate_trajectory(&m, &rs, &[0.5, 1.0], 0.0, &StepPolicy::default(), lineage(1)).unwrap();
        assert_eq!(rec.len(), 1);
        assert_eq!(rec.state(0), &[0.5, 1.0]);
    }

    #[test]
    fn path_is_reproducible_and_stays_in_chamber() {
        let rs = RootSystem::build(Family::A, 3).unwrap();
        let m = CoefficientModel::dyson(0.2, 3).unwrap();
        let p = StepPolicy::with_dt_max(1e-3);
        let a = simulate_trajectory(&m, &rs, &[-1.0, 0.0, 1.0], 1.0, &p, lineage(5)).unwrap();
        let b = simulate_trajectory(&m, &rs, &[-1.0, 0.0, 1.0], 1.0, &p, lineage(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.horizon(), 1.0);
        for i in 0..a.len() {
            assert!(rs.min_projection(a.state(i)) >= 0.0);
            if i > 0 {
                assert!(a.times[i] > a.times[i - 1]);
            }
        }
        let c = simulate_trajectory(&m, &rs, &[-1.0, 0.0, 1.0], 1.0, &p, lineage(6)).unwrap();
        assert_ne!(a.states, c.states);
    }

    #[test]
    fn start_on_boundary_enters_interior() {
        for (fam, spec, x0) in [
            (Family::A, PresetSpec::Dyson { k: 0.3 }, vec![0.0, 0.0, 0.0]),
            (Family::B, PresetSpec::BesselB { k1: 0.2, k2: 0.7 }, vec![0.0, 0.0]),
            (Family::D, PresetSpec::BesselGeneral { k: 1.0 }, vec![0.0, 0.0, 0.0]),
        ] {
            let rs = RootSystem::build(fam, x0.len()).unwrap();
            let m = make_preset(spec, fam, x0.len()).unwrap();
            let rec = simulate_trajectory(&m, &rs, &x0, 0.01, &StepPolicy::default(), lineage(2)).unwrap();
            assert!(rec.stats.entry_substeps >= 1);
            assert!(rs.min_projection(rec.state(1)) > 0.0, "{fam:?}");
        }
    }

    #[test]
    fn start_outside_rejected() {
        let rs = RootSystem::build(Family::A, 2).unwrap();
        let m = CoefficientModel::dyson(0.5, 2).unwrap();
        assert!(matches!(
            simulate_trajectory(&m, &rs, &[1.0, 0.0], 1.0, &StepPolicy::default(), lineage(0)),
            Err(EngineError::StartOutside { .. })
        ));
    }

    #[test]
    fn projection_mode_accepts_on_floor() {
        let rs = RootSystem::build(Family::A, 3).unwrap();
        let m = CoefficientModel::dyson(0.05, 3).unwrap();
        let p = StepPolicy {
            dt_min: 1e-6,
            dt_max: 1e-3,
            wall_mode: WallMode::ProjectToBoundary,
            ..StepPolicy::default()
        };
        let rec = simulate_trajectory(&m, &rs, &[0.0, 0.01, 1.0], 2.0, &p, lineage(3)).unwrap();
        for i in 0..rec.len() {
            assert!(rs.min_projection(rec.state(i)) >= 0.0);
        }
    }

    #[test]
    fn dykstra_projects_into_chamber() {
        let rs = RootSystem::build(Family::B, 3).unwrap();
        let m = CoefficientModel::bessel_b(0.5, 0.5, 3).unwrap();
        let mut x = vec![-0.3, 2.0, 1.0];
        project_to_chamber(&m, &rs, &mut x);
        assert!(rs.min_projection(&x) >= -1e-14);
        assert_relative_eq!(x[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(x[1], 1.5, epsilon = 1e-9);
        assert_relative_eq!(x[2], 1.5, epsilon = 1e-9);
    }

    #[test]
    fn explosion_flag() {
        let rs = RootSystem::build(Family::A, 2).unwrap();
        let m = CoefficientModel::dyson(0.5, 2).unwrap();
        let p = StepPolicy {
            explosion_radius: 3.0,
            ..StepPolicy::with_dt_max(1e-2)
        };
        let rec = simulate_trajectory(&m, &rs, &[-1.0, 1.0], 100.0, &p, lineage(4)).unwrap();
        assert!(rec.exploded);
        assert!(rec.horizon() < 100.0);
    }

    #[test]
    fn thinning_keeps_endpoints() {
        let rs = RootSystem::build(Family::A, 2).unwrap();
        let m = CoefficientModel::dyson(1.0, 2).unwrap();
        let p = StepPolicy::with_dt_max(1e-2);
        let full = simulate_trajectory(&m, &rs, &[-1.0, 1.0], 1.0, &p, lineage(8)).unwrap();
        let thin = simulate_trajectory_thinned(&m, &rs, &[-1.0, 1.0], 1.0, &p, lineage(8), 7).unwrap();
        assert_eq!(thin.times[0], 0.0);
        assert_eq!(thin.horizon(), full.horizon());
        assert!(thin.len() < full.len() / 5);
    }

    #[test]
    fn csv_round_trip() {
        let rs = RootSystem::build(Family::A, 3).unwrap();
        let m = CoefficientModel::dyson(0.4, 3).unwrap();
        let rec = simulate_trajectory(&m, &rs, &[-1.0, 0.0, 1.0], 0.05, &StepPolicy::default(), lineage(9)).unwrap();
        let csv = rec.to_csv(&rs);
        assert!(csv.starts_with("t,x_1,x_2,x_3,dt,min_gap\n"));
        let back = TrajectoryRecord::from_csv(&csv, rec.lineage).unwrap();
        assert_eq!(back.times, rec.times);
        assert_eq!(back.states, rec.states);
    }

    #[test]
    fn wishart_and_jacobi_stay_in_domain() {
        let rs = RootSystem::build(Family::A, 2).unwrap();
        let w = CoefficientModel::wishart(1.0, 3.0, 2).unwrap();
        let j = CoefficientModel::jacobi(1.0, 3.0, 3.0, 2).unwrap();
        for (m, x0) in [(&w, [0.2, 1.0]), (&j, [-0.5, 0.5])] {
            let mut rng = rng_from_seed(11);
            let dom = m.domain();
            let mut ok = true;
            let mut obs = |_t: f64, x: &[f64], _dt: f64| ok &= x.iter().all(|v| dom.contains(*v));
            simulate_path(m, &rs, &x0, 1.0, &StepPolicy::with_dt_max(1e-3), &mut rng, &mut obs).unwrap();
            assert!(ok);
        }
    }

    #[test]
    fn invalid_policy_rejected() {
        let p = StepPolicy {
            dt_min: 0.0,
            ..StepPolicy::default()
        };
        assert!(p.validate().is_err());
        let p = StepPolicy {
            dt_max: 1e-14,
            ..StepPolicy::default()
        };
        assert!(p.validate().is_err());
    }
}
