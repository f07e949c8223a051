//! Collision detection, multiple-collision scaling, zero sets, box-counting
//! dimension and the diffusion time change.
//!
//! Collisions are seen at a resolution `eps`: an event is a maximal time
//! interval on which the smallest weighted projection `<x, alpha>/w_alpha`
//! drops below `eps`. Event boundaries are refined by linear interpolation
//! between samples. Everything can run as a [`PathObserver`] so ensembles
//! never have to be stored.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{PathObserver, TrajectoryRecord};
use crate::models::CoefficientModel;
use crate::roots::{RootError, RootSystem, Weights};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("eps must be positive, got {0}")]
    BadEps(f64),
    #[error("ensemble is empty")]
    EmptyEnsemble,
    #[error("need at least two scales, got {0}")]
    TooFewScales(usize),
    #[error("invalid scale window: {0}")]
    BadScales(String),
    #[error("root #{0} is not simple")]
    NotSimple(usize),
    #[error(transparent)]
    Root(#[from] RootError),
}

/// Smallest and second-smallest weighted projection at one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinProjection {
    pub t: f64,
    pub root: usize,
    pub value: f64,
    pub second: f64,
}

/// Inverse weights, cached so the per-step cost is one multiply per root.
#[derive(Debug, Clone)]
struct Projector {
    inv_w: Vec<f64>,
}

impl Projector {
    fn new(rs: &RootSystem, w: &Weights) -> Result<Self, AnalyticsError> {
        w.check_for(rs)?;
        Ok(Self {
            inv_w: w.as_slice().iter().map(|w| 1.0 / w).collect(),
        })
    }

    #[inline]
    fn min2(&self, rs: &RootSystem, x: &[f64]) -> (usize, f64, f64) {
        let (mut arg, mut m1, mut m2) = (0, f64::INFINITY, f64::INFINITY);
        for (a, (r, iw)) in rs.sparse_roots().iter().zip(&self.inv_w).enumerate() {
            let p = r.dot(x) * iw;
            if p < m1 {
                m2 = m1;
                m1 = p;
                arg = a;
            } else if p < m2 {
                m2 = p;
            }
        }
        (arg, m1, m2)
    }

    #[inline]
    fn count_below(&self, rs: &RootSystem, x: &[f64], eps: f64, out: &mut Vec<usize>) {
        out.clear();
        for (a, (r, iw)) in rs.sparse_roots().iter().zip(&self.inv_w).enumerate() {
            if r.dot(x) * iw < eps {
                out.push(a);
            }
        }
    }
}

pub fn min_projection_series(
    traj: &TrajectoryRecord,
    rs: &RootSystem,
    w: &Weights,
) -> Result<Vec<MinProjection>, AnalyticsError> {
    let p = Projector::new(rs, w)?;
    Ok((0..traj.len())
        .map(|i| {
            let (root, value, second) = p.min2(rs, traj.state(i));
            MinProjection {
                t: traj.times[i],
                root,
                value,
                second,
            }
        })
        .collect())
}

/// A detected approach to the chamber boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub t_in: f64,
    pub t_out: f64,
    /// Sample time of the smallest projection inside the event.
    pub t_min: f64,
    pub min_value: f64,
    /// Positive-root index of the argmin at `t_min`.
    pub min_root: usize,
    /// Roots with projection below eps at `t_min`.
    pub small_roots: Vec<usize>,
    /// Number of projections below eps at `t_min`.
    pub order: usize,
    /// Largest number of simultaneously small projections during the event.
    pub peak_order: usize,
    /// Second-smallest minus smallest projection at `t_min`.
    pub second_gap: f64,
    /// `(n, t)`: first time inside the event at which at least `M - n + 1`
    /// projections were below eps.
    pub tau: Vec<(usize, f64)>,
}

/// Streaming event detector for one eps.
#[derive(Debug, Clone)]
pub struct EventDetector {
    eps: f64,
    m: usize,
    prev: Option<(f64, f64)>,
    current: Option<CollisionEvent>,
    scratch: Vec<usize>,
    events: Vec<CollisionEvent>,
    /// Events are kept only up to this many; `total` always counts all.
    keep: usize,
    total: usize,
    any_order1: bool,
    any_multiple: bool,
}

impl EventDetector {
    pub fn new(eps: f64, m: usize, keep: usize) -> Result<Self, AnalyticsError> {
        if !(eps > 0.0) {
            return Err(AnalyticsError::BadEps(eps));
        }
        Ok(Self {
            eps,
            m,
            prev: None,
            current: None,
            scratch: Vec::new(),
            events: Vec::new(),
            keep,
            total: 0,
            any_order1: false,
            any_multiple: false,
        })
    }

    fn step(
        &mut self,
        rs: &RootSystem,
        proj: &Projector,
        t: f64,
        x: &[f64],
        min: (usize, f64, f64),
        closed: &mut Option<(f64, f64)>,
    ) {
        let (arg, value, second) = min;
        let eps = self.eps;
        if value < eps {
            proj.count_below(rs, x, eps, &mut self.scratch);
            let count = self.scratch.len();
            let ev = self.current.get_or_insert_with(|| {
                let t_in = match self.prev {
                    Some((tp, vp)) if vp > value => tp + (vp - eps) / (vp - value) * (t - tp),
                    Some((tp, _)) => tp,
                    None => t,
                };
                CollisionEvent {
                    t_in,
                    t_out: t,
                    t_min: t,
                    min_value: f64::INFINITY,
                    min_root: arg,
                    small_roots: vec![],
                    order: 0,
                    peak_order: 0,
                    second_gap: 0.0,
                    tau: vec![],
                }
            });
            if value < ev.min_value {
                ev.min_value = value;
                ev.t_min = t;
                ev.min_root = arg;
                ev.small_roots.clone_from(&self.scratch);
                ev.order = count;
                ev.second_gap = second - value;
            }
            if count > ev.peak_order {
                for j in (ev.peak_order + 1)..=count {
                    ev.tau.push((self.m - j + 1, t));
                }
                ev.peak_order = count;
            }
            ev.t_out = t;
        } else if let Some(mut ev) = self.current.take() {
            if let Some((tp, vp)) = self.prev {
                ev.t_out = if value > vp { tp + (eps - vp) / (value - vp) * (t - tp) } else { t };
            }
            *closed = Some((ev.t_in, ev.t_out));
            self.close(ev);
        }
        self.prev = Some((t, value));
    }

    fn close(&mut self, ev: CollisionEvent) {
        self.total += 1;
        if ev.order == 1 {
            self.any_order1 = true;
        }
        if ev.order >= 2 {
            self.any_multiple = true;
        }
        if self.events.len() < self.keep {
            self.events.push(ev);
        }
    }

    fn finish(&mut self) -> Option<(f64, f64)> {
        self.current.take().map(|ev| {
            let iv = (ev.t_in, ev.t_out);
            self.close(ev);
            iv
        })
    }
}

/// Dyadic box counts of a union of time intervals, accumulated in time
/// order. Level `j` uses boxes of size `T / 2^j`, `j = 0..=max_level`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxCounter {
    pub horizon: f64,
    pub counts: Vec<u64>,
    #[serde(skip)]
    last: Vec<i64>,
}

impl BoxCounter {
    pub fn new(horizon: f64, max_level: usize) -> Self {
        Self {
            horizon,
            counts: vec![0; max_level + 1],
            last: vec![-1; max_level + 1],
        }
    }

    pub fn max_level(&self) -> usize {
        self.counts.len() - 1
    }

    /// Adds `[a, b]`; intervals must arrive with nondecreasing `a`.
    pub fn add(&mut self, a: f64, b: f64) {
        let (a, b) = (a.max(0.0), b.min(self.horizon));
        if b < a {
            return;
        }
        for j in 0..self.counts.len() {
            let nboxes = 1i64 << j;
            let scale = nboxes as f64 / self.horizon;
            let lo = ((a * scale).floor() as i64).min(nboxes - 1);
            let hi = ((b * scale).floor() as i64).min(nboxes - 1);
            let start = lo.max(self.last[j] + 1);
            if hi >= start {
                self.counts[j] += (hi - start + 1) as u64;
            }
            self.last[j] = self.last[j].max(hi);
        }
    }

    pub fn from_intervals(intervals: &[(f64, f64)], horizon: f64, max_level: usize) -> Self {
        let mut sorted = intervals.to_vec();
        sorted.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut bc = Self::new(horizon, max_level);
        for (a, b) in sorted {
            bc.add(a, b);
        }
        bc
    }
}

/// Inclusive range of dyadic levels used in the regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleWindow {
    pub min_level: usize,
    pub max_level: usize,
}

impl ScaleWindow {
    /// Finest level `floor(log2(T / dt))`, dropping the two coarsest and two
    /// finest levels.
    pub fn default_for(horizon: f64, dt: f64) -> Self {
        let finest = (horizon / dt).log2().floor().max(0.0) as usize;
        Self {
            min_level: 2,
            max_level: finest.saturating_sub(2).max(3),
        }
    }

    pub fn validate(&self) -> Result<(), AnalyticsError> {
        if self.max_level <= self.min_level {
            return Err(AnalyticsError::TooFewScales(
                self.max_level.saturating_sub(self.min_level) + 1,
            ));
        }
        if self.max_level > 60 {
            return Err(AnalyticsError::BadScales("levels above 60 are not representable".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateStatus {
    Ok,
    /// No occupied boxes at all; the value is reported as 0.
    EmptySet,
    /// Fewer than two scales with occupied boxes.
    Undefined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    /// `clamp(slope, 0, 1)`.
    pub value: f64,
    pub slope: f64,
    pub stderr: f64,
    /// `(delta_min, delta_max)` of the regression window.
    pub scale_window: (f64, f64),
    /// `(delta, mean count)` per scale in the window.
    pub counts: Vec<(f64, f64)>,
    /// Number of trajectories (or sets) pooled.
    pub samples: usize,
    pub status: EstimateStatus,
}

impl DimensionEstimate {
    /// Per-scale counts as CSV (`delta,count`).
    pub fn counts_csv(&self) -> String {
        let mut s = String::from("delta,count\n");
        for (d, c) in &self.counts {
            s.push_str(&format!("{d:e},{c}\n"));
        }
        s
    }
}

/// Least-squares slope of `y` on `x` with its standard error.
pub fn ols_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    if x.len() <= 2 {
        return (slope, 0.0);
    }
    let resid: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - my - slope * (a - mx)).powi(2))
        .sum();
    (slope, (resid / (n - 2.0) / sxx).sqrt())
}

/// Dimension estimate from summed box counts over `samples` sets.
pub fn dimension_from_counts(
    summed: &[u64],
    samples: usize,
    horizon: f64,
    window: ScaleWindow,
) -> Result<DimensionEstimate, AnalyticsError> {
    window.validate()?;
    if window.max_level >= summed.len() {
        return Err(AnalyticsError::BadScales(format!(
            "window reaches level {} but counts stop at {}",
            window.max_level,
            summed.len().saturating_sub(1)
        )));
    }
    let levels = window.min_level..=window.max_level;
    let delta = |j: usize| horizon / (1u64 << j) as f64;
    let counts: Vec<(f64, f64)> = levels
        .clone()
        .map(|j| (delta(j), summed[j] as f64 / samples.max(1) as f64))
        .collect();
    let scale_window = (delta(window.max_level), delta(window.min_level));
    let occupied: Vec<&(f64, f64)> = counts.iter().filter(|(_, c)| *c > 0.0).collect();
    let base = DimensionEstimate {
        value: 0.0,
        slope: 0.0,
        stderr: 0.0,
        scale_window,
        counts: counts.clone(),
        samples,
        status: EstimateStatus::EmptySet,
    };
    if occupied.is_empty() {
        return Ok(base);
    }
    if occupied.len() < 2 {
        return Ok(DimensionEstimate {
            status: EstimateStatus::Undefined,
            ..base
        });
    }
    let x: Vec<f64> = occupied.iter().map(|(d, _)| (1.0 / d).ln()).collect();
    let y: Vec<f64> = occupied.iter().map(|(_, c)| c.ln()).collect();
    let (slope, stderr) = ols_slope(&x, &y);
    Ok(DimensionEstimate {
        value: slope.clamp(0.0, 1.0),
        slope,
        stderr,
        status: EstimateStatus::Ok,
        ..base
    })
}

/// Box-counting dimension of a union of intervals in `[0, T]`.
pub fn box_counting_dimension(
    zero_set: &[(f64, f64)],
    horizon: f64,
    window: ScaleWindow,
) -> Result<DimensionEstimate, AnalyticsError> {
    window.validate()?;
    let bc = BoxCounter::from_intervals(zero_set, horizon, window.max_level);
    dimension_from_counts(&bc.counts, 1, horizon, window)
}

/// Times where the smallest weighted projection is below eps, as maximal
/// runs of samples `[t_first, t_last]`.
pub fn zero_set(
    traj: &TrajectoryRecord,
    rs: &RootSystem,
    w: &Weights,
    eps: f64,
) -> Result<Vec<(f64, f64)>, AnalyticsError> {
    if !(eps > 0.0) {
        return Err(AnalyticsError::BadEps(eps));
    }
    let p = Projector::new(rs, w)?;
    let mut out = Vec::new();
    let mut open: Option<(f64, f64)> = None;
    for i in 0..traj.len() {
        let t = traj.times[i];
        let (_, v, _) = p.min2(rs, traj.state(i));
        if v < eps {
            open = Some(match open {
                Some((a, _)) => (a, t),
                None => (t, t),
            });
        } else if let Some(iv) = open.take() {
            out.push(iv);
        }
    }
    out.extend(open);
    Ok(out)
}

/// What one path contributed at one eps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsSummary {
    pub eps: f64,
    /// Dyadic box counts of this eps's event intervals.
    pub box_counts: Vec<u64>,
    pub events: Vec<CollisionEvent>,
    pub total_events: usize,
    pub any_order1: bool,
    pub any_multiple: bool,
}

/// Streaming analysis of one path: events and dyadic box counts of the
/// event intervals at every eps of a grid; one eps is designated for the
/// dimension estimate.
pub struct PathAnalyzer<'a> {
    rs: &'a RootSystem,
    proj: Projector,
    detectors: Vec<EventDetector>,
    dim_index: usize,
    boxes: Vec<BoxCounter>,
    min_value: f64,
}

/// Result of [`PathAnalyzer`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathAnalysis {
    pub per_eps: Vec<EpsSummary>,
    pub dim_eps: f64,
    pub box_counts: Vec<u64>,
    /// Smallest weighted projection seen along the path.
    pub min_value: f64,
}

impl<'a> PathAnalyzer<'a> {
    /// `eps_grid` drives the event statistics; `dim_eps` (added to the grid
    /// if absent) drives the box counts. At most `keep_events` events per eps
    /// are stored.
    pub fn new(
        rs: &'a RootSystem,
        w: &Weights,
        eps_grid: &[f64],
        dim_eps: f64,
        horizon: f64,
        max_level: usize,
        keep_events: usize,
    ) -> Result<Self, AnalyticsError> {
        let proj = Projector::new(rs, w)?;
        let mut grid = eps_grid.to_vec();
        let dim_index = match grid.iter().position(|&e| e == dim_eps) {
            Some(i) => i,
            None => {
                grid.push(dim_eps);
                grid.len() - 1
            }
        };
        let detectors = grid
            .iter()
            .map(|&e| EventDetector::new(e, rs.num_positive(), keep_events))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            rs,
            proj,
            detectors,
            dim_index,
            boxes: vec![BoxCounter::new(horizon, max_level); grid.len()],
            min_value: f64::INFINITY,
        })
    }

    pub fn finish(mut self) -> PathAnalysis {
        for (d, bc) in self.detectors.iter_mut().zip(&mut self.boxes) {
            if let Some((a, b)) = d.finish() {
                bc.add(a, b);
            }
        }
        let dim_eps = self.detectors[self.dim_index].eps;
        let box_counts = self.boxes[self.dim_index].counts.clone();
        PathAnalysis {
            per_eps: self
                .detectors
                .into_iter()
                .zip(self.boxes)
                .map(|(d, bc)| EpsSummary {
                    eps: d.eps,
                    box_counts: bc.counts,
                    events: d.events,
                    total_events: d.total,
                    any_order1: d.any_order1,
                    any_multiple: d.any_multiple,
                })
                .collect(),
            dim_eps,
            box_counts,
            min_value: self.min_value,
        }
    }
}

impl PathObserver for PathAnalyzer<'_> {
    fn observe(&mut self, t: f64, x: &[f64], _dt: f64) {
        let min = self.proj.min2(self.rs, x);
        self.min_value = self.min_value.min(min.1);
        for (d, bc) in self.detectors.iter_mut().zip(&mut self.boxes) {
            let mut closed = None;
            d.step(self.rs, &self.proj, t, x, min, &mut closed);
            if let Some((a, b)) = closed {
                bc.add(a, b);
            }
        }
    }
}

/// Analyses a stored trajectory at a single eps.
pub fn detect_collision_events(
    traj: &TrajectoryRecord,
    rs: &RootSystem,
    w: &Weights,
    eps: f64,
) -> Result<Vec<CollisionEvent>, AnalyticsError> {
    let mut a = PathAnalyzer::new(rs, w, &[eps], eps, traj.horizon().max(f64::MIN_POSITIVE), 0, usize::MAX)?;
    for i in 0..traj.len() {
        a.observe(traj.times[i], traj.state(i), traj.step_sizes[i]);
    }
    Ok(a.finish().per_eps.remove(0).events)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub eps: f64,
    pub order1_rate: f64,
    pub multiple_rate: f64,
    pub trajectories: usize,
}

/// Per eps, the fraction of paths with an order-1 event and with an
/// order->=2 event, from per-path analyses.
pub fn collision_rates(analyses: &[PathAnalysis], eps_grid: &[f64]) -> Result<Vec<ScalingRow>, AnalyticsError> {
    if analyses.is_empty() {
        return Err(AnalyticsError::EmptyEnsemble);
    }
    let n = analyses.len() as f64;
    eps_grid
        .iter()
        .map(|&eps| {
            let (mut o1, mut o2) = (0usize, 0usize);
            for a in analyses {
                let s = a
                    .per_eps
                    .iter()
                    .find(|s| s.eps == eps)
                    .ok_or(AnalyticsError::BadEps(eps))?;
                o1 += s.any_order1 as usize;
                o2 += s.any_multiple as usize;
            }
            Ok(ScalingRow {
                eps,
                order1_rate: o1 as f64 / n,
                multiple_rate: o2 as f64 / n,
                trajectories: analyses.len(),
            })
        })
        .collect()
}

/// Multiple-collision scaling table for stored trajectories.
pub fn multiple_collision_scaling(
    ensemble: &[TrajectoryRecord],
    rs: &RootSystem,
    w: &Weights,
    eps_grid: &[f64],
) -> Result<Vec<ScalingRow>, AnalyticsError> {
    if ensemble.is_empty() {
        return Err(AnalyticsError::EmptyEnsemble);
    }
    let analyses = ensemble
        .iter()
        .map(|tr| {
            let mut a = PathAnalyzer::new(rs, w, eps_grid, eps_grid[0], tr.horizon().max(f64::MIN_POSITIVE), 0, 0)?;
            for i in 0..tr.len() {
                a.observe(tr.times[i], tr.state(i), tr.step_sizes[i]);
            }
            Ok(a.finish())
        })
        .collect::<Result<Vec<_>, AnalyticsError>>()?;
    collision_rates(&analyses, eps_grid)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaSeries {
    pub times: Vec<f64>,
    pub theta: Vec<f64>,
    /// Bi-Lipschitz constants: range of the integrand along the path.
    pub c_min: f64,
    pub c_max: f64,
}

/// `Theta(t) = int_0^t sum_i (beta*_i)^2 sigma^2(x_i) ds` by the trapezoid
/// rule, with `beta* = beta / weight`.
pub fn time_change_theta(
    traj: &TrajectoryRecord,
    model: &CoefficientModel,
    rs: &RootSystem,
    beta: usize,
    weight: f64,
) -> Result<ThetaSeries, AnalyticsError> {
    if !rs.is_simple(beta) {
        return Err(AnalyticsError::NotSimple(beta));
    }
    let r = rs.sparse_roots()[beta];
    let c = |x: &[f64]| -> f64 {
        r.entries()
            .map(|(i, a)| (a / weight).powi(2) * model.sigma(x[i]).powi(2))
            .sum()
    };
    let mut theta = Vec::with_capacity(traj.len());
    let (mut c_min, mut c_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut acc = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..traj.len() {
        let t = traj.times[i];
        let ci = c(traj.state(i));
        c_min = c_min.min(ci);
        c_max = c_max.max(ci);
        if let Some((tp, cp)) = prev {
            acc += 0.5 * (ci + cp) * (t - tp);
        }
        theta.push(acc);
        prev = Some((t, ci));
    }
    Ok(ThetaSeries {
        times: traj.times.clone(),
        theta,
        c_min,
        c_max,
    })
}

/// Two-sample Kolmogorov–Smirnov distance and its asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    if a.is_empty() || b.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let en = (n * m / (n + m)).sqrt();
    (d, kolmogorov_q((en + 0.12 + 0.11 / en) * d))
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{PathStats, SeedLineage};
    use crate::roots::Family;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn record(n: usize, times: Vec<f64>, states: Vec<Vec<f64>>) -> TrajectoryRecord {
        TrajectoryRecord {
            n,
            step_sizes: std::iter::once(0.0)
                .chain(times.windows(2).map(|w| w[1] - w[0]))
                .collect(),
            times,
            states: states.concat(),
            lineage: SeedLineage {
                master_seed: 0,
                index: 0,
                seed: 0,
            },
            exploded: false,
            stats: PathStats::default(),
        }
    }

    #[test]
    fn min_projection_example() {
        let rs = RootSystem::build(Family::A, 3).unwrap();
        let tr = record(3, vec![0.0, 1.0], vec![vec![0.0, 1.0, 3.0], vec![0.0, 2.0, 3.0]]);
        let s = min_projection_series(&tr, &rs, &Weights::uniform(&rs)).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(rs.positive_root(s[0].root), &[-1, 1, 0]);
        assert_eq!((s[0].value, s[0].second), (1.0, 2.0));
        assert_eq!(rs.positive_root(s[1].root), &[0, -1, 1]);

        let scaled = Weights::uniform(&rs).scaled(4.0).unwrap();
        let s2 = min_projection_series(&tr, &rs, &scaled).unwrap();
        for (a, b) in s.iter().zip(&s2) {
            assert_eq!(a.root, b.root);
            assert_relative_eq!(b.value, a.value / 4.0);
        }
    }

    #[test]
    fn single_event_with_interpolated_edges() {
        let rs = RootSystem::build(Family::A, 2).unwrap();
        let gaps = [1.0, 0.5, 0.1, 0.3, 1.0];
        let tr = record(
            2,
            (0..5).map(|i| i as f64).collect(),
            gaps.iter().map(|g| vec![0.0, *g]).collect(),
        );
        let ev = detect_collision_events(&tr, &rs, &Weights::uniform(&rs), 0.4).unwrap();
        assert_eq!(ev.len(), 1);
        let e = &ev[0];
        assert_relative_eq!(e.t_in, 1.25, epsilon = 1e-12);
        assert_relative_eq!(e.t_out, 3.0 + 0.1 / 0.7, epsilon = 1e-12);
        assert_eq!((e.t_min, e.min_value, e.order), (2.0, 0.1, 1));
        assert_eq!(e.tau, vec![(1, 2.0)]);
    }

    #[test]
    fn constant_interior_state_has_no_events() {
        let rs = RootSystem::build(Family::A, 3).unwrap();
        let x = vec![0.0, 1.0, 2.0];
        let tr = record(3, vec![0.0, 1.0, 2.0], vec![x.clone(), x.clone(), x]);
        assert!(detect_collision_events(&tr, &rs, &Weights::uniform(&rs), 1e-3).unwrap().is_empty());
        assert!(zero_set(&tr, &rs, &Weights::uniform(&rs), 1e-3).unwrap().is_empty());
    }

    #[test]
    fn triple_approach_has_order_two() {
        let rs = RootSystem::build(Family::A, 3).unwrap();
        let tr = record(
            3,
            vec![0.0, 1.0, 2.0],
            vec![vec![-1.0, 0.0, 1.0], vec![-0.01, 0.0, 0.012], vec![-1.0, 0.0, 1.0]],
        );
        let ev = detect_collision_events(&tr, &rs, &Weights::uniform(&rs), 0.02).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].order, 2);
        assert_relative_eq!(ev[0].second_gap, 0.002, epsilon = 1e-12);
        // M = 3: count 1 -> tau_3, count 2 -> tau_2
        assert_eq!(ev[0].tau, vec![(3, 1.0), (2, 1.0)]);
    }

    #[test]
    fn saturated_zero_set_is_whole_horizon() {
        let rs = RootSystem::build(Family::A, 2).unwrap();
        let tr = record(2, vec![0.0, 0.5, 1.0], vec![vec![0.0, 1.0]; 3]);
        assert_eq!(zero_set(&tr, &rs, &Weights::uniform(&rs), 10.0).unwrap(), vec![(0.0, 1.0)]);
        assert!(zero_set(&tr, &rs, &Weights::uniform(&rs), 0.0).is_err());
    }

    #[test]
    fn box_counting_point_and_interval() {
        let w = ScaleWindow {
            min_level: 2,
            max_level: 16,
        };
        let point = box_counting_dimension(&[(0.3, 0.3)], 1.0, w).unwrap();
        assert_eq!(point.value, 0.0);
        assert_eq!(point.status, EstimateStatus::Ok);
        let full = box_counting_dimension(&[(0.0, 1.0)], 1.0, w).unwrap();
        assert_relative_eq!(full.value, 1.0, epsilon = 1e-12);
        let empty = box_counting_dimension(&[], 1.0, w).unwrap();
        assert_eq!((empty.value, empty.status), (0.0, EstimateStatus::EmptySet));
        assert!(box_counting_dimension(&[(0.0, 1.0)], 1.0, ScaleWindow { min_level: 3, max_level: 3 }).is_err());
    }

    fn cantor(depth: u32) -> Vec<(f64, f64)> {
        let mut iv = vec![(0.0, 1.0)];
        for _ in 0..depth {
            iv = iv
                .into_iter()
                .flat_map(|(a, b)| {
                    let l = (b - a) / 3.0;
                    [(a, a + l), (b - l, b)]
                })
                .collect();
        }
        iv
    }

    #[test]
    fn box_counting_cantor_set() {
        let est = box_counting_dimension(
            &cantor(13),
            1.0,
            ScaleWindow {
                min_level: 2,
                max_level: 18,
            },
        )
        .unwrap();
        let want = 2f64.ln() / 3f64.ln();
        assert!((est.value - want).abs() < 0.05, "{est:?}");
    }

    #[test]
    fn counter_merges_overlaps() {
        let mut bc = BoxCounter::new(1.0, 3);
        bc.add(0.0, 0.3);
        bc.add(0.1, 0.2);
        bc.add(0.26, 0.4);
        assert_eq!(bc.counts, vec![1, 1, 2, 4]);
    }

    #[test]
    fn theta_examples() {
        let rs = RootSystem::build(Family::A, 2).unwrap();
        let tr = record(2, vec![0.0, 0.3, 1.0], vec![vec![0.0, 1.0], vec![0.1, 1.2], vec![0.0, 2.0]]);
        let unit = CoefficientModel::dyson(0.5, 2).unwrap();
        let th = time_change_theta(&tr, &unit, &rs, 0, 2f64.sqrt()).unwrap();
        for (a, b) in th.theta.iter().zip(&tr.times) {
            assert_relative_eq!(a, b, epsilon = 1e-15);
        }
        let double = CoefficientModel::custom(
            Family::A,
            2,
            crate::models::Domain::REAL_LINE,
            Arc::new(|_| 2.0),
            Arc::new(|_| 0.0),
            Arc::new(|_, _, _| 0.5),
        );
        let th2 = time_change_theta(&tr, &double, &rs, 0, 2f64.sqrt()).unwrap();
        for (a, b) in th2.theta.iter().zip(&th.theta) {
            assert_relative_eq!(*a, 4.0 * b, epsilon = 1e-14);
        }
        let b2 = RootSystem::build(Family::B, 2).unwrap();
        let trb = record(2, vec![0.0, 1.0], vec![vec![0.5, 1.0]; 2]);
        let m = CoefficientModel::bessel_b(0.5, 0.5, 2).unwrap();
        let e2p = b2.positive_index(&[1, 1]).unwrap();
        assert!(matches!(time_change_theta(&trb, &m, &b2, e2p, 1.0), Err(AnalyticsError::NotSimple(_))));
    }

    #[test]
    fn rates_need_nonempty_ensemble() {
        let rs = RootSystem::build(Family::A, 2).unwrap();
        assert!(matches!(
            multiple_collision_scaling(&[], &rs, &Weights::uniform(&rs), &[0.1]),
            Err(AnalyticsError::EmptyEnsemble)
        ));
        let tr = record(2, vec![0.0, 1.0, 2.0], vec![vec![0.0, 1.0], vec![0.0, 0.05], vec![0.0, 1.0]]);
        let rows = multiple_collision_scaling(&[tr], &rs, &Weights::uniform(&rs), &[0.1, 0.01]).unwrap();
        assert_eq!((rows[0].order1_rate, rows[0].multiple_rate), (1.0, 0.0));
        assert_eq!(rows[1].order1_rate, 0.0);
    }

    proptest! {
        #[test]
        fn zero_sets_nest(gaps in prop::collection::vec(0.0f64..1.0, 2..60), e1 in 0.01f64..0.5, f in 1.0f64..3.0) {
            let rs = RootSystem::build(Family::A, 2).unwrap();
            let tr = record(2, (0..gaps.len()).map(|i| i as f64).collect(), gaps.iter().map(|g| vec![0.0, *g]).collect());
            let w = Weights::uniform(&rs);
            let small = zero_set(&tr, &rs, &w, e1).unwrap();
            let big = zero_set(&tr, &rs, &w, e1 * f).unwrap();
            for (a, b) in small {
                prop_assert!(big.iter().any(|(c, d)| *c <= a && b <= *d));
            }
        }

        #[test]
        fn weight_rescaling_with_eps_is_invariant(gaps in prop::collection::vec(0.0f64..1.0, 2..60), c in 0.2f64..5.0) {
            let rs = RootSystem::build(Family::A, 2).unwrap();
            let tr = record(2, (0..gaps.len()).map(|i| i as f64).collect(), gaps.iter().map(|g| vec![0.0, *g]).collect());
            let w = Weights::uniform(&rs);
            let a = zero_set(&tr, &rs, &w, 0.3).unwrap();
            let b = zero_set(&tr, &rs, &w.scaled(c).unwrap(), 0.3 / c).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn box_counts_monotone_in_level(iv in prop::collection::vec((0.0f64..1.0, 0.0f64..0.01), 1..40)) {
            let iv: Vec<(f64, f64)> = iv.into_iter().map(|(a, l)| (a, (a + l).min(1.0))).collect();
            let bc = BoxCounter::from_intervals(&iv, 1.0, 12);
            for j in 1..bc.counts.len() {
                prop_assert!(bc.counts[j] >= bc.counts[j - 1]);
                prop_assert!(bc.counts[j] <= 1 << j);
            }
        }
    }

    #[test]
    fn ks_distance_basics() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let (d, p) = ks_two_sample(&a, &a);
        assert_eq!(d, 0.0);
        assert!(p > 0.99);
        let b: Vec<f64> = (0..100).map(|i| i as f64 + 1000.0).collect();
        let (d, p) = ks_two_sample(&a, &b);
        assert_eq!(d, 1.0);
        assert!(p < 1e-10);
        // shift by half the range
        let c: Vec<f64> = (0..100).map(|i| i as f64 + 50.0).collect();
        assert!((ks_two_sample(&a, &c).0 - 0.5).abs() < 1e-12);
    }
}
