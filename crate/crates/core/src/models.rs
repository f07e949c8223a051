//! Coefficient models `(sigma, b, k_alpha)` for the particle SDE
//!
//! ```text
//! dx_i = sigma(x_i) dB_i + b(x_i) dt + sum_{alpha in R+} k_alpha(x) alpha_i / <x, alpha> dt
//! ```
//!
//! together with sampling-based checks of the standing assumptions and the
//! constants that bound the dimension of the collision-time set.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::roots::{dot_int, Family, RootSystem, SparseRoot};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter for {preset}: {message}")]
    InvalidParameter { preset: &'static str, message: String },
    #[error("{preset} requires root system family {expected}, got {got}")]
    WrongFamily {
        preset: &'static str,
        expected: Family,
        got: Family,
    },
    #[error("jacobi requires min(p, q) >= N - 1 + 2/k (unique strong solution): min(p, q) = {min_pq}, N - 1 + 2/k = {bound}")]
    JacobiWall { min_pq: f64, bound: f64 },
    #[error("custom models must be built with CoefficientModel::custom")]
    CustomNeedsEvaluators,
    #[error("the evaluation grid is empty")]
    EmptyGrid,
    #[error("coupling/diffusion ratio is unbounded on the grid (root #{root}, value {value}) and no closed form applies")]
    UnboundedRatio { root: usize, value: f64 },
}

/// Preset tag plus parameters; this is also the model metadata that goes into
/// run manifests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum PresetSpec {
    Dyson { k: f64 },
    BesselGeneral { k: f64 },
    BesselB { k1: f64, k2: f64 },
    Wishart { kappa: f64, a: f64 },
    Jacobi { k: f64, p: f64, q: f64 },
    Custom,
}

impl PresetSpec {
    pub fn name(&self) -> &'static str {
        match self {
            PresetSpec::Dyson { .. } => "dyson",
            PresetSpec::BesselGeneral { .. } => "bessel_general",
            PresetSpec::BesselB { .. } => "bessel_b",
            PresetSpec::Wishart { .. } => "wishart",
            PresetSpec::Jacobi { .. } => "jacobi",
            PresetSpec::Custom => "custom",
        }
    }
}

/// Per-coordinate state space: the open interval `(lower, upper)`, either end
/// possibly infinite. Wishart lives on `[0, inf)` and Jacobi on `(-1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lower: f64,
    pub upper: f64,
}

impl Domain {
    pub const REAL_LINE: Domain = Domain {
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
    };

    pub fn contains(&self, y: f64) -> bool {
        y >= self.lower && y <= self.upper
    }

    pub fn is_bounded_below(&self) -> bool {
        self.lower.is_finite()
    }

    pub fn is_bounded_above(&self) -> bool {
        self.upper.is_finite()
    }

    /// Distance of the configuration to the nearest domain wall.
    pub fn wall_distance(&self, x: &[f64]) -> f64 {
        let mut d = f64::INFINITY;
        for &xi in x {
            d = d.min(xi - self.lower).min(self.upper - xi);
        }
        d
    }
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// `k(positive_root_index, root, x)`.
pub type CouplingFn = Arc<dyn Fn(usize, &SparseRoot, &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Coefficients {
    Preset(PresetSpec),
    Custom {
        sigma: ScalarFn,
        drift: ScalarFn,
        coupling: CouplingFn,
    },
}

/// An immutable coefficient triple tied to a root system family and size.
#[derive(Clone)]
pub struct CoefficientModel {
    coeffs: Coefficients,
    family: Family,
    n: usize,
    domain: Domain,
}

impl fmt::Debug for CoefficientModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientModel")
            .field("preset", &self.preset())
            .field("family", &self.family)
            .field("n", &self.n)
            .field("domain", &self.domain)
            .finish()
    }
}

fn positive(preset: &'static str, name: &str, v: f64) -> Result<(), ModelError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter {
            preset,
            message: format!("{name} must be positive and finite, got {v}"),
        })
    }
}

fn require_family(preset: &'static str, expected: Family, got: Family) -> Result<(), ModelError> {
    if expected == got {
        Ok(())
    } else {
        Err(ModelError::WrongFamily {
            preset,
            expected,
            got,
        })
    }
}

/// Builds a preset model for the given root system.
pub fn make_preset(spec: PresetSpec, family: Family, n: usize) -> Result<CoefficientModel, ModelError> {
    let name = spec.name();
    let mut domain = Domain::REAL_LINE;
    match spec {
        PresetSpec::Dyson { k } => {
            require_family(name, Family::A, family)?;
            positive(name, "k", k)?;
        }
        PresetSpec::BesselGeneral { k } => positive(name, "k", k)?,
        PresetSpec::BesselB { k1, k2 } => {
            require_family(name, Family::B, family)?;
            positive(name, "k1", k1)?;
            positive(name, "k2", k2)?;
        }
        PresetSpec::Wishart { kappa, a } => {
            require_family(name, Family::A, family)?;
            positive(name, "kappa", kappa)?;
            positive(name, "a", a)?;
            domain = Domain {
                lower: 0.0,
                upper: f64::INFINITY,
            };
        }
        PresetSpec::Jacobi { k, p, q } => {
            require_family(name, Family::A, family)?;
            positive(name, "k", k)?;
            let bound = n as f64 - 1.0 + 2.0 / k;
            let min_pq = p.min(q);
            if !(min_pq >= bound) {
                return Err(ModelError::JacobiWall { min_pq, bound });
            }
            domain = Domain {
                lower: -1.0,
                upper: 1.0,
            };
        }
        PresetSpec::Custom => return Err(ModelError::CustomNeedsEvaluators),
    }
    Ok(CoefficientModel {
        coeffs: Coefficients::Preset(spec),
        family,
        n,
        domain,
    })
}

impl CoefficientModel {
    pub fn dyson(k: f64, n: usize) -> Result<Self, ModelError> {
        make_preset(PresetSpec::Dyson { k }, Family::A, n)
    }

    pub fn bessel_b(k1: f64, k2: f64, n: usize) -> Result<Self, ModelError> {
        make_preset(PresetSpec::BesselB { k1, k2 }, Family::B, n)
    }

    pub fn wishart(kappa: f64, a: f64, n: usize) -> Result<Self, ModelError> {
        make_preset(PresetSpec::Wishart { kappa, a }, Family::A, n)
    }

    pub fn jacobi(k: f64, p: f64, q: f64, n: usize) -> Result<Self, ModelError> {
        make_preset(PresetSpec::Jacobi { k, p, q }, Family::A, n)
    }

    /// A user-supplied model. Evaluators must be pure.
    pub fn custom(
        family: Family,
        n: usize,
        domain: Domain,
        sigma: ScalarFn,
        drift: ScalarFn,
        coupling: CouplingFn,
    ) -> Self {
        Self {
            coeffs: Coefficients::Custom {
                sigma,
                drift,
                coupling,
            },
            family,
            n,
            domain,
        }
    }

    pub fn preset(&self) -> PresetSpec {
        match &self.coeffs {
            Coefficients::Preset(p) => *p,
            Coefficients::Custom { .. } => PresetSpec::Custom,
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// True when sigma is identically 1 (lets the engine skip evaluations).
    pub fn has_unit_sigma(&self) -> bool {
        matches!(
            self.coeffs,
            Coefficients::Preset(
                PresetSpec::Dyson { .. } | PresetSpec::BesselGeneral { .. } | PresetSpec::BesselB { .. }
            )
        )
    }

    #[inline]
    pub fn sigma(&self, y: f64) -> f64 {
        match &self.coeffs {
            Coefficients::Preset(p) => match *p {
                PresetSpec::Wishart { .. } => 2.0 * y.max(0.0).sqrt(),
                PresetSpec::Jacobi { .. } => (1.0 - y * y).max(0.0).sqrt(),
                _ => 1.0,
            },
            Coefficients::Custom { sigma, .. } => sigma(y),
        }
    }

    #[inline]
    pub fn drift_b(&self, y: f64) -> f64 {
        match &self.coeffs {
            Coefficients::Preset(p) => match *p {
                PresetSpec::Wishart { kappa, a } => kappa * a,
                PresetSpec::Jacobi { k, p, q } => 0.5 * k * (p - q - (p + q) * y),
                _ => 0.0,
            },
            Coefficients::Custom { drift, .. } => drift(y),
        }
    }

    /// `k_alpha(x)` for positive root number `idx`.
    #[inline]
    pub fn coupling(&self, idx: usize, root: &SparseRoot, x: &[f64]) -> f64 {
        match &self.coeffs {
            Coefficients::Preset(p) => match *p {
                PresetSpec::Dyson { k } | PresetSpec::BesselGeneral { k } => k,
                PresetSpec::BesselB { k1, k2 } => {
                    if root.norm_sq() < 1.5 {
                        k1
                    } else {
                        k2
                    }
                }
                PresetSpec::Wishart { kappa, .. } => {
                    kappa * root.entries().map(|(i, _)| x[i]).sum::<f64>()
                }
                PresetSpec::Jacobi { k, .. } => {
                    let prod: f64 = root.entries().map(|(i, _)| x[i]).product();
                    k * (1.0 - prod)
                }
                PresetSpec::Custom => unreachable!(),
            },
            Coefficients::Custom { coupling, .. } => coupling(idx, root, x),
        }
    }

    /// `|beta|^2 k_beta(y) / sum_i beta_i^2 sigma^2(y_i)`.
    pub fn ratio(&self, rs: &RootSystem, beta: usize, y: &[f64]) -> f64 {
        let r = &rs.sparse_roots()[beta];
        let denom: f64 = r
            .entries()
            .map(|(i, c)| c * c * self.sigma(y[i]).powi(2))
            .sum();
        r.norm_sq() * self.coupling(beta, r, y) / denom
    }
}

/// `(k1, k2, N) -> (kappa, a)` with `kappa = 2 k2`, `kappa a = 2 k1 + 2 k2 (N-1) + 1`.
pub fn wishart_param_map(k1: f64, k2: f64, n: usize) -> Result<(f64, f64), ModelError> {
    positive("wishart_param_map", "k1", k1)?;
    positive("wishart_param_map", "k2", k2)?;
    let kappa = 2.0 * k2;
    let a = (2.0 * k1 + 2.0 * k2 * (n as f64 - 1.0) + 1.0) / kappa;
    Ok((kappa, a))
}

/// Inverse of [`wishart_param_map`].
pub fn wishart_param_inverse(kappa: f64, a: f64, n: usize) -> Result<(f64, f64), ModelError> {
    positive("wishart_param_inverse", "kappa", kappa)?;
    positive("wishart_param_inverse", "a", a)?;
    let k2 = kappa / 2.0;
    let k1 = (kappa * a - 1.0 - kappa * (n as f64 - 1.0)) / 2.0;
    if !(k1 > 0.0) {
        return Err(ModelError::InvalidParameter {
            preset: "wishart_param_inverse",
            message: format!("(kappa, a) = ({kappa}, {a}) maps to k1 = {k1} <= 0"),
        });
    }
    Ok((k1, k2))
}

/// The Wishart no-hit-zero condition `a >= 2/kappa + N - 1`.
pub fn wishart_no_hit(kappa: f64, a: f64, n: usize) -> bool {
    a >= 2.0 / kappa + n as f64 - 1.0 - 1e-12
}

/// Stratified interior sample of the chamber intersected with the model
/// domain: a Latin hypercube in a box, mapped into the chamber by sorting
/// (and, for B/D, taking absolute values).
pub fn interior_grid(rs: &RootSystem, model: &CoefficientModel, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = rs.dim();
    let dom = model.domain();
    let lo = if dom.is_bounded_below() { dom.lower } else { -4.0 };
    let hi = if dom.is_bounded_above() { dom.upper } else { 4.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut strata: Vec<Vec<usize>> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut s: Vec<usize> = (0..count).collect();
        for i in (1..count).rev() {
            let j = rng.random_range(0..=i);
            s.swap(i, j);
        }
        strata.push(s);
    }
    let mut out = Vec::with_capacity(count);
    for p in 0..count {
        let mut x: Vec<f64> = (0..n)
            .map(|c| {
                let u = (strata[c][p] as f64 + rng.random::<f64>()) / count as f64;
                lo + (hi - lo) * u
            })
            .collect();
        match rs.family() {
            Family::A => {}
            Family::B | Family::D => x.iter_mut().for_each(|v| *v = v.abs()),
        }
        x.sort_by(f64::total_cmp);
        if rs.family() == Family::D && rng.random::<bool>() {
            x[0] = -x[0];
        }
        if rs.min_projection(&x) > 0.0 && x.iter().all(|&v| v > dom.lower && v < dom.upper) {
            out.push(x);
        }
    }
    out
}

/// Default grid size `64^min(N, 3)`.
pub fn default_grid_size(n: usize) -> usize {
    64usize.pow(n.min(3) as u32)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionCheck {
    pub passed: bool,
    /// Grid point where the check failed.
    pub witness: Option<Vec<f64>>,
    pub detail: String,
}

impl AssumptionCheck {
    fn pass(detail: &str) -> Self {
        Self {
            passed: true,
            witness: None,
            detail: detail.to_string(),
        }
    }

    fn fail(x: &[f64], detail: String) -> Self {
        Self {
            passed: false,
            witness: Some(x.to_vec()),
            detail,
        }
    }
}

/// Outcome of the sampled assumption checks. A pass is evidence on the grid,
/// not a proof.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    /// sigma > 0 and k_alpha > 0.
    pub a1: AssumptionCheck,
    /// `sum_i alpha_i b(x_i) <= 0` for simple alpha.
    pub a2: AssumptionCheck,
    /// `k_alpha / <x,alpha> >= k_beta / <x,beta>` for `alpha <= beta`, `<alpha,beta> != 0`.
    pub a3: AssumptionCheck,
    pub grid_points: usize,
}

pub fn validate_assumptions(
    model: &CoefficientModel,
    rs: &RootSystem,
    grid: &[Vec<f64>],
) -> Result<AssumptionReport, ModelError> {
    if grid.is_empty() {
        return Err(ModelError::EmptyGrid);
    }
    let roots = rs.sparse_roots();
    let m = rs.num_positive();

    let mut a1 = AssumptionCheck::pass("sigma and k_alpha positive at every grid point");
    'a1: for x in grid {
        for (i, &xi) in x.iter().enumerate() {
            let s = model.sigma(xi);
            if !(s > 0.0) {
                a1 = AssumptionCheck::fail(x, format!("sigma(x_{}) = {s}", i + 1));
                break 'a1;
            }
        }
        for (a, r) in roots.iter().enumerate() {
            let k = model.coupling(a, r, x);
            if !(k > 0.0) {
                a1 = AssumptionCheck::fail(x, format!("k for root {:?} = {k}", rs.positive_root(a)));
                break 'a1;
            }
        }
    }

    let mut a2 = AssumptionCheck::pass("sum_i alpha_i b(x_i) <= 0 for every simple root");
    'a2: for x in grid {
        for &s in rs.simple_indices() {
            let v: f64 = roots[s].entries().map(|(i, c)| c * model.drift_b(x[i])).sum();
            if v > 1e-12 {
                a2 = AssumptionCheck::fail(
                    x,
                    format!("simple root {:?}: sum alpha_i b(x_i) = {v}", rs.positive_root(s)),
                );
                break 'a2;
            }
        }
    }

    let mut a3 = AssumptionCheck::pass("k_alpha/<x,alpha> >= k_beta/<x,beta> whenever alpha <= beta");
    'a3: for x in grid {
        let q: Vec<f64> = (0..m)
            .map(|a| model.coupling(a, &roots[a], x) / roots[a].dot(x))
            .collect();
        for a in 0..m {
            for b in 0..m {
                if a == b
                    || !rs.order_leq_idx(a, b)
                    || dot_int(rs.positive_root(a), rs.positive_root(b)) == 0
                {
                    continue;
                }
                if q[a] < q[b] * (1.0 - 1e-12) {
                    a3 = AssumptionCheck::fail(
                        x,
                        format!(
                            "alpha = {:?} <= beta = {:?} but k/<x,alpha> = {} < {}",
                            rs.positive_root(a),
                            rs.positive_root(b),
                            q[a],
                            q[b]
                        ),
                    );
                    break 'a3;
                }
            }
        }
    }

    Ok(AssumptionReport {
        a1,
        a2,
        a3,
        grid_points: grid.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimpleRootConstants {
    pub root: Vec<i64>,
    /// inf of the ratio over the grid
    pub eta_check: f64,
    /// sup of the ratio over the grid
    pub eta_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundConstants {
    pub simple: Vec<SimpleRootConstants>,
    /// `max_i sup k_alpha / sigma^2(y_i)`, one per positive root.
    pub eta_tilde: Vec<f64>,
    pub h_tilde: f64,
    /// `sup |b / sigma^2|`
    pub b_hat: f64,
    /// `max |alpha| / |alpha_i|` over roots and nonzero coordinates.
    pub c_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMethod {
    /// Closed form for a preset.
    Closed,
    /// Grid inf/sup, A2 and A3 hold on the grid.
    Grid,
    /// Grid inf/sup, A2 or A3 fails; lower bound uses the max over simple roots.
    GridWeak,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionBounds {
    /// `None` when no nontrivial lower bound is available.
    pub lower: Option<f64>,
    pub upper: f64,
    pub method: BoundMethod,
    pub constants: BoundConstants,
    pub note: Option<String>,
}

impl DimensionBounds {
    /// Point prediction: the common value when both bounds agree, else the
    /// midpoint (or the upper bound alone when there is no lower bound).
    pub fn point(&self) -> f64 {
        match self.lower {
            Some(l) => 0.5 * (l + self.upper),
            None => self.upper,
        }
    }
}

fn half_minus(eta: f64) -> f64 {
    (0.5 - eta).max(0.0)
}

fn c_r(rs: &RootSystem) -> f64 {
    rs.sparse_roots()
        .iter()
        .flat_map(|r| r.entries().map(move |(_, c)| r.norm_sq().sqrt() / c.abs()))
        .fold(1.0, f64::max)
}

/// Grid estimates of the bound constants.
pub fn bound_constants(model: &CoefficientModel, rs: &RootSystem, grid: &[Vec<f64>]) -> BoundConstants {
    let roots = rs.sparse_roots();
    let simple = rs
        .simple_indices()
        .iter()
        .map(|&s| {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for x in grid {
                let r = model.ratio(rs, s, x);
                lo = lo.min(r);
                hi = hi.max(r);
            }
            SimpleRootConstants {
                root: rs.positive_root(s).to_vec(),
                eta_check: lo,
                eta_hat: hi,
            }
        })
        .collect();
    let eta_tilde: Vec<f64> = (0..rs.num_positive())
        .map(|a| {
            grid.iter()
                .flat_map(|x| {
                    let k = model.coupling(a, &roots[a], x);
                    x.iter().map(move |&xi| (xi, k))
                })
                .map(|(xi, k)| k / model.sigma(xi).powi(2))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let h_tilde = eta_tilde.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let b_hat = grid
        .iter()
        .flatten()
        .map(|&y| (model.drift_b(y) / model.sigma(y).powi(2)).abs())
        .fold(0.0, f64::max);
    BoundConstants {
        simple,
        eta_tilde,
        h_tilde,
        b_hat,
        c_r: c_r(rs),
    }
}

/// Lower/upper bounds on the dimension of the collision-time set.
pub fn dimension_bound_predictor(
    model: &CoefficientModel,
    rs: &RootSystem,
    grid: &[Vec<f64>],
) -> Result<DimensionBounds, ModelError> {
    if grid.is_empty() {
        return Err(ModelError::EmptyGrid);
    }
    let constants = bound_constants(model, rs, grid);
    let closed = |lower: Option<f64>, upper: f64, note: Option<String>| DimensionBounds {
        lower,
        upper,
        method: BoundMethod::Closed,
        constants: constants.clone(),
        note,
    };
    match model.preset() {
        PresetSpec::Dyson { k } | PresetSpec::BesselGeneral { k } => {
            let d = half_minus(k);
            return Ok(closed(Some(d), d, None));
        }
        PresetSpec::BesselB { k1, k2 } => {
            let d = half_minus(k1.min(k2));
            return Ok(closed(Some(d), d, None));
        }
        PresetSpec::Wishart { kappa, a } if wishart_no_hit(kappa, a, rs.dim()) => {
            let d = ((1.0 - kappa) / 2.0).max(0.0);
            return Ok(closed(Some(d), d, None));
        }
        PresetSpec::Jacobi { k, .. } => {
            return Ok(closed(
                None,
                half_minus(k),
                Some("ratio is bounded below by k but unbounded above: no nontrivial lower bound".into()),
            ));
        }
        _ => {}
    }

    for (s, c) in rs.simple_indices().iter().zip(&constants.simple) {
        if !c.eta_hat.is_finite() || !c.eta_check.is_finite() {
            return Err(ModelError::UnboundedRatio {
                root: *s,
                value: c.eta_hat,
            });
        }
    }
    let min_check = constants.simple.iter().map(|c| c.eta_check).fold(f64::INFINITY, f64::min);
    let min_hat = constants.simple.iter().map(|c| c.eta_hat).fold(f64::INFINITY, f64::min);
    let max_hat = constants.simple.iter().map(|c| c.eta_hat).fold(f64::NEG_INFINITY, f64::max);
    let report = validate_assumptions(model, rs, grid)?;
    let (lower, method) = if report.a2.passed && report.a3.passed {
        (half_minus(min_hat), BoundMethod::Grid)
    } else {
        (half_minus(max_hat), BoundMethod::GridWeak)
    };
    let note = match model.preset() {
        PresetSpec::Wishart { .. } => Some("no-hit-zero condition a >= 2/kappa + N - 1 fails; closed form not engaged".into()),
        _ => None,
    };
    Ok(DimensionBounds {
        lower: Some(lower),
        upper: half_minus(min_check),
        method,
        constants,
        note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid_for(rs: &RootSystem, m: &CoefficientModel) -> Vec<Vec<f64>> {
        interior_grid(rs, m, 512, 7)
    }

    #[test]
    fn dyson_coupling_everywhere() {
        let rs = RootSystem::build(Family::A, 3).unwrap();
        let m = CoefficientModel::dyson(0.25, 3).unwrap();
        let x = [0.0, 1.0, 3.0];
        for (i, r) in rs.sparse_roots().iter().enumerate() {
            assert_eq!(m.coupling(i, r, &x), 0.25);
        }
        assert_eq!(rs.num_positive(), 3);
    }

    #[test]
    fn preset_validation() {
        assert!(CoefficientModel::dyson(0.0, 3).is_err());
        assert!(matches!(
            make_preset(PresetSpec::Dyson { k: 1.0 }, Family::B, 3),
            Err(ModelError::WrongFamily { .. })
        ));
        assert!(CoefficientModel::bessel_b(0.1, -1.0, 2).is_err());
        assert!(CoefficientModel::wishart(1.0, 0.0, 2).is_err());
        // p = q = N + 1 = N - 1 + 2/k at k = 1
        for n in 2..6 {
            let p = n as f64 + 1.0;
            assert!(CoefficientModel::jacobi(1.0, p, p, n).is_ok());
            assert!(matches!(
                CoefficientModel::jacobi(1.0, p - 0.5, p, n),
                Err(ModelError::JacobiWall { .. })
            ));
        }
        assert!(make_preset(PresetSpec::Custom, Family::A, 2).is_err());
    }

    #[test]
    fn wishart_no_hit_example() {
        for n in 2..6 {
            assert!(wishart_no_hit(1.0, n as f64 + 1.0, n));
        }
    }

    #[test]
    fn wishart_map_and_inverse() {
        let (kappa, a) = wishart_param_map(0.5, 0.5, 2).unwrap();
        assert_eq!(kappa, 1.0);
        // kappa a = 2 k1 + 2 k2 (N - 1) + 1 = 1 + 1 + 1
        assert_eq!(a, 3.0);
        // k1 = 1/2 sits exactly on a = 2/kappa + N - 1
        for (k2, n) in [(0.3, 2), (0.7, 3), (1.9, 5)] {
            let (kappa, a) = wishart_param_map(0.5, k2, n).unwrap();
            assert_relative_eq!(a, 2.0 / kappa + n as f64 - 1.0, max_relative = 1e-15);
        }
        for (k1, k2, n) in [(0.5, 0.5, 2), (0.1, 0.4, 3), (2.5, 0.05, 4)] {
            let (kappa, a) = wishart_param_map(k1, k2, n).unwrap();
            let (b1, b2) = wishart_param_inverse(kappa, a, n).unwrap();
            assert_relative_eq!(b1, k1, max_relative = 4.0 * f64::EPSILON);
            assert_relative_eq!(b2, k2, max_relative = f64::EPSILON);
        }
        assert!(wishart_param_map(0.0, 1.0, 2).is_err());
    }

    #[test]
    fn dyson_passes_all_assumptions() {
        let rs = RootSystem::build(Family::A, 4).unwrap();
        let m = CoefficientModel::dyson(0.3, 4).unwrap();
        let r = validate_assumptions(&m, &rs, &grid_for(&rs, &m)).unwrap();
        assert!(r.a1.passed && r.a2.passed && r.a3.passed, "{r:?}");
    }

    #[test]
    fn jacobi_passes_a3_and_ratio_at_least_k() {
        let rs = RootSystem::build(Family::A, 3).unwrap();
        let m = CoefficientModel::jacobi(0.7, 6.0, 7.0, 3).unwrap();
        let grid = grid_for(&rs, &m);
        assert!(grid.len() > 400);
        let r = validate_assumptions(&m, &rs, &grid).unwrap();
        assert!(r.a1.passed && r.a2.passed && r.a3.passed, "{r:?}");
        for x in &grid {
            for b in 0..rs.num_positive() {
                assert!(m.ratio(&rs, b, x) >= 0.7 * (1.0 - 1e-12));
            }
        }
        let bounds = dimension_bound_predictor(&m, &rs, &grid).unwrap();
        assert_eq!(bounds.lower, None);
        assert_relative_eq!(bounds.upper, 0.5 - 0.7_f64.min(0.5), epsilon = 1e-15);
    }

    #[test]
    fn increasing_drift_fails_a2_with_witness() {
        let rs = RootSystem::build(Family::A, 3).unwrap();
        let m = CoefficientModel::custom(
            Family::A,
            3,
            Domain::REAL_LINE,
            Arc::new(|_| 1.0),
            Arc::new(|y| y),
            Arc::new(|_, _, _| 0.3),
        );
        let r = validate_assumptions(&m, &rs, &grid_for(&rs, &m)).unwrap();
        assert!(r.a1.passed && r.a3.passed);
        assert!(!r.a2.passed);
        let w = r.a2.witness.unwrap();
        assert!(w[1] - w[0] > 0.0 || w[2] - w[1] > 0.0);
        assert!(validate_assumptions(&m, &rs, &[]).is_err());
    }

    #[test]
    fn preset_closed_forms() {
        let a3 = RootSystem::build(Family::A, 3).unwrap();
        let m = CoefficientModel::dyson(0.25, 3).unwrap();
        let b = dimension_bound_predictor(&m, &a3, &grid_for(&a3, &m)).unwrap();
        assert_eq!((b.lower, b.upper), (Some(0.25), 0.25));
        assert_relative_eq!(b.constants.c_r, 2f64.sqrt(), epsilon = 1e-15);

        let b2 = RootSystem::build(Family::B, 2).unwrap();
        let m = CoefficientModel::bessel_b(0.1, 0.3, 2).unwrap();
        let b = dimension_bound_predictor(&m, &b2, &grid_for(&b2, &m)).unwrap();
        assert_relative_eq!(b.upper, 0.4, epsilon = 1e-15);
        assert_eq!(b.lower, Some(b.upper));

        let m = CoefficientModel::wishart(2.0, 2.0 / 2.0 + 3.0 - 1.0, 3).unwrap();
        let b = dimension_bound_predictor(&m, &a3, &grid_for(&a3, &m)).unwrap();
        assert_eq!((b.lower, b.upper), (Some(0.0), 0.0));
    }

    #[test]
    fn grid_constants_match_closed_forms() {
        // Constant ratios: inf = sup on any grid.
        let b3 = RootSystem::build(Family::B, 3).unwrap();
        let m = CoefficientModel::bessel_b(0.2, 0.35, 3).unwrap();
        let c = bound_constants(&m, &b3, &grid_for(&b3, &m));
        for s in &c.simple {
            let want = if s.root.iter().map(|v| v * v).sum::<i64>() == 1 { 0.2 } else { 0.35 };
            assert_relative_eq!(s.eta_check, want, epsilon = 1e-14);
            assert_relative_eq!(s.eta_hat, want, epsilon = 1e-14);
        }
        let a3 = RootSystem::build(Family::A, 3).unwrap();
        let m = CoefficientModel::wishart(0.6, 7.0, 3).unwrap();
        let c = bound_constants(&m, &a3, &grid_for(&a3, &m));
        for s in &c.simple {
            assert_relative_eq!(s.eta_check, 0.3, epsilon = 1e-12);
            assert_relative_eq!(s.eta_hat, 0.3, epsilon = 1e-12);
        }
    }

    #[test]
    fn custom_model_uses_grid_path() {
        let rs = RootSystem::build(Family::A, 3).unwrap();
        // harmonic confinement b = -y keeps A2; constant k keeps A3
        let m = CoefficientModel::custom(
            Family::A,
            3,
            Domain::REAL_LINE,
            Arc::new(|_| 1.0),
            Arc::new(|y| -y),
            Arc::new(|_, _, _| 0.2),
        );
        let b = dimension_bound_predictor(&m, &rs, &grid_for(&rs, &m)).unwrap();
        assert_eq!(b.method, BoundMethod::Grid);
        assert_relative_eq!(b.upper, 0.3, epsilon = 1e-12);
        assert_relative_eq!(b.lower.unwrap(), 0.3, epsilon = 1e-12);
        assert!(b.constants.b_hat > 0.0);

        let unbounded = CoefficientModel::custom(
            Family::A,
            3,
            Domain::REAL_LINE,
            Arc::new(|_| 1.0),
            Arc::new(|_| 0.0),
            Arc::new(|_, _, _| f64::INFINITY),
        );
        assert!(matches!(
            dimension_bound_predictor(&unbounded, &rs, &grid_for(&rs, &unbounded)),
            Err(ModelError::UnboundedRatio { .. })
        ));
    }

    #[test]
    fn grid_points_are_interior() {
        for (fam, n) in [(Family::A, 3), (Family::B, 3), (Family::D, 4)] {
            let rs = RootSystem::build(fam, n).unwrap();
            let m = make_preset(PresetSpec::BesselGeneral { k: 0.3 }, fam, n).unwrap();
            let g = interior_grid(&rs, &m, default_grid_size(n).min(4096), 1);
            assert!(!g.is_empty());
            for x in g {
                assert!(rs.min_projection(&x) > 0.0);
            }
        }
    }
}
