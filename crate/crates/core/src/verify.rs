//! Self-check suites behind `weylsim verify`: exact algebraic identities,
//! Monte Carlo consistency of the drift formulas, and validation of the
//! squared Bessel oracle against brute force.
//!
//! Every check reports a measured value next to the threshold it was held
//! to, so a report is useful even when everything passes.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analytics::{dimension_from_counts, ks_two_sample, BoxCounter, ScaleWindow};
use crate::besq::{besq_grid_path, besq_hit_probability, besq_transition_with, bm_hit_probability_mc, BesqSpec};
use crate::drift::{e_poly_drift, e_poly_value, log_e_drift_components};
use crate::models::{interior_grid, make_preset, CoefficientModel, PresetSpec};
use crate::roots::{dot_int, reflect_int, Family, RootSystem, Weights};
use crate::seeding::{point_seed, rng_from_seed};
use crate::sympoly::{elementary_excluding, residual_e_form2, residual_reflection_identities, sweep_e_form2_exact};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyScope {
    Algebra,
    Drift,
    Oracle,
    All,
}

impl VerifyScope {
    fn includes(self, other: VerifyScope) -> bool {
        self == VerifyScope::All || self == other
    }
}

impl fmt::Display for VerifyScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VerifyScope::Algebra => "algebra",
            VerifyScope::Drift => "drift",
            VerifyScope::Oracle => "oracle",
            VerifyScope::All => "all",
        })
    }
}

impl FromStr for VerifyScope {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "algebra" => Ok(VerifyScope::Algebra),
            "drift" => Ok(VerifyScope::Drift),
            "oracle" => Ok(VerifyScope::Oracle),
            "all" => Ok(VerifyScope::All),
            other => Err(format!("unknown scope '{other}' (expected algebra, drift, oracle or all)")),
        }
    }
}

/// Sizes of the randomized parts of the suites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Random inputs per root system for the exact identities.
    pub algebra_inputs: usize,
    /// Antithetic pairs per state and model for the drift checks.
    pub drift_draws: usize,
    /// Random interior states per model for the drift checks.
    pub drift_states: usize,
    /// Sample size for the oracle checks.
    pub oracle_samples: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            algebra_inputs: 100,
            drift_draws: 100_000,
            drift_states: 5,
            oracle_samples: 20_000,
            seed: 20240611,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub suite: VerifyScope,
    pub name: String,
    pub passed: bool,
    /// The measured quantity (a residual, a z-score, a distance, ...).
    pub value: f64,
    /// What `value` was compared against.
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub scope: VerifyScope,
    pub options: VerifyOptions,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

pub fn run_verify(scope: VerifyScope, options: &VerifyOptions) -> VerifyReport {
    let mut checks = Vec::new();
    if scope.includes(VerifyScope::Algebra) {
        checks.extend(algebra_checks(options));
    }
    if scope.includes(VerifyScope::Drift) {
        checks.extend(drift_checks(options));
    }
    if scope.includes(VerifyScope::Oracle) {
        checks.extend(oracle_checks(options));
    }
    VerifyReport {
        scope,
        options: *options,
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

/// All A/B/D systems of rank at most `max_rank` as `(family, N)`.
pub fn small_root_systems(max_rank: usize) -> Vec<(Family, usize)> {
    let mut out = Vec::new();
    for n in 2..=max_rank + 1 {
        out.push((Family::A, n));
    }
    for n in 2..=max_rank {
        out.push((Family::B, n));
    }
    for n in 3..=max_rank {
        out.push((Family::D, n));
    }
    out
}

/// Structural axioms of a built root system; returns the violations.
pub fn root_system_violations(rs: &RootSystem) -> Vec<String> {
    let mut bad = Vec::new();
    let roots = rs.roots();
    let positive = rs.positive_roots();
    if roots.len() != 2 * positive.len() {
        bad.push(format!("|R| = {} is not twice |R+| = {}", roots.len(), positive.len()));
    }
    for a in roots {
        for b in roots {
            match reflect_int(a, b) {
                Ok(Some(r)) if roots.contains(&r) => {}
                _ => bad.push(format!("s_{a:?}({b:?}) is not a root")),
            }
            // reduced: the only multiples of a root in R are +-1 times it
            if a.iter().zip(b).all(|(x, y)| x * 2 == *y) || a.iter().zip(b).all(|(x, y)| *x == y * 2) {
                bad.push(format!("{a:?} and {b:?} are proportional with ratio 2"));
            }
        }
    }
    let simple = rs.simple_roots();
    let rank = if rs.family() == Family::A { rs.dim() - 1 } else { rs.dim() };
    if simple.len() != rank {
        bad.push(format!("{} simple roots for rank {rank}", simple.len()));
    }
    for (i, p) in positive.iter().enumerate() {
        let coeffs = rs.simple_coefficients(i);
        let mut v = vec![0i64; rs.dim()];
        for (c, s) in coeffs.iter().zip(&simple) {
            for (vi, si) in v.iter_mut().zip(s) {
                *vi += *c as i64 * si;
            }
        }
        if &v != p {
            bad.push(format!("{p:?} is not the nonnegative combination {coeffs:?} of simple roots"));
        }
    }
    for (i, a) in simple.iter().enumerate() {
        for b in &simple[i + 1..] {
            if dot_int(a, b) > 0 {
                bad.push(format!("simple roots {a:?}, {b:?} have positive inner product"));
            }
        }
    }
    if rs.family() == Family::A {
        let n = rs.dim();
        if positive.len() != n * (n - 1) / 2 {
            bad.push(format!("A with N = {n} has {} positive roots", positive.len()));
        }
    }
    bad
}

fn random_rational<R: Rng>(rng: &mut R) -> BigRational {
    let num: i64 = rng.random_range(-50..=50);
    let den: i64 = rng.random_range(1..=12);
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Exact check of the form-2 identity and of both reflection identities on
/// `inputs` random rational inputs; returns `(nonzero residual count, total)`.
pub fn exact_identity_failures(rs: &RootSystem, inputs: usize, seed: u64) -> (usize, usize) {
    let mut rng = rng_from_seed(seed);
    let m = rs.num_positive();
    let mut failures = 0usize;
    let mut total = 0usize;
    for _ in 0..inputs {
        // squared projections of a random rational point; clearing the common
        // denominator keeps everything in BigInt (the identity is homogeneous)
        let x: Vec<BigRational> = (0..rs.dim()).map(|_| random_rational(&mut rng)).collect();
        let den = x.iter().fold(BigInt::from(1), |acc, q| acc * q.denom());
        let xi: Vec<BigInt> = x.iter().map(|q| q.numer() * (&den / q.denom())).collect();
        let sq: Vec<BigInt> = rs
            .positive_roots()
            .iter()
            .map(|r| {
                let p: BigInt = r.iter().zip(&xi).map(|(c, v)| BigInt::from(*c) * v).sum();
                &p * &p
            })
            .collect();
        sweep_e_form2_exact(&sq, |_, _, _, r| {
            total += 1;
            if !r.is_zero() {
                failures += 1;
            }
        });
        for b in 0..m {
            for (a, _) in rs.reflection_pairs_idx(b) {
                let (r1, r2) =
                    residual_reflection_identities(&x, rs.positive_root(a), rs.positive_root(b), rs).expect("valid pair");
                total += 2;
                failures += (!r1.is_zero()) as usize + (!r2.is_zero()) as usize;
            }
        }
    }
    (failures, total)
}

/// Largest relative residual of the form-2 identity in floating point, the
/// residual scaled by the sum of the magnitudes of its four terms.
pub fn float_form2_max_relative(rs: &RootSystem, inputs: usize, seed: u64) -> f64 {
    let mut rng = rng_from_seed(seed);
    let m = rs.num_positive();
    let mut worst: f64 = 0.0;
    for _ in 0..inputs {
        let x: Vec<f64> = (0..rs.dim()).map(|_| rng.random_range(-3.0..3.0)).collect();
        let sq: Vec<f64> = rs.projections(&x).iter().map(|p| p * p).collect();
        for i in 0..m {
            for j in (i + 1)..m {
                for n in 1..=m as i64 {
                    let r = residual_e_form2(&sq, n, i, j).expect("valid indices");
                    let e = |n: i64, ex: &[usize]| elementary_excluding(&sq, n, ex).expect("valid indices").abs();
                    let scale = e(n - 2, &[i, j]) * e(n, &[])
                        + e(n - 1, &[i]) * e(n - 1, &[j])
                        + e(n, &[i, j]) * e(n - 2, &[i, j])
                        + e(n - 1, &[i, j]).powi(2);
                    if scale > 0.0 {
                        worst = worst.max(r.abs() / scale);
                    }
                }
            }
        }
    }
    worst
}

fn algebra_checks(o: &VerifyOptions) -> Vec<CheckResult> {
    let mut out = Vec::new();
    for (idx, (family, n)) in small_root_systems(5).into_iter().enumerate() {
        let rs = RootSystem::build(family, n).expect("small systems build");
        let bad = root_system_violations(&rs);
        out.push(CheckResult {
            suite: VerifyScope::Algebra,
            name: format!("root axioms {family}{n}"),
            passed: bad.is_empty(),
            value: bad.len() as f64,
            threshold: 0.0,
            detail: bad.into_iter().take(3).collect::<Vec<_>>().join("; "),
        });
        let seed = point_seed(o.seed, idx as u64);
        let (fails, total) = exact_identity_failures(&rs, o.algebra_inputs, seed);
        out.push(CheckResult {
            suite: VerifyScope::Algebra,
            name: format!("exact identities {family}{n}"),
            passed: fails == 0,
            value: fails as f64,
            threshold: 0.0,
            detail: format!("{total} residuals evaluated in rational arithmetic"),
        });
        let rel = float_form2_max_relative(&rs, o.algebra_inputs.min(20), seed ^ 1);
        out.push(CheckResult {
            suite: VerifyScope::Algebra,
            name: format!("float form-2 {family}{n}"),
            passed: rel <= 1e-9,
            value: rel,
            threshold: 1e-9,
            detail: "max relative residual".into(),
        });
    }
    out
}

/// Antithetic one-step estimate of the generator of `f` at `x`:
/// `((f(x + b h + s) + f(x + b h - s)) / 2 - f(x)) / h` with `s` the Euler
/// noise. Returns `(mean, stderr)`.
pub fn mc_generator<F>(
    f: F,
    x: &[f64],
    model: &CoefficientModel,
    rs: &RootSystem,
    h: f64,
    draws: usize,
    seed: u64,
) -> (f64, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let mut rng = rng_from_seed(seed);
    let roots = rs.sparse_roots();
    let mut mean = x.to_vec();
    for (i, mi) in mean.iter_mut().enumerate() {
        *mi += model.drift_b(x[i]) * h;
    }
    for (a, r) in roots.iter().enumerate() {
        let c = model.coupling(a, r, x) / r.dot(x) * h;
        for (i, v) in r.entries() {
            mean[i] += c * v;
        }
    }
    let f0 = f(x);
    let sd: Vec<f64> = x.iter().map(|&xi| model.sigma(xi) * h.sqrt()).collect();
    let (mut s1, mut s2) = (0.0, 0.0);
    let mut plus = vec![0.0; x.len()];
    let mut minus = vec![0.0; x.len()];
    for _ in 0..draws {
        for i in 0..x.len() {
            let z: f64 = rng.sample(StandardNormal);
            plus[i] = mean[i] + sd[i] * z;
            minus[i] = mean[i] - sd[i] * z;
        }
        let y = (0.5 * (f(&plus) + f(&minus)) - f0) / h;
        s1 += y;
        s2 += y * y;
    }
    let n = draws as f64;
    let m = s1 / n;
    (m, ((s2 / n - m * m).max(0.0) / (n - 1.0)).sqrt())
}

/// One drift-consistency comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftComparison {
    pub model: String,
    pub state: Vec<f64>,
    pub n: usize,
    pub formula: f64,
    pub monte_carlo: f64,
    pub stderr: f64,
    /// The fifth component of the log drift (must be <= 0).
    pub a5: f64,
    /// `formula` of the log drift (sum of the six components).
    pub log_formula: f64,
    pub log_monte_carlo: f64,
    pub log_stderr: f64,
}

impl DriftComparison {
    pub fn z(&self) -> f64 {
        (self.formula - self.monte_carlo).abs() / self.stderr.max(1e-300)
    }
    pub fn log_z(&self) -> f64 {
        (self.log_formula - self.log_monte_carlo).abs() / self.log_stderr.max(1e-300)
    }
}

/// Compares the drift formulas with Monte Carlo on `states` interior states
/// for every order `n`.
pub fn drift_comparisons(
    label: &str,
    model: &CoefficientModel,
    rs: &RootSystem,
    states: usize,
    draws: usize,
    seed: u64,
) -> Vec<DriftComparison> {
    let w = Weights::root_norms(rs);
    let grid = interior_grid(rs, model, states, seed);
    let h = 1e-6;
    let mut out = Vec::new();
    for (si, x) in grid.iter().enumerate() {
        for n in 1..=rs.num_positive() {
            let s = point_seed(seed, (si * 64 + n) as u64);
            let f = |y: &[f64]| e_poly_value(y, rs, &w, n).unwrap_or(f64::NAN);
            let (mc, se) = mc_generator(f, x, model, rs, h, draws, s);
            let g = |y: &[f64]| -e_poly_value(y, rs, &w, n).map(f64::ln).unwrap_or(f64::NAN);
            let (lmc, lse) = mc_generator(g, x, model, rs, h, draws, s ^ 0x55);
            let comps = log_e_drift_components(x, model, rs, &w, n).expect("interior state");
            out.push(DriftComparison {
                model: label.to_string(),
                state: x.clone(),
                n,
                formula: e_poly_drift(x, model, rs, &w, n).expect("interior state"),
                monte_carlo: mc,
                stderr: se,
                a5: comps.a[4],
                log_formula: comps.sum(),
                log_monte_carlo: lmc,
                log_stderr: lse,
            });
        }
    }
    out
}

fn drift_checks(o: &VerifyOptions) -> Vec<CheckResult> {
    let cases: [(&str, PresetSpec, Family, usize); 4] = [
        ("dyson N=2", PresetSpec::Dyson { k: 0.3 }, Family::A, 2),
        ("dyson N=3", PresetSpec::Dyson { k: 0.7 }, Family::A, 3),
        ("bessel_b N=2", PresetSpec::BesselB { k1: 0.2, k2: 0.6 }, Family::B, 2),
        ("bessel_b N=3", PresetSpec::BesselB { k1: 0.4, k2: 0.3 }, Family::B, 3),
    ];
    let mut out = Vec::new();
    for (i, (label, spec, family, n)) in cases.into_iter().enumerate() {
        let rs = RootSystem::build(family, n).expect("valid system");
        let model = make_preset(spec, family, n).expect("valid preset");
        let cmp = drift_comparisons(label, &model, &rs, o.drift_states, o.drift_draws, point_seed(o.seed, 100 + i as u64));
        let worst = cmp.iter().map(|c| c.z().max(c.log_z())).fold(0.0, f64::max);
        // a Bonferroni-style allowance for the number of comparisons
        let limit = 3.0 + (2.0 * cmp.len() as f64).ln().sqrt().max(0.0) * 0.5;
        out.push(CheckResult {
            suite: VerifyScope::Drift,
            name: format!("drift vs Monte Carlo, {label}"),
            passed: worst <= limit,
            value: worst,
            threshold: limit,
            detail: format!("{} comparisons, worst |z| over e_n and -ln e_n", 2 * cmp.len()),
        });
        let max_a5 = cmp.iter().map(|c| c.a5).fold(f64::NEG_INFINITY, f64::max);
        out.push(CheckResult {
            suite: VerifyScope::Drift,
            name: format!("A5 sign, {label}"),
            passed: max_a5 <= 0.0,
            value: max_a5,
            threshold: 0.0,
            detail: "largest A5 over the evaluated states".into(),
        });
    }
    out
}

/// Box-count dimension of the zero set of a BESQ path sampled exactly on a
/// grid of `2^levels` steps over `[0, 1]`, pooled over `paths` paths.
///
/// A sample counts as zero when `X < dt`; the regression window stops four
/// levels above the grid so the threshold does not dominate.
pub fn besq_zero_set_dimension(
    delta: f64,
    x0: f64,
    levels: usize,
    paths: usize,
    seed: u64,
) -> crate::analytics::DimensionEstimate {
    let horizon = 1.0;
    let dt = horizon / (1u64 << levels) as f64;
    let spec = BesqSpec { delta, x0 };
    let mut summed = vec![0u64; levels + 1];
    for p in 0..paths {
        let mut rng = rng_from_seed(point_seed(seed, p as u64));
        let path = besq_grid_path(&spec, horizon, dt, &mut rng).expect("valid spec");
        let mut bc = BoxCounter::new(horizon, levels);
        let mut open: Option<f64> = None;
        for (i, &v) in path.iter().enumerate() {
            let t = i as f64 * dt;
            if v < dt {
                open.get_or_insert(t);
            } else if let Some(a) = open.take() {
                bc.add(a, t - dt);
            }
        }
        if let Some(a) = open {
            bc.add(a, horizon);
        }
        for (s, c) in summed.iter_mut().zip(&bc.counts) {
            *s += c;
        }
    }
    let window = ScaleWindow {
        min_level: 2,
        max_level: levels - 4,
    };
    dimension_from_counts(&summed, paths, horizon, window).expect("window fits")
}

fn oracle_checks(o: &VerifyOptions) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let n = o.oracle_samples;
    let mut rng = rng_from_seed(point_seed(o.seed, 200));
    // additivity: BESQ(d1, x1) + BESQ(d2, x2) has the law of BESQ(d1 + d2, x1 + x2)
    let (s1, s2, s12) = (
        BesqSpec { delta: 0.7, x0: 0.4 },
        BesqSpec { delta: 1.6, x0: 1.1 },
        BesqSpec { delta: 2.3, x0: 1.5 },
    );
    let t = 0.8;
    let sum: Vec<f64> = (0..n)
        .map(|_| besq_transition_with(&s1, t, &mut rng).unwrap() + besq_transition_with(&s2, t, &mut rng).unwrap())
        .collect();
    let direct: Vec<f64> = (0..n).map(|_| besq_transition_with(&s12, t, &mut rng).unwrap()).collect();
    let (d, p) = ks_two_sample(&sum, &direct);
    out.push(CheckResult {
        suite: VerifyScope::Oracle,
        name: "BESQ additivity (two-sample KS)".into(),
        passed: p > 1e-3,
        value: p,
        threshold: 1e-3,
        detail: format!("KS distance {d:.4} at {n} samples each; value is the p-value"),
    });
    // mean of the exact transition: x0 + delta t
    let mean = direct.iter().sum::<f64>() / n as f64;
    let var = direct.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let z = (mean - (s12.x0 + s12.delta * t)).abs() / (var / n as f64).sqrt();
    out.push(CheckResult {
        suite: VerifyScope::Oracle,
        name: "BESQ transition mean".into(),
        passed: z <= 3.0,
        value: z,
        threshold: 3.0,
        detail: "|z| of the sample mean against x0 + delta t".into(),
    });
    for (x0, t) in [(1.0, 1.0), (0.5, 2.0)] {
        let exact = besq_hit_probability(&BesqSpec { delta: 1.0, x0 }, t).unwrap();
        let (p, se) = bm_hit_probability_mc(x0, t, n, 2000, point_seed(o.seed, 201));
        let z = (p - exact).abs() / se.max(1e-12);
        out.push(CheckResult {
            suite: VerifyScope::Oracle,
            name: format!("hit probability vs Brownian MC, x0={x0}, t={t}"),
            passed: z <= 3.0,
            value: z,
            threshold: 3.0,
            detail: format!("law {exact:.4}, Monte Carlo {p:.4} +- {se:.4}"),
        });
    }
    let est = besq_zero_set_dimension(1.0, 0.0, 18, (n / 1000).max(8), point_seed(o.seed, 202));
    out.push(CheckResult {
        suite: VerifyScope::Oracle,
        name: "zero-set dimension of BESQ(1)".into(),
        passed: (est.value - 0.5).abs() <= 0.1,
        value: est.value,
        threshold: 0.1,
        detail: format!("target 0.5, tolerance 0.1, stderr {:.3}", est.stderr),
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scope_parsing() {
        assert_eq!("ALGEBRA".parse::<VerifyScope>().unwrap(), VerifyScope::Algebra);
        assert!("nope".parse::<VerifyScope>().is_err());
        assert!(VerifyScope::All.includes(VerifyScope::Drift));
        assert!(!VerifyScope::Oracle.includes(VerifyScope::Drift));
    }

    #[test]
    fn small_systems_cover_rank_five() {
        let s = small_root_systems(5);
        assert_eq!(s.len(), 5 + 4 + 3);
        for (f, n) in s {
            let bad = root_system_violations(&RootSystem::build(f, n).unwrap());
            assert!(bad.is_empty(), "{f}{n}: {bad:?}");
        }
    }

    #[test]
    fn exact_identities_hold_on_a_few_inputs() {
        let rs = RootSystem::build(Family::B, 3).unwrap();
        let (fails, total) = exact_identity_failures(&rs, 3, 1);
        assert_eq!(fails, 0);
        assert!(total > 0);
        assert!(float_form2_max_relative(&rs, 3, 2) < 1e-9);
    }

    #[test]
    fn generator_estimate_of_a_linear_function_is_its_drift() {
        let rs = RootSystem::build(Family::A, 2).unwrap();
        let m = CoefficientModel::dyson(0.5, 2).unwrap();
        // d(x2 - x1) = 2k / (x2 - x1) dt + noise
        let (mean, se) = mc_generator(|y| y[1] - y[0], &[0.0, 2.0], &m, &rs, 1e-4, 1000, 3);
        assert!((mean - 0.5).abs() < 1e-9, "{mean}");
        assert!(se < 1e-9);
    }

    #[test]
    fn brownian_zero_set_dimension_is_a_half() {
        let est = besq_zero_set_dimension(1.0, 0.0, 16, 8, 5);
        assert!((est.value - 0.5).abs() < 0.1, "{est:?}");
    }
}
