//! Squared Bessel reference processes: exact transitions, the law of the
//! first hitting time of zero, and the dimension of the zero set.
//!
//! The hitting law is the classical one (`T_0 = x0 / (2 G)` with
//! `G ~ Gamma(1 - delta/2, 1)`); it is not trusted blindly — the test suites
//! check it against a brute-force Brownian Monte Carlo at `delta = 1`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;
use thiserror::Error;

use crate::seeding::rng_from_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BesqError {
    #[error("time must be positive, got {0}")]
    NegativeTime(f64),
    #[error("dimension delta must be >= 0, got {0}")]
    NegativeDimension(f64),
    #[error("start x0 must be >= 0, got {0}")]
    NegativeStart(f64),
    #[error("BESQ({0}) never hits zero from a positive start (delta >= 2)")]
    NeverHits(f64),
    #[error("hitting probability needs x0 > 0, got {0}")]
    StartAtZero(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesqSpec {
    pub delta: f64,
    pub x0: f64,
}

impl BesqSpec {
    pub fn new(delta: f64, x0: f64) -> Result<Self, BesqError> {
        if !(delta >= 0.0) {
            return Err(BesqError::NegativeDimension(delta));
        }
        if !(x0 >= 0.0) {
            return Err(BesqError::NegativeStart(x0));
        }
        Ok(Self { delta, x0 })
    }

    /// Spec with dimension `2 eta + 1`.
    pub fn from_eta(eta: f64, x0: f64) -> Result<Self, BesqError> {
        Self::new(2.0 * eta + 1.0, x0)
    }

    pub fn eta(&self) -> f64 {
        (self.delta - 1.0) / 2.0
    }

    /// Whether zero is reached with positive probability (`delta < 2`).
    pub fn hits_zero(&self) -> bool {
        self.delta < 2.0
    }
}

/// One draw of `X_t` given `X_0 = x0`: `t * Gamma(delta/2 + Poisson(x0 / 2t), 2)`.
pub fn besq_transition_with<R: Rng + ?Sized>(spec: &BesqSpec, t: f64, rng: &mut R) -> Result<f64, BesqError> {
    if !(t > 0.0) {
        if t == 0.0 {
            return Ok(spec.x0);
        }
        return Err(BesqError::NegativeTime(t));
    }
    let lambda = spec.x0 / (2.0 * t);
    let j = if lambda > 0.0 {
        Poisson::new(lambda).expect("finite positive rate").sample(rng)
    } else {
        0.0
    };
    let shape = 0.5 * spec.delta + j;
    if shape <= 0.0 {
        return Ok(0.0);
    }
    let g = Gamma::new(shape, 2.0).expect("positive shape").sample(rng);
    Ok(t * g)
}

pub fn besq_exact_transition(spec: &BesqSpec, t: f64, seed: u64) -> Result<f64, BesqError> {
    besq_transition_with(spec, t, &mut rng_from_seed(seed))
}

/// `P(T_0 <= t)`, the upper regularized incomplete gamma `Q(1 - delta/2, x0 / 2t)`.
pub fn besq_hit_probability(spec: &BesqSpec, t: f64) -> Result<f64, BesqError> {
    if !spec.hits_zero() {
        return Err(BesqError::NeverHits(spec.delta));
    }
    if !(spec.x0 > 0.0) {
        return Err(BesqError::StartAtZero(spec.x0));
    }
    if !(t > 0.0) {
        return Err(BesqError::NegativeTime(t));
    }
    Ok(gamma_ur(1.0 - 0.5 * spec.delta, spec.x0 / (2.0 * t)))
}

/// `max(0, 1/2 - eta)` with `eta = (delta - 1)/2`, i.e. `max(0, 1 - delta/2)`.
pub fn besq_zero_dimension(spec: &BesqSpec) -> f64 {
    let via_eta = (0.5 - spec.eta()).max(0.0);
    let via_delta = (1.0 - 0.5 * spec.delta).max(0.0);
    debug_assert!((via_eta - via_delta).abs() < 1e-12);
    via_eta
}

/// Brute-force estimate of `P(T_0 <= t)` for `delta = 1`, where
/// `X = B^2` and `B` is a Brownian motion from `sqrt(x0)`.
///
/// Each path is simulated on `steps` grid points; a zero crossing inside a
/// step that ends on the same side is caught by the Brownian-bridge
/// crossing probability `exp(-2 a b / dt)`. Returns `(estimate, stderr)`.
pub fn bm_hit_probability_mc(x0: f64, t: f64, paths: usize, steps: usize, seed: u64) -> (f64, f64) {
    let mut rng = rng_from_seed(seed);
    let dt = t / steps as f64;
    let sd = dt.sqrt();
    let mut hits = 0usize;
    for _ in 0..paths {
        let mut b = x0.sqrt();
        for _ in 0..steps {
            let next = b + sd * rng.sample::<f64, _>(StandardNormal);
            if next <= 0.0 || rng.random::<f64>() < (-2.0 * b * next / dt).exp() {
                hits += 1;
                break;
            }
            b = next;
        }
    }
    let p = hits as f64 / paths as f64;
    (p, (p * (1.0 - p) / paths as f64).sqrt())
}

/// Exact BESQ samples on the grid `0, dt, 2dt, ..., T` (Markov chaining of
/// exact transitions).
pub fn besq_grid_path<R: Rng + ?Sized>(
    spec: &BesqSpec,
    horizon: f64,
    dt: f64,
    rng: &mut R,
) -> Result<Vec<f64>, BesqError> {
    let steps = (horizon / dt).round() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    let mut x = spec.x0;
    out.push(x);
    for _ in 0..steps {
        x = besq_transition_with(&BesqSpec { delta: spec.delta, x0: x }, dt, rng)?;
        out.push(x);
    }
    Ok(out)
}
