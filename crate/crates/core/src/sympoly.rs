//! Elementary symmetric polynomials of squared projections, their exclusion
//! variants, and residuals of the two algebraic identities the collision
//! analysis is built on.
//!
//! Everything here is generic over the scalar type so the same code runs in
//! exact arithmetic (`BigInt`, `BigRational`) for verification and in `f64`
//! for diagnostics along simulated paths.

use num_traits::{FromPrimitive, Num};
use thiserror::Error;

use crate::roots::{dot_int, RootError, RootSystem};

/// The largest exclusion set the analysis ever needs.
pub const MAX_EXCLUDED: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymError {
    #[error("order n = {n} outside -1..={m}")]
    OrderOutOfRange { n: i64, m: usize },
    #[error("excluded index {index} out of range for {m} values")]
    IndexOutOfRange { index: usize, m: usize },
    #[error("excluded index {0} listed twice")]
    DuplicateIndex(usize),
    #[error("at most {MAX_EXCLUDED} indices can be excluded, got {0}")]
    TooManyExcluded(usize),
    #[error("the identity needs two distinct indices, got i = j = {0}")]
    SameIndex(usize),
    #[error("the identity needs 1 <= n <= {m}, got {n}")]
    DegenerateOrder { n: i64, m: usize },
    #[error("roots are orthogonal; no reflection partner")]
    OrthogonalRoots,
    #[error("alpha and beta must be distinct roots")]
    EqualRoots,
    #[error(transparent)]
    Root(#[from] RootError),
}

/// `e_0, ..., e_M` of `values`, skipping the indices in `skip`, by the
/// prefix recurrence `e_n <- e_n + a * e_{n-1}`.
fn recurrence<T: Num + Clone>(values: &[T], skip: &[usize]) -> Vec<T> {
    let m = values.len() - skip.len().min(values.len());
    let mut e = vec![T::zero(); m + 1];
    e[0] = T::one();
    let mut k = 0;
    for (i, a) in values.iter().enumerate() {
        if skip.contains(&i) {
            continue;
        }
        k += 1;
        for n in (1..=k).rev() {
            e[n] = e[n].clone() + a.clone() * e[n - 1].clone();
        }
    }
    e
}

fn pick<T: Num + Clone>(e: &[T], n: i64) -> T {
    if n < 0 || n as usize >= e.len() {
        T::zero()
    } else {
        e[n as usize].clone()
    }
}

fn check_excluded(m: usize, excluded: &[usize]) -> Result<(), SymError> {
    if excluded.len() > MAX_EXCLUDED {
        return Err(SymError::TooManyExcluded(excluded.len()));
    }
    for (k, &i) in excluded.iter().enumerate() {
        if i >= m {
            return Err(SymError::IndexOutOfRange { index: i, m });
        }
        if excluded[..k].contains(&i) {
            return Err(SymError::DuplicateIndex(i));
        }
    }
    Ok(())
}

/// All `e_0..=e_M` of `values`.
pub fn elementary_all<T: Num + Clone>(values: &[T]) -> Vec<T> {
    recurrence(values, &[])
}

/// `e_n(values)`, with the conventions `e_0 = 1` and `e_{-1} = 0`.
pub fn elementary<T: Num + Clone>(values: &[T], n: i64) -> Result<T, SymError> {
    let m = values.len();
    if n < -1 || n > m as i64 {
        return Err(SymError::OrderOutOfRange { n, m });
    }
    if n == -1 {
        return Ok(T::zero());
    }
    Ok(recurrence(values, &[])[n as usize].clone())
}

/// `e_n` over the complement of `excluded` (at most three indices).
///
/// Orders beyond the size of the complement evaluate to zero, which is what
/// the expansion identities expect.
pub fn elementary_excluding<T: Num + Clone>(
    values: &[T],
    n: i64,
    excluded: &[usize],
) -> Result<T, SymError> {
    let m = values.len();
    if n < -1 || n > m as i64 {
        return Err(SymError::OrderOutOfRange { n, m });
    }
    check_excluded(m, excluded)?;
    Ok(pick(&recurrence(values, excluded), n))
}

/// Residual of
/// `e^{ij}_{n-2} e_n = e^i_{n-1} e^j_{n-1} + e^{ij}_n e^{ij}_{n-2} - (e^{ij}_{n-1})^2`,
/// where superscripts list excluded indices. Identically zero.
pub fn residual_e_form2<T: Num + Clone>(
    values: &[T],
    n: i64,
    i: usize,
    j: usize,
) -> Result<T, SymError> {
    let m = values.len();
    if n < 1 || n > m as i64 {
        return Err(SymError::DegenerateOrder { n, m });
    }
    if i == j {
        return Err(SymError::SameIndex(i));
    }
    check_excluded(m, &[i, j])?;
    let full = recurrence(values, &[]);
    let ei = recurrence(values, &[i]);
    let ej = recurrence(values, &[j]);
    let eij = recurrence(values, &[i, j]);
    Ok(form2(&full, &ei, &ej, &eij, n))
}

fn form2<T: Num + Clone>(full: &[T], ei: &[T], ej: &[T], eij: &[T], n: i64) -> T {
    let lhs = pick(eij, n - 2) * pick(full, n);
    let e1 = pick(eij, n - 1);
    let rhs = pick(ei, n - 1) * pick(ej, n - 1) + pick(eij, n) * pick(eij, n - 2) - e1.clone() * e1;
    lhs - rhs
}

/// Runs the form-2 identity for every order `n` and every unordered pair
/// `i < j`, calling `visit(n, i, j, residual)`.
///
/// Exclusions are obtained by exact deflation (`e^i_n = e_n - a_i e^i_{n-1}`),
/// which is O(M) per exclusion but only numerically sound in exact arithmetic.
pub fn sweep_e_form2_exact<T, F>(values: &[T], mut visit: F)
where
    T: Num + Clone,
    F: FnMut(i64, usize, usize, &T),
{
    let m = values.len();
    let full = recurrence(values, &[]);
    let singles: Vec<Vec<T>> = values.iter().map(|a| deflate(&full, a)).collect();
    for i in 0..m {
        for j in (i + 1)..m {
            let eij = deflate(&singles[i], &values[j]);
            for n in 1..=(m as i64) {
                let r = form2(&full, &singles[i], &singles[j], &eij, n);
                visit(n, i, j, &r);
            }
        }
    }
}

/// Removes one value from a full `e_0..=e_k` vector.
fn deflate<T: Num + Clone>(e: &[T], a: &T) -> Vec<T> {
    let k = e.len() - 1;
    let mut out = vec![T::zero(); k];
    if k == 0 {
        return out;
    }
    out[0] = T::one();
    for n in 1..k {
        out[n] = e[n].clone() - a.clone() * out[n - 1].clone();
    }
    out
}

/// Residuals of the two reflection identities
///
/// `<a,b><x,a> + <b,g><x,g> - 2<x,b>/|b|^2` and
/// `<a,b><x,g> + <b,g><x,a> - 2<a,b><b,g><x,b>/|b|^2`,
///
/// with `g` the positive representative of `±s_b(a)`.
pub fn residual_reflection_identities<T: Num + Clone + FromPrimitive>(
    x: &[T],
    alpha: &[i64],
    beta: &[i64],
    rs: &RootSystem,
) -> Result<(T, T), SymError> {
    let a = rs
        .positive_index(alpha)
        .ok_or_else(|| RootError::NotPositiveRoot(alpha.to_vec()))?;
    let b = rs
        .positive_index(beta)
        .ok_or_else(|| RootError::NotPositiveRoot(beta.to_vec()))?;
    if a == b {
        return Err(SymError::EqualRoots);
    }
    if dot_int(alpha, beta) == 0 {
        return Err(SymError::OrthogonalRoots);
    }
    if x.len() != rs.dim() {
        return Err(RootError::DimensionMismatch {
            expected: rs.dim(),
            got: x.len(),
        }
        .into());
    }
    let g = rs
        .reflected_partner(b, a)
        .ok_or(SymError::OrthogonalRoots)?;
    Ok(reflection_residuals_with(x, alpha, beta, rs.positive_root(g)))
}

/// The same residuals with an explicitly supplied `gamma` (any sign).
pub fn reflection_residuals_with<T: Num + Clone + FromPrimitive>(
    x: &[T],
    alpha: &[i64],
    beta: &[i64],
    gamma: &[i64],
) -> (T, T) {
    let c = |v: i64| T::from_i64(v).expect("small integers are representable");
    let xdot = |r: &[i64]| {
        r.iter()
            .zip(x)
            .fold(T::zero(), |acc, (ri, xi)| acc + c(*ri) * xi.clone())
    };
    let ab = c(dot_int(alpha, beta));
    let bg = c(dot_int(beta, gamma));
    let bb = c(dot_int(beta, beta));
    let two = c(2);
    let (xa, xb, xg) = (xdot(alpha), xdot(beta), xdot(gamma));
    let r1 = ab.clone() * xa.clone() + bg.clone() * xg.clone() - two.clone() * xb.clone() / bb.clone();
    let r2 = ab.clone() * xg + bg.clone() * xa - two * ab * bg * xb / bb;
    (r1, r2)
}

/// Precomputed elementary symmetric values of one configuration: `e_n`,
/// plus every single and pairwise exclusion.
///
/// Triple exclusions are evaluated on demand through [`Self::excluding`].
#[derive(Debug, Clone)]
pub struct SymValueTable {
    values: Vec<f64>,
    full: Vec<f64>,
    single: Vec<Vec<f64>>,
    // pair[i][j - i - 1] for i < j
    pair: Vec<Vec<Vec<f64>>>,
}

impl SymValueTable {
    pub fn build(values: &[f64]) -> Self {
        let m = values.len();
        let full = recurrence(values, &[]);
        let single = (0..m).map(|i| recurrence(values, &[i])).collect();
        let pair = (0..m)
            .map(|i| ((i + 1)..m).map(|j| recurrence(values, &[i, j])).collect())
            .collect();
        Self {
            values: values.to_vec(),
            full,
            single,
            pair,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `e_n`; zero for `n < 0` or `n > M`.
    pub fn e(&self, n: i64) -> f64 {
        pick(&self.full, n)
    }

    /// `e^{i}_n`.
    pub fn e_without(&self, n: i64, i: usize) -> f64 {
        pick(&self.single[i], n)
    }

    /// `e^{ij}_n` (symmetric in `i, j`; `i == j` falls back to single exclusion).
    pub fn e_without2(&self, n: i64, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => pick(&self.pair[i][j - i - 1], n),
            std::cmp::Ordering::Greater => pick(&self.pair[j][i - j - 1], n),
            std::cmp::Ordering::Equal => self.e_without(n, i),
        }
    }

    /// General exclusion (up to three indices).
    pub fn excluding(&self, n: i64, excluded: &[usize]) -> Result<f64, SymError> {
        elementary_excluding(&self.values, n, excluded)
    }
}
