//! Root systems of type A_{N-1}, B_N and D_N.
//!
//! Roots are stored exactly, as integer vectors in the standard basis of R^N.
//! The positive subsystem is the standard one (`e_j - e_i`, `e_j + e_i` for
//! `i < j`, plus `e_i` for type B), which makes the Weyl chamber
//!
//! * A: `x_1 < x_2 < ... < x_N`
//! * B: `0 < x_1 < x_2 < ... < x_N`
//! * D: `|x_1| < x_2 < ... < x_N`
//!
//! Simple roots are found by the decomposition test: a positive root is simple
//! iff it is not the sum of two positive roots.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use num_traits::Num;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// An exact root: integer coordinates in the standard basis.
pub type Root = Vec<i64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RootError {
    #[error("unsupported root system {family}_{n}: {reason}")]
    UnsupportedRank {
        family: Family,
        n: usize,
        reason: &'static str,
    },
    #[error("reflection through the zero vector is undefined")]
    ZeroMirror,
    #[error("vector length mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{0:?} is not a positive root of this system")]
    NotPositiveRoot(Root),
    #[error("weight for positive root #{index} must be strictly positive, got {value}")]
    NonPositiveWeight { index: usize, value: f64 },
    #[error("expected one weight per positive root ({expected}), got {got}")]
    WeightCount { expected: usize, got: usize },
    #[error("simple-root decomposition failed for {0:?}")]
    Decomposition(Root),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    A,
    B,
    D,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::A => "A",
            Family::B => "B",
            Family::D => "D",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" | "a" => Ok(Family::A),
            "B" | "b" => Ok(Family::B),
            "D" | "d" => Ok(Family::D),
            other => Err(format!("unknown root system family `{other}` (expected A, B or D)")),
        }
    }
}

/// A positive root with at most two nonzero coordinates, kept in a form that
/// is cheap to evaluate in the simulation hot path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseRoot {
    idx: [usize; 2],
    coef: [f64; 2],
    len: usize,
    norm_sq: f64,
}

impl SparseRoot {
    fn from_dense(root: &[i64]) -> Self {
        let mut idx = [0; 2];
        let mut coef = [0.0; 2];
        let mut len = 0;
        for (i, &c) in root.iter().enumerate() {
            if c != 0 {
                assert!(len < 2, "roots of A/B/D have at most two nonzero coordinates");
                idx[len] = i;
                coef[len] = c as f64;
                len += 1;
            }
        }
        let norm_sq = coef[..len].iter().map(|c| c * c).sum();
        Self { idx, coef, len, norm_sq }
    }

    /// `<x, alpha>`.
    #[inline]
    pub fn dot(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for k in 0..self.len {
            s += self.coef[k] * x[self.idx[k]];
        }
        s
    }

    /// Iterates over `(coordinate, coefficient)` for the nonzero coordinates.
    #[inline]
    pub fn entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.len).map(move |k| (self.idx[k], self.coef[k]))
    }

    #[inline]
    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }
}

/// Position of a configuration relative to the closed Weyl chamber.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum ChamberPosition {
    Interior,
    /// `order` projections vanish (within tolerance); `active` lists their
    /// indices into the positive roots.
    Boundary { order: usize, active: Vec<usize> },
    Outside,
}

#[derive(Debug, Clone)]
pub struct RootSystem {
    family: Family,
    n: usize,
    roots: Vec<Root>,
    positive: Vec<Root>,
    simple: Vec<usize>,
    // decomposition[i][s] = coefficient of simple root s in positive root i
    decomposition: Vec<Vec<u32>>,
    sparse: Vec<SparseRoot>,
    index: HashMap<Root, usize>,
}

fn unit(n: usize, i: usize) -> Root {
    let mut v = vec![0; n];
    v[i] = 1;
    v
}

fn pair(n: usize, i: usize, j: usize, sign_i: i64) -> Root {
    let mut v = vec![0; n];
    v[j] = 1;
    v[i] = sign_i;
    v
}

/// Lexicographic order on coordinate vectors.
pub fn lex_cmp(a: &[i64], b: &[i64]) -> Ordering {
    a.iter().cmp(b.iter())
}

pub fn dot_int(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Reflection of `target` through the hyperplane orthogonal to `mirror`,
/// `target - 2 <mirror, target> / <mirror, mirror> * mirror`.
///
/// Generic over the scalar so that the same formula serves exact rationals
/// and floating point.
pub fn reflect_in<T: Num + Clone>(mirror: &[T], target: &[T]) -> Result<Vec<T>, RootError> {
    if mirror.len() != target.len() {
        return Err(RootError::DimensionMismatch {
            expected: mirror.len(),
            got: target.len(),
        });
    }
    let mm = dot_generic(mirror, mirror);
    if mm.is_zero() {
        return Err(RootError::ZeroMirror);
    }
    let two = T::one() + T::one();
    let factor = two * dot_generic(mirror, target) / mm;
    Ok(target
        .iter()
        .zip(mirror)
        .map(|(t, m)| t.clone() - factor.clone() * m.clone())
        .collect())
}

pub fn reflect(mirror: &[f64], target: &[f64]) -> Result<Vec<f64>, RootError> {
    reflect_in(mirror, target)
}

/// Exact reflection of one integer root in another. Returns `None` when the
/// result is not integral (never the case inside a crystallographic system).
pub fn reflect_int(mirror: &[i64], target: &[i64]) -> Result<Option<Root>, RootError> {
    if mirror.len() != target.len() {
        return Err(RootError::DimensionMismatch {
            expected: mirror.len(),
            got: target.len(),
        });
    }
    let mm = dot_int(mirror, mirror);
    if mm == 0 {
        return Err(RootError::ZeroMirror);
    }
    let num = 2 * dot_int(mirror, target);
    if num % mm != 0 {
        return Ok(None);
    }
    let f = num / mm;
    Ok(Some(target.iter().zip(mirror).map(|(t, m)| t - f * m).collect()))
}

pub(crate) fn dot_generic<T: Num + Clone>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (x, y)| acc + x.clone() * y.clone())
}

impl RootSystem {
    /// Builds the full root system with its standard positive subsystem.
    ///
    /// `n` is the ambient dimension (number of particles). A needs `n >= 2`,
    /// B needs `n >= 2`, D needs `n >= 3` (D_2 is reducible).
    pub fn build(family: Family, n: usize) -> Result<Self, RootError> {
        match family {
            Family::A | Family::B if n < 2 => {
                return Err(RootError::UnsupportedRank {
                    family,
                    n,
                    reason: "need at least two coordinates",
                })
            }
            Family::D if n < 3 => {
                return Err(RootError::UnsupportedRank {
                    family,
                    n,
                    reason: "D_N requires N >= 3 (D_2 splits into two orthogonal A_1 factors)",
                })
            }
            _ => {}
        }

        let mut positive = Vec::new();
        if family == Family::B {
            positive.extend((0..n).map(|i| unit(n, i)));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                positive.push(pair(n, i, j, -1));
                if family != Family::A {
                    positive.push(pair(n, i, j, 1));
                }
            }
        }

        let index: HashMap<Root, usize> = positive
            .iter()
            .enumerate()
            .map(|(i, r)| (r.clone(), i))
            .collect();

        // simple = not a sum of two positive roots
        let mut simple = Vec::new();
        for (bi, beta) in positive.iter().enumerate() {
            let decomposable = positive.iter().any(|a| {
                let rest: Root = beta.iter().zip(a).map(|(b, a)| b - a).collect();
                index.contains_key(&rest)
            });
            if !decomposable {
                simple.push(bi);
            }
        }

        let decomposition = decompose_all(&positive, &simple, &index)?;
        let sparse = positive.iter().map(|r| SparseRoot::from_dense(r)).collect();

        let mut roots = positive.clone();
        roots.extend(positive.iter().map(|r| r.iter().map(|c| -c).collect::<Root>()));

        Ok(Self {
            family,
            n,
            roots,
            positive,
            simple,
            decomposition,
            sparse,
            index,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Ambient dimension N.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of positive roots, M.
    pub fn num_positive(&self) -> usize {
        self.positive.len()
    }

    pub fn roots(&self) -> &[Root] {
        &self.roots
    }

    pub fn positive_roots(&self) -> &[Root] {
        &self.positive
    }

    pub fn positive_root(&self, i: usize) -> &[i64] {
        &self.positive[i]
    }

    pub fn sparse_roots(&self) -> &[SparseRoot] {
        &self.sparse
    }

    /// Indices (into the positive roots) of the simple roots.
    pub fn simple_indices(&self) -> &[usize] {
        &self.simple
    }

    pub fn simple_roots(&self) -> Vec<Root> {
        self.simple.iter().map(|&i| self.positive[i].clone()).collect()
    }

    pub fn is_simple(&self, i: usize) -> bool {
        self.simple.contains(&i)
    }

    pub fn norm_sq(&self, i: usize) -> i64 {
        dot_int(&self.positive[i], &self.positive[i])
    }

    /// Index of a positive root, if it is one.
    pub fn positive_index(&self, root: &[i64]) -> Option<usize> {
        self.index.get(root).copied()
    }

    fn require_positive(&self, root: &[i64]) -> Result<usize, RootError> {
        self.positive_index(root)
            .ok_or_else(|| RootError::NotPositiveRoot(root.to_vec()))
    }

    /// Coefficients of positive root `i` over the simple roots (same order as
    /// [`simple_indices`](Self::simple_indices)).
    pub fn simple_coefficients(&self, i: usize) -> &[u32] {
        &self.decomposition[i]
    }

    /// Indices of the simple roots with a nonzero coefficient in root `i`.
    pub fn support(&self, i: usize) -> Vec<usize> {
        self.decomposition[i]
            .iter()
            .zip(&self.simple)
            .filter(|(c, _)| **c > 0)
            .map(|(_, &s)| s)
            .collect()
    }

    /// Partial root order: `alpha <= beta` iff the simple-root support of
    /// `alpha` is contained in that of `beta`.
    pub fn root_order_leq(&self, alpha: &[i64], beta: &[i64]) -> Result<bool, RootError> {
        let a = self.require_positive(alpha)?;
        let b = self.require_positive(beta)?;
        Ok(self.order_leq_idx(a, b))
    }

    pub fn order_leq_idx(&self, a: usize, b: usize) -> bool {
        self.decomposition[a]
            .iter()
            .zip(&self.decomposition[b])
            .all(|(ca, cb)| *ca == 0 || *cb > 0)
    }

    /// The positive representative of `±s_beta(alpha)`.
    pub fn reflected_partner(&self, beta: usize, alpha: usize) -> Option<usize> {
        let r = reflect_int(&self.positive[beta], &self.positive[alpha]).ok()??;
        if let Some(i) = self.positive_index(&r) {
            return Some(i);
        }
        let neg: Root = r.iter().map(|c| -c).collect();
        self.positive_index(&neg)
    }

    /// All pairs `(alpha, gamma)` of positive roots with `alpha != beta`,
    /// `<alpha, beta> != 0` and `gamma = ±s_beta(alpha)` positive.
    ///
    /// Each unordered pair appears once, with `alpha` the lexicographically
    /// smaller root. Returned as indices into the positive roots.
    pub fn reflection_pairs(&self, beta: &[i64]) -> Result<Vec<(usize, usize)>, RootError> {
        let b = self.require_positive(beta)?;
        Ok(self.reflection_pairs_idx(b))
    }

    pub fn reflection_pairs_idx(&self, b: usize) -> Vec<(usize, usize)> {
        let beta = &self.positive[b];
        let mut out = Vec::new();
        for (a, alpha) in self.positive.iter().enumerate() {
            if a == b || dot_int(alpha, beta) == 0 {
                continue;
            }
            let Some(g) = self.reflected_partner(b, a) else {
                continue;
            };
            if g == b || g == a {
                continue;
            }
            if lex_cmp(alpha, &self.positive[g]) == Ordering::Less {
                out.push((a, g));
            }
        }
        out
    }

    /// Classifies `x` as interior, boundary of order m, or outside.
    pub fn chamber_classify(&self, x: &[f64], tol: f64) -> ChamberPosition {
        let mut active = Vec::new();
        for (i, r) in self.sparse.iter().enumerate() {
            let p = r.dot(x);
            if p < -tol {
                return ChamberPosition::Outside;
            }
            if p <= tol {
                active.push(i);
            }
        }
        if active.is_empty() {
            ChamberPosition::Interior
        } else {
            ChamberPosition::Boundary {
                order: active.len(),
                active,
            }
        }
    }

    /// `<x, alpha>` for every positive root.
    pub fn projections(&self, x: &[f64]) -> Vec<f64> {
        self.sparse.iter().map(|r| r.dot(x)).collect()
    }

    /// Smallest `<x, alpha>` over the positive roots.
    pub fn min_projection(&self, x: &[f64]) -> f64 {
        self.sparse
            .iter()
            .map(|r| r.dot(x))
            .fold(f64::INFINITY, f64::min)
    }

    /// Squared weighted projections `<x, alpha/w_alpha>^2`.
    pub fn weighted_projections(
        &self,
        x: &[f64],
        weights: &Weights,
    ) -> Result<WeightedProjectionSet, RootError> {
        if x.len() != self.n {
            return Err(RootError::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        weights.check_for(self)?;
        let projections = self.projections(x);
        let squared = projections
            .iter()
            .zip(weights.as_slice())
            .map(|(p, w)| (p / w) * (p / w))
            .collect();
        Ok(WeightedProjectionSet {
            weights: weights.clone(),
            projections,
            squared,
        })
    }

    pub fn to_json(&self) -> RootSystemJson {
        RootSystemJson {
            family: self.family,
            n: self.n,
            roots: self.roots.clone(),
            positive_roots: self.positive.clone(),
            simple_roots: self.simple_roots(),
        }
    }
}

fn decompose_all(
    positive: &[Root],
    simple: &[usize],
    index: &HashMap<Root, usize>,
) -> Result<Vec<Vec<u32>>, RootError> {
    let m = positive.len();
    let mut out: Vec<Option<Vec<u32>>> = vec![None; m];
    for (s, &i) in simple.iter().enumerate() {
        let mut c = vec![0; simple.len()];
        c[s] = 1;
        out[i] = Some(c);
    }
    // peel off simple roots until we land on an already-decomposed root
    loop {
        let mut progress = false;
        for b in 0..m {
            if out[b].is_some() {
                continue;
            }
            for (s, &si) in simple.iter().enumerate() {
                let rest: Root = positive[b]
                    .iter()
                    .zip(&positive[si])
                    .map(|(x, y)| x - y)
                    .collect();
                if let Some(&r) = index.get(&rest) {
                    if let Some(c) = out[r].clone() {
                        let mut c = c;
                        c[s] += 1;
                        out[b] = Some(c);
                        progress = true;
                        break;
                    }
                }
            }
        }
        if out.iter().all(Option::is_some) {
            break;
        }
        if !progress {
            let bad = out.iter().position(Option::is_none).unwrap();
            return Err(RootError::Decomposition(positive[bad].clone()));
        }
    }
    Ok(out.into_iter().map(Option::unwrap).collect())
}

/// JSON description used for golden files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootSystemJson {
    pub family: Family,
    #[serde(rename = "N")]
    pub n: usize,
    pub roots: Vec<Root>,
    pub positive_roots: Vec<Root>,
    pub simple_roots: Vec<Root>,
}

/// Strictly positive weights `w_alpha`, one per positive root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights(Vec<f64>);

impl Weights {
    pub fn new(values: Vec<f64>) -> Result<Self, RootError> {
        for (index, &value) in values.iter().enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(RootError::NonPositiveWeight { index, value });
            }
        }
        Ok(Self(values))
    }

    pub fn uniform(rs: &RootSystem) -> Self {
        Self(vec![1.0; rs.num_positive()])
    }

    /// `w_alpha = |alpha|`, so that every normalized root has unit length.
    pub fn root_norms(rs: &RootSystem) -> Self {
        Self(rs.sparse.iter().map(|r| r.norm_sq().sqrt()).collect())
    }

    pub fn scaled(&self, c: f64) -> Result<Self, RootError> {
        Self::new(self.0.iter().map(|w| w * c).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn check_for(&self, rs: &RootSystem) -> Result<(), RootError> {
        if self.0.len() != rs.num_positive() {
            return Err(RootError::WeightCount {
                expected: rs.num_positive(),
                got: self.0.len(),
            });
        }
        Ok(())
    }
}

/// Projections of a configuration onto the positive roots, raw and weighted.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedProjectionSet {
    pub weights: Weights,
    /// `<x, alpha>`
    pub projections: Vec<f64>,
    /// `<x, alpha*>^2 = <x, alpha>^2 / w_alpha^2`
    pub squared: Vec<f64>,
}

impl WeightedProjectionSet {
    /// Indices of the vanishing projections (within `tol` on the raw value).
    pub fn vanishing(&self, tol: f64) -> Vec<usize> {
        self.projections
            .iter()
            .enumerate()
            .filter(|(_, p)| p.abs() <= tol)
            .map(|(i, _)| i)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn e(n: usize, i: usize) -> Root {
        unit(n, i)
    }

    fn add(a: &[i64], b: &[i64]) -> Root {
        a.iter().zip(b).map(|(x, y)| x + y).collect()
    }

    fn sub(a: &[i64], b: &[i64]) -> Root {
        a.iter().zip(b).map(|(x, y)| x - y).collect()
    }

    fn as_set(v: Vec<Root>) -> HashSet<Root> {
        v.into_iter().collect()
    }

    #[test]
    fn counts_of_positive_roots() {
        assert_eq!(RootSystem::build(Family::A, 3).unwrap().num_positive(), 3);
        for n in 2..7 {
            let a = RootSystem::build(Family::A, n).unwrap();
            assert_eq!(a.num_positive(), n * (n - 1) / 2);
            let b = RootSystem::build(Family::B, n).unwrap();
            assert_eq!(b.num_positive(), n * n);
        }
        for n in 3..7 {
            let d = RootSystem::build(Family::D, n).unwrap();
            assert_eq!(d.num_positive(), n * (n - 1));
        }
    }

    #[test]
    fn b2_positive_roots_by_enumeration() {
        let b = RootSystem::build(Family::B, 2).unwrap();
        let (e1, e2) = (e(2, 0), e(2, 1));
        let expected = as_set(vec![e1.clone(), e2.clone(), sub(&e2, &e1), add(&e2, &e1)]);
        assert_eq!(as_set(b.positive_roots().to_vec()), expected);
    }

    #[test]
    fn simple_roots_examples() {
        let a2 = RootSystem::build(Family::A, 2).unwrap();
        assert_eq!(a2.simple_roots(), a2.positive_roots().to_vec());

        let a3 = RootSystem::build(Family::A, 3).unwrap();
        let (e1, e2, e3) = (e(3, 0), e(3, 1), e(3, 2));
        assert_eq!(
            as_set(a3.simple_roots()),
            as_set(vec![sub(&e2, &e1), sub(&e3, &e2)])
        );

        let b2 = RootSystem::build(Family::B, 2).unwrap();
        assert_eq!(
            as_set(b2.simple_roots()),
            as_set(vec![e(2, 0), sub(&e(2, 1), &e(2, 0))])
        );

        let d3 = RootSystem::build(Family::D, 3).unwrap();
        assert_eq!(
            as_set(d3.simple_roots()),
            as_set(vec![add(&e2, &e1), sub(&e2, &e1), sub(&e3, &e2)])
        );
    }

    #[test]
    fn rejects_degenerate_ranks() {
        assert!(RootSystem::build(Family::A, 1).is_err());
        assert!(RootSystem::build(Family::B, 1).is_err());
        assert!(matches!(
            RootSystem::build(Family::D, 2),
            Err(RootError::UnsupportedRank { .. })
        ));
    }

    #[test]
    fn reflect_examples() {
        assert_eq!(reflect(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), vec![-1.0, 0.0]);
        let swapped = reflect(&[-1.0, 1.0, 0.0], &[3.0, 7.0, 5.0]).unwrap();
        assert_eq!(swapped, vec![7.0, 3.0, 5.0]);
        assert_eq!(reflect(&[0.0, 0.0], &[1.0, 2.0]), Err(RootError::ZeroMirror));
    }

    #[test]
    fn root_order_examples() {
        let a3 = RootSystem::build(Family::A, 3).unwrap();
        let (e1, e2, e3) = (e(3, 0), e(3, 1), e(3, 2));
        assert!(a3.root_order_leq(&sub(&e2, &e1), &sub(&e3, &e1)).unwrap());
        assert!(!a3.root_order_leq(&sub(&e3, &e2), &sub(&e2, &e1)).unwrap());
        assert!(a3.root_order_leq(&sub(&e3, &e1), &sub(&e3, &e1)).unwrap());
        assert!(matches!(
            a3.root_order_leq(&sub(&e1, &e2), &sub(&e3, &e1)),
            Err(RootError::NotPositiveRoot(_))
        ));
    }

    #[test]
    fn reflection_pair_examples() {
        let a3 = RootSystem::build(Family::A, 3).unwrap();
        let (e1, e2, e3) = (e(3, 0), e(3, 1), e(3, 2));
        let pairs = a3.reflection_pairs(&sub(&e2, &e1)).unwrap();
        let as_roots: Vec<(Root, Root)> = pairs
            .iter()
            .map(|&(a, g)| (a3.positive_root(a).to_vec(), a3.positive_root(g).to_vec()))
            .collect();
        assert!(as_roots.contains(&(sub(&e3, &e1), sub(&e3, &e2))));
        assert_eq!(as_roots.len(), 1);

        let a2 = RootSystem::build(Family::A, 2).unwrap();
        assert!(a2.reflection_pairs(&[-1, 1]).unwrap().is_empty());

        let b2 = RootSystem::build(Family::B, 2).unwrap();
        let pairs = b2.reflection_pairs(&[1, 0]).unwrap();
        let as_roots: Vec<(Root, Root)> = pairs
            .iter()
            .map(|&(a, g)| (b2.positive_root(a).to_vec(), b2.positive_root(g).to_vec()))
            .collect();
        assert!(as_roots.contains(&(vec![-1, 1], vec![1, 1])));
        assert!(matches!(
            b2.reflection_pairs(&[-1, 0]),
            Err(RootError::NotPositiveRoot(_))
        ));
    }

    #[test]
    fn chamber_classify_examples() {
        let a3 = RootSystem::build(Family::A, 3).unwrap();
        assert_eq!(a3.chamber_classify(&[1.0, 2.0, 3.0], 0.0), ChamberPosition::Interior);
        match a3.chamber_classify(&[1.0, 1.0, 3.0], 0.0) {
            ChamberPosition::Boundary { order, active } => {
                assert_eq!(order, 1);
                assert_eq!(a3.positive_root(active[0]), &[-1, 1, 0]);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(a3.chamber_classify(&[2.0, 1.0, 3.0], 0.0), ChamberPosition::Outside);

        let b2 = RootSystem::build(Family::B, 2).unwrap();
        assert!(matches!(
            b2.chamber_classify(&[0.0, 0.0], 0.0),
            ChamberPosition::Boundary { order: 4, .. }
        ));
    }

    #[test]
    fn weighted_projection_examples() {
        let a2 = RootSystem::build(Family::A, 2).unwrap();
        let set = a2
            .weighted_projections(&[0.0, 1.0], &Weights::uniform(&a2))
            .unwrap();
        assert_eq!(set.squared, vec![1.0]);

        let b3 = RootSystem::build(Family::B, 3).unwrap();
        let w = Weights::root_norms(&b3);
        for (r, wi) in b3.sparse_roots().iter().zip(w.as_slice()) {
            assert!((r.norm_sq() / (wi * wi) - 1.0).abs() < 1e-15);
        }

        let x = [0.0, 0.0, 2.0];
        let base = b3.weighted_projections(&x, &w).unwrap();
        let scaled = b3.weighted_projections(&x, &w.scaled(3.7).unwrap()).unwrap();
        let zeros = |s: &WeightedProjectionSet| {
            s.squared
                .iter()
                .enumerate()
                .filter(|(_, v)| **v == 0.0)
                .map(|(i, _)| i)
                .collect::<Vec<_>>()
        };
        assert_eq!(zeros(&base), zeros(&scaled));

        assert!(matches!(
            Weights::new(vec![1.0, 0.0]),
            Err(RootError::NonPositiveWeight { index: 1, .. })
        ));
        assert!(matches!(
            b3.weighted_projections(&x, &Weights::uniform(&a2)),
            Err(RootError::WeightCount { .. })
        ));
    }

    #[test]
    fn json_description_shape() {
        let a3 = RootSystem::build(Family::A, 3).unwrap();
        let v = serde_json::to_value(a3.to_json()).unwrap();
        assert_eq!(v["family"], "A");
        assert_eq!(v["N"], 3);
        assert_eq!(v["roots"].as_array().unwrap().len(), 6);
        assert_eq!(v["positive_roots"].as_array().unwrap().len(), 3);
        assert_eq!(v["simple_roots"].as_array().unwrap().len(), 2);
    }
}
