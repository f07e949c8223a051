//! Itô drift of `e_n` of the weighted squared projections, and the six-term
//! decomposition of the drift of `-ln e_n`. Both are runtime diagnostics:
//! they are evaluated at interior states and compared against Monte Carlo
//! finite differences in the test suites.

use serde::Serialize;
use thiserror::Error;

use crate::models::CoefficientModel;
use crate::roots::{RootError, RootSystem, Weights};
use crate::sympoly::SymValueTable;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DriftError {
    #[error("state is not interior: <x, alpha> = {projection} for root #{root}")]
    Boundary { root: usize, projection: f64 },
    #[error("order n = {n} outside 1..={m}")]
    Order { n: usize, m: usize },
    #[error("e_n vanishes at this state")]
    VanishingE,
    #[error(transparent)]
    Root(#[from] RootError),
}

/// Dense normalized roots `alpha* = alpha / w_alpha` and `<x, alpha*>`.
struct Normalized {
    roots: Vec<Vec<f64>>,
    proj: Vec<f64>,
    table: SymValueTable,
}

fn normalize(rs: &RootSystem, x: &[f64], w: &Weights, n: usize) -> Result<Normalized, DriftError> {
    w.check_for(rs)?;
    let m = rs.num_positive();
    if n == 0 || n > m {
        return Err(DriftError::Order { n, m });
    }
    let roots: Vec<Vec<f64>> = rs
        .positive_roots()
        .iter()
        .zip(w.as_slice())
        .map(|(r, wi)| r.iter().map(|&c| c as f64 / wi).collect())
        .collect();
    let mut proj = Vec::with_capacity(m);
    for (a, r) in roots.iter().enumerate() {
        let p: f64 = r.iter().zip(x).map(|(c, xi)| c * xi).sum();
        if !(p > 0.0) {
            return Err(DriftError::Boundary {
                root: a,
                projection: p,
            });
        }
        proj.push(p);
    }
    let sq: Vec<f64> = proj.iter().map(|p| p * p).collect();
    Ok(Normalized {
        roots,
        table: SymValueTable::build(&sq),
        proj,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The four groups of the drift of `e_n(A^w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EDriftTerms {
    pub b_term: f64,
    pub coupling: f64,
    pub sigma_diagonal: f64,
    pub sigma_off_diagonal: f64,
}

impl EDriftTerms {
    pub fn total(&self) -> f64 {
        self.b_term + self.coupling + self.sigma_diagonal + self.sigma_off_diagonal
    }
}

pub fn e_poly_drift_terms(
    x: &[f64],
    model: &CoefficientModel,
    rs: &RootSystem,
    w: &Weights,
    n: usize,
) -> Result<EDriftTerms, DriftError> {
    let nz = normalize(rs, x, w, n)?;
    let (m, dim) = (rs.num_positive(), rs.dim());
    let ni = n as i64;
    let t = &nz.table;
    let sig2: Vec<f64> = x.iter().map(|&v| model.sigma(v).powi(2)).collect();
    let k: Vec<f64> = (0..m)
        .map(|a| model.coupling(a, &rs.sparse_roots()[a], x))
        .collect();

    let mut b_term = 0.0;
    let mut sigma_diagonal = 0.0;
    for a in 0..m {
        let ea = t.e_without(ni - 1, a);
        let r = &nz.roots[a];
        for i in 0..dim {
            b_term += 2.0 * model.drift_b(x[i]) * r[i] * nz.proj[a] * ea;
            sigma_diagonal += sig2[i] * r[i] * r[i] * ea;
        }
    }
    let mut coupling = 0.0;
    let mut sigma_off_diagonal = 0.0;
    for a in 0..m {
        let ea = t.e_without(ni - 1, a);
        for b in 0..m {
            let ab = dot(&nz.roots[a], &nz.roots[b]);
            coupling += 2.0 * ab * nz.proj[a] / nz.proj[b] * ea * k[b];
            if a != b {
                let eab = t.e_without2(ni - 2, a, b);
                let s: f64 = (0..dim)
                    .map(|i| sig2[i] * nz.roots[a][i] * nz.roots[b][i])
                    .sum();
                sigma_off_diagonal += 2.0 * s * nz.proj[a] * nz.proj[b] * eab;
            }
        }
    }
    Ok(EDriftTerms {
        b_term,
        coupling,
        sigma_diagonal,
        sigma_off_diagonal,
    })
}

/// Full Itô drift of `e_n(A^w)` at an interior state.
pub fn e_poly_drift(
    x: &[f64],
    model: &CoefficientModel,
    rs: &RootSystem,
    w: &Weights,
    n: usize,
) -> Result<f64, DriftError> {
    Ok(e_poly_drift_terms(x, model, rs, w, n)?.total())
}

/// Quadratic-variation rate `sum_i sigma^2(x_i) (d e_n / d x_i)^2`.
pub fn e_poly_qv_rate(
    x: &[f64],
    model: &CoefficientModel,
    rs: &RootSystem,
    w: &Weights,
    n: usize,
) -> Result<f64, DriftError> {
    let nz = normalize(rs, x, w, n)?;
    let ni = n as i64;
    let mut qv = 0.0;
    for (i, &xi) in x.iter().enumerate() {
        let g: f64 = (0..rs.num_positive())
            .map(|a| 2.0 * nz.roots[a][i] * nz.proj[a] * nz.table.e_without(ni - 1, a))
            .sum();
        qv += model.sigma(xi).powi(2) * g * g;
    }
    Ok(qv)
}

/// `e_n(A^w)(x)`.
pub fn e_poly_value(x: &[f64], rs: &RootSystem, w: &Weights, n: usize) -> Result<f64, DriftError> {
    w.check_for(rs)?;
    let m = rs.num_positive();
    if n == 0 || n > m {
        return Err(DriftError::Order { n, m });
    }
    let sq: Vec<f64> = rs
        .projections(x)
        .iter()
        .zip(w.as_slice())
        .map(|(p, wi)| (p / wi).powi(2))
        .collect();
    Ok(crate::sympoly::elementary_all(&sq)[n])
}

/// The six drift components of `S = -ln e_n(A^w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogDriftComponents {
    pub a: [f64; 6],
}

impl LogDriftComponents {
    pub fn sum(&self) -> f64 {
        self.a.iter().sum()
    }
}

pub fn log_e_drift_components(
    x: &[f64],
    model: &CoefficientModel,
    rs: &RootSystem,
    w: &Weights,
    n: usize,
) -> Result<LogDriftComponents, DriftError> {
    let nz = normalize(rs, x, w, n)?;
    let (m, dim) = (rs.num_positive(), rs.dim());
    let ni = n as i64;
    let t = &nz.table;
    let en = t.e(ni);
    if !(en > 0.0) {
        return Err(DriftError::VanishingE);
    }
    let en2 = en * en;
    let sig2: Vec<f64> = x.iter().map(|&v| model.sigma(v).powi(2)).collect();
    let k: Vec<f64> = (0..m)
        .map(|a| model.coupling(a, &rs.sparse_roots()[a], x))
        .collect();

    let mut c = [0.0; 6];
    for a in 0..m {
        let ea1 = t.e_without(ni - 1, a);
        let ean = t.e_without(ni, a);
        let r = &nz.roots[a];
        let sq = nz.proj[a] * nz.proj[a];
        for i in 0..dim {
            c[0] += sig2[i] * r[i] * r[i] * (sq * ea1 - ean) * ea1;
            c[3] += model.drift_b(x[i]) * r[i] * nz.proj[a] * ea1;
        }
        c[4] += dot(r, r) * ea1 * k[a];
        for b in 0..m {
            if a == b {
                continue;
            }
            let s: f64 = (0..dim).map(|i| sig2[i] * r[i] * nz.roots[b][i]).sum();
            let pp = nz.proj[a] * nz.proj[b];
            let e1 = t.e_without2(ni - 1, a, b);
            c[1] += s * pp * e1 * e1;
            c[2] += s * pp * t.e_without2(ni, a, b) * t.e_without2(ni - 2, a, b);
            c[5] += dot(r, &nz.roots[b]) * nz.proj[a] / nz.proj[b] * ea1 * k[b];
        }
    }
    Ok(LogDriftComponents {
        a: [
            c[0] / en2,
            2.0 * c[1] / en2,
            -2.0 * c[2] / en2,
            -2.0 * c[3] / en,
            -2.0 * c[4] / en,
            -2.0 * c[5] / en,
        ],
    })
}
