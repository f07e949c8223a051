//! Shared fixtures for the criterion benches.

use weylsim_core::{Family, RootSystem};

/// A point well inside the Weyl chamber of `rs`: coordinates `1, 2, ..., N`
/// (centred for type A).
pub fn interior_point(rs: &RootSystem) -> Vec<f64> {
    let n = rs.dim();
    let mut x: Vec<f64> = (1..=n).map(|i| i as f64).collect();
    if rs.family() == Family::A {
        let c = (n as f64 + 1.0) / 2.0;
        x.iter_mut().for_each(|v| *v -= c);
    }
    x
}
