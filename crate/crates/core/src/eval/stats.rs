//! Effect sizes and association tests for paired proportions.

use crate::error::{Error, Result};

/// `2·asin(√p1) − 2·asin(√p2)`.
pub fn cohens_h(p1: f64, p2: f64) -> Result<f64> {
    for p in [p1, p2] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("proportion {p} is outside [0, 1]")));
        }
    }
    Ok(2.0 * p1.sqrt().asin() - 2.0 * p2.sqrt().asin())
}

/// Pearson chi-square for `[[a, b], [c, d]]` without continuity correction.
/// Returns 0 when any row or column total is 0.
pub fn chi_square_2x2(a: i64, b: i64, c: i64, d: i64) -> Result<f64> {
    if [a, b, c, d].iter().any(|&x| x < 0) {
        return Err(Error::Domain("contingency counts must be non-negative".into()));
    }
    let (a, b, c, d) = (a as f64, b as f64, c as f64, d as f64);
    let margins = (a + b) * (c + d) * (a + c) * (b + d);
    if margins == 0.0 {
        return Ok(0.0);
    }
    let n = a + b + c + d;
    Ok(n * (a * d - b * c).powi(2) / margins)
}
