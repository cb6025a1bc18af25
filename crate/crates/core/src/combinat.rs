//! Binomial-coefficient ratios without ever forming the coefficients.
//!
//! Every Pass@k estimator reduces to ratios of the form `C(a, k) / C(b, k)`.
//! The ratio is evaluated as the telescoping product
//! `prod_{i < k} (a - i) / (b - i)`, which stays in `[0, 1]`, never overflows,
//! and is exact at both boundaries (0 when `a < k`, 1 when `a == b` or `k == 0`).
//! Zero-variance detection downstream depends on that boundary exactness.

use crate::error::{Error, Result};

/// A value of `C(a, k) / C(b, k)`, always inside `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct BinomRatio(f64);

impl BinomRatio {
    pub const ZERO: BinomRatio = BinomRatio(0.0);
    pub const ONE: BinomRatio = BinomRatio(1.0);

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<BinomRatio> for f64 {
    fn from(r: BinomRatio) -> f64 {
        r.0
    }
}

/// `C(a, k) / C(b, k)` for `a <= b` and `k <= b`.
pub fn binom_ratio(a: usize, b: usize, k: usize) -> Result<BinomRatio> {
    if a > b {
        return Err(Error::domain(format!(
            "binom_ratio: numerator top index {a} exceeds denominator top index {b}"
        )));
    }
    if k > b {
        return Err(Error::domain(format!(
            "binom_ratio: k = {k} exceeds denominator top index {b}"
        )));
    }
    if a < k {
        return Ok(BinomRatio::ZERO);
    }
    if k == 0 || a == b {
        return Ok(BinomRatio::ONE);
    }
    let mut acc = 1.0_f64;
    for i in 0..k {
        acc *= (a - i) as f64 / (b - i) as f64;
    }
    Ok(BinomRatio(acc.clamp(0.0, 1.0)))
}
