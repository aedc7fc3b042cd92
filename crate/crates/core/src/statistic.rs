//! The modified Greenwood statistic
//!
//! ```text
//! S_n = sum |X_i|^2 / (sum |X_i|)^2,      1/n <= S_n <= 1
//! ```
//!
//! and the classical T_n, which is the same ratio restricted to positive
//! samples. Both sums are accumulated with [`ExactSum`], so the value does
//! not depend on the order of the sample and the bounds hold after rounding.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{two_product, ExactSum};

/// A validated test input: at least two finite values, not all zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample(Vec<f64>);

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_values(&values)?;
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<&[f64]> for Sample {
    type Error = Error;

    fn try_from(values: &[f64]) -> Result<Self> {
        Sample::new(values.to_vec())
    }
}

impl AsRef<[f64]> for Sample {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Value of S_n (or T_n) together with the sample size it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatisticValue {
    pub s_n: f64,
    pub n: usize,
}

impl StatisticValue {
    /// Wraps a raw value, checking `1/n <= s_n <= 1`.
    pub fn new(s_n: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidSample(format!("sample size {n} is below 2")));
        }
        let lower = 1.0 / n as f64;
        if !(lower..=1.0).contains(&s_n) {
            return Err(Error::InvalidSample(format!("statistic {s_n} outside [1/{n}, 1]")));
        }
        Ok(Self { s_n, n })
    }
}

fn check_values(values: &[f64]) -> Result<()> {
    if values.len() < 2 {
        return Err(Error::InvalidSample(format!(
            "need at least 2 observations, got {}",
            values.len()
        )));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidSample(format!("non-finite observation {bad}")));
    }
    if values.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidSample("all observations are zero".into()));
    }
    Ok(())
}

/// Reusable accumulator for computing S_n over many samples without
/// reallocating.
#[derive(Debug, Clone, Default)]
pub struct GreenwoodAccumulator {
    abs_sum: ExactSum,
    sq_sum: ExactSum,
}

impl GreenwoodAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// S_n of `values`, validating them first.
    pub fn compute(&mut self, values: &[f64]) -> Result<StatisticValue> {
        check_values(values)?;
        Ok(self.compute_unchecked(values))
    }

    fn compute_unchecked(&mut self, values: &[f64]) -> StatisticValue {
        let n = values.len();
        let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // Power-of-two rescaling is exact and keeps squares away from
        // overflow and underflow.
        let scale = power_of_two_scale(max_abs);
        self.abs_sum.clear();
        self.sq_sum.clear();
        for &v in values {
            let a = v.abs() * scale;
            self.abs_sum.add(a);
            let (p, e) = two_product(a, a);
            self.sq_sum.add(p);
            self.sq_sum.add(e);
        }
        let (num, num_lo) = self.sq_sum.value_dd();
        let (l1, l1_lo) = self.abs_sum.value_dd();
        // Divide (num + num_lo) by l1^2 in double-double so the result is
        // within about half an ulp of the exact ratio.
        let (den, den_e) = two_product(l1, l1);
        let den_lo = den_e + 2.0 * l1 * l1_lo;
        let q = num / den;
        let (qd, qd_e) = two_product(q, den);
        let rem = ((num - qd) - qd_e) + num_lo - q * den_lo;
        let ratio = q + rem / den;
        // The exact ratio lies in [1/n, 1]; clamping only removes rounding.
        let s_n = ratio.clamp(1.0 / n as f64, 1.0);
        StatisticValue { s_n, n }
    }
}

fn power_of_two_scale(max_abs: f64) -> f64 {
    const SAFE_LO: f64 = 1.0e-150;
    const SAFE_HI: f64 = 1.0e150;
    if (SAFE_LO..=SAFE_HI).contains(&max_abs) {
        return 1.0;
    }
    let exponent = max_abs.log2().floor() as i32;
    2.0f64.powi((-exponent).clamp(-1000, 1000))
}

/// The modified Greenwood statistic S_n of a validated sample.
pub fn modified_greenwood(sample: &Sample) -> StatisticValue {
    GreenwoodAccumulator::new().compute_unchecked(sample.values())
}

/// S_n of an arbitrary slice; fails on fewer than two values, non-finite
/// entries or an all-zero sample.
pub fn modified_greenwood_of(values: &[f64]) -> Result<StatisticValue> {
    GreenwoodAccumulator::new().compute(values)
}

/// Classical Greenwood statistic T_n of a strictly positive sample.
pub fn classical_greenwood(values: &[f64]) -> Result<StatisticValue> {
    if let Some(bad) = values.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::InvalidSample(format!(
            "classical Greenwood statistic needs positive observations, got {bad}"
        )));
    }
    modified_greenwood_of(values)
}

/// `sqrt(n) (n s_n / 2 - 1)`, the classical normalisation of T_n. Its limit
/// is standard normal for exponential samples, where E X^2 / (E X)^2 = 2.
pub fn normalized_statistic(stat: StatisticValue) -> f64 {
    let n = stat.n as f64;
    n.sqrt() * (n * stat.s_n / 2.0 - 1.0)
}

/// First four absolute moments E|X|^k of a sampling distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbsoluteMoments {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
}

impl AbsoluteMoments {
    pub fn gaussian() -> Self {
        let c = (2.0 / PI).sqrt();
        Self {
            m1: c,
            m2: 1.0,
            m3: 2.0 * c,
            m4: 3.0,
        }
    }

    pub fn exponential() -> Self {
        Self {
            m1: 1.0,
            m2: 2.0,
            m3: 6.0,
            m4: 24.0,
        }
    }

    /// Limit of n S_n: E X^2 / (E|X|)^2.
    pub fn ratio(&self) -> f64 {
        self.m2 / (self.m1 * self.m1)
    }

    /// Asymptotic variance of sqrt(n) (n S_n - ratio), by the delta method
    /// applied to (mean X^2, mean |X|).
    pub fn ratio_variance(&self) -> f64 {
        let d_sq = 1.0 / (self.m1 * self.m1);
        let d_abs = -2.0 * self.m2 / (self.m1 * self.m1 * self.m1);
        let var_sq = self.m4 - self.m2 * self.m2;
        let var_abs = self.m2 - self.m1 * self.m1;
        let cov = self.m3 - self.m2 * self.m1;
        d_sq * d_sq * var_sq + d_abs * d_abs * var_abs + 2.0 * d_sq * d_abs * cov
    }
}

/// `sqrt(n) (n s_n / r - 1) / (tau / r)`, where `r` and `tau^2` are the
/// limit and asymptotic variance of n S_n under `moments`. Asymptotically
/// standard normal whenever the fourth moment is finite; with exponential
/// moments it equals [`normalized_statistic`].
pub fn standardized_statistic(stat: StatisticValue, moments: &AbsoluteMoments) -> f64 {
    let n = stat.n as f64;
    let r = moments.ratio();
    let tau = moments.ratio_variance().sqrt();
    n.sqrt() * (n * stat.s_n / r - 1.0) / (tau / r)
}
