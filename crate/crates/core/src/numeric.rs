//! Numerical building blocks: correctly rounded summation, the modified
//! Bessel function I0, quadrature, root bracketing and the Gaussian and
//! Student-t distribution functions.

use statrs::function::{beta, erf};

/// Correctly rounded floating-point sum.
///
/// Keeps a list of non-overlapping partial sums (Shewchuk's algorithm, the
/// same scheme as Python's `math.fsum`). The result is the exact sum rounded
/// once, so it does not depend on the order in which terms are added.
#[derive(Debug, Clone, Default)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        Self {
            partials: Vec::with_capacity(8),
        }
    }

    pub fn clear(&mut self) {
        self.partials.clear();
    }

    /// Adds a finite term.
    pub fn add(&mut self, value: f64) {
        let mut x = value;
        let mut kept = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        self.partials.truncate(kept);
        self.partials.push(x);
    }

    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let Some(&top) = p.last() else {
            return 0.0;
        };
        let mut idx = p.len() - 1;
        let mut hi = top;
        let mut lo = 0.0;
        while idx > 0 {
            let x = hi;
            let y = p[idx - 1];
            idx -= 1;
            hi = x + y;
            lo = y - (hi - x);
            if lo != 0.0 {
                break;
            }
        }
        // Half-way case: make the rounding of hi + lo correct.
        if idx > 0 && ((lo < 0.0 && p[idx - 1] < 0.0) || (lo > 0.0 && p[idx - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
        hi
    }

    /// The exact sum as `hi + lo`, with `hi` correctly rounded and `lo` the
    /// correctly rounded remainder.
    pub fn value_dd(&self) -> (f64, f64) {
        let hi = self.value();
        let mut rest = self.clone();
        rest.add(-hi);
        (hi, rest.value())
    }
}

/// Error-free product: `a * b == p + e` exactly, barring overflow or
/// underflow.
pub fn two_product(a: f64, b: f64) -> (f64, f64) {
    fn split(x: f64) -> (f64, f64) {
        let c = 134_217_729.0 * x;
        let hi = c - (c - x);
        (hi, x - hi)
    }
    let p = a * b;
    let (ah, al) = split(a);
    let (bh, bl) = split(b);
    let e = ((ah * bh - p) + ah * bl + al * bh) + al * bl;
    (p, e)
}

impl Extend<f64> for ExactSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for v in iter {
            self.add(v);
        }
    }
}

/// Correctly rounded sum of a slice.
pub fn exact_sum(values: &[f64]) -> f64 {
    let mut acc = ExactSum::new();
    acc.extend(values.iter().copied());
    acc.value()
}

/// Zeroth-order modified Bessel function of the first kind, by its power
/// series. Accurate to a few ulps for |x| below a few hundred.
pub fn bessel_i0(x: f64) -> f64 {
    let half_sq = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= half_sq / (k * k);
        sum += term;
        if term <= sum * 1e-17 {
            return sum;
        }
        k += 1.0;
    }
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(&f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Inverts a non-decreasing function by bracket expansion and bisection.
///
/// Returns x with `f(x) ≈ target`, located to absolute width `tol`.
pub fn invert_monotone<F: Fn(f64) -> f64>(f: F, target: f64, start: f64, tol: f64) -> f64 {
    let mut lo = start - 1.0;
    let mut hi = start + 1.0;
    let mut step = 1.0;
    while f(lo) > target {
        step *= 2.0;
        lo -= step;
    }
    step = 1.0;
    while f(hi) < target {
        step *= 2.0;
        hi += step;
    }
    for _ in 0..400 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn standard_normal_cdf(x: f64) -> f64 {
    0.5 * erf::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn standard_normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erf::erfc_inv(2.0 * p)
}

/// CDF of Student's t with `nu` degrees of freedom.
pub fn student_t_cdf(x: f64, nu: f64) -> f64 {
    if x == 0.0 {
        return 0.5;
    }
    let tail = 0.5 * beta::beta_reg(0.5 * nu, 0.5, nu / (nu + x * x));
    if x > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}
