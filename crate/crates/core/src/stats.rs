//! Estimators, intervals, least-squares fits and float formatting.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// CDF of a centered normal with variance `var`.
pub fn normal_cdf(x: f64, var: f64) -> f64 {
    std_normal_cdf(x / var.sqrt())
}

/// Density of a centered normal with variance `var`.
pub fn normal_pdf(x: f64, var: f64) -> f64 {
    (-x * x / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Formats a float with 17 significant digits (`NaN`/`inf` spelled out).
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Running mean and variance (Welford).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanVar {
    pub n: u64,
    mean: f64,
    m2: f64,
}

impl MeanVar {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &MeanVar) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * self.n as f64 * other.n as f64 / n as f64;
        self.n = n;
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Mean and standard error of a sample.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let mut acc = MeanVar::default();
    xs.iter().for_each(|&x| acc.push(x));
    (acc.mean(), acc.stderr())
}

/// Wilson score interval for `k` successes out of `n` at normal quantile `z`.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Binomial standard error `sqrt(p (1 - p) / n)`.
pub fn proportion_stderr(k: u64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = k as f64 / n as f64;
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Batch-means estimate of `sum(num) / sum(den)` and its standard error.
///
/// The samples are split into `batches` consecutive batches with sums
/// `N_b, D_b`; the error is the linearised spread
/// `sqrt(b / (b - 1) sum_b (N_b - R D_b)^2) / sum(den)`, which stays finite
/// when some batch has `D_b = 0`.
pub fn ratio_batch_means(num: &[f64], den: &[f64], batches: usize) -> (f64, f64) {
    assert_eq!(num.len(), den.len());
    let total_den: f64 = den.iter().sum();
    if total_den == 0.0 {
        return (f64::NAN, f64::NAN);
    }
    let ratio = num.iter().sum::<f64>() / total_den;
    let b = batches.max(2).min(num.len().max(2));
    let size = num.len() / b;
    if size == 0 {
        return (ratio, f64::NAN);
    }
    let mut ss = 0.0;
    for i in 0..b {
        let range = i * size..if i + 1 == b {
            num.len()
        } else {
            (i + 1) * size
        };
        let d: f64 = den[range.clone()].iter().sum();
        let r = num[range].iter().sum::<f64>() - ratio * d;
        ss += r * r;
    }
    let bf = b as f64;
    (ratio, (bf / (bf - 1.0) * ss).sqrt() / total_den)
}

/// Batch-means estimate of a mean with its standard error.
pub fn batch_means(xs: &[f64], batches: usize) -> (f64, f64) {
    let ones = vec![1.0; xs.len()];
    ratio_batch_means(xs, &ones, batches)
}

/// Ordinary least-squares line `y = slope x + intercept`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub slope_stderr: f64,
}

/// Weighted least squares; `weights = None` means unit weights.
pub fn linear_fit(x: &[f64], y: &[f64], weights: Option<&[f64]>) -> LinearFit {
    let n = x.len();
    assert!(n >= 2 && y.len() == n);
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let sw: f64 = (0..n).map(w).sum();
    let mx = (0..n).map(|i| w(i) * x[i]).sum::<f64>() / sw;
    let my = (0..n).map(|i| w(i) * y[i]).sum::<f64>() / sw;
    let sxx: f64 = (0..n).map(|i| w(i) * (x[i] - mx).powi(2)).sum();
    let sxy: f64 = (0..n).map(|i| w(i) * (x[i] - mx) * (y[i] - my)).sum();
    let syy: f64 = (0..n).map(|i| w(i) * (y[i] - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = (0..n)
        .map(|i| w(i) * (y[i] - intercept - slope * x[i]).powi(2))
        .sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let slope_stderr = if n > 2 {
        (sse / (n - 2) as f64 / sxx).sqrt()
    } else {
        f64::NAN
    };
    LinearFit {
        slope,
        intercept,
        r2,
        slope_stderr,
    }
}

/// Least squares `y = c x` through the origin; returns `(c, R^2)` with the
/// coefficient of determination taken about the mean of `y`.
pub fn fit_through_origin(x: &[f64], y: &[f64]) -> (f64, f64) {
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let c = sxy / sxx;
    let my = y.iter().sum::<f64>() / y.len() as f64;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - c * a).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    (c, if syy > 0.0 { 1.0 - sse / syy } else { 1.0 })
}

/// Richardson extrapolation of values `f(h_i)` assumed to follow
/// `f0 + c1 h + c2 h^2 + ...`; returns the polynomial value at `h = 0`.
pub fn richardson(h: &[f64], f: &[f64]) -> f64 {
    // Lagrange interpolation evaluated at zero.
    let n = h.len();
    (0..n)
        .map(|i| {
            let li: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| h[j] / (h[j] - h[i]))
                .product();
            li * f[i]
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normal_cdf_values() {
        assert!((std_normal_cdf(0.0) - 0.5).abs() < 1e-16);
        let p = std_normal_cdf(1.959963984540054);
        assert!((p - 0.975).abs() < 1e-10, "{p:e}");
        assert!((normal_cdf(-1.0, 4.0) - std_normal_cdf(-0.5)).abs() < 1e-16);
    }

    #[test]
    fn float_format_has_17_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(f64::NAN), "NaN");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn wilson_contains_estimate() {
        let (lo, hi) = wilson_interval(30, 100, 1.96);
        assert!(lo < 0.3 && 0.3 < hi);
        let (lo, hi) = wilson_interval(0, 50, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.1);
    }

    #[test]
    fn fits_recover_lines() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [3.0, 5.0, 7.0, 9.0];
        let f = linear_fit(&x, &y, None);
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        let (c, r2) = fit_through_origin(&x, &[2.0, 4.0, 6.0, 8.0]);
        assert!((c - 2.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn richardson_removes_polynomial_terms() {
        let h = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];
        let f: Vec<f64> = h.iter().map(|h| 0.25 - 0.3 * h + 0.7 * h * h).collect();
        assert!((richardson(&h, &f) - 0.25).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn merged_accumulators_match(xs in prop::collection::vec(-10.0f64..10.0, 2..60), cut in 0usize..60) {
            let cut = cut.min(xs.len());
            let mut a = MeanVar::default();
            let mut b = MeanVar::default();
            let mut all = MeanVar::default();
            xs[..cut].iter().for_each(|&x| a.push(x));
            xs[cut..].iter().for_each(|&x| b.push(x));
            xs.iter().for_each(|&x| all.push(x));
            a.merge(&b);
            prop_assert!((a.mean() - all.mean()).abs() < 1e-9);
            prop_assert!((a.variance() - all.variance()).abs() < 1e-8);
        }

        #[test]
        fn wilson_is_ordered(k in 0u64..100, extra in 0u64..100) {
            let n = k + extra + 1;
            let (lo, hi) = wilson_interval(k, n, 1.96);
            prop_assert!(0.0 <= lo && lo <= hi && hi <= 1.0);
        }
    }
}
