//! Small estimator statistics: means, variances with standard errors,
//! confidence intervals, Wilson bounds.

use serde::{Deserialize, Serialize};

/// Two-sided normal quantiles for the three supported confidence levels.
pub fn z_value(confidence: f64) -> f64 {
    if (confidence - 0.90).abs() < 1e-12 {
        1.644_853_626_951_472_7
    } else if (confidence - 0.95).abs() < 1e-12 {
        1.959_963_984_540_054
    } else if (confidence - 0.99).abs() < 1e-12 {
        2.575_829_303_548_901
    } else {
        panic!("confidence must be one of 0.9, 0.95, 0.99")
    }
}

/// A point estimate with a symmetric confidence radius.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub half_width: f64,
}

impl Estimate {
    pub fn lo(&self) -> f64 {
        self.value - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.value + self.half_width
    }

    pub fn overlaps(&self, other: &Estimate) -> bool {
        self.lo() <= other.hi() && other.lo() <= self.hi()
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
}

/// Mean with normal-approximation CI.
pub fn mean_estimate(xs: &[f64], confidence: f64) -> Estimate {
    let n = xs.len() as f64;
    let se = (sample_variance(xs) / n).sqrt();
    Estimate { value: mean(xs), half_width: z_value(confidence) * se }
}

/// Sample variance with a fourth-moment standard error,
/// Var(s²) ≈ (m₄ − (n−3)/(n−1)·s⁴)/n, robust to non-normal F.
pub fn variance_estimate(xs: &[f64], confidence: f64) -> Estimate {
    let n = xs.len() as f64;
    let m = mean(xs);
    let s2 = sample_variance(xs);
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    let var_s2 = ((m4 - (n - 3.0) / (n - 1.0) * s2 * s2) / n).max(0.0);
    Estimate { value: s2, half_width: z_value(confidence) * var_s2.sqrt() }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, confidence: f64) -> (f64, f64) {
    let z = z_value(confidence);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Two-sample Kolmogorov–Smirnov-style statistic of a sample against a CDF
/// given as a callable.
pub fn ks_statistic(sample_sorted: &[f64], cdf: &dyn Fn(f64) -> f64) -> f64 {
    let n = sample_sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sample_sorted.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variance_of_known_sample() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert!((sample_variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn wilson_contains_p_hat() {
        let (lo, hi) = wilson_interval(50, 1000, 0.95);
        assert!(lo < 0.05 && 0.05 < hi);
    }

    #[test]
    fn ks_of_exact_uniform_grid_is_small() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let d = ks_statistic(&xs, &|x| x.clamp(0.0, 1.0));
        assert!(d <= 0.5e-3 + 1e-12);
    }
}
