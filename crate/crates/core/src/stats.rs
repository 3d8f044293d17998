//! Small statistical helpers shared by the estimators.

use std::fmt;

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// A Monte Carlo or plug-in estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn new(value: f64, std_error: f64) -> Self {
        Estimate { value, std_error }
    }

    pub fn exact(value: f64) -> Self {
        Estimate::new(value, 0.0)
    }

    /// Significance of the estimate's distance from zero, in standard errors.
    pub fn z_score(&self) -> f64 {
        self.value / self.std_error
    }

    /// Standard error of the difference of two independent estimates.
    pub fn combined_error(&self, other: &Estimate) -> f64 {
        self.std_error.hypot(other.std_error)
    }
}

impl fmt::Display for Estimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6e} ± {:.2e}", self.value, self.std_error)
    }
}

/// Running mean and sum of squared deviations (Welford), mergeable.
#[derive(Clone, Copy, Debug, Default)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        let delta = v - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (v - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
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
        self.m2 += other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    /// Mean with the standard error of the mean.
    pub fn estimate(&self) -> Estimate {
        Estimate::new(self.mean, (self.variance() / self.n as f64).sqrt())
    }
}

/// Upper tail `P(X > x)` of the chi-square distribution.
pub fn chi_square_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let dist = ChiSquared::new(df).expect("degrees of freedom must be positive");
    dist.sf(x).clamp(0.0, 1.0)
}

/// Two-sided normal p-value `2 P(Z > |z|)`.
pub fn normal_two_sided(z: f64) -> f64 {
    let n = Normal::standard();
    (2.0 * n.sf(z.abs())).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_merge_matches_single_pass() {
        let data: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let mut all = Moments::default();
        data.iter().for_each(|&v| all.push(v));
        let mut left = Moments::default();
        let mut right = Moments::default();
        data[..313].iter().for_each(|&v| left.push(v));
        data[313..].iter().for_each(|&v| right.push(v));
        left.merge(&right);
        assert_eq!(left.n, all.n);
        assert!((left.mean - all.mean).abs() < 1e-12);
        assert!((left.variance() - all.variance()).abs() < 1e-9);
    }

    #[test]
    fn tails() {
        // 95th percentile of chi-square(1) is 3.841459
        assert!((chi_square_sf(3.841_458_820_694_124, 1.0) - 0.05).abs() < 1e-9);
        assert!((normal_two_sided(1.959_963_984_540_054) - 0.05).abs() < 1e-9);
        assert_eq!(chi_square_sf(0.0, 3.0), 1.0);
        assert!(normal_two_sided(31.6) < 1e-10);
    }
}
