//! Across-replication estimators.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// A sample mean with its 95% confidence halfwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    /// Infinite when fewer than two samples are available.
    pub ci_halfwidth: f64,
}

impl MeanCi {
    /// Whether `value` lies within `k` halfwidths of the mean.
    pub fn covers(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.ci_halfwidth
    }
}

/// Two-sided 95% Student-t quantile with `dof` degrees of freedom.
pub fn t_quantile_95(dof: usize) -> f64 {
    StudentsT::new(0.0, 1.0, dof as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975)
}

/// Mean and t-based 95% halfwidth of independent samples.
pub fn mean_ci(samples: &[f64]) -> MeanCi {
    let r = samples.len();
    if r == 0 {
        return MeanCi {
            mean: f64::NAN,
            ci_halfwidth: f64::INFINITY,
        };
    }
    let mean = samples.iter().sum::<f64>() / r as f64;
    if r < 2 {
        return MeanCi {
            mean,
            ci_halfwidth: f64::INFINITY,
        };
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
    MeanCi {
        mean,
        ci_halfwidth: t_quantile_95(r - 1) * (var / r as f64).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_quantiles() {
        assert!((t_quantile_95(1) - 12.7062).abs() < 1e-3);
        assert!((t_quantile_95(7) - 2.3646).abs() < 1e-3);
        assert!((t_quantile_95(100_000) - 1.95996).abs() < 1e-3);
    }

    #[test]
    fn ci_of_constant_and_single_samples() {
        let c = mean_ci(&[2.0, 2.0, 2.0]);
        assert_eq!(c.mean, 2.0);
        assert_eq!(c.ci_halfwidth, 0.0);
        assert!(mean_ci(&[1.0]).ci_halfwidth.is_infinite());
        let c = mean_ci(&[1.0, 3.0]);
        assert!((c.ci_halfwidth - 12.7062).abs() < 1e-3);
    }
}
