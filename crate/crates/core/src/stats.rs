//! Sample means with normal-approximation confidence intervals.

use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.96;
/// One-sided 95% normal quantile.
pub const Z95_ONE_SIDED: f64 = 1.645;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    /// Half-width of the 95% interval; 0 with fewer than two samples.
    pub half_width: f64,
    pub sd: f64,
    pub n: usize,
}

impl MeanCi {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return MeanCi {
                mean: f64::NAN,
                half_width: 0.0,
                sd: 0.0,
                n,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let se = if n > 1 { sd / (n as f64).sqrt() } else { 0.0 };
        MeanCi {
            mean,
            half_width: Z95 * se,
            sd,
            n,
        }
    }

    /// Interval from a mean and its standard error over `n` samples.
    pub fn from_mean_se(mean: f64, se: f64, n: usize) -> Self {
        MeanCi {
            mean,
            half_width: Z95 * se,
            sd: se * (n as f64).sqrt(),
            n,
        }
    }

    /// Post-stratified mean: `values[k]` belongs to stratum `groups[k]`,
    /// strata are weighted by `weights`. Falls back to the plain sample
    /// mean when a positively weighted stratum has no samples.
    pub fn stratified(values: &[f64], groups: &[usize], weights: &[f64]) -> Self {
        let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); weights.len()];
        for (v, g) in values.iter().zip(groups) {
            buckets[*g].push(*v);
        }
        if buckets
            .iter()
            .zip(weights)
            .any(|(b, w)| *w > 0.0 && b.is_empty())
        {
            return Self::from_samples(values);
        }
        let mut mean = 0.0;
        let mut var = 0.0;
        for (b, w) in buckets.iter().zip(weights) {
            if *w == 0.0 {
                continue;
            }
            let m = Self::from_samples(b);
            mean += w * m.mean;
            var += w * w * m.se() * m.se();
        }
        Self::from_mean_se(mean, var.sqrt(), values.len())
    }

    pub fn lo(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.mean + self.half_width
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        if self.n > 1 {
            self.sd / (self.n as f64).sqrt()
        } else {
            0.0
        }
    }

    /// One-sided 95% lower confidence bound.
    pub fn lower_bound(&self) -> f64 {
        self.mean - Z95_ONE_SIDED * self.se()
    }

    /// One-sided 95% upper confidence bound.
    pub fn upper_bound(&self) -> f64 {
        self.mean + Z95_ONE_SIDED * self.se()
    }
}
