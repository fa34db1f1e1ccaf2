use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStat {
    pub metric: String,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_samples: usize,
    pub bootstrap_n: usize,
    pub level: f64,
}

impl AggregateStat {
    pub fn overlaps(&self, other: &AggregateStat) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }
}

fn sum(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0, |a, b| a + b)
}

/// Linear interpolation between order statistics of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi || sorted[lo] == sorted[hi] {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

/// Percentile bootstrap of the mean: `n` resamples with replacement, bounds
/// at the `(1 -/+ level) / 2` quantiles of the resample means, widened if
/// needed so they bracket the sample mean. Constant input gives exactly
/// `[c, c]`.
pub fn bootstrap_ci(metric: &str, values: &[f64], n: usize, level: f64, seed: u64) -> Result<AggregateStat> {
    if values.is_empty() {
        return Err(Error::Metric(format!("{metric}: no values to aggregate")));
    }
    if n == 0 {
        return Err(Error::Metric("bootstrap resample count must be at least 1".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Metric(format!("confidence level {level} outside (0, 1)")));
    }
    let len = values.len();
    if values.iter().all(|v| v.to_bits() == values[0].to_bits()) {
        let c = values[0];
        return Ok(AggregateStat {
            metric: metric.to_string(),
            mean: c,
            ci_low: c,
            ci_high: c,
            n_samples: len,
            bootstrap_n: n,
            level,
        });
    }
    let mean = sum(values.iter().copied()) / len as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..n)
        .map(|_| sum((0..len).map(|_| values[rng.random_range(0..len)])) / len as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok(AggregateStat {
        metric: metric.to_string(),
        mean,
        ci_low: quantile(&means, alpha).min(mean),
        ci_high: quantile(&means, 1.0 - alpha).max(mean),
        n_samples: len,
        bootstrap_n: n,
        level,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&s, 0.0), 1.0);
        assert_eq!(quantile(&s, 1.0), 5.0);
        assert_eq!(quantile(&s, 0.5), 3.0);
        assert_eq!(quantile(&s, 0.125), 1.5);
    }

    #[test]
    fn constant_is_degenerate() {
        for c in [0.0, 1.0, 0.1, -0.3, 1e-7] {
            let s = bootstrap_ci("x", &[c; 37], 200, 0.99, 4).unwrap();
            assert_eq!((s.ci_low, s.mean, s.ci_high), (c, c, c));
        }
    }

    #[test]
    fn argument_errors() {
        assert!(bootstrap_ci("x", &[], 10, 0.9, 0).is_err());
        assert!(bootstrap_ci("x", &[1.0], 0, 0.9, 0).is_err());
        assert!(bootstrap_ci("x", &[1.0], 10, 1.0, 0).is_err());
    }
}
