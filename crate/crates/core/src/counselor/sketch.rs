use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::TrainingPair;

/// Normalized key values at `K` evenly spaced position quantiles of a
/// training set. Two sketches with equal `K` align index by index, so their
/// mean squared difference compares inverse CDFs directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DistributionSketch {
    quantile_keys: Vec<f64>,
}

impl DistributionSketch {
    /// Fails unless `values` is a non-decreasing vector in `[0, 1]`.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let sorted = values.windows(2).all(|w| w[0] <= w[1]);
        let bounded = values.iter().all(|v| (0.0..=1.0).contains(v));
        if values.is_empty() || !sorted || !bounded {
            return Err(Error::InvalidConfig(
                "sketch must be a non-empty non-decreasing vector in [0, 1]".into(),
            ));
        }
        Ok(Self {
            quantile_keys: values,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.quantile_keys
    }

    pub fn k(&self) -> usize {
        self.quantile_keys.len()
    }
}

/// Samples `k` records of `pairs` at positions `i * span / k` (`span` is
/// the last position plus one) and normalizes their keys to `[0, 1]`.
///
/// For unaugmented data this is exactly the records at ranks
/// `floor(i * N / k)`; for stretched data the samples follow the stretched
/// position axis.
pub fn analyze(pairs: &[TrainingPair], k: usize) -> Result<DistributionSketch> {
    if k < 2 {
        return Err(Error::InvalidConfig("sketch needs K >= 2".into()));
    }
    let n = pairs.len();
    if k > n {
        return Err(Error::SampleTooLarge { k, n });
    }
    let key_min = pairs[0].key;
    let key_max = pairs[n - 1].key;
    let range = (key_max - key_min) as f64;
    let span = pairs[n - 1].position + 1.0;
    let values = (0..k)
        .map(|i| {
            let target = (i as f64 * span) / k as f64;
            let idx = pairs
                .partition_point(|p| p.position <= target)
                .saturating_sub(1);
            if range > 0.0 {
                (pairs[idx].key - key_min) as f64 / range
            } else {
                0.0
            }
        })
        .collect();
    DistributionSketch::new(values)
}

/// `(1/K) * sum (a_i - b_i)^2`.
pub fn sketch_mse(a: &DistributionSketch, b: &DistributionSketch) -> Result<f64> {
    if a.k() != b.k() {
        return Err(Error::SketchLengthMismatch(a.k(), b.k()));
    }
    let sum: f64 = a
        .quantile_keys
        .iter()
        .zip(&b.quantile_keys)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.k() as f64)
}
