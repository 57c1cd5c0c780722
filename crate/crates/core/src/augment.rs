//! Access-aware training sets.
//!
//! Hot keys get a weight `w >= 1` derived from their sampled access counts.
//! [`stretch`] turns weights into extra distance on the position axis, so the
//! root spends more leaves on hot regions and each hot leaf holds fewer keys.
//! [`duplicate_augment`] is the naive alternative that repeats hot pairs.
//! Either way the leaves are refit on true positions by [`finalize`] before
//! the index is used.

use log::info;

use crate::error::Result;
use crate::index::{SortedDataset, StagedIndex, TrainingPair};
use crate::workload::FrequencyHistogram;

/// Default upper bound on a single key's weight.
pub const DEFAULT_CAP: f64 = 16.0;

/// Per-key weights aligned to dataset positions; every weight is `>= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    /// Normalizing count (after smoothing, if any).
    pub f_min: f64,
    pub cap: f64,
    pub smoothed: bool,
}

impl WeightVector {
    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![1.0; n],
            f_min: 1.0,
            cap: f64::INFINITY,
            smoothed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// `w_i = min(cap, (f_i + 1) / f_min)` where `f_min` is the smallest smoothed
/// count. Keys never sampled therefore weigh exactly 1 whenever any key was
/// never sampled.
pub fn compute_weights(hist: &FrequencyHistogram, cap: f64) -> WeightVector {
    weights_from(hist, cap, true)
}

/// Unsmoothed `f_i / f_min` over the keys with a nonzero count, uncapped.
/// Zero-count keys weigh 1.
pub fn compute_weights_raw(hist: &FrequencyHistogram) -> WeightVector {
    weights_from(hist, f64::INFINITY, false)
}

fn weights_from(hist: &FrequencyHistogram, cap: f64, smoothed: bool) -> WeightVector {
    let cap = if cap.is_nan() {
        DEFAULT_CAP
    } else {
        cap.max(1.0)
    };
    if hist.total == 0 {
        info!("empty access histogram; falling back to uniform weights");
        return WeightVector {
            cap,
            smoothed,
            ..WeightVector::uniform(hist.len())
        };
    }
    let shift = if smoothed { 1.0 } else { 0.0 };
    let f_min = hist
        .counts
        .iter()
        .map(|&c| c as f64 + shift)
        .filter(|&c| c > 0.0)
        .fold(f64::INFINITY, f64::min);
    let weights = hist
        .counts
        .iter()
        .map(|&c| {
            if c == 0 {
                1.0
            } else {
                ((c as f64 + shift) / f_min).clamp(1.0, cap)
            }
        })
        .collect();
    WeightVector {
        weights,
        f_min,
        cap,
        smoothed,
    }
}

/// Repeats each pair `round(w_i)` times with its original position.
pub fn duplicate_augment(data: &SortedDataset, w: &WeightVector) -> Vec<TrainingPair> {
    assert_eq!(data.len(), w.len(), "weights must align with the dataset");
    let mut out = Vec::with_capacity(w.total().ceil() as usize);
    for (i, (&key, &wi)) in data.keys().iter().zip(&w.weights).enumerate() {
        let copies = (wi.round() as usize).max(1);
        out.extend(std::iter::repeat_n(
            TrainingPair::new(key, i as f64),
            copies,
        ));
    }
    out
}

/// Training pairs with stretched, fractional positions.
#[derive(Debug, Clone, PartialEq)]
pub struct StretchedTrainingSet {
    pub pairs: Vec<TrainingPair>,
    /// Sum of all weights.
    pub stretched_total: f64,
}

/// Key `i` moves to `sum_{j<i} w_j + (w_i - 1) / 2`: the center of the `w_i`
/// slots it would occupy if it were duplicated `w_i` times.
pub fn stretch(data: &SortedDataset, w: &WeightVector) -> StretchedTrainingSet {
    assert_eq!(data.len(), w.len(), "weights must align with the dataset");
    let mut before = 0.0;
    let pairs = data
        .keys()
        .iter()
        .zip(&w.weights)
        .map(|(&key, &wi)| {
            let p = TrainingPair::new(key, before + (wi - 1.0) / 2.0);
            before += wi;
            p
        })
        .collect();
    StretchedTrainingSet {
        pairs,
        stretched_total: before,
    }
}

/// Refits every leaf on the keys the (unchanged) root routes to it, using
/// their true positions in `data`, then recomputes the error windows.
pub fn finalize(index: &StagedIndex, data: &SortedDataset) -> Result<StagedIndex> {
    let mut out = index.clone();
    out.refit_leaves(&data.to_pairs())?;
    out.recompute_bounds(data);
    Ok(out)
}
