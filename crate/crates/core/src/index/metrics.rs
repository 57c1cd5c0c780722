//! Error-window statistics and the lookup-cost proxy.
//!
//! The proxy estimates lookup cost in binary-search steps: the expected
//! `log2(window + 1)` over the keys a workload touches, plus a per-architecture
//! constant for evaluating the root.

use std::collections::BTreeMap;
use std::hint::black_box;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{SortedDataset, StagedIndex};
use crate::models::{LinearModel, ModelArch, NeuralNet, RootModel};
use crate::workload::FrequencyHistogram;

/// Root evaluation cost in search-step units.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum CostModel {
    /// Fixed table proportional to multiply-accumulates; stable across runs.
    #[default]
    Deterministic,
    /// Measured on this machine by [`calibrate_costs`].
    Calibrated(BTreeMap<ModelArch, f64>),
}

impl CostModel {
    pub fn compute_constant(&self, arch: ModelArch) -> f64 {
        match self {
            Self::Deterministic => deterministic_compute_constant(arch),
            Self::Calibrated(table) => table
                .get(&arch)
                .copied()
                .unwrap_or_else(|| deterministic_compute_constant(arch)),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, Self::Deterministic)
    }
}

/// `1/8 + macs/64` search steps.
pub fn deterministic_compute_constant(arch: ModelArch) -> f64 {
    0.125 + arch.macs() as f64 / 64.0
}

/// Times `evals` forward passes of each architecture and divides by the
/// measured cost of one binary-search step over a 2^20-entry array.
pub fn calibrate_costs(archs: &[ModelArch], evals: usize) -> CostModel {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let inputs: Vec<f64> = (0..4096).map(|_| rng.random::<f64>()).collect();

    let table: Vec<u64> = (0..1u64 << 20).map(|i| i * 3).collect();
    let probes: Vec<u64> = (0..4096).map(|_| rng.random_range(0..3u64 << 20)).collect();
    let start = Instant::now();
    let mut acc = 0usize;
    for i in 0..evals {
        acc ^= table.binary_search(&probes[i & 4095]).unwrap_or_else(|e| e);
    }
    black_box(acc);
    let step_ns = (start.elapsed().as_nanos() as f64 / (evals.max(1) as f64 * 20.0)).max(1e-3);

    let mut out = BTreeMap::new();
    for &arch in archs {
        let root = match arch {
            ModelArch::Linear => RootModel::Linear(LinearModel::new(0.9, 0.01)),
            _ => RootModel::Neural(NeuralNet::init(arch, 1).expect("valid arch")),
        };
        let start = Instant::now();
        let mut sum = 0.0;
        for i in 0..evals {
            sum += root.predict(black_box(inputs[i & 4095]));
        }
        black_box(sum);
        let ns = start.elapsed().as_nanos() as f64 / evals.max(1) as f64;
        out.insert(arch, ns / step_ns);
    }
    CostModel::Calibrated(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexMetrics {
    /// `err_hi - err_lo` per leaf.
    pub leaf_widths: Vec<u64>,
    /// Mean width over leaves that hold at least one key.
    pub mean_width: f64,
    /// Mean width of the leaf holding each key (uniform workload).
    pub key_mean_width: f64,
    /// Mean width weighted by access counts, when a histogram is given.
    pub weighted_width: Option<f64>,
    /// Expected `log2(width + 1)` per query.
    pub search_term: f64,
    pub compute_constant: f64,
    pub cost_proxy: f64,
}

/// Summarizes the error windows of `index` over `data`, optionally weighting
/// keys by an access histogram.
pub fn index_metrics(
    index: &StagedIndex,
    data: &SortedDataset,
    freq: Option<&FrequencyHistogram>,
    costs: &CostModel,
) -> IndexMetrics {
    let m = index.leaf_count();
    let leaf_widths: Vec<u64> = index.leaves().iter().map(|l| l.width()).collect();

    let mut keys_per_leaf = vec![0u64; m];
    let mut hits_per_leaf = vec![0u64; m];
    let counts = freq.filter(|h| h.total > 0).map(|h| &h.counts);
    for (i, &key) in data.keys().iter().enumerate() {
        let leaf = index.route(key);
        keys_per_leaf[leaf] += 1;
        if let Some(c) = counts {
            hits_per_leaf[leaf] += c[i];
        }
    }

    let occupied: Vec<usize> = (0..m).filter(|&j| keys_per_leaf[j] > 0).collect();
    let mean_width = if occupied.is_empty() {
        0.0
    } else {
        occupied.iter().map(|&j| leaf_widths[j] as f64).sum::<f64>() / occupied.len() as f64
    };

    let weighted_mean = |weights: &[u64], f: &dyn Fn(u64) -> f64| -> f64 {
        let total: u64 = weights.iter().sum();
        if total == 0 {
            return 0.0;
        }
        weights
            .iter()
            .zip(&leaf_widths)
            .map(|(&w, &width)| w as f64 * f(width))
            .sum::<f64>()
            / total as f64
    };
    let identity = |w: u64| w as f64;
    let steps = |w: u64| ((w + 1) as f64).log2();

    let key_mean_width = weighted_mean(&keys_per_leaf, &identity);
    let weighted_width = counts.map(|_| weighted_mean(&hits_per_leaf, &identity));
    let search_term = match counts {
        Some(_) => weighted_mean(&hits_per_leaf, &steps),
        None => weighted_mean(&keys_per_leaf, &steps),
    };
    let compute_constant = costs.compute_constant(index.arch());
    IndexMetrics {
        leaf_widths,
        mean_width,
        key_mean_width,
        weighted_width,
        search_term,
        compute_constant,
        cost_proxy: search_term + compute_constant,
    }
}

/// Mean window width over a contiguous run of keys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RangeWidth {
    pub first_rank: usize,
    pub last_rank: usize,
    pub key_lo: u64,
    pub key_hi: u64,
    pub mean_width: f64,
}

/// Splits `data` into `buckets` equal-count rank ranges and reports the mean
/// width of the leaf holding each key in the range.
pub fn range_widths(index: &StagedIndex, data: &SortedDataset, buckets: usize) -> Vec<RangeWidth> {
    let n = data.len();
    let buckets = buckets.clamp(1, n.max(1));
    let keys = data.keys();
    (0..buckets)
        .filter_map(|b| {
            let first = b * n / buckets;
            let last = (b + 1) * n / buckets;
            if first >= last {
                return None;
            }
            let total: u64 = keys[first..last]
                .iter()
                .map(|&k| index.leaves()[index.route(k)].width())
                .sum();
            Some(RangeWidth {
                first_rank: first,
                last_rank: last - 1,
                key_lo: keys[first],
                key_hi: keys[last - 1],
                mean_width: total as f64 / (last - first) as f64,
            })
        })
        .collect()
}
