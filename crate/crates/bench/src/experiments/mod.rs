//! The three experiments and the helpers they share.

mod augment_ab;
mod grid;
mod shift;

use std::collections::{BTreeMap, BTreeSet};
use std::hint::black_box;
use std::time::Instant;

use anyhow::bail;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use doraemon_core::index::{calibrate_costs, CostModel};
use doraemon_core::{ModelArch, SortedDataset, StagedIndex};

use crate::config::{ExperimentConfig, Mode};

pub use augment_ab::{run_augment_ab, AugmentReport, Variant};
pub use grid::{run_grid, GridReport};
pub use shift::{churn, run_shift, ShiftReport};

/// Absent keys probed per exactness check.
pub const ABSENT_PROBES: usize = 100_000;

const CALIBRATION_EVALS: usize = 200_000;

pub fn cost_model(cfg: &ExperimentConfig) -> CostModel {
    match cfg.mode {
        Mode::Deterministic => CostModel::Deterministic,
        Mode::Calibrated => {
            let archs: BTreeSet<ModelArch> = cfg.search_space.iter().map(|c| c.arch).collect();
            let archs: Vec<ModelArch> = archs.into_iter().collect();
            let costs = calibrate_costs(&archs, CALIBRATION_EVALS);
            log::info!("calibrated root costs: {costs:?}");
            costs
        }
    }
}

/// Looks up every key of `data` and `absent` random keys that are not in
/// it. Returns 1.0 or fails naming the first miss.
pub fn check_exactness(
    index: &StagedIndex,
    data: &SortedDataset,
    absent: usize,
    seed: u64,
) -> anyhow::Result<f64> {
    for (pos, &key) in data.keys().iter().enumerate() {
        let got = index.lookup(data, key);
        if got != Some(pos) {
            bail!("lookup of key {key} returned {got:?}, expected position {pos}");
        }
    }
    let keys = data.keys();
    let (lo, hi) = (keys[0], keys[keys.len() - 1]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probed = 0;
    let mut tries = 0;
    while probed < absent && tries < absent * 20 {
        tries += 1;
        // Mostly inside the key range, where the windows are exercised.
        let key = if rng.random::<f64>() < 0.9 {
            rng.random_range(lo..=hi)
        } else {
            rng.random::<u64>()
        };
        if data.position_of(key).is_some() {
            continue;
        }
        probed += 1;
        if let Some(p) = index.lookup(data, key) {
            bail!("absent key {key} reported at position {p}");
        }
    }
    Ok(1.0)
}

/// Mean and 99th percentile of single-lookup wall time, in nanoseconds,
/// after one untimed pass.
pub fn measure<F: FnMut(u64) -> Option<usize>>(queries: &[u64], mut lookup: F) -> (f64, f64) {
    if queries.is_empty() {
        return (0.0, 0.0);
    }
    for &q in queries {
        black_box(lookup(black_box(q)));
    }
    let mut ns: Vec<f64> = queries
        .iter()
        .map(|&q| {
            let t = Instant::now();
            black_box(lookup(black_box(q)));
            t.elapsed().as_nanos() as f64
        })
        .collect();
    let mean = ns.iter().sum::<f64>() / ns.len() as f64;
    ns.sort_by(f64::total_cmp);
    let p99 = ns[((ns.len() as f64 * 0.99).ceil() as usize).clamp(1, ns.len()) - 1];
    (mean, p99)
}

pub fn btree_of(data: &SortedDataset) -> BTreeMap<u64, usize> {
    data.keys()
        .iter()
        .enumerate()
        .map(|(i, &k)| (k, i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use doraemon_core::index::train_staged;
    use doraemon_core::TrainConfig;

    #[test]
    fn exactness_passes_a_sound_index_and_catches_a_broken_one() {
        let data = SortedDataset::new((0..2000u64).map(|i| i * i + 5).collect()).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            fine_tune_epochs: 1,
            ..TrainConfig::default()
        };
        let idx = doraemon_core::index::compute_error_bounds(
            train_staged(&data.to_pairs(), ModelArch::LIN, 20, &cfg).unwrap(),
            &data,
        );
        assert_eq!(check_exactness(&idx, &data, 1000, 1).unwrap(), 1.0);

        // Bounds taken from a different dataset are too narrow here.
        let other = SortedDataset::new((0..2000u64).map(|i| i * 3).collect()).unwrap();
        let stale = doraemon_core::index::compute_error_bounds(idx.clone(), &other);
        assert!(check_exactness(&stale, &data, 10, 1).is_err());
    }

    #[test]
    fn percentile_of_constant_lookups() {
        let (mean, p99) = measure(&[1, 2, 3], |k| Some(k as usize));
        assert!(mean >= 0.0 && p99 >= 0.0);
        assert_eq!(measure(&[], |_| None), (0.0, 0.0));
    }
}
