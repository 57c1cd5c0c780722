use anyhow::Context;
use log::info;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use doraemon_core::counselor::{
    advise, query_cost, ModelCache, Provenance, ShiftMonitor, TuneContext,
};
use doraemon_core::workload::{gen_dataset, DatasetSpec, Preset};
use doraemon_core::{Error, SortedDataset};

use super::{check_exactness, cost_model, ABSENT_PROBES};
use crate::config::{DatasetSource, ExperimentConfig};
use crate::report::{ShiftRow, SCHEMA_VERSION};

/// Subdirectory of the cache directory the scenario owns and resets.
pub const SCENARIO_DIR: &str = "shift";

/// Offset between a dataset's seed and the seed of its shifted successor.
const SHIFT_SEED_OFFSET: u64 = 1_000_003;

#[derive(Debug, Clone, Serialize)]
pub struct ShiftReport {
    pub schema_version: u32,
    pub row: ShiftRow,
}

/// Replaces `round(fraction * N)` keys of `data`, chosen at random, with as
/// many keys drawn from `spec` that `data` does not hold.
pub fn churn(
    data: &SortedDataset,
    spec: &DatasetSpec,
    fraction: f64,
    seed: u64,
) -> anyhow::Result<SortedDataset> {
    let n = data.len();
    let r = (fraction * n as f64).round() as usize;
    if r == 0 {
        return Ok(data.clone());
    }
    let fresh = gen_dataset(spec)?;
    let candidates: Vec<u64> = fresh
        .keys()
        .iter()
        .copied()
        .filter(|&k| data.position_of(k).is_none())
        .collect();
    if candidates.len() < r {
        anyhow::bail!(
            "only {} fresh keys available for a churn of {r}",
            candidates.len()
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dropped = vec![false; n];
    for i in sample(&mut rng, n, r) {
        dropped[i] = true;
    }
    let mut keys: Vec<u64> = data
        .keys()
        .iter()
        .zip(&dropped)
        .filter(|(_, &d)| !d)
        .map(|(&k, _)| k)
        .collect();
    keys.extend(
        sample(&mut rng, candidates.len(), r)
            .into_iter()
            .map(|i| candidates[i]),
    );
    Ok(SortedDataset::from_unsorted(keys))
}

fn mean_cost(
    index: &doraemon_core::StagedIndex,
    data: &SortedDataset,
    monitor: &mut ShiftMonitor,
    window: usize,
    rng: &mut ChaCha8Rng,
    costs: &doraemon_core::index::CostModel,
) -> (f64, bool) {
    let keys = data.keys();
    for _ in 0..window {
        let key = keys[rng.random_range(0..keys.len())];
        if let Some(r) = monitor.record(query_cost(index, data, key, costs)) {
            return (r.mean_cost, r.shifted);
        }
    }
    unreachable!("a full window always closes")
}

/// Cold build on the first configured dataset, a shift to a churned copy
/// (or to the next preset), detection with the stale index, and a warm
/// rebuild through the cache.
pub fn run_shift(cfg: &ExperimentConfig) -> anyhow::Result<ShiftReport> {
    cfg.validate()?;
    let costs = cost_model(cfg);
    let counselor = cfg.counselor();
    let entry = &cfg.datasets[0];
    let spec = entry.spec().ok_or_else(|| {
        Error::InvalidConfig("the shift scenario needs a generated dataset".into())
    })?;

    let dir = cfg.resolve_cache_dir().join(SCENARIO_DIR);
    let mut cache = ModelCache::open(&dir, cfg.cache_capacity, cfg.tau)
        .with_context(|| format!("opening cache at {}", dir.display()))?;
    cache.clear()?;

    let a = entry.load()?;
    let ctx = TuneContext {
        data: &a,
        probe: None,
        costs: &costs,
        finalize: false,
    };
    let cold = advise(&mut cache, &a.to_pairs(), &counselor, &ctx)?;
    info!(
        "cold build on {}: {} x {} in {:.2}s",
        entry.id,
        cold.index.arch(),
        cold.index.leaf_count(),
        cold.elapsed_secs
    );

    let shifted_seed = spec.seed.wrapping_add(SHIFT_SEED_OFFSET);
    let (b_id, b) = if cfg.shift.swap_preset {
        let DatasetSource::Preset { preset, n, .. } = entry.source else {
            return Err(
                Error::InvalidConfig("swapping presets needs a preset dataset".into()).into(),
            );
        };
        let pos = Preset::ALL
            .iter()
            .position(|&p| p == preset)
            .expect("known preset");
        let next = Preset::ALL[(pos + 1) % Preset::ALL.len()];
        (
            next.name().to_string(),
            gen_dataset(&next.spec(n, shifted_seed))?,
        )
    } else {
        let fresh = DatasetSpec {
            seed: shifted_seed,
            ..spec.clone()
        };
        let b = churn(&a, &fresh, cfg.shift.churn, shifted_seed)?;
        (format!("{}-churn", entry.id), b)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(shifted_seed);
    let mut monitor = ShiftMonitor::new(cfg.shift.window, cfg.shift.ratio);
    let (baseline_cost, _) = mean_cost(
        &cold.index,
        &a,
        &mut monitor,
        cfg.shift.window,
        &mut rng,
        &costs,
    );
    let (stale_cost, shift_detected) = mean_cost(
        &cold.index,
        &b,
        &mut monitor,
        cfg.shift.window,
        &mut rng,
        &costs,
    );
    info!("query cost {baseline_cost:.3} -> {stale_cost:.3} (shift detected: {shift_detected})");

    let ctx = TuneContext { data: &b, ..ctx };
    let warm = advise(&mut cache, &b.to_pairs(), &counselor, &ctx)?;
    check_exactness(&warm.index, &b, ABSENT_PROBES, shifted_seed).context("warm index")?;
    let ratio = warm.elapsed_secs / cold.elapsed_secs;
    info!(
        "warm rebuild on {b_id}: {} ({} x {}) in {:.2}s, ratio {ratio:.3}",
        warm.provenance,
        warm.index.arch(),
        warm.index.leaf_count(),
        warm.elapsed_secs
    );

    Ok(ShiftReport {
        schema_version: SCHEMA_VERSION,
        row: ShiftRow {
            schema_version: SCHEMA_VERSION,
            dataset: entry.id.clone(),
            shifted_dataset: b_id,
            cold_arch: cold.index.arch().to_string(),
            cold_leaves: cold.index.leaf_count(),
            cold_provenance: cold.provenance.to_string(),
            cold_secs: cold.elapsed_secs,
            baseline_cost,
            stale_cost,
            shift_detected,
            sketch_mse: warm.mse,
            warm_arch: warm.index.arch().to_string(),
            warm_leaves: warm.index.leaf_count(),
            warm_provenance: warm.provenance.to_string(),
            warm_secs: warm.elapsed_secs,
            ratio,
            cold_cost_proxy: cold.metrics.cost_proxy,
            warm_cost_proxy: warm.metrics.cost_proxy,
            exactness: 1.0,
        },
    })
}

impl ShiftReport {
    pub fn warm_provenance(&self) -> Provenance {
        if self.row.warm_provenance == Provenance::FineTuned.to_string() {
            Provenance::FineTuned
        } else {
            Provenance::AutoTuned
        }
    }
}
