//! Reuse of previously trained models.
//!
//! [`advise`] sketches the incoming training set, looks for a cached model
//! trained on a similar distribution, and either fine-tunes that model or
//! falls back to a full grid search whose winner is cached for next time.

mod cache;
mod shift;
mod sketch;
mod tune;

use std::fmt;
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::index::{
    index_metrics, position_span, root_training_pairs, IndexMetrics, StagedIndex, TrainingPair,
};
use crate::models::{fine_tune, ModelArch, TrainConfig};

pub use cache::{
    CacheEntry, ModelCache, DEFAULT_CAPACITY, DEFAULT_TAU, ENTRY_EXTENSION, MANIFEST_FILE,
};
pub use shift::{detect_shift, query_cost, ShiftMonitor, WindowReport, DEFAULT_SHIFT_RATIO};
pub use sketch::{analyze, sketch_mse, DistributionSketch};
pub use tune::{argmin, auto_tune, Candidate, CandidateCost, TuneContext, TuneResult};

pub const DEFAULT_K: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CounselorConfig {
    /// Sketch length.
    pub k: usize,
    pub search_space: Vec<Candidate>,
    pub train: TrainConfig,
    /// On a cache hit, also run the grid search and keep whichever index is
    /// cheaper. Off by default: hits only fine-tune.
    pub retune_on_hit: bool,
}

impl Default for CounselorConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            search_space: Candidate::grid(&ModelArch::default_space(), &[200]),
            train: TrainConfig::default(),
            retune_on_hit: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    FineTuned,
    AutoTuned,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::FineTuned => "fine_tuned",
            Self::AutoTuned => "auto_tuned",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Advice {
    pub index: StagedIndex,
    pub provenance: Provenance,
    pub sketch: DistributionSketch,
    /// Distance to the nearest cached sketch (infinite for an empty cache).
    pub mse: f64,
    pub metrics: IndexMetrics,
    /// Cache entry that was reused or created.
    pub cache_id: String,
    /// Present whenever a grid search ran.
    pub tune: Option<TuneResult>,
    pub elapsed_secs: f64,
}

/// Produces an index for `pairs`, reusing a cached model when its sketch is
/// within the cache threshold.
///
/// On a hit the cached root is fine-tuned on the new (renormalized) pairs,
/// leaves are refit and windows recomputed on `ctx.data`. On a miss the
/// search space is grid-searched and the winner cached under the new sketch.
pub fn advise(
    cache: &mut ModelCache,
    pairs: &[TrainingPair],
    cfg: &CounselorConfig,
    ctx: &TuneContext<'_>,
) -> Result<Advice> {
    let start = Instant::now();
    let sketch = analyze(pairs, cfg.k)?;
    let tau = cache.threshold();
    let (hit, mse) = cache.lookup(&sketch);
    let hit_id = hit.filter(|_| mse <= tau).map(|e| e.id.clone());

    if let Some(id) = hit_id {
        info!("cache hit {id} (mse {mse:.3e}); fine-tuning");
        let cached = cache.load_index(&id)?;
        let key_min = pairs[0].key;
        let key_max = pairs[pairs.len() - 1].key;
        let root_pairs = root_training_pairs(pairs, key_min, key_max, position_span(pairs));
        let (root, _loss) = fine_tune(cached.root(), &root_pairs, &cfg.train)?;
        let index = tune::build_candidate(&root, pairs, cached.leaf_count(), ctx)?;
        let metrics = index_metrics(&index, ctx.data, ctx.probe, ctx.costs);

        if cfg.retune_on_hit {
            let tuned = auto_tune(pairs, &cfg.search_space, &cfg.train, ctx)?;
            if tuned.metrics.cost_proxy < metrics.cost_proxy {
                let id = cache.insert(sketch.clone(), &tuned.index, tuned.train_loss)?;
                return Ok(Advice {
                    index: tuned.index.clone(),
                    provenance: Provenance::AutoTuned,
                    sketch,
                    mse,
                    metrics: tuned.metrics.clone(),
                    cache_id: id,
                    tune: Some(tuned),
                    elapsed_secs: start.elapsed().as_secs_f64(),
                });
            }
        }
        return Ok(Advice {
            index,
            provenance: Provenance::FineTuned,
            sketch,
            mse,
            metrics,
            cache_id: id,
            tune: None,
            elapsed_secs: start.elapsed().as_secs_f64(),
        });
    }

    info!(
        "cache miss (nearest mse {mse:.3e}); grid-searching {} candidates",
        cfg.search_space.len()
    );
    let tuned = auto_tune(pairs, &cfg.search_space, &cfg.train, ctx)?;
    let id = cache.insert(sketch.clone(), &tuned.index, tuned.train_loss)?;
    Ok(Advice {
        index: tuned.index.clone(),
        provenance: Provenance::AutoTuned,
        sketch,
        mse,
        metrics: tuned.metrics.clone(),
        cache_id: id,
        tune: Some(tuned),
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}
