//! Grid-search auto-tuning over root architectures and leaf counts.

use std::collections::BTreeMap;
use std::time::Instant;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::augment::finalize;
use crate::error::{Error, Result};
use crate::index::{
    build_on_root, index_metrics, position_span, root_training_pairs, CostModel, IndexMetrics,
    SortedDataset, StagedIndex, TrainingPair,
};
use crate::models::{ModelArch, RootModel, TrainConfig};
use crate::workload::FrequencyHistogram;

/// One grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Candidate {
    pub arch: ModelArch,
    pub leaves: usize,
}

impl Candidate {
    pub fn new(arch: ModelArch, leaves: usize) -> Self {
        Self { arch, leaves }
    }

    /// Cartesian product of architectures and leaf counts.
    pub fn grid(archs: &[ModelArch], leaves: &[usize]) -> Vec<Self> {
        archs
            .iter()
            .flat_map(|&a| leaves.iter().map(move |&m| Self::new(a, m)))
            .collect()
    }

    fn tie_key(&self) -> ((usize, u8, u32), usize) {
        (self.arch.complexity(), self.leaves)
    }
}

/// What a candidate is scored against.
#[derive(Debug, Clone, Copy)]
pub struct TuneContext<'a> {
    /// The keys the index must serve; windows are always computed on these.
    pub data: &'a SortedDataset,
    /// Access histogram weighting the cost proxy.
    pub probe: Option<&'a FrequencyHistogram>,
    pub costs: &'a CostModel,
    /// Refit leaves on `data` before scoring (required for stretched pairs).
    pub finalize: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateCost {
    pub candidate: Candidate,
    pub train_loss: Option<f64>,
    pub metrics: Option<IndexMetrics>,
    pub error: Option<String>,
    pub build_secs: f64,
}

impl CandidateCost {
    pub fn cost(&self) -> Option<f64> {
        self.metrics.as_ref().map(|m| m.cost_proxy)
    }
}

#[derive(Debug, Clone)]
pub struct TuneResult {
    pub best: Candidate,
    pub index: StagedIndex,
    pub metrics: IndexMetrics,
    pub train_loss: f64,
    /// One row per candidate, in search-space order.
    pub table: Vec<CandidateCost>,
}

/// Trains the root once and hangs `leaves` leaves under it, then bounds
/// (or finalizes) against `ctx.data`.
pub(crate) fn build_candidate(
    root: &RootModel,
    pairs: &[TrainingPair],
    leaves: usize,
    ctx: &TuneContext<'_>,
) -> Result<StagedIndex> {
    let key_min = pairs[0].key;
    let key_max = pairs[pairs.len() - 1].key;
    let index = build_on_root(
        root.clone(),
        pairs,
        leaves,
        key_min,
        key_max,
        position_span(pairs),
    )?;
    if ctx.finalize {
        finalize(&index, ctx.data)
    } else {
        let mut index = index;
        index.recompute_bounds(ctx.data);
        Ok(index)
    }
}

/// Index of the cheapest row, ties broken toward the simpler architecture
/// and then the smaller leaf count.
pub fn argmin(table: &[CandidateCost]) -> Option<usize> {
    table
        .iter()
        .enumerate()
        .filter_map(|(i, row)| row.cost().map(|c| (i, c, row.candidate.tie_key())))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.2.cmp(&b.2)))
        .map(|(i, _, _)| i)
}

/// Trains every candidate, scores it with the lookup-cost proxy and returns
/// the cheapest. Candidates sharing an architecture share one root. A
/// candidate whose training diverges is recorded as failed and skipped.
pub fn auto_tune(
    pairs: &[TrainingPair],
    space: &[Candidate],
    cfg: &TrainConfig,
    ctx: &TuneContext<'_>,
) -> Result<TuneResult> {
    if space.is_empty() {
        return Err(Error::InvalidConfig("empty search space".into()));
    }
    if pairs.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let key_min = pairs[0].key;
    let key_max = pairs[pairs.len() - 1].key;
    let root_pairs = root_training_pairs(pairs, key_min, key_max, position_span(pairs));

    let mut roots: BTreeMap<ModelArch, std::result::Result<(RootModel, f64, f64), String>> =
        BTreeMap::new();
    let mut table = Vec::with_capacity(space.len());
    let mut best: Option<(usize, StagedIndex)> = None;

    for &candidate in space {
        let root = roots.entry(candidate.arch).or_insert_with(|| {
            let start = Instant::now();
            RootModel::fit(candidate.arch, &root_pairs, cfg)
                .map(|(root, loss)| (root, loss, start.elapsed().as_secs_f64()))
                .map_err(|e| e.to_string())
        });
        let row = match root {
            Err(e) => {
                warn!(
                    "candidate {} x {} failed: {e}",
                    candidate.arch, candidate.leaves
                );
                CandidateCost {
                    candidate,
                    train_loss: None,
                    metrics: None,
                    error: Some(e.clone()),
                    build_secs: 0.0,
                }
            }
            Ok((root, loss, root_secs)) => {
                let start = Instant::now();
                let index = build_candidate(root, pairs, candidate.leaves, ctx)?;
                let metrics = index_metrics(&index, ctx.data, ctx.probe, ctx.costs);
                let row = CandidateCost {
                    candidate,
                    train_loss: Some(*loss),
                    metrics: Some(metrics),
                    error: None,
                    build_secs: *root_secs + start.elapsed().as_secs_f64(),
                };
                table.push(row);
                let i = table.len() - 1;
                if argmin(&table) == Some(i) {
                    best = Some((i, index));
                }
                continue;
            }
        };
        table.push(row);
    }

    let (i, index) = best.ok_or(Error::AllCandidatesFailed)?;
    let row = &table[i];
    Ok(TuneResult {
        best: row.candidate,
        index,
        metrics: row.metrics.clone().expect("scored"),
        train_loss: row.train_loss.expect("trained"),
        table,
    })
}
