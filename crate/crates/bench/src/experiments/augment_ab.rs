use std::fmt;
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use doraemon_core::augment::{compute_weights, duplicate_augment, stretch};
use doraemon_core::counselor::{auto_tune, TuneContext};
use doraemon_core::index::index_metrics;
use doraemon_core::workload::extract_frequencies;

use super::{check_exactness, cost_model, measure, ABSENT_PROBES};
use crate::config::{ExperimentConfig, Mode};
use crate::report::{ReportRow, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Plain positions.
    None,
    /// Each key repeated by its weight; leaves fit on the repeated pairs.
    Duplicate,
    /// Stretched positions, leaves refit on true positions afterwards.
    Stretch,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::None, Variant::Duplicate, Variant::Stretch];
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::Duplicate => "duplicate",
            Self::Stretch => "stretch",
        })
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct AugmentReport {
    pub schema_version: u32,
    pub rows: Vec<ReportRow>,
}

impl AugmentReport {
    pub fn find(&self, dataset: &str, workload: &str, variant: Variant) -> Option<&ReportRow> {
        let v = variant.to_string();
        self.rows
            .iter()
            .find(|r| r.dataset == dataset && r.workload == workload && r.variant == v)
    }
}

/// Auto-tunes each dataset under each skewed workload three times: on plain,
/// duplicated and stretched training pairs. Selection sees the sampled
/// histogram; the reported widths use the full workload.
pub fn run_augment_ab(cfg: &ExperimentConfig) -> anyhow::Result<AugmentReport> {
    cfg.validate()?;
    let costs = cost_model(cfg);
    let timed = cfg.mode == Mode::Calibrated;
    let mut report = AugmentReport {
        schema_version: SCHEMA_VERSION,
        rows: Vec::new(),
    };
    let workloads: Vec<_> = cfg.workloads.iter().filter(|w| w.is_skewed()).collect();
    if workloads.is_empty() {
        anyhow::bail!(doraemon_core::Error::InvalidConfig(
            "augment-ab needs a skewed workload".into()
        ));
    }

    for (di, entry) in cfg.datasets.iter().enumerate() {
        let data = entry.load()?;
        for w in &workloads {
            let queries = w.load(&data)?;
            let sampled = extract_frequencies(&queries, &data, cfg.sample_rate, cfg.sample_seed)?;
            let full = extract_frequencies(&queries, &data, 1.0, 0)?;
            let weights = compute_weights(&sampled, cfg.cap);

            for variant in Variant::ALL {
                let start = Instant::now();
                let (pairs, finalize) = match variant {
                    Variant::None => (data.to_pairs(), false),
                    Variant::Duplicate => (duplicate_augment(&data, &weights), false),
                    Variant::Stretch => (stretch(&data, &weights).pairs, true),
                };
                let ctx = TuneContext {
                    data: &data,
                    probe: Some(&sampled),
                    costs: &costs,
                    finalize,
                };
                let tuned = auto_tune(&pairs, &cfg.search_space, &cfg.train, &ctx)?;
                let secs = start.elapsed().as_secs_f64();
                check_exactness(
                    &tuned.index,
                    &data,
                    ABSENT_PROBES,
                    cfg.train.seed ^ di as u64,
                )
                .map_err(|e| anyhow::anyhow!("{} {} {variant}: {e}", entry.id, w.id))?;
                let m = index_metrics(&tuned.index, &data, Some(&full), &costs);
                let latency = timed.then(|| {
                    let q = &queries[..queries.len().min(cfg.latency_queries)];
                    measure(q, |k| tuned.index.lookup(&data, k))
                });
                info!(
                    "{} x {} {variant}: {} x {}, weighted width {:.2}, proxy {:.3}",
                    entry.id,
                    w.id,
                    tuned.best.arch,
                    tuned.best.leaves,
                    m.weighted_width.unwrap_or(f64::NAN),
                    m.cost_proxy
                );
                report.rows.push(ReportRow {
                    schema_version: SCHEMA_VERSION,
                    dataset: entry.id.clone(),
                    workload: w.id.clone(),
                    variant: variant.to_string(),
                    arch: tuned.best.arch.to_string(),
                    leaves: Some(tuned.best.leaves),
                    cost_proxy: Some(m.cost_proxy),
                    search_term: Some(m.search_term),
                    compute_constant: Some(m.compute_constant),
                    mean_width: Some(m.mean_width),
                    key_mean_width: Some(m.key_mean_width),
                    weighted_width: m.weighted_width,
                    exactness: 1.0,
                    train_loss: Some(tuned.train_loss),
                    latency_mean_ns: latency.map(|l| l.0),
                    latency_p99_ns: latency.map(|l| l.1),
                    build_secs: timed.then_some(secs),
                });
            }
        }
    }
    Ok(report)
}
