use std::collections::BTreeMap;
use std::time::Instant;

use log::{info, warn};
use serde::Serialize;

use doraemon_core::counselor::{argmin, Candidate, CandidateCost};
use doraemon_core::index::{
    build_with_root, compute_error_bounds, index_metrics, range_widths, root_pairs, IndexMetrics,
};
use doraemon_core::workload::{extract_frequencies, FrequencyHistogram};
use doraemon_core::{ModelArch, RootModel, StagedIndex};

use super::{btree_of, check_exactness, cost_model, measure, ABSENT_PROBES};
use crate::config::{ExperimentConfig, Mode};
use crate::report::{DecompositionRow, RangeRow, ReportRow, SummaryRow, SCHEMA_VERSION};

#[derive(Debug, Clone, Default, Serialize)]
pub struct GridReport {
    pub schema_version: u32,
    pub rows: Vec<ReportRow>,
    pub summary: Vec<SummaryRow>,
    pub decomposition: Vec<DecompositionRow>,
    pub ranges: Vec<RangeRow>,
}

struct Built {
    candidate: Candidate,
    index: StagedIndex,
    train_loss: f64,
    build_secs: f64,
}

/// Builds every candidate on every dataset and scores it against every
/// workload's full access histogram. Candidates sharing an architecture
/// share one root per dataset.
pub fn run_grid(cfg: &ExperimentConfig) -> anyhow::Result<GridReport> {
    cfg.validate()?;
    let costs = cost_model(cfg);
    let calibrated = cfg.mode == Mode::Calibrated;
    let mut report = GridReport {
        schema_version: SCHEMA_VERSION,
        ..GridReport::default()
    };

    for (di, entry) in cfg.datasets.iter().enumerate() {
        let data = entry.load()?;
        let n = data.len();
        info!("dataset {} ({n} keys)", entry.id);
        let pairs = data.to_pairs();
        let rp = root_pairs(&pairs);

        let mut roots: BTreeMap<ModelArch, Option<(RootModel, f64, f64)>> = BTreeMap::new();
        let mut built = Vec::new();
        for &candidate in &cfg.search_space {
            let root = roots.entry(candidate.arch).or_insert_with(|| {
                let t = Instant::now();
                match RootModel::fit(candidate.arch, &rp, &cfg.train) {
                    Ok((root, loss)) => Some((root, loss, t.elapsed().as_secs_f64())),
                    Err(e) => {
                        warn!("{}: {} root failed: {e}", entry.id, candidate.arch);
                        None
                    }
                }
            });
            let Some((root, loss, root_secs)) = root else {
                continue;
            };
            let t = Instant::now();
            let index = compute_error_bounds(
                build_with_root(root.clone(), &pairs, candidate.leaves)?,
                &data,
            );
            let build_secs = *root_secs + t.elapsed().as_secs_f64();
            check_exactness(&index, &data, ABSENT_PROBES, cfg.train.seed ^ di as u64).map_err(
                |e| anyhow::anyhow!("{} {}x{}: {e}", entry.id, candidate.arch, candidate.leaves),
            )?;
            for (b, r) in range_widths(&index, &data, cfg.range_buckets)
                .into_iter()
                .enumerate()
            {
                report.ranges.push(RangeRow {
                    schema_version: SCHEMA_VERSION,
                    dataset: entry.id.clone(),
                    arch: candidate.arch.to_string(),
                    leaves: candidate.leaves,
                    bucket: b,
                    first_rank: r.first_rank,
                    last_rank: r.last_rank,
                    key_lo: r.key_lo,
                    key_hi: r.key_hi,
                    mean_width: r.mean_width,
                });
            }
            built.push(Built {
                candidate,
                index,
                train_loss: *loss,
                build_secs,
            });
        }
        if built.is_empty() {
            anyhow::bail!("every candidate failed on dataset {}", entry.id);
        }

        let btree = calibrated.then(|| btree_of(&data));
        for w in &cfg.workloads {
            let queries = w.load(&data)?;
            let hist: FrequencyHistogram = extract_frequencies(&queries, &data, 1.0, 0)?;
            let timed = &queries[..queries.len().min(cfg.latency_queries)];

            let mut table = Vec::with_capacity(built.len());
            let mut latencies = Vec::with_capacity(built.len());
            for b in &built {
                let m: IndexMetrics = index_metrics(&b.index, &data, Some(&hist), &costs);
                let latency = calibrated.then(|| measure(timed, |k| b.index.lookup(&data, k)));
                report
                    .rows
                    .push(row(&entry.id, &w.id, b, &m, latency, calibrated));
                report.decomposition.push(DecompositionRow {
                    schema_version: SCHEMA_VERSION,
                    dataset: entry.id.clone(),
                    workload: w.id.clone(),
                    arch: b.candidate.arch.to_string(),
                    leaves: b.candidate.leaves,
                    compute_constant: m.compute_constant,
                    search_term: m.search_term,
                    cost_proxy: m.cost_proxy,
                });
                latencies.push(latency);
                table.push(CandidateCost {
                    candidate: b.candidate,
                    train_loss: Some(b.train_loss),
                    metrics: Some(m),
                    error: None,
                    build_secs: b.build_secs,
                });
            }

            let full = ((n + 1) as f64).log2();
            let bin_latency =
                calibrated.then(|| measure(timed, |k| data.keys().binary_search(&k).ok()));
            let tree_latency = btree
                .as_ref()
                .map(|t| measure(timed, |k| t.get(&k).copied()));
            report.rows.push(baseline(
                &entry.id,
                &w.id,
                "binsearch",
                Some(full),
                n as f64,
                bin_latency,
            ));
            report.rows.push(baseline(
                &entry.id,
                &w.id,
                "btree",
                None,
                n as f64,
                tree_latency,
            ));

            let best = argmin(&table).expect("at least one scored candidate");
            let cell = &table[best];
            info!(
                "{} x {}: best {} x {} (proxy {:.3})",
                entry.id,
                w.id,
                cell.candidate.arch,
                cell.candidate.leaves,
                cell.cost().unwrap()
            );
            report.summary.push(SummaryRow {
                schema_version: SCHEMA_VERSION,
                dataset: entry.id.clone(),
                workload: w.id.clone(),
                best_arch: cell.candidate.arch.to_string(),
                best_leaves: cell.candidate.leaves,
                cost_proxy: cell.cost().unwrap(),
                binsearch_proxy: full,
                latency_mean_ns: latencies[best].map(|l| l.0),
                btree_latency_mean_ns: tree_latency.map(|l| l.0),
            });
        }
    }
    Ok(report)
}

fn row(
    dataset: &str,
    workload: &str,
    b: &Built,
    m: &IndexMetrics,
    latency: Option<(f64, f64)>,
    timed: bool,
) -> ReportRow {
    ReportRow {
        schema_version: SCHEMA_VERSION,
        dataset: dataset.to_string(),
        workload: workload.to_string(),
        variant: "none".into(),
        arch: b.candidate.arch.to_string(),
        leaves: Some(b.candidate.leaves),
        cost_proxy: Some(m.cost_proxy),
        search_term: Some(m.search_term),
        compute_constant: Some(m.compute_constant),
        mean_width: Some(m.mean_width),
        key_mean_width: Some(m.key_mean_width),
        weighted_width: m.weighted_width,
        exactness: 1.0,
        train_loss: Some(b.train_loss),
        latency_mean_ns: latency.map(|l| l.0),
        latency_p99_ns: latency.map(|l| l.1),
        build_secs: timed.then_some(b.build_secs),
    }
}

/// The whole array is one window.
fn baseline(
    dataset: &str,
    workload: &str,
    name: &str,
    proxy: Option<f64>,
    width: f64,
    latency: Option<(f64, f64)>,
) -> ReportRow {
    ReportRow {
        schema_version: SCHEMA_VERSION,
        dataset: dataset.to_string(),
        workload: workload.to_string(),
        variant: "none".into(),
        arch: name.to_string(),
        leaves: None,
        cost_proxy: proxy,
        search_term: proxy,
        compute_constant: proxy.map(|_| 0.0),
        mean_width: proxy.map(|_| width),
        key_mean_width: proxy.map(|_| width),
        weighted_width: proxy.map(|_| width),
        exactness: 1.0,
        train_loss: None,
        latency_mean_ns: latency.map(|l| l.0),
        latency_p99_ns: latency.map(|l| l.1),
        build_secs: None,
    }
}
