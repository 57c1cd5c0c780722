//! Report rows and their CSV / JSON writers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

/// Bumped whenever a column is added, removed or reinterpreted.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// One built index scored against one workload.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub schema_version: u32,
    pub dataset: String,
    pub workload: String,
    /// `none`, `duplicate` or `stretch`.
    pub variant: String,
    /// Root architecture, or `binsearch` / `btree` for the baselines.
    pub arch: String,
    pub leaves: Option<usize>,
    pub cost_proxy: Option<f64>,
    pub search_term: Option<f64>,
    pub compute_constant: Option<f64>,
    /// Mean window over occupied leaves.
    pub mean_width: Option<f64>,
    /// Mean window of the leaf holding each key.
    pub key_mean_width: Option<f64>,
    /// Mean window weighted by workload accesses.
    pub weighted_width: Option<f64>,
    pub exactness: f64,
    pub train_loss: Option<f64>,
    pub latency_mean_ns: Option<f64>,
    pub latency_p99_ns: Option<f64>,
    pub build_secs: Option<f64>,
}

/// Cheapest candidate of one (dataset, workload) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub schema_version: u32,
    pub dataset: String,
    pub workload: String,
    pub best_arch: String,
    pub best_leaves: usize,
    pub cost_proxy: f64,
    pub binsearch_proxy: f64,
    pub latency_mean_ns: Option<f64>,
    pub btree_latency_mean_ns: Option<f64>,
}

/// Split of the cost proxy into root compute and last-mile search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionRow {
    pub schema_version: u32,
    pub dataset: String,
    pub workload: String,
    pub arch: String,
    pub leaves: usize,
    pub compute_constant: f64,
    pub search_term: f64,
    pub cost_proxy: f64,
}

/// Mean window over one rank bucket of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RangeRow {
    pub schema_version: u32,
    pub dataset: String,
    pub arch: String,
    pub leaves: usize,
    pub bucket: usize,
    pub first_rank: usize,
    pub last_rank: usize,
    pub key_lo: u64,
    pub key_hi: u64,
    pub mean_width: f64,
}

/// Cold build, shift, warm rebuild.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftRow {
    pub schema_version: u32,
    pub dataset: String,
    pub shifted_dataset: String,
    pub cold_arch: String,
    pub cold_leaves: usize,
    pub cold_provenance: String,
    pub cold_secs: f64,
    pub baseline_cost: f64,
    pub stale_cost: f64,
    pub shift_detected: bool,
    pub sketch_mse: f64,
    pub warm_arch: String,
    pub warm_leaves: usize,
    pub warm_provenance: String,
    pub warm_secs: f64,
    pub ratio: f64,
    pub cold_cost_proxy: f64,
    pub warm_cost_proxy: f64,
    pub exactness: f64,
}

/// `grid.csv` + `summary` gives `grid.summary.csv`.
pub fn sibling(out: &Path, tag: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    let ext = out.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    out.with_file_name(format!("{stem}.{tag}.{ext}"))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
