//! Experiment configuration: what to build, what to query, how to score.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use doraemon_core::counselor::{
    Candidate, CounselorConfig, DEFAULT_CAPACITY, DEFAULT_K, DEFAULT_SHIFT_RATIO, DEFAULT_TAU,
};
use doraemon_core::workload::{
    gen_dataset, gen_workload, read_dataset, read_keys, read_text, DatasetSpec, Preset,
    WorkloadKind, WorkloadSpec,
};
use doraemon_core::{Error, ModelArch, Result, SortedDataset, TrainConfig};

/// Environment variable consulted for the cache directory when no flag is given.
pub const CACHE_DIR_ENV: &str = "DORAEMON_CACHE_DIR";
pub const DEFAULT_CACHE_DIR: &str = ".doraemon-cache";

pub const DESK_N: usize = 200_000;
pub const DESK_LEAVES: usize = 200;
pub const DESK_QUERIES: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Fixed cost table; reports are byte-identical across runs.
    #[default]
    Deterministic,
    /// Root costs timed on this machine; latency columns filled in.
    Calibrated,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Deterministic => "deterministic",
            Self::Calibrated => "calibrated",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DatasetSource {
    Preset {
        preset: Preset,
        n: usize,
        seed: u64,
    },
    Spec(DatasetSpec),
    /// `.keys` (little-endian u64) or text, one key per line.
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub id: String,
    #[serde(flatten)]
    pub source: DatasetSource,
}

impl DatasetEntry {
    pub fn preset(preset: Preset, n: usize, seed: u64) -> Self {
        Self {
            id: preset.name().to_string(),
            source: DatasetSource::Preset { preset, n, seed },
        }
    }

    /// Generator behind this entry, if it has one.
    pub fn spec(&self) -> Option<DatasetSpec> {
        match &self.source {
            DatasetSource::Preset { preset, n, seed } => Some(preset.spec(*n, *seed)),
            DatasetSource::Spec(spec) => Some(spec.clone()),
            DatasetSource::File { .. } => None,
        }
    }

    pub fn load(&self) -> Result<SortedDataset> {
        match &self.source {
            DatasetSource::File { path } => load_keys_file(path),
            _ => gen_dataset(&self.spec().expect("generated source")),
        }
    }
}

fn is_binary(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("keys" | "qry" | "bin")
    )
}

pub fn load_keys_file(path: &Path) -> Result<SortedDataset> {
    if is_binary(path) {
        read_dataset(path)
    } else {
        SortedDataset::new(read_text(path)?)
    }
}

pub fn load_query_file(path: &Path) -> Result<Vec<u64>> {
    if is_binary(path) {
        read_keys(path)
    } else {
        read_text(path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum WorkloadSource {
    Generated(WorkloadSpec),
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadEntry {
    pub id: String,
    #[serde(flatten)]
    pub source: WorkloadSource,
}

impl WorkloadEntry {
    pub fn generated(id: &str, kind: WorkloadKind, num_queries: usize, seed: u64) -> Self {
        Self {
            id: id.to_string(),
            source: WorkloadSource::Generated(WorkloadSpec {
                kind,
                num_queries,
                seed,
            }),
        }
    }

    pub fn kind(&self) -> Option<WorkloadKind> {
        match &self.source {
            WorkloadSource::Generated(spec) => Some(spec.kind),
            WorkloadSource::File { .. } => None,
        }
    }

    pub fn is_skewed(&self) -> bool {
        matches!(self.kind(), Some(WorkloadKind::Skewed { .. }) | None)
    }

    pub fn load(&self, data: &SortedDataset) -> Result<Vec<u64>> {
        match &self.source {
            WorkloadSource::Generated(spec) => gen_workload(spec, data),
            WorkloadSource::File { path } => load_query_file(path),
        }
    }
}

/// 95% of queries on a 5% hot run of keys starting at `start`.
pub fn skewed(start: f64) -> WorkloadKind {
    WorkloadKind::Skewed {
        hot_fraction: 0.05,
        hot_prob: 0.95,
        hot_range_start: start,
    }
}

/// Hot-run placements of the three skewed workloads, as rank fractions.
pub const SKEW_STARTS: [f64; 3] = [0.15, 0.45, 0.80];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShiftSettings {
    /// Fraction of keys replaced when deriving the shifted dataset.
    pub churn: f64,
    /// Replace the dataset with the next preset instead of churning it.
    pub swap_preset: bool,
    pub window: usize,
    pub ratio: f64,
}

impl Default for ShiftSettings {
    fn default() -> Self {
        Self {
            churn: 0.05,
            swap_preset: false,
            window: 10_000,
            ratio: DEFAULT_SHIFT_RATIO,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub datasets: Vec<DatasetEntry>,
    pub workloads: Vec<WorkloadEntry>,
    pub search_space: Vec<Candidate>,
    pub train: TrainConfig,
    /// Share of each workload sampled into the access histogram.
    pub sample_rate: f64,
    pub sample_seed: u64,
    /// Upper bound on augmentation weights.
    pub cap: f64,
    /// Sketch length.
    pub k: usize,
    pub tau: f64,
    pub cache_capacity: usize,
    pub cache_dir: Option<PathBuf>,
    pub mode: Mode,
    /// Timed lookups per row in calibrated mode.
    pub latency_queries: usize,
    /// Rank buckets in the per-range width report.
    pub range_buckets: usize,
    pub shift: ShiftSettings,
}

/// Training budget used at desk scale.
pub fn desk_train(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 50,
        learning_rate: 0.1,
        batch_size: 16,
        seed,
        fine_tune_epochs: 5,
        restarts: 3,
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk(1)
    }
}

impl ExperimentConfig {
    /// Four presets at `DESK_N` keys, a uniform and three skewed workloads,
    /// the default architecture space at `DESK_LEAVES` leaves. Every seed
    /// derives from `seed`.
    pub fn desk(seed: u64) -> Self {
        let mut workloads = vec![WorkloadEntry::generated(
            "uniform",
            WorkloadKind::Uniform,
            DESK_QUERIES,
            0,
        )];
        for (i, &start) in SKEW_STARTS.iter().enumerate() {
            workloads.push(WorkloadEntry::generated(
                &format!("skewed{}", i + 1),
                skewed(start),
                DESK_QUERIES,
                0,
            ));
        }
        let mut cfg = Self {
            datasets: Preset::ALL
                .iter()
                .map(|&p| DatasetEntry::preset(p, DESK_N, 0))
                .collect(),
            workloads,
            search_space: Candidate::grid(&ModelArch::default_space(), &[DESK_LEAVES]),
            train: desk_train(seed),
            sample_rate: 0.1,
            sample_seed: 0,
            cap: doraemon_core::augment::DEFAULT_CAP,
            k: DEFAULT_K,
            tau: DEFAULT_TAU,
            cache_capacity: DEFAULT_CAPACITY,
            cache_dir: None,
            mode: Mode::Deterministic,
            latency_queries: 100_000,
            range_buckets: 20,
            shift: ShiftSettings::default(),
        };
        cfg.reseed(seed);
        cfg
    }

    /// Rederives every generator seed from `base`: training uses `base`,
    /// dataset `i` uses `base + i`, workload `j` uses `base + 1000 + j` and
    /// histogram sampling uses `base + 2000`.
    pub fn reseed(&mut self, base: u64) {
        self.train.seed = base;
        for (i, d) in self.datasets.iter_mut().enumerate() {
            let s = base.wrapping_add(i as u64);
            match &mut d.source {
                DatasetSource::Preset { seed, .. } => *seed = s,
                DatasetSource::Spec(spec) => spec.seed = s,
                DatasetSource::File { .. } => {}
            }
        }
        for (j, w) in self.workloads.iter_mut().enumerate() {
            if let WorkloadSource::Generated(spec) = &mut w.source {
                spec.seed = base.wrapping_add(1000 + j as u64);
            }
        }
        self.sample_seed = base.wrapping_add(2000);
    }

    /// Sets the key count of every generated dataset.
    pub fn set_n(&mut self, n: usize) {
        for d in &mut self.datasets {
            match &mut d.source {
                DatasetSource::Preset { n: m, .. } => *m = n,
                DatasetSource::Spec(spec) => spec.n = n,
                DatasetSource::File { .. } => {}
            }
        }
    }

    pub fn set_queries(&mut self, q: usize) {
        for w in &mut self.workloads {
            if let WorkloadSource::Generated(spec) = &mut w.source {
                spec.num_queries = q;
            }
        }
    }

    /// Keeps only datasets and workloads whose ids are listed; an empty
    /// list keeps everything.
    pub fn retain(&mut self, datasets: &[String], workloads: &[String]) -> Result<()> {
        fn keep<T>(
            items: &mut Vec<T>,
            ids: &[String],
            id: impl Fn(&T) -> &str,
            what: &str,
        ) -> Result<()> {
            if ids.is_empty() {
                return Ok(());
            }
            if let Some(missing) = ids
                .iter()
                .find(|want| !items.iter().any(|t| id(t) == want.as_str()))
            {
                return Err(Error::InvalidConfig(format!(
                    "no {what} with id {missing:?}"
                )));
            }
            items.retain(|t| ids.iter().any(|want| id(t) == want));
            Ok(())
        }
        keep(&mut self.datasets, datasets, |d| &d.id, "dataset")?;
        keep(&mut self.workloads, workloads, |w| &w.id, "workload")
    }

    pub fn counselor(&self) -> CounselorConfig {
        CounselorConfig {
            k: self.k,
            search_space: self.search_space.clone(),
            train: self.train,
            retune_on_hit: false,
        }
    }

    /// Flag beats environment beats the built-in default.
    pub fn resolve_cache_dir(&self) -> PathBuf {
        self.cache_dir
            .clone()
            .or_else(|| std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.datasets.is_empty() {
            return bad("no datasets configured".into());
        }
        if self.search_space.is_empty() {
            return bad("empty search space".into());
        }
        if let Some(c) = self.search_space.iter().find(|c| c.leaves == 0) {
            return bad(format!("{} needs at least one leaf", c.arch));
        }
        for c in &self.search_space {
            c.arch.validate()?;
        }
        self.train.validate()?;
        if !(self.sample_rate > 0.0 && self.sample_rate <= 1.0) {
            return bad("sample_rate must lie in (0, 1]".into());
        }
        if self.cap.is_nan() || self.cap < 1.0 {
            return bad("cap must be at least 1".into());
        }
        if self.k < 2 {
            return bad("sketch length must be at least 2".into());
        }
        if self.tau.is_nan() || self.tau < 0.0 {
            return bad("tau must be non-negative".into());
        }
        if self.cache_capacity == 0 {
            return bad("cache capacity must be positive".into());
        }
        if !(0.0..1.0).contains(&self.shift.churn) {
            return bad("churn must lie in [0, 1)".into());
        }
        let mut ids: Vec<&str> = self.datasets.iter().map(|d| d.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("dataset ids must be unique".into());
        }
        let mut ids: Vec<&str> = self.workloads.iter().map(|w| w.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("workload ids must be unique".into());
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Parses `ARCH[,ARCH...][:M[,M...]]`, e.g. `lin,nn8,nn2-4:100,200`.
/// Leaf counts default to `DESK_LEAVES`.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace(pub Vec<Candidate>);

impl FromStr for SearchSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (archs, leaves) = match s.split_once(':') {
            Some((a, m)) => (a, Some(m)),
            None => (s, None),
        };
        let archs = archs
            .split(',')
            .map(str::parse)
            .collect::<Result<Vec<ModelArch>>>()?;
        let leaves = match leaves {
            Some(m) => m
                .split(',')
                .map(|x| {
                    x.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::InvalidConfig(format!("bad leaf count {x:?}")))
                })
                .collect::<Result<Vec<_>>>()?,
            None => vec![DESK_LEAVES],
        };
        Ok(Self(Candidate::grid(&archs, &leaves)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reseed_spreads_seeds() {
        let cfg = ExperimentConfig::desk(7);
        assert_eq!(cfg.train.seed, 7);
        let seeds: Vec<u64> = cfg
            .datasets
            .iter()
            .map(|d| d.spec().unwrap().seed)
            .collect();
        assert_eq!(seeds, vec![7, 8, 9, 10]);
        match &cfg.workloads[2].source {
            WorkloadSource::Generated(w) => assert_eq!(w.seed, 1009),
            _ => unreachable!(),
        }
        assert_eq!(cfg.sample_seed, 2007);
    }

    #[test]
    fn config_round_trips_through_json() {
        let mut cfg = ExperimentConfig::desk(3);
        cfg.datasets.push(DatasetEntry {
            id: "mine".into(),
            source: DatasetSource::File {
                path: "a.keys".into(),
            },
        });
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let partial: ExperimentConfig = serde_json::from_str(r#"{"k": 32}"#).unwrap();
        assert_eq!(partial.k, 32);
        assert_eq!(partial.datasets.len(), 4);
    }

    #[test]
    fn search_space_syntax() {
        let s: SearchSpace = "lin,NN2-4:10,20".parse().unwrap();
        assert_eq!(
            s.0,
            vec![
                Candidate::new(ModelArch::LIN, 10),
                Candidate::new(ModelArch::LIN, 20),
                Candidate::new(ModelArch::NN2_4, 10),
                Candidate::new(ModelArch::NN2_4, 20),
            ]
        );
        assert_eq!(
            "nn8".parse::<SearchSpace>().unwrap().0,
            vec![Candidate::new(ModelArch::NN8, DESK_LEAVES)]
        );
        assert!("nn8:x".parse::<SearchSpace>().is_err());
        assert!("btree".parse::<SearchSpace>().is_err());
    }

    #[test]
    fn validation_rejects_nonsense() {
        let mut cfg = ExperimentConfig::desk(1);
        assert!(cfg.validate().is_ok());
        cfg.search_space[0].leaves = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::desk(1);
        cfg.tau = f64::NAN;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::desk(1);
        assert!(cfg.retain(&["d9".into()], &[]).is_err());
        cfg.retain(&["d1".into()], &["skewed3".into()]).unwrap();
        assert_eq!((cfg.datasets.len(), cfg.workloads.len()), (1, 1));
    }
}
