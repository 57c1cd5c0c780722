use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use doraemon_bench::config::{ExperimentConfig, Mode, SearchSpace, DESK_N, DESK_QUERIES};
use doraemon_bench::report::{sibling, write_csv, write_json, Format};
use doraemon_bench::{run_augment_ab, run_grid, run_shift};
use doraemon_core::workload::{
    extract_frequencies, gen_dataset, gen_workload, write_keys, write_text, DatasetSpec, Family,
    Preset, WorkloadKind, WorkloadSpec, PRESET_KEY_SPACE,
};
use doraemon_core::Error;

#[derive(Parser)]
#[command(name = "doraemon", version, about = "Learned index experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a sorted key file.
    GenData(GenData),
    /// Generate a query file against a key file or preset.
    GenWorkload(GenWorkload),
    /// Score every architecture on every dataset and workload.
    Grid(Experiment),
    /// Compare plain, duplicated and stretched training sets.
    AugmentAb(Experiment),
    /// Cold build, distribution shift, warm rebuild through the cache.
    Shift(ShiftArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Uniform,
    Lognormal,
    D1,
    D2,
    D3,
    D4,
}

#[derive(Args)]
struct GenData {
    #[arg(long, value_enum)]
    family: FamilyArg,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    mu: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = PRESET_KEY_SPACE)]
    key_space_max: u64,
    /// `.keys` writes raw little-endian u64; anything else writes text.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Uniform,
    Skewed,
}

#[derive(Args)]
struct GenWorkload {
    /// Key file to query; defaults to a generated preset.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "d1")]
    preset: String,
    #[arg(long, default_value_t = DESK_N)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    data_seed: u64,
    #[arg(long, value_enum, default_value = "skewed")]
    kind: KindArg,
    #[arg(long, default_value_t = 0.05)]
    hot_frac: f64,
    #[arg(long, default_value_t = 0.95)]
    hot_prob: f64,
    /// First hot rank as a fraction of N.
    #[arg(long, default_value_t = 0.8)]
    hot_start: f64,
    #[arg(long, default_value_t = DESK_QUERIES)]
    queries: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// `.qry` writes raw little-endian u64; anything else writes text.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Experiment {
    /// JSON experiment config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Base seed; every dataset, workload and training seed derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// `ARCH[,ARCH...][:M[,M...]]`, e.g. `lin,nn8,nn2-4:100,200`.
    #[arg(long)]
    search_space: Option<SearchSpace>,
    #[arg(long)]
    k_sketch: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    cap: Option<f64>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Keys per generated dataset.
    #[arg(long)]
    n: Option<usize>,
    /// Queries per generated workload.
    #[arg(long)]
    queries: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    /// Restrict to these dataset ids (repeatable).
    #[arg(long = "dataset")]
    datasets: Vec<String>,
    /// Restrict to these workload ids (repeatable).
    #[arg(long = "workload")]
    workloads: Vec<String>,
}

#[derive(Args)]
struct ShiftArgs {
    #[command(flatten)]
    experiment: Experiment,
    /// Move to the next preset instead of churning the keys.
    #[arg(long)]
    swap_preset: bool,
    #[arg(long)]
    churn: Option<f64>,
}

impl Experiment {
    fn config(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_json_file(path)
                .with_context(|| format!("reading config {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.reseed(seed);
        }
        if let Some(mode) = self.mode {
            cfg.mode = mode;
        }
        if let Some(space) = &self.search_space {
            cfg.search_space = space.0.clone();
        }
        if let Some(k) = self.k_sketch {
            cfg.k = k;
        }
        if let Some(tau) = self.tau {
            cfg.tau = tau;
        }
        if let Some(cap) = self.cap {
            cfg.cap = cap;
        }
        if let Some(dir) = &self.cache_dir {
            cfg.cache_dir = Some(dir.clone());
        }
        if let Some(n) = self.n {
            cfg.set_n(n);
        }
        if let Some(q) = self.queries {
            cfg.set_queries(q);
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
            cfg.train.fine_tune_epochs = cfg.train.fine_tune_epochs.min(e);
        }
        if let Some(r) = self.restarts {
            cfg.train.restarts = r;
        }
        cfg.retain(&self.datasets, &self.workloads)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn write<T: Serialize>(
        &self,
        tables: &[(&str, &[T])],
        whole: &impl Serialize,
    ) -> anyhow::Result<()> {
        match self.format {
            Format::Json => write_json(&self.out, whole),
            Format::Csv => {
                for (tag, rows) in tables {
                    let path = if tag.is_empty() {
                        self.out.clone()
                    } else {
                        sibling(&self.out, tag)
                    };
                    write_csv(&path, rows)?;
                }
                Ok(())
            }
        }
    }
}

fn gen_data(args: &GenData) -> anyhow::Result<()> {
    let spec = match args.family {
        FamilyArg::Uniform => DatasetSpec {
            family: Family::Uniform,
            n: args.n,
            key_space_max: args.key_space_max,
            seed: args.seed,
        },
        FamilyArg::Lognormal => DatasetSpec {
            family: Family::Lognormal {
                mu: args.mu,
                sigma: args.sigma,
            },
            n: args.n,
            key_space_max: args.key_space_max,
            seed: args.seed,
        },
        FamilyArg::D1 | FamilyArg::D2 | FamilyArg::D3 | FamilyArg::D4 => {
            let preset = match args.family {
                FamilyArg::D1 => Preset::D1,
                FamilyArg::D2 => Preset::D2,
                FamilyArg::D3 => Preset::D3,
                _ => Preset::D4,
            };
            DatasetSpec {
                key_space_max: args.key_space_max,
                ..preset.spec(args.n, args.seed)
            }
        }
    };
    let data = gen_dataset(&spec)?;
    write_key_file(&args.out, data.keys(), "keys")?;
    println!("wrote {} keys to {}", data.len(), args.out.display());
    Ok(())
}

fn write_key_file(path: &Path, keys: &[u64], binary_ext: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    if path.extension().and_then(|e| e.to_str()) == Some(binary_ext) {
        write_keys(path, keys)?;
    } else {
        write_text(path, keys)?;
    }
    Ok(())
}

fn gen_workload_cmd(args: &GenWorkload) -> anyhow::Result<()> {
    let data = match &args.data {
        Some(path) => doraemon_bench::config::load_keys_file(path)
            .with_context(|| format!("reading keys from {}", path.display()))?,
        None => gen_dataset(&Preset::parse(&args.preset)?.spec(args.n, args.data_seed))?,
    };
    let kind = match args.kind {
        KindArg::Uniform => WorkloadKind::Uniform,
        KindArg::Skewed => WorkloadKind::Skewed {
            hot_fraction: args.hot_frac,
            hot_prob: args.hot_prob,
            hot_range_start: args.hot_start,
        },
    };
    let spec = WorkloadSpec {
        kind,
        num_queries: args.queries,
        seed: args.seed,
    };
    let queries = gen_workload(&spec, &data)?;
    write_key_file(&args.out, &queries, "qry")?;
    let hist = extract_frequencies(&queries, &data, 1.0, 0)?;
    let hot = kind.hot_range(data.len());
    println!(
        "wrote {} queries to {}; hot mass {:.4}",
        queries.len(),
        args.out.display(),
        hist.mass(hot)
    );
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenData(args) => gen_data(&args),
        Command::GenWorkload(args) => gen_workload_cmd(&args),
        Command::Grid(args) => {
            let cfg = args.config()?;
            let r = run_grid(&cfg)?;
            args.write(&[("", &r.rows[..])], &r)?;
            if args.format == Format::Csv {
                write_csv(&sibling(&args.out, "summary"), &r.summary)?;
                write_csv(&sibling(&args.out, "decomposition"), &r.decomposition)?;
                write_csv(&sibling(&args.out, "ranges"), &r.ranges)?;
            }
            for s in &r.summary {
                println!(
                    "{} x {}: {} x {} ({:.3})",
                    s.dataset, s.workload, s.best_arch, s.best_leaves, s.cost_proxy
                );
            }
            Ok(())
        }
        Command::AugmentAb(args) => {
            let cfg = args.config()?;
            let r = run_augment_ab(&cfg)?;
            args.write(&[("", &r.rows[..])], &r)?;
            for row in &r.rows {
                println!(
                    "{} x {} {}: {} weighted width {:.2}",
                    row.dataset,
                    row.workload,
                    row.variant,
                    row.arch,
                    row.weighted_width.unwrap_or(f64::NAN)
                );
            }
            Ok(())
        }
        Command::Shift(args) => {
            let mut cfg = args.experiment.config()?;
            cfg.shift.swap_preset = args.swap_preset;
            if let Some(c) = args.churn {
                cfg.shift.churn = c;
            }
            cfg.validate()?;
            let r = run_shift(&cfg)?;
            args.experiment
                .write(&[("", std::slice::from_ref(&r.row))], &r)?;
            println!(
                "cold {:.2}s ({}), warm {:.2}s ({}), ratio {:.3}",
                r.row.cold_secs,
                r.row.cold_provenance,
                r.row.warm_secs,
                r.row.warm_provenance,
                r.row.ratio
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e
                .chain()
                .any(|c| matches!(c.downcast_ref::<Error>(), Some(Error::InvalidConfig(_))));
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
