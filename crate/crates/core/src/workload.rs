//! Synthetic datasets, read workloads and access histograms.
//!
//! Every generator is a pure function of its spec: the same spec always
//! yields the same keys or queries.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use log::debug;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::LogNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::SortedDataset;

/// Standard normal quantile at 0.999; lognormal samples are truncated there.
const Z_999: f64 = 3.090_232_306_167_813;

/// Default key space for the desk-scale presets.
pub const PRESET_KEY_SPACE: u64 = 1 << 40;

/// One mixture component, producing values in `[lo, hi]` of the unit interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Component {
    Uniform {
        weight: f64,
        lo: f64,
        hi: f64,
    },
    /// Lognormal truncated at its 0.999 quantile, rescaled onto `[lo, hi]`.
    Lognormal {
        weight: f64,
        mu: f64,
        sigma: f64,
        lo: f64,
        hi: f64,
    },
}

impl Component {
    fn weight(&self) -> f64 {
        match *self {
            Self::Uniform { weight, .. } | Self::Lognormal { weight, .. } => weight,
        }
    }

    fn bounds(&self) -> (f64, f64) {
        match *self {
            Self::Uniform { lo, hi, .. } | Self::Lognormal { lo, hi, .. } => (lo, hi),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Self::Uniform { lo, hi, .. } => lo + (hi - lo) * rng.random::<f64>(),
            Self::Lognormal {
                mu, sigma, lo, hi, ..
            } => lo + (hi - lo) * truncated_lognormal_unit(mu, sigma, rng),
        }
    }
}

/// Cutoff at the 0.999 quantile; samples above it are redrawn.
pub fn lognormal_cutoff(mu: f64, sigma: f64) -> f64 {
    (mu + sigma * Z_999).exp()
}

fn truncated_lognormal_unit(mu: f64, sigma: f64, rng: &mut ChaCha8Rng) -> f64 {
    let dist = LogNormal::new(mu, sigma).expect("validated parameters");
    let cutoff = lognormal_cutoff(mu, sigma);
    loop {
        let x = dist.sample(rng);
        if x <= cutoff {
            return x / cutoff;
        }
    }
}

/// Shape of the key distribution over `[0, key_space_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    Uniform,
    /// Truncated at the 0.999 quantile and scaled onto the key space.
    Lognormal {
        mu: f64,
        sigma: f64,
    },
    Mixture {
        components: Vec<Component>,
    },
    /// Piecewise-linear CDF through `(x, F(x))` breakpoints on the unit square.
    Piecewise {
        breakpoints: Vec<(f64, f64)>,
    },
}

impl Family {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        match self {
            Self::Uniform => Ok(()),
            Self::Lognormal { mu, sigma } => {
                if mu.is_finite() && *sigma > 0.0 && sigma.is_finite() {
                    Ok(())
                } else {
                    bad("lognormal needs finite mu and positive sigma")
                }
            }
            Self::Mixture { components } => {
                if components.is_empty() {
                    return bad("mixture needs at least one component");
                }
                for c in components {
                    let (lo, hi) = c.bounds();
                    if !(c.weight() > 0.0 && 0.0 <= lo && lo < hi && hi <= 1.0) {
                        return bad(
                            "mixture components need positive weight and 0 <= lo < hi <= 1",
                        );
                    }
                    if let Component::Lognormal { mu, sigma, .. } = *c {
                        Self::Lognormal { mu, sigma }.validate()?;
                    }
                }
                Ok(())
            }
            Self::Piecewise { breakpoints } => {
                let ok = breakpoints.len() >= 2
                    && breakpoints[0].1 == 0.0
                    && breakpoints[breakpoints.len() - 1].1 == 1.0
                    && breakpoints
                        .iter()
                        .all(|&(x, f)| (0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&f))
                    && breakpoints
                        .windows(2)
                        .all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1);
                if ok {
                    Ok(())
                } else {
                    bad("piecewise breakpoints must rise from F=0 to F=1 with increasing x")
                }
            }
        }
    }
}

struct Sampler<'a> {
    family: &'a Family,
    mixture: Option<WeightedIndex<f64>>,
}

impl<'a> Sampler<'a> {
    fn new(family: &'a Family) -> Result<Self> {
        let mixture = match family {
            Family::Mixture { components } => Some(
                WeightedIndex::new(components.iter().map(Component::weight))
                    .map_err(|e| Error::InvalidConfig(e.to_string()))?,
            ),
            _ => None,
        };
        Ok(Self { family, mixture })
    }

    /// A draw on the unit interval.
    fn unit(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self.family {
            Family::Uniform => rng.random::<f64>(),
            Family::Lognormal { mu, sigma } => truncated_lognormal_unit(*mu, *sigma, rng),
            Family::Mixture { components } => {
                let idx = self.mixture.as_ref().expect("mixture weights").sample(rng);
                components[idx].sample(rng)
            }
            Family::Piecewise { breakpoints } => {
                let u = rng.random::<f64>();
                let seg = breakpoints
                    .windows(2)
                    .find(|w| u < w[1].1)
                    .unwrap_or(&breakpoints[breakpoints.len() - 2..]);
                let ((x0, f0), (x1, f1)) = (seg[0], seg[1]);
                if f1 > f0 {
                    x0 + (x1 - x0) * (u - f0) / (f1 - f0)
                } else {
                    x0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    #[serde(flatten)]
    pub family: Family,
    pub n: usize,
    pub key_space_max: u64,
    pub seed: u64,
}

/// The four desk-scale dataset shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Single lognormal: smooth heavy skew toward small keys.
    D1,
    /// Two humps: a lognormal bulk and a uniform block.
    D2,
    /// Three components separated by an empty plateau.
    D3,
    /// Near-uniform with one steep jump.
    D4,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::D1, Preset::D2, Preset::D3, Preset::D4];

    pub fn name(&self) -> &'static str {
        match self {
            Self::D1 => "d1",
            Self::D2 => "d2",
            Self::D3 => "d3",
            Self::D4 => "d4",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown preset {s:?}")))
    }

    pub fn family(&self) -> Family {
        use Component::*;
        match self {
            Self::D1 => Family::Lognormal {
                mu: 0.0,
                sigma: 1.0,
            },
            Self::D2 => Family::Mixture {
                components: vec![
                    Lognormal {
                        weight: 0.445,
                        mu: 0.0,
                        sigma: 0.6,
                        lo: 0.0,
                        hi: 0.5,
                    },
                    Uniform {
                        weight: 0.555,
                        lo: 0.6,
                        hi: 1.0,
                    },
                ],
            },
            Self::D3 => Family::Mixture {
                components: vec![
                    Uniform {
                        weight: 0.3,
                        lo: 0.0,
                        hi: 0.15,
                    },
                    Lognormal {
                        weight: 0.46,
                        mu: 0.0,
                        sigma: 0.8,
                        lo: 0.15,
                        hi: 0.5,
                    },
                    Uniform {
                        weight: 0.24,
                        lo: 0.8,
                        hi: 1.0,
                    },
                ],
            },
            Self::D4 => Family::Piecewise {
                breakpoints: vec![(0.0, 0.0), (0.5, 0.4), (0.52, 0.65), (1.0, 1.0)],
            },
        }
    }

    pub fn spec(&self, n: usize, seed: u64) -> DatasetSpec {
        DatasetSpec {
            family: self.family(),
            n,
            key_space_max: PRESET_KEY_SPACE,
            seed,
        }
    }
}

/// Draws `spec.n` distinct keys and returns them sorted.
///
/// Values on the unit interval are scaled onto `[0, key_space_max]`;
/// colliding keys move to the next free integer.
pub fn gen_dataset(spec: &DatasetSpec) -> Result<SortedDataset> {
    if spec.n == 0 {
        return Err(Error::InvalidConfig(
            "dataset needs at least one key".into(),
        ));
    }
    if spec.n as u64 > spec.key_space_max {
        return Err(Error::KeySpaceExhausted {
            n: spec.n,
            max: spec.key_space_max,
        });
    }
    spec.family.validate()?;
    let sampler = Sampler::new(&spec.family)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let scale = spec.key_space_max as f64;
    let mut keys: Vec<u64> = (0..spec.n)
        .map(|_| {
            let v = sampler.unit(&mut rng).clamp(0.0, 1.0);
            ((v * scale) as u64).min(spec.key_space_max)
        })
        .collect();
    keys.sort_unstable();
    make_distinct(&mut keys, spec.key_space_max);
    SortedDataset::new(keys)
}

/// Resolves duplicates in sorted `keys` by probing upward; if that overruns
/// `max`, the tail is pushed back down.
fn make_distinct(keys: &mut [u64], max: u64) {
    for i in 1..keys.len() {
        if keys[i] <= keys[i - 1] {
            keys[i] = keys[i - 1].saturating_add(1);
        }
    }
    let n = keys.len();
    if n > 0 && keys[n - 1] > max {
        keys[n - 1] = max;
        for i in (0..n - 1).rev() {
            if keys[i] >= keys[i + 1] {
                keys[i] = keys[i + 1] - 1;
            } else {
                break;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WorkloadKind {
    Uniform,
    /// `hot_prob` of the queries hit a contiguous run of
    /// `ceil(hot_fraction * N)` keys starting at rank `floor(hot_range_start * N)`.
    Skewed {
        hot_fraction: f64,
        hot_prob: f64,
        hot_range_start: f64,
    },
}

impl WorkloadKind {
    /// Ranks of the hot keys; empty for uniform workloads.
    pub fn hot_range(&self, n: usize) -> Range<usize> {
        match *self {
            Self::Uniform => 0..0,
            Self::Skewed {
                hot_fraction,
                hot_range_start,
                ..
            } => {
                let len = ((hot_fraction * n as f64).ceil() as usize).clamp(1, n);
                let start = ((hot_range_start * n as f64).floor() as usize).min(n - len);
                start..start + len
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let Self::Skewed {
            hot_fraction,
            hot_prob,
            hot_range_start,
        } = *self
        {
            let open = |v: f64| v > 0.0 && v < 1.0;
            if !open(hot_fraction) || !open(hot_prob) || !(0.0..=1.0).contains(&hot_range_start) {
                return Err(Error::InvalidConfig(
                    "hot_fraction and hot_prob must lie in (0, 1), hot_range_start in [0, 1]"
                        .into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    #[serde(flatten)]
    pub kind: WorkloadKind,
    pub num_queries: usize,
    pub seed: u64,
}

/// Generates the query key sequence. Cold queries are uniform over the keys
/// outside the hot range.
pub fn gen_workload(spec: &WorkloadSpec, data: &SortedDataset) -> Result<Vec<u64>> {
    spec.kind.validate()?;
    let n = data.len();
    if n == 0 {
        return Err(Error::InvalidConfig(
            "workload needs a non-empty dataset".into(),
        ));
    }
    let keys = data.keys();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let out = match spec.kind {
        WorkloadKind::Uniform => (0..spec.num_queries)
            .map(|_| keys[rng.random_range(0..n)])
            .collect(),
        WorkloadKind::Skewed { hot_prob, .. } => {
            let hot = spec.kind.hot_range(n);
            let cold = n - hot.len();
            (0..spec.num_queries)
                .map(|_| {
                    if cold == 0 || rng.random::<f64>() < hot_prob {
                        keys[rng.random_range(hot.clone())]
                    } else {
                        let r = rng.random_range(0..cold);
                        keys[if r < hot.start { r } else { r + hot.len() }]
                    }
                })
                .collect()
        }
    };
    Ok(out)
}

/// Access counts aligned to dataset positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyHistogram {
    pub counts: Vec<u64>,
    pub total: u64,
}

impl FrequencyHistogram {
    pub fn zeros(n: usize) -> Self {
        Self {
            counts: vec![0; n],
            total: 0,
        }
    }

    pub fn from_counts(counts: Vec<u64>) -> Self {
        let total = counts.iter().sum();
        Self { counts, total }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Share of accesses that fall on ranks in `range`.
    pub fn mass(&self, range: Range<usize>) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.counts[range].iter().sum::<u64>() as f64 / self.total as f64
    }
}

/// Counts accesses over a Bernoulli(`sample_rate`) subset of the workload.
/// Queries for keys absent from `data` are skipped.
pub fn extract_frequencies(
    workload: &[u64],
    data: &SortedDataset,
    sample_rate: f64,
    seed: u64,
) -> Result<FrequencyHistogram> {
    if !(sample_rate > 0.0 && sample_rate <= 1.0) {
        return Err(Error::InvalidConfig(
            "sample_rate must lie in (0, 1]".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hist = FrequencyHistogram::zeros(data.len());
    let mut missing = 0u64;
    for &key in workload {
        if sample_rate < 1.0 && rng.random::<f64>() >= sample_rate {
            continue;
        }
        match data.position_of(key) {
            Some(p) => {
                hist.counts[p] += 1;
                hist.total += 1;
            }
            None => missing += 1,
        }
    }
    if missing > 0 {
        debug!("ignored {missing} sampled queries for keys outside the dataset");
    }
    Ok(hist)
}

/// Raw little-endian `u64` keys, no header (`.keys` / `.qry`).
pub fn write_keys(path: impl AsRef<Path>, keys: &[u64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for k in keys {
        w.write_all(&k.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_keys(path: impl AsRef<Path>) -> Result<Vec<u64>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Format(format!(
            "{}: length {} is not a multiple of 8",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Reads a `.keys` file and checks it is strictly ascending.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<SortedDataset> {
    SortedDataset::new(read_keys(path)?)
}

/// One decimal key per line, for debugging.
pub fn write_text(path: impl AsRef<Path>, keys: &[u64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for k in keys {
        writeln!(w, "{k}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_text(path: impl AsRef<Path>) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        out.push(
            t.parse()
                .map_err(|_| Error::Format(format!("not a key: {t:?}")))?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_spec(n: usize, max: u64, seed: u64) -> DatasetSpec {
        DatasetSpec {
            family: Family::Uniform,
            n,
            key_space_max: max,
            seed,
        }
    }

    #[test]
    fn uniform_dataset_is_deterministic() {
        let a = gen_dataset(&uniform_spec(100, 1_000_000, 9)).unwrap();
        let b = gen_dataset(&uniform_spec(100, 1_000_000, 9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 100);
        assert!(a.keys().iter().all(|&k| k <= 1_000_000));
        let c = gen_dataset(&uniform_spec(100, 1_000_000, 10)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn dense_key_space_still_distinct() {
        let d = gen_dataset(&uniform_spec(50, 50, 1)).unwrap();
        assert_eq!(d.len(), 50);
        assert!(d.keys()[49] <= 50);
        let err = gen_dataset(&uniform_spec(51, 50, 1)).unwrap_err();
        assert!(err.to_string().starts_with("key space exhausted"));
    }

    #[test]
    fn make_distinct_pushes_tail_down() {
        let mut keys = vec![3, 5, 5, 5, 5];
        make_distinct(&mut keys, 6);
        assert_eq!(keys, vec![2, 3, 4, 5, 6]);
    }

    #[test]
    fn presets_generate() {
        for p in Preset::ALL {
            let d = gen_dataset(&p.spec(5000, 3)).unwrap();
            assert_eq!(d.len(), 5000);
            assert_eq!(Preset::parse(p.name()).unwrap(), p);
        }
    }

    #[test]
    fn empty_workload() {
        let data = gen_dataset(&uniform_spec(10, 100, 1)).unwrap();
        let spec = WorkloadSpec {
            kind: WorkloadKind::Uniform,
            num_queries: 0,
            seed: 1,
        };
        assert!(gen_workload(&spec, &data).unwrap().is_empty());
        let h = extract_frequencies(&[], &data, 1.0, 0).unwrap();
        assert_eq!(h.total, 0);
        assert!(h.counts.iter().all(|&c| c == 0));
    }

    #[test]
    fn full_sampling_counts_exactly() {
        let data = SortedDataset::new(vec![10, 20, 30]).unwrap();
        let h = extract_frequencies(&[10, 20, 20, 30, 99], &data, 1.0, 0).unwrap();
        assert_eq!(h.counts, vec![1, 2, 1]);
        assert_eq!(h.total, 4);
    }

    #[test]
    fn hot_range_is_clamped_to_dataset() {
        let k = WorkloadKind::Skewed {
            hot_fraction: 0.05,
            hot_prob: 0.95,
            hot_range_start: 0.99,
        };
        assert_eq!(k.hot_range(1000), 950..1000);
        let k = WorkloadKind::Skewed {
            hot_fraction: 0.05,
            hot_prob: 0.95,
            hot_range_start: 0.2,
        };
        assert_eq!(k.hot_range(1000), 200..250);
    }

    #[test]
    fn invalid_skew_rejected() {
        let data = gen_dataset(&uniform_spec(10, 100, 1)).unwrap();
        let spec = WorkloadSpec {
            kind: WorkloadKind::Skewed {
                hot_fraction: 0.0,
                hot_prob: 0.95,
                hot_range_start: 0.0,
            },
            num_queries: 10,
            seed: 1,
        };
        assert!(gen_workload(&spec, &data).is_err());
    }

    #[test]
    fn file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let keys = vec![1u64, 5, 1 << 40, u64::MAX];
        let bin = dir.path().join("a.keys");
        write_keys(&bin, &keys).unwrap();
        assert_eq!(std::fs::metadata(&bin).unwrap().len(), 32);
        assert_eq!(read_dataset(&bin).unwrap().keys(), keys.as_slice());
        let txt = dir.path().join("a.txt");
        write_text(&txt, &keys).unwrap();
        assert_eq!(read_text(&txt).unwrap(), keys);
        std::fs::write(&bin, [0u8; 7]).unwrap();
        assert!(read_keys(&bin).is_err());
    }
}
