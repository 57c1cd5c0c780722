//! The two-stage learned index.
//!
//! A root model maps a normalized key to a normalized position; scaling that
//! by the leaf count picks one of `M` linear leaves. Each leaf predicts an
//! absolute position and carries the signed extremes of its prediction
//! error, so a lookup only binary-searches `[pred + err_lo, pred + err_hi]`.

mod metrics;
pub(crate) mod serialize;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{fit_linear_iter, LinearModel, ModelArch, RootModel, TrainConfig};

pub use metrics::{
    calibrate_costs, deterministic_compute_constant, index_metrics, range_widths, CostModel,
    IndexMetrics, RangeWidth,
};
pub use serialize::{BLOB_MAGIC, BLOB_VERSION};

/// Distinct keys in ascending order; the position of `keys[i]` is `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SortedDataset {
    keys: Vec<u64>,
}

impl SortedDataset {
    /// Fails unless `keys` is strictly ascending.
    pub fn new(keys: Vec<u64>) -> Result<Self> {
        if let Some(i) = keys.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(format!(
                "keys must be strictly ascending (violated at position {})",
                i + 1
            )));
        }
        Ok(Self { keys })
    }

    /// Sorts and deduplicates arbitrary keys.
    pub fn from_unsorted(mut keys: Vec<u64>) -> Self {
        keys.sort_unstable();
        keys.dedup();
        Self { keys }
    }

    pub fn keys(&self) -> &[u64] {
        &self.keys
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn into_keys(self) -> Vec<u64> {
        self.keys
    }

    /// Full-array binary search; the baseline every learned lookup must agree with.
    pub fn position_of(&self, key: u64) -> Option<usize> {
        self.keys.binary_search(&key).ok()
    }

    /// `(key, position)` pairs with integer positions.
    pub fn to_pairs(&self) -> Vec<TrainingPair> {
        self.keys
            .iter()
            .enumerate()
            .map(|(i, &key)| TrainingPair {
                key,
                position: i as f64,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub key: u64,
    /// Fractional after stretching.
    pub position: f64,
}

impl TrainingPair {
    pub const fn new(key: u64, position: f64) -> Self {
        Self { key, position }
    }
}

/// A second-stage linear model with its signed error window.
///
/// For every key routed here, `true_position - round(prediction)` lies in
/// `[err_lo, err_hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeafModel {
    pub model: LinearModel,
    pub err_lo: i64,
    pub err_hi: i64,
    pub key_count: u64,
}

impl LeafModel {
    pub fn width(&self) -> u64 {
        (self.err_hi - self.err_lo) as u64
    }

    /// Symmetric bound that covers the signed window.
    pub fn sigma(&self) -> u64 {
        self.err_lo.unsigned_abs().max(self.err_hi.max(0) as u64)
    }
}

/// Result of a lookup that may need to widen a stale error window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Probe {
    pub position: Option<usize>,
    /// Number of slots the search had to cover.
    pub window: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StagedIndex {
    root: RootModel,
    leaves: Vec<LeafModel>,
    key_count: usize,
    key_min: u64,
    key_max: u64,
    /// Positions are divided by this before the root sees them.
    position_span: f64,
}

/// Half-up rounding to the nearest integer position.
#[inline]
pub fn round_position(pred: f64) -> i64 {
    // `as` saturates on overflow and maps NaN to 0.
    (pred + 0.5).floor() as i64
}

impl StagedIndex {
    /// Assembles an index from parts, e.g. a hand-built root in tests.
    pub fn from_parts(
        root: RootModel,
        leaves: Vec<LeafModel>,
        key_count: usize,
        key_min: u64,
        key_max: u64,
        position_span: f64,
    ) -> Result<Self> {
        if leaves.is_empty() {
            return Err(Error::InvalidConfig(
                "an index needs at least one leaf".into(),
            ));
        }
        if key_min > key_max {
            return Err(Error::InvalidConfig("key_min exceeds key_max".into()));
        }
        if !(position_span > 0.0 && position_span.is_finite()) {
            return Err(Error::InvalidConfig(
                "position span must be positive".into(),
            ));
        }
        Ok(Self {
            root,
            leaves,
            key_count,
            key_min,
            key_max,
            position_span,
        })
    }

    pub fn root(&self) -> &RootModel {
        &self.root
    }

    pub fn arch(&self) -> ModelArch {
        self.root.arch()
    }

    pub fn leaves(&self) -> &[LeafModel] {
        &self.leaves
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn key_count(&self) -> usize {
        self.key_count
    }

    pub fn key_range(&self) -> (u64, u64) {
        (self.key_min, self.key_max)
    }

    pub fn position_span(&self) -> f64 {
        self.position_span
    }

    /// Maps a key into the root's input domain; dataset keys land in `[0, 1]`.
    #[inline]
    pub fn normalize(&self, key: u64) -> f64 {
        normalize_key(key, self.key_min, self.key_max)
    }

    /// The root's position estimate for `key`, in position units.
    pub fn root_position(&self, key: u64) -> f64 {
        self.root.predict(self.normalize(key)) * self.position_span
    }

    /// Leaf selected by `floor(M * f0(key) / span)`, clamped to `[0, M - 1]`.
    #[inline]
    pub fn route(&self, key: u64) -> usize {
        route_normalized(&self.root, self.normalize(key), self.leaves.len())
    }

    /// Leaf id and rounded position prediction.
    #[inline]
    pub fn predict(&self, key: u64) -> (usize, i64) {
        let x = self.normalize(key);
        let leaf = route_normalized(&self.root, x, self.leaves.len());
        (leaf, round_position(self.leaves[leaf].model.predict(x)))
    }

    /// Exact-match lookup: binary search inside the leaf's error window.
    pub fn lookup(&self, data: &SortedDataset, key: u64) -> Option<usize> {
        let (lo, hi) = self.window(data.len(), key)?;
        data.keys[lo..=hi].binary_search(&key).ok().map(|p| p + lo)
    }

    /// Inclusive search window for `key`, clamped to `[0, n - 1]`.
    fn window(&self, n: usize, key: u64) -> Option<(usize, usize)> {
        if n == 0 {
            return None;
        }
        let (leaf, pred) = self.predict(key);
        let leaf = &self.leaves[leaf];
        let lo = pred.saturating_add(leaf.err_lo).max(0);
        let hi = pred.saturating_add(leaf.err_hi).min(n as i64 - 1);
        (lo <= hi).then_some((lo as usize, hi as usize))
    }

    /// Like [`Self::lookup`], but when the key sits outside its window (the
    /// index is stale for `data`) it gallops outward until the key is
    /// bracketed. Reports how many slots were covered.
    pub fn probe(&self, data: &SortedDataset, key: u64) -> Probe {
        let n = data.len();
        if n == 0 {
            return Probe {
                position: None,
                window: 0,
            };
        }
        let keys = &data.keys;
        let (mut lo, mut hi) = match self.window(n, key) {
            Some(w) => w,
            None => {
                let (_, pred) = self.predict(key);
                let p = pred.clamp(0, n as i64 - 1) as usize;
                (p, p)
            }
        };
        let mut step = 1usize;
        while lo > 0 && keys[lo] > key {
            lo = lo.saturating_sub(step);
            step *= 2;
        }
        step = 1;
        while hi + 1 < n && keys[hi] < key {
            hi = (hi + step).min(n - 1);
            step *= 2;
        }
        let position = keys[lo..=hi].binary_search(&key).ok().map(|p| p + lo);
        Probe {
            position,
            window: (hi - lo + 1) as u64,
        }
    }

    /// Sets every leaf's window from the true positions in `data`.
    /// Leaves that receive no key get `(0, 0)`.
    pub fn recompute_bounds(&mut self, data: &SortedDataset) {
        let m = self.leaves.len();
        let mut lo = vec![i64::MAX; m];
        let mut hi = vec![i64::MIN; m];
        let mut count = vec![0u64; m];
        for (i, &key) in data.keys.iter().enumerate() {
            let (leaf, pred) = self.predict(key);
            let err = (i as i64).saturating_sub(pred);
            lo[leaf] = lo[leaf].min(err);
            hi[leaf] = hi[leaf].max(err);
            count[leaf] += 1;
        }
        for (j, leaf) in self.leaves.iter_mut().enumerate() {
            leaf.key_count = count[j];
            if count[j] == 0 {
                leaf.err_lo = 0;
                leaf.err_hi = 0;
            } else {
                leaf.err_lo = lo[j];
                leaf.err_hi = hi[j];
            }
        }
        self.key_count = data.len();
    }

    /// Replaces every leaf by a least-squares fit of the given pairs routed
    /// through the current root; windows are initialized from the same pairs.
    pub(crate) fn refit_leaves(&mut self, pairs: &[TrainingPair]) -> Result<()> {
        self.leaves = fit_leaves(
            &self.root,
            pairs,
            self.leaves.len(),
            self.key_min,
            self.key_max,
        )?;
        Ok(())
    }
}

#[inline]
fn normalize_key(key: u64, key_min: u64, key_max: u64) -> f64 {
    if key_max == key_min {
        return 0.0;
    }
    (key as f64 - key_min as f64) / (key_max - key_min) as f64
}

#[inline]
fn route_normalized(root: &RootModel, x: f64, leaves: usize) -> usize {
    let r = (leaves as f64 * root.predict(x)).floor();
    if r >= 0.0 {
        (r as usize).min(leaves - 1)
    } else {
        // Negative or NaN.
        0
    }
}

fn check_pairs(pairs: &[TrainingPair]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    for w in pairs.windows(2) {
        if w[0].key > w[1].key || w[0].position > w[1].position {
            return Err(Error::InvalidConfig(
                "training pairs must be sorted by key with non-decreasing positions".into(),
            ));
        }
    }
    if pairs[0].position.is_nan() || pairs[0].position < 0.0 || !pairs[pairs.len() - 1].position.is_finite() {
        return Err(Error::InvalidConfig(
            "positions must be finite and non-negative".into(),
        ));
    }
    Ok(())
}

/// Normalized root training data: key to `[0, 1]`, position divided by span.
pub(crate) fn root_training_pairs(
    pairs: &[TrainingPair],
    key_min: u64,
    key_max: u64,
    span: f64,
) -> Vec<(f64, f64)> {
    pairs
        .iter()
        .map(|p| (normalize_key(p.key, key_min, key_max), p.position / span))
        .collect()
}

/// `last position + 1`: equals `N` for unaugmented data.
pub(crate) fn position_span(pairs: &[TrainingPair]) -> f64 {
    pairs[pairs.len() - 1].position + 1.0
}

/// Trains a two-stage index: root on all pairs, then one least-squares line
/// per leaf on the pairs the root routes to it.
pub fn train_staged(
    pairs: &[TrainingPair],
    arch: ModelArch,
    leaves: usize,
    cfg: &TrainConfig,
) -> Result<StagedIndex> {
    check_pairs(pairs)?;
    if leaves == 0 {
        return Err(Error::InvalidConfig("leaf count must be at least 1".into()));
    }
    arch.validate()?;
    let key_min = pairs[0].key;
    let key_max = pairs[pairs.len() - 1].key;
    let span = position_span(pairs);
    let root_pairs = root_training_pairs(pairs, key_min, key_max, span);
    let (root, _loss) = RootModel::fit(arch, &root_pairs, cfg)?;
    build_on_root(root, pairs, leaves, key_min, key_max, span)
}

/// Hangs `leaves` leaves under an already trained root. The root must have
/// been fit on the same key range and position span as `pairs`.
pub fn build_with_root(
    root: RootModel,
    pairs: &[TrainingPair],
    leaves: usize,
) -> Result<StagedIndex> {
    check_pairs(pairs)?;
    if leaves == 0 {
        return Err(Error::InvalidConfig("leaf count must be at least 1".into()));
    }
    let key_min = pairs[0].key;
    let key_max = pairs[pairs.len() - 1].key;
    build_on_root(root, pairs, leaves, key_min, key_max, position_span(pairs))
}

/// Root-stage training data for `pairs`: keys normalized to `[0, 1]`,
/// positions divided by the span.
pub fn root_pairs(pairs: &[TrainingPair]) -> Vec<(f64, f64)> {
    if pairs.is_empty() {
        return Vec::new();
    }
    root_training_pairs(
        pairs,
        pairs[0].key,
        pairs[pairs.len() - 1].key,
        position_span(pairs),
    )
}

pub(crate) fn build_on_root(
    root: RootModel,
    pairs: &[TrainingPair],
    leaves: usize,
    key_min: u64,
    key_max: u64,
    span: f64,
) -> Result<StagedIndex> {
    let fitted = fit_leaves(&root, pairs, leaves, key_min, key_max)?;
    let mut distinct = pairs.len();
    for w in pairs.windows(2) {
        if w[0].key == w[1].key {
            distinct -= 1;
        }
    }
    StagedIndex::from_parts(root, fitted, distinct, key_min, key_max, span)
}

fn fit_leaves(
    root: &RootModel,
    pairs: &[TrainingPair],
    m: usize,
    key_min: u64,
    key_max: u64,
) -> Result<Vec<LeafModel>> {
    let xs: Vec<f64> = pairs
        .iter()
        .map(|p| normalize_key(p.key, key_min, key_max))
        .collect();
    let ids: Vec<u32> = xs
        .iter()
        .map(|&x| route_normalized(root, x, m) as u32)
        .collect();

    // Counting sort of pair indices by leaf; roots need not be monotone.
    let mut starts = vec![0usize; m + 1];
    for &id in &ids {
        starts[id as usize + 1] += 1;
    }
    for j in 0..m {
        starts[j + 1] += starts[j];
    }
    let mut fill = starts.clone();
    let mut order = vec![0u32; pairs.len()];
    for (i, &id) in ids.iter().enumerate() {
        order[fill[id as usize]] = i as u32;
        fill[id as usize] += 1;
    }

    let mut out = Vec::with_capacity(m);
    let mut ranges: Vec<Option<(f64, f64)>> = Vec::with_capacity(m);
    for j in 0..m {
        let members = &order[starts[j]..starts[j + 1]];
        if members.is_empty() {
            out.push(LeafModel {
                model: LinearModel::constant(0.0),
                err_lo: 0,
                err_hi: 0,
                key_count: 0,
            });
            ranges.push(None);
            continue;
        }
        let it = members
            .iter()
            .map(|&i| (xs[i as usize], pairs[i as usize].position));
        let model = fit_linear_iter(it.clone(), members.len())?;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut pmin, mut pmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in it {
            let err = y - round_position(model.predict(x)) as f64;
            lo = lo.min(err);
            hi = hi.max(err);
            pmin = pmin.min(y);
            pmax = pmax.max(y);
        }
        out.push(LeafModel {
            model,
            err_lo: lo.floor() as i64,
            err_hi: hi.ceil() as i64,
            key_count: members.len() as u64,
        });
        ranges.push(Some((pmin, pmax)));
    }

    // Empty leaves predict the midpoint of the gap between their neighbors.
    for j in 0..m {
        if ranges[j].is_some() {
            continue;
        }
        let below = ranges[..j].iter().rev().find_map(|r| r.map(|(_, hi)| hi));
        let above = ranges[j + 1..].iter().find_map(|r| r.map(|(lo, _)| lo));
        let mid = match (below, above) {
            (Some(b), Some(a)) => (a + b) / 2.0,
            (Some(b), None) => b,
            (None, Some(a)) => a,
            (None, None) => 0.0,
        };
        out[j].model = LinearModel::constant(mid);
    }
    Ok(out)
}

/// Returns `index` with every leaf window recomputed against `data`.
pub fn compute_error_bounds(mut index: StagedIndex, data: &SortedDataset) -> StagedIndex {
    index.recompute_bounds(data);
    index
}
