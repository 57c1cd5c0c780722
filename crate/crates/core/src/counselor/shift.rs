//! Shift detection by watching the lookup cost degrade.

use crate::index::{CostModel, SortedDataset, StagedIndex};

pub const DEFAULT_SHIFT_RATIO: f64 = 1.5;

/// True iff `recent_cost > ratio * baseline_cost`.
pub fn detect_shift(recent_cost: f64, baseline_cost: f64, ratio: f64) -> bool {
    recent_cost > ratio * baseline_cost
}

/// Per-query cost in search steps: root compute constant plus `log2` of the
/// slots the search covered, widening stale windows as needed.
pub fn query_cost(index: &StagedIndex, data: &SortedDataset, key: u64, costs: &CostModel) -> f64 {
    let probe = index.probe(data, key);
    costs.compute_constant(index.arch()) + (probe.window.max(1) as f64).log2()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowReport {
    pub mean_cost: f64,
    pub baseline: f64,
    pub shifted: bool,
}

/// Averages per-query costs over tumbling windows. The first full window
/// becomes the baseline unless one is set explicitly.
#[derive(Debug, Clone)]
pub struct ShiftMonitor {
    window: usize,
    ratio: f64,
    baseline: Option<f64>,
    sum: f64,
    count: usize,
}

impl ShiftMonitor {
    pub fn new(window: usize, ratio: f64) -> Self {
        Self {
            window: window.max(1),
            ratio,
            baseline: None,
            sum: 0.0,
            count: 0,
        }
    }

    pub fn with_baseline(mut self, baseline: f64) -> Self {
        self.baseline = Some(baseline);
        self
    }

    pub fn baseline(&self) -> Option<f64> {
        self.baseline
    }

    /// Records one query; returns a report whenever a window closes.
    pub fn record(&mut self, cost: f64) -> Option<WindowReport> {
        self.sum += cost;
        self.count += 1;
        if self.count < self.window {
            return None;
        }
        let mean = self.sum / self.count as f64;
        self.sum = 0.0;
        self.count = 0;
        let baseline = *self.baseline.get_or_insert(mean);
        Some(WindowReport {
            mean_cost: mean,
            baseline,
            shifted: detect_shift(mean, baseline, self.ratio),
        })
    }
}
