use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `y = slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub slope: f64,
    pub intercept: f64,
}

impl LinearModel {
    pub const fn new(slope: f64, intercept: f64) -> Self {
        Self { slope, intercept }
    }

    pub const fn constant(value: f64) -> Self {
        Self::new(0.0, value)
    }

    #[inline]
    pub fn predict(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }

    pub fn is_finite(&self) -> bool {
        self.slope.is_finite() && self.intercept.is_finite()
    }
}

/// Evaluates a linear model at `x`.
#[inline]
pub fn linear_predict(model: &LinearModel, x: f64) -> f64 {
    model.predict(x)
}

/// Ordinary least squares over `(x, y)` pairs.
///
/// Uses centered sums so leaves covering a narrow slice of the key domain do
/// not lose their variance to cancellation. When every `x` is equal the fit
/// degenerates to the constant `mean(y)`.
pub fn fit_linear(pairs: &[(f64, f64)]) -> Result<LinearModel> {
    fit_linear_iter(pairs.iter().copied(), pairs.len())
}

/// [`fit_linear`] over an iterator that can be traversed twice.
pub(crate) fn fit_linear_iter<I>(pairs: I, len: usize) -> Result<LinearModel>
where
    I: Iterator<Item = (f64, f64)> + Clone,
{
    if len == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    let n = len as f64;
    let (sum_x, sum_y) = pairs
        .clone()
        .fold((0.0, 0.0), |(sx, sy), (x, y)| (sx + x, sy + y));
    let (mean_x, mean_y) = (sum_x / n, sum_y / n);

    let (sxx, sxy) = pairs.fold((0.0, 0.0), |(sxx, sxy), (x, y)| {
        let dx = x - mean_x;
        (sxx + dx * dx, sxy + dx * (y - mean_y))
    });

    if sxx <= 0.0 || !sxx.is_finite() {
        return Ok(LinearModel::constant(mean_y));
    }
    let slope = sxy / sxx;
    Ok(LinearModel::new(slope, mean_y - slope * mean_x))
}

/// Mean squared error of `model` over `pairs`.
pub fn linear_mse(model: &LinearModel, pairs: &[(f64, f64)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    pairs
        .iter()
        .map(|&(x, y)| {
            let r = model.predict(x) - y;
            r * r
        })
        .sum::<f64>()
        / pairs.len() as f64
}
