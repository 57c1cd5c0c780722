//! Regression primitives used by both stages of the index.

mod linear;
mod nn;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) use linear::fit_linear_iter;
pub use linear::{fit_linear, linear_mse, linear_predict, LinearModel};
pub use nn::{fine_tune_nn, fit_nn, nn_forward, FitOutcome, NeuralNet};

/// Shape of a root model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ModelArch {
    Linear,
    Neural { hidden_layers: u8, width: u32 },
}

impl ModelArch {
    pub const LIN: Self = Self::Linear;
    pub const NN4: Self = Self::nn(1, 4);
    pub const NN8: Self = Self::nn(1, 8);
    pub const NN16: Self = Self::nn(1, 16);
    pub const NN2_4: Self = Self::nn(2, 4);
    pub const NN2_8: Self = Self::nn(2, 8);

    pub const fn nn(hidden_layers: u8, width: u32) -> Self {
        Self::Neural {
            hidden_layers,
            width,
        }
    }

    /// `LIN, NN4, NN8, NN16, NN2-4, NN2-8`.
    pub fn default_space() -> Vec<Self> {
        vec![
            Self::LIN,
            Self::NN4,
            Self::NN8,
            Self::NN16,
            Self::NN2_4,
            Self::NN2_8,
        ]
    }

    /// Layer widths including the scalar input and output, or `None` for
    /// the linear model.
    pub fn layer_widths(&self) -> Option<Vec<usize>> {
        match *self {
            Self::Linear => None,
            Self::Neural {
                hidden_layers,
                width,
            } => {
                let mut w = vec![1];
                w.extend(std::iter::repeat_n(width as usize, hidden_layers as usize));
                w.push(1);
                Some(w)
            }
        }
    }

    /// Multiply-accumulates per forward evaluation.
    pub fn macs(&self) -> usize {
        match self.layer_widths() {
            None => 1,
            Some(w) => w.windows(2).map(|p| p[0] * p[1]).sum(),
        }
    }

    /// Ordering key for tie-breaking: simpler architectures first.
    pub fn complexity(&self) -> (usize, u8, u32) {
        match *self {
            Self::Linear => (0, 0, 0),
            Self::Neural {
                hidden_layers,
                width,
            } => (self.macs(), hidden_layers, width),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.layer_widths() {
            None => Ok(()),
            Some(w) => nn::validate_widths(&w),
        }
    }
}

impl fmt::Display for ModelArch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Linear => f.write_str("LIN"),
            Self::Neural {
                hidden_layers: 1,
                width,
            } => write!(f, "NN{width}"),
            Self::Neural {
                hidden_layers,
                width,
            } => write!(f, "NN{hidden_layers}-{width}"),
        }
    }
}

impl FromStr for ModelArch {
    type Err = Error;

    /// Accepts `LIN`, `NN<width>` and `NN<layers>-<width>`, case-insensitively.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("unknown architecture {s:?}"));
        let lower = s.trim().to_ascii_lowercase();
        if lower == "lin" || lower == "linear" {
            return Ok(Self::Linear);
        }
        let rest = lower.strip_prefix("nn").ok_or_else(bad)?;
        let arch = match rest.split_once('-') {
            Some((layers, width)) => Self::nn(
                layers.parse().map_err(|_| bad())?,
                width.parse().map_err(|_| bad())?,
            ),
            None => Self::nn(1, rest.parse().map_err(|_| bad())?),
        };
        arch.validate().map_err(|_| bad())?;
        Ok(arch)
    }
}

impl TryFrom<String> for ModelArch {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ModelArch> for String {
    fn from(a: ModelArch) -> String {
        a.to_string()
    }
}

/// Gradient-descent hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub fine_tune_epochs: usize,
    /// Independent initializations tried by a fresh fit; the lowest final
    /// loss wins. Restart `r` is seeded with `seed + r`.
    pub restarts: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            learning_rate: 0.1,
            batch_size: 256,
            seed: 42,
            fine_tune_epochs: 50,
            restarts: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0
            || self.batch_size == 0
            || self.fine_tune_epochs == 0
            || self.restarts == 0
        {
            return Err(Error::InvalidConfig(
                "epochs, batch_size, fine_tune_epochs and restarts must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        if self.fine_tune_epochs > self.epochs {
            return Err(Error::InvalidConfig(
                "fine_tune_epochs must not exceed epochs".into(),
            ));
        }
        Ok(())
    }
}

/// First-stage model: either a line or a small network. Operates on
/// normalized coordinates (keys and positions both scaled to `[0, 1]`).
#[derive(Debug, Clone, PartialEq)]
pub enum RootModel {
    Linear(LinearModel),
    Neural(NeuralNet),
}

impl RootModel {
    /// Trains a root of shape `arch`; returns the model and its final loss.
    pub fn fit(arch: ModelArch, pairs: &[(f64, f64)], cfg: &TrainConfig) -> Result<(Self, f64)> {
        match arch {
            ModelArch::Linear => {
                let m = fit_linear(pairs)?;
                Ok((Self::Linear(m), linear_mse(&m, pairs)))
            }
            ModelArch::Neural { .. } => {
                let out = fit_nn(pairs, arch, cfg)?;
                Ok((Self::Neural(out.net), out.loss))
            }
        }
    }

    #[inline]
    pub fn predict(&self, x: f64) -> f64 {
        match self {
            Self::Linear(m) => m.predict(x),
            Self::Neural(n) => n.forward(x),
        }
    }

    pub fn arch(&self) -> ModelArch {
        match self {
            Self::Linear(_) => ModelArch::Linear,
            Self::Neural(n) => n.arch(),
        }
    }

    pub fn mse(&self, pairs: &[(f64, f64)]) -> f64 {
        match self {
            Self::Linear(m) => linear_mse(m, pairs),
            Self::Neural(n) => n.mse(pairs),
        }
    }
}

/// Incrementally adapts a model to new data.
///
/// Networks continue gradient descent from their current parameters and
/// return the best snapshot; lines are refit in closed form, which is exact.
/// Either way the returned loss on `pairs` is no worse than the starting
/// model's.
pub fn fine_tune(
    model: &RootModel,
    pairs: &[(f64, f64)],
    cfg: &TrainConfig,
) -> Result<(RootModel, f64)> {
    match model {
        RootModel::Linear(_) => {
            let m = fit_linear(pairs)?;
            Ok((RootModel::Linear(m), linear_mse(&m, pairs)))
        }
        RootModel::Neural(net) => {
            let out = fine_tune_nn(net, pairs, cfg)?;
            Ok((RootModel::Neural(out.net), out.loss))
        }
    }
}
