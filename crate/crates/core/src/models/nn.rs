//! A scalar-in, scalar-out multilayer perceptron.
//!
//! Hidden layers use the rectifier, the output layer is linear. Training is
//! plain mini-batch gradient descent on mean squared error; shuffling and
//! initialization draw from a seeded ChaCha stream so identical inputs give
//! bitwise-identical parameters.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelArch, TrainConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    inputs: usize,
    outputs: usize,
    /// Row-major `(outputs, inputs)`.
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Dense {
    fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralNet {
    layers: Vec<Dense>,
}

/// A trained network together with its final training loss.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub net: NeuralNet,
    pub loss: f64,
}

impl NeuralNet {
    /// Randomly initialized network for `arch`.
    pub fn init(arch: ModelArch, seed: u64) -> Result<Self> {
        let widths = arch
            .layer_widths()
            .ok_or_else(|| Error::ArchMismatch(format!("{arch} is not a neural network")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self::init_with(&widths, &mut rng))
    }

    fn init_with(widths: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let layers = widths
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let bound = 1.0 / (inputs as f64).sqrt();
                let weights = (0..inputs * outputs)
                    .map(|_| rng.random_range(-bound..=bound))
                    .collect();
                let biases = (0..outputs)
                    .map(|_| rng.random_range(-bound..=bound))
                    .collect();
                Dense {
                    inputs,
                    outputs,
                    weights,
                    biases,
                }
            })
            .collect();
        Self { layers }
    }

    /// Builds a network from explicit parameters, laid out layer by layer as
    /// row-major weights followed by biases (the order of [`Self::params`]).
    pub fn from_params(layer_widths: &[usize], params: &[f64]) -> Result<Self> {
        validate_widths(layer_widths)?;
        let expected: usize = layer_widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if params.len() != expected {
            return Err(Error::ArchMismatch(format!(
                "expected {expected} parameters for widths {layer_widths:?}, got {}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::ArchMismatch("non-finite parameter".into()));
        }
        let mut offset = 0;
        let layers = layer_widths
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let weights = params[offset..offset + inputs * outputs].to_vec();
                offset += inputs * outputs;
                let biases = params[offset..offset + outputs].to_vec();
                offset += outputs;
                Dense {
                    inputs,
                    outputs,
                    weights,
                    biases,
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn layer_widths(&self) -> Vec<usize> {
        let mut widths = vec![self.layers[0].inputs];
        widths.extend(self.layers.iter().map(|l| l.outputs));
        widths
    }

    /// The architecture this network instantiates.
    pub fn arch(&self) -> ModelArch {
        let hidden = self.layers.len() - 1;
        ModelArch::Neural {
            hidden_layers: hidden as u8,
            width: self.layers[0].outputs as u32,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// Flattened parameters; see [`Self::from_params`] for the layout.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.biases);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|p| p.is_finite()))
    }

    /// Multiply-accumulates per forward pass.
    pub fn macs(&self) -> usize {
        self.layers.iter().map(|l| l.inputs * l.outputs).sum()
    }

    /// Feed-forward evaluation.
    pub fn forward(&self, x: f64) -> f64 {
        // Widths are tiny (<= 16), so two stack buffers cover every layer.
        let mut cur = [0.0f64; MAX_WIDTH];
        let mut next = [0.0f64; MAX_WIDTH];
        cur[0] = x;
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            for o in 0..layer.outputs {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                let mut z = layer.biases[o];
                for (w, a) in row.iter().zip(&cur[..layer.inputs]) {
                    z += w * a;
                }
                next[o] = if li < last { z.max(0.0) } else { z };
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur[0]
    }

    /// Mean squared error over `pairs`.
    pub fn mse(&self, pairs: &[(f64, f64)]) -> f64 {
        if pairs.is_empty() {
            return 0.0;
        }
        pairs
            .iter()
            .map(|&(x, y)| {
                let r = self.forward(x) - y;
                r * r
            })
            .sum::<f64>()
            / pairs.len() as f64
    }

    /// Mean squared error and its analytic gradient with respect to
    /// [`Self::params`].
    pub fn loss_and_gradient(&self, pairs: &[(f64, f64)]) -> (f64, Vec<f64>) {
        let mut grads = Gradients::zeros_like(self);
        let mut scratch = Scratch::new(self);
        let scale = 2.0 / pairs.len().max(1) as f64;
        let mut loss = 0.0;
        for &(x, y) in pairs {
            let out = scratch.forward(self, x);
            let r = out - y;
            loss += r * r;
            scratch.backward(self, r * scale, &mut grads);
        }
        (loss / pairs.len().max(1) as f64, grads.flatten())
    }

    fn apply(&mut self, grads: &Gradients, lr: f64) {
        for (layer, (gw, gb)) in self.layers.iter_mut().zip(&grads.layers) {
            for (w, g) in layer.weights.iter_mut().zip(gw) {
                *w -= lr * g;
            }
            for (b, g) in layer.biases.iter_mut().zip(gb) {
                *b -= lr * g;
            }
        }
    }
}

pub(crate) const MAX_WIDTH: usize = 64;

pub(crate) fn validate_widths(widths: &[usize]) -> Result<()> {
    let ok = widths.len() >= 3
        && widths.len() <= 4
        && widths[0] == 1
        && widths[widths.len() - 1] == 1
        && widths.iter().all(|&w| w > 0 && w <= MAX_WIDTH);
    if ok {
        Ok(())
    } else {
        Err(Error::ArchMismatch(format!(
            "layer widths {widths:?} must be 1 -> 1..2 hidden layers (each <= {MAX_WIDTH}) -> 1"
        )))
    }
}

struct Gradients {
    layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradients {
    fn zeros_like(net: &NeuralNet) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.biases.len()]))
                .collect(),
        }
    }

    fn clear(&mut self) {
        for (w, b) in &mut self.layers {
            w.fill(0.0);
            b.fill(0.0);
        }
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }
}

/// Per-layer activations of the most recent forward pass.
struct Scratch {
    /// `acts[0]` is the input, `acts[i + 1]` the output of layer `i`.
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Scratch {
    fn new(net: &NeuralNet) -> Self {
        let widths = net.layer_widths();
        let max = widths.iter().copied().max().unwrap_or(1);
        Self {
            acts: widths.iter().map(|&w| vec![0.0; w]).collect(),
            delta: vec![0.0; max],
            delta_prev: vec![0.0; max],
        }
    }

    fn forward(&mut self, net: &NeuralNet, x: f64) -> f64 {
        self.acts[0][0] = x;
        let last = net.layers.len() - 1;
        for (li, layer) in net.layers.iter().enumerate() {
            let (before, after) = self.acts.split_at_mut(li + 1);
            let input = &before[li];
            let output = &mut after[0];
            for o in 0..layer.outputs {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                let mut z = layer.biases[o];
                for (w, a) in row.iter().zip(input) {
                    z += w * a;
                }
                output[o] = if li < last { z.max(0.0) } else { z };
            }
        }
        self.acts[net.layers.len()][0]
    }

    /// Accumulates gradients for the last forward pass given `d loss / d out`.
    fn backward(&mut self, net: &NeuralNet, d_out: f64, grads: &mut Gradients) {
        self.delta[0] = d_out;
        for li in (0..net.layers.len()).rev() {
            let layer = &net.layers[li];
            let input = &self.acts[li];
            let (gw, gb) = &mut grads.layers[li];
            for o in 0..layer.outputs {
                let d = self.delta[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                for (g, a) in row.iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            if li == 0 {
                break;
            }
            // Propagate through the rectifier of the previous layer.
            for i in 0..layer.inputs {
                let mut s = 0.0;
                if input[i] > 0.0 {
                    for o in 0..layer.outputs {
                        s += layer.weights[o * layer.inputs + i] * self.delta[o];
                    }
                }
                self.delta_prev[i] = s;
            }
            std::mem::swap(&mut self.delta, &mut self.delta_prev);
        }
    }
}

/// Runs one shuffled pass of mini-batch gradient descent. Returns the mean
/// pre-update batch loss, which is what divergence detection watches.
fn train_epoch(
    net: &mut NeuralNet,
    pairs: &[(f64, f64)],
    order: &mut [u32],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    scratch: &mut Scratch,
    grads: &mut Gradients,
) -> f64 {
    order.shuffle(rng);
    let mut running = 0.0;
    for batch in order.chunks(cfg.batch_size.max(1)) {
        grads.clear();
        let scale = 2.0 / batch.len() as f64;
        for &idx in batch {
            let (x, y) = pairs[idx as usize];
            let r = scratch.forward(net, x) - y;
            running += r * r;
            scratch.backward(net, r * scale, grads);
        }
        net.apply(grads, cfg.learning_rate);
    }
    running / pairs.len() as f64
}

fn check_inputs(pairs: &[(f64, f64)], cfg: &TrainConfig) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    cfg.validate()
}

/// Trains a fresh network of architecture `arch` on `(x, y)` pairs,
/// keeping the best of `cfg.restarts` seeded initializations.
///
/// Inputs are expected in `[0, 1]`. A restart fails with
/// [`Error::TrainingDiverged`] as soon as an epoch produces a non-finite
/// loss or parameter; the call fails only if every restart does.
pub fn fit_nn(pairs: &[(f64, f64)], arch: ModelArch, cfg: &TrainConfig) -> Result<FitOutcome> {
    check_inputs(pairs, cfg)?;
    let widths = arch
        .layer_widths()
        .ok_or_else(|| Error::ArchMismatch(format!("{arch} is not a neural network")))?;
    let mut best: Option<FitOutcome> = None;
    let mut last_err = None;
    for r in 0..cfg.restarts {
        match fit_once(pairs, &widths, cfg, cfg.seed.wrapping_add(r as u64)) {
            Ok(fit) => {
                if best.as_ref().is_none_or(|b| fit.loss < b.loss) {
                    best = Some(fit);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match (best, last_err) {
        (Some(fit), _) => Ok(fit),
        (None, Some(e)) => Err(e),
        (None, None) => unreachable!("restarts validated positive"),
    }
}

fn fit_once(
    pairs: &[(f64, f64)],
    widths: &[usize],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<FitOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = NeuralNet::init_with(widths, &mut rng);
    let mut order: Vec<u32> = (0..pairs.len() as u32).collect();
    let mut scratch = Scratch::new(&net);
    let mut grads = Gradients::zeros_like(&net);
    for epoch in 1..=cfg.epochs {
        let loss = train_epoch(
            &mut net,
            pairs,
            &mut order,
            cfg,
            &mut rng,
            &mut scratch,
            &mut grads,
        );
        if !loss.is_finite() || !net.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
    }
    let loss = net.mse(pairs);
    if !loss.is_finite() {
        return Err(Error::TrainingDiverged { epoch: cfg.epochs });
    }
    Ok(FitOutcome { net, loss })
}

/// Continues training `start` for `cfg.fine_tune_epochs` epochs and returns
/// the lowest-loss snapshot seen, the starting point included.
pub fn fine_tune_nn(
    start: &NeuralNet,
    pairs: &[(f64, f64)],
    cfg: &TrainConfig,
) -> Result<FitOutcome> {
    check_inputs(pairs, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = start.clone();
    let mut best = FitOutcome {
        net: start.clone(),
        loss: start.mse(pairs),
    };
    let mut order: Vec<u32> = (0..pairs.len() as u32).collect();
    let mut scratch = Scratch::new(&net);
    let mut grads = Gradients::zeros_like(&net);
    for epoch in 1..=cfg.fine_tune_epochs {
        let running = train_epoch(
            &mut net,
            pairs,
            &mut order,
            cfg,
            &mut rng,
            &mut scratch,
            &mut grads,
        );
        if !running.is_finite() || !net.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        let loss = net.mse(pairs);
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        if loss < best.loss {
            best = FitOutcome {
                net: net.clone(),
                loss,
            };
        }
    }
    Ok(best)
}

/// Evaluates `net` at `x`.
#[inline]
pub fn nn_forward(net: &NeuralNet, x: f64) -> f64 {
    net.forward(x)
}
