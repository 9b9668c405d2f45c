//! Feed-forward network over syntactic features.
//!
//! Layout: the n-gram branch is compressed to 500 units and the remaining
//! features are expanded to 25 units; both are concatenated (525) and passed
//! through 256 and 128 hidden units to a single linear output. Every layer
//! but the output is followed by ReLU and dropout.
//!
//! Dense weights are stored input-major (`w[i * out_dim + o]`) so that both
//! the forward pass over a sparse input and the backward pass are contiguous
//! row operations.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::features::ModelInput;

pub const NGRAM_UNITS: usize = 500;
pub const OTHER_UNITS: usize = 25;
pub const HIDDEN1_UNITS: usize = 256;
pub const HIDDEN2_UNITS: usize = 128;
pub const DROPOUT_RATE: f64 = 0.10;

/// Early stopping only counts a dev MSE improvement of at least this much.
pub const MIN_IMPROVEMENT: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Input-major weights, `in_dim * out_dim` entries.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Dense { in_dim, out_dim, weights: vec![0.0; in_dim * out_dim], bias: vec![0.0; out_dim] }
    }

    /// Uniform in ±sqrt(6 / (fan_in + fan_out)), zero bias.
    fn glorot<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = (0..in_dim * out_dim).map(|_| rng.gen_range(-limit..=limit)).collect();
        Dense { in_dim, out_dim, weights, bias: vec![0.0; out_dim] }
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.out_dim..(i + 1) * self.out_dim]
    }

    /// `z = b + sum_i x_i * W[i, :]` over the non-zero inputs.
    fn forward_sparse(&self, x: &[(usize, f64)], z: &mut [f64]) {
        z.copy_from_slice(&self.bias);
        for &(i, xi) in x {
            axpy(xi, self.row(i), z);
        }
    }

    fn forward_dense(&self, x: &[f64], z: &mut [f64]) {
        z.copy_from_slice(&self.bias);
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                axpy(xi, self.row(i), z);
            }
        }
    }
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub ngram_compress: Dense,
    pub other_expand: Dense,
    pub hidden1: Dense,
    pub hidden2: Dense,
    pub output: Dense,
    pub dropout_rate: f64,
    /// Fingerprint of the n-gram vocabulary the model was trained with.
    pub vocab_fingerprint: String,
}

/// Mini-batch training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub seed: u64,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { batch_size: 20, epochs: 40, learning_rate: 0.01, patience: 15, seed: 0, weight_decay: 0.0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = self.batch_size > 0
            && self.epochs > 0
            && self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.weight_decay >= 0.0
            && self.weight_decay.is_finite();
        if ok {
            Ok(())
        } else {
            Err(ModelError::Config(format!("invalid training configuration {self:?}")))
        }
    }
}

/// Dropout during training, none at inference.
pub enum Mode<'a, R: Rng> {
    Train(&'a mut R),
    Infer,
}

/// Intermediate values of one forward pass needed for backpropagation.
struct Trace {
    ngram_gate: Vec<f64>,
    other_gate: Vec<f64>,
    /// Concatenation of the two branch outputs.
    joined: Vec<f64>,
    h1_out: Vec<f64>,
    h1_gate: Vec<f64>,
    h2_out: Vec<f64>,
    h2_gate: Vec<f64>,
    output: f64,
}

/// Applies ReLU and (in training) inverted dropout in place. `gate` receives
/// the derivative of the output with respect to the pre-activation.
fn activate<R: Rng>(z: &mut [f64], gate: &mut [f64], rate: f64, rng: &mut Option<&mut R>) {
    let keep = 1.0 - rate;
    for (zi, gi) in z.iter_mut().zip(gate.iter_mut()) {
        let mut g = if *zi > 0.0 { 1.0 } else { 0.0 };
        if let Some(rng) = rng.as_deref_mut() {
            if rng.gen::<f64>() < rate {
                g = 0.0;
            } else {
                g /= keep;
            }
        }
        *zi *= g;
        *gi = g;
    }
}

impl MlpModel {
    /// Weights drawn uniformly in ±sqrt(6 / (fan_in + fan_out)), zero biases.
    pub fn init(ngram_dim: usize, other_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MlpModel {
            ngram_compress: Dense::glorot(ngram_dim, NGRAM_UNITS, &mut rng),
            other_expand: Dense::glorot(other_dim, OTHER_UNITS, &mut rng),
            hidden1: Dense::glorot(NGRAM_UNITS + OTHER_UNITS, HIDDEN1_UNITS, &mut rng),
            hidden2: Dense::glorot(HIDDEN1_UNITS, HIDDEN2_UNITS, &mut rng),
            output: Dense::glorot(HIDDEN2_UNITS, 1, &mut rng),
            dropout_rate: DROPOUT_RATE,
            vocab_fingerprint: String::new(),
        }
    }

    /// Model with every weight and bias zero.
    pub fn zeros(ngram_dim: usize, other_dim: usize) -> Self {
        MlpModel {
            ngram_compress: Dense::zeros(ngram_dim, NGRAM_UNITS),
            other_expand: Dense::zeros(other_dim, OTHER_UNITS),
            hidden1: Dense::zeros(NGRAM_UNITS + OTHER_UNITS, HIDDEN1_UNITS),
            hidden2: Dense::zeros(HIDDEN1_UNITS, HIDDEN2_UNITS),
            output: Dense::zeros(HIDDEN2_UNITS, 1),
            dropout_rate: DROPOUT_RATE,
            vocab_fingerprint: String::new(),
        }
    }

    pub fn ngram_dim(&self) -> usize {
        self.ngram_compress.in_dim
    }

    pub fn other_dim(&self) -> usize {
        self.other_expand.in_dim
    }

    pub fn layers(&self) -> [&Dense; 5] {
        [&self.ngram_compress, &self.other_expand, &self.hidden1, &self.hidden2, &self.output]
    }

    fn layers_mut(&mut self) -> [&mut Dense; 5] {
        [
            &mut self.ngram_compress,
            &mut self.other_expand,
            &mut self.hidden1,
            &mut self.hidden2,
            &mut self.output,
        ]
    }

    pub const LAYER_NAMES: [&'static str; 5] = ["ngram_compress", "other_expand", "hidden1", "hidden2", "output"];

    pub fn n_params(&self) -> usize {
        self.layers().iter().map(|l| l.n_params()).sum()
    }

    /// Checks that the five layer shapes chain together.
    pub fn check_shapes(&self) -> Result<(), ModelError> {
        let expect = [
            (self.ngram_compress.out_dim, NGRAM_UNITS),
            (self.other_expand.out_dim, OTHER_UNITS),
            (self.hidden1.in_dim, NGRAM_UNITS + OTHER_UNITS),
            (self.hidden1.out_dim, HIDDEN1_UNITS),
            (self.hidden2.in_dim, HIDDEN1_UNITS),
            (self.hidden2.out_dim, HIDDEN2_UNITS),
            (self.output.in_dim, HIDDEN2_UNITS),
            (self.output.out_dim, 1),
        ];
        for (got, want) in expect {
            if got != want {
                return Err(ModelError::Shape(format!("layer width {got}, expected {want}")));
            }
        }
        for (name, l) in Self::LAYER_NAMES.iter().zip(self.layers()) {
            if l.weights.len() != l.in_dim * l.out_dim || l.bias.len() != l.out_dim {
                return Err(ModelError::Shape(format!("layer {name} has inconsistent buffers")));
            }
        }
        Ok(())
    }

    fn check_input(&self, input: &ModelInput) -> Result<(), ModelError> {
        if input.ngram_dim != self.ngram_dim() || input.other.len() != self.other_dim() {
            return Err(ModelError::DimensionMismatch {
                expected: (self.ngram_dim(), self.other_dim()),
                got: (input.ngram_dim, input.other.len()),
            });
        }
        if input.ngrams.iter().any(|&(i, _)| i >= input.ngram_dim) {
            return Err(ModelError::Shape("sparse n-gram position out of range".into()));
        }
        Ok(())
    }

    fn trace<R: Rng>(&self, input: &ModelInput, mut rng: Option<&mut R>) -> Trace {
        let rate = self.dropout_rate;
        let mut ngram_out = vec![0.0; NGRAM_UNITS];
        let mut ngram_gate = vec![0.0; NGRAM_UNITS];
        self.ngram_compress.forward_sparse(&input.ngrams, &mut ngram_out);
        activate(&mut ngram_out, &mut ngram_gate, rate, &mut rng);

        let mut other_out = vec![0.0; OTHER_UNITS];
        let mut other_gate = vec![0.0; OTHER_UNITS];
        self.other_expand.forward_dense(&input.other, &mut other_out);
        activate(&mut other_out, &mut other_gate, rate, &mut rng);

        let mut joined = Vec::with_capacity(NGRAM_UNITS + OTHER_UNITS);
        joined.extend_from_slice(&ngram_out);
        joined.extend_from_slice(&other_out);

        let mut h1_out = vec![0.0; HIDDEN1_UNITS];
        let mut h1_gate = vec![0.0; HIDDEN1_UNITS];
        self.hidden1.forward_dense(&joined, &mut h1_out);
        activate(&mut h1_out, &mut h1_gate, rate, &mut rng);

        let mut h2_out = vec![0.0; HIDDEN2_UNITS];
        let mut h2_gate = vec![0.0; HIDDEN2_UNITS];
        self.hidden2.forward_dense(&h1_out, &mut h2_out);
        activate(&mut h2_out, &mut h2_gate, rate, &mut rng);

        let mut out = [0.0];
        self.output.forward_dense(&h2_out, &mut out);
        Trace { ngram_gate, other_gate, joined, h1_out, h1_gate, h2_out, h2_gate, output: out[0] }
    }

    /// ReLU on/off state of every hidden unit at inference.
    fn gate_pattern(&self, input: &ModelInput) -> Vec<bool> {
        let t = self.trace::<ChaCha8Rng>(input, None);
        [t.ngram_gate, t.other_gate, t.h1_gate, t.h2_gate].concat().into_iter().map(|g| g != 0.0).collect()
    }

    /// Unbounded regression output for one input.
    pub fn forward<R: Rng>(&self, input: &ModelInput, mode: Mode<'_, R>) -> Result<f64, ModelError> {
        self.check_input(input)?;
        let rng = match mode {
            Mode::Train(rng) => Some(rng),
            Mode::Infer => None,
        };
        Ok(self.trace(input, rng).output)
    }

    /// Inference-mode output.
    pub fn predict(&self, input: &ModelInput) -> Result<f64, ModelError> {
        self.forward::<ChaCha8Rng>(input, Mode::Infer)
    }

    /// Accumulates `dout * d(output)/d(params)` into `grads`.
    fn backward(&self, input: &ModelInput, trace: &Trace, dout: f64, grads: &mut Gradients) {
        let [g_ng, g_ot, g_h1, g_h2, g_out] = &mut grads.layers;

        // output layer
        let dz_out = [dout];
        for (i, &x) in trace.h2_out.iter().enumerate() {
            if x != 0.0 {
                g_out.weights[i] += x * dout;
            }
        }
        g_out.bias[0] += dout;

        // hidden2
        let mut dz2 = vec![0.0; HIDDEN2_UNITS];
        for (i, dz) in dz2.iter_mut().enumerate() {
            let g = trace.h2_gate[i];
            if g != 0.0 {
                *dz = dot(self.output.row(i), &dz_out) * g;
            }
        }
        for (i, &x) in trace.h1_out.iter().enumerate() {
            if x != 0.0 {
                axpy(x, &dz2, &mut g_h2.weights[i * HIDDEN2_UNITS..(i + 1) * HIDDEN2_UNITS]);
            }
        }
        axpy(1.0, &dz2, &mut g_h2.bias);

        // hidden1
        let mut dz1 = vec![0.0; HIDDEN1_UNITS];
        for (i, dz) in dz1.iter_mut().enumerate() {
            let g = trace.h1_gate[i];
            if g != 0.0 {
                *dz = dot(self.hidden2.row(i), &dz2) * g;
            }
        }
        for (i, &x) in trace.joined.iter().enumerate() {
            if x != 0.0 {
                axpy(x, &dz1, &mut g_h1.weights[i * HIDDEN1_UNITS..(i + 1) * HIDDEN1_UNITS]);
            }
        }
        axpy(1.0, &dz1, &mut g_h1.bias);

        // the two input branches
        let mut dz_ng = vec![0.0; NGRAM_UNITS];
        for (i, dz) in dz_ng.iter_mut().enumerate() {
            let g = trace.ngram_gate[i];
            if g != 0.0 {
                *dz = dot(self.hidden1.row(i), &dz1) * g;
            }
        }
        let mut dz_ot = vec![0.0; OTHER_UNITS];
        for (i, dz) in dz_ot.iter_mut().enumerate() {
            let g = trace.other_gate[i];
            if g != 0.0 {
                *dz = dot(self.hidden1.row(NGRAM_UNITS + i), &dz1) * g;
            }
        }
        for &(i, x) in &input.ngrams {
            axpy(x, &dz_ng, &mut g_ng.weights[i * NGRAM_UNITS..(i + 1) * NGRAM_UNITS]);
        }
        axpy(1.0, &dz_ng, &mut g_ng.bias);
        for (i, &x) in input.other.iter().enumerate() {
            if x != 0.0 {
                axpy(x, &dz_ot, &mut g_ot.weights[i * OTHER_UNITS..(i + 1) * OTHER_UNITS]);
            }
        }
        axpy(1.0, &dz_ot, &mut g_ot.bias);
    }

    /// Squared error `(f(x) - target)^2` and its gradient, without dropout.
    pub fn loss_and_gradient(&self, input: &ModelInput, target: f64) -> Result<(f64, Gradients), ModelError> {
        self.check_input(input)?;
        let trace = self.trace::<ChaCha8Rng>(input, None);
        let err = trace.output - target;
        let mut grads = Gradients::zeros_like(self);
        self.backward(input, &trace, 2.0 * err, &mut grads);
        Ok((err * err, grads))
    }

    /// Flat view of parameter `k` across all layers, in layer order with each
    /// layer's weights before its biases.
    pub fn param(&self, k: usize) -> f64 {
        let (layer, slot) = locate(self.layers(), k);
        let l = self.layers()[layer];
        if slot < l.weights.len() {
            l.weights[slot]
        } else {
            l.bias[slot - l.weights.len()]
        }
    }

    pub fn set_param(&mut self, k: usize, value: f64) {
        let (layer, slot) = locate(self.layers(), k);
        let l = &mut self.layers_mut()[layer];
        if slot < l.weights.len() {
            l.weights[slot] = value;
        } else {
            let nw = l.weights.len();
            l.bias[slot - nw] = value;
        }
    }
}

fn locate(layers: [&Dense; 5], mut k: usize) -> (usize, usize) {
    for (i, l) in layers.iter().enumerate() {
        if k < l.n_params() {
            return (i, k);
        }
        k -= l.n_params();
    }
    panic!("parameter index out of range");
}

/// Gradient buffers shaped like the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: [Dense; 5],
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Gradients { layers: model.layers().map(|l| Dense::zeros(l.in_dim, l.out_dim)) }
    }

    pub fn get(&self, k: usize) -> f64 {
        let refs = [&self.layers[0], &self.layers[1], &self.layers[2], &self.layers[3], &self.layers[4]];
        let (layer, slot) = locate(refs, k);
        let l = &self.layers[layer];
        if slot < l.weights.len() {
            l.weights[slot]
        } else {
            l.bias[slot - l.weights.len()]
        }
    }

    fn clear(&mut self) {
        for l in &mut self.layers {
            l.weights.fill(0.0);
            l.bias.fill(0.0);
        }
    }

    fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(&l.bias).all(|g| g.is_finite()))
    }
}

/// AdamW with decoupled weight decay.
struct AdamW {
    lr: f64,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Gradients,
    v: Gradients,
}

impl AdamW {
    fn new(model: &MlpModel, lr: f64, weight_decay: f64) -> Self {
        AdamW {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
        }
    }

    fn update(&mut self, model: &mut MlpModel, grads: &Gradients) {
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let decay = 1.0 - self.lr * self.weight_decay;
        for (li, layer) in model.layers_mut().into_iter().enumerate() {
            let g = &grads.layers[li];
            let m = &mut self.m.layers[li];
            let v = &mut self.v.layers[li];
            let pairs = [
                (&mut layer.weights, &g.weights, &mut m.weights, &mut v.weights),
                (&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias),
            ];
            for (p, g, m, v) in pairs {
                for j in 0..p.len() {
                    let gj = g[j];
                    m[j] = b1 * m[j] + (1.0 - b1) * gj;
                    v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
                    let m_hat = m[j] / c1;
                    let v_hat = v[j] / c2;
                    p[j] = p[j] * decay - self.lr * m_hat / (v_hat.sqrt() + self.eps);
                }
            }
        }
    }
}

/// One training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: ModelInput,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_mse: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest dev MSE.
    pub model: MlpModel,
    pub best_epoch: usize,
    pub history: Vec<EpochLog>,
}

/// Mean squared error of inference-mode predictions.
pub fn dataset_mse(model: &MlpModel, samples: &[Sample]) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for s in samples {
        let e = model.predict(&s.input)? - s.target;
        total += e * e;
    }
    Ok(total / samples.len() as f64)
}

/// Mini-batch MSE training with AdamW and early stopping on dev MSE.
///
/// Initialization uses `config.seed`; shuffling and dropout draw from a
/// generator seeded with `config.seed + 1`. Training stops once the dev MSE
/// has not improved (by at least [`MIN_IMPROVEMENT`]) for `patience`
/// consecutive epochs, or after `epochs` epochs.
pub fn mlp_train(train: &[Sample], dev: &[Sample], config: &TrainConfig) -> Result<TrainOutcome, ModelError> {
    config.validate()?;
    let first = train.first().ok_or(ModelError::EmptyInput("training set"))?;
    if dev.is_empty() {
        return Err(ModelError::EmptyInput("dev set"));
    }
    let model = MlpModel::init(first.input.ngram_dim, first.input.other.len(), config.seed);
    mlp_train_from(model, train, dev, config)
}

/// Like [`mlp_train`] but starting from the given parameters.
pub fn mlp_train_from(
    mut model: MlpModel,
    train: &[Sample],
    dev: &[Sample],
    config: &TrainConfig,
) -> Result<TrainOutcome, ModelError> {
    config.validate()?;
    if train.is_empty() {
        return Err(ModelError::EmptyInput("training set"));
    }
    if dev.is_empty() {
        return Err(ModelError::EmptyInput("dev set"));
    }
    for s in train.iter().chain(dev) {
        model.check_input(&s.input)?;
        if !s.target.is_finite() {
            return Err(ModelError::NonFinite("training target".into()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut opt = AdamW::new(&model, config.learning_rate, config.weight_decay);
    let mut grads = Gradients::zeros_like(&model);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(f64, usize, MlpModel)> = None;
    let mut since_best = 0;
    let mut history = Vec::new();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            grads.clear();
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &i in batch {
                let s = &train[i];
                let trace = model.trace(&s.input, Some(&mut rng));
                let err = trace.output - s.target;
                batch_loss += err * err;
                model.backward(&s.input, &trace, 2.0 * err * scale, &mut grads);
            }
            if !batch_loss.is_finite() || !grads.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch, batch: b + 1 });
            }
            epoch_loss += batch_loss;
            opt.update(&mut model, &grads);
        }
        let dev_mse = dataset_mse(&model, dev)?;
        if !dev_mse.is_finite() {
            return Err(ModelError::NonFiniteLoss { epoch, batch: 0 });
        }
        history.push(EpochLog { epoch, train_loss: epoch_loss / train.len() as f64, dev_mse });
        log::debug!("epoch {epoch}: train {:.5} dev {dev_mse:.5}", epoch_loss / train.len() as f64);
        let improved = best.as_ref().is_none_or(|(b, _, _)| dev_mse < b - MIN_IMPROVEMENT);
        if improved {
            best = Some((dev_mse, epoch, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= config.patience {
            break;
        }
    }
    let (_, best_epoch, model) = best.expect("at least one epoch ran");
    Ok(TrainOutcome { model, best_epoch, history })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Probes skipped because the perturbation switched a ReLU on or off,
    /// where central differences do not estimate the gradient.
    pub skipped: usize,
    /// Worst parameter index with its analytic and numeric gradients.
    pub worst: Option<(usize, f64, f64)>,
}

/// Compares backpropagated gradients of the squared error with central
/// differences on a random subset of `n_params` parameters, without dropout.
/// Probes whose perturbation crosses a ReLU kink are skipped.
pub fn mlp_grad_check(
    model: &MlpModel,
    input: &ModelInput,
    target: f64,
    epsilon: f64,
    n_params: usize,
    seed: u64,
) -> Result<GradCheckReport, ModelError> {
    let (_, grads) = model.loss_and_gradient(input, target)?;
    let total = model.n_params();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = model.clone();
    let mut report = GradCheckReport { max_relative_error: 0.0, checked: 0, skipped: 0, worst: None };
    let pattern = model.gate_pattern(input);
    let loss = |m: &MlpModel| -> Result<f64, ModelError> {
        let e = m.predict(input)? - target;
        Ok(e * e)
    };
    for _ in 0..n_params.min(total) {
        let k = rng.gen_range(0..total);
        let original = model.param(k);
        probe.set_param(k, original + epsilon);
        let plus = loss(&probe)?;
        let kink = probe.gate_pattern(input) != pattern;
        probe.set_param(k, original - epsilon);
        let minus = loss(&probe)?;
        let kink = kink || probe.gate_pattern(input) != pattern;
        probe.set_param(k, original);
        if kink {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * epsilon);
        let analytic = grads.get(k);
        let denom = analytic.abs().max(numeric.abs()).max(1e-8);
        let rel = (analytic - numeric).abs() / denom;
        report.checked += 1;
        if report.worst.is_none() || rel > report.max_relative_error {
            report.max_relative_error = rel;
            report.worst = Some((k, analytic, numeric));
        }
    }
    Ok(report)
}
