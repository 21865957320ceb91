//! Feed-forward ReLU network with a softmax output layer.
//!
//! Affine layer `l` maps `z^(l)` to `a^(l+1) = W^(l) z^(l) + b^(l)`; hidden
//! layers apply ReLU and the last affine layer produces the class logits.
//! Training minimizes the summed negative log-likelihood of each minibatch
//! with plain SGD at a constant learning rate. During training each input
//! and hidden unit is dropped independently; at test time every weight is
//! multiplied by the keep probability of the layer feeding it.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Sample};
use crate::error::{dim_err, invalid};
use crate::linalg::Matrix;
use crate::seed::{self, stream};
use crate::{Error, Result};

/// Dropout probabilities, kept with the parameters so test-time scaling
/// knows how much to shrink each layer's weights.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DropoutRates {
    pub input: f64,
    pub hidden: f64,
}

impl DropoutRates {
    fn validate(&self) -> Result<()> {
        for (name, p) in [("input", self.input), ("hidden", self.hidden)] {
            if !(0.0..1.0).contains(&p) {
                return Err(invalid!("{name} dropout probability must be in [0, 1), got {p}"));
            }
        }
        Ok(())
    }
}

/// `(d, n_1, ..., n_L, class_count)`.
pub fn layer_dims(d: usize, hidden: &[usize], class_count: usize) -> Vec<usize> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(d);
    dims.extend_from_slice(hidden);
    dims.push(class_count);
    dims
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SerializedParams", into = "SerializedParams")]
pub struct NetworkParams {
    layer_dims: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
    dropout: DropoutRates,
}

/// On-disk form: weights as flat row-major arrays.
#[derive(Serialize, Deserialize)]
struct SerializedParams {
    layer_dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    dropout: DropoutRates,
}

impl From<NetworkParams> for SerializedParams {
    fn from(p: NetworkParams) -> Self {
        SerializedParams {
            layer_dims: p.layer_dims,
            weights: p.weights.into_iter().map(Matrix::into_vec).collect(),
            biases: p.biases,
            dropout: p.dropout,
        }
    }
}

impl TryFrom<SerializedParams> for NetworkParams {
    type Error = Error;

    fn try_from(s: SerializedParams) -> Result<Self> {
        if s.layer_dims.len() < 2 || s.weights.len() != s.layer_dims.len() - 1 {
            return Err(invalid!("{} weight arrays for layer_dims {:?}", s.weights.len(), s.layer_dims));
        }
        let weights = s
            .weights
            .into_iter()
            .zip(s.layer_dims.windows(2))
            .map(|(w, pair)| Matrix::from_vec(pair[1], pair[0], w))
            .collect::<Result<Vec<_>>>()?;
        NetworkParams::from_parts(s.layer_dims, weights, s.biases, s.dropout)
    }
}

impl NetworkParams {
    pub fn from_parts(
        layer_dims: Vec<usize>,
        weights: Vec<Matrix>,
        biases: Vec<Vec<f64>>,
        dropout: DropoutRates,
    ) -> Result<Self> {
        validate_dims(&layer_dims)?;
        dropout.validate()?;
        let n_layers = layer_dims.len() - 1;
        if weights.len() != n_layers || biases.len() != n_layers {
            return Err(dim_err!(
                "{} weight matrices and {} bias vectors for {n_layers} layers",
                weights.len(),
                biases.len()
            ));
        }
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            let (fan_in, fan_out) = (layer_dims[l], layer_dims[l + 1]);
            if w.rows() != fan_out || w.cols() != fan_in || b.len() != fan_out {
                return Err(dim_err!(
                    "layer {l}: weights {}x{} and {} biases, expected {fan_out}x{fan_in}",
                    w.rows(),
                    w.cols(),
                    b.len()
                ));
            }
            if !w.is_finite() || b.iter().any(|x| !x.is_finite()) {
                return Err(invalid!("layer {l} has non-finite parameters"));
            }
        }
        Ok(NetworkParams { layer_dims, weights, biases, dropout })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn class_count(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn hidden_layers(&self) -> usize {
        self.layer_dims.len() - 2
    }

    /// Number of affine maps, hidden layers plus the softmax layer.
    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self, layer: usize) -> &Matrix {
        &self.weights[layer]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut Matrix {
        &mut self.weights[layer]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.biases[layer]
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.biases[layer]
    }

    pub fn dropout(&self) -> DropoutRates {
        self.dropout
    }

    pub fn with_dropout(mut self, dropout: DropoutRates) -> Result<Self> {
        dropout.validate()?;
        self.dropout = dropout;
        Ok(self)
    }

    /// Probability that a unit feeding affine layer `layer` is dropped.
    pub fn drop_probability(&self, layer: usize) -> f64 {
        if layer == 0 {
            self.dropout.input
        } else {
            self.dropout.hidden
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite) && self.biases.iter().flatten().all(|x| x.is_finite())
    }

    /// `W ← W − η·g`, in place.
    pub fn apply_gradient(&mut self, grad: &Gradient, eta: f64) -> Result<()> {
        grad.check_shape(self)?;
        for (w, g) in self.weights.iter_mut().zip(&grad.weights) {
            for (x, &dx) in w.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *x -= eta * dx;
            }
        }
        for (b, g) in self.biases.iter_mut().zip(&grad.biases) {
            for (x, &dx) in b.iter_mut().zip(g) {
                *x -= eta * dx;
            }
        }
        Ok(())
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(invalid!("layer_dims needs an input and an output size, got {dims:?}"));
    }
    if dims.contains(&0) {
        return Err(invalid!("layer sizes must be positive, got {dims:?}"));
    }
    Ok(())
}

/// Hidden weights from `N(0, init_std²)`; softmax weights and every bias zero.
pub fn init_params(layer_dims: &[usize], init_std: f64, seed: u64) -> Result<NetworkParams> {
    validate_dims(layer_dims)?;
    if !(init_std >= 0.0 && init_std.is_finite()) {
        return Err(invalid!("init_std must be finite and non-negative, got {init_std}"));
    }
    let mut rng = seed::rng(seed);
    let n_layers = layer_dims.len() - 1;
    let mut weights = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let (fan_in, fan_out) = (layer_dims[l], layer_dims[l + 1]);
        let w = if l + 1 < n_layers {
            let entries = (0..fan_in * fan_out).map(|_| init_std * rng.sample::<f64, _>(StandardNormal));
            Matrix::from_vec(fan_out, fan_in, entries.collect())?
        } else {
            Matrix::zeros(fan_out, fan_in)
        };
        weights.push(w);
    }
    let biases = layer_dims[1..].iter().map(|&n| vec![0.0; n]).collect();
    NetworkParams::from_parts(layer_dims.to_vec(), weights, biases, DropoutRates::default())
}

/// Same shape as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradient {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Gradient {
            weights: params.weights.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect(),
            biases: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    fn check_shape(&self, params: &NetworkParams) -> Result<()> {
        let ok = self.weights.len() == params.weights.len()
            && self.biases.len() == params.biases.len()
            && self
                .weights
                .iter()
                .zip(&params.weights)
                .all(|(g, w)| g.rows() == w.rows() && g.cols() == w.cols())
            && self.biases.iter().zip(&params.biases).all(|(g, b)| g.len() == b.len());
        if ok {
            Ok(())
        } else {
            Err(dim_err!("gradient shape does not match the network"))
        }
    }
}

/// Which units are kept (`true`) at the input of every affine layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DropoutMasks {
    pub layers: Vec<Vec<bool>>,
}

impl DropoutMasks {
    pub fn all_live(params: &NetworkParams) -> Self {
        DropoutMasks {
            layers: params.layer_dims[..params.n_layers()].iter().map(|&n| vec![true; n]).collect(),
        }
    }

    /// Drops every unit independently with its layer's probability.
    pub fn sample<R: Rng + ?Sized>(params: &NetworkParams, rng: &mut R) -> Self {
        let layers = (0..params.n_layers())
            .map(|l| {
                let p = params.drop_probability(l);
                (0..params.layer_dims[l]).map(|_| rng.random::<f64>() >= p).collect()
            })
            .collect();
        DropoutMasks { layers }
    }

    fn check_shape(&self, params: &NetworkParams) -> Result<()> {
        let ok = self.layers.len() == params.n_layers()
            && self.layers.iter().zip(&params.layer_dims).all(|(m, &n)| m.len() == n);
        if ok {
            Ok(())
        } else {
            Err(dim_err!("dropout masks do not match the network"))
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Mode<'a> {
    /// Masked units contribute nothing; weights are used as stored.
    Train(&'a DropoutMasks),
    /// Every unit is live; weights are scaled by `1 − p` of their input layer.
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `activations[l]` is the vector entering affine layer `l` after masking;
    /// `activations[0]` is the input.
    pub activations: Vec<Vec<f64>>,
    /// `potentials[l]` is the output of affine layer `l`; the last entry holds
    /// the softmax logits.
    pub potentials: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub masks: Option<DropoutMasks>,
}

fn check_input(params: &NetworkParams, x: &[f64]) -> Result<()> {
    if x.len() != params.input_dim() {
        return Err(dim_err!("input has length {}, network expects {}", x.len(), params.input_dim()));
    }
    Ok(())
}

fn affine(w: &Matrix, b: &[f64], z: &[f64], scale: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(w.rows());
    for (i, &bias) in b.iter().enumerate() {
        let row = w.row(i);
        let mut acc = 0.0;
        if scale == 1.0 {
            for (&wij, &zj) in row.iter().zip(z) {
                acc += wij * zj;
            }
        } else {
            for (&wij, &zj) in row.iter().zip(z) {
                acc += (wij * scale) * zj;
            }
        }
        out.push(acc + bias);
    }
    out
}

/// Log-softmax with the maximum subtracted first.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&l| libm::exp(l - max)).sum();
    let lse = max + libm::log(sum);
    logits.iter().map(|&l| l - lse).collect()
}

fn layer_scale(params: &NetworkParams, mode: &Mode<'_>, layer: usize) -> f64 {
    match mode {
        Mode::Train(_) => 1.0,
        Mode::Test => 1.0 - params.drop_probability(layer),
    }
}

pub fn forward(params: &NetworkParams, x: &[f64], mode: Mode<'_>) -> Result<ForwardTrace> {
    check_input(params, x)?;
    if let Mode::Train(masks) = mode {
        masks.check_shape(params)?;
    }
    let n_layers = params.n_layers();
    let mut activations = Vec::with_capacity(n_layers);
    let mut potentials = Vec::with_capacity(n_layers);

    let mut z = x.to_vec();
    for l in 0..n_layers {
        if let Mode::Train(masks) = mode {
            for (v, &keep) in z.iter_mut().zip(&masks.layers[l]) {
                if !keep {
                    *v = 0.0;
                }
            }
        }
        let a = affine(&params.weights[l], &params.biases[l], &z, layer_scale(params, &mode, l));
        activations.push(z);
        z = if l + 1 < n_layers { a.iter().map(|&v| v.max(0.0)).collect() } else { Vec::new() };
        potentials.push(a);
    }
    let log_probs = log_softmax(potentials.last().unwrap());
    let masks = match mode {
        Mode::Train(m) => Some(m.clone()),
        Mode::Test => None,
    };
    Ok(ForwardTrace { activations, potentials, log_probs, masks })
}

/// Pushes `delta` (∂/∂logits) back through the network described by `trace`.
/// Adds parameter gradients into `grad` when given and returns ∂/∂x.
pub(crate) fn backpropagate(
    params: &NetworkParams,
    trace: &ForwardTrace,
    mode: &Mode<'_>,
    mut delta: Vec<f64>,
    mut grad: Option<&mut Gradient>,
) -> Vec<f64> {
    for l in (0..params.n_layers()).rev() {
        let w = &params.weights[l];
        let scale = layer_scale(params, mode, l);
        let z = &trace.activations[l];
        if let Some(g) = grad.as_deref_mut() {
            let gw = &mut g.weights[l];
            for (i, &di) in delta.iter().enumerate() {
                let ds = di * scale;
                for (gij, &zj) in gw.row_mut(i).iter_mut().zip(z) {
                    *gij += ds * zj;
                }
                g.biases[l][i] += di;
            }
        }
        let mut dz = vec![0.0; w.cols()];
        for (i, &di) in delta.iter().enumerate() {
            for (dj, &wij) in dz.iter_mut().zip(w.row(i)) {
                *dj += (wij * scale) * di;
            }
        }
        if let Mode::Train(masks) = mode {
            for (dj, &keep) in dz.iter_mut().zip(&masks.layers[l]) {
                if !keep {
                    *dj = 0.0;
                }
            }
        }
        if l > 0 {
            for (dj, &a) in dz.iter_mut().zip(&trace.potentials[l - 1]) {
                if a <= 0.0 {
                    *dj = 0.0;
                }
            }
        }
        delta = dz;
    }
    delta
}

/// Adds one sample's loss gradient into `grad`; returns its loss.
fn accumulate_sample(
    params: &NetworkParams,
    x: &[f64],
    label: usize,
    mode: Mode<'_>,
    grad: &mut Gradient,
) -> Result<f64> {
    let trace = forward(params, x, mode)?;
    let mut delta: Vec<f64> = trace.log_probs.iter().map(|&lp| libm::exp(lp)).collect();
    delta[label] -= 1.0;
    backpropagate(params, &trace, &mode, delta, Some(grad));
    Ok(-trace.log_probs[label])
}

fn check_batch(params: &NetworkParams, batch: &[Sample], masks: Option<&[DropoutMasks]>) -> Result<()> {
    if batch.is_empty() {
        return Err(invalid!("empty batch"));
    }
    if let Some(m) = masks {
        if m.len() != batch.len() {
            return Err(dim_err!("{} mask sets for {} samples", m.len(), batch.len()));
        }
    }
    if let Some((n, s)) = batch.iter().enumerate().find(|(_, s)| s.label >= params.class_count()) {
        return Err(invalid!(
            "sample {n} has label {} but the network has {} classes",
            s.label,
            params.class_count()
        ));
    }
    Ok(())
}

fn mode_for<'a>(masks: Option<&'a [DropoutMasks]>, n: usize) -> Mode<'a> {
    match masks {
        Some(m) => Mode::Train(&m[n]),
        None => Mode::Test,
    }
}

/// Summed negative log-likelihood of the batch. `masks`, one set per sample,
/// selects training mode; `None` evaluates the test-time network.
pub fn nll_loss(params: &NetworkParams, batch: &[Sample], masks: Option<&[DropoutMasks]>) -> Result<f64> {
    check_batch(params, batch, masks)?;
    let mut loss = 0.0;
    for (n, s) in batch.iter().enumerate() {
        let trace = forward(params, &s.features, mode_for(masks, n))?;
        loss -= trace.log_probs[s.label];
    }
    Ok(loss)
}

/// Gradient of [`nll_loss`] with respect to every weight and bias.
pub fn backward(
    params: &NetworkParams,
    batch: &[Sample],
    masks: Option<&[DropoutMasks]>,
) -> Result<Gradient> {
    check_batch(params, batch, masks)?;
    let mut grad = Gradient::zeros_like(params);
    for (n, s) in batch.iter().enumerate() {
        accumulate_sample(params, &s.features, s.label, mode_for(masks, n), &mut grad)?;
    }
    Ok(grad)
}

pub fn sgd_step(params: &NetworkParams, grad: &Gradient, eta: f64) -> Result<NetworkParams> {
    let mut next = params.clone();
    next.apply_gradient(grad, eta)?;
    Ok(next)
}

/// Test-time argmax; ties go to the lowest class index.
pub fn predict(params: &NetworkParams, x: &[f64]) -> Result<usize> {
    let trace = forward(params, x, Mode::Test)?;
    Ok(argmax(&trace.log_probs))
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = k;
        }
    }
    best
}

pub fn accuracy(params: &NetworkParams, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(invalid!("accuracy of an empty dataset is undefined"));
    }
    let mut correct = 0usize;
    for s in dataset.samples() {
        if predict(params, &s.features)? == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate_grid: Vec<f64>,
    pub batch_size: usize,
    pub dropout_input: f64,
    pub dropout_hidden: f64,
    pub patience_epochs: usize,
    pub max_epochs: usize,
    pub init_std: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// The learning rates are 0.1 and 1.0 per sample-averaged loss, expressed
    /// for the summed loss of a 100-sample batch.
    fn default() -> Self {
        TrainConfig {
            learning_rate_grid: vec![0.001, 0.01],
            batch_size: 100,
            dropout_input: 0.2,
            dropout_hidden: 0.5,
            patience_epochs: 100,
            max_epochs: 10_000,
            init_std: 0.01,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate_grid.is_empty() {
            return Err(invalid!("learning_rate_grid is empty"));
        }
        if let Some(eta) = self.learning_rate_grid.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return Err(invalid!("learning rates must be positive and finite, got {eta}"));
        }
        if self.batch_size == 0 {
            return Err(invalid!("batch_size must be at least 1"));
        }
        if self.patience_epochs == 0 {
            return Err(invalid!("patience_epochs must be at least 1"));
        }
        self.dropout().validate()?;
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return Err(invalid!("init_std must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn dropout(&self) -> DropoutRates {
        DropoutRates { input: self.dropout_input, hidden: self.dropout_hidden }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub train_loss: f64,
    pub validation_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub chosen_learning_rate: f64,
    pub epochs_run: usize,
    pub best_validation_accuracy: f64,
    pub history: Vec<EpochRecord>,
}

/// Trains one network per learning rate in the grid and keeps the one with
/// the best validation accuracy (the smaller rate on ties).
///
/// Each run shuffles the training set every epoch, updates after every
/// `batch_size` samples (the last batch may be short) with fresh dropout
/// masks for every sample, and stops once validation accuracy has not
/// strictly improved for `patience_epochs` epochs. The parameters of the
/// best validation epoch are returned.
pub fn train(
    config: &TrainConfig,
    train_set: &Dataset,
    valid_set: &Dataset,
    layer_dims: &[usize],
) -> Result<(NetworkParams, TrainReport)> {
    config.validate()?;
    validate_dims(layer_dims)?;
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(invalid!("training and validation sets must be non-empty"));
    }
    for (name, ds) in [("training", train_set), ("validation", valid_set)] {
        if ds.d() != layer_dims[0] || ds.class_count() != *layer_dims.last().unwrap() {
            return Err(dim_err!(
                "{name} set is {} features x {} classes but the network is {:?}",
                ds.d(),
                ds.class_count(),
                layer_dims
            ));
        }
    }
    let train_subjects: BTreeSet<&str> = train_set.samples().iter().map(|s| s.subject_id.as_str()).collect();
    if let Some(s) = valid_set.samples().iter().find(|s| train_subjects.contains(s.subject_id.as_str())) {
        return Err(invalid!("subject '{}' is in both the training and validation sets", s.subject_id));
    }

    let init = init_params(layer_dims, config.init_std, seed::derive(config.seed, stream::INIT))?
        .with_dropout(config.dropout())?;

    let mut best: Option<(NetworkParams, TrainReport)> = None;
    for (g, &eta) in config.learning_rate_grid.iter().enumerate() {
        let run_seed = seed::derive(config.seed, stream::GRID + g as u64);
        let (params, report) = train_one(config, &init, train_set, valid_set, eta, run_seed)?;
        let better = match &best {
            None => true,
            Some((_, b)) => {
                report.best_validation_accuracy > b.best_validation_accuracy
                    || (report.best_validation_accuracy == b.best_validation_accuracy
                        && eta < b.chosen_learning_rate)
            }
        };
        if better {
            best = Some((params, report));
        }
    }
    Ok(best.expect("grid is non-empty"))
}

fn train_one(
    config: &TrainConfig,
    init: &NetworkParams,
    train_set: &Dataset,
    valid_set: &Dataset,
    eta: f64,
    run_seed: u64,
) -> Result<(NetworkParams, TrainReport)> {
    let mut rng = seed::rng(run_seed);
    let samples = train_set.samples();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut params = init.clone();
    let mut best: Option<(f64, NetworkParams)> = None;
    let mut history = Vec::new();
    let mut stale = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grad = Gradient::zeros_like(&params);
            let mut loss = 0.0;
            for &n in batch {
                let masks = DropoutMasks::sample(&params, &mut rng);
                let s = &samples[n];
                loss += accumulate_sample(&params, &s.features, s.label, Mode::Train(&masks), &mut grad)?;
            }
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, learning_rate: eta });
            }
            params.apply_gradient(&grad, eta)?;
            epoch_loss += loss;
        }
        if !params.is_finite() {
            return Err(Error::Divergence { epoch, learning_rate: eta });
        }

        let acc = accuracy(&params, valid_set)?;
        history.push(EpochRecord { train_loss: epoch_loss, validation_accuracy: acc });
        if best.as_ref().is_none_or(|(b, _)| acc > *b) {
            best = Some((acc, params.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience_epochs {
                break;
            }
        }
    }

    let (best_acc, best_params) = match best {
        Some(b) => b,
        None => (accuracy(init, valid_set)?, init.clone()),
    };
    let report = TrainReport {
        chosen_learning_rate: eta,
        epochs_run: history.len(),
        best_validation_accuracy: best_acc,
        history,
    };
    Ok((best_params, report))
}
