//! Binary cross-entropy loss, the RMSprop optimizer, the minibatch training
//! loop, and a finite-difference gradient checker.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::FeatureVector;
use crate::lstm::{
    backward, forward, init_params, sample_dropout_mask, Activation, LstmError, LstmParams,
    NetConfig,
};
use crate::numerics::{Rng, Vector};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("training diverged at epoch {epoch}: non-finite loss or state")]
    Divergence { epoch: usize },
}

/// Optimizer and loop hyperparameters. The defaults follow the reference
/// setup: RMSprop with learning rate 0.001, rho 0.9, decay 0.0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub rho: f64,
    /// Inverse-time learning-rate decay: eta_t = eta / (1 + decay * t).
    pub decay: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub clip_norm: f64,
    /// Fraction of the training data held out, stratified by target.
    pub validation_fraction: f64,
    /// Stop after this many epochs without validation-loss improvement.
    pub early_stop_patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            rho: 0.9,
            decay: 0.0,
            epsilon: 1e-7,
            epochs: 20,
            batch_size: 128,
            seed: 1,
            clip_norm: 5.0,
            validation_fraction: 0.1,
            early_stop_patience: None,
        }
    }
}

impl TrainConfig {
    // negated comparisons so that NaN fails validation too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0) {
            return Err(TrainError::InvalidConfig("learning rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(TrainError::InvalidConfig("rho must lie in [0, 1)".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(TrainError::InvalidConfig("epsilon must be > 0".into()));
        }
        if self.decay < 0.0 {
            return Err(TrainError::InvalidConfig("decay must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(TrainError::InvalidConfig(
                "validation fraction must lie in [0, 1)".into(),
            ));
        }
        if !(self.clip_norm > 0.0) {
            return Err(TrainError::InvalidConfig("clip norm must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-parameter accumulator of squared gradients, plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct RmspropState {
    pub mean_square: LstmParams,
    pub step: u64,
}

impl RmspropState {
    pub fn new(input_dim: usize, hidden: usize) -> Self {
        RmspropState {
            mean_square: LstmParams::zeros(input_dim, hidden),
            step: 0,
        }
    }
}

/// Binary cross-entropy; the probability is clipped to
/// [1e-12, 1 - 1e-12] before the logs.
pub fn bce_loss(prob: f64, y: f64) -> f64 {
    let p = prob.clamp(1e-12, 1.0 - 1e-12);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// One RMSprop update:
///   E <- rho * E + (1 - rho) * g^2
///   theta <- theta - eta_t * g / sqrt(E + epsilon)
/// with eta_t = eta / (1 + decay * t), t counted from 0.
pub fn rmsprop_step(
    params: &mut LstmParams,
    grads: &LstmParams,
    state: &mut RmspropState,
    config: &TrainConfig,
) -> Result<(), TrainError> {
    if !params.same_shape(grads) || !params.same_shape(&state.mean_square) {
        return Err(TrainError::ShapeMismatch(format!(
            "params ({}, {}) vs grads ({}, {}) vs state ({}, {})",
            params.input_dim(),
            params.hidden_dim(),
            grads.input_dim(),
            grads.hidden_dim(),
            state.mean_square.input_dim(),
            state.mean_square.hidden_dim(),
        )));
    }
    let eta = config.learning_rate / (1.0 + config.decay * state.step as f64);
    let rho = config.rho;
    let eps = config.epsilon;
    for (((_, p), (_, g)), (_, e)) in params
        .segments_mut()
        .into_iter()
        .zip(grads.segments())
        .zip(state.mean_square.segments_mut())
    {
        for i in 0..p.len() {
            e[i] = rho * e[i] + (1.0 - rho) * g[i] * g[i];
            p[i] -= eta * g[i] / (e[i] + eps).sqrt();
        }
    }
    state.step += 1;
    Ok(())
}

/// Metrics recorded after each completed epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochStats>,
    /// Total optimizer steps taken.
    pub steps: u64,
}

impl TrainTrace {
    /// CSV with the columns epoch, loss, train_acc, val_acc.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,train_acc,val_acc\n");
        for e in &self.epochs {
            let val = e
                .val_accuracy
                .map(|v| format!("{v}"))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.epoch, e.train_loss, e.train_accuracy, val
            ));
        }
        out
    }
}

/// Deterministic stratified split: indices are grouped by target, each
/// group is shuffled with `rng`, and the first `fraction` of each group
/// becomes the held-out part.
pub fn stratified_split(
    dataset: &[FeatureVector],
    fraction: f64,
    rng: &mut Rng,
) -> (Vec<usize>, Vec<usize>) {
    let mut normal: Vec<usize> = Vec::new();
    let mut attack: Vec<usize> = Vec::new();
    for (i, fv) in dataset.iter().enumerate() {
        if fv.y {
            attack.push(i);
        } else {
            normal.push(i);
        }
    }
    let mut train = Vec::new();
    let mut held_out = Vec::new();
    for group in [&mut normal, &mut attack] {
        rng.shuffle(group);
        let k = (fraction * group.len() as f64).floor() as usize;
        held_out.extend_from_slice(&group[..k]);
        train.extend_from_slice(&group[k..]);
    }
    (train, held_out)
}

fn inference_metrics(
    params: &LstmParams,
    net: &NetConfig,
    dataset: &[FeatureVector],
    indices: &[usize],
) -> Result<(f64, f64), LstmError> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for &i in indices {
        let fv = &dataset[i];
        let p = forward(params, net, std::slice::from_ref(&fv.x), None)?.0;
        loss += bce_loss(p, fv.target());
        if (p > 0.5) == fv.y {
            correct += 1;
        }
    }
    let n = indices.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Train the LSTM with minibatch RMSprop. Each epoch reshuffles the
/// training indices with the seeded generator; per batch the sample
/// gradients are averaged, the global norm is clipped, and one optimizer
/// step is applied. Every presentation of a sample draws a fresh dropout
/// mask (none when the dropout rate is 0, so that code path is absent).
pub fn train(
    dataset: &[FeatureVector],
    net: &NetConfig,
    config: &TrainConfig,
) -> Result<(LstmParams, TrainTrace), TrainError> {
    config.validate()?;
    net.validate().map_err(TrainError::InvalidConfig)?;
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if net.seq_len != 1 {
        return Err(TrainError::InvalidConfig(
            "record datasets train as length-1 sequences; seq_len must be 1".into(),
        ));
    }
    let input_dim = dataset[0].x.len();
    if dataset.iter().any(|fv| fv.x.len() != input_dim) {
        return Err(TrainError::ShapeMismatch(
            "dataset vectors have differing dimensionality".into(),
        ));
    }

    let mut rng = Rng::new(config.seed);
    let mut params = init_params(&mut rng, input_dim, net.hidden);
    let mut state = RmspropState::new(input_dim, net.hidden);
    let (mut train_idx, val_idx) = stratified_split(dataset, config.validation_fraction, &mut rng);
    if train_idx.is_empty() {
        return Err(TrainError::InvalidConfig(
            "validation split left no training samples".into(),
        ));
    }

    let mut trace = TrainTrace::default();
    let mut best_val = f64::INFINITY;
    let mut stale_epochs = 0usize;

    for epoch in 0..config.epochs {
        let started = Instant::now();
        rng.shuffle(&mut train_idx);
        let mut epoch_loss = 0.0;

        for batch in train_idx.chunks(config.batch_size) {
            let mut batch_grads = LstmParams::zeros(input_dim, net.hidden);
            for &i in batch {
                let fv = &dataset[i];
                let mask = if net.dropout > 0.0 {
                    Some(sample_dropout_mask(&mut rng, net.hidden, net.dropout))
                } else {
                    None
                };
                let (p, cache) = forward(&params, net, std::slice::from_ref(&fv.x), mask.as_ref())
                    .map_err(|e| divergence_or_shape(e, epoch))?;
                epoch_loss += bce_loss(p, fv.target());
                let grads =
                    backward(&params, &cache, fv.y).map_err(|e| divergence_or_shape(e, epoch))?;
                batch_grads
                    .add_assign(&grads)
                    .map_err(|e| TrainError::ShapeMismatch(e.to_string()))?;
            }
            batch_grads.scale_in_place(1.0 / batch.len() as f64);

            let norm = batch_grads.global_norm();
            if norm > config.clip_norm {
                batch_grads.scale_in_place(config.clip_norm / norm);
            }
            rmsprop_step(&mut params, &batch_grads, &mut state, config)?;
        }

        let mean_loss = epoch_loss / train_idx.len() as f64;
        if !mean_loss.is_finite() {
            return Err(TrainError::Divergence { epoch });
        }

        let (_, train_acc) = inference_metrics(&params, net, dataset, &train_idx)
            .map_err(|e| divergence_or_shape(e, epoch))?;
        let (val_loss, val_acc) = if val_idx.is_empty() {
            (None, None)
        } else {
            let (l, a) = inference_metrics(&params, net, dataset, &val_idx)
                .map_err(|e| divergence_or_shape(e, epoch))?;
            (Some(l), Some(a))
        };

        trace.epochs.push(EpochStats {
            epoch,
            train_loss: mean_loss,
            train_accuracy: train_acc,
            val_loss,
            val_accuracy: val_acc,
            seconds: started.elapsed().as_secs_f64(),
        });
        trace.steps = state.step;

        if let (Some(patience), Some(loss)) = (config.early_stop_patience, val_loss) {
            if loss < best_val {
                best_val = loss;
                stale_epochs = 0;
            } else {
                stale_epochs += 1;
                if stale_epochs >= patience {
                    break;
                }
            }
        }
    }

    Ok((params, trace))
}

fn divergence_or_shape(err: LstmError, epoch: usize) -> TrainError {
    match err {
        LstmError::NonFiniteState { .. } => TrainError::Divergence { epoch },
        other => TrainError::ShapeMismatch(other.to_string()),
    }
}

/// Result of one finite-difference sweep over every parameter.
#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_coordinate: String,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub params_checked: usize,
    pub activation: Activation,
    pub seed: u64,
}

/// Relative error with a guarded denominator: |a - n| / max(|a|, |n|, 1e-8).
/// Two exact zeros compare to 0, never NaN.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compare analytic gradients against central finite differences
/// (h = 1e-5) on one random instance. For the relu cell the instance is
/// re-drawn until every candidate pre-activation and cell state sits at
/// least 1e-3 away from the kink, so the two-sided difference never
/// straddles it.
pub fn grad_check(
    seed: u64,
    input_dim: usize,
    hidden: usize,
    seq_len: usize,
    activation: Activation,
) -> GradCheckReport {
    grad_check_impl(seed, input_dim, hidden, seq_len, activation, false)
}

/// Negative control for the checker itself: corrupts one analytic gradient
/// coordinate so the report must fail. Test hook only.
#[doc(hidden)]
pub fn grad_check_negative_control(
    seed: u64,
    input_dim: usize,
    hidden: usize,
    seq_len: usize,
    activation: Activation,
) -> GradCheckReport {
    grad_check_impl(seed, input_dim, hidden, seq_len, activation, true)
}

fn grad_check_impl(
    seed: u64,
    input_dim: usize,
    hidden: usize,
    seq_len: usize,
    activation: Activation,
    corrupt: bool,
) -> GradCheckReport {
    const STEP: f64 = 1e-5;
    const KINK_MARGIN: f64 = 1e-3;

    let net = NetConfig {
        hidden,
        activation,
        dropout: 0.0,
        seq_len,
    };
    let mut rng = Rng::new(seed);

    // draw until the instance is safe for two-sided differences
    let (params, sequence, y) = loop {
        let params = init_params(&mut rng, input_dim, hidden);
        let sequence: Vec<Vector> = (0..seq_len)
            .map(|_| Vector::random(&mut rng, input_dim, 1.0))
            .collect();
        let y = rng.next_f64() < 0.5;
        if activation != Activation::Relu {
            break (params, sequence, y);
        }
        let (_, cache) = forward(&params, &net, &sequence, None).expect("forward");
        let safe = cache.steps.iter().all(|s| {
            s.candidate_pre.iter().all(|v| v.abs() > KINK_MARGIN)
                && s.c.iter().all(|v| v.abs() > KINK_MARGIN)
        });
        if safe {
            break (params, sequence, y);
        }
    };

    let target = if y { 1.0 } else { 0.0 };
    let (_, cache) = forward(&params, &net, &sequence, None).expect("forward");
    let mut analytic = backward(&params, &cache, y).expect("backward");
    if corrupt {
        analytic.set_flat(0, analytic.get_flat(0) + 1.0);
    }

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_coordinate: String::new(),
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        params_checked: params.flat_len(),
        activation,
        seed,
    };

    let mut perturbed = params.clone();
    for i in 0..params.flat_len() {
        let original = params.get_flat(i);
        perturbed.set_flat(i, original + STEP);
        let plus = bce_loss(
            forward(&perturbed, &net, &sequence, None).expect("forward").0,
            target,
        );
        perturbed.set_flat(i, original - STEP);
        let minus = bce_loss(
            forward(&perturbed, &net, &sequence, None).expect("forward").0,
            target,
        );
        perturbed.set_flat(i, original);

        let numeric = (plus - minus) / (2.0 * STEP);
        let a = analytic.get_flat(i);
        let rel = relative_error(a, numeric);
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_coordinate = params.coordinate_name(i);
            report.analytic_at_worst = a;
            report.numeric_at_worst = numeric;
        }
    }
    report
}
