//! Single-layer LSTM with a sigmoid output head.
//!
//! Per timestep, with x_t the input and (h_{t-1}, c_{t-1}) the previous
//! state:
//!
//!   i_t = sigmoid(W_xi x_t + W_hi h_{t-1} + b_i)
//!   f_t = sigmoid(W_xf x_t + W_hf h_{t-1} + b_f)
//!   g_t = act(W_xc x_t + W_hc h_{t-1} + b_c)
//!   o_t = sigmoid(W_xo x_t + W_ho h_{t-1} + b_o)
//!   c_t = f_t * c_{t-1} + i_t * g_t
//!   h_t = o_t * act(c_t)
//!
//! `act` is the configurable cell activation (tanh or relu; the gate
//! nonlinearities stay sigmoid either way). The head applies inverted
//! dropout to h_T and squashes a single logit:
//!   p = sigmoid(w_out . dropout(h_T) + b_out)
//!
//! The backward pass is exact backpropagation through time for the binary
//! cross-entropy loss at (p, y).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{outer, sigmoid, Matrix, NumericsError, Rng, Vector};

#[derive(Debug, Error, PartialEq)]
pub enum LstmError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("non-finite value in cell state at step {step}")]
    NonFiniteState { step: usize },
    #[error("sequence length {got} does not match configured length {expected}")]
    SequenceLength { expected: usize, got: usize },
    #[error("cache does not match parameters: {0}")]
    CacheMismatch(String),
}

/// Cell/candidate activation. Gate activations are always sigmoid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
        }
    }

    /// Derivative expressed through the activation's own output. For relu
    /// the subgradient at 0 is taken as 0.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        })
    }
}

/// Network shape and regularization settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub hidden: usize,
    pub activation: Activation,
    /// Dropout rate applied to the final hidden state during training.
    pub dropout: f64,
    pub seq_len: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            hidden: 64,
            activation: Activation::Relu,
            dropout: 0.5,
            seq_len: 1,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.hidden == 0 {
            return Err("hidden size must be >= 1".into());
        }
        if self.seq_len == 0 {
            return Err("sequence length must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err("dropout rate must lie in [0, 1)".into());
        }
        Ok(())
    }
}

/// Weights for one gate: input projection, recurrent projection, bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    pub w_x: Matrix,
    pub w_h: Matrix,
    pub b: Vector,
}

impl GateParams {
    fn zeros(input_dim: usize, hidden: usize) -> Self {
        GateParams {
            w_x: Matrix::zeros(hidden, input_dim),
            w_h: Matrix::zeros(hidden, hidden),
            b: Vector::zeros(hidden),
        }
    }

    /// Pre-activation W_x x + W_h h + b.
    fn affine(&self, x: &Vector, h: &Vector) -> Result<Vector, NumericsError> {
        self.w_x
            .matvec(x)?
            .add(&self.w_h.matvec(h)?)?
            .add(&self.b)
    }
}

/// All trainable parameters. The same shape-tree doubles as the container
/// for gradients and for optimizer accumulators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub input_gate: GateParams,
    pub forget_gate: GateParams,
    pub candidate: GateParams,
    pub output_gate: GateParams,
    pub w_out: Vector,
    pub b_out: f64,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        LstmParams {
            input_gate: GateParams::zeros(input_dim, hidden),
            forget_gate: GateParams::zeros(input_dim, hidden),
            candidate: GateParams::zeros(input_dim, hidden),
            output_gate: GateParams::zeros(input_dim, hidden),
            w_out: Vector::zeros(hidden),
            b_out: 0.0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_gate.w_x.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.input_gate.w_x.rows()
    }

    /// Named views of every parameter block, in a pinned order (gates i, f,
    /// c, o; within a gate w_x, w_h, b; then the output head). Flat indices
    /// and the optimizer walk this order.
    pub fn segments(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("w_xi", self.input_gate.w_x.data()),
            ("w_hi", self.input_gate.w_h.data()),
            ("b_i", self.input_gate.b.data()),
            ("w_xf", self.forget_gate.w_x.data()),
            ("w_hf", self.forget_gate.w_h.data()),
            ("b_f", self.forget_gate.b.data()),
            ("w_xc", self.candidate.w_x.data()),
            ("w_hc", self.candidate.w_h.data()),
            ("b_c", self.candidate.b.data()),
            ("w_xo", self.output_gate.w_x.data()),
            ("w_ho", self.output_gate.w_h.data()),
            ("b_o", self.output_gate.b.data()),
            ("w_out", self.w_out.data()),
            ("b_out", std::slice::from_ref(&self.b_out)),
        ]
    }

    pub fn segments_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("w_xi", self.input_gate.w_x.data_mut()),
            ("w_hi", self.input_gate.w_h.data_mut()),
            ("b_i", self.input_gate.b.data_mut()),
            ("w_xf", self.forget_gate.w_x.data_mut()),
            ("w_hf", self.forget_gate.w_h.data_mut()),
            ("b_f", self.forget_gate.b.data_mut()),
            ("w_xc", self.candidate.w_x.data_mut()),
            ("w_hc", self.candidate.w_h.data_mut()),
            ("b_c", self.candidate.b.data_mut()),
            ("w_xo", self.output_gate.w_x.data_mut()),
            ("w_ho", self.output_gate.w_h.data_mut()),
            ("b_o", self.output_gate.b.data_mut()),
            ("w_out", self.w_out.data_mut()),
            ("b_out", std::slice::from_mut(&mut self.b_out)),
        ]
    }

    pub fn flat_len(&self) -> usize {
        self.segments().iter().map(|(_, s)| s.len()).sum()
    }

    pub fn get_flat(&self, index: usize) -> f64 {
        let mut offset = index;
        for (_, seg) in self.segments() {
            if offset < seg.len() {
                return seg[offset];
            }
            offset -= seg.len();
        }
        panic!("flat index {index} out of range");
    }

    pub fn set_flat(&mut self, index: usize, value: f64) {
        let mut offset = index;
        for (_, seg) in self.segments_mut() {
            if offset < seg.len() {
                seg[offset] = value;
                return;
            }
            offset -= seg.len();
        }
        panic!("flat index {index} out of range");
    }

    /// Human-readable name of a flat coordinate, e.g. `w_xi[17]` (row-major
    /// offset within the block).
    pub fn coordinate_name(&self, index: usize) -> String {
        let mut offset = index;
        for (name, seg) in self.segments() {
            if offset < seg.len() {
                return format!("{name}[{offset}]");
            }
            offset -= seg.len();
        }
        format!("<out of range {index}>")
    }

    pub fn add_assign(&mut self, other: &LstmParams) -> Result<(), NumericsError> {
        self.input_gate.w_x.add_assign(&other.input_gate.w_x)?;
        self.input_gate.w_h.add_assign(&other.input_gate.w_h)?;
        self.input_gate.b.add_assign(&other.input_gate.b)?;
        self.forget_gate.w_x.add_assign(&other.forget_gate.w_x)?;
        self.forget_gate.w_h.add_assign(&other.forget_gate.w_h)?;
        self.forget_gate.b.add_assign(&other.forget_gate.b)?;
        self.candidate.w_x.add_assign(&other.candidate.w_x)?;
        self.candidate.w_h.add_assign(&other.candidate.w_h)?;
        self.candidate.b.add_assign(&other.candidate.b)?;
        self.output_gate.w_x.add_assign(&other.output_gate.w_x)?;
        self.output_gate.w_h.add_assign(&other.output_gate.w_h)?;
        self.output_gate.b.add_assign(&other.output_gate.b)?;
        self.w_out.add_assign(&other.w_out)?;
        self.b_out += other.b_out;
        Ok(())
    }

    pub fn scale_in_place(&mut self, factor: f64) {
        for (_, seg) in self.segments_mut() {
            for v in seg {
                *v *= factor;
            }
        }
    }

    /// Euclidean norm over every parameter entry.
    pub fn global_norm(&self) -> f64 {
        self.segments()
            .iter()
            .flat_map(|(_, s)| s.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn same_shape(&self, other: &LstmParams) -> bool {
        self.input_dim() == other.input_dim() && self.hidden_dim() == other.hidden_dim()
    }
}

/// Initialize parameters: weights uniform in (-1/sqrt(fan_in), +1/sqrt(fan_in)),
/// forget-gate bias 1.0, every other bias 0. Draw order is gates i, f, c, o
/// (w_x then w_h per gate) followed by w_out, so a given seed always yields
/// the same parameters.
pub fn init_params(rng: &mut Rng, input_dim: usize, hidden: usize) -> LstmParams {
    let scale_x = 1.0 / (input_dim as f64).sqrt();
    let scale_h = 1.0 / (hidden as f64).sqrt();
    let gate = |rng: &mut Rng, forget: bool| GateParams {
        w_x: Matrix::random(rng, hidden, input_dim, scale_x),
        w_h: Matrix::random(rng, hidden, hidden, scale_h),
        b: if forget {
            Vector::from_vec(vec![1.0; hidden])
        } else {
            Vector::zeros(hidden)
        },
    };
    LstmParams {
        input_gate: gate(rng, false),
        forget_gate: gate(rng, true),
        candidate: gate(rng, false),
        output_gate: gate(rng, false),
        w_out: Vector::random(rng, hidden, scale_h),
        b_out: 0.0,
    }
}

/// Hidden and cell state at one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vector,
    pub c: Vector,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: Vector::zeros(hidden),
            c: Vector::zeros(hidden),
        }
    }
}

/// Post-activation gate values for one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct GateActivations {
    pub input: Vector,
    pub forget: Vector,
    pub output: Vector,
    pub candidate: Vector,
}

/// Everything the backward pass needs about one timestep.
#[derive(Debug, Clone)]
pub struct StepCache {
    pub x: Vector,
    pub h_prev: Vector,
    pub c_prev: Vector,
    pub gates: GateActivations,
    /// Pre-activation of the candidate (used to keep relu gradient checks
    /// away from the kink).
    pub candidate_pre: Vector,
    pub c: Vector,
    pub c_act: Vector,
}

/// Cache of a full forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub steps: Vec<StepCache>,
    pub dropout_mask: Option<Vector>,
    pub h_dropped: Vector,
    pub prob: f64,
    pub activation: Activation,
}

fn step(
    params: &LstmParams,
    activation: Activation,
    x: &Vector,
    prev: &LstmState,
    step_index: usize,
) -> Result<StepCache, LstmError> {
    let input = params.input_gate.affine(x, &prev.h)?.map(sigmoid);
    let forget = params.forget_gate.affine(x, &prev.h)?.map(sigmoid);
    let candidate_pre = params.candidate.affine(x, &prev.h)?;
    let candidate = candidate_pre.map(|v| activation.apply(v));
    let output = params.output_gate.affine(x, &prev.h)?.map(sigmoid);

    let c = forget
        .hadamard(&prev.c)?
        .add(&input.hadamard(&candidate)?)?;
    let c_act = c.map(|v| activation.apply(v));
    let h = output.hadamard(&c_act)?;

    if c.iter().chain(h.iter()).any(|v| !v.is_finite()) {
        return Err(LstmError::NonFiniteState { step: step_index });
    }

    Ok(StepCache {
        x: x.clone(),
        h_prev: prev.h.clone(),
        c_prev: prev.c.clone(),
        gates: GateActivations {
            input,
            forget,
            output,
            candidate,
        },
        candidate_pre,
        c,
        c_act: c_act.clone(),
    })
}

/// One cell update, returning the new state and the gate activations.
pub fn cell_forward(
    params: &LstmParams,
    activation: Activation,
    x: &Vector,
    prev: &LstmState,
) -> Result<(LstmState, GateActivations), LstmError> {
    let cache = step(params, activation, x, prev, 0)?;
    let h = cache.gates.output.hadamard(&cache.c_act)?;
    Ok((LstmState { h, c: cache.c }, cache.gates))
}

/// Run the network over a sequence from a zero initial state. A dropout
/// mask (entries 0 or 1/(1-p)) must be supplied in training mode and
/// omitted for inference.
pub fn forward(
    params: &LstmParams,
    config: &NetConfig,
    sequence: &[Vector],
    dropout_mask: Option<&Vector>,
) -> Result<(f64, ForwardCache), LstmError> {
    if sequence.len() != config.seq_len {
        return Err(LstmError::SequenceLength {
            expected: config.seq_len,
            got: sequence.len(),
        });
    }
    let mut state = LstmState::zeros(params.hidden_dim());
    let mut steps = Vec::with_capacity(sequence.len());
    for (t, x) in sequence.iter().enumerate() {
        let cache = step(params, config.activation, x, &state, t)?;
        state = LstmState {
            h: cache.gates.output.hadamard(&cache.c_act)?,
            c: cache.c.clone(),
        };
        steps.push(cache);
    }

    let h_dropped = match dropout_mask {
        Some(mask) => state.h.hadamard(mask)?,
        None => state.h.clone(),
    };
    let logit = params.w_out.dot(&h_dropped)? + params.b_out;
    let prob = sigmoid(logit);

    Ok((
        prob,
        ForwardCache {
            steps,
            dropout_mask: dropout_mask.cloned(),
            h_dropped,
            prob,
            activation: config.activation,
        },
    ))
}

/// Inference-mode probability that the sequence is an attack. Deterministic
/// and independent of the dropout configuration.
pub fn predict(
    params: &LstmParams,
    config: &NetConfig,
    sequence: &[Vector],
) -> Result<f64, LstmError> {
    Ok(forward(params, config, sequence, None)?.0)
}

/// Sample an inverted-dropout mask: each entry is 0 with probability `rate`,
/// otherwise 1/(1-rate), so the masked activation is unbiased in expectation.
pub fn sample_dropout_mask(rng: &mut Rng, hidden: usize, rate: f64) -> Vector {
    let keep_scale = 1.0 / (1.0 - rate);
    Vector::from_vec(
        (0..hidden)
            .map(|_| {
                if rng.next_f64() < rate {
                    0.0
                } else {
                    keep_scale
                }
            })
            .collect(),
    )
}

/// Exact gradients of the binary cross-entropy loss at (p, y) with respect
/// to every parameter, backpropagated through the dropout mask and all
/// timesteps.
pub fn backward(
    params: &LstmParams,
    cache: &ForwardCache,
    y: bool,
) -> Result<LstmParams, LstmError> {
    let hidden = params.hidden_dim();
    let input_dim = params.input_dim();
    if cache.steps.is_empty() {
        return Err(LstmError::CacheMismatch("cache holds no timesteps".into()));
    }
    for (t, s) in cache.steps.iter().enumerate() {
        if s.x.len() != input_dim || s.h_prev.len() != hidden {
            return Err(LstmError::CacheMismatch(format!(
                "step {t} shapes ({}, {}) do not fit parameters ({input_dim}, {hidden})",
                s.x.len(),
                s.h_prev.len()
            )));
        }
    }
    if let Some(mask) = &cache.dropout_mask {
        if mask.len() != hidden {
            return Err(LstmError::CacheMismatch(format!(
                "dropout mask length {} does not fit hidden size {hidden}",
                mask.len()
            )));
        }
    }

    let act = cache.activation;
    let mut grads = LstmParams::zeros(input_dim, hidden);
    let target = if y { 1.0 } else { 0.0 };

    // head: d(loss)/d(logit) = p - y for sigmoid + binary cross-entropy
    let d_logit = cache.prob - target;
    grads.w_out = cache.h_dropped.scale(d_logit);
    grads.b_out = d_logit;

    let d_h_dropped = params.w_out.scale(d_logit);
    let mut dh = match &cache.dropout_mask {
        Some(mask) => d_h_dropped.hadamard(mask)?,
        None => d_h_dropped,
    };
    let mut dc = Vector::zeros(hidden);

    for s in cache.steps.iter().rev() {
        let g = &s.gates;

        // h = o * act(c)
        let d_o_pre = dh
            .hadamard(&s.c_act)?
            .hadamard(&g.output.map(|v| v * (1.0 - v)))?;
        dc.add_assign(
            &dh.hadamard(&g.output)?
                .hadamard(&s.c_act.map(|v| act.derivative_from_output(v)))?,
        )?;

        // c = f * c_prev + i * g
        let d_i_pre = dc
            .hadamard(&g.candidate)?
            .hadamard(&g.input.map(|v| v * (1.0 - v)))?;
        let d_f_pre = dc
            .hadamard(&s.c_prev)?
            .hadamard(&g.forget.map(|v| v * (1.0 - v)))?;
        let d_c_pre = dc
            .hadamard(&g.input)?
            .hadamard(&g.candidate.map(|v| act.derivative_from_output(v)))?;

        for (gate_grads, d_pre) in [
            (&mut grads.input_gate, &d_i_pre),
            (&mut grads.forget_gate, &d_f_pre),
            (&mut grads.candidate, &d_c_pre),
            (&mut grads.output_gate, &d_o_pre),
        ] {
            gate_grads.w_x.add_assign(&outer(d_pre, &s.x))?;
            gate_grads.w_h.add_assign(&outer(d_pre, &s.h_prev))?;
            gate_grads.b.add_assign(d_pre)?;
        }

        // propagate to the previous timestep
        let mut dh_prev = params.input_gate.w_h.matvec_transpose(&d_i_pre)?;
        dh_prev.add_assign(&params.forget_gate.w_h.matvec_transpose(&d_f_pre)?)?;
        dh_prev.add_assign(&params.candidate.w_h.matvec_transpose(&d_c_pre)?)?;
        dh_prev.add_assign(&params.output_gate.w_h.matvec_transpose(&d_o_pre)?)?;

        dh = dh_prev;
        dc = dc.hadamard(&g.forget)?;
    }

    Ok(grads)
}
