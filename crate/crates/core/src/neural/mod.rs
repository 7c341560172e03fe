//! Residual sinusoidal MLP: configuration, flat parameter storage, forward
//! passes (deterministic and dropout-perturbed), and the matching hand-derived
//! reverse-mode backward pass.
//!
//! Every layer computes `sin(omega0 * (W x + b))` except the final layer,
//! which is affine. A residual block is two sine layers plus an identity
//! skip: `block(x) = x + L2(L1(x))`. Dropout, where placed, is inverted
//! (mask ~ Bernoulli(1-p) scaled by 1/(1-p)) and applies to the block
//! output, so the deterministic pass needs no rescaling.

pub mod optim;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
    #[error("non-finite activation in layer {layer}")]
    NonFiniteActivation { layer: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite parameter update at index {0}")]
    NonFiniteUpdate(usize),
}

/// Which residual blocks carry a dropout layer on their output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropoutPlacement {
    None,
    LastBlock,
    LastHalf,
    AllBlocks,
}

impl DropoutPlacement {
    /// Whether block `index` (0-based) of `num_blocks` carries dropout.
    /// "Last half" is the trailing `ceil(n/2)` blocks.
    pub fn covers(&self, index: usize, num_blocks: usize) -> bool {
        match self {
            Self::None => false,
            Self::LastBlock => index + 1 == num_blocks,
            Self::LastHalf => index >= num_blocks / 2,
            Self::AllBlocks => true,
        }
    }
}

/// Architecture description of the residual sine network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_width: usize,
    pub num_res_blocks: usize,
    #[serde(default = "default_omega0")]
    pub omega0: f64,
    #[serde(default = "default_placement")]
    pub dropout_placement: DropoutPlacement,
    #[serde(default)]
    pub dropout_p_train: f64,
    #[serde(default)]
    pub dropout_p_test: f64,
}

fn default_omega0() -> f64 {
    30.0
}

fn default_placement() -> DropoutPlacement {
    DropoutPlacement::None
}

impl NetworkConfig {
    /// Reference architecture for dropout-based sampling: width 120 / 14
    /// blocks in 3D, width 100 / 10 blocks in 2D, dropout on the last block
    /// with train probability 0.05 and test probability 0.1.
    pub fn mcdropout_default(input_dim: usize, output_dim: usize) -> Self {
        let three_d = input_dim == 3;
        Self {
            input_dim,
            output_dim,
            hidden_width: if three_d { 120 } else { 100 },
            num_res_blocks: if three_d { 14 } else { 10 },
            omega0: default_omega0(),
            dropout_placement: DropoutPlacement::LastBlock,
            dropout_p_train: 0.05,
            dropout_p_test: 0.1,
        }
    }

    /// Same architecture without dropout, as trained for ensemble members.
    pub fn ensemble_default(input_dim: usize, output_dim: usize) -> Self {
        Self {
            dropout_placement: DropoutPlacement::None,
            dropout_p_train: 0.0,
            dropout_p_test: 0.0,
            ..Self::mcdropout_default(input_dim, output_dim)
        }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if !(2..=3).contains(&self.input_dim) {
            return Err(NeuralError::InvalidConfig(format!(
                "input_dim must be 2 or 3, got {}",
                self.input_dim
            )));
        }
        if !(2..=3).contains(&self.output_dim) {
            return Err(NeuralError::InvalidConfig(format!(
                "output_dim must be 2 or 3, got {}",
                self.output_dim
            )));
        }
        if self.hidden_width == 0 || self.num_res_blocks == 0 {
            return Err(NeuralError::InvalidConfig(
                "hidden_width and num_res_blocks must be at least 1".into(),
            ));
        }
        if !(self.omega0.is_finite() && self.omega0 > 0.0) {
            return Err(NeuralError::InvalidConfig("omega0 must be positive".into()));
        }
        for (name, p) in [
            ("dropout_p_train", self.dropout_p_train),
            ("dropout_p_test", self.dropout_p_test),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(NeuralError::InvalidConfig(format!(
                    "{name} must lie in [0, 1), got {p}"
                )));
            }
        }
        Ok(())
    }

    /// Total scalar parameter count implied by the architecture.
    pub fn param_count(&self) -> usize {
        layer_shapes(self).last().map_or(0, |s| s.weight_offset + s.len())
    }

    /// Number of sine-activated linear layers plus the final affine layer.
    pub fn layer_count(&self) -> usize {
        2 * self.num_res_blocks + 2
    }
}

/// Shape and flat-storage offsets of one linear layer.
///
/// Canonical parameter order: input layer W then b; for each residual block
/// in order, L1's W,b then L2's W,b; output layer W,b. Weight matrices are
/// row-major `[out][in]`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerShape {
    pub weight_offset: usize,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl LayerShape {
    pub fn bias_offset(&self) -> usize {
        self.weight_offset + self.in_dim * self.out_dim
    }

    pub fn len(&self) -> usize {
        self.in_dim * self.out_dim + self.out_dim
    }
}

pub(crate) fn layer_shapes(config: &NetworkConfig) -> Vec<LayerShape> {
    let w = config.hidden_width;
    let mut shapes = Vec::with_capacity(config.layer_count());
    let mut offset = 0;
    let mut push = |in_dim: usize, out_dim: usize, offset: &mut usize| {
        let s = LayerShape {
            weight_offset: *offset,
            in_dim,
            out_dim,
        };
        *offset += s.len();
        shapes.push(s);
    };
    push(config.input_dim, w, &mut offset);
    for _ in 0..config.num_res_blocks {
        push(w, w, &mut offset);
        push(w, w, &mut offset);
    }
    push(w, config.output_dim, &mut offset);
    shapes
}

/// Flat storage for all network weights and biases in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters(Vec<f64>);

impl Parameters {
    pub fn from_vec(config: &NetworkConfig, values: Vec<f64>) -> Result<Self, NeuralError> {
        let expected = config.param_count();
        if values.len() != expected {
            return Err(NeuralError::ShapeMismatch(format!(
                "expected {expected} parameters, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(NeuralError::InvalidConfig(
                "parameters must be finite".into(),
            ));
        }
        Ok(Self(values))
    }

    pub fn zeros(config: &NetworkConfig) -> Self {
        Self(vec![0.0; config.param_count()])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    fn weights(&self, shape: &LayerShape) -> &[f64] {
        &self.0[shape.weight_offset..shape.bias_offset()]
    }

    fn biases(&self, shape: &LayerShape) -> &[f64] {
        &self.0[shape.bias_offset()..shape.weight_offset + shape.len()]
    }
}

/// SIREN-style initialization: first-layer weights uniform in [-1/d, 1/d],
/// all later weights uniform in [-sqrt(6/fan_in)/omega0, +sqrt(6/fan_in)/omega0],
/// biases zero. Deterministic for a given seed.
pub fn init_parameters(config: &NetworkConfig, seed: u64) -> Result<Parameters, NeuralError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes = layer_shapes(config);
    let mut values = vec![0.0; config.param_count()];
    for (layer, shape) in shapes.iter().enumerate() {
        let limit = if layer == 0 {
            1.0 / shape.in_dim as f64
        } else {
            (6.0 / shape.in_dim as f64).sqrt() / config.omega0
        };
        for w in &mut values[shape.weight_offset..shape.bias_offset()] {
            *w = rng.gen_range(-limit..limit);
        }
        // biases stay zero
    }
    Ok(Parameters(values))
}

/// How a forward pass treats dropout.
pub enum ForwardMode<'a> {
    Deterministic,
    Dropout { p: f64, rng: &'a mut dyn RngCore },
}

/// Cached intermediate state of one forward pass, everything the backward
/// pass needs.
pub struct ForwardTrace {
    batch_size: usize,
    input: Vec<f64>,
    first_preact: Vec<f64>,
    /// `activations[0]` follows the input layer; `activations[j+1]` is the
    /// (post-dropout) output of block `j`.
    activations: Vec<Vec<f64>>,
    blocks: Vec<BlockTrace>,
}

struct BlockTrace {
    preact1: Vec<f64>,
    act1: Vec<f64>,
    preact2: Vec<f64>,
    mask: Option<Vec<f64>>,
}

impl ForwardTrace {
    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Whether block `j` recorded a dropout mask.
    pub fn has_mask(&self, block: usize) -> bool {
        self.blocks[block].mask.is_some()
    }
}

/// `z[i,o] = b[o] + sum_k x[i,k] * w[o,k]` for row-major `x` (n x in) and
/// `w` (out x in).
fn linear_forward(x: &[f64], w: &[f64], b: &[f64], n: usize, in_dim: usize, out_dim: usize) -> Vec<f64> {
    let mut z = vec![0.0; n * out_dim];
    for i in 0..n {
        let xi = &x[i * in_dim..(i + 1) * in_dim];
        let zi = &mut z[i * out_dim..(i + 1) * out_dim];
        for o in 0..out_dim {
            zi[o] = b[o] + dot(xi, &w[o * in_dim..(o + 1) * in_dim]);
        }
    }
    z
}

/// `dx[i,k] += sum_o dz[i,o] * w[o,k]`
fn linear_backward_input(dz: &[f64], w: &[f64], n: usize, in_dim: usize, out_dim: usize, dx: &mut [f64]) {
    for i in 0..n {
        let dzi = &dz[i * out_dim..(i + 1) * out_dim];
        let dxi = &mut dx[i * in_dim..(i + 1) * in_dim];
        for o in 0..out_dim {
            axpy(dzi[o], &w[o * in_dim..(o + 1) * in_dim], dxi);
        }
    }
}

/// `dw[o,k] += sum_i dz[i,o] * x[i,k]`; `db[o] += sum_i dz[i,o]`
fn linear_backward_params(
    dz: &[f64],
    x: &[f64],
    n: usize,
    in_dim: usize,
    out_dim: usize,
    dw: &mut [f64],
    db: &mut [f64],
) {
    for i in 0..n {
        let dzi = &dz[i * out_dim..(i + 1) * out_dim];
        let xi = &x[i * in_dim..(i + 1) * in_dim];
        for o in 0..out_dim {
            db[o] += dzi[o];
            axpy(dzi[o], xi, &mut dw[o * in_dim..(o + 1) * in_dim]);
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let a4 = &a[c * 4..c * 4 + 4];
        let b4 = &b[c * 4..c * 4 + 4];
        acc[0] += a4[0] * b4[0];
        acc[1] += a4[1] * b4[1];
        acc[2] += a4[2] * b4[2];
        acc[3] += a4[3] * b4[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in chunks * 4..a.len() {
        s += a[k] * b[k];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    if alpha == 0.0 {
        return;
    }
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn check_finite(values: &[f64], layer: usize) -> Result<(), NeuralError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NeuralError::NonFiniteActivation { layer })
    }
}

/// Run the network on a batch of normalized coordinates (`n x input_dim`,
/// row-major). Returns predictions (`n x output_dim`) and the trace needed
/// by [`backward`].
pub fn forward(
    params: &Parameters,
    config: &NetworkConfig,
    batch: &[f64],
    mode: ForwardMode,
) -> Result<(Vec<f64>, ForwardTrace), NeuralError> {
    config.validate()?;
    if params.len() != config.param_count() {
        return Err(NeuralError::ShapeMismatch(format!(
            "parameter array has {} entries, architecture needs {}",
            params.len(),
            config.param_count()
        )));
    }
    if batch.len() % config.input_dim != 0 {
        return Err(NeuralError::ShapeMismatch(format!(
            "batch length {} is not a multiple of input_dim {}",
            batch.len(),
            config.input_dim
        )));
    }
    if batch.iter().any(|v| !v.is_finite()) {
        return Err(NeuralError::ShapeMismatch(
            "batch coordinates must be finite".into(),
        ));
    }
    let n = batch.len() / config.input_dim;
    let w = config.hidden_width;
    let omega0 = config.omega0;
    let shapes = layer_shapes(config);

    let (dropout_p, mut dropout_rng) = match mode {
        ForwardMode::Deterministic => (None, None),
        ForwardMode::Dropout { p, rng } => {
            if !(0.0..1.0).contains(&p) {
                return Err(NeuralError::InvalidConfig(format!(
                    "dropout probability must lie in [0, 1), got {p}"
                )));
            }
            (Some(p), Some(rng))
        }
    };

    let first = &shapes[0];
    let z0 = linear_forward(batch, params.weights(first), params.biases(first), n, config.input_dim, w);
    check_finite(&z0, 0)?;
    let a0: Vec<f64> = z0.iter().map(|z| (omega0 * z).sin()).collect();

    let mut activations = Vec::with_capacity(config.num_res_blocks + 1);
    activations.push(a0);
    let mut blocks = Vec::with_capacity(config.num_res_blocks);

    for j in 0..config.num_res_blocks {
        let s1 = &shapes[1 + 2 * j];
        let s2 = &shapes[2 + 2 * j];
        let u = activations.last().unwrap();

        let preact1 = linear_forward(u, params.weights(s1), params.biases(s1), n, w, w);
        check_finite(&preact1, 1 + 2 * j)?;
        let act1: Vec<f64> = preact1.iter().map(|z| (omega0 * z).sin()).collect();

        let preact2 = linear_forward(&act1, params.weights(s2), params.biases(s2), n, w, w);
        check_finite(&preact2, 2 + 2 * j)?;

        let mut out: Vec<f64> = u
            .iter()
            .zip(&preact2)
            .map(|(ui, z)| ui + (omega0 * z).sin())
            .collect();

        let mask = match (&dropout_p, config.dropout_placement.covers(j, config.num_res_blocks)) {
            (Some(p), true) => {
                let rng = dropout_rng.as_mut().unwrap();
                let keep_scale = 1.0 / (1.0 - p);
                let mask: Vec<f64> = (0..out.len())
                    .map(|_| if rng.gen::<f64>() < *p { 0.0 } else { keep_scale })
                    .collect();
                for (o, m) in out.iter_mut().zip(&mask) {
                    *o *= m;
                }
                Some(mask)
            }
            _ => None,
        };

        blocks.push(BlockTrace {
            preact1,
            act1,
            preact2,
            mask,
        });
        activations.push(out);
    }

    let last = shapes.last().unwrap();
    let predictions = linear_forward(
        activations.last().unwrap(),
        params.weights(last),
        params.biases(last),
        n,
        w,
        config.output_dim,
    );
    check_finite(&predictions, shapes.len() - 1)?;

    Ok((
        predictions,
        ForwardTrace {
            batch_size: n,
            input: batch.to_vec(),
            first_preact: z0,
            activations,
            blocks,
        },
    ))
}

/// Convenience wrapper for inference without dropout.
pub fn forward_deterministic(
    params: &Parameters,
    config: &NetworkConfig,
    batch: &[f64],
) -> Result<Vec<f64>, NeuralError> {
    forward(params, config, batch, ForwardMode::Deterministic).map(|(y, _)| y)
}

/// Exact gradients of the traced computation with respect to every
/// parameter, given `upstream = dLoss/dPredictions` (`n x output_dim`).
/// Skip connections add gradients; dropout masks gate them.
pub fn backward(
    trace: &ForwardTrace,
    params: &Parameters,
    config: &NetworkConfig,
    upstream: &[f64],
) -> Result<Vec<f64>, NeuralError> {
    let n = trace.batch_size;
    let w = config.hidden_width;
    let omega0 = config.omega0;
    if upstream.len() != n * config.output_dim {
        return Err(NeuralError::ShapeMismatch(format!(
            "upstream has {} entries, expected {} x {}",
            upstream.len(),
            n,
            config.output_dim
        )));
    }
    if trace.blocks.len() != config.num_res_blocks || params.len() != config.param_count() {
        return Err(NeuralError::ShapeMismatch(
            "trace does not match network config".into(),
        ));
    }
    let shapes = layer_shapes(config);
    let mut grads = vec![0.0; params.len()];

    // output layer
    let last = shapes.last().unwrap();
    let a_last = trace.activations.last().unwrap();
    {
        let (dw, rest) = grads[last.weight_offset..last.weight_offset + last.len()]
            .split_at_mut(last.in_dim * last.out_dim);
        linear_backward_params(upstream, a_last, n, w, config.output_dim, dw, rest);
    }
    let mut g = vec![0.0; n * w];
    linear_backward_input(upstream, params.weights(last), n, w, config.output_dim, &mut g);

    // residual blocks, deepest first
    let mut dz = vec![0.0; n * w];
    for j in (0..config.num_res_blocks).rev() {
        let s1 = &shapes[1 + 2 * j];
        let s2 = &shapes[2 + 2 * j];
        let block = &trace.blocks[j];
        let u = &trace.activations[j];

        if let Some(mask) = &block.mask {
            for (gi, m) in g.iter_mut().zip(mask) {
                *gi *= m;
            }
        }

        // through the second sine layer
        for ((d, gi), z) in dz.iter_mut().zip(&g).zip(&block.preact2) {
            *d = gi * omega0 * (omega0 * z).cos();
        }
        {
            let (dw, rest) = grads[s2.weight_offset..s2.weight_offset + s2.len()]
                .split_at_mut(s2.in_dim * s2.out_dim);
            linear_backward_params(&dz, &block.act1, n, w, w, dw, rest);
        }
        let mut da = vec![0.0; n * w];
        linear_backward_input(&dz, params.weights(s2), n, w, w, &mut da);

        // through the first sine layer
        for ((d, gi), z) in dz.iter_mut().zip(&da).zip(&block.preact1) {
            *d = gi * omega0 * (omega0 * z).cos();
        }
        {
            let (dw, rest) = grads[s1.weight_offset..s1.weight_offset + s1.len()]
                .split_at_mut(s1.in_dim * s1.out_dim);
            linear_backward_params(&dz, u, n, w, w, dw, rest);
        }
        // skip connection adds the block-output gradient to the input path
        linear_backward_input(&dz, params.weights(s1), n, w, w, &mut g);
    }

    // input layer
    let first = &shapes[0];
    for ((d, gi), z) in dz.iter_mut().zip(&g).zip(&trace.first_preact) {
        *d = gi * omega0 * (omega0 * z).cos();
    }
    {
        let (dw, rest) = grads[first.weight_offset..first.weight_offset + first.len()]
            .split_at_mut(first.in_dim * first.out_dim);
        linear_backward_params(&dz, &trace.input, n, config.input_dim, w, dw, rest);
    }

    Ok(grads)
}
