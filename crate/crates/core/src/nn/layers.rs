//! Forward kernels for the three layer types, plus the full-stack forward and
//! backward passes over a [`LayerParams`] buffer.
//!
//! Stack: `window (W×d) → depthwise (d) → pointwise + tanh (C) → dense + tanh (C)
//! → dense + sigmoid (1)`.

use crate::error::{Error, Result};

use super::matrix::Matrix;
use super::params::{Block, LayerParams};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `out[c] = Σ_t kernel[t][c] · window[t][c]`. The kernel is `W×d`, time-major.
pub fn depthwise_conv1d_forward(window: &Matrix, kernel: &Matrix) -> Result<Vec<f64>> {
    Error::check_dim("depthwise kernel width", kernel.rows(), window.rows())?;
    Error::check_dim("depthwise channels", kernel.cols(), window.cols())?;
    let mut out = vec![0.0; window.cols()];
    depthwise_into(window.as_slice(), kernel.as_slice(), window.cols(), &mut out);
    Ok(out)
}

/// `out = xᵀW + b` with `W` of shape `d×C`.
pub fn pointwise_conv1d_forward(x: &[f64], weights: &Matrix, bias: &[f64]) -> Result<Vec<f64>> {
    Error::check_dim("pointwise input", weights.rows(), x.len())?;
    Error::check_dim("pointwise bias", weights.cols(), bias.len())?;
    let mut out = bias.to_vec();
    pointwise_into(x, weights.as_slice(), &mut out);
    Ok(out)
}

/// `sigmoid(w2ᵀ · tanh(W1 x + b1) + b2)` with `W1` of shape `C×C` (out, in).
pub fn mlp_forward(x: &[f64], w1: &Matrix, b1: &[f64], w2: &[f64], b2: f64) -> Result<f64> {
    Error::check_dim("mlp input", w1.cols(), x.len())?;
    Error::check_dim("mlp bias", w1.rows(), b1.len())?;
    Error::check_dim("mlp output weights", w1.rows(), w2.len())?;
    let mut hidden = vec![0.0; w1.rows()];
    dense_tanh_into(x, w1.as_slice(), b1, &mut hidden);
    Ok(sigmoid(dot(w2, &hidden) + b2))
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn depthwise_into(window: &[f64], kernel: &[f64], d: usize, out: &mut [f64]) {
    out.fill(0.0);
    for (x_row, k_row) in window.chunks_exact(d).zip(kernel.chunks_exact(d)) {
        for ((o, x), k) in out.iter_mut().zip(x_row).zip(k_row) {
            *o += k * x;
        }
    }
}

/// Accumulates `xᵀW` into `out` (which should already hold the bias).
fn pointwise_into(x: &[f64], weights: &[f64], out: &mut [f64]) {
    let c = out.len();
    for (xi, w_row) in x.iter().zip(weights.chunks_exact(c)) {
        for (o, w) in out.iter_mut().zip(w_row) {
            *o += xi * w;
        }
    }
}

fn dense_tanh_into(x: &[f64], w: &[f64], b: &[f64], out: &mut [f64]) {
    let n_in = x.len();
    for ((o, w_row), bias) in out.iter_mut().zip(w.chunks_exact(n_in)).zip(b) {
        *o = (dot(w_row, x) + bias).tanh();
    }
}

fn check_window(params: &LayerParams, window: &Matrix) -> Result<()> {
    let arch = params.arch();
    Error::check_dim("window rows", arch.window, window.rows())?;
    Error::check_dim("window hidden dim", arch.hidden_dim, window.cols())
}

/// Intermediate values recorded by a forward pass, needed for backward.
#[derive(Debug, Clone)]
pub struct Activations {
    window: Vec<f64>,
    depthwise: Vec<f64>,
    signal: Vec<f64>,
    hidden: Vec<f64>,
    output: f64,
}

impl Activations {
    pub fn output(&self) -> f64 {
        self.output
    }

    /// The pointwise-layer output (post activation).
    pub fn signal(&self) -> &[f64] {
        &self.signal
    }
}

/// Full-stack forward pass without recording.
pub fn forward(params: &LayerParams, window: &Matrix) -> Result<f64> {
    Ok(forward_recorded(params, window)?.output)
}

pub fn forward_recorded(params: &LayerParams, window: &Matrix) -> Result<Activations> {
    check_window(params, window)?;
    let arch = params.arch();
    let mut depthwise = vec![0.0; arch.hidden_dim];
    depthwise_into(
        window.as_slice(),
        params.block(Block::Depthwise),
        arch.hidden_dim,
        &mut depthwise,
    );

    let mut signal = params.block(Block::PointwiseBias).to_vec();
    pointwise_into(&depthwise, params.block(Block::PointwiseWeights), &mut signal);
    for s in &mut signal {
        *s = s.tanh();
    }

    let mut hidden = vec![0.0; arch.channels];
    dense_tanh_into(
        &signal,
        params.block(Block::MlpW1),
        params.block(Block::MlpB1),
        &mut hidden,
    );
    let logit = dot(params.block(Block::MlpW2), &hidden) + params.block(Block::MlpB2)[0];
    Ok(Activations {
        window: window.as_slice().to_vec(),
        depthwise,
        signal,
        hidden,
        output: sigmoid(logit),
    })
}

/// Backward pass from `∂loss/∂output`.
///
/// Parameter gradients are *accumulated* into `grads`; the window gradient, if
/// requested, is overwritten.
pub fn backward(
    params: &LayerParams,
    acts: &Activations,
    upstream: f64,
    grads: &mut LayerParams,
    input_grad: Option<&mut Matrix>,
) -> Result<()> {
    let arch = *params.arch();
    if grads.arch() != &arch {
        return Err(Error::Dimension {
            context: "gradient buffer",
            expected: arch.param_count(),
            actual: grads.len(),
        });
    }
    let (d, c) = (arch.hidden_dim, arch.channels);

    let out = acts.output;
    let d_logit = upstream * out * (1.0 - out);
    grads.block_mut(Block::MlpB2)[0] += d_logit;

    let w2 = params.block(Block::MlpW2);
    let mut d_pre_hidden = vec![0.0; c];
    {
        let g_w2 = grads.block_mut(Block::MlpW2);
        for j in 0..c {
            g_w2[j] += d_logit * acts.hidden[j];
            let h = acts.hidden[j];
            d_pre_hidden[j] = d_logit * w2[j] * (1.0 - h * h);
        }
    }
    {
        let g_b1 = grads.block_mut(Block::MlpB1);
        for (g, v) in g_b1.iter_mut().zip(&d_pre_hidden) {
            *g += v;
        }
    }
    {
        let g_w1 = grads.block_mut(Block::MlpW1);
        for (o, g_row) in g_w1.chunks_exact_mut(c).enumerate() {
            let delta = d_pre_hidden[o];
            for (g, s) in g_row.iter_mut().zip(&acts.signal) {
                *g += delta * s;
            }
        }
    }

    let w1 = params.block(Block::MlpW1);
    let mut d_pre_signal = vec![0.0; c];
    for (o, w_row) in w1.chunks_exact(c).enumerate() {
        let delta = d_pre_hidden[o];
        for (acc, w) in d_pre_signal.iter_mut().zip(w_row) {
            *acc += delta * w;
        }
    }
    for (v, s) in d_pre_signal.iter_mut().zip(&acts.signal) {
        *v *= 1.0 - s * s;
    }
    {
        let g_pb = grads.block_mut(Block::PointwiseBias);
        for (g, v) in g_pb.iter_mut().zip(&d_pre_signal) {
            *g += v;
        }
    }
    {
        let g_pw = grads.block_mut(Block::PointwiseWeights);
        for (i, g_row) in g_pw.chunks_exact_mut(c).enumerate() {
            let x = acts.depthwise[i];
            for (g, delta) in g_row.iter_mut().zip(&d_pre_signal) {
                *g += x * delta;
            }
        }
    }

    let pw = params.block(Block::PointwiseWeights);
    let d_depthwise: Vec<f64> = pw
        .chunks_exact(c)
        .map(|w_row| dot(w_row, &d_pre_signal))
        .collect();

    {
        let g_k = grads.block_mut(Block::Depthwise);
        for (g_row, x_row) in g_k.chunks_exact_mut(d).zip(acts.window.chunks_exact(d)) {
            for ((g, x), delta) in g_row.iter_mut().zip(x_row).zip(&d_depthwise) {
                *g += delta * x;
            }
        }
    }

    if let Some(input_grad) = input_grad {
        Error::check_dim("input gradient rows", arch.window, input_grad.rows())?;
        Error::check_dim("input gradient cols", d, input_grad.cols())?;
        let kernel = params.block(Block::Depthwise);
        for (g_row, k_row) in input_grad
            .as_mut_slice()
            .chunks_exact_mut(d)
            .zip(kernel.chunks_exact(d))
        {
            for ((g, k), delta) in g_row.iter_mut().zip(k_row).zip(&d_depthwise) {
                *g = delta * k;
            }
        }
    }
    Ok(())
}

/// Gradient of the output with respect to the newest window row only.
pub fn newest_row_gradient(params: &LayerParams, acts: &Activations) -> Vec<f64> {
    let arch = *params.arch();
    let mut scratch = LayerParams::zeros(arch);
    let mut input_grad = Matrix::zeros(arch.window, arch.hidden_dim);
    backward(params, acts, 1.0, &mut scratch, Some(&mut input_grad))
        .expect("shapes validated by forward");
    input_grad.row(arch.window - 1).to_vec()
}

/// Records one forward pass so that `backward` can be called on it.
#[derive(Debug, Default)]
pub struct Tape {
    record: Option<Activations>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, params: &LayerParams, window: &Matrix) -> Result<f64> {
        let acts = forward_recorded(params, window)?;
        let out = acts.output;
        self.record = Some(acts);
        Ok(out)
    }

    pub fn backward(
        &self,
        params: &LayerParams,
        upstream: f64,
        grads: &mut LayerParams,
        input_grad: Option<&mut Matrix>,
    ) -> Result<()> {
        let acts = self
            .record
            .as_ref()
            .ok_or(Error::State("backward called before forward"))?;
        backward(params, acts, upstream, grads, input_grad)
    }

    pub fn activations(&self) -> Option<&Activations> {
        self.record.as_ref()
    }
}
