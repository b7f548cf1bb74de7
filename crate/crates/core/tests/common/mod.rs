#![allow(dead_code)]

use fuelgauge::nn::{Architecture, Block, LayerParams, Matrix};
use fuelgauge::rng;
use rand::Rng;

/// Straight-loop forward pass written from the layer definitions, used as an
/// oracle for the library kernels.
pub fn naive_forward(params: &LayerParams, window: &Matrix) -> f64 {
    let a = *params.arch();
    let (d, c, w) = (a.hidden_dim, a.channels, a.window);
    let k = params.block(Block::Depthwise);
    let pw = params.block(Block::PointwiseWeights);
    let pb = params.block(Block::PointwiseBias);
    let w1 = params.block(Block::MlpW1);
    let b1 = params.block(Block::MlpB1);
    let w2 = params.block(Block::MlpW2);
    let b2 = params.block(Block::MlpB2)[0];

    let mut dw = vec![0.0; d];
    for j in 0..d {
        for t in 0..w {
            dw[j] += k[t * d + j] * window.get(t, j);
        }
    }
    let mut signal = vec![0.0; c];
    for ch in 0..c {
        let mut acc = pb[ch];
        for j in 0..d {
            acc += pw[j * c + ch] * dw[j];
        }
        signal[ch] = acc.tanh();
    }
    let mut logit = b2;
    for o in 0..c {
        let mut acc = b1[o];
        for i in 0..c {
            acc += w1[o * c + i] * signal[i];
        }
        logit += w2[o] * acc.tanh();
    }
    1.0 / (1.0 + (-logit).exp())
}

/// Random architecture, parameters, and window.
pub fn random_case(seed: u64) -> (LayerParams, Matrix) {
    let mut r = rng::stream(seed, "test-case");
    let arch = Architecture::new(r.random_range(1..7), r.random_range(1..6), r.random_range(1..9)).unwrap();
    let mut params = LayerParams::zeros(arch);
    for v in params.as_mut_slice() {
        *v = r.random_range(-1.0..1.0);
    }
    let data = (0..arch.window * arch.hidden_dim)
        .map(|_| r.random_range(-1.5..1.5))
        .collect();
    (params, Matrix::from_vec(arch.window, arch.hidden_dim, data).unwrap())
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
