//! Minimal dense numerical kernel for the gauge network: three layer types with
//! hand-written backward passes, losses, AdamW, and the warm-up cosine schedule.

pub mod checkpoint;
pub mod layers;
pub mod loss;
mod matrix;
pub mod optim;
mod params;

pub use layers::{
    backward, depthwise_conv1d_forward, forward, forward_recorded, mlp_forward,
    newest_row_gradient, pointwise_conv1d_forward, sigmoid, Activations, Tape,
};
pub use loss::{smooth_l1, smooth_l1_grad, Loss};
pub use matrix::Matrix;
pub use optim::{cosine_warmup_lr, AdamW};
pub use params::{Architecture, Block, LayerParams};
