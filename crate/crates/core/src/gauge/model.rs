use std::path::Path;

use rand::Rng;

use crate::error::Result;
use crate::nn::{self, checkpoint, Architecture, LayerParams, Matrix};
use crate::traces::Trace;

/// The Stage-1 network: hidden-signal extractor (depthwise + pointwise conv)
/// followed by the fuel estimator (two-layer MLP with sigmoid output).
///
/// Immutable after training; share it across threads freely.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeModel {
    params: LayerParams,
}

impl GaugeModel {
    pub fn new(params: LayerParams) -> Self {
        Self { params }
    }

    pub fn zeros(arch: Architecture) -> Self {
        Self::new(LayerParams::zeros(arch))
    }

    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Self {
        Self::new(LayerParams::init(arch, rng))
    }

    pub fn arch(&self) -> &Architecture {
        self.params.arch()
    }

    pub fn params(&self) -> &LayerParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut LayerParams {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Fuel reading in `(0, 1)` for one `W×d` window.
    pub fn fuel_reading(&self, window: &Matrix) -> Result<f64> {
        nn::forward(&self.params, window)
    }

    /// Reading at every step of `trace`, with left-padded windows for the
    /// first `W − 1` steps.
    pub fn readings(&self, trace: &Trace) -> Result<Vec<f64>> {
        let arch = self.arch();
        crate::error::Error::check_dim("trace hidden dim", arch.hidden_dim, trace.dim())?;
        let mut window = Matrix::zeros(arch.window, arch.hidden_dim);
        (0..trace.len())
            .map(|t| {
                trace.fill_window(t, &mut window);
                self.fuel_reading(&window)
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(&self.params, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::new(checkpoint::load(path)?))
    }
}
