use crate::error::Result;
use crate::nn::Matrix;
use crate::traces::Trace;

use super::model::GaugeModel;

/// Direct length baseline: the gauge network with its sigmoid output scaled
/// by `max_len` and read as a total length.
#[derive(Debug, Clone)]
pub struct DirectHead {
    model: GaugeModel,
    max_len: usize,
}

impl DirectHead {
    pub fn new(model: GaugeModel, max_len: usize) -> Self {
        Self { model, max_len }
    }

    pub fn model(&self) -> &GaugeModel {
        &self.model
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn predict(&self, window: &Matrix) -> Result<f64> {
        Ok(self.model.fuel_reading(window)? * self.max_len as f64)
    }

    pub fn predict_trace(&self, trace: &Trace) -> Result<Vec<f64>> {
        let scale = self.max_len as f64;
        Ok(self.model.readings(trace)?.into_iter().map(|r| r * scale).collect())
    }
}
