//! Steering reasoning length by nudging the newest hidden state along the
//! gauge's input gradient.

mod sweep;

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gauge::GaugeModel;
use crate::nn::{forward_recorded, newest_row_gradient, Matrix};
use crate::traces::{History, Modulator};

pub use sweep::{eta_sweep, EtaSummary, SweepReport, SweepRun, SWEEP_RUNS_HEADER, SWEEP_SUMMARY_HEADER};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModulationMode {
    /// Push the fuel reading up (η > 0) or down (η < 0).
    ReadingAscent,
    /// Descend on `|reading − r_target|`.
    TargetSeek { r_target: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroGradPolicy {
    /// Leave the state unchanged.
    Skip,
    Error,
}

impl FromStr for ZeroGradPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "skip" => Ok(ZeroGradPolicy::Skip),
            "error" => Ok(ZeroGradPolicy::Error),
            other => Err(Error::param(format!("zero_grad_policy must be skip or error, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulationConfig {
    pub eta: f64,
    pub mode: ModulationMode,
    pub zero_grad_policy: ZeroGradPolicy,
}

impl Default for ModulationConfig {
    fn default() -> Self {
        Self {
            eta: 0.0,
            mode: ModulationMode::ReadingAscent,
            zero_grad_policy: ZeroGradPolicy::Skip,
        }
    }
}

impl ModulationConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.eta.is_finite() {
            return Err(Error::param(format!("eta must be finite, got {}", self.eta)));
        }
        if let ModulationMode::TargetSeek { r_target } = self.mode {
            if !(r_target > 0.0 && r_target < 1.0) {
                return Err(Error::param(format!("r_target must lie in (0, 1), got {r_target}")));
            }
        }
        Ok(())
    }
}

/// Gradient of the objective with respect to the newest window row: the
/// reading itself, or `|reading − r_target|` (zero subgradient at the kink).
pub fn input_gradient(model: &GaugeModel, window: &Matrix, mode: ModulationMode) -> Result<Vec<f64>> {
    let acts = forward_recorded(model.params(), window)?;
    let grad = newest_row_gradient(model.params(), &acts);
    Ok(match mode {
        ModulationMode::ReadingAscent => grad,
        ModulationMode::TargetSeek { r_target } => {
            let diff = acts.output() - r_target;
            let sign = if diff > 0.0 {
                1.0
            } else if diff < 0.0 {
                -1.0
            } else {
                0.0
            };
            grad.into_iter().map(|g| sign * g).collect()
        }
    })
}

/// Normalized displacement of length `|η|` for the newest row: ascent on the
/// reading, or descent on the target distance. `None` when there is nothing
/// to apply (η = 0, or a zero gradient under the skip policy).
pub fn modulation_delta(
    model: &GaugeModel,
    window: &Matrix,
    config: &ModulationConfig,
    step: usize,
) -> Result<Option<Vec<f64>>> {
    config.validate()?;
    if config.eta == 0.0 {
        return Ok(None);
    }
    let grad = input_gradient(model, window, config.mode)?;
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return match config.zero_grad_policy {
            ZeroGradPolicy::Skip => Ok(None),
            ZeroGradPolicy::Error => Err(Error::ZeroGradient { step }),
        };
    }
    let scale = match config.mode {
        ModulationMode::ReadingAscent => config.eta / norm,
        ModulationMode::TargetSeek { .. } => -config.eta / norm,
    };
    Ok(Some(grad.iter().map(|g| scale * g).collect()))
}

/// Newest row after applying [`modulation_delta`].
pub fn modulate_step(model: &GaugeModel, window: &Matrix, config: &ModulationConfig, step: usize) -> Result<Vec<f64>> {
    let mut newest = window.row(window.rows() - 1).to_vec();
    if let Some(delta) = modulation_delta(model, window, config, step)? {
        for (h, d) in newest.iter_mut().zip(&delta) {
            *h += d;
        }
    }
    Ok(newest)
}

/// Applies [`modulate_step`] to every row the closed-loop generator emits.
#[derive(Debug, Clone)]
pub struct GaugeModulator {
    model: GaugeModel,
    config: ModulationConfig,
}

impl GaugeModulator {
    pub fn new(model: GaugeModel, config: ModulationConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { model, config })
    }
}

impl Modulator for GaugeModulator {
    fn modulate(&mut self, step: usize, history: &History<'_>, current: &mut [f64]) -> Result<()> {
        if self.config.eta == 0.0 {
            return Ok(());
        }
        Error::check_dim("modulated state", self.model.arch().hidden_dim, current.len())?;
        let window = history.window_with(current, self.model.arch().window);
        let updated = modulate_step(&self.model, &window, &self.config, step)?;
        current.copy_from_slice(&updated);
        Ok(())
    }
}
