//! Stage 2: fit `r_t ≈ k·t + 1` through the fuel readings and extrapolate to
//! the zero crossing `N̂ = −1/k`.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Fuel readings of one trace with running sums for an O(1) slope fit.
#[derive(Debug, Clone, Default)]
pub struct FuelSeries {
    readings: VecDeque<(usize, f64)>,
    sum_tt: f64,
    sum_t_dev: f64,
    fit_window: Option<usize>,
}

impl FuelSeries {
    /// Fit over every reading since step 0.
    pub fn new() -> Self {
        Self::default()
    }

    /// Fit over only the most recent `window` readings.
    pub fn sliding(window: usize) -> Result<Self> {
        if window < 2 {
            return Err(Error::param("sliding fit window must hold ≥ 2 readings"));
        }
        Ok(Self {
            fit_window: Some(window),
            ..Self::default()
        })
    }

    pub fn push(&mut self, step: usize, fuel: f64) -> Result<()> {
        if let Some(&(last, _)) = self.readings.back() {
            if step <= last {
                return Err(Error::param(format!(
                    "fuel readings must have increasing steps ({step} after {last})"
                )));
            }
        }
        if !fuel.is_finite() {
            return Err(Error::param(format!("non-finite fuel reading at step {step}")));
        }
        let t = step as f64;
        self.sum_tt += t * t;
        self.sum_t_dev += t * (fuel - 1.0);
        self.readings.push_back((step, fuel));
        if let Some(w) = self.fit_window {
            while self.readings.len() > w {
                let (old, r) = self.readings.pop_front().expect("non-empty");
                let t = old as f64;
                self.sum_tt -= t * t;
                self.sum_t_dev -= t * (r - 1.0);
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.readings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.readings.is_empty()
    }

    pub fn readings(&self) -> impl Iterator<Item = &(usize, f64)> {
        self.readings.iter()
    }

    /// `(Σt², Σt(r_t − 1))`.
    pub fn sums(&self) -> (f64, f64) {
        (self.sum_tt, self.sum_t_dev)
    }

    /// Least-squares slope of lines through `(0, 1)`:
    /// `k = Σ t·(r_t − 1) / Σ t²`.
    pub fn fit_slope(&self) -> Result<f64> {
        if self.readings.len() < 2 || self.sum_tt <= 0.0 {
            return Err(Error::InsufficientData(format!(
                "slope fit needs ≥ 2 readings with a nonzero step, have {}",
                self.readings.len()
            )));
        }
        Ok(self.sum_t_dev / self.sum_tt)
    }

    /// Current length estimate at `step`; insufficient data is reported as a
    /// degenerate estimate rather than an error.
    pub fn estimate(&self, step: usize, max_len: usize) -> LengthEstimate {
        match self.fit_slope() {
            Ok(k) => predict_length(k, step, max_len),
            Err(_) => LengthEstimate {
                predicted_length: max_len.max(step + 1) as f64,
                degenerate: true,
                step,
            },
        }
    }
}

/// A CoT length forecast made at `step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthEstimate {
    pub predicted_length: f64,
    /// Slope was non-negative or there was not enough data to fit one.
    pub degenerate: bool,
    pub step: usize,
}

/// `N̂ = −1/k` clamped to `[step + 1, max_len]`; `k ≥ 0` yields a degenerate
/// estimate of `max_len`.
pub fn predict_length(slope: f64, step: usize, max_len: usize) -> LengthEstimate {
    let lo = (step + 1) as f64;
    let hi = (max_len as f64).max(lo);
    if slope < 0.0 {
        LengthEstimate {
            predicted_length: (-1.0 / slope).clamp(lo, hi),
            degenerate: false,
            step,
        }
    } else {
        LengthEstimate {
            predicted_length: hi,
            degenerate: true,
            step,
        }
    }
}
