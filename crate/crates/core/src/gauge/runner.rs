use crate::error::{Error, Result};
use crate::traces::Trace;

use super::model::GaugeModel;
use super::series::{FuelSeries, LengthEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Emit a record every `stride` steps. Readings are still taken at every
    /// step, so coarser strides are exact subsets of finer ones.
    pub stride: usize,
    pub max_len: usize,
    /// Fit only the most recent readings instead of all of them.
    pub fit_window: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            stride: 1,
            max_len: 16_384,
            fit_window: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaugeRecord {
    pub step: usize,
    pub fuel: f64,
    pub estimate: LengthEstimate,
}

/// Stage 2 over an externally supplied reading sequence (`readings[t]` is the
/// fuel at step `t`).
pub fn records_from_readings(readings: &[f64], opts: &RunOptions) -> Result<Vec<GaugeRecord>> {
    if readings.is_empty() {
        return Err(Error::param("cannot run the gauge over an empty trace"));
    }
    if opts.stride == 0 {
        return Err(Error::param("stride must be ≥ 1"));
    }
    let mut series = match opts.fit_window {
        Some(w) => FuelSeries::sliding(w)?,
        None => FuelSeries::new(),
    };
    let mut out = Vec::with_capacity(readings.len() / opts.stride + 1);
    for (step, &fuel) in readings.iter().enumerate() {
        series.push(step, fuel)?;
        if step % opts.stride == 0 {
            out.push(GaugeRecord {
                step,
                fuel,
                estimate: series.estimate(step, opts.max_len),
            });
        }
    }
    Ok(out)
}

/// Full two-stage gauge over one trace.
pub fn run_gauge_over_trace(model: &GaugeModel, trace: &Trace, opts: &RunOptions) -> Result<Vec<GaugeRecord>> {
    if trace.is_empty() {
        return Err(Error::param("cannot run the gauge over an empty trace"));
    }
    let readings = model.readings(trace)?;
    records_from_readings(&readings, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_readings_recover_length() {
        for n in [9usize, 100, 2500] {
            let readings: Vec<f64> = (0..n).map(|t| 1.0 - t as f64 / n as f64).collect();
            let recs = records_from_readings(&readings, &RunOptions::default()).unwrap();
            assert!(recs[0].estimate.degenerate);
            for r in &recs[1..] {
                let rel = (r.estimate.predicted_length - n as f64).abs() / n as f64;
                assert!(rel < 1e-6, "n={n} step={} got {}", r.step, r.estimate.predicted_length);
                assert!(!r.estimate.degenerate);
            }
        }
    }

    #[test]
    fn stride_subsets_are_exact() {
        let readings: Vec<f64> = (0..103)
            .map(|t| 1.0 - t as f64 / 90.0 + 0.02 * ((t * 31 % 17) as f64 / 17.0 - 0.5))
            .collect();
        let fine = records_from_readings(&readings, &RunOptions::default()).unwrap();
        let coarse = records_from_readings(&readings, &RunOptions { stride: 4, ..RunOptions::default() }).unwrap();
        let expected: Vec<_> = fine.iter().filter(|r| r.step % 4 == 0).copied().collect();
        assert_eq!(coarse, expected);
    }

    #[test]
    fn empty_and_zero_stride() {
        assert!(records_from_readings(&[], &RunOptions::default()).is_err());
        assert!(records_from_readings(&[1.0], &RunOptions { stride: 0, ..RunOptions::default() }).is_err());
    }
}
