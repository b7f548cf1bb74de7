use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gauge::LengthEstimate;

/// Default on-demand block size, in tokens.
pub const HF_BLOCK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AllocEvent {
    /// Generation step (0-based) at which the allocation happens.
    pub step: usize,
    /// Capacity the policy asked for.
    pub requested: usize,
    /// Capacity held after the allocation.
    pub granted: usize,
}

/// Every allocation one request made while generating `len` tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationLog {
    pub policy: String,
    pub trace_id: String,
    pub len: usize,
    pub events: Vec<AllocEvent>,
}

impl AllocationLog {
    pub fn alloc_count(&self) -> usize {
        self.events.len()
    }

    pub fn final_capacity(&self) -> usize {
        self.events.last().map_or(0, |e| e.granted)
    }

    /// Over-allocation `granted − N` at the end of generation.
    pub fn waste(&self) -> usize {
        self.final_capacity().saturating_sub(self.len)
    }

    /// Capacity held while generating step `t` (token `t + 1`).
    pub fn capacity_at(&self, step: usize) -> usize {
        self.events
            .iter()
            .take_while(|e| e.step <= step)
            .last()
            .map_or(0, |e| e.granted)
    }

    /// Checks that capacity only grows and always covers consumption.
    pub fn check(&self) -> Result<()> {
        if self.len >= 1 && self.events.is_empty() {
            return Err(Error::State("allocation log without events"));
        }
        for pair in self.events.windows(2) {
            if pair[1].granted < pair[0].granted || pair[1].step <= pair[0].step {
                return Err(Error::State("allocation log not monotone"));
            }
        }
        for e in &self.events {
            if e.granted < e.step + 1 {
                return Err(Error::State("granted capacity below consumption"));
            }
        }
        // Between events capacity is constant, so checking just before each
        // event (and at the end) covers every step.
        for pair in self.events.windows(2) {
            if pair[0].granted < pair[1].step {
                return Err(Error::State("capacity exhausted before reallocation"));
            }
        }
        if self.final_capacity() < self.len {
            return Err(Error::State("final capacity below generated length"));
        }
        Ok(())
    }
}

/// Grow by one block whenever the next token does not fit.
pub fn simulate_hf(trace_id: &str, len: usize, block: usize) -> Result<AllocationLog> {
    if len == 0 || block == 0 {
        return Err(Error::param("HF simulation needs N ≥ 1 and block ≥ 1"));
    }
    let mut events = Vec::with_capacity(len.div_ceil(block));
    let mut granted = 0;
    for step in 0..len {
        if step + 1 > granted {
            granted += block;
            events.push(AllocEvent {
                step,
                requested: block,
                granted,
            });
        }
    }
    Ok(AllocationLog {
        policy: "hf".into(),
        trace_id: trace_id.into(),
        len,
        events,
    })
}

/// One-shot allocation of exactly `len` tokens.
pub fn simulate_oracle(trace_id: &str, len: usize) -> Result<AllocationLog> {
    if len == 0 {
        return Err(Error::param("oracle simulation needs N ≥ 1"));
    }
    Ok(AllocationLog {
        policy: "oracle".into(),
        trace_id: trace_id.into(),
        len,
        events: vec![AllocEvent {
            step: 0,
            requested: len,
            granted: len,
        }],
    })
}

/// What the predictive policy provisions when the forecast is degenerate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fallback {
    /// Take the degenerate forecast (the length cap) at face value.
    Forecast,
    /// Mean length of the training split.
    TrainMean,
    Fixed(f64),
}

impl FromStr for Fallback {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forecast" => Ok(Fallback::Forecast),
            "train_mean" => Ok(Fallback::TrainMean),
            other => other
                .parse::<f64>()
                .ok()
                .filter(|v| *v > 0.0 && v.is_finite())
                .map(Fallback::Fixed)
                .ok_or_else(|| {
                    Error::param(format!("fallback must be forecast, train_mean, or a length > 0, got `{other}`"))
                }),
        }
    }
}

impl std::fmt::Display for Fallback {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Fallback::Forecast => f.write_str("forecast"),
            Fallback::TrainMean => f.write_str("train_mean"),
            Fallback::Fixed(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveParams {
    /// Tokens added on top of every forecast.
    pub margin: usize,
    /// Minimum growth per reallocation.
    pub block: usize,
    pub fallback: Fallback,
}

impl Default for PredictiveParams {
    fn default() -> Self {
        Self {
            margin: 0,
            block: HF_BLOCK,
            fallback: Fallback::TrainMean,
        }
    }
}

/// Replaces degenerate forecasts by `prior` (when given).
pub fn resolve_forecasts(estimates: &[LengthEstimate], prior: Option<f64>) -> Vec<f64> {
    estimates
        .iter()
        .map(|e| match (e.degenerate, prior) {
            (true, Some(p)) => p,
            _ => e.predicted_length,
        })
        .collect()
}

/// Allocate `⌈forecast⌉ + margin` at step 0; whenever the next token does
/// not fit, reallocate to `max(⌈forecast⌉ + margin, granted + block)`.
/// `forecasts[t]` is the forecast available at step `t`.
pub fn simulate_predictive(
    trace_id: &str,
    len: usize,
    forecasts: &[f64],
    params: &PredictiveParams,
) -> Result<AllocationLog> {
    if len == 0 || params.block == 0 {
        return Err(Error::param("predictive simulation needs N ≥ 1 and block ≥ 1"));
    }
    if forecasts.len() < len {
        return Err(Error::InsufficientData(format!(
            "forecast stream has {} steps, trace has {len}",
            forecasts.len()
        )));
    }
    if let Some(bad) = forecasts[..len].iter().find(|f| !f.is_finite() || **f < 0.0) {
        return Err(Error::param(format!("invalid length forecast {bad}")));
    }
    let want = |t: usize| forecasts[t].ceil() as usize + params.margin;
    let first = want(0).max(1);
    let mut events = vec![AllocEvent {
        step: 0,
        requested: want(0),
        granted: first,
    }];
    let mut granted = first;
    for step in 1..len {
        if step + 1 > granted {
            let requested = want(step);
            granted = requested.max(granted + params.block);
            events.push(AllocEvent {
                step,
                requested,
                granted,
            });
        }
    }
    Ok(AllocationLog {
        policy: "predictive".into(),
        trace_id: trace_id.into(),
        len,
        events,
    })
}
