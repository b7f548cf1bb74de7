use crate::error::{Error, Result};
use crate::gauge::{run_gauge_over_trace, DirectHead, GaugeModel, RunOptions};
use crate::registry::{Registry, StrategyContext};
use crate::traces::Trace;

/// Per-step fuel levels for a whole trace.
pub trait FuelEstimator: Send + Sync {
    fn name(&self) -> &str;
    fn fuel(&self, trace: &Trace) -> Result<Vec<f64>>;
}

/// One per-step total-length forecast.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPrediction {
    pub step: usize,
    /// Fuel reading behind the forecast, when the method has one.
    pub fuel: Option<f64>,
    pub predicted_length: f64,
    pub degenerate: bool,
}

/// Per-step total-length forecasts for a whole trace.
pub trait LengthPredictor: Send + Sync {
    fn name(&self) -> &str;
    fn predict(&self, trace: &Trace) -> Result<Vec<StepPrediction>>;
}

/// Ground-truth fuel `1 − t/N` at every step.
pub fn true_fuel(len: usize) -> Vec<f64> {
    (0..len).map(|t| 1.0 - t as f64 / len as f64).collect()
}

pub fn mean_length(lengths: &[usize]) -> Result<f64> {
    if lengths.is_empty() {
        return Err(Error::InsufficientData("no training lengths for the mean baseline".into()));
    }
    Ok(lengths.iter().map(|&n| n as f64).sum::<f64>() / lengths.len() as f64)
}

/// Middle order statistic; the average of the two middle values for an even
/// count.
pub fn median_length(lengths: &[usize]) -> Result<f64> {
    if lengths.is_empty() {
        return Err(Error::InsufficientData("no training lengths for the median baseline".into()));
    }
    let mut sorted = lengths.to_vec();
    sorted.sort_unstable();
    let m = sorted.len() / 2;
    Ok(if sorted.len() % 2 == 1 {
        sorted[m] as f64
    } else {
        (sorted[m - 1] + sorted[m]) as f64 / 2.0
    })
}

/// Assumes every trace has length `assumed`.
#[derive(Debug, Clone)]
pub struct StaticLength {
    name: String,
    assumed: f64,
}

impl StaticLength {
    pub fn new(name: impl Into<String>, assumed: f64) -> Result<Self> {
        if !(assumed > 0.0 && assumed.is_finite()) {
            return Err(Error::param(format!("assumed length must be > 0, got {assumed}")));
        }
        Ok(Self {
            name: name.into(),
            assumed,
        })
    }

    pub fn mean(lengths: &[usize]) -> Result<Self> {
        Self::new("mean", mean_length(lengths)?)
    }

    pub fn median(lengths: &[usize]) -> Result<Self> {
        Self::new("median", median_length(lengths)?)
    }

    pub fn assumed(&self) -> f64 {
        self.assumed
    }
}

impl FuelEstimator for StaticLength {
    fn name(&self) -> &str {
        &self.name
    }

    fn fuel(&self, trace: &Trace) -> Result<Vec<f64>> {
        Ok((0..trace.len())
            .map(|t| (1.0 - t as f64 / self.assumed).clamp(0.0, 1.0))
            .collect())
    }
}

impl LengthPredictor for StaticLength {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(&self, trace: &Trace) -> Result<Vec<StepPrediction>> {
        let fuel = FuelEstimator::fuel(self, trace)?;
        Ok(fuel
            .into_iter()
            .enumerate()
            .map(|(step, f)| StepPrediction {
                step,
                fuel: Some(f),
                predicted_length: self.assumed,
                degenerate: false,
            })
            .collect())
    }
}

/// Reads the stored end-of-reasoning probability as the fuel level.
#[derive(Debug, Clone, Copy, Default)]
pub struct EocProb;

impl FuelEstimator for EocProb {
    fn name(&self) -> &str {
        "eoc"
    }

    fn fuel(&self, trace: &Trace) -> Result<Vec<f64>> {
        let probs = trace.eoc_prob().ok_or_else(|| Error::MissingEocProb {
            trace_id: trace.id().unwrap_or("<unnamed>").to_owned(),
        })?;
        Ok(probs.iter().map(|&p| p as f64).collect())
    }
}

#[derive(Debug, Clone)]
pub struct Gauge {
    model: GaugeModel,
    run: RunOptions,
}

impl Gauge {
    pub fn new(model: GaugeModel, run: RunOptions) -> Self {
        Self { model, run }
    }

    pub fn model(&self) -> &GaugeModel {
        &self.model
    }
}

impl FuelEstimator for Gauge {
    fn name(&self) -> &str {
        "gauge"
    }

    fn fuel(&self, trace: &Trace) -> Result<Vec<f64>> {
        self.model.readings(trace)
    }
}

impl LengthPredictor for Gauge {
    fn name(&self) -> &str {
        "gauge"
    }

    fn predict(&self, trace: &Trace) -> Result<Vec<StepPrediction>> {
        let opts = RunOptions { stride: 1, ..self.run };
        Ok(run_gauge_over_trace(&self.model, trace, &opts)?
            .into_iter()
            .map(|r| StepPrediction {
                step: r.step,
                fuel: Some(r.fuel),
                predicted_length: r.estimate.predicted_length,
                degenerate: r.estimate.degenerate,
            })
            .collect())
    }
}

impl LengthPredictor for DirectHead {
    fn name(&self) -> &str {
        "direct"
    }

    fn predict(&self, trace: &Trace) -> Result<Vec<StepPrediction>> {
        Ok(self
            .predict_trace(trace)?
            .into_iter()
            .enumerate()
            .map(|(step, len)| StepPrediction {
                step,
                fuel: None,
                predicted_length: len,
                degenerate: false,
            })
            .collect())
    }
}

pub fn fuel_estimators() -> Registry<dyn FuelEstimator> {
    let mut reg: Registry<dyn FuelEstimator> = Registry::new("fuel estimator");
    reg.register("gauge", |ctx| {
        Ok(Box::new(Gauge::new(ctx.load_model("gauge")?, ctx.run)) as Box<dyn FuelEstimator>)
    })
    .register("mean", |ctx| Ok(Box::new(StaticLength::mean(&ctx.train_lengths)?) as Box<dyn FuelEstimator>))
    .register("median", |ctx| {
        Ok(Box::new(StaticLength::median(&ctx.train_lengths)?) as Box<dyn FuelEstimator>)
    })
    .register("eoc", |_| Ok(Box::new(EocProb) as Box<dyn FuelEstimator>));
    reg
}

pub fn length_predictors() -> Registry<dyn LengthPredictor> {
    let mut reg: Registry<dyn LengthPredictor> = Registry::new("length predictor");
    reg.register("gauge", |ctx| {
        Ok(Box::new(Gauge::new(ctx.load_model("gauge")?, ctx.run)) as Box<dyn LengthPredictor>)
    })
    .register("mean", |ctx| {
        Ok(Box::new(StaticLength::mean(&ctx.train_lengths)?) as Box<dyn LengthPredictor>)
    })
    .register("median", |ctx| {
        Ok(Box::new(StaticLength::median(&ctx.train_lengths)?) as Box<dyn LengthPredictor>)
    })
    .register("direct", |ctx: &StrategyContext| {
        let head = DirectHead::new(ctx.load_model("direct")?, ctx.run.max_len);
        Ok(Box::new(head) as Box<dyn LengthPredictor>)
    });
    reg
}
