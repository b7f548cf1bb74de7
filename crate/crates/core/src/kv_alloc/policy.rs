use crate::error::{Error, Result};
use crate::eval::{mean_length, Gauge, LengthPredictor};
use crate::gauge::{DirectHead, LengthEstimate};
use crate::registry::{Registry, StrategyContext};
use crate::traces::Trace;

use super::log::{
    resolve_forecasts, simulate_hf, simulate_oracle, simulate_predictive, AllocationLog, Fallback, PredictiveParams,
};

/// Decides when and how much KV cache one request allocates.
pub trait AllocationPolicy: Send + Sync {
    fn name(&self) -> &str;
    fn simulate(&self, trace_id: &str, trace: &Trace) -> Result<AllocationLog>;
}

#[derive(Debug, Clone, Copy)]
pub struct OnDemand {
    pub block: usize,
}

impl AllocationPolicy for OnDemand {
    fn name(&self) -> &str {
        "hf"
    }

    fn simulate(&self, trace_id: &str, trace: &Trace) -> Result<AllocationLog> {
        simulate_hf(trace_id, trace.len(), self.block)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OneShotOracle;

impl AllocationPolicy for OneShotOracle {
    fn name(&self) -> &str {
        "oracle"
    }

    fn simulate(&self, trace_id: &str, trace: &Trace) -> Result<AllocationLog> {
        simulate_oracle(trace_id, trace.len())
    }
}

/// Provisions from a length predictor's running forecast.
pub struct Predictive {
    predictor: Box<dyn LengthPredictor>,
    params: PredictiveParams,
    /// Replacement for degenerate forecasts.
    prior: Option<f64>,
}

impl Predictive {
    pub fn new(predictor: Box<dyn LengthPredictor>, params: PredictiveParams, prior: Option<f64>) -> Self {
        Self {
            predictor,
            params,
            prior,
        }
    }
}

impl AllocationPolicy for Predictive {
    fn name(&self) -> &str {
        "predictive"
    }

    fn simulate(&self, trace_id: &str, trace: &Trace) -> Result<AllocationLog> {
        let estimates: Vec<LengthEstimate> = self
            .predictor
            .predict(trace)?
            .into_iter()
            .map(|p| LengthEstimate {
                predicted_length: p.predicted_length,
                degenerate: p.degenerate,
                step: p.step,
            })
            .collect();
        let forecasts = resolve_forecasts(&estimates, self.prior);
        simulate_predictive(trace_id, trace.len(), &forecasts, &self.params)
    }
}

fn prior_for(ctx: &StrategyContext) -> Result<Option<f64>> {
    Ok(match ctx.alloc.fallback {
        Fallback::Forecast => None,
        Fallback::TrainMean => Some(mean_length(&ctx.train_lengths)?),
        Fallback::Fixed(v) => Some(v),
    })
}

pub fn allocation_policies() -> Registry<dyn AllocationPolicy> {
    let mut reg: Registry<dyn AllocationPolicy> = Registry::new("allocation policy");
    reg.register("hf", |ctx| {
        Ok(Box::new(OnDemand {
            block: ctx.alloc.block,
        }) as Box<dyn AllocationPolicy>)
    })
    .register("oracle", |_| Ok(Box::new(OneShotOracle) as Box<dyn AllocationPolicy>))
    .register("predictive", |ctx| {
        let method = ctx.predictor_method.as_str();
        let predictor: Box<dyn LengthPredictor> = match method {
            "gauge" => Box::new(Gauge::new(ctx.load_model(method)?, ctx.run)),
            "direct" => Box::new(DirectHead::new(ctx.load_model(method)?, ctx.run.max_len)),
            other => {
                return Err(Error::param(format!(
                    "predictive allocation needs a checkpoint-backed predictor (gauge, direct), got `{other}`"
                )))
            }
        };
        Ok(Box::new(Predictive::new(predictor, ctx.alloc, prior_for(ctx)?)) as Box<dyn AllocationPolicy>)
    });
    reg
}
