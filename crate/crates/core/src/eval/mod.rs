//! rMAE evaluation of fuel estimators and length predictors.

mod baselines;
mod experiment;
pub mod metrics;

pub use baselines::{
    fuel_estimators, length_predictors, mean_length, median_length, true_fuel, EocProb, FuelEstimator, Gauge,
    LengthPredictor, StaticLength, StepPrediction,
};
pub use experiment::{
    evaluate_fuel, evaluate_length, num, per_trace_csv, report_csv, run_experiment, steps_csv, summary_csv,
    write_reports, EvalReport, ExperimentConfig, StepRow, Task, TraceScore, PER_TRACE_HEADER, REPORT_HEADER,
    STEPS_HEADER, SUMMARY_HEADER,
};
pub use metrics::{mean_std, pearson, permutation_threshold, rmae, rmae_terms};
