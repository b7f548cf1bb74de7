//! The two-stage gauge: Stage 1 reads a fuel level from a window of hidden
//! states, Stage 2 fits a line through all readings and extrapolates its zero
//! crossing as the length forecast.

mod direct;
mod model;
mod runner;
mod series;
mod train;

pub use direct::DirectHead;
pub use model::GaugeModel;
pub use runner::{records_from_readings, run_gauge_over_trace, GaugeRecord, RunOptions};
pub use series::{predict_length, FuelSeries, LengthEstimate};
pub use train::{train_gauge, Target, TrainConfig, TrainOutcome};
