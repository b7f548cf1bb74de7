//! KV-cache allocation: per-request policies and a shared-arena replay that
//! exposes external fragmentation.

mod arena;
mod log;
mod policy;

pub use arena::{
    parse_workload, simulate_arena, Arena, ArenaSample, ArenaStats, Extent, Request, WorkloadEntry,
};
pub use log::{
    resolve_forecasts, simulate_hf, simulate_oracle, simulate_predictive, AllocEvent, AllocationLog, Fallback,
    PredictiveParams, HF_BLOCK,
};
pub use policy::{allocation_policies, AllocationPolicy, OnDemand, OneShotOracle, Predictive};
