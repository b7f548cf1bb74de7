use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{mean_std, num, pearson};
use crate::gauge::GaugeModel;
use crate::rng;
use crate::traces::{Modulator, SynthWorld};

use super::{GaugeModulator, ModulationConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRun {
    pub eta: f64,
    pub seed: u64,
    pub length: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaSummary {
    pub eta: f64,
    pub mean_length: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    /// Grouped by η in grid order, then by run index.
    pub runs: Vec<SweepRun>,
    pub summary: Vec<EtaSummary>,
    /// Pearson(η, mean length); `None` when undefined (e.g. constant means).
    pub pearson_means: Option<f64>,
    /// Pearson over every (η, length) pair.
    pub pearson_runs: Option<f64>,
}

pub const SWEEP_RUNS_HEADER: &str = "eta,seed,realized_length";
pub const SWEEP_SUMMARY_HEADER: &str = "eta,mean_length,std,n";

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_else(|| "nan".into())
}

impl SweepReport {
    pub fn runs_csv(&self) -> String {
        let mut out = format!("{SWEEP_RUNS_HEADER}\n");
        for r in &self.runs {
            writeln!(out, "{},{},{}", num(r.eta), r.seed, r.length).unwrap();
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = format!("{SWEEP_SUMMARY_HEADER}\n");
        for s in &self.summary {
            writeln!(out, "{},{},{},{}", num(s.eta), num(s.mean_length), num(s.std), s.n).unwrap();
        }
        writeln!(out, "pearson_means,{},,", opt(self.pearson_means)).unwrap();
        writeln!(out, "pearson_runs,{},,", opt(self.pearson_runs)).unwrap();
        out
    }

    pub fn lengths_for(&self, eta: f64) -> Vec<usize> {
        self.runs.iter().filter(|r| r.eta == eta).map(|r| r.length).collect()
    }
}

/// Closed-loop runs for every η in `etas`, `runs_per_eta` each. Run `i`
/// uses the same generator seed for every η, so columns are paired.
pub fn eta_sweep(
    world: &SynthWorld,
    model: &GaugeModel,
    base: &ModulationConfig,
    etas: &[f64],
    runs_per_eta: usize,
    seed: u64,
) -> Result<SweepReport> {
    if etas.is_empty() || runs_per_eta == 0 {
        return Err(Error::param("sweep needs at least one η and one run"));
    }
    Error::check_dim("gauge hidden dim", world.config().hidden_dim, model.arch().hidden_dim)?;
    let jobs: Vec<(f64, u64)> = etas
        .iter()
        .flat_map(|&eta| (0..runs_per_eta as u64).map(move |i| (eta, rng::derive_seed(seed, "eta-sweep", i))))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(eta, run_seed)| {
            let config = ModulationConfig { eta, ..*base };
            let mut modulator = GaugeModulator::new(model.clone(), config)?;
            let length = world.closed_loop_length(run_seed, Some(&mut modulator as &mut dyn Modulator))?;
            Ok(SweepRun {
                eta,
                seed: run_seed,
                length,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let summary: Vec<EtaSummary> = etas
        .iter()
        .map(|&eta| {
            let lens: Vec<f64> = runs.iter().filter(|r| r.eta == eta).map(|r| r.length as f64).collect();
            let (mean_length, std) = mean_std(&lens);
            EtaSummary {
                eta,
                mean_length,
                std,
                n: lens.len(),
            }
        })
        .collect();
    let means: Vec<f64> = summary.iter().map(|s| s.mean_length).collect();
    let xs: Vec<f64> = runs.iter().map(|r| r.eta).collect();
    let ys: Vec<f64> = runs.iter().map(|r| r.length as f64).collect();
    Ok(SweepReport {
        pearson_means: pearson(etas, &means).ok(),
        pearson_runs: pearson(&xs, &ys).ok(),
        runs,
        summary,
    })
}
