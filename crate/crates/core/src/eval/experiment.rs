use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gauge::RunOptions;
use crate::registry::StrategyContext;
use crate::traces::{Manifest, Split, Trace};
use crate::write_atomic;

use super::baselines::{fuel_estimators, length_predictors, true_fuel, FuelEstimator, LengthPredictor};
use super::metrics::{mean_std, rmae_terms};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    Fuel,
    Length,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Fuel => "fuel",
            Task::Length => "length",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fuel" => Ok(Task::Fuel),
            "length" => Ok(Task::Length),
            other => Err(Error::param(format!("unknown task `{other}` (fuel, length)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceScore {
    pub trace_id: String,
    pub steps: usize,
    pub numerator: f64,
    pub denominator: f64,
}

impl TraceScore {
    pub fn rmae(&self) -> f64 {
        self.numerator / self.denominator
    }
}

/// rMAE of one (method, split, seed), kept as per-trace sums so that
/// reports can be merged exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub task: Task,
    pub method: String,
    pub split: Split,
    pub seed: u64,
    pub traces: Vec<TraceScore>,
}

impl EvalReport {
    pub fn numerator(&self) -> f64 {
        self.traces.iter().map(|t| t.numerator).sum()
    }

    pub fn denominator(&self) -> f64 {
        self.traces.iter().map(|t| t.denominator).sum()
    }

    /// Ratio of sums over every trace and step.
    pub fn rmae(&self) -> Result<f64> {
        let den = self.denominator();
        if self.traces.is_empty() || den == 0.0 {
            return Err(Error::UndefinedMetric("rMAE of an empty or all-zero report"));
        }
        Ok(self.numerator() / den)
    }

    /// Union of two reports over disjoint trace sets.
    pub fn merge(mut self, other: EvalReport) -> Result<EvalReport> {
        if (self.task, &self.method, self.split, self.seed) != (other.task, &other.method, other.split, other.seed) {
            return Err(Error::param(format!(
                "cannot merge {}/{}/{}/{} with {}/{}/{}/{}",
                self.task, self.method, self.split, self.seed, other.task, other.method, other.split, other.seed
            )));
        }
        if let Some(dup) = other
            .traces
            .iter()
            .find(|t| self.traces.iter().any(|s| s.trace_id == t.trace_id))
        {
            return Err(Error::param(format!("trace {} appears in both reports", dup.trace_id)));
        }
        self.traces.extend(other.traces);
        self.traces.sort_by(|a, b| a.trace_id.cmp(&b.trace_id));
        Ok(self)
    }
}

/// One row of a per-step dump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRow {
    pub step: usize,
    pub fuel: Option<f64>,
    pub predicted_length: Option<f64>,
    pub true_length: usize,
    pub degenerate: bool,
}

/// Steps `0, stride, 2·stride, …` of a trace of length `len`.
fn strided(len: usize, stride: usize) -> impl Iterator<Item = usize> {
    (0..len).step_by(stride.max(1))
}

fn sorted_by_id(traces: &[(String, Trace)]) -> Vec<&(String, Trace)> {
    let mut v: Vec<_> = traces.iter().collect();
    v.sort_by(|a, b| a.0.cmp(&b.0));
    v
}

/// Fuel rMAE of `est` on `traces`, with per-step rows for each trace.
pub fn evaluate_fuel(
    est: &dyn FuelEstimator,
    traces: &[(String, Trace)],
    stride: usize,
) -> Result<Vec<(TraceScore, Vec<StepRow>)>> {
    sorted_by_id(traces)
        .par_iter()
        .map(|(id, trace)| {
            let n = trace.len();
            let pred = est.fuel(trace)?;
            Error::check_dim("fuel predictions", n, pred.len())?;
            let truth = true_fuel(n);
            let steps: Vec<usize> = strided(n, stride).collect();
            let p: Vec<f64> = steps.iter().map(|&t| pred[t]).collect();
            let y: Vec<f64> = steps.iter().map(|&t| truth[t]).collect();
            let (numerator, denominator) = rmae_terms(&p, &y)?;
            let rows = steps
                .iter()
                .map(|&t| StepRow {
                    step: t,
                    fuel: Some(pred[t]),
                    predicted_length: None,
                    true_length: n,
                    degenerate: false,
                })
                .collect();
            let score = TraceScore {
                trace_id: id.clone(),
                steps: steps.len(),
                numerator,
                denominator,
            };
            Ok((score, rows))
        })
        .collect()
}

/// Length rMAE of `pred` on `traces`; the truth at every step is the full
/// trace length.
pub fn evaluate_length(
    pred: &dyn LengthPredictor,
    traces: &[(String, Trace)],
    stride: usize,
) -> Result<Vec<(TraceScore, Vec<StepRow>)>> {
    sorted_by_id(traces)
        .par_iter()
        .map(|(id, trace)| {
            let n = trace.len();
            let all = pred.predict(trace)?;
            Error::check_dim("length predictions", n, all.len())?;
            let picked: Vec<_> = strided(n, stride).map(|t| all[t]).collect();
            let p: Vec<f64> = picked.iter().map(|s| s.predicted_length).collect();
            let (numerator, denominator) = rmae_terms(&p, &vec![n as f64; p.len()])?;
            let rows = picked
                .iter()
                .map(|s| StepRow {
                    step: s.step,
                    fuel: s.fuel,
                    predicted_length: Some(s.predicted_length),
                    true_length: n,
                    degenerate: s.degenerate,
                })
                .collect();
            let score = TraceScore {
                trace_id: id.clone(),
                steps: picked.len(),
                numerator,
                denominator,
            };
            Ok((score, rows))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub task: Task,
    pub manifest: PathBuf,
    pub methods: Vec<String>,
    pub splits: Vec<Split>,
    pub seeds: Vec<u64>,
    pub checkpoint_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub run: RunOptions,
    /// Evaluate every `stride`-th step.
    pub stride: usize,
    pub dump_steps: bool,
}

impl ExperimentConfig {
    pub fn new(task: Task, manifest: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            task,
            manifest: manifest.into(),
            methods: Vec::new(),
            splits: vec![Split::Test],
            seeds: vec![0],
            checkpoint_dir: None,
            out_dir: out_dir.into(),
            run: RunOptions::default(),
            stride: 1,
            dump_steps: false,
        }
    }
}

/// Evaluates every method on every split for every seed and writes
/// `<task>_report.csv`, `<task>_per_trace.csv`, `<task>_summary.csv`, and
/// optionally per-step dumps under `out_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<EvalReport>> {
    if config.methods.is_empty() || config.splits.is_empty() || config.seeds.is_empty() {
        return Err(Error::param("experiment needs at least one method, split, and seed"));
    }
    if config.stride == 0 {
        return Err(Error::param("stride must be ≥ 1"));
    }
    let manifest = Manifest::load(&config.manifest)?;
    let train_lengths: Vec<usize> = manifest
        .load_split(Split::Train)?
        .iter()
        .map(|(_, t)| t.len())
        .collect();
    let split_traces: Vec<(Split, Vec<(String, Trace)>)> = config
        .splits
        .iter()
        .map(|&s| Ok((s, manifest.load_split(s)?)))
        .collect::<Result<_>>()?;

    std::fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    let fuel_reg = fuel_estimators();
    let len_reg = length_predictors();
    let mut reports = Vec::new();
    for &seed in &config.seeds {
        let ctx = StrategyContext {
            train_lengths: train_lengths.clone(),
            checkpoint_dir: config.checkpoint_dir.clone(),
            seed,
            run: config.run,
            ..StrategyContext::default()
        };
        for method in &config.methods {
            let results_for = |traces: &[(String, Trace)]| -> Result<_> {
                match config.task {
                    Task::Fuel => evaluate_fuel(fuel_reg.build(method, &ctx)?.as_ref(), traces, config.stride),
                    Task::Length => {
                        evaluate_length(len_reg.build(method, &ctx)?.as_ref(), traces, config.stride)
                    }
                }
            };
            for (split, traces) in &split_traces {
                if traces.is_empty() {
                    return Err(Error::InsufficientData(format!("split {split} has no traces")));
                }
                let results = results_for(traces)?;
                if config.dump_steps {
                    let name = format!("{}_steps_{method}_{split}_seed{seed}.csv", config.task);
                    write_atomic(&config.out_dir.join(name), steps_csv(&results).as_bytes())?;
                }
                reports.push(EvalReport {
                    task: config.task,
                    method: method.clone(),
                    split: *split,
                    seed,
                    traces: results.into_iter().map(|(s, _)| s).collect(),
                });
            }
        }
    }
    write_reports(&config.out_dir, config.task, &reports)?;
    Ok(reports)
}

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub const REPORT_HEADER: &str = "method,split,seed,trace_count,rmae";
pub const PER_TRACE_HEADER: &str = "method,split,seed,trace_id,steps,numerator,denominator,rmae";
pub const SUMMARY_HEADER: &str = "method,split,seeds,rmae_mean,rmae_std";
pub const STEPS_HEADER: &str = "trace_id,step,fuel,predicted_length,true_length,degenerate";

pub fn report_csv(reports: &[EvalReport]) -> Result<String> {
    let mut out = format!("{REPORT_HEADER}\n");
    for r in reports {
        writeln!(out, "{},{},{},{},{}", r.method, r.split, r.seed, r.traces.len(), num(r.rmae()?)).unwrap();
    }
    Ok(out)
}

pub fn per_trace_csv(reports: &[EvalReport]) -> String {
    let mut out = format!("{PER_TRACE_HEADER}\n");
    for r in reports {
        for t in &r.traces {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.method,
                r.split,
                r.seed,
                t.trace_id,
                t.steps,
                num(t.numerator),
                num(t.denominator),
                num(t.rmae())
            )
            .unwrap();
        }
    }
    out
}

/// Mean and sample std of rMAE across seeds, one row per (method, split),
/// sorted.
pub fn summary_csv(reports: &[EvalReport]) -> Result<String> {
    let mut groups: std::collections::BTreeMap<(&str, Split), Vec<f64>> = Default::default();
    for r in reports {
        groups.entry((&r.method, r.split)).or_default().push(r.rmae()?);
    }
    let mut out = format!("{SUMMARY_HEADER}\n");
    for ((method, split), vals) in groups {
        let (m, s) = mean_std(&vals);
        writeln!(out, "{method},{split},{},{},{}", vals.len(), num(m), num(s)).unwrap();
    }
    Ok(out)
}

pub fn steps_csv(results: &[(TraceScore, Vec<StepRow>)]) -> String {
    let mut out = format!("{STEPS_HEADER}\n");
    for (score, rows) in results {
        for r in rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                score.trace_id,
                r.step,
                opt_num(r.fuel),
                opt_num(r.predicted_length),
                r.true_length,
                r.degenerate as u8
            )
            .unwrap();
        }
    }
    out
}

pub fn write_reports(dir: &Path, task: Task, reports: &[EvalReport]) -> Result<()> {
    write_atomic(&dir.join(format!("{task}_report.csv")), report_csv(reports)?.as_bytes())?;
    write_atomic(&dir.join(format!("{task}_per_trace.csv")), per_trace_csv(reports).as_bytes())?;
    write_atomic(&dir.join(format!("{task}_summary.csv")), summary_csv(reports)?.as_bytes())
}
