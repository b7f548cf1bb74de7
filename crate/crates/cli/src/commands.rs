use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use log::info;
use rayon::prelude::*;

use fuelgauge::eval::{self, num, ExperimentConfig, Task};
use fuelgauge::gauge::{train_gauge, RunOptions, Target, TrainConfig};
use fuelgauge::kv_alloc::{
    allocation_policies, parse_workload, simulate_arena, AllocationLog, Fallback, PredictiveParams, Request,
};
use fuelgauge::modulation::{eta_sweep, ModulationConfig, ModulationMode, ZeroGradPolicy};
use fuelgauge::nn::Loss;
use fuelgauge::registry::{checkpoint_file_name, StrategyContext};
use fuelgauge::traces::{read_trace, write_trace, Manifest, ManifestEntry, Mode, Split, SynthConfig, SynthWorld, Trace};
use fuelgauge::gauge::GaugeModel;
use fuelgauge::{rng, write_atomic};

use crate::config::{key, synth_config, synth_keys, Params};
use crate::{Common, EvalArgs};

/// Applies the config file, `--set` pairs, and `--seed` in that order, then
/// creates the output directory.
fn resolve(mut params: Params, common: &Common) -> Result<Params> {
    if let Some(path) = &common.config {
        params.load_file(path)?;
    }
    for pair in &common.set {
        params.set_pair(pair)?;
    }
    params.flag("seed", common.seed)?;
    Ok(params)
}

fn prepare_out_dir(dir: &Path, command: &str, params: &Params) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    write_atomic(&dir.join(format!("config_{command}.txt")), params.snapshot().as_bytes())?;
    Ok(())
}

fn load_manifest(path: &Path) -> Result<Manifest> {
    ensure!(path.is_file(), "manifest not found: {}", path.display());
    Ok(Manifest::load(path)?)
}

fn run_options(p: &Params) -> Result<RunOptions> {
    let fit_window: usize = p.get("fit_window")?;
    Ok(RunOptions {
        stride: 1,
        max_len: p.get("max_len")?,
        fit_window: (fit_window > 0).then_some(fit_window),
    })
}

pub fn gen(common: &Common, count: Option<usize>) -> Result<()> {
    let defaults = SynthConfig::default();
    let mut keys = vec![
        key("count", 500),
        key("n_train", 200),
        key("n_val", 50),
        key("seed", 0),
        key("mode", "open_loop"),
        key("test_length_scale", 1),
    ];
    keys.extend(synth_keys(&defaults, "lognormal:500:0.5"));
    let mut p = resolve(Params::new("gen", keys), common)?;
    p.flag("count", count)?;

    let count: usize = p.get("count")?;
    let n_train: usize = p.get("n_train")?;
    let n_val: usize = p.get("n_val")?;
    ensure!(n_train + n_val <= count, "n_train + n_val exceeds count");
    let seed: u64 = p.get("seed")?;
    let mode = match p.str("mode") {
        "open_loop" => Mode::OpenLoop,
        "closed_loop" => Mode::ClosedLoop,
        other => bail!("mode must be open_loop or closed_loop, got `{other}`"),
    };
    let scale: f64 = p.get("test_length_scale")?;
    ensure!(scale > 0.0 && scale.is_finite(), "test_length_scale must be > 0");
    let base = synth_config(&p, mode)?;
    let world = SynthWorld::new(base.clone())?;
    let test_world = SynthWorld::new(SynthConfig {
        length_law: base.length_law.scaled(scale),
        ..base
    })?;
    prepare_out_dir(&common.out_dir, "gen", &p)?;
    let trace_dir = common.out_dir.join("traces");
    std::fs::create_dir_all(&trace_dir).with_context(|| format!("creating {}", trace_dir.display()))?;

    let entries: Vec<ManifestEntry> = (0..count)
        .into_par_iter()
        .map(|i| {
            let split = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            let w = if split == Split::Test { &test_world } else { &world };
            let raw = w.generate(rng::derive_seed(seed, "gen", i as u64))?;
            let id = format!("trace_{i:05}");
            let meta = format!("id={id}\nsplit={split}\n{}", raw.meta());
            let trace = Trace::new(raw.dim(), raw.hidden().to_vec(), raw.eoc_prob().map(<[f32]>::to_vec), meta)?;
            let rel = PathBuf::from("traces").join(format!("{id}.fgt"));
            write_trace(&trace, &common.out_dir.join(&rel))?;
            Ok(ManifestEntry { path: rel, split })
        })
        .collect::<Result<_>>()?;
    Manifest::new(&common.out_dir, entries).save(&common.out_dir.join(Manifest::FILE_NAME))?;
    info!("wrote {count} traces ({n_train}/{n_val}/{}) to {}", count - n_train - n_val, common.out_dir.display());
    Ok(())
}

pub fn train(common: &Common, manifest: Option<PathBuf>, method: Option<String>) -> Result<()> {
    let d = TrainConfig::default();
    let keys = vec![
        key("manifest", ""),
        key("method", "gauge"),
        key("split", "train"),
        key("seed", 0),
        key("channels", d.channels),
        key("window", d.window),
        key("batch_size", d.batch_size),
        key("lr", d.lr),
        key("weight_decay", d.weight_decay),
        key("warmup_steps", d.warmup_steps),
        key("epochs", d.epochs),
        key("loss", d.loss),
        key("max_len", RunOptions::default().max_len),
    ];
    let mut p = resolve(Params::new("train", keys), common)?;
    p.flag("manifest", manifest.map(|m| m.display().to_string()))?;
    p.flag("method", method)?;

    let method = p.str("method").to_owned();
    let target = match method.as_str() {
        "gauge" => Target::Fuel,
        "direct" => Target::Length {
            max_len: p.get("max_len")?,
        },
        other => bail!("train method must be gauge or direct, got `{other}`"),
    };
    let config = TrainConfig {
        channels: p.get("channels")?,
        window: p.get("window")?,
        batch_size: p.get("batch_size")?,
        lr: p.get("lr")?,
        weight_decay: p.get("weight_decay")?,
        warmup_steps: p.get("warmup_steps")?,
        epochs: p.get("epochs")?,
        loss: p.get::<Loss>("loss")?,
        target,
    };
    let seed: u64 = p.get("seed")?;
    let split: Split = p.get("split")?;
    let manifest = load_manifest(&p.require_path("manifest")?)?;
    let traces = manifest.load_split(split)?;
    ensure!(!traces.is_empty(), "split {split} of the manifest is empty");
    prepare_out_dir(&common.out_dir, "train", &p)?;

    let refs: Vec<&Trace> = traces.iter().map(|(_, t)| t).collect();
    let outcome = train_gauge(&refs, &config, seed)?;
    let ckpt = common.out_dir.join(checkpoint_file_name(&method, seed));
    outcome.model.save(&ckpt)?;
    let mut log = String::from("step,lr,loss\n");
    for (i, (lr, loss)) in outcome.step_lrs.iter().zip(&outcome.step_losses).enumerate() {
        writeln!(log, "{i},{},{}", num(*lr), num(*loss))?;
    }
    write_atomic(&common.out_dir.join(format!("train_log_{method}_seed{seed}.csv")), log.as_bytes())?;
    info!(
        "trained {method} ({} parameters) on {} windows in {} steps; wrote {}",
        outcome.model.param_count(),
        outcome.samples,
        outcome.step_losses.len(),
        ckpt.display()
    );
    Ok(())
}

pub fn eval(args: &EvalArgs, task: Task) -> Result<()> {
    let command = match task {
        Task::Fuel => "eval-fuel",
        Task::Length => "eval-length",
    };
    let default_methods = match task {
        Task::Fuel => "gauge,mean,median",
        Task::Length => "gauge,mean,median,direct",
    };
    let keys = vec![
        key("manifest", ""),
        key("methods", default_methods),
        key("splits", "test"),
        key("seeds", 0),
        key("seed", 0),
        key("checkpoint_dir", ""),
        key("stride", 1),
        key("max_len", RunOptions::default().max_len),
        key("fit_window", 0),
        key("dump_steps", false),
    ];
    let mut p = resolve(Params::new(command, keys), &args.common)?;
    p.flag("manifest", args.manifest.as_ref().map(|m| m.display().to_string()))?;
    p.flag("methods", args.methods.clone())?;
    p.flag("checkpoint_dir", args.checkpoint_dir.as_ref().map(|m| m.display().to_string()))?;
    p.flag("seeds", args.seeds.clone())?;
    // `--seed` alone narrows the seed list to that seed.
    if args.common.seed.is_some() && args.seeds.is_none() {
        let s = p.str("seed").to_owned();
        p.set("seeds", &s)?;
    }

    let mut config = ExperimentConfig::new(task, p.require_path("manifest")?, &args.common.out_dir);
    config.methods = p.list("methods")?;
    config.splits = p.list("splits")?;
    config.seeds = p.list("seeds")?;
    config.checkpoint_dir = p.path("checkpoint_dir");
    config.run = run_options(&p)?;
    config.stride = p.get("stride")?;
    config.dump_steps = p.bool("dump_steps")?;
    load_manifest(&config.manifest)?;
    prepare_out_dir(&args.common.out_dir, command, &p)?;
    let reports = eval::run_experiment(&config)?;
    for r in &reports {
        info!("{} {} {} seed {}: rMAE {:.6}", task, r.method, r.split, r.seed, r.rmae()?);
    }
    Ok(())
}

pub const ALLOC_HEADER: &str = "policy,trace_id,alloc_count,waste_tokens,failures";
pub const ALLOC_SUMMARY_HEADER: &str = "policy,traces,mean_alloc_count,mean_waste_tokens,reduction_vs_hf";

pub fn sim_alloc(
    common: &Common,
    manifest: Option<PathBuf>,
    policies: Option<String>,
    checkpoint_dir: Option<PathBuf>,
    workload: Option<PathBuf>,
) -> Result<()> {
    let d = PredictiveParams::default();
    let keys = vec![
        key("manifest", ""),
        key("split", "test"),
        key("policies", "hf,oracle,predictive"),
        key("seed", 0),
        key("checkpoint_dir", ""),
        key("predictor", "gauge"),
        key("block", d.block),
        key("margin", d.margin),
        key("fallback", d.fallback),
        key("max_len", RunOptions::default().max_len),
        key("fit_window", 0),
        key("workload", ""),
        key("arena_slots", 0),
    ];
    let mut p = resolve(Params::new("sim-alloc", keys), common)?;
    p.flag("manifest", manifest.map(|m| m.display().to_string()))?;
    p.flag("policies", policies)?;
    p.flag("checkpoint_dir", checkpoint_dir.map(|m| m.display().to_string()))?;
    p.flag("workload", workload.map(|m| m.display().to_string()))?;

    let manifest = load_manifest(&p.require_path("manifest")?)?;
    let train_lengths: Vec<usize> = manifest
        .load_split(Split::Train)?
        .iter()
        .map(|(_, t)| t.len())
        .collect();
    let ctx = StrategyContext {
        train_lengths,
        checkpoint_dir: p.path("checkpoint_dir"),
        seed: p.get("seed")?,
        run: run_options(&p)?,
        alloc: PredictiveParams {
            margin: p.get("margin")?,
            block: p.get("block")?,
            fallback: p.get::<Fallback>("fallback")?,
        },
        predictor_method: p.str("predictor").to_owned(),
    };
    let names: Vec<String> = p.list("policies")?;
    ensure!(!names.is_empty(), "no allocation policies given");
    let registry = allocation_policies();
    let policies = names
        .iter()
        .map(|n| registry.build(n, &ctx).map_err(anyhow::Error::from))
        .collect::<Result<Vec<_>>>()?;

    // Requests come from the workload file when given, else from the split.
    let workload = p.path("workload");
    let requests: Vec<(u64, usize, String, Trace)> = match &workload {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading workload {}", path.display()))?;
            let base = path.parent().unwrap_or(Path::new("."));
            parse_workload(&text, base)?
                .into_iter()
                .map(|w| {
                    let trace = read_trace(&w.trace_path)?;
                    let id = w.trace_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                    Ok((w.request_id, w.arrival, id, trace))
                })
                .collect::<Result<_>>()?
        }
        None => manifest
            .load_split(p.get("split")?)?
            .into_iter()
            .enumerate()
            .map(|(i, (id, t))| (i as u64, 0, id, t))
            .collect(),
    };
    ensure!(!requests.is_empty(), "no requests to simulate");
    let arena_slots: usize = p.get("arena_slots")?;
    prepare_out_dir(&common.out_dir, "sim-alloc", &p)?;

    let mut rows = format!("{ALLOC_HEADER}\n");
    let mut summary = format!("{ALLOC_SUMMARY_HEADER}\n");
    let mut arena_csv = String::from("policy,failures,contiguous_failures,max_external_fragmentation\n");
    let mut means: Vec<(String, f64, f64)> = Vec::new();
    for policy in &policies {
        let logs: Vec<AllocationLog> = requests
            .par_iter()
            .map(|(_, _, id, trace)| policy.simulate(id, trace))
            .collect::<fuelgauge::Result<_>>()?;
        for log in &logs {
            log.check()?;
        }
        let failures: BTreeMap<u64, usize> = if workload.is_some() {
            let slots = if arena_slots == 0 {
                logs.iter().map(AllocationLog::final_capacity).max().unwrap_or(1)
            } else {
                arena_slots
            };
            let reqs: Vec<Request> = requests
                .iter()
                .zip(&logs)
                .map(|((rid, arrival, _, _), log)| Request {
                    id: *rid,
                    arrival: *arrival,
                    log: log.clone(),
                })
                .collect();
            let stats = simulate_arena(&reqs, slots)?;
            writeln!(
                arena_csv,
                "{},{},{},{}",
                policy.name(),
                stats.failures,
                stats.contiguous_failures,
                num(stats.max_external_fragmentation())
            )?;
            let mut series = String::from("time,largest_free,total_free\n");
            for s in &stats.samples {
                writeln!(series, "{},{},{}", s.time, s.largest_free, s.total_free)?;
            }
            write_atomic(
                &common.out_dir.join(format!("arena_series_{}.csv", policy.name())),
                series.as_bytes(),
            )?;
            stats.request_failures
        } else {
            BTreeMap::new()
        };
        for ((rid, _, _, _), log) in requests.iter().zip(&logs) {
            writeln!(
                rows,
                "{},{},{},{},{}",
                policy.name(),
                log.trace_id,
                log.alloc_count(),
                log.waste(),
                failures.get(rid).copied().unwrap_or(0)
            )?;
        }
        let n = logs.len() as f64;
        let mean_count = logs.iter().map(|l| l.alloc_count() as f64).sum::<f64>() / n;
        let mean_waste = logs.iter().map(|l| l.waste() as f64).sum::<f64>() / n;
        means.push((policy.name().to_owned(), mean_count, mean_waste));
    }
    let hf_mean = means.iter().find(|(n, _, _)| n == "hf").map(|m| m.1);
    for (name, count, waste) in &means {
        let reduction = hf_mean.map(|h| num(h / count)).unwrap_or_default();
        writeln!(summary, "{name},{},{},{},{reduction}", requests.len(), num(*count), num(*waste))?;
        info!("{name}: mean allocations {count:.3}, mean waste {waste:.1} tokens");
    }
    write_atomic(&common.out_dir.join("alloc.csv"), rows.as_bytes())?;
    write_atomic(&common.out_dir.join("alloc_summary.csv"), summary.as_bytes())?;
    if workload.is_some() {
        write_atomic(&common.out_dir.join("arena.csv"), arena_csv.as_bytes())?;
    }
    Ok(())
}

pub fn modulate(
    common: &Common,
    checkpoint: Option<PathBuf>,
    etas: Option<String>,
    runs_per_eta: Option<usize>,
) -> Result<()> {
    let defaults = SynthConfig {
        feedback_scale: Some(1500.0),
        ..SynthConfig::default()
    };
    let mut keys = vec![
        key("checkpoint", ""),
        key("etas", "-1,-0.5,0,0.5,1"),
        key("runs_per_eta", 200),
        key("seed", 0),
        key("mode", "reading_ascent"),
        key("r_target", ""),
        key("zero_grad_policy", "skip"),
        key("permutations", 1000),
    ];
    keys.extend(synth_keys(&defaults, "lognormal:300:0.4"));
    let mut p = resolve(Params::new("modulate", keys), common)?;
    p.flag("checkpoint", checkpoint.map(|c| c.display().to_string()))?;
    p.flag("etas", etas)?;
    p.flag("runs_per_eta", runs_per_eta)?;

    let mode = match p.str("mode") {
        "reading_ascent" => ModulationMode::ReadingAscent,
        "target_seek" => ModulationMode::TargetSeek {
            r_target: p
                .opt("r_target")?
                .ok_or_else(|| anyhow!("target_seek needs r_target"))?,
        },
        other => bail!("mode must be reading_ascent or target_seek, got `{other}`"),
    };
    let base = ModulationConfig {
        eta: 0.0,
        mode,
        zero_grad_policy: p.get::<ZeroGradPolicy>("zero_grad_policy")?,
    };
    let ckpt = p.require_path("checkpoint")?;
    ensure!(ckpt.is_file(), "checkpoint not found: {}", ckpt.display());
    let model = GaugeModel::load(&ckpt)?;
    let world = SynthWorld::new(synth_config(&p, Mode::ClosedLoop)?)?;
    let etas: Vec<f64> = p.list("etas")?;
    let seed: u64 = p.get("seed")?;
    let permutations: usize = p.get("permutations")?;
    prepare_out_dir(&common.out_dir, "modulate", &p)?;

    let report = eta_sweep(&world, &model, &base, &etas, p.get("runs_per_eta")?, seed)?;
    let xs: Vec<f64> = report.runs.iter().map(|r| r.eta).collect();
    let ys: Vec<f64> = report.runs.iter().map(|r| r.length as f64).collect();
    let mut summary = report.summary_csv();
    if permutations > 0 {
        let mut perm_rng = rng::stream(seed, "permutation-test");
        match eval::permutation_threshold(&xs, &ys, permutations, 0.05, &mut perm_rng) {
            Ok(thr) => writeln!(summary, "perm_threshold_95,{},,", num(thr))?,
            Err(_) => writeln!(summary, "perm_threshold_95,nan,,")?,
        }
    }
    write_atomic(&common.out_dir.join("sweep_runs.csv"), report.runs_csv().as_bytes())?;
    write_atomic(&common.out_dir.join("sweep_summary.csv"), summary.as_bytes())?;
    for s in &report.summary {
        info!("eta {:+}: mean length {:.2} (std {:.2}, n {})", s.eta, s.mean_length, s.std, s.n);
    }
    info!("pearson(eta, mean length) = {:?}", report.pearson_means);
    Ok(())
}

/// Report files merged by `report`, with the merged table name.
pub const REPORT_TABLES: [(&str, &str); 3] = [
    ("length_report.csv", "table1_length.csv"),
    ("fuel_report.csv", "table2_fuel.csv"),
    ("alloc_summary.csv", "table3_alloc.csv"),
];

pub fn report(out_dir: &Path, run_dirs: &[PathBuf]) -> Result<()> {
    let mut tables: BTreeMap<&str, (String, Vec<String>)> = BTreeMap::new();
    for dir in run_dirs {
        ensure!(dir.is_dir(), "run directory not found: {}", dir.display());
        let mut found = false;
        for (input, output) in REPORT_TABLES {
            let path = dir.join(input);
            if !path.is_file() {
                continue;
            }
            found = true;
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let mut lines = text.lines();
            let header = lines.next().unwrap_or_default().to_owned();
            let entry = tables.entry(output).or_insert_with(|| (header.clone(), Vec::new()));
            ensure!(
                entry.0 == header,
                "schema mismatch in {}: `{header}` vs `{}`",
                path.display(),
                entry.0
            );
            let width = header.split(',').count();
            for line in lines.filter(|l| !l.is_empty()) {
                ensure!(
                    line.split(',').count() == width,
                    "row width mismatch in {}: `{line}`",
                    path.display()
                );
                entry.1.push(line.to_owned());
            }
        }
        ensure!(found, "no report tables in run directory {}", dir.display());
    }
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    for (name, (header, mut rows)) in tables {
        // Sort by (method, split), then by the full row for a total order.
        rows.sort_by(|a, b| {
            let key = |r: &str| r.splitn(3, ',').take(2).map(str::to_owned).collect::<Vec<_>>();
            key(a).cmp(&key(b)).then_with(|| a.cmp(b))
        });
        let mut text = format!("{header}\n");
        for r in rows {
            text.push_str(&r);
            text.push('\n');
        }
        write_atomic(&out_dir.join(name), text.as_bytes())?;
        info!("wrote {}", out_dir.join(name).display());
    }
    Ok(())
}
