//! Acceptance checks, one line per criterion. Run with
//! `cargo test -p fuelgauge-cli --test acceptance`.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;

use fuelgauge::eval::{
    evaluate_fuel, evaluate_length, pearson, permutation_threshold, FuelEstimator, Gauge, LengthPredictor,
    StaticLength, TraceScore,
};
use fuelgauge::gauge::{predict_length, train_gauge, DirectHead, FuelSeries, GaugeModel, RunOptions, Target, TrainConfig};
use fuelgauge::kv_alloc::{AllocationPolicy, OnDemand, OneShotOracle, Predictive, PredictiveParams};
use fuelgauge::modulation::{eta_sweep, ModulationConfig};
use fuelgauge::nn::{backward, forward, forward_recorded, Architecture, LayerParams, Matrix};
use fuelgauge::rng;
use fuelgauge::traces::{
    expected_length, read_trace, write_trace, Hazard, Hazards, LengthLaw, Mode, SynthConfig, SynthWorld, Trace,
};

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn timed(limit: Duration, start: Instant) -> Result<f64, String> {
    let secs = start.elapsed().as_secs_f64();
    if start.elapsed() > limit {
        Err(format!("took {secs:.1}s, limit {}s", limit.as_secs()))
    } else {
        Ok(secs)
    }
}

// Gradients

fn random_params(arch: Architecture, r: &mut impl Rng) -> LayerParams {
    let mut p = LayerParams::zeros(arch);
    for v in p.as_mut_slice() {
        *v = r.random_range(-1.0..1.0);
    }
    p
}

fn gradient_fidelity() -> Check {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for case in 0..20u64 {
        let mut r = rng::stream(case, "acceptance-grad");
        let arch = Architecture::new(r.random_range(1..8), r.random_range(1..7), r.random_range(1..9)).map_err(e)?;
        let mut params = random_params(arch, &mut r);
        let data = (0..arch.window * arch.hidden_dim).map(|_| r.random_range(-1.5..1.5)).collect();
        let window = Matrix::from_vec(arch.window, arch.hidden_dim, data).map_err(e)?;
        let acts = forward_recorded(&params, &window).map_err(e)?;
        let mut grad = LayerParams::zeros(arch);
        backward(&params, &acts, 1.0, &mut grad, None).map_err(e)?;
        let h = 1e-5;
        for i in 0..params.len() {
            let orig = params.as_slice()[i];
            params.as_mut_slice()[i] = orig + h;
            let up = forward(&params, &window).map_err(e)?;
            params.as_mut_slice()[i] = orig - h;
            let down = forward(&params, &window).map_err(e)?;
            params.as_mut_slice()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = grad.as_slice()[i];
            worst = worst.max((an - fd).abs() / an.abs().max(fd.abs()).max(1e-6));
        }
    }
    let secs = timed(Duration::from_secs(10), start)?;
    ensure(worst < 1e-4, format!("20 configs, max relative error {worst:.2e}, {secs:.2}s"))
}

// Stage 2

fn stage2_exactness() -> Check {
    // Exact linear readings recover the length at every step past the first.
    for n in [17usize, 250, 4096] {
        let mut s = FuelSeries::new();
        for t in 0..n {
            s.push(t, 1.0 - t as f64 / n as f64).map_err(e)?;
            if t >= 1 {
                let est = s.estimate(t, 100_000);
                if est.degenerate || (est.predicted_length - n as f64).abs() > 1e-9 * n as f64 {
                    return Err(format!("n={n} t={t}: {est:?}"));
                }
            }
        }
    }
    // Least squares through (0, 1) against a ternary search on the loss.
    let mut worst: f64 = 0.0;
    for case in 0..50u64 {
        let mut r = rng::stream(case, "acceptance-ls");
        let n = r.random_range(2..300);
        let ys: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
        let mut s = FuelSeries::new();
        for (t, y) in ys.iter().enumerate() {
            s.push(t, *y).map_err(e)?;
        }
        let k = s.fit_slope().map_err(e)?;
        let loss = |k: f64| ys.iter().enumerate().map(|(t, y)| (y - 1.0 - k * t as f64).powi(2)).sum::<f64>();
        let (mut lo, mut hi) = (-10.0f64, 10.0f64);
        for _ in 0..300 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if loss(m1) < loss(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        worst = worst.max((k - (lo + hi) / 2.0).abs());
    }
    if worst > 1e-9 {
        return Err(format!("slope differs from brute force by {worst:.2e}"));
    }
    let flat = predict_length(0.0, 5, 1000);
    let rising = predict_length(0.01, 5, 1000);
    ensure(
        flat.degenerate && rising.degenerate && flat.predicted_length == 1000.0,
        format!("exact on linear readings, LS within {worst:.1e}, k >= 0 degenerate"),
    )
}

// Hazard oracle

fn hazard_oracle() -> Check {
    let start = Instant::now();
    let mut details = Vec::new();
    for p in [0.5, 0.1, 0.01] {
        let res = expected_length(Hazards::Constant(p), 1e-12).map_err(e)?;
        let err = (res.expected - 1.0 / p).abs();
        if err > 1e-6 {
            return Err(format!("p={p}: oracle {} vs {}", res.expected, 1.0 / p));
        }
        let world = SynthWorld::new(SynthConfig {
            hidden_dim: 4,
            mode: Mode::ClosedLoop,
            hazard: Hazard::Constant { p },
            max_len: 1_000_000,
            ..SynthConfig::default()
        })
        .map_err(e)?;
        let lens: Vec<f64> = (0..10_000u64)
            .map(|s| world.closed_loop_length(s, None).map(|n| n as f64))
            .collect::<Result<_, _>>()
            .map_err(e)?;
        let n = lens.len() as f64;
        let mean = lens.iter().sum::<f64>() / n;
        let var = lens.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        if (mean - res.expected).abs() > 3.0 * se {
            return Err(format!("p={p}: Monte Carlo mean {mean:.3} vs {} (se {se:.3})", res.expected));
        }
        details.push(format!("p={p} mc {mean:.2}±{se:.2}"));
    }
    let secs = timed(Duration::from_secs(30), start)?;
    Ok(format!("oracle within 1e-6; {}; {secs:.1}s", details.join(", ")))
}

// Shared experiment data

struct Data {
    train: Vec<Trace>,
    test: Vec<(String, Trace)>,
    shifted: Vec<(String, Trace)>,
    gauge: GaugeModel,
    direct: DirectHead,
}

fn build_data() -> Result<Data, String> {
    let config = SynthConfig::default();
    let world = SynthWorld::new(config.clone()).map_err(e)?;
    let shifted_world = SynthWorld::new(SynthConfig {
        length_law: config.length_law.scaled(4.0),
        ..config.clone()
    })
    .map_err(e)?;
    let gen = |w: &SynthWorld, range: std::ops::Range<u64>| -> Result<Vec<Trace>, String> {
        range.map(|i| w.generate(rng::derive_seed(0, "gen", i)).map_err(e)).collect()
    };
    let ids = |v: Vec<Trace>| v.into_iter().enumerate().map(|(i, t)| (format!("t{i:04}"), t)).collect();
    let train = gen(&world, 0..200)?;
    let test = ids(gen(&world, 1000..1150)?);
    let shifted = ids(gen(&shifted_world, 2000..2150)?);
    let refs: Vec<&Trace> = train.iter().collect();
    let gauge = train_gauge(&refs, &TrainConfig::default(), 0).map_err(e)?.model;
    let max_len = RunOptions::default().max_len;
    let direct_cfg = TrainConfig {
        target: Target::Length { max_len },
        ..TrainConfig::default()
    };
    let direct = DirectHead::new(train_gauge(&refs, &direct_cfg, 0).map_err(e)?.model, max_len);
    Ok(Data {
        train,
        test,
        shifted,
        gauge,
        direct,
    })
}

fn ratio(scores: &[(TraceScore, Vec<fuelgauge::eval::StepRow>)]) -> f64 {
    let num: f64 = scores.iter().map(|(s, _)| s.numerator).sum();
    let den: f64 = scores.iter().map(|(s, _)| s.denominator).sum();
    num / den
}

fn train_lengths(d: &Data) -> Vec<usize> {
    d.train.iter().map(Trace::len).collect()
}

fn fuel_ordering(d: &Data) -> Check {
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(e)?;
    let lens = train_lengths(d);
    let gauge = Gauge::new(d.gauge.clone(), RunOptions::default());
    let mean = StaticLength::mean(&lens).map_err(e)?;
    let median = StaticLength::median(&lens).map_err(e)?;
    let score = |m: &dyn FuelEstimator| pool.install(|| evaluate_fuel(m, &d.test, 1)).map(|s| ratio(&s)).map_err(e);
    let (g, mn, md) = (score(&gauge)?, score(&mean)?, score(&median)?);
    let secs = timed(Duration::from_secs(300), start)?;
    ensure(
        g < mn && g < md,
        format!("fuel rMAE gauge {g:.3} < mean {mn:.3}, median {md:.3}; single thread {secs:.1}s"),
    )
}

fn length_ordering(d: &Data) -> Check {
    let lens = train_lengths(d);
    let gauge = Gauge::new(d.gauge.clone(), RunOptions::default());
    let mean = StaticLength::mean(&lens).map_err(e)?;
    let median = StaticLength::median(&lens).map_err(e)?;
    let score = |m: &dyn LengthPredictor| evaluate_length(m, &d.shifted, 1).map(|s| ratio(&s)).map_err(e);
    let (g, mn, md, dr) = (score(&gauge)?, score(&mean)?, score(&median)?, score(&d.direct)?);
    ensure(
        g < mn && g < md && g < dr,
        format!("x4 length shift rMAE gauge {g:.3} < mean {mn:.3}, median {md:.3}, direct {dr:.3}"),
    )
}

fn allocation(d: &Data) -> Check {
    let lens = train_lengths(d);
    let mean = lens.iter().sum::<usize>() as f64 / lens.len() as f64;
    let hf = OnDemand { block: 16 };
    let predictive = Predictive::new(
        Box::new(Gauge::new(d.gauge.clone(), RunOptions::default())),
        PredictiveParams::default(),
        Some(mean),
    );
    let (mut hf_total, mut pred_total) = (0usize, 0usize);
    for (id, t) in &d.test {
        let h = hf.simulate(id, t).map_err(e)?;
        if h.alloc_count() != t.len().div_ceil(16) {
            return Err(format!("{id}: hf {} vs ceil({}/16)", h.alloc_count(), t.len()));
        }
        let o = OneShotOracle.simulate(id, t).map_err(e)?;
        if o.alloc_count() != 1 {
            return Err(format!("{id}: oracle made {} allocations", o.alloc_count()));
        }
        hf_total += h.alloc_count();
        pred_total += predictive.simulate(id, t).map_err(e)?.alloc_count();
    }
    let n = d.test.len() as f64;
    let (h, p) = (hf_total as f64 / n, pred_total as f64 / n);
    ensure(
        h >= 2.0 * p,
        format!("hf {h:.2} = ceil(N/16), oracle 1, predictive {p:.2} ({:.1}x fewer)", h / p),
    )
}

// Modulation

fn sweep_world(gain: f64) -> Result<SynthWorld, String> {
    SynthWorld::new(SynthConfig {
        signal_gain: gain,
        length_law: LengthLaw::LogNormal {
            mu: 300f64.ln(),
            sigma: 0.4,
        },
        mode: Mode::ClosedLoop,
        feedback_scale: Some(1500.0),
        ..SynthConfig::default()
    })
    .map_err(e)
}

fn sweep_gauge(world: &SynthWorld) -> Result<GaugeModel, String> {
    let open = SynthWorld::new(SynthConfig {
        mode: Mode::OpenLoop,
        ..world.config().clone()
    })
    .map_err(e)?;
    let traces: Vec<Trace> = (0..200).map(|i| open.generate(i).map_err(e)).collect::<Result<_, _>>()?;
    let refs: Vec<&Trace> = traces.iter().collect();
    Ok(train_gauge(&refs, &TrainConfig::default(), 0).map_err(e)?.model)
}

fn eta_monotone() -> Check {
    let etas = [-2.0, -1.0, 0.0, 1.0, 2.0];
    let world = sweep_world(SynthConfig::default().signal_gain)?;
    let model = sweep_gauge(&world)?;
    let report = eta_sweep(&world, &model, &ModulationConfig::default(), &etas, 200, 0).map_err(e)?;
    let r = report.pearson_means.ok_or("undefined correlation")?;
    let means: Vec<String> = report.summary.iter().map(|s| format!("{:.1}", s.mean_length)).collect();

    // Negative control: the hidden state carries no fuel signal.
    let blind = sweep_world(0.0)?;
    let blind_model = sweep_gauge(&blind)?;
    let control = eta_sweep(&blind, &blind_model, &ModulationConfig::default(), &etas, 200, 0).map_err(e)?;
    let xs: Vec<f64> = control.runs.iter().map(|r| r.eta).collect();
    let ys: Vec<f64> = control.runs.iter().map(|r| r.length as f64).collect();
    let rc = pearson(&xs, &ys).map_err(e)?;
    let threshold = permutation_threshold(&xs, &ys, 1000, 0.05, &mut rng::stream(0, "perm")).map_err(e)?;
    ensure(
        r.abs() >= 0.9 && rc.abs() < threshold,
        format!(
            "pearson(eta, mean) {r:.3} over means [{}]; control |r| {:.3} < 95% threshold {threshold:.3}",
            means.join(", "),
            rc.abs()
        ),
    )
}

// Throughput

fn throughput() -> Check {
    let arch = Architecture::new(2560, 32, 8).map_err(e)?;
    let (w, d, c) = (8usize, 2560usize, 32usize);
    let expected = w * d + d * c + c + c * c + c + c + 1;
    let mut r = rng::stream(0, "throughput");
    let params = random_params(arch, &mut r);
    if params.len() != expected || expected != 103_521 {
        return Err(format!("parameter count {} vs {expected}", params.len()));
    }
    let windows: Vec<Matrix> = (0..64)
        .map(|_| Matrix::from_vec(w, d, (0..w * d).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap())
        .collect();
    let start = Instant::now();
    let mut count = 0usize;
    let mut sink = 0.0;
    while start.elapsed() < Duration::from_secs(1) {
        for win in &windows {
            sink += forward(&params, win).map_err(e)?;
        }
        count += windows.len();
    }
    let rate = count as f64 / start.elapsed().as_secs_f64();
    ensure(
        rate >= 10_000.0 && sink.is_finite(),
        format!("{rate:.0} windows/s single-threaded at 2560/32/8, {expected} parameters"),
    )
}

// Reproducibility

fn random_trace(r: &mut impl Rng, i: usize) -> Trace {
    let d = r.random_range(1..17);
    let n = r.random_range(1..200);
    let hidden = (0..d * n).map(|_| r.random_range(-1e3f32..1e3)).collect();
    let eoc = r.random_bool(0.5).then(|| (0..n).map(|_| r.random_range(0.0f32..1.0)).collect());
    Trace::new(d, hidden, eoc, format!("id=r{i}\nnote=x")).unwrap()
}

fn same_trace(a: &Trace, b: &Trace) -> bool {
    let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    a.dim() == b.dim()
        && bits(a.hidden()) == bits(b.hidden())
        && a.eoc_prob().map(bits) == b.eoc_prob().map(bits)
        && a.meta() == b.meta()
}

fn cli(cwd: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_fuelgauge"))
        .current_dir(cwd)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(e)?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn pipeline(root: &Path, threads: &str) -> Result<(), String> {
    // Relative paths keep the recorded config snapshots comparable.
    std::fs::create_dir_all(root).map_err(e)?;
    let p = |s: &str| s.to_owned();
    let cli = |args: &[&str]| cli(root, args);
    let (data, ckpt, manifest) = (p("data"), p("ckpt"), p("data/manifest.txt"));
    let small = ["--set", "hidden_dim=16", "--set", "length_law=lognormal:120:0.4"];
    let mut args = vec!["--threads", threads, "gen", "--out-dir", &data, "--count", "40", "--seed", "3"];
    args.extend(small);
    args.extend(["--set", "n_train=20", "--set", "n_val=5"]);
    cli(&args)?;
    for method in ["gauge", "direct"] {
        cli(&["--threads", threads, "train", "--out-dir", &ckpt, "--manifest", &manifest, "--method", method])?;
    }
    let fuel = p("fuel");
    cli(&["--threads", threads, "eval-fuel", "--out-dir", &fuel, "--manifest", &manifest, "--methods", "gauge,mean,median", "--checkpoint-dir", &ckpt])?;
    let length = p("length");
    cli(&["--threads", threads, "eval-length", "--out-dir", &length, "--manifest", &manifest, "--methods", "gauge,direct,mean,median", "--checkpoint-dir", &ckpt, "--set", "dump_steps=true"])?;
    let alloc = p("alloc");
    cli(&["--threads", threads, "sim-alloc", "--out-dir", &alloc, "--manifest", &manifest, "--policies", "hf,oracle,predictive", "--checkpoint-dir", &ckpt])?;
    let ck = p("ckpt/gauge_seed0.fgnn");
    let modulate = p("modulate");
    let mut args = vec!["--threads", threads, "modulate", "--out-dir", &modulate, "--checkpoint", &ck, "--etas", "-1,0,1", "--runs-per-eta", "8"];
    args.extend(small);
    args.extend(["--set", "permutations=50"]);
    cli(&args)?;
    cli(&["report", "--out-dir", &p("report"), &fuel, &length, &alloc])
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn reproducibility() -> Check {
    let dir = tempfile::tempdir().map_err(e)?;
    let mut r = rng::stream(0, "acceptance-fgt1");
    for i in 0..1000 {
        let t = random_trace(&mut r, i);
        let path = dir.path().join("t.fgt");
        write_trace(&t, &path).map_err(e)?;
        if !same_trace(&t, &read_trace(&path).map_err(e)?) {
            return Err(format!("trace {i} did not round-trip"));
        }
    }
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    pipeline(&a, "1")?;
    pipeline(&b, "4")?;
    let (fa, fb) = (files(&a), files(&b));
    if fa != fb {
        return Err(format!("file sets differ: {fa:?} vs {fb:?}"));
    }
    for f in &fa {
        if std::fs::read(a.join(f)).map_err(e)? != std::fs::read(b.join(f)).map_err(e)? {
            return Err(format!("{} differs between runs", f.display()));
        }
    }
    Ok(format!("1000 traces round-trip; {} CLI outputs byte-identical at 1 and 4 threads", fa.len()))
}

fn main() {
    let mut failed = 0;
    let mut report = |name: &str, check: Check| {
        match check {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    };
    report("gradient_fidelity", gradient_fidelity());
    report("stage2_exactness", stage2_exactness());
    report("hazard_oracle", hazard_oracle());
    match build_data() {
        Ok(d) => {
            report("fuel_rmae_ordering", fuel_ordering(&d));
            report("length_rmae_shift_ordering", length_ordering(&d));
            report("kv_allocation", allocation(&d));
        }
        Err(err) => {
            for name in ["fuel_rmae_ordering", "length_rmae_shift_ordering", "kv_allocation"] {
                report(name, Err(format!("data setup failed: {err}")));
            }
        }
    }
    report("eta_sweep", eta_monotone());
    report("throughput", throughput());
    report("reproducibility", reproducibility());
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
