//! Synthetic hidden-state traces with a planted linear fuel signal.
//!
//! Each row is `gain·z·u + distractor + noise`, where `u` is a fixed unit
//! "fuel direction", `z` the remaining fuel, and the distractor a stationary,
//! anisotropic AR(1) walk rotated by a fixed random orthogonal matrix and
//! projected orthogonal to `u`. Two generators share this emission model:
//!
//! * open loop: the length `N` is drawn up front and `z_t = 1 − t/N`;
//! * closed loop: `z` is consumed step by step, read back from the (possibly
//!   modulated) emitted row, and drives a Bernoulli termination hazard.

use rand::Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::rng::{self, StreamRng};

use super::trace::{MetaBuilder, Trace};

/// Shortest synthetic trace; every trace supports one full 8-step window.
pub const MIN_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LengthLaw {
    LogNormal { mu: f64, sigma: f64 },
    Fixed(usize),
}

impl LengthLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LengthLaw::LogNormal { mu, sigma } if mu.is_finite() && sigma.is_finite() && sigma >= 0.0 => {
                Ok(())
            }
            LengthLaw::LogNormal { mu, sigma } => Err(Error::param(format!(
                "lognormal length law needs finite mu and sigma ≥ 0 (mu={mu}, sigma={sigma})"
            ))),
            LengthLaw::Fixed(0) => Err(Error::param("fixed length must be ≥ 1")),
            LengthLaw::Fixed(_) => Ok(()),
        }
    }

    /// Unrounded, unclamped draw.
    pub fn sample_raw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            LengthLaw::LogNormal { mu, sigma } => LogNormal::new(mu, sigma)
                .expect("validated parameters")
                .sample(rng),
            LengthLaw::Fixed(n) => n as f64,
        }
    }

    /// Draw rounded and clamped to `[MIN_LEN, max_len]`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, max_len: usize) -> usize {
        let raw = self.sample_raw(rng).round();
        let hi = max_len.max(MIN_LEN) as f64;
        raw.clamp(MIN_LEN as f64, hi) as usize
    }

    /// Same law with every length multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> LengthLaw {
        match *self {
            LengthLaw::LogNormal { mu, sigma } => LengthLaw::LogNormal {
                mu: mu + factor.ln(),
                sigma,
            },
            LengthLaw::Fixed(n) => LengthLaw::Fixed(((n as f64) * factor).round().max(1.0) as usize),
        }
    }
}

/// Per-step termination probability as a function of the remaining fuel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Hazard {
    /// `σ(slope·(threshold − z))`.
    Logistic { slope: f64, threshold: f64 },
    /// 1 once `z ≤ threshold`, else 0.
    Step { threshold: f64 },
    /// Fuel-independent.
    Constant { p: f64 },
}

impl Hazard {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Hazard::Logistic { slope, threshold } if slope.is_finite() && threshold.is_finite() => Ok(()),
            Hazard::Step { threshold } if threshold.is_finite() => Ok(()),
            Hazard::Constant { p } if p > 0.0 && p <= 1.0 => Ok(()),
            other => Err(Error::param(format!("invalid hazard {other:?}"))),
        }
    }

    pub fn prob(&self, fuel: f64) -> f64 {
        match *self {
            Hazard::Logistic { slope, threshold } => crate::nn::sigmoid(slope * (threshold - fuel)),
            Hazard::Step { threshold } => {
                if fuel <= threshold {
                    1.0
                } else {
                    0.0
                }
            }
            Hazard::Constant { p } => p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    OpenLoop,
    ClosedLoop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub hidden_dim: usize,
    /// Seed for the shared structure (fuel direction, rotation).
    pub world_seed: u64,
    /// Explicit unit fuel direction; drawn from `world_seed` when `None`.
    pub fuel_direction: Option<Vec<f64>>,
    pub signal_gain: f64,
    pub noise_std: f64,
    pub distractor_std: f64,
    /// AR(1) coefficient of the distractor walk, in `[0, 1)`.
    pub distractor_decay: f64,
    pub length_law: LengthLaw,
    pub max_len: usize,
    pub mode: Mode,
    pub hazard: Hazard,
    /// Closed loop: fuel is read back as `⟨h, u⟩ / feedback_scale`.
    /// `None` uses `signal_gain`.
    pub feedback_scale: Option<f64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            world_seed: 0,
            fuel_direction: None,
            signal_gain: 2.0,
            noise_std: 0.5,
            distractor_std: 1.0,
            distractor_decay: 0.95,
            length_law: LengthLaw::LogNormal {
                mu: 500f64.ln(),
                sigma: 0.5,
            },
            max_len: 16_384,
            mode: Mode::OpenLoop,
            hazard: Hazard::Logistic {
                slope: 100.0,
                threshold: 0.0,
            },
            feedback_scale: None,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 {
            return Err(Error::param("hidden_dim must be ≥ 1"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::param(format!("noise_std must be ≥ 0, got {}", self.noise_std)));
        }
        if !(self.distractor_std >= 0.0 && self.distractor_std.is_finite()) {
            return Err(Error::param("distractor_std must be ≥ 0"));
        }
        if !(0.0..1.0).contains(&self.distractor_decay) {
            return Err(Error::param("distractor_decay must lie in [0, 1)"));
        }
        if !self.signal_gain.is_finite() {
            return Err(Error::param("signal_gain must be finite"));
        }
        if self.max_len < 1 {
            return Err(Error::param("max_len must be ≥ 1"));
        }
        if let Some(s) = self.feedback_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::param("feedback_scale must be > 0"));
            }
        }
        if let Some(u) = &self.fuel_direction {
            Error::check_dim("fuel_direction", self.hidden_dim, u.len())?;
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::param(format!("fuel_direction must have unit norm, has {norm}")));
            }
        }
        self.length_law.validate()?;
        self.hazard.validate()
    }
}

/// Previously emitted (post-modulation) rows of a closed-loop run.
#[derive(Debug, Clone, Copy)]
pub struct History<'a> {
    rows: &'a [f64],
    dim: usize,
}

impl<'a> History<'a> {
    pub fn new(rows: &'a [f64], dim: usize) -> Self {
        Self { rows, dim }
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, t: usize) -> &'a [f64] {
        &self.rows[t * self.dim..(t + 1) * self.dim]
    }

    /// `W×d` window whose last row is `current` and whose earlier rows come
    /// from history, left-padded with the first available row.
    pub fn window_with(&self, current: &[f64], width: usize) -> Matrix {
        let mut m = Matrix::zeros(width, self.dim);
        let t = self.len();
        for r in 0..width {
            let idx = (t + r + 1).saturating_sub(width);
            let src = if idx == t { current } else { self.row(idx) };
            m.row_mut(r).copy_from_slice(src);
        }
        m
    }
}

/// Per-step hidden-state intervention applied inside the closed loop.
pub trait Modulator {
    fn modulate(&mut self, step: usize, history: &History<'_>, current: &mut [f64]) -> Result<()>;
}

/// Adds `delta·direction` to every emitted row.
#[derive(Debug, Clone)]
pub struct ConstantShift {
    pub direction: Vec<f64>,
    pub delta: f64,
}

impl Modulator for ConstantShift {
    fn modulate(&mut self, _step: usize, _history: &History<'_>, current: &mut [f64]) -> Result<()> {
        Error::check_dim("shift direction", current.len(), self.direction.len())?;
        for (h, u) in current.iter_mut().zip(&self.direction) {
            *h += self.delta * u;
        }
        Ok(())
    }
}

/// Fixed structure shared by all traces generated from one config.
#[derive(Debug, Clone)]
pub struct SynthWorld {
    config: SynthConfig,
    fuel_direction: Vec<f64>,
    rotation: Matrix,
    scales: Vec<f64>,
}

impl SynthWorld {
    pub fn new(config: SynthConfig) -> Result<Self> {
        config.validate()?;
        let d = config.hidden_dim;
        let mut rng = rng::stream(config.world_seed, "synth-world");
        let fuel_direction = match &config.fuel_direction {
            Some(u) => u.clone(),
            None => {
                let mut u: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                normalize(&mut u);
                u
            }
        };
        let rotation = random_orthogonal(d, &mut rng);
        let scales = (0..d)
            .map(|j| config.distractor_std * (1.5 - j as f64 / d as f64))
            .collect();
        Ok(Self {
            config,
            fuel_direction,
            rotation,
            scales,
        })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.config
    }

    pub fn fuel_direction(&self) -> &[f64] {
        &self.fuel_direction
    }

    fn feedback_scale(&self) -> f64 {
        self.config.feedback_scale.unwrap_or(self.config.signal_gain)
    }

    /// Generate according to `config.mode` (closed loop without modulation).
    pub fn generate(&self, seed: u64) -> Result<Trace> {
        match self.config.mode {
            Mode::OpenLoop => self.gen_open_loop(seed),
            Mode::ClosedLoop => self.gen_closed_loop(seed, None),
        }
    }

    /// Open-loop trace: length drawn up front, fuel `1 − t/N`.
    pub fn gen_open_loop(&self, seed: u64) -> Result<Trace> {
        let (n, rows) = self.open_loop_rows(seed);
        let hidden = rows.iter().map(|v| *v as f32).collect();
        let meta = MetaBuilder::new()
            .set("source", "synthetic")
            .set("mode", "open_loop")
            .set("seed", seed)
            .set("terminated", true)
            .build();
        debug_assert_eq!(rows.len(), n * self.config.hidden_dim);
        Trace::new(self.config.hidden_dim, hidden, None, meta)
    }

    /// The `f64` rows behind [`Self::gen_open_loop`], before `f32` storage.
    pub fn open_loop_rows(&self, seed: u64) -> (usize, Vec<f64>) {
        let d = self.config.hidden_dim;
        let mut rng = rng::stream(seed, "synth-trace");
        let n = self.config.length_law.sample(&mut rng, self.config.max_len);
        let mut walk = Distractor::new(self, &mut rng);
        let mut rows = Vec::with_capacity(n * d);
        let mut row = vec![0.0; d];
        for t in 0..n {
            let fuel = 1.0 - t as f64 / n as f64;
            self.emit(fuel, &walk, &mut rng, &mut row);
            rows.extend_from_slice(&row);
            walk.advance(&mut rng);
        }
        (n, rows)
    }

    /// Closed-loop trace; `modulator` is applied to each row before it is
    /// read back.
    pub fn gen_closed_loop(&self, seed: u64, modulator: Option<&mut dyn Modulator>) -> Result<Trace> {
        let run = self.closed_loop(seed, modulator, false)?;
        let hidden = run.rows.iter().map(|v| *v as f32).collect();
        let eoc: Vec<f32> = run.hazards.iter().map(|p| *p as f32).collect();
        let meta = MetaBuilder::new()
            .set("source", "synthetic")
            .set("mode", "closed_loop")
            .set("seed", seed)
            .set("budget", run.budget)
            .set("terminated", run.terminated)
            .build();
        Trace::new(self.config.hidden_dim, hidden, Some(eoc), meta)
    }

    /// Realized length only (skips building the trace).
    pub fn closed_loop_length(&self, seed: u64, modulator: Option<&mut dyn Modulator>) -> Result<usize> {
        Ok(self.closed_loop(seed, modulator, false)?.hazards.len())
    }

    /// Hazard sequence of a run that ignores termination draws, out to
    /// `max_len` steps. With `noise_std = 0` and no modulation this is the
    /// deterministic hazard profile of the run with this seed.
    pub fn hazard_profile(&self, seed: u64) -> Result<Vec<f64>> {
        Ok(self.closed_loop(seed, None, true)?.hazards)
    }

    fn closed_loop(
        &self,
        seed: u64,
        mut modulator: Option<&mut dyn Modulator>,
        ignore_termination: bool,
    ) -> Result<ClosedLoopRun> {
        let d = self.config.hidden_dim;
        let mut rng = rng::stream(seed, "synth-trace");
        let budget = self.config.length_law.sample(&mut rng, self.config.max_len);
        let mut walk = Distractor::new(self, &mut rng);
        let feedback = self.feedback_scale();
        let u = &self.fuel_direction;

        let mut rows: Vec<f64> = Vec::new();
        let mut hazards = Vec::new();
        let mut clean = vec![0.0; d];
        let mut row = vec![0.0; d];
        let mut offset = 0.0;
        let mut terminated = false;
        for t in 0..self.config.max_len {
            let fuel = 1.0 - t as f64 / budget as f64 + offset;
            self.emit_clean(fuel, &walk, &mut clean);
            self.add_noise(&clean, &mut rng, &mut row);
            if let Some(m) = modulator.as_deref_mut() {
                m.modulate(t, &History::new(&rows, d), &mut row)?;
            }
            if feedback != 0.0 {
                let deviation: f64 = row
                    .iter()
                    .zip(&clean)
                    .zip(u)
                    .map(|((h, c), u)| (h - c) * u)
                    .sum();
                offset += deviation / feedback;
            }
            let next_fuel = 1.0 - (t + 1) as f64 / budget as f64 + offset;
            let p = self.config.hazard.prob(next_fuel);
            rows.extend_from_slice(&row);
            hazards.push(p);
            let draw: f64 = rng.random();
            if !ignore_termination && draw < p {
                terminated = true;
                break;
            }
            walk.advance(&mut rng);
        }
        Ok(ClosedLoopRun {
            rows,
            hazards,
            budget,
            terminated,
        })
    }

    fn emit(&self, fuel: f64, walk: &Distractor, rng: &mut StreamRng, out: &mut [f64]) {
        let mut clean = vec![0.0; out.len()];
        self.emit_clean(fuel, walk, &mut clean);
        self.add_noise(&clean, rng, out);
    }

    fn emit_clean(&self, fuel: f64, walk: &Distractor, out: &mut [f64]) {
        let d = self.config.hidden_dim;
        let u = &self.fuel_direction;
        // rotated, scaled walk
        for (i, o) in out.iter_mut().enumerate() {
            let r_row = self.rotation.row(i);
            *o = (0..d).map(|j| r_row[j] * self.scales[j] * walk.state[j]).sum();
        }
        let along: f64 = out.iter().zip(u).map(|(x, u)| x * u).sum();
        let gain = self.config.signal_gain * fuel;
        for (o, u) in out.iter_mut().zip(u) {
            *o += (gain - along) * u;
        }
    }

    fn add_noise(&self, clean: &[f64], rng: &mut StreamRng, out: &mut [f64]) {
        let sigma = self.config.noise_std;
        for (o, c) in out.iter_mut().zip(clean) {
            let e: f64 = rng.sample(StandardNormal);
            *o = c + sigma * e;
        }
    }
}

struct ClosedLoopRun {
    rows: Vec<f64>,
    hazards: Vec<f64>,
    budget: usize,
    terminated: bool,
}

/// Stationary AR(1) walk with unit marginal variance per coordinate.
struct Distractor {
    state: Vec<f64>,
    decay: f64,
}

impl Distractor {
    fn new(world: &SynthWorld, rng: &mut StreamRng) -> Self {
        let state = (0..world.config.hidden_dim)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        Self {
            state,
            decay: world.config.distractor_decay,
        }
    }

    fn advance(&mut self, rng: &mut StreamRng) {
        let innov = (1.0 - self.decay * self.decay).sqrt();
        for s in &mut self.state {
            let e: f64 = rng.sample(StandardNormal);
            *s = self.decay * *s + innov * e;
        }
    }
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v {
            *x /= norm;
        }
    }
}

/// Orthogonal matrix from Gram–Schmidt on a Gaussian matrix.
fn random_orthogonal(d: usize, rng: &mut StreamRng) -> Matrix {
    let mut q = Matrix::zeros(d, d);
    let mut i = 0;
    while i < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for k in 0..i {
            let proj: f64 = v.iter().zip(q.row(k)).map(|(a, b)| a * b).sum();
            for (a, b) in v.iter_mut().zip(q.row(k)) {
                *a -= proj * b;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        for (dst, x) in q.row_mut(i).iter_mut().zip(&v) {
            *dst = x / norm;
        }
        i += 1;
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(mode: Mode) -> SynthConfig {
        SynthConfig {
            hidden_dim: 16,
            length_law: LengthLaw::LogNormal {
                mu: 60f64.ln(),
                sigma: 0.3,
            },
            max_len: 4096,
            mode,
            ..SynthConfig::default()
        }
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn rotation_is_orthogonal() {
        let world = SynthWorld::new(small(Mode::OpenLoop)).unwrap();
        let d = 16;
        for i in 0..d {
            for j in 0..d {
                let v = dot(world.rotation.row(i), world.rotation.row(j));
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((v - expected).abs() < 1e-12);
            }
        }
        let norm = dot(world.fuel_direction(), world.fuel_direction());
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_projection_is_exact_signal() {
        let cfg = SynthConfig {
            noise_std: 0.0,
            ..small(Mode::OpenLoop)
        };
        let world = SynthWorld::new(cfg.clone()).unwrap();
        let (n, rows) = world.open_loop_rows(11);
        let u = world.fuel_direction();
        for t in 0..n {
            let row = &rows[t * 16..(t + 1) * 16];
            let expected = cfg.signal_gain * (1.0 - t as f64 / n as f64);
            assert!((dot(row, u) - expected).abs() < 1e-12, "step {t}");
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let world = SynthWorld::new(small(Mode::OpenLoop)).unwrap();
        assert_eq!(world.gen_open_loop(5).unwrap(), world.gen_open_loop(5).unwrap());
        assert_ne!(world.gen_open_loop(5).unwrap(), world.gen_open_loop(6).unwrap());
        let world = SynthWorld::new(small(Mode::ClosedLoop)).unwrap();
        assert_eq!(world.generate(5).unwrap(), world.generate(5).unwrap());
    }

    #[test]
    fn lengths_clamped() {
        let cfg = SynthConfig {
            length_law: LengthLaw::LogNormal { mu: 0.0, sigma: 0.1 },
            ..small(Mode::OpenLoop)
        };
        let world = SynthWorld::new(cfg).unwrap();
        assert_eq!(world.gen_open_loop(1).unwrap().len(), MIN_LEN);
        let cfg = SynthConfig {
            length_law: LengthLaw::Fixed(10_000),
            max_len: 100,
            ..small(Mode::OpenLoop)
        };
        assert_eq!(SynthWorld::new(cfg).unwrap().gen_open_loop(1).unwrap().len(), 100);
    }

    #[test]
    fn deterministic_threshold_crossing() {
        for n0 in [8usize, 49, 100, 333] {
            let cfg = SynthConfig {
                noise_std: 0.0,
                length_law: LengthLaw::Fixed(n0),
                hazard: Hazard::Step { threshold: 0.0 },
                ..small(Mode::ClosedLoop)
            };
            let world = SynthWorld::new(cfg).unwrap();
            let t = world.gen_closed_loop(3, None).unwrap();
            assert_eq!(t.len(), n0);
            assert_eq!(t.terminated(), Some(true));
            assert_eq!(t.eoc_prob().unwrap()[n0 - 1], 1.0);
        }
    }

    #[test]
    fn max_len_stops_unterminated() {
        let cfg = SynthConfig {
            hazard: Hazard::Step { threshold: -10.0 },
            max_len: 50,
            ..small(Mode::ClosedLoop)
        };
        let t = SynthWorld::new(cfg).unwrap().generate(0).unwrap();
        assert_eq!(t.len(), 50);
        assert_eq!(t.terminated(), Some(false));
    }

    #[test]
    fn noise_and_distractor_leave_projection_for_closed_loop_latent() {
        let cfg = SynthConfig {
            noise_std: 0.0,
            length_law: LengthLaw::Fixed(40),
            hazard: Hazard::Step { threshold: 0.0 },
            ..small(Mode::ClosedLoop)
        };
        let world = SynthWorld::new(cfg.clone()).unwrap();
        let t = world.gen_closed_loop(2, None).unwrap();
        for step in 0..t.len() {
            let row: Vec<f64> = t.row(step).iter().map(|v| f64::from(*v)).collect();
            let expected = cfg.signal_gain * (1.0 - step as f64 / 40.0);
            assert!((dot(&row, world.fuel_direction()) - expected).abs() < 1e-5);
        }
    }

    #[test]
    fn invalid_configs() {
        let bad = |f: fn(&mut SynthConfig)| {
            let mut c = SynthConfig::default();
            f(&mut c);
            SynthWorld::new(c).is_err()
        };
        assert!(bad(|c| c.noise_std = -1.0));
        assert!(bad(|c| c.max_len = 0));
        assert!(bad(|c| c.length_law = LengthLaw::LogNormal { mu: 1.0, sigma: -1.0 }));
        assert!(bad(|c| c.hazard = Hazard::Constant { p: 0.0 }));
        assert!(bad(|c| c.fuel_direction = Some(vec![1.0; 64])));
        assert!(bad(|c| c.distractor_decay = 1.0));
    }
}
