//! Single-epoch regression of random 8-step segments toward their fuel level
//! `1 − i/N` (or, for the Direct baseline, toward the total length `N`).

use log::warn;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::nn::{cosine_warmup_lr, AdamW, Architecture, LayerParams, Loss, Matrix, Tape};
use crate::rng;
use crate::traces::Trace;

use super::model::GaugeModel;

/// What the network output is regressed toward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    /// `1 − i/N` at window end `i`.
    Fuel,
    /// `N / max_len`, so that `output · max_len` predicts the length.
    Length { max_len: usize },
}

impl Target {
    fn value(&self, end: usize, n: usize) -> f64 {
        match *self {
            Target::Fuel => 1.0 - end as f64 / n as f64,
            Target::Length { max_len } => (n as f64 / max_len as f64).min(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub channels: usize,
    pub window: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub warmup_steps: u64,
    pub epochs: usize,
    pub loss: Loss,
    pub target: Target,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            channels: Architecture::DEFAULT_CHANNELS,
            window: Architecture::DEFAULT_WINDOW,
            batch_size: 32,
            lr: AdamW::DEFAULT_LR,
            weight_decay: AdamW::DEFAULT_WEIGHT_DECAY,
            warmup_steps: 1000,
            epochs: 1,
            loss: Loss::default(),
            target: Target::Fuel,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: GaugeModel,
    /// Mean loss of each optimizer step.
    pub step_losses: Vec<f64>,
    /// Learning rate used at each optimizer step.
    pub step_lrs: Vec<f64>,
    pub skipped_traces: usize,
    pub samples: usize,
}

/// Train from `traces`; deterministic given `seed`.
pub fn train_gauge(traces: &[&Trace], config: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    config.loss.validate()?;
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::param("batch_size and epochs must be ≥ 1"));
    }
    if let Target::Length { max_len: 0 } = config.target {
        return Err(Error::param("length target needs max_len ≥ 1"));
    }
    let first = traces
        .first()
        .ok_or_else(|| Error::InsufficientData("no training traces".into()))?;
    let arch = Architecture::new(first.dim(), config.channels, config.window)?;

    let mut samples: Vec<(usize, usize)> = Vec::new();
    let mut skipped = 0;
    for (i, trace) in traces.iter().enumerate() {
        Error::check_dim("training trace hidden dim", arch.hidden_dim, trace.dim())?;
        if trace.len() < arch.window {
            warn!(
                "skipping training trace {i}: length {} shorter than window {}",
                trace.len(),
                arch.window
            );
            skipped += 1;
            continue;
        }
        samples.extend((arch.window - 1..trace.len()).map(|end| (i, end)));
    }
    if samples.is_empty() {
        return Err(Error::InsufficientData(
            "every training trace is shorter than the window".into(),
        ));
    }

    let mut init_rng = rng::stream(seed, "train-init");
    let mut order_rng = rng::stream(seed, "train-order");
    let mut model = GaugeModel::init(arch, &mut init_rng);
    let mut opt = AdamW::new(arch.param_count(), config.lr, config.weight_decay);

    let steps_per_epoch = samples.len().div_ceil(config.batch_size);
    let total_steps = (steps_per_epoch * config.epochs) as u64;
    let warmup = if config.warmup_steps < total_steps {
        config.warmup_steps
    } else {
        let w = (total_steps / 10).max(1);
        warn!(
            "warm-up of {} steps does not fit in {total_steps} total steps; using {w}",
            config.warmup_steps
        );
        w
    };

    let mut grads = LayerParams::zeros(arch);
    let mut window = Matrix::zeros(arch.window, arch.hidden_dim);
    let mut tape = Tape::new();
    let mut step_losses = Vec::with_capacity(total_steps as usize);
    let mut step_lrs = Vec::with_capacity(total_steps as usize);
    let mut step: u64 = 0;
    for _ in 0..config.epochs {
        samples.shuffle(&mut order_rng);
        for batch in samples.chunks(config.batch_size) {
            grads.fill(0.0);
            let scale = 1.0 / batch.len() as f64;
            let mut loss_sum = 0.0;
            for &(ti, end) in batch {
                let trace = traces[ti];
                trace.fill_window(end, &mut window);
                let pred = tape.forward(model.params(), &window)?;
                let target = config.target.value(end, trace.len());
                let (loss, dloss) = config.loss.eval(pred, target);
                loss_sum += loss;
                tape.backward(model.params(), dloss * scale, &mut grads, None)?;
            }
            step += 1;
            let lr = if total_steps >= 2 {
                cosine_warmup_lr(step, warmup, total_steps, config.lr)?
            } else {
                config.lr
            };
            opt.step(model.params_mut().as_mut_slice(), grads.as_slice(), lr)?;
            step_losses.push(loss_sum * scale);
            step_lrs.push(lr);
        }
    }

    Ok(TrainOutcome {
        model,
        step_losses,
        step_lrs,
        skipped_traces: skipped,
        samples: samples.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traces::{LengthLaw, SynthConfig, SynthWorld};

    fn tiny_traces(count: u64) -> Vec<Trace> {
        let world = SynthWorld::new(SynthConfig {
            hidden_dim: 8,
            length_law: LengthLaw::LogNormal {
                mu: 40f64.ln(),
                sigma: 0.3,
            },
            ..SynthConfig::default()
        })
        .unwrap();
        (0..count).map(|s| world.gen_open_loop(s).unwrap()).collect()
    }

    #[test]
    fn deterministic_given_seed() {
        let traces = tiny_traces(6);
        let refs: Vec<&Trace> = traces.iter().collect();
        let cfg = TrainConfig {
            warmup_steps: 5,
            ..TrainConfig::default()
        };
        let a = train_gauge(&refs, &cfg, 3).unwrap();
        let b = train_gauge(&refs, &cfg, 3).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.step_losses, b.step_losses);
        let c = train_gauge(&refs, &cfg, 4).unwrap();
        assert_ne!(a.model, c.model);
    }

    #[test]
    fn short_traces_skipped_or_error() {
        let short = Trace::new(8, vec![0.0; 8 * 5], None, String::new()).unwrap();
        let traces = tiny_traces(2);
        let mut refs: Vec<&Trace> = traces.iter().collect();
        refs.push(&short);
        let out = train_gauge(&refs, &TrainConfig::default(), 0).unwrap();
        assert_eq!(out.skipped_traces, 1);
        assert!(matches!(
            train_gauge(&[&short], &TrainConfig::default(), 0),
            Err(Error::InsufficientData(_))
        ));
        assert!(train_gauge(&[], &TrainConfig::default(), 0).is_err());
    }

    #[test]
    fn one_epoch_covers_every_window_once() {
        let traces = tiny_traces(3);
        let refs: Vec<&Trace> = traces.iter().collect();
        let expected: usize = traces.iter().map(|t| t.len() - 7).sum();
        let out = train_gauge(&refs, &TrainConfig::default(), 1).unwrap();
        assert_eq!(out.samples, expected);
        assert_eq!(out.step_losses.len(), expected.div_ceil(32));
    }
}
