use std::f64::consts::PI;

use crate::error::{Error, Result};

/// AdamW with decoupled weight decay:
/// `θ ← θ − lr·(m̂/(√v̂ + ε) + wd·θ)`.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr_base: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
}

impl AdamW {
    pub const DEFAULT_LR: f64 = 1e-3;
    pub const DEFAULT_WEIGHT_DECAY: f64 = 1e-4;

    pub fn new(n_params: usize, lr_base: f64, weight_decay: f64) -> Self {
        Self {
            lr_base,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }

    /// One update at learning rate `lr` (normally from [`cosine_warmup_lr`]).
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        Error::check_dim("adamw params", self.first_moment.len(), params.len())?;
        Error::check_dim("adamw grads", self.first_moment.len(), grads.len())?;
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * *p);
        }
        Ok(())
    }
}

/// Linear warm-up from 0 to `base_lr` over `[0, warmup]`, then half-cosine decay to 0 at `total`.
pub fn cosine_warmup_lr(step: u64, warmup: u64, total: u64, base_lr: f64) -> Result<f64> {
    if warmup == 0 || warmup >= total {
        return Err(Error::param(format!(
            "cosine schedule needs 0 < warmup < total (warmup={warmup}, total={total})"
        )));
    }
    if step > total {
        return Err(Error::param(format!("step {step} beyond schedule total {total}")));
    }
    if step <= warmup {
        return Ok(base_lr * step as f64 / warmup as f64);
    }
    let progress = (step - warmup) as f64 / (total - warmup) as f64;
    Ok((base_lr * 0.5 * (1.0 + (PI * progress).cos())).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grad_no_decay_is_identity() {
        let mut opt = AdamW::new(3, 1e-3, 0.0);
        let mut p = vec![1.0, -2.0, 0.5];
        opt.step(&mut p, &[0.0; 3], 1e-3).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn zero_grad_with_decay_scales() {
        let (lr, wd) = (1e-2, 0.1);
        let mut opt = AdamW::new(2, lr, wd);
        let mut p = vec![3.0, -0.25];
        let before = p.clone();
        opt.step(&mut p, &[0.0, 0.0], lr).unwrap();
        for (a, b) in p.iter().zip(before) {
            let expected = b * (1.0 - lr * wd);
            assert!((a - expected).abs() <= 1e-15 * expected.abs());
        }
    }

    #[test]
    fn single_scalar_first_step() {
        // m = 0.1·g, v = 0.001·g², bias corrections 0.1 and 0.001 → m̂ = g, v̂ = g².
        let (lr, wd, g, theta) = (0.01, 0.1, 0.5, 2.0);
        let mut opt = AdamW::new(1, lr, wd);
        let mut p = vec![theta];
        opt.step(&mut p, &[g], lr).unwrap();
        let expected = theta - lr * (g / (g.abs() + 1e-8) + wd * theta);
        assert!((p[0] - expected).abs() < 1e-15);
        assert!((opt.first_moment()[0] - 0.1 * g).abs() < 1e-15);
        assert!((opt.second_moment()[0] - 0.001 * g * g).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let mut opt = AdamW::new(2, 1e-3, 0.0);
        assert!(opt.step(&mut [0.0; 3], &[0.0; 3], 1e-3).is_err());
    }

    #[test]
    fn decay_monotone_with_zero_grads() {
        let mut opt = AdamW::new(1, 1e-3, 1e-2);
        let mut p = vec![5.0];
        let mut last = p[0];
        for _ in 0..100 {
            opt.step(&mut p, &[0.0], 1e-1).unwrap();
            assert!(p[0].abs() < last.abs());
            last = p[0];
        }
    }

    #[test]
    fn schedule_landmarks() {
        let base = 1e-3;
        assert_eq!(cosine_warmup_lr(0, 1000, 5000, base).unwrap(), 0.0);
        assert_eq!(cosine_warmup_lr(1000, 1000, 5000, base).unwrap(), base);
        assert!((cosine_warmup_lr(3000, 1000, 5000, base).unwrap() - base / 2.0).abs() < 1e-18);
        assert!(cosine_warmup_lr(5000, 1000, 5000, base).unwrap().abs() < 1e-18);
        assert!(cosine_warmup_lr(1, 1000, 1000, base).is_err());
        assert!(cosine_warmup_lr(1, 0, 1000, base).is_err());
        for s in 0..=5000 {
            assert!(cosine_warmup_lr(s, 1000, 5000, base).unwrap() >= 0.0);
        }
    }
}
