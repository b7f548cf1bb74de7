use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Relative mean absolute error `Σ|y − ŷ| / Σ|ŷ|` of predictions `y` against
/// ground truth `ŷ`.
pub fn rmae(preds: &[f64], truths: &[f64]) -> Result<f64> {
    let (num, den) = rmae_terms(preds, truths)?;
    if den == 0.0 {
        return Err(Error::UndefinedMetric("rMAE with all-zero ground truth"));
    }
    Ok(num / den)
}

/// `(Σ|y − ŷ|, Σ|ŷ|)`.
pub fn rmae_terms(preds: &[f64], truths: &[f64]) -> Result<(f64, f64)> {
    Error::check_dim("rMAE sequence length", truths.len(), preds.len())?;
    if preds.is_empty() {
        return Err(Error::UndefinedMetric("rMAE of empty sequences"));
    }
    let num = preds.iter().zip(truths).map(|(y, t)| (y - t).abs()).sum();
    let den = truths.iter().map(|t| t.abs()).sum();
    Ok((num, den))
}

/// Sample Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    Error::check_dim("pearson sequence length", xs.len(), ys.len())?;
    if xs.len() < 2 {
        return Err(Error::UndefinedMetric("correlation needs ≥ 2 points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedMetric("correlation of a constant sequence"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// `1 − alpha` quantile of `|pearson(xs, π(ys))|` over `n_perm` random
/// permutations `π`: the critical value of a two-sided permutation test.
pub fn permutation_threshold<R: Rng + ?Sized>(
    xs: &[f64],
    ys: &[f64],
    n_perm: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<f64> {
    if n_perm == 0 || !(0.0..1.0).contains(&alpha) {
        return Err(Error::param("permutation test needs n_perm ≥ 1 and alpha in [0, 1)"));
    }
    let mut shuffled = ys.to_vec();
    let mut stats = Vec::with_capacity(n_perm);
    for _ in 0..n_perm {
        shuffled.shuffle(rng);
        stats.push(pearson(xs, &shuffled)?.abs());
    }
    stats.sort_by(f64::total_cmp);
    let idx = (((1.0 - alpha) * n_perm as f64).ceil() as usize).clamp(1, n_perm) - 1;
    Ok(stats[idx])
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
