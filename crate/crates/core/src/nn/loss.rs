use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Piecewise smooth-L1: quadratic `0.5·diff²/β` below `β`, linear `|diff| − 0.5β` at or above.
pub fn smooth_l1(pred: f64, target: f64, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let diff = (pred - target).abs();
    Ok(if diff < beta {
        0.5 * diff * diff / beta
    } else {
        diff - 0.5 * beta
    })
}

/// `∂ smooth_l1 / ∂ pred`.
pub fn smooth_l1_grad(pred: f64, target: f64, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let diff = pred - target;
    Ok(if diff.abs() < beta {
        diff / beta
    } else {
        diff.signum()
    })
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("smooth-L1 beta must be > 0, got {beta}")))
    }
}

/// Regression loss used for training, selectable for the loss ablation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Loss {
    SmoothL1 { beta: f64 },
    Mse,
    Mae,
}

impl Default for Loss {
    fn default() -> Self {
        Loss::SmoothL1 { beta: 0.01 }
    }
}

impl Loss {
    pub fn validate(&self) -> Result<()> {
        match self {
            Loss::SmoothL1 { beta } => check_beta(*beta),
            Loss::Mse | Loss::Mae => Ok(()),
        }
    }

    /// Returns `(value, ∂value/∂pred)`.
    pub fn eval(&self, pred: f64, target: f64) -> (f64, f64) {
        let diff = pred - target;
        match *self {
            Loss::SmoothL1 { beta } => {
                if diff.abs() < beta {
                    (0.5 * diff * diff / beta, diff / beta)
                } else {
                    (diff.abs() - 0.5 * beta, diff.signum())
                }
            }
            Loss::Mse => (diff * diff, 2.0 * diff),
            Loss::Mae => (diff.abs(), diff.signum()),
        }
    }
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Loss::SmoothL1 { beta } => write!(f, "smooth_l1:{beta}"),
            Loss::Mse => f.write_str("mse"),
            Loss::Mae => f.write_str("mae"),
        }
    }
}

impl FromStr for Loss {
    type Err = Error;

    /// `mse`, `mae`, `smooth_l1` (β = 0.01) or `smooth_l1:<beta>`.
    fn from_str(s: &str) -> Result<Self> {
        let loss = match s {
            "mse" => Loss::Mse,
            "mae" => Loss::Mae,
            "smooth_l1" => Loss::default(),
            other => match other.strip_prefix("smooth_l1:") {
                Some(beta) => Loss::SmoothL1 {
                    beta: beta
                        .parse()
                        .map_err(|_| Error::param(format!("bad smooth-L1 beta `{beta}`")))?,
                },
                None => return Err(Error::param(format!("unknown loss `{other}`"))),
            },
        };
        loss.validate()?;
        Ok(loss)
    }
}
