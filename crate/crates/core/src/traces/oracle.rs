//! Expected first-arrival time of termination under a per-step hazard:
//! `E[N] = Σ_n n·p_n·Π_{i<n}(1 − p_i)`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Hazards<'a> {
    Constant(f64),
    /// `p_1, p_2, …`; the process is undefined past the end of the slice.
    Sequence(&'a [f64]),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleResult {
    /// Partial sum up to the truncation point.
    pub expected: f64,
    /// Probability that termination has not happened by the truncation point.
    pub remaining_mass: f64,
    /// Upper bound on the omitted part of the sum, when it is known in closed
    /// form (constant hazard). `None` for sequences.
    pub tail_bound: Option<f64>,
    /// Number of terms summed.
    pub terms: usize,
}

pub fn expected_length(hazards: Hazards<'_>, tail_tol: f64) -> Result<OracleResult> {
    if !(tail_tol > 0.0) {
        return Err(Error::param(format!("tail_tol must be > 0, got {tail_tol}")));
    }
    let check = |p: f64| {
        if p > 0.0 && p <= 1.0 {
            Ok(())
        } else {
            Err(Error::param(format!("hazard {p} outside (0, 1]")))
        }
    };
    match hazards {
        Hazards::Constant(p) => {
            check(p)?;
            let mut survival = 1.0;
            let mut expected = 0.0;
            let mut n = 0usize;
            while survival >= tail_tol {
                n += 1;
                expected += n as f64 * p * survival;
                survival *= 1.0 - p;
            }
            // Σ_{m>n} m·p·(1−p)^{m−1} = (1−p)^n·(n + 1/p)
            let tail = survival * (n as f64 + 1.0 / p);
            Ok(OracleResult {
                expected,
                remaining_mass: survival,
                tail_bound: Some(tail),
                terms: n,
            })
        }
        Hazards::Sequence(ps) => {
            let mut survival = 1.0;
            let mut expected = 0.0;
            let mut terms = 0;
            for (i, &p) in ps.iter().enumerate() {
                check(p)?;
                if survival < tail_tol {
                    break;
                }
                expected += (i + 1) as f64 * p * survival;
                survival *= 1.0 - p;
                terms = i + 1;
            }
            Ok(OracleResult {
                expected,
                remaining_mass: survival,
                tail_bound: None,
                terms,
            })
        }
    }
}
