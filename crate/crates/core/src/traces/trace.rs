use crate::error::{Error, Result};
use crate::nn::Matrix;

/// One chain-of-thought run: `N` hidden-state rows of dimension `d`, with an
/// optional per-step end-of-CoT probability channel and free-form metadata.
///
/// Hidden states are stored as `f32`, which is also the on-disk precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    dim: usize,
    hidden: Vec<f32>,
    eoc_prob: Option<Vec<f32>>,
    meta: String,
}

impl Trace {
    pub fn new(dim: usize, hidden: Vec<f32>, eoc_prob: Option<Vec<f32>>, meta: String) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("trace hidden dimension must be ≥ 1"));
        }
        if hidden.is_empty() || hidden.len() % dim != 0 {
            return Err(Error::param(format!(
                "trace needs N ≥ 1 rows of width {dim}, got {} values",
                hidden.len()
            )));
        }
        if let Some(i) = hidden.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(format!("non-finite hidden value at index {i}")));
        }
        let len = hidden.len() / dim;
        if let Some(p) = &eoc_prob {
            Error::check_dim("eoc_prob length", len, p.len())?;
            if let Some(i) = p.iter().position(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::param(format!(
                    "eoc_prob[{i}] = {} outside [0, 1]",
                    p[i]
                )));
            }
        }
        Ok(Self {
            dim,
            hidden,
            eoc_prob,
            meta,
        })
    }

    /// Token count `N`.
    #[inline]
    pub fn len(&self) -> usize {
        self.hidden.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.hidden.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[f32] {
        &self.hidden[t * self.dim..(t + 1) * self.dim]
    }

    pub fn hidden(&self) -> &[f32] {
        &self.hidden
    }

    pub fn eoc_prob(&self) -> Option<&[f32]> {
        self.eoc_prob.as_deref()
    }

    pub fn meta(&self) -> &str {
        &self.meta
    }

    /// Value of a `key=value` line in the metadata, if present.
    pub fn meta_value(&self, key: &str) -> Option<&str> {
        meta_lookup(&self.meta, key)
    }

    pub fn id(&self) -> Option<&str> {
        self.meta_value("id")
    }

    pub fn terminated(&self) -> Option<bool> {
        self.meta_value("terminated").map(|v| v == "true")
    }

    /// `W×d` window ending at row `end` (inclusive). Rows before the start of
    /// the trace repeat `h_0`.
    pub fn window(&self, end: usize, width: usize) -> Matrix {
        let mut m = Matrix::zeros(width, self.dim);
        self.fill_window(end, &mut m);
        m
    }

    pub fn fill_window(&self, end: usize, out: &mut Matrix) {
        let width = out.rows();
        for r in 0..width {
            let src = (end + r + 1).saturating_sub(width);
            for (dst, v) in out.row_mut(r).iter_mut().zip(self.row(src)) {
                *dst = f64::from(*v);
            }
        }
    }
}

pub(crate) fn meta_lookup<'a>(meta: &'a str, key: &str) -> Option<&'a str> {
    meta.lines().find_map(|line| {
        let (k, v) = line.split_once('=')?;
        (k.trim() == key).then(|| v.trim())
    })
}

/// Builds `key=value` metadata text in insertion order.
#[derive(Debug, Default, Clone)]
pub struct MetaBuilder {
    text: String,
}

impl MetaBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, key: &str, value: impl std::fmt::Display) -> Self {
        use std::fmt::Write;
        let _ = writeln!(self.text, "{key}={value}");
        self
    }

    pub fn build(self) -> String {
        self.text
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize, d: usize) -> Trace {
        let hidden = (0..n * d).map(|i| (i / d) as f32).collect();
        Trace::new(d, hidden, None, MetaBuilder::new().set("id", "t0").build()).unwrap()
    }

    #[test]
    fn window_left_pads_with_first_row() {
        let t = ramp(10, 2);
        let w = t.window(2, 8);
        let firsts: Vec<f64> = (0..8).map(|r| w.get(r, 0)).collect();
        assert_eq!(firsts, vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 2.0]);
        let w = t.window(9, 8);
        assert_eq!(w.get(0, 1), 2.0);
        assert_eq!(w.get(7, 1), 9.0);
    }

    #[test]
    fn validation() {
        assert!(Trace::new(2, vec![], None, String::new()).is_err());
        assert!(Trace::new(2, vec![1.0; 3], None, String::new()).is_err());
        assert!(Trace::new(1, vec![f32::NAN], None, String::new()).is_err());
        assert!(Trace::new(1, vec![0.0; 2], Some(vec![0.5]), String::new()).is_err());
        assert!(Trace::new(1, vec![0.0; 2], Some(vec![0.5, 1.5]), String::new()).is_err());
        assert!(Trace::new(1, vec![0.0; 2], Some(vec![0.0, 1.0]), String::new()).is_ok());
    }

    #[test]
    fn meta_lookup_works() {
        let t = ramp(1, 1);
        assert_eq!(t.id(), Some("t0"));
        assert_eq!(t.terminated(), None);
    }
}
