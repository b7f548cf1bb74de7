//! Parameter storage for the depthwise conv → pointwise conv → MLP stack.
//!
//! All learnable values live in one contiguous buffer so the optimizer and the
//! checkpoint writer can treat them as a flat vector while layers address
//! their own block by offset.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};

/// Layer sizes: hidden-state dimension `d`, channel count `C`, time window `W`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub hidden_dim: usize,
    pub channels: usize,
    pub window: usize,
}

impl Architecture {
    pub const DEFAULT_CHANNELS: usize = 32;
    pub const DEFAULT_WINDOW: usize = 8;

    pub fn new(hidden_dim: usize, channels: usize, window: usize) -> Result<Self> {
        if hidden_dim == 0 || channels == 0 || window == 0 {
            return Err(Error::param(format!(
                "architecture dimensions must be positive (d={hidden_dim}, C={channels}, W={window})"
            )));
        }
        Ok(Self {
            hidden_dim,
            channels,
            window,
        })
    }

    pub fn with_defaults(hidden_dim: usize) -> Result<Self> {
        Self::new(hidden_dim, Self::DEFAULT_CHANNELS, Self::DEFAULT_WINDOW)
    }

    /// `W·d + d·C + C + C·C + C + C + 1`.
    pub fn param_count(&self) -> usize {
        let (d, c, w) = (self.hidden_dim, self.channels, self.window);
        w * d + d * c + c + c * c + c + c + 1
    }
}

/// Parameter blocks in checkpoint order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    /// `W×d`, time-major: entry `(t, c)` weights channel `c` at window offset `t`.
    Depthwise,
    /// `d×C`, row-major.
    PointwiseWeights,
    PointwiseBias,
    /// `C×C`, row-major `(out, in)`.
    MlpW1,
    MlpB1,
    MlpW2,
    MlpB2,
}

impl Block {
    pub const ALL: [Block; 7] = [
        Block::Depthwise,
        Block::PointwiseWeights,
        Block::PointwiseBias,
        Block::MlpW1,
        Block::MlpB1,
        Block::MlpW2,
        Block::MlpB2,
    ];

    pub fn len(self, arch: &Architecture) -> usize {
        let (d, c, w) = (arch.hidden_dim, arch.channels, arch.window);
        match self {
            Block::Depthwise => w * d,
            Block::PointwiseWeights => d * c,
            Block::PointwiseBias | Block::MlpB1 | Block::MlpW2 => c,
            Block::MlpW1 => c * c,
            Block::MlpB2 => 1,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// All learnable values of the network (also used as a gradient buffer).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    arch: Architecture,
    offsets: [usize; 8],
    data: Vec<f64>,
}

impl LayerParams {
    pub fn zeros(arch: Architecture) -> Self {
        let mut offsets = [0usize; 8];
        for (i, block) in Block::ALL.iter().enumerate() {
            offsets[i + 1] = offsets[i] + block.len(&arch);
        }
        let data = vec![0.0; offsets[7]];
        Self {
            arch,
            offsets,
            data,
        }
    }

    /// Xavier-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Self {
        let mut params = Self::zeros(arch);
        let (d, c, w) = (arch.hidden_dim, arch.channels, arch.window);
        let fill = |slice: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut R| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
            for v in slice.iter_mut() {
                *v = dist.sample(rng);
            }
        };
        fill(params.block_mut(Block::Depthwise), w, 1, rng);
        fill(params.block_mut(Block::PointwiseWeights), d, c, rng);
        fill(params.block_mut(Block::MlpW1), c, c, rng);
        fill(params.block_mut(Block::MlpW2), c, 1, rng);
        params
    }

    pub fn from_blocks(arch: Architecture, blocks: Vec<Vec<f64>>) -> Result<Self> {
        Error::check_dim("parameter block count", Block::ALL.len(), blocks.len())?;
        let mut params = Self::zeros(arch);
        for (block, values) in Block::ALL.iter().zip(blocks) {
            Error::check_dim("parameter block length", block.len(&arch), values.len())?;
            params.block_mut(*block).copy_from_slice(&values);
        }
        Ok(params)
    }

    #[inline]
    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    #[inline]
    pub fn block(&self, block: Block) -> &[f64] {
        let i = block.index();
        &self.data[self.offsets[i]..self.offsets[i + 1]]
    }

    #[inline]
    pub fn block_mut(&mut self, block: Block) -> &mut [f64] {
        let i = block.index();
        &mut self.data[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn fill(&mut self, value: f64) {
        self.data.fill(value);
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_count_matches_buffer() {
        for &(d, c, w) in &[(1, 1, 1), (3, 4, 8), (64, 32, 8), (2560, 32, 8), (2560, 128, 8)] {
            let arch = Architecture::new(d, c, w).unwrap();
            let params = LayerParams::zeros(arch);
            assert_eq!(params.len(), arch.param_count());
            let total: usize = Block::ALL.iter().map(|b| params.block(*b).len()).sum();
            assert_eq!(total, arch.param_count());
        }
    }

    #[test]
    fn reference_architecture_count() {
        // 8·2560 + 2560·32 + 32 + 32·32 + 32 + 32 + 1
        let arch = Architecture::new(2560, 32, 8).unwrap();
        assert_eq!(arch.param_count(), 103_521);
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(Architecture::new(0, 32, 8).is_err());
        assert!(Architecture::new(4, 0, 8).is_err());
        assert!(Architecture::new(4, 32, 0).is_err());
    }
}
