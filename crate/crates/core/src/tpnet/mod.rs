//! Trajectory proposal network: a dilated encoder-decoder with skip
//! connections that maps a [`NetworkInput`] to `k` two-class proposal maps,
//! trained with a winner-takes-all diversity loss, an obstacle loss and deep
//! supervision.

mod loss;
mod model;
mod train;

pub use loss::{
    diversity_graph, head_losses, obstacle_avoidance_loss, total_loss_graph, trajectory_diversity_loss, tpnet_total_loss,
    LossVars,
};
pub use model::{stack_inputs, ForwardVars, Tpnet};
pub(crate) use train::csv_error;
pub use train::{train_tpnet, train_tpnet_with, EpochStats, TpnetTrainOptions, TpnetTrainingLog};

pub use crate::datagen::TrajectoryLabel;

use crate::error::{Error, Result};
use crate::grid::{GridConfig, NetworkInput};
use crate::nn::Tensor;
use crate::scalar::Scalar;

/// Proposal network at training precision.
pub type Tpnet32 = Tpnet<f32>;
/// Proposal network at verification precision.
pub type Tpnet64 = Tpnet<f64>;

#[derive(Clone, Debug, PartialEq)]
pub struct TpnetConfig {
    /// `k`, the number of proposal heads.
    pub num_heads: usize,
    pub base_channels: usize,
    /// Number of stride-2 encoder stages.
    pub depth: usize,
    /// Weight of traversable pixels in the cross-entropy.
    pub alpha: f64,
    /// Weight of the obstacle loss.
    pub lambda: f64,
    pub deep_supervision_weight: f64,
    pub enable_skip: bool,
    pub enable_dilation: bool,
    pub enable_deep_supervision: bool,
    /// When false the network has a single head regardless of `num_heads`.
    pub enable_multi_head: bool,
}

impl Default for TpnetConfig {
    fn default() -> Self {
        TpnetConfig {
            num_heads: 4,
            base_channels: 16,
            depth: 3,
            alpha: 0.95,
            lambda: 0.5,
            deep_supervision_weight: 0.5,
            enable_skip: true,
            enable_dilation: true,
            enable_deep_supervision: true,
            enable_multi_head: true,
        }
    }
}

impl TpnetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_heads == 0 {
            return Err(Error::Config("num_heads must be at least 1".into()));
        }
        if self.base_channels == 0 || self.depth == 0 || self.depth > 6 {
            return Err(Error::Config(format!(
                "base_channels {} / depth {} out of range",
                self.base_channels, self.depth
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if !(self.lambda >= 0.0) || !(self.deep_supervision_weight >= 0.0) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        Ok(())
    }

    /// Effective head count.
    pub fn heads(&self) -> usize {
        if self.enable_multi_head {
            self.num_heads
        } else {
            1
        }
    }

    /// Encoder widths: `base · 2^i`, capped at four times the base.
    pub fn stage_widths(&self) -> Vec<usize> {
        (0..self.depth).map(|i| self.base_channels << i.min(2)).collect()
    }

    /// Architecture fields as checkpoint metadata. Loss weights are training
    /// settings and are not stored.
    fn encode<T: Scalar>(&self) -> Vec<T> {
        let flag = |b: bool| if b { T::one() } else { T::zero() };
        vec![
            T::lit(self.num_heads as f64),
            T::lit(self.base_channels as f64),
            T::lit(self.depth as f64),
            flag(self.enable_skip),
            flag(self.enable_dilation),
            flag(self.enable_deep_supervision),
            flag(self.enable_multi_head),
        ]
    }

    fn decode<T: Scalar>(v: &[T]) -> Result<Self> {
        if v.len() != 7 {
            return Err(Error::format("malformed proposal network configuration"));
        }
        let int = |x: T| {
            let f = x.as_f64();
            if f >= 0.0 && f.fract() == 0.0 && f < 1e6 {
                Ok(f as usize)
            } else {
                Err(Error::format("malformed proposal network configuration"))
            }
        };
        let cfg = TpnetConfig {
            num_heads: int(v[0])?,
            base_channels: int(v[1])?,
            depth: int(v[2])?,
            enable_skip: int(v[3])? != 0,
            enable_dilation: int(v[4])? != 0,
            enable_deep_supervision: int(v[5])? != 0,
            enable_multi_head: int(v[6])? != 0,
            ..TpnetConfig::default()
        };
        cfg.validate().map_err(|e| Error::format(e.to_string()))?;
        Ok(cfg)
    }
}

/// `R = {R_k}`: per head a `2 × h × w` map, channel 0 traversable (`R⁰`),
/// channel 1 not (`R¹`).
#[derive(Clone, Debug, PartialEq)]
pub struct ProposalSet {
    pub heads: Vec<Vec<f64>>,
    /// Deep-supervision maps; empty when that branch is disabled.
    pub intermediate_heads: Vec<Vec<f64>>,
    pub config: GridConfig,
}

impl ProposalSet {
    /// Builds a set from `R⁰` maps, filling `R¹ = 1 − R⁰`.
    pub fn from_traversable(config: GridConfig, maps: &[Vec<f64>]) -> Result<Self> {
        let n = config.cells();
        let mut heads = Vec::with_capacity(maps.len());
        for m in maps {
            if m.len() != n {
                return Err(Error::Dimension(format!("proposal map has {} cells, grid {n}", m.len())));
            }
            if m.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Input("proposal probabilities must lie in [0, 1]".into()));
            }
            let mut head = m.clone();
            head.extend(m.iter().map(|p| 1.0 - p));
            heads.push(head);
        }
        Ok(ProposalSet { heads, intermediate_heads: Vec::new(), config })
    }

    fn from_batch(heads: &Tensor<f64>, inter: Option<&Tensor<f64>>, n: usize, config: GridConfig) -> Result<Self> {
        let split = |t: &Tensor<f64>| -> Vec<Vec<f64>> {
            let c = t.shape()[1];
            let plane = 2 * config.cells();
            let sample = &t.data()[n * c * config.cells()..(n + 1) * c * config.cells()];
            sample.chunks(plane).map(<[f64]>::to_vec).collect()
        };
        Ok(ProposalSet { heads: split(heads), intermediate_heads: inter.map(split).unwrap_or_default(), config })
    }

    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }

    /// `R⁰_k`.
    pub fn traversable(&self, k: usize) -> &[f64] {
        &self.heads[k][..self.config.cells()]
    }

    /// `R¹_k`.
    pub fn non_traversable(&self, k: usize) -> &[f64] {
        &self.heads[k][self.config.cells()..]
    }

    pub(crate) fn heads_tensor(&self) -> Tensor<f64> {
        loss::maps_tensor(&self.heads, self.config.height, self.config.width)
    }

    pub(crate) fn intermediate_tensor(&self) -> Tensor<f64> {
        loss::maps_tensor(&self.intermediate_heads, self.config.height, self.config.width)
    }
}

/// Cells whose traversable probability reaches `tau`.
pub fn binarize_proposal(traversable: &[f64], tau: f64) -> Vec<bool> {
    traversable.iter().map(|p| *p >= tau).collect()
}

/// Convenience wrapper: forward a single input through a network.
pub fn tpnet_forward<T: Scalar>(input: &NetworkInput, net: &Tpnet<T>) -> Result<ProposalSet> {
    net.forward(input)
}
