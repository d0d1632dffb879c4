//! Minimal reverse-mode differentiable kernel: strided/dilated/transposed
//! convolutions, LSTM cells, paired softmax, weighted cross-entropy, SGD
//! and finite-difference checking.

mod checkpoint;
mod conv;
mod gradcheck;
mod graph;
mod layers;
mod optim;
mod params;
mod tensor;

pub use checkpoint::{decode as decode_checkpoint, encode as encode_checkpoint, load as load_checkpoint, save as save_checkpoint};
pub use conv::ConvSpec;
pub use gradcheck::{grad_check, relative_error, GradCheckReport, REL_ERROR_FLOOR};
pub use graph::{Gradients, Graph, Var, PROB_CLAMP};
pub use layers::{lstm_cell, Conv2d, Linear, LstmParams};
pub use optim::{sgd_step, OptimState};
pub use params::{glorot_uniform, ParamGrads, ParamId, ParamStore};
pub use tensor::Tensor;

use crate::error::Result;
use crate::scalar::Scalar;

/// Per-pixel two-class softmax over an `[..., 2, H, W]` logit map.
pub fn softmax2<T: Scalar>(g: &mut Graph<T>, logits: Var) -> Result<Var> {
    g.pair_softmax(logits)
}

/// Mean over pixels of `−α·P⁰·log R⁰ − (1−α)·P¹·log R¹` for a single
/// two-channel probability map batch `[N, 2, H, W]`, averaged over `N`.
pub fn weighted_ce<T: Scalar>(g: &mut Graph<T>, probs: Var, traversable: &[bool], alpha: T) -> Result<Var> {
    let per_head = g.head_cross_entropy(probs, traversable, alpha)?;
    Ok(g.mean(per_head))
}
