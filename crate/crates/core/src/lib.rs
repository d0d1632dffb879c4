//! Occupancy grids to diverse candidate trajectories.
//!
//! A proposal network ([`tpnet`]) turns a four-channel occupancy input into
//! `k` per-pixel traversability maps; a sampler network ([`tsnet`]) turns
//! each map into an ordered waypoint sequence. Classical planners
//! ([`planners`]) generate the training labels and serve as baselines in the
//! benchmark harness ([`bench`]).

// validations use negated comparisons on purpose so NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod datagen;
pub mod error;
pub mod grid;
pub mod nn;
pub mod planners;
pub mod scalar;
pub mod tpnet;
pub mod tsnet;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Single-precision tensor, the training precision.
pub type Tensor32 = nn::Tensor<f32>;
/// Double-precision tensor, the verification precision.
pub type Tensor64 = nn::Tensor<f64>;

/// Rayon pool sized by `TRAJGRID_THREADS` (all cores when unset or 0).
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let threads = std::env::var("TRAJGRID_THREADS").ok().and_then(|v| v.trim().parse().ok()).unwrap_or(0);
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| Error::Config(e.to_string()))
}
