//! Differentiable learning-to-rank toolkit.
//!
//! The centrepiece is NeuralNDCG: a smooth surrogate of the NDCG ranking
//! metric built from a temperature-controlled relaxation of the sorting
//! operator (NeuralSort) combined with Sinkhorn scaling. Around it the crate
//! provides exact ranking metrics, the usual baseline losses (ApproxNDCG,
//! ListNet, ListMLE, RankNet, LambdaRank, RMSE), a small reverse-mode
//! autodiff engine sufficient to express all of them, an MLP scoring model,
//! LETOR data handling, a deterministic Adam trainer, and a CLI.
//!
//! The numerical core is generic over the scalar type (`f32` or `f64`); the
//! `*64` aliases below pick the double-precision instantiations used by the
//! trainer and CLI.

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod error;
pub mod fmt;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod sorting;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision dense array, the workhorse of the trainer and CLI.
pub type Array64 = autodiff::Array<f64>;
/// Double-precision autodiff tape.
pub type Tape64 = autodiff::Tape<f64>;
/// Single-precision dense array.
pub type Array32 = autodiff::Array<f32>;
/// Single-precision autodiff tape.
pub type Tape32 = autodiff::Tape<f32>;

/// Seed used by the CLI whenever the user does not supply one, so that
/// documented commands reproduce verbatim.
pub const DEFAULT_SEED: u64 = 42;
