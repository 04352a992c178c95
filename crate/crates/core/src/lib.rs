//! Self-verification for masked discrete diffusion models.
//!
//! The library corrupts a candidate solution by re-masking part of it,
//! reconstructs the masked region with the model's own denoiser, and scores
//! agreement between candidate and reconstruction along six complementary
//! metrics. The composite score separates correct from incorrect solutions,
//! drives rejection sampling at inference time, and modulates training
//! rewards. Supporting modules provide the forward/reverse dynamics,
//! reference denoisers, ranking/geometry evaluation, and a contraction
//! bound checker for the underlying fixed-point argument.

pub mod bounds;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod estimator;
pub mod evaluation;
pub mod inference;
pub mod metrics;
pub mod reward;
pub mod rng;
pub mod schedule;
pub mod vocab;

pub use error::{CoreError, Result};
