//! Contextual-injection attack toolkit.
//!
//! Implements gradient-based adversarial image perturbation against a
//! deterministic miniature vision-language model: a tape-based reverse-mode
//! autodiff engine, the micro victim model itself, the contextual-injection
//! loss (visual / input-text / output token positions), a sign-gradient PGD
//! attack loop with baselines, and an evaluation harness for cross-prompt
//! attack-success-rate, cross-entropy-by-position diagnostics, and
//! hyperparameter sweeps.
//!
//! The numeric core is generic over the storage scalar (`f32` or `f64`) via
//! [`Scalar`]; concrete aliases for both precisions live at the crate root.
//! All randomness flows through a splitmix64 generator, so every run is
//! bitwise reproducible from its seeds.

pub mod attack;
pub mod error;
pub mod eval;
pub mod fraction;
pub mod image;
pub mod io;
pub mod model;
pub mod objective;
pub mod rng;
pub mod scalar;
pub mod tensor;

pub use error::{CiaError, Result};
pub use scalar::Scalar;

/// f32 instantiations: the artifact path (images, attacks, file formats).
pub type Tensor32 = tensor::Tensor<f32>;
pub type Tape32 = tensor::Tape<f32>;
pub type Image32 = image::ImageTensor<f32>;
pub type Model32 = model::ModelWeights<f32>;
pub type State32 = attack::PerturbationState<f32>;

/// f64 instantiations: used where finite-difference oracles need headroom.
pub type Tensor64 = tensor::Tensor<f64>;
pub type Tape64 = tensor::Tape<f64>;
pub type Image64 = image::ImageTensor<f64>;
pub type Model64 = model::ModelWeights<f64>;
pub type State64 = attack::PerturbationState<f64>;
