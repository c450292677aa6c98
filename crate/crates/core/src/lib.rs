//! Amortized Q-learning over combinatorial action spaces.
//!
//! Q-learning needs an argmax over actions; in product action spaces that
//! maximum is over exponentially many candidates. This crate replaces it with
//! a search over samples from a learned autoregressive proposal distribution,
//! alongside exact, uniform-search, and cross-entropy-method baselines, an
//! actor/learner training runtime with local FIFO replay, and desk-scale
//! benchmark environments with computable oracles.
//!
//! The numeric core (tensors, the autodiff tape, the optimizer) is generic
//! over the scalar type; everything else instantiates it at [`Real`].

pub mod action_space;
pub mod checkpoint;
pub mod dist;
pub mod error;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod tape;
pub mod tensor;

pub use error::{AqlError, Result};

/// Scalar used by every concrete component. Training at 64-bit keeps
/// gradient checks and checkpoint round-trips exact.
pub type Real = f64;

/// Dense tensor at the crate's concrete precision.
pub type Tensor = tensor::Tensor<Real>;
/// Autodiff tape at the crate's concrete precision.
pub type Tape = tape::Tape<Real>;
/// Parameter store at the crate's concrete precision.
pub type ParameterStore = nn::ParameterStore<Real>;
/// Gradient map at the crate's concrete precision.
pub type GradMap = tape::GradMap<Real>;
/// Adam hyperparameters at the crate's concrete precision.
pub type AdamHyper = nn::AdamHyper<Real>;
