//! Dense 64-bit tensor math with hand-written forward/backward passes for
//! the handful of fixed architectures used here: a GRU cell, dense stacks,
//! softmax, plus Adam and a central-difference gradient checker.

pub mod gradcheck;
pub mod gru;
pub mod mlp;
pub mod ops;
pub mod params;
pub mod tensor;

pub use gradcheck::{finite_difference_grad, finite_difference_input};
pub use gru::{GruCache, GruCell, GruSpec};
pub use mlp::{Activation, Mlp, MlpCache, MlpSpec};
pub use ops::{log_softmax, sigmoid, softmax};
pub use params::{AdamConfig, AdamState, ParamId, ParamStore};
pub use tensor::Tensor;
