//! Few-shot visual style learning.
//!
//! A twin convolutional network scores how likely two designs share a style;
//! a test design is judged against a handful of liked references by taking
//! the median of its pairwise scores. The crate also carries the two
//! baselines (colour-histogram correlation and a plain CNN classifier), a
//! seeded synthetic style generator, the training pipeline and the
//! evaluation protocol.

pub mod autograd;
pub mod baselines;
pub mod checkpoint;
pub mod comparison;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod nn;
pub mod tensor;
pub mod training;

pub use autograd::{finite_diff_check, Graph, Var};
pub use error::{Error, Result};
pub use tensor::Tensor;
