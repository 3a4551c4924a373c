//! Layers, loss and optimizer for the style networks.

pub mod adam;
pub mod batchnorm;
pub mod conv;
pub mod layers;
pub mod loss;
pub mod params;
pub mod pool;

pub use adam::{AdamConfig, AdamState};
pub use batchnorm::BatchStats;
pub use layers::{Activation, BatchNorm2d, Conv3x3, Linear};
pub use params::{Bound, BufferId, Init, Mode, ParamId, ParamStore, Pass};
