//! Classical statevector simulation of quantum triplet-embedding networks.
//!
//! The paired network interleaves two samples into one amplitude-embedded
//! state so a triplet needs two circuit runs; the single-sample network embeds
//! each sample alone and needs three.

pub mod ansatz;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod loss;
pub mod statevector;
pub mod training;

pub use ansatz::{Circuit, CircuitSpec, ParameterVector};
pub use data::{Dataset, Sample, Slot, Triplet};
pub use error::{Error, Result};
pub use loss::{LossWeights, Objective, Projection};
pub use statevector::StateVector;
pub use training::{train, GradientMode, Network, NetworkMode, TrainConfig, TrainedModel};
