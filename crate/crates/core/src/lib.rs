//! Invariants of two-layer homogeneous networks under full-batch gradient
//! descent: per-neuron charges, the symmetries that move within a level set,
//! the topology of that set (Betti numbers, connected components, explicit
//! paths), and initialization statistics for the probability of starting in
//! a component that cannot reach a good minimum.

pub mod error;
pub mod gradflow;
pub mod net;
pub mod rng;
pub mod stats;
pub mod symmetry;
pub mod topology;

pub use error::{Error, Result};
pub use net::{bilinear, Activation, Params};
