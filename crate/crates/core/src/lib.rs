//! Learning object-like structure from sensorimotor experience in a toy
//! gridworld: an agent moves a small retina over a changing grid, quantizes
//! what it sees into states, counts state transitions under motor commands,
//! and clusters states whose motor-conditioned predictions agree.

pub mod codebook;
pub mod error;
pub mod explorer;
pub mod gridworld;
pub mod harness;
pub mod predictor;
pub mod similarity;
pub mod spectral;
pub mod streams;
pub mod transitions;

pub use error::{Error, Result};
