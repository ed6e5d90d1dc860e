//! Part-aware multi-view 3D object recognition on synthetic shape datasets.
//!
//! The crate bundles a small tape-based autograd engine, a procedural
//! multi-view dataset synthesizer (SDF sphere-traced depth renders), the
//! part-aware recognition model, a training/evaluation harness, and
//! introspection tooling for attention maps and part correlations.

pub mod autograd;
pub mod error;
pub mod gradcheck;
pub mod introspect;
pub mod model;
pub mod shapegen;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
