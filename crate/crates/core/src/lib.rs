//! Numerical core for inviscid-limit experiments on the periodic torus and in
//! a wall-bounded channel: pseudo-spectral fields, an exponential RK4 vorticity
//! integrator, forcing, mollification, flow diagnostics, weak Euler residuals
//! and channel boundary-layer diagnostics.

pub mod channel;
pub mod diagnostics;
pub mod error;
mod fft;
pub mod forcing;
pub mod mollify;
pub mod region;
pub mod spectral;
pub mod time;
pub mod weak;

pub use error::{Error, Result};
pub use region::CompactRegion;
pub use spectral::{Grid, ScalarField, VectorField};
