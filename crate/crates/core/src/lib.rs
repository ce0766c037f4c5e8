//! Differentiable specular ray tracing for multi-antenna OFDM channels, and
//! gradient-based scene calibration and localization on top of it.

pub mod calib;
pub mod channel;
pub mod em;
pub mod error;
pub mod grad;
pub mod loc;
pub mod math;
pub mod optim;
pub mod scene;
pub mod tracer;
pub mod vars;

pub use error::{Error, Result};
