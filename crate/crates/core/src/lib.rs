//! Numerical stability laboratory for traveling waves of Majda's scalar
//! combustion model.

pub mod error;
pub mod hugoniot;
pub mod model;
pub mod numerics;
pub mod profile;
pub mod spectral;
pub mod evans;
pub mod resolvent;
pub mod evolution;

pub use error::{Error, Result};
pub use hugoniot::{WaveClass, WaveProblem};
pub use model::ModelParams;
