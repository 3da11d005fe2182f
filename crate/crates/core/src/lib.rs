//! Face image quality assessment guided by a generative prior.

pub mod arch;
pub mod config;
pub mod container;
pub mod error;
pub mod face_prep;
pub mod generative;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod objectives;
pub mod predictor;
pub mod study;
pub mod util;

pub use error::{Error, Result};
