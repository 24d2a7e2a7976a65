//! Masked-autoencoder feature losses for image and video restoration.

pub mod cli;
pub mod config;
pub mod error;
pub mod harness;
pub mod image_io;
pub mod loss;
pub mod mae;
pub mod masking;
pub mod metrics;
pub mod resample;
pub mod rng;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
