//! Physical-layer fingerprinting of CAN ECUs from the voltage signal of the
//! extended-identifier field.

pub mod acceptance;
pub mod classify;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod features;
pub mod frame;
pub mod monitor;
pub mod seed;
pub mod waveform;

pub use error::{Error, Result};
