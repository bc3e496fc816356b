//! Simulation and signal processing for a LoRa-modulated FMCW radar waveform
//! with compressed (sub-Nyquist) sampling.
//!
//! The crate synthesises chirp symbols and their intermediate-frequency
//! echoes in closed form, recovers target range, velocity and angle by sparse
//! recovery, demodulates the payload from compressed de-chirped samples and
//! runs Monte-Carlo experiments against uniform-sampling baselines.

pub mod channel;
pub mod comms;
pub mod config;
pub mod cs;
pub mod error;
pub mod harness;
pub mod sampling;
pub mod sensing;
pub mod waveform;

pub use config::{Preset, Setup, WaveformParams};
pub use error::{Error, Result};
