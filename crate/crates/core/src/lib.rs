//! Longitudinal power profile estimation for coherent fiber-optic links.
//!
//! The crate simulates a multi-span fiber link with the split-step Fourier
//! method, runs a basic coherent receiver, and estimates the longitudinal
//! power profile `gamma * f(z)` from the received symbols with a block LMS
//! adaptive filter built on a frequency-domain digital twin of the link.
//!
//! Module map:
//!
//! - [`waveforms`]: QAM mapping, root-raised-cosine pulses, modulation and
//!   receiver noise loading.
//! - [`channel`]: link description, ground-truth power profiles and the
//!   split-step Fourier simulator.
//! - [`rx`]: matched filter, dispersion compensation, carrier phase recovery
//!   and symbol decision.
//! - [`overlap_save`]: block FFT convolution engine (windowing, filter
//!   padding, valid-region extraction).
//! - [`twin`]: the digital twin — per-coordinate propagator pairs, Kerr
//!   branches, frequency-domain NLI accumulation and the polyphase variant.
//! - [`lms`]: tap state, the Parseval-based block gradient, tap and phase
//!   updates, step-size policy and initialization.
//! - [`metrics`]: profile RMSE, SPM equalization SNR, the least-squares
//!   oracle and experiment orchestration.
//! - [`config`]: scenario configuration shared with the CLI.
//! - [`artifacts`]: CSV/JSON result emission.

pub mod artifacts;
pub mod channel;
pub mod config;
pub mod error;
pub mod fft;
pub mod lms;
pub mod metrics;
pub mod overlap_save;
pub mod rx;
pub mod twin;
pub mod waveforms;

pub use error::{Error, Result};
