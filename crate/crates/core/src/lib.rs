//! Single-channel speech dereverberation by spectral-domain inverse
//! filtering of the convolutive transfer function (CTF) model.
//!
//! The pipeline: simulate room impulse responses with the image-source
//! method, synthesize reverberant/early-reverberant pairs, train an online
//! U-net that emits a per-frame real-valued inverse filter over past
//! magnitude frames, apply the filter with phase borrowed from the
//! reverberant input, and score the result with SI-SDR and ESTOI against
//! the early-reverberant reference.

pub mod config;
pub mod ctf;
pub mod dsp;
pub mod enhance;
pub mod error;
pub mod fft;
pub mod io;
pub mod metrics;
pub mod net;
pub mod pipeline;
pub mod rng;
pub mod room;
pub mod synth;
pub mod train;

pub use error::{DerevError, Result};
