use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range or inconsistent with another.
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("time series is empty")]
    EmptySeries,

    #[error("series too short: {reason}")]
    InsufficientLength { reason: String },

    /// Successive-sample phase step too close to pi to be unwrapped unambiguously.
    #[error("phase step of {step:.4} rad at sample {index} is aliased (|step| must stay below pi)")]
    Aliasing { index: usize, step: f64 },

    #[error("zero-magnitude sample at index {index}")]
    ZeroMagnitude { index: usize },

    /// The oscillator loop blew up, usually a mis-set amplifier gain.
    #[error("loop diverged at t = {time:.6e} s: |x| = {magnitude:.3e}")]
    Divergence { time: f64, magnitude: f64 },

    #[error("Stuart-Landau state left the restoration band at t = {time:.6e} s: |z| = {magnitude:.6}")]
    RestorationFailure { time: f64, magnitude: f64 },

    #[error("mode hop detected at t = {time:.6e} s: frequency stepped by {step_hz:.1} Hz between frames")]
    ModeHop { time: f64, step_hz: f64 },

    #[error("ambiguous spectral ridge: {0}")]
    AmbiguousRidge(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
