use std::f64::consts::TAU;

use crate::envelope::EnvelopeSample;
use crate::error::{Error, Result};

/// One-pole baseband equivalent of the RF selection filter, centred on the
/// nominal carrier. Pole mapped exactly: `a = exp(-dt / tau_r)`.
#[derive(Clone, Debug)]
pub struct Resonator {
    tau_r: f64,
    a: f64,
    state: EnvelopeSample,
}

impl Resonator {
    pub fn new(tau_r: f64, dt: f64) -> Result<Self> {
        if !(tau_r.is_finite() && tau_r > 0.0) {
            return Err(Error::config("tau_r", format!("must be positive, got {tau_r}")));
        }
        Ok(Self {
            tau_r,
            a: (-dt / tau_r).exp(),
            state: EnvelopeSample::new(0.0, 0.0),
        })
    }

    pub fn tau_r(&self) -> f64 {
        self.tau_r
    }

    pub fn pole(&self) -> f64 {
        self.a
    }

    /// Full 3 dB bandwidth of the continuous-time prototype, `1 / (pi tau_r)`.
    pub fn bandwidth(&self) -> f64 {
        1.0 / (std::f64::consts::PI * self.tau_r)
    }

    #[inline]
    pub fn step(&mut self, x: EnvelopeSample) -> EnvelopeSample {
        self.state = self.state * self.a + x * (1.0 - self.a);
        self.state
    }

    pub fn reset(&mut self, state: EnvelopeSample) {
        self.state = state;
    }

    /// Discrete-time transfer function at offset `f` (Hz) for sample interval `dt`.
    pub fn response(&self, f: f64, dt: f64) -> EnvelopeSample {
        let zinv = EnvelopeSample::from_polar(1.0, -TAU * f * dt);
        EnvelopeSample::new(1.0 - self.a, 0.0) / (EnvelopeSample::new(1.0, 0.0) - zinv * self.a)
    }
}
