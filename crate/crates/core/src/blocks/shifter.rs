use std::f64::consts::PI;

use crate::envelope::EnvelopeSample;

/// Phase shifter with a hard range of [-pi, pi]; commands beyond it saturate.
#[derive(Clone, Copy, Debug, Default)]
pub struct BoundedPhaseShifter {
    p: f64,
    saturated: bool,
}

impl BoundedPhaseShifter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets the control; returns true if the command was clipped.
    pub fn set_control(&mut self, p: f64) -> bool {
        self.p = p.clamp(-PI, PI);
        self.saturated = p.abs() >= PI;
        self.saturated
    }

    pub fn phase(&self) -> f64 {
        self.p
    }

    pub fn is_saturated(&self) -> bool {
        self.saturated
    }

    pub fn transmission(&self) -> EnvelopeSample {
        EnvelopeSample::from_polar(1.0, self.p)
    }

    #[inline]
    pub fn apply(&self, x: EnvelopeSample) -> EnvelopeSample {
        x * self.transmission()
    }
}

/// Phase shifter without range limit. Driven by a ramp it emulates thermally
/// induced delay drift; the phase is evaluated from the sample index so a long
/// ramp accumulates no rounding drift.
#[derive(Clone, Copy, Debug)]
pub struct UnboundedPhaseShifter {
    theta0: f64,
    rate: f64,
    dt: f64,
    n: u64,
}

impl UnboundedPhaseShifter {
    /// `rate` in rad/s.
    pub fn ramp(rate: f64, dt: f64) -> Self {
        Self {
            theta0: 0.0,
            rate,
            dt,
            n: 0,
        }
    }

    pub fn fixed(theta: f64) -> Self {
        Self {
            theta0: theta,
            rate: 0.0,
            dt: 0.0,
            n: 0,
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta0 + self.rate * (self.n as f64 * self.dt)
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Applies the current phase, then advances the ramp by one sample.
    #[inline]
    pub fn step(&mut self, x: EnvelopeSample) -> EnvelopeSample {
        let y = x * EnvelopeSample::from_polar(1.0, self.theta());
        self.n += 1;
        y
    }
}

/// IQ (vector) modulator: multiplies the envelope by the complex control `z`.
/// No normalisation is applied; the driver owns |z|.
#[derive(Clone, Copy, Debug)]
pub struct VectorModulator {
    z: EnvelopeSample,
}

impl Default for VectorModulator {
    fn default() -> Self {
        Self {
            z: EnvelopeSample::new(1.0, 0.0),
        }
    }
}

impl VectorModulator {
    pub fn new(z: EnvelopeSample) -> Self {
        Self { z }
    }

    pub fn set_control(&mut self, z: EnvelopeSample) {
        self.z = z;
    }

    pub fn control(&self) -> EnvelopeSample {
        self.z
    }

    #[inline]
    pub fn apply(&self, x: EnvelopeSample) -> EnvelopeSample {
        x * self.z
    }
}
