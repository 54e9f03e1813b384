//! Power-law phase-noise synthesis.
//!
//! The one-sided phase PSD is `S(f) = b0 + b1/f + b2/f^2 + b3/f^3` (rad^2/Hz):
//!
//! * `b0`: white phase, i.i.d. Gaussian samples.
//! * `b1`: flicker phase, white noise shaped by a cascade of first-order
//!   pole/zero sections (four per decade) that approximates a -10 dB/decade slope.
//! * `b2`: random-walk phase, a running sum of white noise.
//! * `b3`: flicker frequency, the flicker shaper followed by a running sum.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::envelope::rng::{gaussian, SimRng};
use crate::envelope::EnvelopeSample;
use crate::error::{Error, Result};

/// Lower edge of the flicker shaper.
pub const FLICKER_MIN_HZ: f64 = 1.0;
const FLICKER_SECTIONS_PER_DECADE: f64 = 4.0;

/// Coefficients of the one-sided power-law phase PSD, rad^2/Hz^(1-k).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseCoefficients {
    #[serde(default)]
    pub b0: f64,
    #[serde(default)]
    pub b1: f64,
    #[serde(default)]
    pub b2: f64,
    #[serde(default)]
    pub b3: f64,
}

impl NoiseCoefficients {
    pub fn is_zero(&self) -> bool {
        self.b0 == 0.0 && self.b1 == 0.0 && self.b2 == 0.0 && self.b3 == 0.0
    }

    /// Target one-sided PSD at offset `f`.
    pub fn psd(&self, f: f64) -> f64 {
        self.b0 + self.b1 / f + self.b2 / (f * f) + self.b3 / (f * f * f)
    }

    /// Multiplies every coefficient by `factor` (a power ratio).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            b0: self.b0 * factor,
            b1: self.b1 * factor,
            b2: self.b2 * factor,
            b3: self.b3 * factor,
        }
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        for (name, b) in [("b0", self.b0), ("b1", self.b1), ("b2", self.b2), ("b3", self.b3)] {
            if !(b.is_finite() && b >= 0.0) {
                return Err(Error::config(format!("{field}.{name}"), format!("must be >= 0, got {b}")));
            }
        }
        Ok(())
    }
}

/// `y[n] = x[n] - zero * x[n-1] + pole * y[n-1]`.
#[derive(Clone, Copy, Debug)]
struct Section {
    zero: f64,
    pole: f64,
    x1: f64,
    y1: f64,
}

impl Section {
    #[inline]
    fn step(&mut self, x: f64) -> f64 {
        let y = x - self.zero * self.x1 + self.pole * self.y1;
        self.x1 = x;
        self.y1 = y;
        y
    }

    fn response(&self, w: f64) -> EnvelopeSample {
        let zinv = EnvelopeSample::from_polar(1.0, -w);
        (EnvelopeSample::new(1.0, 0.0) - zinv * self.zero) / (EnvelopeSample::new(1.0, 0.0) - zinv * self.pole)
    }
}

/// White-in, 1/f-out shaping filter. Poles are spaced four per decade from
/// [`FLICKER_MIN_HZ`] up to Nyquist with each zero half a step above its pole;
/// both are mapped to z by `exp(-2 pi f dt)`. The gain is fitted so that a
/// unit-variance white input gives a one-sided PSD of `1/f` across the band.
#[derive(Clone, Debug)]
pub struct FlickerShaper {
    sections: Vec<Section>,
    gain: f64,
}

impl FlickerShaper {
    pub fn new(dt: f64) -> Self {
        let nyquist = 0.5 / dt;
        let step = 10f64.powf(1.0 / FLICKER_SECTIONS_PER_DECADE);
        let half = step.sqrt();
        let mut sections = Vec::new();
        let mut p = FLICKER_MIN_HZ;
        while p * half < nyquist {
            let z = p * half;
            sections.push(Section {
                zero: (-TAU * z * dt).exp(),
                pole: (-TAU * p * dt).exp(),
                x1: 0.0,
                y1: 0.0,
            });
            p *= step;
        }
        let mut shaper = Self { sections, gain: 1.0 };
        shaper.gain = shaper.fit_gain(dt);
        shaper
    }

    /// Unnormalised power response at `f`.
    fn raw_power(&self, f: f64, dt: f64) -> f64 {
        let w = TAU * f * dt;
        self.sections.iter().map(|s| s.response(w).norm_sqr()).product()
    }

    /// Geometric-mean fit of `2 dt g^2 |H(f)|^2 = 1/f` over the interior of the band.
    fn fit_gain(&self, dt: f64) -> f64 {
        let lo = (FLICKER_MIN_HZ * 10.0).ln();
        let hi = (0.05 / dt).ln();
        let n = 200;
        let mean_log: f64 = (0..n)
            .map(|i| {
                let f = (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp();
                ((1.0 / f) / (2.0 * dt * self.raw_power(f, dt))).ln()
            })
            .sum::<f64>()
            / n as f64;
        (0.5 * mean_log).exp()
    }

    /// One-sided output PSD at `f` for unit-variance white input.
    pub fn output_psd(&self, f: f64, dt: f64) -> f64 {
        2.0 * dt * self.gain * self.gain * self.raw_power(f, dt)
    }

    pub fn section_count(&self) -> usize {
        self.sections.len()
    }

    #[inline]
    pub fn step(&mut self, white: f64) -> f64 {
        let mut x = white * self.gain;
        for s in &mut self.sections {
            x = s.step(x);
        }
        x
    }
}

/// Multiplicative phase-noise source with a power-law PSD.
#[derive(Clone, Debug)]
pub struct PhaseNoiseInjector {
    coeffs: NoiseCoefficients,
    sigma_white: f64,
    sigma_walk: f64,
    flicker_scale: f64,
    flicker_fm_scale: f64,
    flicker: Option<FlickerShaper>,
    flicker_fm: Option<FlickerShaper>,
    walk: f64,
    flicker_fm_walk: f64,
    rng: SimRng,
}

impl PhaseNoiseInjector {
    pub fn new(coeffs: NoiseCoefficients, dt: f64, rng: SimRng) -> Result<Self> {
        coeffs.validate("noise")?;
        let shaper = |b: f64| (b > 0.0).then(|| FlickerShaper::new(dt));
        Ok(Self {
            coeffs,
            sigma_white: (coeffs.b0 / (2.0 * dt)).sqrt(),
            sigma_walk: (coeffs.b2 * TAU * TAU * dt / 2.0).sqrt(),
            flicker_scale: coeffs.b1.sqrt(),
            // A running sum has |H|^2 ~ 1/(2 pi f dt)^2, so feed it b3 (2 pi dt)^2 / f.
            flicker_fm_scale: (coeffs.b3 * (TAU * dt).powi(2)).sqrt(),
            flicker: shaper(coeffs.b1),
            flicker_fm: shaper(coeffs.b3),
            walk: 0.0,
            flicker_fm_walk: 0.0,
            rng,
        })
    }

    pub fn coefficients(&self) -> NoiseCoefficients {
        self.coeffs
    }

    /// Next phase deviation in radians. Components with a zero coefficient draw
    /// nothing from the random stream.
    #[inline]
    pub fn next_phase(&mut self) -> f64 {
        let mut phi = 0.0;
        if self.coeffs.b0 > 0.0 {
            phi += self.sigma_white * gaussian(&mut self.rng);
        }
        if let Some(f) = &mut self.flicker {
            phi += self.flicker_scale * f.step(gaussian(&mut self.rng));
        }
        if self.coeffs.b2 > 0.0 {
            self.walk += self.sigma_walk * gaussian(&mut self.rng);
            phi += self.walk;
        }
        if let Some(f) = &mut self.flicker_fm {
            self.flicker_fm_walk += self.flicker_fm_scale * f.step(gaussian(&mut self.rng));
            phi += self.flicker_fm_walk;
        }
        phi
    }

    /// Unit-magnitude multiplier `exp(i dphi)`.
    #[inline]
    pub fn step(&mut self) -> EnvelopeSample {
        if self.coeffs.is_zero() {
            return EnvelopeSample::new(1.0, 0.0);
        }
        EnvelopeSample::from_polar(1.0, self.next_phase())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::rng::{stream, Stream};

    #[test]
    fn zero_coefficients_are_identity() {
        let mut nz = PhaseNoiseInjector::new(NoiseCoefficients::default(), 1e-7, stream(1, Stream::Aux)).unwrap();
        for _ in 0..100 {
            assert_eq!(nz.step(), EnvelopeSample::new(1.0, 0.0));
        }
    }

    #[test]
    fn multiplier_is_unit_magnitude_and_seeded() {
        let coeffs = NoiseCoefficients { b0: 1e-6, b1: 1e-5, b2: 1e-3, b3: 1e-2 };
        let run = |seed| {
            let mut nz = PhaseNoiseInjector::new(coeffs, 1e-7, stream(seed, Stream::Aux)).unwrap();
            (0..1000).map(|_| nz.step()).collect::<Vec<_>>()
        };
        let a = run(3);
        assert!(a.iter().all(|m| (m.norm() - 1.0).abs() < 1e-12));
        assert_eq!(a, run(3));
        assert_ne!(a, run(4));
    }

    #[test]
    fn shaper_tracks_one_over_f_within_one_db() {
        let dt = 1e-7;
        let shaper = FlickerShaper::new(dt);
        assert_eq!(shaper.section_count(), 27);
        let mut f = 10.0;
        while f < 0.05 / dt {
            let err_db = 10.0 * (shaper.output_psd(f, dt) * f).log10();
            assert!(err_db.abs() < 1.0, "f = {f}: {err_db} dB");
            f *= 1.37;
        }
    }

    #[test]
    fn negative_coefficient_rejected() {
        let c = NoiseCoefficients { b1: -1.0, ..Default::default() };
        assert!(PhaseNoiseInjector::new(c, 1e-7, stream(0, Stream::Aux)).is_err());
    }
}
