use crate::envelope::EnvelopeSample;
use crate::error::{Error, Result};

/// Memoryless saturable amplifier, `y = x g0 / sqrt(1 + |x|^2 / p_sat)`.
/// Compresses magnitude only; phase passes through untouched.
#[derive(Clone, Copy, Debug)]
pub struct SaturatingAmp {
    g0: f64,
    p_sat: f64,
}

impl SaturatingAmp {
    pub fn new(g0: f64, p_sat: f64) -> Result<Self> {
        if !(g0.is_finite() && g0 > 0.0) {
            return Err(Error::config("g0", format!("must be positive, got {g0}")));
        }
        if !(p_sat.is_finite() && p_sat > 0.0) {
            return Err(Error::config("p_sat", format!("must be positive, got {p_sat}")));
        }
        Ok(Self { g0, p_sat })
    }

    #[inline]
    pub fn step(&self, x: EnvelopeSample) -> EnvelopeSample {
        x * (self.g0 / (1.0 + x.norm_sqr() / self.p_sat).sqrt())
    }

    /// Output magnitude limit as |x| grows without bound.
    pub fn max_output(&self) -> f64 {
        self.g0 * self.p_sat.sqrt()
    }

    /// Amplitude at which the gain, times the remaining loop gain `loop_gain`,
    /// equals one. `None` when the small-signal loop gain is below one.
    pub fn steady_amplitude(&self, loop_gain: f64) -> Option<f64> {
        let g = self.g0 * loop_gain;
        (g > 1.0).then(|| (self.p_sat * (g * g - 1.0)).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_in_zero_out() {
        let amp = SaturatingAmp::new(2.0, 1.0).unwrap();
        assert_eq!(amp.step(EnvelopeSample::new(0.0, 0.0)), EnvelopeSample::new(0.0, 0.0));
    }

    #[test]
    fn fixed_point_is_root_three() {
        let amp = SaturatingAmp::new(2.0, 1.0).unwrap();
        let a = amp.steady_amplitude(1.0).unwrap();
        assert!((a - 3f64.sqrt()).abs() < 1e-15);
        let y = amp.step(EnvelopeSample::new(a, 0.0));
        assert!((y.norm() - a).abs() < 1e-12);
        assert!(amp.steady_amplitude(0.4).is_none());
    }

    #[test]
    fn bounded_asymptote() {
        let amp = SaturatingAmp::new(2.0, 1.0).unwrap();
        let y = amp.step(EnvelopeSample::new(1e9, 0.0));
        assert!((y.norm() - amp.max_output()).abs() < 1e-6);
        assert!(amp.step(EnvelopeSample::new(1e3, 0.0)).norm() < amp.max_output());
    }

    proptest! {
        #[test]
        fn phase_preserved_and_magnitude_monotone(r1 in 0.0f64..100.0, dr in 1e-6f64..10.0, phi in -3.1f64..3.1) {
            let amp = SaturatingAmp::new(2.0, 1.0).unwrap();
            let y1 = amp.step(EnvelopeSample::from_polar(r1, phi));
            let y2 = amp.step(EnvelopeSample::from_polar(r1 + dr, phi));
            prop_assert!(y2.norm() > y1.norm());
            prop_assert!(y2.norm() < amp.max_output());
            prop_assert!((y2.arg() - phi).abs() < 1e-12);
        }
    }
}
