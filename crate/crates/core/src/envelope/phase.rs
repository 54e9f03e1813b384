//! Phase unwrapping and instantaneous frequency of complex envelopes.
//!
//! Positive frequency is anti-clockwise rotation of the envelope phasor.

use std::f64::consts::{PI, TAU};

use crate::envelope::{EnvelopeSample, TimeSeries};
use crate::error::{Error, Result};

/// Largest accepted successive phase step. Steps closer to pi than this are
/// indistinguishable from their alias and are reported instead of guessed.
pub const MAX_UNWRAP_STEP: f64 = PI * (1.0 - 1e-3);

/// Principal value in (-pi, pi].
pub fn wrap(phase: f64) -> f64 {
    let w = phase - TAU * (phase / TAU).round();
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

/// Phase advance from `prev` to `next`, in (-pi, pi].
#[inline]
fn step(prev: EnvelopeSample, next: EnvelopeSample) -> f64 {
    (next * prev.conj()).arg()
}

/// Continuous phase of `s`. The first sample keeps its principal argument.
pub fn unwrap_phase(s: &TimeSeries<EnvelopeSample>) -> Result<TimeSeries<f64>> {
    let data = s.data();
    let mut out = Vec::with_capacity(data.len());
    if data[0].norm_sqr() == 0.0 {
        return Err(Error::ZeroMagnitude { index: 0 });
    }
    let mut acc = data[0].arg();
    out.push(acc);
    for (i, pair) in data.windows(2).enumerate() {
        if pair[1].norm_sqr() == 0.0 {
            return Err(Error::ZeroMagnitude { index: i + 1 });
        }
        let d = step(pair[0], pair[1]);
        if d.abs() > MAX_UNWRAP_STEP {
            return Err(Error::Aliasing { index: i + 1, step: d });
        }
        acc += d;
        out.push(acc);
    }
    TimeSeries::new(s.dt(), s.t0(), out)
}

/// Unwraps a real sequence of principal values (e.g. from `atan2`).
pub fn unwrap_real(wrapped: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(wrapped.len());
    let Some(&first) = wrapped.first() else {
        return out;
    };
    let mut acc = first;
    out.push(acc);
    for pair in wrapped.windows(2) {
        acc += wrap(pair[1] - pair[0]);
        out.push(acc);
    }
    out
}

/// Instantaneous frequency trace together with the indices of gap samples.
#[derive(Clone, Debug)]
pub struct InstantaneousFrequency {
    /// Hz; sample `k` sits midway between input samples `k` and `k + 1`.
    pub hz: TimeSeries<f64>,
    /// Output indices where an input sample had zero magnitude. Those entries
    /// hold the previous valid estimate (0 Hz if none yet).
    pub gaps: Vec<usize>,
}

pub fn instantaneous_frequency(s: &TimeSeries<EnvelopeSample>) -> Result<InstantaneousFrequency> {
    let data = s.data();
    if data.len() < 2 {
        return Err(Error::InsufficientLength {
            reason: "instantaneous frequency needs at least two samples".into(),
        });
    }
    let scale = 1.0 / (TAU * s.dt());
    let mut gaps = Vec::new();
    let mut last = 0.0;
    let mut out = Vec::with_capacity(data.len() - 1);
    for (k, pair) in data.windows(2).enumerate() {
        if pair[0].norm_sqr() == 0.0 || pair[1].norm_sqr() == 0.0 {
            gaps.push(k);
        } else {
            last = step(pair[0], pair[1]) * scale;
        }
        out.push(last);
    }
    Ok(InstantaneousFrequency {
        hz: TimeSeries::new(s.dt(), s.t0() + 0.5 * s.dt(), out)?,
        gaps,
    })
}

/// Online phase unwrapper for sample-by-sample loops.
#[derive(Clone, Debug, Default)]
pub struct PhaseUnwrapper {
    prev: Option<EnvelopeSample>,
    phase: f64,
}

impl PhaseUnwrapper {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feeds the next sample and returns the unwrapped phase. Zero-magnitude
    /// samples hold the previous phase.
    #[inline]
    pub fn push(&mut self, x: EnvelopeSample) -> f64 {
        if x.norm_sqr() == 0.0 {
            return self.phase;
        }
        match self.prev {
            None => self.phase = x.arg(),
            Some(p) => self.phase += step(p, x),
        }
        self.prev = Some(x);
        self.phase
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tone(f: f64, dt: f64, n: usize) -> TimeSeries<EnvelopeSample> {
        let data = (0..n)
            .map(|k| EnvelopeSample::from_polar(1.0, TAU * f * k as f64 * dt))
            .collect();
        TimeSeries::new(dt, 0.0, data).unwrap()
    }

    #[test]
    fn constant_signal_has_zero_phase() {
        let s = TimeSeries::new(1.0, 0.0, vec![EnvelopeSample::new(1.0, 0.0); 16]).unwrap();
        assert!(unwrap_phase(&s).unwrap().data().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn tone_unwraps_to_linear_ramp() {
        let dt = 1e-7;
        let f = 0.01 / dt;
        let phase = unwrap_phase(&tone(f, dt, 5_000)).unwrap();
        for (k, &p) in phase.data().iter().enumerate() {
            let expected = TAU * f * k as f64 * dt;
            assert!((p - expected).abs() < 1e-9 * expected.max(1.0), "k={k}");
        }
    }

    #[test]
    fn crossing_minus_pi_is_monotone() {
        // f*dt = 0.25: quarter-turn steps cross the branch cut every 4 samples.
        let dt = 1e-7;
        let s = tone(-0.25 / dt, dt, 64);
        let phase = unwrap_phase(&s).unwrap();
        let steps: Vec<f64> = phase.data().windows(2).map(|w| w[1] - w[0]).collect();
        assert!(steps.iter().all(|&d| d < 0.0 && d.abs() < PI));
        assert!((phase.data()[63] - (-0.25 * TAU * 63.0)).abs() < 1e-9);
    }

    #[test]
    fn half_rate_alternation_is_flagged() {
        let s = TimeSeries::new(1.0, 0.0, vec![
            EnvelopeSample::new(1.0, 0.0),
            EnvelopeSample::new(-1.0, 0.0),
        ])
        .unwrap();
        assert!(matches!(unwrap_phase(&s), Err(Error::Aliasing { index: 1, .. })));
    }

    #[test]
    fn dc_envelope_has_zero_frequency() {
        let s = TimeSeries::new(1e-7, 0.0, vec![EnvelopeSample::new(0.3, 0.4); 100]).unwrap();
        let f = instantaneous_frequency(&s).unwrap();
        assert_eq!(f.hz.len(), 99);
        assert!(f.hz.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tone_frequency_and_sign() {
        let dt = 1e-7;
        for f in [40e3, -20e3] {
            let est = instantaneous_frequency(&tone(f, dt, 1_000)).unwrap();
            for &v in est.hz.data() {
                assert!(((v - f) / f).abs() < 1e-6, "{v} vs {f}");
            }
        }
    }

    #[test]
    fn zero_samples_become_flagged_gaps() {
        let mut data = tone(1e3, 1e-4, 10).into_data();
        data[4] = EnvelopeSample::new(0.0, 0.0);
        let s = TimeSeries::new(1e-4, 0.0, data).unwrap();
        let est = instantaneous_frequency(&s).unwrap();
        assert_eq!(est.gaps, vec![3, 4]);
        assert!(est.hz.data().iter().all(|v| v.is_finite()));
        assert!(matches!(unwrap_phase(&s), Err(Error::ZeroMagnitude { index: 4 })));
    }

    #[test]
    fn online_unwrapper_matches_batch() {
        let s = tone(-3.3e5, 1e-7, 2_000);
        let batch = unwrap_phase(&s).unwrap();
        let mut u = PhaseUnwrapper::new();
        for (x, &p) in s.data().iter().zip(batch.data()) {
            assert_eq!(u.push(*x), p);
        }
    }

    proptest! {
        #[test]
        fn unwrap_inverts_wrap(steps in prop::collection::vec(-3.0f64..3.0, 1..500), start in -50.0f64..50.0) {
            let mut phase = vec![start];
            for d in &steps {
                phase.push(phase.last().unwrap() + d);
            }
            let s = TimeSeries::new(1.0, 0.0, phase.iter().map(|&p| EnvelopeSample::from_polar(1.0, p)).collect()).unwrap();
            let u = unwrap_phase(&s).unwrap();
            let offset = phase[0] - u.data()[0];
            prop_assert!((wrap(offset)).abs() < 1e-9);
            for (a, b) in u.data().iter().zip(&phase) {
                prop_assert!((a + offset - b).abs() < 1e-9);
            }
            let w: Vec<f64> = phase.iter().map(|&p| wrap(p)).collect();
            let r = unwrap_real(&w);
            for (a, b) in r.iter().zip(&phase) {
                prop_assert!((a + offset - b).abs() < 1e-9);
            }
        }

        #[test]
        fn smooth_phase_frequency_is_first_order(a in 0.1f64..5.0, w in 1.0f64..50.0) {
            let dt = 1e-4;
            let theta = |t: f64| a * (w * t).sin();
            let s = TimeSeries::new(dt, 0.0, (0..400).map(|k| EnvelopeSample::from_polar(1.0, theta(k as f64 * dt))).collect()).unwrap();
            let est = instantaneous_frequency(&s).unwrap();
            for (k, &f) in est.hz.data().iter().enumerate() {
                let t = (k as f64 + 0.5) * dt;
                let exact = a * w * (w * t).cos() / TAU;
                prop_assert!((f - exact).abs() < 1e-3 * (a * w / TAU) + 1e-9);
            }
        }
    }
}
