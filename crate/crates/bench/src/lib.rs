//! Shared inputs for the benchmarks.

use std::f64::consts::TAU;

use tdolab_core::{EnvelopeSample, TimeSeries};

/// A noisy tone with a slow chirp, sampled at 10 MS/s.
pub fn chirped_tone(samples: usize) -> TimeSeries<EnvelopeSample> {
    let dt = 1e-7;
    let data = (0..samples)
        .map(|k| {
            let t = k as f64 * dt;
            let phase = TAU * (20e3 * t + 0.5e6 * t * t) + 1e-3 * (k as f64 * 0.618).sin();
            EnvelopeSample::cis(phase)
        })
        .collect();
    TimeSeries::new(dt, 0.0, data).expect("non-empty series")
}
