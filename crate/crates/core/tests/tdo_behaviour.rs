use std::f64::consts::{PI, TAU};

use tdolab_core::analysis::{fit_sinusoid, linear_fit, ridge_point, Stft};
use tdolab_core::blocks::NoiseCoefficients;
use tdolab_core::tdo::{
    run_free, run_swept, settled_metrics, tune_fsr, Controls, SweepParams, Tdo, TdoConfig, TdoStart, TuneOptions,
    TuningElement,
};
use tdolab_core::{EnvelopeSample, TimeSeries};

fn noise_free(cfg: TdoConfig) -> TdoConfig {
    TdoConfig {
        noise: NoiseCoefficients::default(),
        ..cfg
    }
}

/// Runs with a fixed vector-modulator setting and returns the settled
/// `(frequency, amplitude)`.
fn settle_with_z(cfg: &TdoConfig, z: EnvelopeSample, duration: f64) -> (f64, f64) {
    let mut tdo = Tdo::new(cfg).unwrap();
    let controls = Controls { z, ..Controls::default() };
    let n = (duration / cfg.dt) as usize;
    let out: Vec<_> = (0..n).map(|_| tdo.step(&controls).unwrap()).collect();
    settled_metrics(&out, cfg.dt, 0.1)
}

#[test]
fn build_up_from_noise_settles_on_a_comb_line_at_the_amplifier_fixed_point() {
    let cfg = noise_free(TdoConfig {
        g0: 2.0,
        start: TdoStart::Noise,
        ..TdoConfig::default()
    });
    let run = run_free(&cfg, 0.2).unwrap();
    let amp = run.settled_amplitude;
    assert!((amp / 3f64.sqrt() - 1.0).abs() < 0.05, "amplitude {amp}");
    let k = (run.settled_frequency / cfg.fsr()).round();
    assert!((run.settled_frequency - k * cfg.fsr()).abs() < cfg.fsr() / 2.0, "{} Hz", run.settled_frequency);
}

#[test]
fn half_turn_of_the_modulator_moves_the_line_by_half_an_fsr() {
    let cfg = noise_free(TdoConfig {
        start: TdoStart::Carrier {
            offset_hz: 5e3,
            amplitude: 0.1,
        },
        ..TdoConfig::default()
    });
    let (f0, a0) = settle_with_z(&cfg, EnvelopeSample::new(1.0, 0.0), 0.05);
    let (f1, a1) = settle_with_z(&cfg, EnvelopeSample::cis(PI), 0.05);
    let expected = PI / (TAU * cfg.tau_g());
    assert!((f1 - f0 - expected).abs() < 0.01 * expected, "{f0} -> {f1}");
    // Amplitude regulation does not depend on the tuning phase.
    assert!((a1 / a0 - 1.0).abs() < 0.01, "{a0} vs {a1}");
}

#[test]
fn settled_frequency_satisfies_the_phase_condition() {
    let cfg = noise_free(TdoConfig::default());
    for theta in [0.4, -1.3, 2.5] {
        let (f, _) = settle_with_z(&cfg, EnvelopeSample::cis(theta), 0.05);
        let round_trip = TAU * f * cfg.tau_g() - theta;
        let residue = round_trip - TAU * (round_trip / TAU).round();
        assert!(residue.abs() < 0.01 * TAU, "theta {theta}: {f} Hz, residue {residue}");
    }
}

#[test]
fn default_oscillator_runs_on_a_single_line() {
    let cfg = TdoConfig::default();
    let out = run_free(&cfg, 0.05).unwrap().output;
    let n = 1 << 16;
    let tail = out.slice(out.len() - n..out.len()).unwrap();
    let stft = Stft::new(n, n, cfg.dt).unwrap();
    let sp = stft.compute(&tail).unwrap();
    let p = ridge_point(&sp.freqs, sp.row(0));
    assert!(p.freq.abs() < cfg.fsr() / 2.0, "{p:?}");
    assert!(p.margin >= 20.0, "other lines within {} dB", p.margin);
}

#[test]
fn halving_the_delay_doubles_the_fsr() {
    let cfg = TdoConfig {
        tau_d: 12.4e-6,
        ..TdoConfig::default()
    };
    assert!((cfg.fsr() - 80e3).abs() < 1e-6);
    let shift = tune_fsr(&cfg, &TuneOptions::default()).unwrap().shift_hz;
    assert!((shift / 80e3 - 1.0).abs() < 0.01, "{shift}");
}

#[test]
fn two_windings_move_two_fsr_without_jumps() {
    let cfg = TdoConfig::default();
    let r = tune_fsr(
        &cfg,
        &TuneOptions {
            turns: 2.0,
            ..TuneOptions::default()
        },
    )
    .unwrap();
    assert!((r.shift_hz / 80e3 - 1.0).abs() < 0.01, "{}", r.shift_hz);
    assert!(r.max_frame_step_hz < cfg.fsr() / 10.0);
}

#[test]
fn drift_emulator_chirps_at_rate_over_two_pi_tau_g() {
    for rate in [5e5, -1e6] {
        let cfg = TdoConfig {
            tuning: vec![TuningElement::VectorModulator, TuningElement::UnboundedPhaseShifter],
            drift_rate: rate,
            ..TdoConfig::default()
        };
        let expected = cfg.drift_phase_rate() / (TAU * cfg.tau_g());
        let out = run_free(&cfg, 0.1).unwrap().output;
        let ridge = Stft::new(4096, 1024, cfg.dt).unwrap().track(&out).unwrap();
        let (t, f) = ridge.valid();
        let slope = linear_fit(&t, &f).unwrap().slope;
        assert!((slope / expected - 1.0).abs() < 0.02, "{slope} vs {expected}");
    }
}

fn sweep_fit(sweep: &SweepParams) -> (f64, f64) {
    let cfg = TdoConfig::default();
    let out = run_swept(&cfg, sweep, 1.0).unwrap();
    let ridge = Stft::new(4096, 1024, cfg.dt).unwrap().track(&out).unwrap();
    assert!(ridge.ambiguous.is_empty());
    let (t, f) = ridge.valid();
    let fit = fit_sinusoid(&t, &f, sweep.omega).unwrap();
    (fit.amplitude, fit.period())
}

#[test]
fn sweep_excursion_scales_with_drive_amplitude() {
    let base = SweepParams::default();
    let small = SweepParams { a: base.a / 25.0, ..base };
    assert!((small.peak_excursion(25e-6) - 40e3).abs() < 1e-6);
    let (amp, period) = sweep_fit(&small);
    assert!((amp / 40e3 - 1.0).abs() < 0.05, "{amp}");
    assert!((period - 1.0).abs() < 0.01);
}

#[test]
fn doubling_sweep_rate_halves_period_and_excursion() {
    let fast = SweepParams {
        omega: 2.0 * TAU,
        ..SweepParams::default()
    };
    let (amp, period) = sweep_fit(&fast);
    assert!((amp / 0.5e6 - 1.0).abs() < 0.05, "{amp}");
    assert!((period / 0.5 - 1.0).abs() < 0.01, "{period}");
}

#[test]
fn ridge_follows_a_phase_controlled_trajectory() {
    // theta(t) = A sin(2 pi t / T) applied directly to the modulator; the
    // adiabatic offset is theta / (2 pi tau_g).
    let cfg = TdoConfig::default();
    let (amp, period, duration) = (TAU * 5.0, 0.2, 0.2);
    let theta = |t: f64| amp * (TAU * t / period).sin();
    let mut tdo = Tdo::new(&cfg).unwrap();
    let n = (duration / cfg.dt) as usize;
    let out: Vec<_> = (0..n)
        .map(|k| {
            let controls = Controls {
                z: EnvelopeSample::cis(theta(k as f64 * cfg.dt)),
                ..Controls::default()
            };
            tdo.step(&controls).unwrap()
        })
        .collect();
    let out = TimeSeries::new(cfg.dt, 0.0, out).unwrap();
    let stft = Stft::new(4096, 1024, cfg.dt).unwrap();
    let ridge = stft.track(&out).unwrap();
    assert!(ridge.ambiguous.is_empty());
    let peak = amp / (TAU * cfg.tau_g());
    let edge = 0.5 / cfg.dt - 5.0 * stft.bin_width();
    assert!(peak < edge);
    let mut worst = 0.0f64;
    for (t, f) in ridge.freq.times().zip(ridge.freq.data()) {
        let predicted = theta(t) / (TAU * cfg.tau_g());
        worst = worst.max((f - predicted).abs());
    }
    assert!(worst < 0.05 * peak, "worst deviation {worst} Hz of {peak} Hz");
}
