use std::f64::consts::TAU;

use tdolab_core::pll::{run_scalar_pll, run_vector_pll, run_vector_pll_with, ControlTrace, PllConfig};
use tdolab_core::stuart_landau::SlParams;
use tdolab_core::tdo::{TdoConfig, TuningElement};

fn tdo(tuning: &[TuningElement]) -> TdoConfig {
    TdoConfig {
        tuning: tuning.to_vec(),
        ..TdoConfig::default()
    }
}

#[test]
fn scalar_and_vector_loops_agree_without_drift() {
    let mut pll = PllConfig::default();
    pll.reference.offset_hz = 30.0;
    let s = run_scalar_pll(&tdo(&[TuningElement::BoundedPhaseShifter]), &pll, 0.0, 0.1).unwrap();
    let v = run_vector_pll(&tdo(&[TuningElement::VectorModulator]), &pll, &SlParams::default(), 0.0, 0.1).unwrap();
    let t_lock = s.report.lock_time.unwrap().max(v.report.lock_time.unwrap());
    let from = s.phase_error.index_at(t_lock);
    let (es, ev) = (&s.phase_error.data()[from..], &v.phase_error.data()[from..]);
    let rms = |x: &mut dyn Iterator<Item = f64>| {
        let (sum, n) = x.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
        (sum / n as f64).sqrt()
    };
    let diff = rms(&mut es.iter().zip(ev).map(|(a, b)| a - b));
    let scale = rms(&mut es.iter().copied());
    assert!(scale > 0.0);
    assert!(diff <= 0.1 * scale, "rms difference {diff} vs rms error {scale}");
}

#[test]
fn locked_vector_loop_holds_the_ramp_tracking_error() {
    let cfg = tdo(&[TuningElement::VectorModulator, TuningElement::UnboundedPhaseShifter]);
    let pll = PllConfig::default();
    for rate in [2.5e5, 5e5, 1e6, -1e6] {
        let report = run_vector_pll(&cfg, &pll, &SlParams::default(), rate, 0.1).unwrap().report;
        assert!(report.loss_time.is_none(), "rate {rate}");
        let steady = report.steady_phase_error.unwrap();
        let predicted = pll.ramp_tracking_error(TAU * cfg.tau_g() * rate);
        assert!((steady / predicted - 1.0).abs() <= 0.2, "rate {rate}: {steady} vs {predicted}");
    }
}

#[test]
fn vector_controls_stay_bounded_while_the_angle_grows() {
    let cfg = tdo(&[TuningElement::VectorModulator, TuningElement::UnboundedPhaseShifter]);
    let sl = SlParams::default();
    let run = run_vector_pll_with(&cfg, &PllConfig::default(), &sl, 1e6, 1.0, 100).unwrap();
    let ControlTrace::Vector { z, v } = &run.control else {
        panic!("vector controls expected")
    };
    assert!(z.data().iter().all(|z| (z.norm() - 1.0).abs() < 1e-3));
    // Steady drive rotates z at the drift's phase rate.
    let v_steady = sl.tau * TAU * cfg.tau_g() * 1e6;
    let v_max = v.data().iter().skip(v.len() / 10).fold(0.0f64, |m, x| m.max(x.abs()));
    assert!(v_max < 2.0 * v_steady, "{v_max} vs {v_steady}");
    let turns = run.report.winding_turns.unwrap();
    assert!((turns.abs() - 25.0).abs() < 1.0, "{turns} turns in 1 s");
    assert!(run.report.loss_time.is_none());
}

#[test]
fn acquisition_from_large_detuning_slews_on_the_clamp_then_locks() {
    let mut pll = PllConfig::default();
    pll.reference.offset_hz = 200e3;
    let run = run_vector_pll(&tdo(&[TuningElement::VectorModulator]), &pll, &SlParams::default(), 0.0, 0.06).unwrap();
    let limit = pll.n * pll.clamp;
    let e = run.phase_error.data();
    assert!(e.iter().all(|x| x.abs() <= limit));
    let t_lock = run.report.lock_time.expect("locks");
    let pinned = e.iter().take(run.phase_error.index_at(t_lock)).filter(|x| x.abs() == limit).count();
    assert!(pinned > 0, "detector never reached the clamp during acquisition");
    let after = &e[run.phase_error.index_at(t_lock)..];
    assert!(after.iter().all(|x| x.abs() < limit));
}

#[test]
fn bounded_shifter_saturates_and_never_exceeds_pi() {
    let cfg = tdo(&[TuningElement::BoundedPhaseShifter, TuningElement::UnboundedPhaseShifter]);
    let run = run_scalar_pll(&cfg, &PllConfig::default(), 1e6, 0.05).unwrap();
    let ControlTrace::Scalar { p } = &run.control else {
        panic!("scalar controls expected")
    };
    assert!(p.data().iter().all(|p| p.abs() <= std::f64::consts::PI));
    assert!(run.report.saturation_events.unwrap() >= 1);
}

#[test]
fn runs_are_deterministic_per_seed() {
    let cfg = tdo(&[TuningElement::VectorModulator]);
    let pll = PllConfig::default();
    let a = run_vector_pll(&cfg, &pll, &SlParams::default(), 0.0, 0.02).unwrap();
    let b = run_vector_pll(&cfg, &pll, &SlParams::default(), 0.0, 0.02).unwrap();
    assert_eq!(a.output.data(), b.output.data());
    let other = TdoConfig { seed: 2, ..cfg };
    let c = run_vector_pll(&other, &pll, &SlParams::default(), 0.0, 0.02).unwrap();
    assert_ne!(a.output.data(), c.output.data());
}
