//! Time-delay oscillator loop in the complex-envelope domain.
//!
//! One sample of the loop is
//! `delay -> resonator -> amplifier -> tuning elements -> phase noise -> delay`.
//! The output tap sits after the amplifier. The round-trip group delay is the
//! delay-line length plus the resonator's on-resonance group delay.
//!
//! Delay drift is emulated by ramping an unbounded phase shifter; the delay
//! line length never changes during a run.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::blocks::{
    BoundedPhaseShifter, NoiseCoefficients, PhaseNoiseInjector, Resonator, SaturatingAmp,
    UnboundedPhaseShifter, VectorModulator,
};
use crate::envelope::rng::{complex_gaussian, stream, Stream};
use crate::envelope::{samples_for, DelayLine, EnvelopeSample, PhaseUnwrapper, SimClock, TimeSeries};
use crate::error::{Error, Result};
use crate::stuart_landau::{SlIntegrator, SlParams, SlState};

/// Output magnitude beyond which the loop is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 100.0;

/// Offset at which the default noise coefficients are anchored.
pub const NOISE_ANCHOR_HZ: f64 = 10e3;
/// Free-running single-sideband level at [`NOISE_ANCHOR_HZ`] for the default coefficients.
pub const NOISE_ANCHOR_DBC: f64 = -137.0;
/// Flicker corner of the default injected noise.
pub const NOISE_FLICKER_CORNER_HZ: f64 = 1e3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TuningElement {
    BoundedPhaseShifter,
    UnboundedPhaseShifter,
    VectorModulator,
}

/// Initial contents of the delay line. Both variants add complex Gaussian
/// noise of standard deviation `seed_sigma` per component.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TdoStart {
    /// Noise only; the oscillation builds up from the seed.
    Noise,
    /// A tone at `offset_hz` from the nominal carrier, amplitude `amplitude`,
    /// with a seeded random initial phase.
    Carrier { offset_hz: f64, amplitude: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TdoConfig {
    /// Sample interval, seconds. Must divide `tau_d` and `tau_r`.
    pub dt: f64,
    /// Delay-line delay, seconds.
    pub tau_d: f64,
    /// Resonator on-resonance group delay, seconds.
    pub tau_r: f64,
    /// Amplifier small-signal gain. Modes detuned by more than roughly
    /// 0.9 MHz from the resonator centre are unstable at `g0 = 2`; the default
    /// keeps the full ±1 MHz sweep range stable.
    pub g0: f64,
    /// Amplifier saturation power.
    pub p_sat: f64,
    /// Injected power-law phase noise.
    pub noise: NoiseCoefficients,
    /// Tuning elements in loop order.
    pub tuning: Vec<TuningElement>,
    /// Natural-frequency chirp emulated by the unbounded phase shifter, Hz/s.
    pub drift_rate: f64,
    pub start: TdoStart,
    pub seed_sigma: f64,
    pub seed: u64,
}

impl Default for TdoConfig {
    fn default() -> Self {
        let mut cfg = Self {
            dt: 1e-7,
            tau_d: 24.9e-6,
            tau_r: 0.1e-6,
            g0: 4.0,
            p_sat: 1.0,
            noise: NoiseCoefficients::default(),
            tuning: vec![TuningElement::VectorModulator],
            drift_rate: 0.0,
            start: TdoStart::Carrier {
                offset_hz: 0.0,
                amplitude: 0.1,
            },
            seed_sigma: 1e-3,
            seed: 1,
        };
        cfg.noise = cfg.anchored_noise(NOISE_ANCHOR_DBC);
        cfg
    }
}

impl TdoConfig {
    /// Round-trip group delay `tau_d + tau_r`.
    pub fn tau_g(&self) -> f64 {
        self.tau_d + self.tau_r
    }

    pub fn fsr(&self) -> f64 {
        1.0 / self.tau_g()
    }

    /// Full 3 dB resonator bandwidth `1 / (pi tau_r)`.
    pub fn resonator_bandwidth(&self) -> f64 {
        1.0 / (PI * self.tau_r)
    }

    /// Approximate number of comb lines inside the resonator bandwidth.
    pub fn mode_count(&self) -> f64 {
        self.resonator_bandwidth() / self.fsr()
    }

    /// Ramp rate (rad/s) of the drift emulator, `2 pi tau_g drift_rate`.
    pub fn drift_phase_rate(&self) -> f64 {
        TAU * self.tau_g() * self.drift_rate
    }

    pub fn has(&self, element: TuningElement) -> bool {
        self.tuning.contains(&element)
    }

    /// Coefficients for white plus flicker injected noise (corner at
    /// [`NOISE_FLICKER_CORNER_HZ`]) such that the free-running oscillator
    /// shows `dbc` dBc/Hz at [`NOISE_ANCHOR_HZ`]. Uses the small-signal loop
    /// phase transfer `1 / |1 - exp(-i 2 pi f tau_g)|^2`.
    pub fn anchored_noise(&self, dbc: f64) -> NoiseCoefficients {
        let f = NOISE_ANCHOR_HZ;
        let loop_gain = 1.0 / (2.0 - 2.0 * (TAU * f * self.tau_g()).cos());
        let s_target = 2.0 * 10f64.powf(dbc / 10.0);
        let b0 = s_target / (loop_gain * (1.0 + NOISE_FLICKER_CORNER_HZ / f));
        NoiseCoefficients {
            b0,
            b1: b0 * NOISE_FLICKER_CORNER_HZ,
            b2: 0.0,
            b3: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let clock = SimClock::new(self.dt)?;
        if clock.samples_for("tdo.tau_d", self.tau_d)? == 0 {
            return Err(Error::config("tdo.tau_d", "must be at least one sample"));
        }
        if clock.samples_for("tdo.tau_r", self.tau_r)? == 0 {
            return Err(Error::config("tdo.tau_r", "must be at least one sample"));
        }
        if !(self.g0.is_finite() && self.g0 > 0.0) {
            return Err(Error::config("tdo.g0", format!("must be positive, got {}", self.g0)));
        }
        if !(self.p_sat.is_finite() && self.p_sat > 0.0) {
            return Err(Error::config("tdo.p_sat", format!("must be positive, got {}", self.p_sat)));
        }
        self.noise.validate("tdo.noise")?;
        if !(self.seed_sigma.is_finite() && self.seed_sigma >= 0.0) {
            return Err(Error::config("tdo.seed_sigma", "must be >= 0"));
        }
        if !self.drift_rate.is_finite() {
            return Err(Error::config("tdo.drift_rate", "must be finite"));
        }
        if self.drift_rate != 0.0 && !self.has(TuningElement::UnboundedPhaseShifter) {
            return Err(Error::config(
                "tdo.drift_rate",
                "drift emulation needs `unbounded-phase-shifter` in tdo.tuning",
            ));
        }
        for (i, e) in self.tuning.iter().enumerate() {
            if self.tuning[..i].contains(e) {
                return Err(Error::config("tdo.tuning", format!("{e:?} listed twice")));
            }
        }
        if let TdoStart::Carrier { offset_hz, amplitude } = self.start {
            if !(offset_hz.is_finite() && offset_hz.abs() < 0.5 / self.dt) {
                return Err(Error::config("tdo.start.offset_hz", "must lie inside the Nyquist band"));
            }
            if !(amplitude.is_finite() && amplitude >= 0.0) {
                return Err(Error::config("tdo.start.amplitude", "must be >= 0"));
            }
        }
        Ok(())
    }
}

/// Control inputs for one loop step. Ignored for elements not present.
#[derive(Clone, Copy, Debug)]
pub struct Controls {
    /// Bounded phase-shifter command, radians (clipped to [-pi, pi]).
    pub phase: f64,
    /// Vector-modulator transmission.
    pub z: EnvelopeSample,
}

impl Default for Controls {
    fn default() -> Self {
        Self {
            phase: 0.0,
            z: EnvelopeSample::new(1.0, 0.0),
        }
    }
}

/// Running oscillator.
#[derive(Clone, Debug)]
pub struct Tdo {
    clock: SimClock,
    delay: DelayLine,
    resonator: Resonator,
    amp: SaturatingAmp,
    order: Vec<TuningElement>,
    bounded: BoundedPhaseShifter,
    unbounded: UnboundedPhaseShifter,
    vm: VectorModulator,
    noise: PhaseNoiseInjector,
    output: EnvelopeSample,
}

impl Tdo {
    pub fn new(cfg: &TdoConfig) -> Result<Self> {
        cfg.validate()?;
        let clock = SimClock::new(cfg.dt)?;
        let len = samples_for(cfg.dt, "tdo.tau_d", cfg.tau_d)?;
        let mut seed_rng = stream(cfg.seed, Stream::DelaySeed);
        let sigma = cfg.seed_sigma;
        let carrier_phase = complex_gaussian(&mut stream(cfg.seed, Stream::CarrierPhase), 1.0).arg();
        let delay = DelayLine::with_seed(len, |i| {
            let noise = complex_gaussian(&mut seed_rng, sigma);
            match cfg.start {
                TdoStart::Noise => noise,
                TdoStart::Carrier { offset_hz, amplitude } => {
                    // Sample i of the line was emitted at t = (i - len) dt.
                    let t = (i as f64 - len as f64) * cfg.dt;
                    EnvelopeSample::from_polar(amplitude, TAU * offset_hz * t + carrier_phase) + noise
                }
            }
        })?;
        Ok(Self {
            clock,
            delay,
            resonator: Resonator::new(cfg.tau_r, cfg.dt)?,
            amp: SaturatingAmp::new(cfg.g0, cfg.p_sat)?,
            order: cfg.tuning.clone(),
            bounded: BoundedPhaseShifter::new(),
            unbounded: UnboundedPhaseShifter::ramp(cfg.drift_phase_rate(), cfg.dt),
            vm: VectorModulator::default(),
            noise: PhaseNoiseInjector::new(cfg.noise, cfg.dt, stream(cfg.seed, Stream::TdoPhaseNoise))?,
            output: EnvelopeSample::new(0.0, 0.0),
        })
    }

    pub fn dt(&self) -> f64 {
        self.clock.dt()
    }

    /// Time of the next sample to be produced.
    pub fn time(&self) -> f64 {
        self.clock.time()
    }

    pub fn delay_samples(&self) -> usize {
        self.delay.len()
    }

    pub fn output(&self) -> EnvelopeSample {
        self.output
    }

    pub fn bounded_shifter(&self) -> &BoundedPhaseShifter {
        &self.bounded
    }

    /// Current drift-emulator phase, radians.
    pub fn drift_phase(&self) -> f64 {
        self.unbounded.theta()
    }

    /// Advances the loop by one sample and returns the output tap.
    #[inline]
    pub fn step(&mut self, controls: &Controls) -> Result<EnvelopeSample> {
        let x = self.resonator.step(self.delay.peek());
        let out = self.amp.step(x);
        let mag2 = out.norm_sqr();
        if !(mag2 <= DIVERGENCE_LIMIT * DIVERGENCE_LIMIT) {
            return Err(Error::Divergence {
                time: self.clock.time(),
                magnitude: mag2.sqrt(),
            });
        }
        let mut y = out;
        for element in &self.order {
            y = match element {
                TuningElement::BoundedPhaseShifter => {
                    self.bounded.set_control(controls.phase);
                    self.bounded.apply(y)
                }
                TuningElement::UnboundedPhaseShifter => self.unbounded.step(y),
                TuningElement::VectorModulator => {
                    self.vm.set_control(controls.z);
                    self.vm.apply(y)
                }
            };
        }
        y *= self.noise.step();
        self.delay.push_pop(y);
        self.output = out;
        self.clock.tick();
        Ok(out)
    }
}

/// Result of a free-running simulation.
#[derive(Clone, Debug)]
pub struct FreeRun {
    pub output: TimeSeries<EnvelopeSample>,
    /// Mean frequency over the final tenth of the run, Hz.
    pub settled_frequency: f64,
    /// Mean output magnitude over the final tenth of the run.
    pub settled_amplitude: f64,
}

fn check_duration(cfg: &TdoConfig, duration: f64, min_round_trips: f64) -> Result<usize> {
    if !(duration >= min_round_trips * cfg.tau_g()) {
        return Err(Error::config(
            "duration",
            format!("{duration} s is shorter than {min_round_trips} round trips"),
        ));
    }
    Ok((duration / cfg.dt).round() as usize)
}

/// Mean frequency and amplitude over the trailing `fraction` of `trace`.
pub fn settled_metrics(trace: &[EnvelopeSample], dt: f64, fraction: f64) -> (f64, f64) {
    let start = ((1.0 - fraction) * trace.len() as f64) as usize;
    let tail = &trace[start.min(trace.len() - 1)..];
    let mut unwrap = PhaseUnwrapper::new();
    let first = unwrap.push(tail[0]);
    let mut last = first;
    let mut amp = 0.0;
    for &x in tail {
        last = unwrap.push(x);
        amp += x.norm();
    }
    let span = (tail.len().max(2) - 1) as f64 * dt;
    ((last - first) / (TAU * span), amp / tail.len() as f64)
}

/// Runs the oscillator with fixed default controls for `duration` seconds.
pub fn run_free(cfg: &TdoConfig, duration: f64) -> Result<FreeRun> {
    let n = check_duration(cfg, duration, 100.0)?;
    let mut tdo = Tdo::new(cfg)?;
    let controls = Controls::default();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(tdo.step(&controls)?);
    }
    let (settled_frequency, settled_amplitude) = settled_metrics(&out, cfg.dt, 0.1);
    Ok(FreeRun {
        output: TimeSeries::new(cfg.dt, 0.0, out)?,
        settled_frequency,
        settled_amplitude,
    })
}

/// Sinusoidal drive `v = a cos(omega t)` applied to a Stuart-Landau
/// integrator whose state steers the vector modulator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepParams {
    /// Drive amplitude, radians.
    pub a: f64,
    /// Drive angular frequency, rad/s.
    pub omega: f64,
    /// Integrator time constant, seconds.
    pub tau_sl: f64,
    /// Integrator restoration strength.
    pub mu: f64,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            a: PI * PI / 10.0,
            omega: TAU,
            tau_sl: 1e-3,
            mu: 1.0,
        }
    }
}

impl SweepParams {
    /// Peak tuning phase `a / (tau_sl omega)`.
    pub fn peak_phase(&self) -> f64 {
        self.a / (self.tau_sl * self.omega)
    }

    /// Predicted peak frequency excursion `peak_phase / (2 pi tau_g)`.
    pub fn peak_excursion(&self, tau_g: f64) -> f64 {
        self.peak_phase() / (TAU * tau_g)
    }

    /// Predicted frequency offset from the starting mode at time `t`.
    pub fn predicted_offset(&self, tau_g: f64, t: f64) -> f64 {
        self.peak_excursion(tau_g) * (self.omega * t).sin()
    }
}

/// Oscillator tuned through the vector modulator by a swept integrator.
pub fn run_swept(cfg: &TdoConfig, sweep: &SweepParams, duration: f64) -> Result<TimeSeries<EnvelopeSample>> {
    if !cfg.has(TuningElement::VectorModulator) {
        return Err(Error::config("tdo.tuning", "swept run needs `vector-modulator`"));
    }
    let n = check_duration(cfg, duration, 100.0)?;
    let mut tdo = Tdo::new(cfg)?;
    let sl_params = SlParams {
        tau: sweep.tau_sl,
        mu: sweep.mu,
    };
    let mut sl = SlIntegrator::new(sl_params, cfg.dt, SlState::on_unit_circle(0.0))?;
    let mut controls = Controls::default();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        out.push(tdo.step(&controls)?);
        let t = k as f64 * cfg.dt;
        controls.z = sl.step(sweep.a * (sweep.omega * t).cos())?;
    }
    TimeSeries::new(cfg.dt, 0.0, out)
}

/// Schedule for an adiabatic winding of the vector-modulator control.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneOptions {
    /// Signed number of turns of z (positive is anti-clockwise).
    pub turns: f64,
    /// Round trips per full turn; at least 2000 keeps the winding adiabatic.
    pub round_trips_per_turn: f64,
    /// Settling time before the winding starts, seconds.
    pub warmup: f64,
    /// Settling time after the winding ends, seconds.
    pub settle: f64,
    /// Averaging window for each frequency frame and for the before/after estimates, seconds.
    pub frame: f64,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self {
            turns: 1.0,
            round_trips_per_turn: 2000.0,
            warmup: 0.1,
            settle: 0.01,
            frame: 1e-3,
        }
    }
}

/// Outcome of [`tune_fsr`].
#[derive(Clone, Debug, PartialEq)]
pub struct TuneResult {
    pub before_hz: f64,
    pub after_hz: f64,
    /// `after_hz - before_hz`.
    pub shift_hz: f64,
    /// Largest frame-to-frame frequency change from the start of the winding on.
    pub max_frame_step_hz: f64,
    /// Per-frame mean frequency from the start of the winding on.
    pub frames: TimeSeries<f64>,
}

/// Winds the vector-modulator control `opts.turns` times and measures the
/// resulting frequency translation. Fails with [`Error::ModeHop`] if any
/// frame-to-frame frequency step exceeds a tenth of the FSR.
pub fn tune_fsr(cfg: &TdoConfig, opts: &TuneOptions) -> Result<TuneResult> {
    if !cfg.has(TuningElement::VectorModulator) {
        return Err(Error::config("tdo.tuning", "tuning run needs `vector-modulator`"));
    }
    if opts.round_trips_per_turn < 2000.0 {
        return Err(Error::config("round_trips_per_turn", "must be >= 2000 for adiabatic tuning"));
    }
    let dt = cfg.dt;
    let frame_len = ((opts.frame / dt).round() as usize).max(1);
    let to_frames = |t: f64| ((t / dt / frame_len as f64).ceil() as usize).max(1);
    let wind_time = opts.turns.abs() * opts.round_trips_per_turn * cfg.tau_g();
    let warm_frames = to_frames(opts.warmup);
    let wind_frames = to_frames(wind_time);
    let settle_frames = to_frames(opts.settle);
    let total_frames = warm_frames + wind_frames + settle_frames;

    // Constant drive winding the integrator exactly `turns` times over the winding frames.
    let sl_params = SlParams::default();
    let wind_samples = (wind_frames * frame_len) as f64;
    let v_wind = TAU * opts.turns * sl_params.tau / (wind_samples * dt);
    let mut sl = SlIntegrator::new(sl_params, dt, SlState::on_unit_circle(0.0))?;

    let mut tdo = Tdo::new(cfg)?;
    let mut controls = Controls::default();
    let mut unwrap = PhaseUnwrapper::new();
    let mut frame_start_phase = 0.0;
    let mut frames = Vec::with_capacity(total_frames);
    for f in 0..total_frames {
        let winding = f >= warm_frames && f < warm_frames + wind_frames;
        for k in 0..frame_len {
            let phase = unwrap.push(tdo.step(&controls)?);
            if k == 0 {
                frame_start_phase = phase;
            }
            controls.z = sl.step(if winding { v_wind } else { 0.0 })?;
        }
        let end_phase = unwrap.phase();
        frames.push((end_phase - frame_start_phase) / (TAU * (frame_len - 1) as f64 * dt));
    }
    let before_hz = frames[warm_frames - 1];
    let after_hz = *frames.last().expect("at least one frame");
    let tracked = &frames[warm_frames - 1..];
    let mut max_step = 0.0f64;
    let mut worst = 0;
    for (i, w) in tracked.windows(2).enumerate() {
        let step = (w[1] - w[0]).abs();
        if step > max_step {
            max_step = step;
            worst = i;
        }
    }
    if max_step > cfg.fsr() / 10.0 {
        return Err(Error::ModeHop {
            time: (warm_frames + worst) as f64 * frame_len as f64 * dt,
            step_hz: max_step,
        });
    }
    let frame_dt = frame_len as f64 * dt;
    Ok(TuneResult {
        before_hz,
        after_hz,
        shift_hz: after_hz - before_hz,
        max_frame_step_hz: max_step,
        frames: TimeSeries::new(frame_dt, (warm_frames - 1) as f64 * frame_dt, tracked.to_vec())?,
    })
}

/// One anti-clockwise winding with the default schedule.
pub fn tune_one_fsr(cfg: &TdoConfig) -> Result<f64> {
    Ok(tune_fsr(cfg, &TuneOptions::default())?.shift_hz)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(cfg: TdoConfig) -> TdoConfig {
        TdoConfig {
            noise: NoiseCoefficients::default(),
            ..cfg
        }
    }

    #[test]
    fn default_derived_quantities() {
        let cfg = TdoConfig::default();
        assert!((cfg.tau_g() - 25e-6).abs() < 1e-18);
        assert!((cfg.fsr() - 40e3).abs() < 1e-6);
        assert!((cfg.resonator_bandwidth() - 3.183e6).abs() < 1e3);
        assert!((cfg.mode_count() - 80.0).abs() < 1.0);
        assert!((cfg.drift_phase_rate()).abs() < 1e-12);
        let drifting = TdoConfig { drift_rate: 1e6, ..cfg };
        assert!((drifting.drift_phase_rate() - 157.08).abs() < 1e-2);
    }

    #[test]
    fn zero_seed_stays_quiescent() {
        let cfg = quiet(TdoConfig {
            seed_sigma: 0.0,
            start: TdoStart::Noise,
            ..TdoConfig::default()
        });
        let mut tdo = Tdo::new(&cfg).unwrap();
        for _ in 0..10_000 {
            assert_eq!(tdo.step(&Controls::default()).unwrap(), EnvelopeSample::new(0.0, 0.0));
        }
    }

    #[test]
    fn excessive_gain_trips_divergence_guard() {
        let cfg = TdoConfig {
            g0: 500.0,
            ..TdoConfig::default()
        };
        let err = run_free(&cfg, 0.01).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
    }

    #[test]
    fn config_errors_name_the_field() {
        let cfg = TdoConfig {
            tau_d: 24.95e-6,
            ..TdoConfig::default()
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("tdo.tau_d"));
        let cfg = TdoConfig {
            drift_rate: 1e6,
            ..TdoConfig::default()
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("tdo.drift_rate"));
        assert!(run_free(&TdoConfig::default(), 1e-4).is_err());
    }

    #[test]
    fn anchored_noise_hits_target_level() {
        let cfg = TdoConfig::default();
        let f = NOISE_ANCHOR_HZ;
        let free = cfg.noise.psd(f) / (2.0 - 2.0 * (TAU * f * cfg.tau_g()).cos());
        assert!((10.0 * (free / 2.0).log10() - NOISE_ANCHOR_DBC).abs() < 1e-9);
    }
}
