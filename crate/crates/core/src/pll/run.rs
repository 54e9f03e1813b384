use std::f64::consts::TAU;

use super::{phase_detect, LockDetector, LockReport, LoopFilter, PllConfig, ReferenceModel, SHIFTER_RANGE};
use crate::envelope::{EnvelopeSample, PhaseUnwrapper, TimeSeries};
use crate::error::{Error, Result};
use crate::stuart_landau::{SlIntegrator, SlParams, SlState};
use crate::tdo::{Controls, Tdo, TdoConfig, TuningElement};

/// Magnitude band the Stuart-Landau state must stay inside.
pub const RESTORATION_BAND: (f64, f64) = (0.5, 1.5);

#[derive(Clone, Debug)]
pub enum ControlTrace {
    /// Applied bounded-shifter phase, radians.
    Scalar { p: TimeSeries<f64> },
    /// Vector-modulator transmission and the integrator drive.
    Vector {
        z: TimeSeries<EnvelopeSample>,
        v: TimeSeries<f64>,
    },
}

/// Traces and summary of one closed-loop run.
#[derive(Clone, Debug)]
pub struct PllRun {
    pub output: TimeSeries<EnvelopeSample>,
    /// Undivided clamped phase error `N ε`, radians.
    pub phase_error: TimeSeries<f64>,
    pub control: ControlTrace,
    pub report: LockReport,
}

fn prepare(cfg: &TdoConfig, pll: &PllConfig, element: TuningElement, drift_rate: f64, duration: f64) -> Result<(TdoConfig, usize)> {
    pll.validate()?;
    if !cfg.has(element) {
        return Err(Error::config("tdo.tuning", format!("controller needs {element:?}")));
    }
    if drift_rate != 0.0 && !cfg.has(TuningElement::UnboundedPhaseShifter) {
        return Err(Error::config("tdo.tuning", "drift emulation needs `unbounded-phase-shifter`"));
    }
    let cfg = TdoConfig {
        drift_rate,
        ..cfg.clone()
    };
    cfg.validate()?;
    if !(duration.is_finite() && duration > pll.lock.window) {
        return Err(Error::config("duration", format!("must exceed the lock window, got {duration}")));
    }
    let n = (duration / cfg.dt).round() as usize;
    Ok((cfg, n))
}

fn check_stride(stride: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::config("stride", "must be at least 1"));
    }
    Ok(stride)
}

/// Shared per-sample front end: oscillator phase, reference and detector.
struct FrontEnd {
    tdo: Tdo,
    unwrap: PhaseUnwrapper,
    reference: ReferenceModel,
    lock: LockDetector,
    n: f64,
    clamp: f64,
}

impl FrontEnd {
    fn new(cfg: &TdoConfig, pll: &PllConfig) -> Result<Self> {
        Ok(Self {
            tdo: Tdo::new(cfg)?,
            unwrap: PhaseUnwrapper::new(),
            reference: ReferenceModel::new(&pll.reference, pll.n, cfg.dt, cfg.seed)?,
            lock: LockDetector::new(pll.lock, cfg.dt, pll.n * pll.clamp)?,
            n: pll.n,
            clamp: pll.clamp,
        })
    }

    /// Steps the oscillator and returns `(output, undivided error)`.
    #[inline]
    fn step(&mut self, t: f64, controls: &Controls) -> Result<(EnvelopeSample, f64)> {
        let out = self.tdo.step(controls)?;
        let phi = self.unwrap.push(out);
        let e = self.n * phase_detect(phi, self.reference.next_phase(), self.n, self.clamp);
        self.lock.push(t, e);
        Ok((out, e))
    }
}

/// Scalar controller: positional PI output on the bounded phase shifter.
/// Saturation of the shifter is counted, not raised.
pub fn run_scalar_pll(cfg: &TdoConfig, pll: &PllConfig, drift_rate: f64, duration: f64) -> Result<PllRun> {
    run_scalar_pll_with(cfg, pll, drift_rate, duration, 1)
}

/// [`run_scalar_pll`] keeping every `stride`-th sample of the error and
/// control traces. The output trace is always kept in full.
pub fn run_scalar_pll_with(cfg: &TdoConfig, pll: &PllConfig, drift_rate: f64, duration: f64, stride: usize) -> Result<PllRun> {
    let (cfg, n) = prepare(cfg, pll, TuningElement::BoundedPhaseShifter, drift_rate, duration)?;
    let stride = check_stride(stride)?;
    let dt = cfg.dt;
    let mut front = FrontEnd::new(&cfg, pll)?;
    let mut filter = LoopFilter::from_config(pll, dt)?;
    let mut controls = Controls::default();
    let mut output = Vec::with_capacity(n);
    let mut errors = Vec::with_capacity(n / stride + 1);
    let mut applied = Vec::with_capacity(n / stride + 1);
    let mut saturated = false;
    let mut events = 0u64;
    let mut first_saturation = None;
    for k in 0..n {
        let t = k as f64 * dt;
        let (out, e) = front.step(t, &controls)?;
        // Retuning lowers the frequency for positive error.
        let p = -filter.positional(e);
        let now_saturated = p.abs() > SHIFTER_RANGE;
        if now_saturated && !saturated {
            events += 1;
            first_saturation.get_or_insert(t);
        }
        saturated = now_saturated;
        controls.phase = p;
        output.push(out);
        if k % stride == 0 {
            errors.push(e);
            applied.push(p.clamp(-SHIFTER_RANGE, SHIFTER_RANGE));
        }
    }
    let report = LockReport {
        saturation_events: Some(events),
        first_saturation,
        ..front.lock.report()
    };
    Ok(PllRun {
        output: TimeSeries::new(dt, 0.0, output)?,
        phase_error: TimeSeries::new(dt * stride as f64, 0.0, errors)?,
        control: ControlTrace::Scalar {
            p: TimeSeries::new(dt * stride as f64, 0.0, applied)?,
        },
        report,
    })
}

/// Vector controller: the PI increment drives a Stuart-Landau integrator
/// whose state is the vector-modulator transmission. Fails with
/// [`Error::RestorationFailure`] if `|z|` leaves [`RESTORATION_BAND`].
pub fn run_vector_pll(cfg: &TdoConfig, pll: &PllConfig, sl: &SlParams, drift_rate: f64, duration: f64) -> Result<PllRun> {
    run_vector_pll_with(cfg, pll, sl, drift_rate, duration, 1)
}

/// [`run_vector_pll`] with decimated error and control traces, as in
/// [`run_scalar_pll_with`].
pub fn run_vector_pll_with(
    cfg: &TdoConfig,
    pll: &PllConfig,
    sl: &SlParams,
    drift_rate: f64,
    duration: f64,
    stride: usize,
) -> Result<PllRun> {
    let (cfg, n) = prepare(cfg, pll, TuningElement::VectorModulator, drift_rate, duration)?;
    let stride = check_stride(stride)?;
    let dt = cfg.dt;
    let mut front = FrontEnd::new(&cfg, pll)?;
    let mut filter = LoopFilter::from_config(pll, dt)?;
    let mut integrator = SlIntegrator::new(*sl, dt, SlState::on_unit_circle(0.0))?;
    let mut controls = Controls::default();
    let mut output = Vec::with_capacity(n);
    let mut errors = Vec::with_capacity(n / stride + 1);
    let mut zs = Vec::with_capacity(n / stride + 1);
    let mut vs = Vec::with_capacity(n / stride + 1);
    // Accumulated angle of z, sampled coarsely for the post-lock winding count.
    let coarse = ((pll.lock.interval / dt).round() as usize).max(1);
    let mut angle = 0.0;
    let mut angle_trace = Vec::with_capacity(n / coarse + 1);
    for k in 0..n {
        let t = k as f64 * dt;
        let (out, e) = front.step(t, &controls)?;
        let v = -sl.tau * filter.increment(e) / dt;
        let z = integrator.step(v)?;
        let rho = z.norm();
        if !(rho > RESTORATION_BAND.0 && rho < RESTORATION_BAND.1) {
            return Err(Error::RestorationFailure { time: t, magnitude: rho });
        }
        angle += (z * controls.z.conj()).arg();
        if k % coarse == 0 {
            angle_trace.push(angle);
        }
        controls.z = z;
        output.push(out);
        if k % stride == 0 {
            errors.push(e);
            zs.push(z);
            vs.push(v);
        }
    }
    let base = front.lock.report();
    let winding_after_lock = base.lock_time.map(|t_lock| {
        let i = ((t_lock / (coarse as f64 * dt)).round() as usize).min(angle_trace.len() - 1);
        (angle - angle_trace[i]) / TAU
    });
    let report = LockReport {
        winding_turns: Some(angle / TAU),
        winding_after_lock,
        ..base
    };
    Ok(PllRun {
        output: TimeSeries::new(dt, 0.0, output)?,
        phase_error: TimeSeries::new(dt * stride as f64, 0.0, errors)?,
        control: ControlTrace::Vector {
            z: TimeSeries::new(dt * stride as f64, 0.0, zs)?,
            v: TimeSeries::new(dt * stride as f64, 0.0, vs)?,
        },
        report,
    })
}
