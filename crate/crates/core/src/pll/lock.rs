use std::collections::VecDeque;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frequency-error lock detector settings.
///
/// The detector decimates the undivided phase error to one point per
/// `interval` and estimates the residual frequency error as the phase-error
/// change over the trailing `window`. A phase threshold would never fire
/// under drift, where the locked loop carries a constant ramp-tracking error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LockDetectorConfig {
    /// Decimation interval of the phase error, seconds.
    pub interval: f64,
    /// Span over which the frequency error is measured, seconds.
    pub window: f64,
    /// Locked once |frequency error| stays below this, Hz...
    pub lock_hz: f64,
    /// ...for this long, seconds.
    pub lock_dwell: f64,
    /// Lost once |frequency error| stays at or above this, Hz...
    pub loss_hz: f64,
    /// ...for this long, seconds.
    pub loss_dwell: f64,
}

impl Default for LockDetectorConfig {
    fn default() -> Self {
        Self {
            interval: 10e-6,
            window: 1e-3,
            lock_hz: 10.0,
            lock_dwell: 5e-3,
            loss_hz: 200.0,
            loss_dwell: 1e-3,
        }
    }
}

impl LockDetectorConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("pll.lock.interval", self.interval),
            ("pll.lock.window", self.window),
            ("pll.lock.lock_hz", self.lock_hz),
            ("pll.lock.lock_dwell", self.lock_dwell),
            ("pll.lock.loss_hz", self.loss_hz),
            ("pll.lock.loss_dwell", self.loss_dwell),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(field, format!("must be positive, got {v}")));
            }
        }
        if self.window < self.interval {
            return Err(Error::config("pll.lock.window", "must be at least one interval"));
        }
        if self.loss_hz <= self.lock_hz {
            return Err(Error::config("pll.lock.loss_hz", "must exceed lock_hz"));
        }
        Ok(())
    }
}

/// Summary of a closed-loop run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LockReport {
    /// Start of the first interval that qualified as locked, seconds.
    pub lock_time: Option<f64>,
    /// Start of the first interval after lock that qualified as lost, seconds.
    pub loss_time: Option<f64>,
    /// Largest |undivided phase error| between lock and loss (or run end),
    /// over the detector's decimated samples, radians.
    pub max_phase_error: Option<f64>,
    /// Mean undivided phase error over the last 20 % of the locked span, radians.
    pub steady_phase_error: Option<f64>,
    /// Net signed turns of the vector control over the run.
    pub winding_turns: Option<f64>,
    /// Net signed turns of the vector control from lock to run end.
    pub winding_after_lock: Option<f64>,
    /// Number of times the bounded shifter entered saturation.
    pub saturation_events: Option<u64>,
    /// Time of the first saturation, seconds.
    pub first_saturation: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum State {
    Searching { since: Option<f64> },
    Locked { losing_since: Option<f64> },
    Lost,
}

/// Streaming lock detector fed with the undivided phase error every sample.
///
/// Points where the error sits at the detector clamp carry no frequency
/// information and count as unlocked.
#[derive(Clone, Debug)]
pub struct LockDetector {
    cfg: LockDetectorConfig,
    limit: f64,
    stride: u64,
    history: VecDeque<f64>,
    lag: usize,
    /// Time spanned by `lag` decimated points, seconds.
    span: f64,
    count: u64,
    state: State,
    lock_time: Option<f64>,
    loss_time: Option<f64>,
    /// Decimated `(t, e)` history.
    samples: Vec<(f64, f64)>,
}

impl LockDetector {
    /// `limit` is the largest |error| the detector can report.
    pub fn new(cfg: LockDetectorConfig, dt: f64, limit: f64) -> Result<Self> {
        cfg.validate()?;
        let stride = ((cfg.interval / dt).round() as u64).max(1);
        let lag = ((cfg.window / (stride as f64 * dt)).round() as usize).max(1);
        Ok(Self {
            cfg,
            limit,
            stride,
            history: VecDeque::with_capacity(lag + 1),
            lag,
            span: lag as f64 * stride as f64 * dt,
            count: 0,
            state: State::Searching { since: None },
            lock_time: None,
            loss_time: None,
            samples: Vec::new(),
        })
    }

    pub fn is_locked(&self) -> bool {
        matches!(self.state, State::Locked { .. })
    }

    pub fn lock_time(&self) -> Option<f64> {
        self.lock_time
    }

    /// Feeds the error `e` observed at time `t`.
    #[inline]
    pub fn push(&mut self, t: f64, e: f64) {
        let due = self.count % self.stride == 0;
        self.count += 1;
        if !due {
            return;
        }
        if self.history.len() > self.lag {
            self.history.pop_front();
        }
        self.history.push_back(e);
        self.samples.push((t, e));
        if self.history.len() <= self.lag {
            return;
        }
        let df = if e.abs() >= self.limit {
            f64::INFINITY
        } else {
            ((e - self.history[0]) / (TAU * self.span)).abs()
        };
        self.update(t, df);
    }

    fn update(&mut self, t: f64, df: f64) {
        match self.state {
            State::Searching { since } => {
                if df < self.cfg.lock_hz {
                    let start = since.unwrap_or(t);
                    if t - start >= self.cfg.lock_dwell - 1e-12 {
                        self.state = State::Locked { losing_since: None };
                        self.lock_time = Some(start);
                    } else {
                        self.state = State::Searching { since: Some(start) };
                    }
                } else {
                    self.state = State::Searching { since: None };
                }
            }
            State::Locked { losing_since } => {
                if df >= self.cfg.loss_hz {
                    let start = losing_since.unwrap_or(t);
                    if t - start >= self.cfg.loss_dwell - 1e-12 {
                        self.state = State::Lost;
                        self.loss_time = Some(start);
                    } else {
                        self.state = State::Locked { losing_since: Some(start) };
                    }
                } else {
                    self.state = State::Locked { losing_since: None };
                }
            }
            State::Lost => {}
        }
    }

    /// Builds the report. Controller-specific fields are left empty.
    pub fn report(&self) -> LockReport {
        let Some(t_lock) = self.lock_time else {
            return LockReport::default();
        };
        let t_end = self.loss_time.unwrap_or(f64::INFINITY);
        let locked: Vec<f64> = self
            .samples
            .iter()
            .filter(|(t, _)| *t >= t_lock && *t < t_end)
            .map(|&(_, e)| e)
            .collect();
        let tail = &locked[locked.len() * 4 / 5..];
        LockReport {
            lock_time: self.lock_time,
            loss_time: self.loss_time,
            max_phase_error: Some(locked.iter().fold(0.0, |m, e| m.max(e.abs()))),
            steady_phase_error: (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64),
            ..LockReport::default()
        }
    }
}
