//! Stuart-Landau integrator: `tau dz/dt = mu (1 - |z|^2) z + i v z`.
//!
//! In polar form the phase obeys `tau dtheta/dt = v` and the magnitude
//! `tau drho/dt = mu (1 - rho^2) rho`, independently of each other. The
//! steppers below exploit that: an exact rotation by `v dt / tau` followed by
//! the closed-form magnitude map
//!
//! ```text
//! 1/rho(t+dt)^2 = 1 + (1/rho(t)^2 - 1) exp(-2 mu dt / tau)
//! ```
//!
//! which solves the system exactly for `v` held constant over the step.
//! [`step_complex`] uses complex arithmetic, [`step_real`] only real
//! adds/multiplies on `(x, y)`; [`step_rk4`] is a conventional reference.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::envelope::{EnvelopeSample, TimeSeries};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlParams {
    /// Characteristic time constant, seconds.
    pub tau: f64,
    /// Magnitude restoration strength.
    pub mu: f64,
}

impl Default for SlParams {
    fn default() -> Self {
        Self { tau: 1e-3, mu: 1.0 }
    }
}

impl SlParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::config("sl.tau", format!("must be positive, got {}", self.tau)));
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(Error::config("sl.mu", format!("must be >= 0, got {}", self.mu)));
        }
        Ok(())
    }

    /// Time constant of the approach to the unit circle, `tau / (2 mu)`.
    pub fn restoration_time(&self) -> f64 {
        self.tau / (2.0 * self.mu)
    }
}

/// State `z = x + iy`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlState {
    pub z: EnvelopeSample,
}

impl SlState {
    pub fn new(z: EnvelopeSample) -> Result<Self> {
        if z.norm_sqr() == 0.0 {
            return Err(Error::ZeroMagnitude { index: 0 });
        }
        Ok(Self { z })
    }

    pub fn on_unit_circle(theta: f64) -> Self {
        Self {
            z: EnvelopeSample::from_polar(1.0, theta),
        }
    }

    pub fn rho(&self) -> f64 {
        self.z.norm()
    }
}

/// Closed-form magnitude decay factor `exp(-2 mu dt / tau)`.
#[inline]
fn decay(p: &SlParams, dt: f64) -> f64 {
    (-2.0 * p.mu * dt / p.tau).exp()
}

/// Advances `st` by `dt` with `v` held constant, complex arithmetic.
pub fn step_complex(st: SlState, p: &SlParams, v: f64, dt: f64) -> Result<SlState> {
    if st.z.norm_sqr() == 0.0 {
        return Err(Error::ZeroMagnitude { index: 0 });
    }
    let rotated = st.z * EnvelopeSample::cis(v * dt / p.tau);
    let rho2 = rotated.norm_sqr();
    let inv_rho2 = 1.0 + (1.0 / rho2 - 1.0) * decay(p, dt);
    Ok(SlState {
        z: rotated * (1.0 / (inv_rho2 * rho2)).sqrt(),
    })
}

/// Same map as [`step_complex`] written with real operations on `(x, y)` only.
pub fn step_real(xy: (f64, f64), p: &SlParams, v: f64, dt: f64) -> Result<(f64, f64)> {
    let (x, y) = xy;
    let r2 = x * x + y * y;
    if r2 == 0.0 {
        return Err(Error::ZeroMagnitude { index: 0 });
    }
    let angle = v * dt / p.tau;
    let (s, c) = angle.sin_cos();
    let xr = x * c - y * s;
    let yr = x * s + y * c;
    // rho_new / rho = 1 / sqrt(rho^2 + (1 - rho^2) e)
    let e = decay(p, dt);
    let g = 1.0 / (r2 + (1.0 - r2) * e).sqrt();
    Ok((xr * g, yr * g))
}

/// Classical RK4 on the Cartesian right-hand side; local error O(dt^5).
pub fn step_rk4(st: SlState, p: &SlParams, v: f64, dt: f64) -> SlState {
    let f = |z: EnvelopeSample| -> EnvelopeSample {
        (z * (p.mu * (1.0 - z.norm_sqr())) + EnvelopeSample::new(0.0, v) * z) / p.tau
    };
    let z = st.z;
    let k1 = f(z);
    let k2 = f(z + k1 * (dt / 2.0));
    let k3 = f(z + k2 * (dt / 2.0));
    let k4 = f(z + k3 * dt);
    SlState {
        z: z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0),
    }
}

/// Closed-form `rho(t)` from `rho(0)`.
pub fn magnitude_oracle(rho0: f64, mu: f64, tau: f64, t: f64) -> Result<f64> {
    if !(rho0 > 0.0) {
        return Err(Error::config("rho0", format!("must be positive, got {rho0}")));
    }
    let inv = 1.0 + (1.0 / (rho0 * rho0) - 1.0) * (-2.0 * mu * t / tau).exp();
    Ok(1.0 / inv.sqrt())
}

/// Stateful integrator used inside control loops. Tracks the accumulated
/// rotation angle alongside the bounded state.
#[derive(Clone, Debug)]
pub struct SlIntegrator {
    params: SlParams,
    state: SlState,
    dt: f64,
    rotation: f64,
}

impl SlIntegrator {
    pub fn new(params: SlParams, dt: f64, initial: SlState) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            state: initial,
            dt,
            rotation: 0.0,
        })
    }

    pub fn params(&self) -> &SlParams {
        &self.params
    }

    pub fn z(&self) -> EnvelopeSample {
        self.state.z
    }

    /// Accumulated rotation commanded so far, `sum(v dt) / tau`, in radians.
    pub fn rotation(&self) -> f64 {
        self.rotation
    }

    #[inline]
    pub fn step(&mut self, v: f64) -> Result<EnvelopeSample> {
        self.state = step_complex(self.state, &self.params, v, self.dt)?;
        self.rotation += v * self.dt / self.params.tau;
        Ok(self.state.z)
    }
}

/// Net signed turns of `trace` about the origin (anti-clockwise positive).
pub fn winding_number(trace: &TimeSeries<EnvelopeSample>) -> Result<f64> {
    Ok(winding_trace(trace)?.data().last().copied().unwrap_or(0.0))
}

/// Cumulative turns at each sample, starting at zero.
pub fn winding_trace(trace: &TimeSeries<EnvelopeSample>) -> Result<TimeSeries<f64>> {
    let data = trace.data();
    if let Some(i) = data.iter().position(|z| z.norm_sqr() == 0.0) {
        return Err(Error::ZeroMagnitude { index: i });
    }
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(data.len());
    out.push(0.0);
    for w in data.windows(2) {
        acc += (w[1] * w[0].conj()).arg();
        out.push(acc / TAU);
    }
    TimeSeries::new(trace.dt(), trace.t0(), out)
}
