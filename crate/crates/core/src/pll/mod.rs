//! Phase-locked loop around the oscillator.
//!
//! The detector compares the unwrapped oscillator phase with a reference
//! phase, divides by `N` and clamps to `±clamp`. The proportional-integral
//! controller acts on the undivided error `e = N ε`, so with the
//! defaults the closed loop is a type-II loop with
//! `ω_n = 1/sqrt(τ_G τ_I)` and `ξ = (κ/2) sqrt(τ_I/τ_G)`.
//!
//! Two controllers drive the oscillator:
//! * scalar: positional PI output on a bounded phase shifter;
//! * vector: velocity-form PI output drives a Stuart-Landau integrator
//!   whose state steers a vector modulator.
//!
//! In the small both produce the same tuning phase sample by sample.

mod filter;
mod lock;
mod reference;
mod run;

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

pub use filter::{ExtraPole, LoopFilter, PoleCascade};
pub use lock::{LockDetector, LockDetectorConfig, LockReport};
pub use reference::{ReferenceConfig, ReferenceModel};
pub use run::{run_scalar_pll, run_scalar_pll_with, run_vector_pll, run_vector_pll_with, ControlTrace, PllRun, RESTORATION_BAND};

use crate::error::{Error, Result};

/// Divided, clamped phase error `clamp((phi_osc - phi_ref) / n, -limit, limit)`.
#[inline]
pub fn phase_detect(phi_osc: f64, phi_ref: f64, n: f64, limit: f64) -> f64 {
    ((phi_osc - phi_ref) / n).clamp(-limit, limit)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PllConfig {
    /// Division ratio between oscillator and detector.
    pub n: f64,
    /// Integration time constant, seconds.
    pub tau_i: f64,
    /// Proportional gain on the undivided phase error.
    pub kappa: f64,
    /// Low-pass poles after the PI stage. They roll the proportional path
    /// off above the loop bandwidth so the oscillator's side modes are left
    /// undamped.
    pub extra_poles: Vec<ExtraPole>,
    /// Detector clamp on the divided error, radians.
    pub clamp: f64,
    pub lock: LockDetectorConfig,
    pub reference: ReferenceConfig,
}

impl Default for PllConfig {
    fn default() -> Self {
        let n = 100.0;
        Self {
            n,
            tau_i: n * 1e-3,
            kappa: 5f64.sqrt() / n,
            extra_poles: [80e-6, 40e-6, 20e-6]
                .iter()
                .map(|&tau| ExtraPole { tau, enabled: true })
                .collect(),
            clamp: TAU,
            lock: LockDetectorConfig::default(),
            reference: ReferenceConfig::default(),
        }
    }
}

/// Loop quantities that follow from the configuration and the oscillator delay.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PllDerived {
    /// `sqrt(tau_g tau_i)`, seconds.
    pub tau_f: f64,
    /// Natural frequency `1 / (2 pi tau_f)`, Hz.
    pub f_n: f64,
    /// Damping factor `(kappa/2) sqrt(tau_i/tau_g)` of the implemented loop.
    pub xi: f64,
    /// `(kappa/2) sqrt(tau_f/tau_g)`, the tabulated expression; not used by the loop.
    pub xi_tabulated: f64,
}

impl PllConfig {
    pub fn derived(&self, tau_g: f64) -> PllDerived {
        let tau_f = (tau_g * self.tau_i).sqrt();
        PllDerived {
            tau_f,
            f_n: 1.0 / (TAU * tau_f),
            xi: 0.5 * self.kappa * (self.tau_i / tau_g).sqrt(),
            xi_tabulated: 0.5 * self.kappa * (tau_f / tau_g).sqrt(),
        }
    }

    /// Steady undivided phase error of the locked loop while the controller
    /// tracks a tuning-phase ramp of `phase_rate` rad/s.
    pub fn ramp_tracking_error(&self, phase_rate: f64) -> f64 {
        phase_rate * self.tau_i
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be positive, got {v}")))
            }
        };
        positive("pll.n", self.n)?;
        positive("pll.tau_i", self.tau_i)?;
        positive("pll.clamp", self.clamp)?;
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(Error::config("pll.kappa", "must be >= 0"));
        }
        for (i, pole) in self.extra_poles.iter().enumerate() {
            positive(&format!("pll.extra_poles[{i}].tau"), pole.tau)?;
        }
        self.lock.validate()?;
        self.reference.validate()
    }
}

/// Bounded shifter range used by the scalar controller.
pub const SHIFTER_RANGE: f64 = PI;
