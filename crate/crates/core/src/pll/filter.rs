use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtraPole {
    /// Time constant, seconds.
    pub tau: f64,
    #[serde(default)]
    pub enabled: bool,
}

/// Cascade of unity-DC-gain one-pole low-pass sections.
#[derive(Clone, Debug, Default)]
pub struct PoleCascade {
    alphas: Vec<f64>,
    states: Vec<f64>,
}

impl PoleCascade {
    pub fn new(poles: &[ExtraPole], dt: f64) -> Self {
        let alphas: Vec<f64> = poles
            .iter()
            .filter(|p| p.enabled)
            .map(|p| 1.0 - (-dt / p.tau).exp())
            .collect();
        Self {
            states: vec![0.0; alphas.len()],
            alphas,
        }
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    #[inline]
    pub fn step(&mut self, mut x: f64) -> f64 {
        for (s, a) in self.states.iter_mut().zip(&self.alphas) {
            *s += a * (x - *s);
            x = *s;
        }
        x
    }
}

/// Proportional-integral controller `u = kappa e + (1/tau_i) ∫ e`, followed
/// by the enabled pole cascade.
///
/// Use either [`LoopFilter::positional`] (returns `u`) or
/// [`LoopFilter::increment`] (returns the change in `u` this sample) for the
/// lifetime of one filter; the two must not be mixed.
#[derive(Clone, Debug)]
pub struct LoopFilter {
    kappa: f64,
    gain_i: f64,
    integral: f64,
    prev_e: f64,
    poles: PoleCascade,
}

impl LoopFilter {
    pub fn new(kappa: f64, tau_i: f64, poles: &[ExtraPole], dt: f64) -> Self {
        Self {
            kappa,
            gain_i: dt / tau_i,
            integral: 0.0,
            prev_e: 0.0,
            poles: PoleCascade::new(poles, dt),
        }
    }

    pub fn from_config(cfg: &super::PllConfig, dt: f64) -> Result<Self> {
        cfg.validate()?;
        Ok(Self::new(cfg.kappa, cfg.tau_i, &cfg.extra_poles, dt))
    }

    /// Integral state accumulated from all previous samples.
    pub fn integral(&self) -> f64 {
        self.integral
    }

    /// Controller output at this sample. The integral covers samples before
    /// this one, so a constant error `e` yields `kappa e + e t / tau_i` at
    /// `t = n dt`.
    #[inline]
    pub fn positional(&mut self, e: f64) -> f64 {
        let u = self.kappa * e + self.integral;
        self.integral += e * self.gain_i;
        self.poles.step(u)
    }

    /// Change of the positional output between the previous sample and this
    /// one. Summing the increments reproduces [`LoopFilter::positional`].
    #[inline]
    pub fn increment(&mut self, e: f64) -> f64 {
        let du = self.kappa * (e - self.prev_e) + self.prev_e * self.gain_i;
        self.prev_e = e;
        self.poles.step(du)
    }
}
