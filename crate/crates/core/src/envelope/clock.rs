use crate::error::{Error, Result};

/// Relative slack allowed when checking that a delay is a whole number of samples.
const INTEGER_DELAY_SLACK: f64 = 1e-6;

/// Discrete simulation clock. Time is always derived as `n * dt`, never accumulated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimClock {
    dt: f64,
    n: u64,
}

impl SimClock {
    pub fn new(dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::config("dt", format!("must be positive and finite, got {dt}")));
        }
        Ok(Self { dt, n: 0 })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn index(&self) -> u64 {
        self.n
    }

    pub fn time(&self) -> f64 {
        self.n as f64 * self.dt
    }

    pub fn tick(&mut self) {
        self.n += 1;
    }

    pub fn sample_rate(&self) -> f64 {
        1.0 / self.dt
    }

    /// Number of samples spanned by `delay`. Fails unless `delay` is an integer
    /// multiple of `dt`; `field` names the offending config entry.
    pub fn samples_for(&self, field: &str, delay: f64) -> Result<usize> {
        samples_for(self.dt, field, delay)
    }
}

pub(crate) fn samples_for(dt: f64, field: &str, delay: f64) -> Result<usize> {
    if !(delay.is_finite() && delay >= 0.0) {
        return Err(Error::config(field, format!("must be non-negative and finite, got {delay}")));
    }
    let ratio = delay / dt;
    let n = ratio.round();
    if (ratio - n).abs() > INTEGER_DELAY_SLACK {
        return Err(Error::config(
            field,
            format!("{delay:e} s is not an integer multiple of dt = {dt:e} s ({ratio} samples)"),
        ));
    }
    Ok(n as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_delays_are_whole_samples() {
        let clock = SimClock::new(1e-7).unwrap();
        assert_eq!(clock.samples_for("tau_d", 24.9e-6).unwrap(), 249);
        assert_eq!(clock.samples_for("tau_r", 0.1e-6).unwrap(), 1);
        assert_eq!(clock.samples_for("tau_g", 25e-6).unwrap(), 250);
    }

    #[test]
    fn fractional_delay_is_rejected_with_field_name() {
        let clock = SimClock::new(1e-7).unwrap();
        let err = clock.samples_for("tdo.tau_d", 24.95e-6).unwrap_err();
        assert!(err.to_string().contains("tdo.tau_d"));
    }

    #[test]
    fn time_is_index_times_dt() {
        let mut clock = SimClock::new(1e-7).unwrap();
        for _ in 0..1_000_000 {
            clock.tick();
        }
        assert_eq!(clock.time(), 1_000_000.0 * 1e-7);
        assert!(SimClock::new(0.0).is_err());
        assert!(SimClock::new(f64::NAN).is_err());
    }
}
