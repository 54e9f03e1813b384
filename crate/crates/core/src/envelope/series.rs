use std::ops::Range;

use crate::error::{Error, Result};

/// Uniformly sampled signal starting at `t0`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries<T> {
    dt: f64,
    t0: f64,
    data: Vec<T>,
}

impl<T> TimeSeries<T> {
    pub fn new(dt: f64, t0: f64, data: Vec<T>) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::config("dt", format!("must be positive and finite, got {dt}")));
        }
        if data.is_empty() {
            return Err(Error::EmptySeries);
        }
        Ok(Self { dt, t0, data })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn sample_rate(&self) -> f64 {
        1.0 / self.dt
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// Always false; a series holds at least one sample.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn time(&self, index: usize) -> f64 {
        self.t0 + index as f64 * self.dt
    }

    pub fn duration(&self) -> f64 {
        self.data.len() as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.data.len()).map(move |i| self.time(i))
    }

    /// Index of the sample nearest to time `t`, clamped to the series.
    pub fn index_at(&self, t: f64) -> usize {
        let i = ((t - self.t0) / self.dt).round();
        if i <= 0.0 {
            0
        } else {
            (i as usize).min(self.data.len() - 1)
        }
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> TimeSeries<U> {
        TimeSeries {
            dt: self.dt,
            t0: self.t0,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl<T: Clone> TimeSeries<T> {
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        let t0 = self.time(range.start);
        let data = self
            .data
            .get(range.clone())
            .ok_or_else(|| Error::InsufficientLength {
                reason: format!("slice {range:?} out of bounds for length {}", self.data.len()),
            })?
            .to_vec();
        Self::new(self.dt, t0, data)
    }

    /// Keeps every `stride`-th sample (no anti-alias filtering).
    pub fn decimate(&self, stride: usize) -> Self {
        let stride = stride.max(1);
        Self {
            dt: self.dt * stride as f64,
            t0: self.t0,
            data: self.data.iter().step_by(stride).cloned().collect(),
        }
    }
}
