use crate::envelope::EnvelopeSample;
use crate::error::{Error, Result};

/// Fixed-length FIFO realising an integer-sample delay.
#[derive(Clone, Debug)]
pub struct DelayLine {
    buffer: Vec<EnvelopeSample>,
    pos: usize,
}

impl DelayLine {
    /// Zero-filled line of `length` samples.
    pub fn new(length: usize) -> Result<Self> {
        Self::with_seed(length, |_| EnvelopeSample::new(0.0, 0.0))
    }

    /// Line whose initial contents come from `seed(i)`; index 0 is popped first.
    pub fn with_seed(length: usize, seed: impl FnMut(usize) -> EnvelopeSample) -> Result<Self> {
        if length == 0 {
            return Err(Error::config("delay length", "must be at least one sample"));
        }
        Ok(Self {
            buffer: (0..length).map(seed).collect(),
            pos: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    /// The sample that the next `push_pop` will return.
    #[inline]
    pub fn peek(&self) -> EnvelopeSample {
        self.buffer[self.pos]
    }

    /// Writes `x` and returns the sample written `len()` calls earlier.
    #[inline]
    pub fn push_pop(&mut self, x: EnvelopeSample) -> EnvelopeSample {
        let out = std::mem::replace(&mut self.buffer[self.pos], x);
        self.pos += 1;
        if self.pos == self.buffer.len() {
            self.pos = 0;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64) -> EnvelopeSample {
        EnvelopeSample::new(re, 0.0)
    }

    #[test]
    fn unit_delay_returns_seed() {
        let mut line = DelayLine::new(1).unwrap();
        assert_eq!(line.push_pop(c(1.0)), c(0.0));
        assert_eq!(line.push_pop(c(2.0)), c(1.0));
    }

    #[test]
    fn length_three_fifo() {
        let seed = c(-7.0);
        let mut line = DelayLine::with_seed(3, |_| seed).unwrap();
        let out: Vec<_> = [1.0, 2.0, 3.0, 4.0].map(|v| line.push_pop(c(v))).to_vec();
        assert_eq!(out, vec![seed, seed, seed, c(1.0)]);
    }

    #[test]
    fn round_trip_group_delay_impulse() {
        let mut line = DelayLine::new(250).unwrap();
        let mut hits = vec![];
        for n in 0..600 {
            let x = if n == 0 { c(1.0) } else { c(0.0) };
            if line.push_pop(x) != c(0.0) {
                hits.push(n);
            }
        }
        assert_eq!(hits, vec![250]);
    }

    #[test]
    fn zero_length_rejected() {
        assert!(DelayLine::new(0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn output_is_input_delayed(len in 1usize..10_000, values in prop::collection::vec(-1e3f64..1e3, 1..2_000)) {
            let mut line = DelayLine::new(len).unwrap();
            for (n, &v) in values.iter().enumerate() {
                let out = line.push_pop(EnvelopeSample::new(v, -v));
                let expected = if n >= len { EnvelopeSample::new(values[n - len], -values[n - len]) } else { c(0.0) };
                prop_assert_eq!(out, expected);
            }
        }
    }
}
