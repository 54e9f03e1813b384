//! Deterministic random streams. Every stochastic component draws from its own
//! ChaCha stream keyed by the scenario seed, so adding a consumer never shifts
//! the draws seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::envelope::EnvelopeSample;

pub type SimRng = ChaCha8Rng;

/// Identifies the consumer of a random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    DelaySeed = 1,
    TdoPhaseNoise = 2,
    ReferencePhaseNoise = 3,
    CarrierPhase = 4,
    /// Free for tests and ad-hoc use.
    Aux = 99,
}

pub fn stream(seed: u64, which: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

pub fn gaussian(rng: &mut SimRng) -> f64 {
    StandardNormal.sample(rng)
}

/// Circular complex Gaussian with standard deviation `sigma` per component.
pub fn complex_gaussian(rng: &mut SimRng, sigma: f64) -> EnvelopeSample {
    EnvelopeSample::new(sigma * gaussian(rng), sigma * gaussian(rng))
}
