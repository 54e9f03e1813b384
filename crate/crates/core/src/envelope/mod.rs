//! Foundational types: clock, traces, delay line, random streams, phase tools.

mod clock;
mod delay;
pub mod io;
mod phase;
pub mod rng;
mod series;

pub use clock::SimClock;
pub(crate) use clock::samples_for;
pub use delay::DelayLine;
pub use phase::{
    instantaneous_frequency, unwrap_phase, unwrap_real, wrap, InstantaneousFrequency,
    PhaseUnwrapper, MAX_UNWRAP_STEP,
};
pub use series::TimeSeries;

/// Complex baseband envelope relative to the nominal carrier.
pub type EnvelopeSample = num_complex::Complex64;
