//! Signal-processing blocks of the oscillator loop.

mod amplifier;
pub mod noise;
mod resonator;
mod shifter;

pub use amplifier::SaturatingAmp;
pub use noise::{FlickerShaper, NoiseCoefficients, PhaseNoiseInjector};
pub use resonator::Resonator;
pub use shifter::{BoundedPhaseShifter, UnboundedPhaseShifter, VectorModulator};
