// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod blocks;
pub mod envelope;
pub mod error;
pub mod pll;
pub mod scenario;
pub mod stuart_landau;
pub mod tdo;

pub use envelope::{EnvelopeSample, TimeSeries};
pub use error::{Error, Result};
