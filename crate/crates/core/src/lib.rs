//! Computational laboratory for Gowers norms, W-tricked von Mangoldt weights,
//! bracket sequences and multiple ergodic averages along primes.

pub mod averages;
pub mod error;
pub mod gowers;
pub mod patterns;
pub mod phase;
pub mod primes;
pub mod reduce;
pub mod sequences;
pub mod systems;

pub use error::{Error, Result};
pub use phase::Phase;
