//! Reference models for the test suites.
//!
//! Everything here is written straight from circuit laws and the defining
//! equations, with no code shared with `centaur-core`, so it can serve as
//! an independent check on the optimized implementations.

pub mod gru;
pub mod mna;
pub mod scalar;
