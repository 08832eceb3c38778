//! Compressive quantum detector tomography.
//!
//! Reconstructs an unknown measurement (POVM) from the outcome statistics of
//! a growing list of probe states and certifies, probe by probe, when the
//! data determine the measurement uniquely. See the crate README for the
//! command-line front end and the acceptance suite.

pub mod analysis;
pub mod certify;
pub mod error;
pub mod operators;
pub mod povm_gen;
pub mod probes;
pub mod protocol;
pub mod random;
pub mod simulator;
pub mod solver;

pub use error::{Error, Result};
pub use operators::{HermitianOperator, Povm, PureState};
