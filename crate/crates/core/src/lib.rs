//! Fixed optimized annealing protocols for parity-encoded (LHZ) fully
//! connected spin glasses.
//!
//! The pipeline runs: sample logical instances, map them onto physical
//! qubits with plaquette constraints, scan the instantaneous spectrum for the
//! minimum gap, sort and group instances by gap, optimize one protocol per
//! group with dCRAB, and compare the annealing time each protocol needs
//! against a linear ramp. A greedy protocol-library builder grows a protocol
//! set from an instance stream without spectral information.

pub mod cohort;
pub mod dynamics;
pub mod error;
pub mod library;
pub mod linalg;
pub mod model;
pub mod optimize;
pub mod schedule;
pub mod spectrum;

pub use error::{Error, Result};
