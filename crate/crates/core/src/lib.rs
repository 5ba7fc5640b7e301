//! Simulation and analysis of atom-mediated photon-photon polarization
//! entanglement: state preparation with storage noise, a Monte-Carlo
//! detection chain, CHSH analysis, two-qubit tomography and entanglement
//! measures.

pub mod bell;
pub mod calibration;
pub mod config;
pub mod detection;
pub mod error;
pub mod fit;
pub mod io;
pub mod linalg;
pub mod measures;
pub mod pipeline;
pub mod protocol;
pub mod rng;
pub mod tomography;

pub use error::{Error, ErrorKind, Result};
pub use linalg::{CMatrix, DensityMatrix, HermitianOperator, StateVector};
