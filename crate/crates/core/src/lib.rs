//! Brownian semistationary processes: simulation, Gaussian conditional
//! laws, and numerical probes of conditional full support.

pub mod cfs_probe;
pub mod conditional_law;
pub mod convolution;
pub mod error;
pub mod grid;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod model;
pub mod quadrature;
pub mod rkhs_density;
pub mod rng;
pub mod simulator;
pub mod stats;

pub use error::{BssError, Result};
pub use grid::{PathRole, SamplePath, SimGrid};
pub use kernels::{Kernel, RegularityCertificate};
pub use model::{BssModel, ConditionReport, DriftSpec, IntermittencyModel, ValidatedModel};
