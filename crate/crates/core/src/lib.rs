//! Confined Herschel-Bulkley lubrication flow: explicit solver, PCE-PCA
//! surrogate and surrogate-based estimation of `(B, S)`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod inversion;
pub mod io;
pub mod linalg;
pub mod model;
pub mod real;
pub mod solver;
pub mod stats;
pub mod surrogate;

pub use error::{Error, Result};
pub use inversion::{InversionOptions, InversionResult, NoiseSpec, Observation};
pub use model::{Domain, RheoParams};
pub use real::Real;
pub use solver::{HeightProfile, Provenance, SolverConfig, SolverRun};
pub use stats::Summary;
pub use surrogate::{Reduction, Surrogate, TrainingSet};

pub type Params = RheoParams<f64>;
pub type Profile = HeightProfile<f64>;
pub type Config = SolverConfig<f64>;
pub type Run = SolverRun<f64>;
pub type Model = Surrogate<f64>;
pub type Samples = TrainingSet<f64>;
pub type Inversion = InversionResult<f64>;
