//! Ground-truth data generation for flow past an elliptical cylinder.
//!
//! A projection-method solver on a staggered grid produces velocity and
//! pressure snapshots over a fixed region of interest; [`records`] writes
//! them as labeled datasets.

pub mod geometry;
pub mod poisson;
pub mod records;
pub mod solver;
pub mod spectrum;
pub mod taylor_green;

pub use geometry::{all_designs, ChannelGeometry, DesignPoint, RoiGrid};
pub use records::{FlowRecord, FlowTable};
pub use solver::{simulate, FieldSnapshot, FlowSolver, SolverConfig};
pub use taylor_green::{taylor_green_validation, TaylorGreenConfig, TaylorGreenReport};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical instability at step {step}: CFL number {cfl}")]
    Instability { step: usize, cfl: f64 },
    #[error("pressure solve failed: {0}")]
    SolverFailure(String),
    #[error("data integrity: {0}")]
    DataIntegrity(String),
    #[error("malformed dataset file: {0}")]
    Format(String),
    #[error("file error: {0}")]
    Io(#[from] std::io::Error),
}
