//! Frequency-compensated physics-informed surrogate for unsteady flow past
//! an elliptical cylinder.
//!
//! A small MLP maps the design `(u_inlet, d_y)` to five frequencies and five
//! phases; their sine/cosine evaluations at time `t` join the coordinates as
//! input to a trunk MLP predicting `(u, v, p)`. Training mixes a data-fit
//! loss with the Navier-Stokes residual at random collocation points.

pub mod dataset;
pub mod evaluation;
pub mod jet;
pub mod model;
pub mod physics;
pub mod training;

pub use dataset::{CollocationDomain, SplitSpec, Splits};
pub use model::{Architecture, FlowPrediction, FourierParams, Mode, SurrogateParams, Variant};
pub use physics::{FluidConstants, ResidualTriple};
pub use training::{TrainConfig, TrainOutcome};

pub use fcpinn_datagen::{DesignPoint, FlowRecord, FlowTable};

use fcpinn_autodiff::DiffError;
use fcpinn_datagen::DatagenError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("poisoned parameters: {0}")]
    PoisonedParameters(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("shedding correlation is outside its validity range: Re = {0} <= 21")]
    OutOfValidity(f64),
    #[error("incomplete dataset: missing design(s) {0}")]
    IncompleteDataset(String),
    #[error("split integrity violated: {0}")]
    SplitIntegrity(String),
    #[error("empty split: {0}")]
    EmptySplit(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("training diverged at epoch {epoch}: {reason}")]
    DivergedTraining { epoch: usize, reason: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("signal has no dominant frequency")]
    NoDominantFrequency,
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Data(#[from] DatagenError),
    #[error("file error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image encoding: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
