//! Joint parameter and initial-state reconstruction for compartmental
//! epidemic models observed through a single scaled compartment.
//!
//! The numerical core is generic over [`Scalar`] (`f32`, `f64`); the
//! aliases below fix it to `f64`.

pub mod calibrate;
pub mod chain;
pub mod discriminate;
pub mod error;
pub mod io;
pub mod jet;
pub mod linalg;
pub mod models;
pub mod ode;
pub mod reconstruct;
pub mod scalar;

pub use calibrate::{calibrate, CalibrationProblem, CalibrationResult, CalibrationRun};
pub use chain::{analytic_chain, finite_difference_chain, lie_chain, DerivativeChain};
pub use discriminate::{
    closeness_bound_check, discriminate_approach1, discriminate_approach2, Thresholds, Verdict,
};
pub use error::{Error, Result};
pub use models::{model, ModelDef, ModelId, ParamVector, PartialCombos};
pub use ode::{integrate, GridSpec, State, Trajectory};
pub use reconstruct::{
    reconstruct_multitime, reconstruct_wronskian, wronskian_batch, Method, ReconOptions,
    ReconstructionResult, ThetaHat,
};
pub use scalar::Scalar;

pub type State64 = State<f64>;
pub type ParamVector64 = ParamVector<f64>;
pub type GridSpec64 = GridSpec<f64>;
pub type Trajectory64 = Trajectory<f64>;
pub type DerivativeChain64 = DerivativeChain<f64>;
pub type ReconstructionResult64 = ReconstructionResult<f64>;
pub type Thresholds64 = Thresholds<f64>;
pub type PartialCombos64 = PartialCombos<f64>;
