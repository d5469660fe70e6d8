//! Cost model, farm runtime and Jacobi solvers for master–worker
//! scalability prediction.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix the common `f64` case.

pub mod calibration;
pub mod cost_model;
pub mod error;
pub mod jacobi;
pub mod list_ops;
pub mod runtime;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type MachineConstants = cost_model::MachineConstants<f64>;
pub type MachineConstantsF32 = cost_model::MachineConstants<f32>;
pub type PredictionCurve = cost_model::PredictionCurve<f64>;
pub type LinearSystem = jacobi::LinearSystem<f64>;
pub type LinearSystemF32 = jacobi::LinearSystem<f32>;
pub type SolveConfig = jacobi::SolveConfig<f64>;
pub type SolveResult = jacobi::SolveResult<f64>;
