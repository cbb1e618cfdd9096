//! Tensor neural network solvers for steady-state Fokker–Planck equations.
//!
//! The pipeline: estimate a bounded support from SDE trajectories
//! ([`geometry`]), fit a normalized tensor-product density by minimizing the
//! squared operator residual at uniform collocation points ([`training`]),
//! optionally shrink the support from the trained model's box integrals, and
//! compare against closed-form Gibbs densities ([`evaluation`]).
//!
//! Two model families share the tensor calculus in [`tensor`]:
//! [`trbfn::Trbfn`] (radial basis mixtures, everything analytic) and
//! [`tffn::Tffn`] (small MLP factors, quadrature normalization).

pub mod checkpoint;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod model;
pub mod optim;
pub mod problem;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod tffn;
pub mod training;
pub mod trbfn;

pub use checkpoint::Checkpoint;
pub use error::{Error, Result};
pub use geometry::{Domain, SdeSimConfig};
pub use model::{DensityModel, Derivatives, LossBreakdown, ModelFamily, PenaltyWeights};
pub use problem::{BenchmarkId, Problem};
pub use scalar::{Precision, Real};
pub use tffn::Tffn;
pub use training::{TrainConfig, TrainState};
pub use trbfn::{RbfKind, Trbfn};

pub type TrbfnF32 = Trbfn<f32>;
pub type TrbfnF64 = Trbfn<f64>;
pub type TffnF32 = Tffn<f32>;
pub type TffnF64 = Tffn<f64>;
