//! Interface shared by the two tensor network families.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::Domain;
use crate::scalar::Real;
use crate::tensor::Batch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Trbfn,
    Tffn,
}

impl ModelFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::Trbfn => "trbfn",
            ModelFamily::Tffn => "tffn",
        }
    }
}

/// Normalized density with its spatial gradient and row-major Hessian.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivatives<T> {
    pub value: T,
    pub grad: Vec<T>,
    pub hess: Vec<T>,
}

/// W1 multiplies the shift/bandwidth constraint hinge, W2 the boundary values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyWeights {
    pub constraint: f64,
    pub boundary: f64,
}

impl PenaltyWeights {
    pub const NONE: PenaltyWeights = PenaltyWeights { constraint: 0.0, boundary: 0.0 };
}

/// Loss value split into its terms; `total = residual + W1·constraint + W2·boundary`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub residual: f64,
    /// Unweighted constraint hinge sum.
    pub constraint: f64,
    /// Unweighted boundary value sum.
    pub boundary: f64,
}

/// Parameter index ranges for alternating (two-step) training.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterGroups {
    /// Mixture weights: c and α.
    pub combination: Vec<Range<usize>>,
    /// Kernel geometry: shifts and bandwidths.
    pub base: Vec<Range<usize>>,
}

/// A normalized tensor-product density on a [`Domain`].
pub trait DensityModel<T: Real>: Send + Sync {
    fn family(&self) -> ModelFamily;
    fn dim(&self) -> usize;
    fn domain(&self) -> &Domain;
    /// Current normalizer Z; refreshed by [`DensityModel::set_params`].
    fn normalizer(&self) -> f64;
    /// Flat raw parameter vector, the optimizer's view.
    fn params(&self) -> &[T];
    /// Replaces the raw parameters and refreshes every cache that depends on them.
    fn set_params(&mut self, params: &[T]) -> Result<()>;
    fn value(&self, x: &[T]) -> T;
    fn derivatives(&self, x: &[T]) -> Derivatives<T>;
    /// ∫ p_N over the box ⊗_j [lo_j, hi_j].
    fn box_integral(&self, lo: &[f64], hi: &[f64]) -> Result<f64>;
    /// Loss on the batch and, if `grad` is given, its exact gradient with
    /// respect to the raw parameters (overwrites `grad`).
    fn loss(&self, batch: &Batch<T>, weights: &PenaltyWeights, grad: Option<&mut [T]>) -> Result<LossBreakdown>;
    /// None when the family has no combination/base split.
    fn parameter_groups(&self) -> Option<ParameterGroups>;

    fn num_params(&self) -> usize {
        self.params().len()
    }

    /// Density at an f64 point.
    fn value_f64(&self, x: &[f64]) -> f64 {
        let xt: Vec<T> = x.iter().map(|&v| T::of(v)).collect();
        self.value(&xt).f64()
    }

    /// Integral over the centered sub-box of half-edge `r` in every dimension.
    fn centered_integral(&self, r: f64) -> Result<f64> {
        let c = &self.domain().center;
        let lo: Vec<f64> = c.iter().map(|o| o - r).collect();
        let hi: Vec<f64> = c.iter().map(|o| o + r).collect();
        self.box_integral(&lo, &hi)
    }
}
