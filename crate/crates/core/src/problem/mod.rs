//! Steady-state Fokker–Planck problems and the differential operator
//!
//! L p = -Σ_i ∂_i (f_i p) + ½ Σ_ij ∂_i ∂_j (D_ij p),
//!
//! applied in expanded (non-divergence) form from analytic drift and diffusion
//! derivatives, so that candidate densities only need to supply p, ∇p and ∇²p.

pub mod benchmarks;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub use benchmarks::{exact_density, exact_normalizer, BenchmarkId, ExactSolution};

/// Scalar field on R^d.
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Vector (or flattened row-major matrix) field on R^d.
pub type VectorFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
/// `(x, i, j, k) -> ∂_k D_ij(x)`.
pub type DiffusionGradFn = Arc<dyn Fn(&[f64], usize, usize, usize) -> f64 + Send + Sync>;
/// `(x, i, j) -> ∂_i ∂_j D_ij(x)`.
pub type DiffusionHessFn = Arc<dyn Fn(&[f64], usize, usize) -> f64 + Send + Sync>;

/// A steady-state Fokker–Planck problem.
#[derive(Clone)]
pub struct Problem {
    pub dim: usize,
    pub drift: VectorFn,
    pub div_drift: ScalarFn,
    /// Row-major `d × d` diffusion matrix, symmetric.
    pub diffusion: VectorFn,
    pub diffusion_grad: DiffusionGradFn,
    pub diffusion_hess: DiffusionHessFn,
    /// Potential H with exp(-H) stationary, present for Gibbs benchmarks.
    pub potential: Option<ScalarFn>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("dim", &self.dim)
            .field("has_potential", &self.potential.is_some())
            .finish()
    }
}

/// Coefficients of L at a point: L p = zeroth·p + Σ_k first_k ∂_k p + Σ_ij second_ij ∂_ij p.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorCoefficients {
    pub zeroth: f64,
    pub first: Vec<f64>,
    /// Row-major `d × d`.
    pub second: Vec<f64>,
}

impl OperatorCoefficients {
    pub fn apply(&self, p: f64, grad: &[f64], hess: &[f64]) -> f64 {
        let mut r = self.zeroth * p;
        for (a, g) in self.first.iter().zip(grad) {
            r += a * g;
        }
        for (b, h) in self.second.iter().zip(hess) {
            r += b * h;
        }
        r
    }
}

impl Problem {
    /// Expanded operator coefficients at `x`:
    /// zeroth = -div f + ½ Σ_ij ∂_i∂_j D_ij,
    /// first_k = -f_k + ½ (Σ_i ∂_i D_ik + Σ_j ∂_j D_kj),
    /// second_ij = ½ D_ij.
    pub fn coefficients(&self, x: &[f64]) -> OperatorCoefficients {
        let d = self.dim;
        let f = (self.drift)(x);
        let dmat = (self.diffusion)(x);
        let mut zeroth = -(self.div_drift)(x);
        for i in 0..d {
            for j in 0..d {
                zeroth += 0.5 * (self.diffusion_hess)(x, i, j);
            }
        }
        let mut first = vec![0.0; d];
        for (k, fk) in first.iter_mut().enumerate() {
            let mut s = 0.0;
            for i in 0..d {
                s += (self.diffusion_grad)(x, i, k, i);
                s += (self.diffusion_grad)(x, k, i, i);
            }
            *fk = -f[k] + 0.5 * s;
        }
        let second = dmat.iter().map(|v| 0.5 * v).collect();
        OperatorCoefficients { zeroth, first, second }
    }
}

/// Applies L at `x` to a density given by its value, gradient and Hessian.
pub fn residual(problem: &Problem, x: &[f64], p: f64, grad: &[f64], hess: &[f64]) -> Result<f64> {
    let d = problem.dim;
    if x.len() != d || grad.len() != d || hess.len() != d * d {
        return Err(Error::Input(format!(
            "residual shapes: x {} grad {} hess {} for dimension {d}",
            x.len(),
            grad.len(),
            hess.len()
        )));
    }
    Ok(problem.coefficients(x).apply(p, grad, hess))
}

/// Builds the Gibbs-form problem whose stationary density is proportional to exp(-H):
/// f = -½ D ∇H + g with g_i = Σ_j ∂_j(D_ij / 2).
///
/// `div_f` is assembled by the product rule from the supplied derivatives, so
/// the Hessian of H is required alongside its gradient.
#[allow(clippy::too_many_arguments)]
pub fn make_gibbs_problem(
    dim: usize,
    potential: ScalarFn,
    potential_grad: VectorFn,
    potential_hess: VectorFn,
    diffusion: VectorFn,
    diffusion_grad: DiffusionGradFn,
    diffusion_hess: DiffusionHessFn,
) -> Result<Problem> {
    if dim == 0 {
        return Err(Error::Config("problem dimension must be positive".into()));
    }
    let probe = vec![0.0; dim];
    let checks = [
        ("potential gradient", potential_grad(&probe).len(), dim),
        ("potential Hessian", potential_hess(&probe).len(), dim * dim),
        ("diffusion matrix", diffusion(&probe).len(), dim * dim),
    ];
    for (name, got, want) in checks {
        if got != want {
            return Err(Error::Config(format!("{name} has length {got}, expected {want}")));
        }
    }

    let drift: VectorFn = {
        let grad_h = potential_grad.clone();
        let dmat = diffusion.clone();
        let dgrad = diffusion_grad.clone();
        Arc::new(move |x: &[f64]| {
            let gh = grad_h(x);
            let dm = dmat(x);
            (0..dim)
                .map(|i| {
                    let mut fi = 0.0;
                    for k in 0..dim {
                        fi -= 0.5 * dm[i * dim + k] * gh[k];
                    }
                    for j in 0..dim {
                        fi += 0.5 * dgrad(x, i, j, j);
                    }
                    fi
                })
                .collect()
        })
    };

    let div_drift: ScalarFn = {
        let grad_h = potential_grad.clone();
        let hess_h = potential_hess.clone();
        let dmat = diffusion.clone();
        let dgrad = diffusion_grad.clone();
        let dhess = diffusion_hess.clone();
        Arc::new(move |x: &[f64]| {
            let gh = grad_h(x);
            let hh = hess_h(x);
            let dm = dmat(x);
            let mut div = 0.0;
            for i in 0..dim {
                for k in 0..dim {
                    div -= 0.5 * (dgrad(x, i, k, i) * gh[k] + dm[i * dim + k] * hh[i * dim + k]);
                }
                for j in 0..dim {
                    div += 0.5 * dhess(x, i, j);
                }
            }
            div
        })
    };

    Ok(Problem {
        dim,
        drift,
        div_drift,
        diffusion,
        diffusion_grad,
        diffusion_hess,
        potential: Some(potential),
    })
}
