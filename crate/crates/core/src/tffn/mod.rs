//! Tensor feed-forward network: p(x) = (1/Z) Σ_i ∏_j e_j(x_j) k_ij(x_j) with
//! MLP factors k_ij, boundary envelope e_j and Gauss–Legendre normalization.

pub mod envelope;
pub mod mlp;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::model::{DensityModel, Derivatives, LossBreakdown, ModelFamily, ParameterGroups, PenaltyWeights};
use crate::quadrature::{gauss_legendre, composite_nodes, DEFAULT_PANELS, DEFAULT_POINTS};
use crate::scalar::Real;
use crate::tensor::{assemble_derivatives, residual_pass, Batch, Jet, TensorFactors};

pub use envelope::{envelope, envelope_1d, envelope_integral};
pub use mlp::{MlpCache, MlpShape};

/// Quadrature nodes of one dimension with the envelope folded into the weights.
#[derive(Debug, Clone)]
struct NodeSet<T> {
    nodes: Vec<T>,
    /// w_q · e(x_q)
    weights: Vec<f64>,
}

/// Rank-N TFFN with c_i = 1. Parameters are the N·d factor MLPs laid out
/// consecutively, factor (i, j) at offset `(i·d + j)·P`.
#[derive(Debug, Clone)]
pub struct Tffn<T: Real> {
    rank: usize,
    dim: usize,
    shape: MlpShape,
    domain: Domain,
    panels: usize,
    points: usize,
    params: Vec<T>,
    grid: Vec<NodeSet<T>>,
    integrals: Vec<f64>,
    z: f64,
}

/// Per-thread forward state for the reverse pass.
pub struct TffnScratch<T> {
    caches: Vec<MlpCache<T>>,
    kjets: Vec<Jet<T>>,
    work: Vec<T>,
}

impl<T: Real> Tffn<T> {
    /// Xavier-initialized network with the default 16 × 16-point quadrature.
    pub fn init<R: Rng + ?Sized>(rank: usize, hidden: &[usize], domain: Domain, rng: &mut R) -> Result<Self> {
        let shape = MlpShape::new(hidden);
        let p = shape.num_params();
        let mut params = vec![T::zero(); rank * domain.dim() * p];
        for f in params.chunks_mut(p) {
            shape.init(f, rng);
        }
        Self::from_params(rank, hidden, domain, params)
    }

    pub fn from_params(rank: usize, hidden: &[usize], domain: Domain, params: Vec<T>) -> Result<Self> {
        Self::with_quadrature(rank, hidden, domain, params, DEFAULT_PANELS, DEFAULT_POINTS)
    }

    pub fn with_quadrature(
        rank: usize,
        hidden: &[usize],
        domain: Domain,
        params: Vec<T>,
        panels: usize,
        points: usize,
    ) -> Result<Self> {
        if rank == 0 || hidden.is_empty() || hidden.contains(&0) {
            return Err(Error::Config(format!("TFFN needs rank ≥ 1 and nonzero hidden widths, got {rank} and {hidden:?}")));
        }
        if panels == 0 {
            return Err(Error::Config("quadrature needs at least one panel".into()));
        }
        let shape = MlpShape::new(hidden);
        let d = domain.dim();
        let grid = Self::node_sets(&domain, panels, points)?;
        let mut model = Self {
            rank,
            dim: d,
            params: vec![T::zero(); rank * d * shape.num_params()],
            shape,
            domain,
            panels,
            points,
            grid,
            integrals: vec![0.0; rank * d],
            z: 0.0,
        };
        model.set_params(&params)?;
        Ok(model)
    }

    fn node_sets(domain: &Domain, panels: usize, points: usize) -> Result<Vec<NodeSet<T>>> {
        let rule = gauss_legendre(points)?;
        Ok((0..domain.dim())
            .map(|j| {
                let (xs, ws) = composite_nodes(&rule, domain.lower(j), domain.upper(j), panels);
                let (o, r) = (domain.center[j], domain.half_widths[j]);
                let weights = xs.iter().zip(&ws).map(|(&x, &w)| w * envelope_1d(x, o, r).v).collect();
                NodeSet { nodes: xs.into_iter().map(T::of).collect(), weights }
            })
            .collect())
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn hidden(&self) -> &[usize] {
        let w = self.shape.widths();
        &w[1..w.len() - 1]
    }

    pub fn quadrature(&self) -> (usize, usize) {
        (self.panels, self.points)
    }

    fn factor_params(&self, i: usize, j: usize) -> &[T] {
        let p = self.shape.num_params();
        let off = (i * self.dim + j) * p;
        &self.params[off..off + p]
    }

    /// MLP factor k_ij (without envelope) at x.
    pub fn factor_eval(&self, i: usize, j: usize, x: T) -> Jet<T> {
        let mut cache = self.shape.new_cache();
        self.shape.forward(self.factor_params(i, j), x, true, &mut cache)
    }

    fn envelope_at(&self, j: usize, x: T) -> Jet<T> {
        envelope_1d(x, T::of(self.domain.center[j]), T::of(self.domain.half_widths[j]))
    }

    fn integrate_factor(&self, i: usize, j: usize, set: &NodeSet<T>, cache: &mut MlpCache<T>) -> f64 {
        let p = self.factor_params(i, j);
        set.nodes.iter().zip(&set.weights).map(|(&x, &w)| w * self.shape.forward(p, x, false, cache).v.f64()).sum()
    }

    fn per_factor_integrals(&self, sets: &[NodeSet<T>]) -> Vec<f64> {
        let d = self.dim;
        (0..self.rank * d)
            .into_par_iter()
            .map(|ij| {
                let mut cache = self.shape.new_cache();
                self.integrate_factor(ij / d, ij % d, &sets[ij % d], &mut cache)
            })
            .collect()
    }

    fn sum_of_products(&self, ints: &[f64]) -> f64 {
        ints.chunks(self.dim).map(|r| r.iter().product::<f64>()).sum()
    }

    /// Z recomputed with a different composite rule, leaving the cached one alone.
    pub fn normalizer_with(&self, panels: usize, points: usize) -> Result<f64> {
        let sets = Self::node_sets(&self.domain, panels, points)?;
        Ok(self.sum_of_products(&self.per_factor_integrals(&sets)))
    }

    #[cfg(test)]
    fn factor_integrals_for_test(&self) -> &[f64] {
        &self.integrals
    }

    /// Adds `scale · ∂Z/∂θ`; each factor owns a disjoint gradient block.
    fn normalizer_backward(&self, scale: f64, grad: &mut [T]) {
        let d = self.dim;
        let p = self.shape.num_params();
        grad.par_chunks_mut(p).enumerate().for_each(|(ij, g)| {
            let (i, j) = (ij / d, ij % d);
            let outer: f64 = scale * (0..d).filter(|&k| k != j).map(|k| self.integrals[i * d + k]).product::<f64>();
            if outer == 0.0 {
                return;
            }
            let set = &self.grid[j];
            let params = self.factor_params(i, j);
            let mut cache = self.shape.new_cache();
            let mut work = Vec::new();
            for (&x, &w) in set.nodes.iter().zip(&set.weights) {
                if w == 0.0 {
                    continue;
                }
                self.shape.forward(params, x, false, &mut cache);
                self.shape.backward(params, &cache, Jet::new(T::of(outer * w), T::zero(), T::zero()), g, &mut work);
            }
        });
    }
}

impl<T: Real> TensorFactors<T> for Tffn<T> {
    type Scratch = TffnScratch<T>;

    fn dim(&self) -> usize {
        self.dim
    }

    fn rank(&self) -> usize {
        self.rank
    }

    fn num_params(&self) -> usize {
        self.params.len()
    }

    fn weight(&self, _: usize) -> T {
        T::one()
    }

    fn new_scratch(&self) -> TffnScratch<T> {
        let n = self.rank * self.dim;
        TffnScratch { caches: (0..n).map(|_| self.shape.new_cache()).collect(), kjets: vec![Jet::zero(); n], work: Vec::new() }
    }

    fn factor_forward(&self, i: usize, j: usize, x: T, s: &mut TffnScratch<T>) -> Jet<T> {
        let ij = i * self.dim + j;
        let k = self.shape.forward(self.factor_params(i, j), x, true, &mut s.caches[ij]);
        s.kjets[ij] = k;
        self.envelope_at(j, x).mul(k)
    }

    fn factor_backward(&self, i: usize, j: usize, x: T, adj: Jet<T>, s: &mut TffnScratch<T>, grad: &mut [T]) {
        let ij = i * self.dim + j;
        let kadj = self.envelope_at(j, x).mul_adjoint(adj);
        if kadj == Jet::zero() {
            return;
        }
        let p = self.shape.num_params();
        let off = ij * p;
        self.shape.backward(self.factor_params(i, j), &s.caches[ij], kadj, &mut grad[off..off + p], &mut s.work);
    }

    fn weight_backward(&self, _: usize, _: T, _: &mut [T]) {}
}

impl<T: Real> DensityModel<T> for Tffn<T> {
    fn family(&self) -> ModelFamily {
        ModelFamily::Tffn
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn normalizer(&self) -> f64 {
        self.z
    }

    fn params(&self) -> &[T] {
        &self.params
    }

    fn set_params(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Parameter(format!(
                "expected {} TFFN parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        if let Some(p) = params.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("parameter {p} is not finite")));
        }
        self.params.copy_from_slice(params);
        self.integrals = self.per_factor_integrals(&self.grid);
        let z = self.sum_of_products(&self.integrals);
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::DegenerateModel(format!("normalizer Z = {z} underflowed or overflowed")));
        }
        self.z = z;
        Ok(())
    }

    fn value(&self, x: &[T]) -> T {
        let mut cache = self.shape.new_cache();
        let env: T = (0..self.dim).map(|j| self.envelope_at(j, x[j]).v).fold(T::one(), |a, b| a * b);
        if env == T::zero() {
            return T::zero();
        }
        let mut p = T::zero();
        for i in 0..self.rank {
            let mut prod = T::one();
            for (j, &xj) in x.iter().enumerate() {
                prod *= self.shape.forward(self.factor_params(i, j), xj, false, &mut cache).v;
            }
            p += prod;
        }
        env * p / T::of(self.z)
    }

    fn derivatives(&self, x: &[T]) -> Derivatives<T> {
        let d = self.dim;
        let mut s = self.new_scratch();
        let jets: Vec<Jet<T>> = (0..self.rank * d).map(|ij| self.factor_forward(ij / d, ij % d, x[ij % d], &mut s)).collect();
        let (p, grad, hess) = assemble_derivatives(&vec![T::one(); self.rank], &jets, d);
        let iz = T::one() / T::of(self.z);
        Derivatives { value: p * iz, grad: grad.into_iter().map(|g| g * iz).collect(), hess: hess.into_iter().map(|h| h * iz).collect() }
    }

    fn box_integral(&self, lo: &[f64], hi: &[f64]) -> Result<f64> {
        if lo.len() != self.dim || hi.len() != self.dim {
            return Err(Error::Input(format!("box must have dimension {}", self.dim)));
        }
        let rule = gauss_legendre(self.points)?;
        let sets: Vec<NodeSet<T>> = (0..self.dim)
            .map(|j| {
                let (a, b) = (lo[j].max(self.domain.lower(j)), hi[j].min(self.domain.upper(j)));
                if b <= a {
                    return NodeSet { nodes: vec![], weights: vec![] };
                }
                let (xs, ws) = composite_nodes(&rule, a, b, self.panels);
                let (o, r) = (self.domain.center[j], self.domain.half_widths[j]);
                let weights = xs.iter().zip(&ws).map(|(&x, &w)| w * envelope_1d(x, o, r).v).collect();
                NodeSet { nodes: xs.into_iter().map(T::of).collect(), weights }
            })
            .collect();
        Ok(self.sum_of_products(&self.per_factor_integrals(&sets)) / self.z)
    }

    fn loss(&self, batch: &Batch<T>, _: &PenaltyWeights, mut grad: Option<&mut [T]>) -> Result<LossBreakdown> {
        if let Some(g) = grad.as_deref_mut() {
            if g.len() != self.params.len() {
                return Err(Error::Parameter(format!("gradient buffer has {} slots, expected {}", g.len(), self.params.len())));
            }
            g.iter_mut().for_each(|v| *v = T::zero());
        }
        let (sumsq, dz) = residual_pass(self, T::of(self.z), batch, grad.as_deref_mut())?;
        if let Some(g) = grad {
            self.normalizer_backward(dz.f64(), g);
        }
        let residual = sumsq.f64();
        Ok(LossBreakdown { total: residual, residual, constraint: 0.0, boundary: 0.0 })
    }

    fn parameter_groups(&self) -> Option<ParameterGroups> {
        None
    }
}
