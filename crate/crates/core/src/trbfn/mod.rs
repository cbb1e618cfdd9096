//! Tensor radial basis function network: p(x) = (1/Z) Σ_i c_i ∏_j k_ij(x_j),
//! k_ij(x) = Σ_ℓ α_ijℓ k_ℓ((x - s_ijℓ)/h_ijℓ), with every derivative,
//! integral and parameter gradient in closed form.

pub mod rbf;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::model::{DensityModel, Derivatives, LossBreakdown, ModelFamily, ParameterGroups, PenaltyWeights};
use crate::scalar::Real;
use crate::tensor::{assemble_derivatives, residual_pass, Batch, Jet, TensorFactors};

pub use rbf::{analytic_integral_1d, RbfKind};

/// Raw parameter layout: `[c_raw (N) | α_raw (K) | s (K) | log h (K)]`,
/// K = N·d·m, with (i, j, ℓ) flattened as `(i·d + j)·m + ℓ`.
/// c and α are softmax images of their raw blocks.
#[derive(Debug, Clone)]
pub struct Trbfn<T: Real> {
    rank: usize,
    dim: usize,
    /// Kernel kind of basis ℓ, shared by every factor.
    kinds: Vec<RbfKind>,
    domain: Domain,
    params: Vec<T>,
    c: Vec<T>,
    alpha: Vec<T>,
    shift: Vec<T>,
    width: Vec<T>,
    inv_width: Vec<T>,
    /// ∫ k_ij over the domain, row-major (i, j).
    integrals: Vec<f64>,
    z: f64,
}

fn softmax<T: Real>(raw: &[T], out: &mut [T]) {
    let m = raw.iter().cloned().fold(T::neg_infinity(), T::max);
    let mut s = T::zero();
    for (o, &r) in out.iter_mut().zip(raw) {
        *o = (r - m).exp();
        s += *o;
    }
    for o in out.iter_mut() {
        *o /= s;
    }
}

/// Maps a gradient over softmax outputs to the raw inputs in place.
fn softmax_backward<T: Real>(p: &[T], g: &mut [T]) {
    let dot: T = p.iter().zip(g.iter()).map(|(&a, &b)| a * b).sum();
    for (gi, &pi) in g.iter_mut().zip(p) {
        *gi = pi * (*gi - dot);
    }
}

impl<T: Real> Trbfn<T> {
    pub fn num_params_for(rank: usize, dim: usize, bases: usize) -> usize {
        rank + 3 * rank * dim * bases
    }

    /// Default initialization: uniform c and α, shifts ~ N(O_j, r_j) clipped to
    /// the box minus 1e-3·r_j, bandwidths 0.9·r_j.
    pub fn init<R: Rng + ?Sized>(rank: usize, kinds: Vec<RbfKind>, domain: Domain, rng: &mut R) -> Result<Self> {
        let (d, m) = (domain.dim(), kinds.len());
        if rank == 0 || m == 0 {
            return Err(Error::Config(format!("TRBFN needs rank ≥ 1 and ≥ 1 basis, got ({rank}, {m})")));
        }
        let k = rank * d * m;
        let mut params = vec![T::zero(); rank + 3 * k];
        for i in 0..rank {
            for j in 0..d {
                let (o, r) = (domain.center[j], domain.half_widths[j]);
                let normal = Normal::new(o, r.sqrt()).expect("positive spread");
                let edge = r - 1e-3 * r;
                for l in 0..m {
                    let idx = (i * d + j) * m + l;
                    let s: f64 = normal.sample(rng);
                    params[rank + k + idx] = T::of(s.clamp(o - edge, o + edge));
                    params[rank + 2 * k + idx] = T::of((0.9 * r).ln());
                }
            }
        }
        Self::from_params(rank, kinds, domain, params)
    }

    pub fn from_params(rank: usize, kinds: Vec<RbfKind>, domain: Domain, params: Vec<T>) -> Result<Self> {
        let (d, m) = (domain.dim(), kinds.len());
        if rank == 0 || m == 0 {
            return Err(Error::Config(format!("TRBFN needs rank ≥ 1 and ≥ 1 basis, got ({rank}, {m})")));
        }
        let k = rank * d * m;
        let mut model = Self {
            rank,
            dim: d,
            kinds,
            domain,
            params: vec![T::zero(); rank + 3 * k],
            c: vec![T::zero(); rank],
            alpha: vec![T::zero(); k],
            shift: vec![T::zero(); k],
            width: vec![T::zero(); k],
            inv_width: vec![T::zero(); k],
            integrals: vec![0.0; rank * d],
            z: 0.0,
        };
        model.set_params(&params)?;
        Ok(model)
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn bases(&self) -> usize {
        self.kinds.len()
    }

    pub fn kinds(&self) -> &[RbfKind] {
        &self.kinds
    }

    /// Rank weights c on the simplex.
    pub fn weights(&self) -> &[T] {
        &self.c
    }

    fn block(&self) -> usize {
        self.rank * self.dim * self.kinds.len()
    }

    fn range(&self, i: usize, j: usize) -> std::ops::Range<usize> {
        let m = self.kinds.len();
        (i * self.dim + j) * m..(i * self.dim + j + 1) * m
    }

    pub fn alpha(&self, i: usize, j: usize) -> &[T] {
        &self.alpha[self.range(i, j)]
    }

    pub fn shifts(&self, i: usize, j: usize) -> &[T] {
        &self.shift[self.range(i, j)]
    }

    pub fn widths(&self, i: usize, j: usize) -> &[T] {
        &self.width[self.range(i, j)]
    }

    /// Mixture k_ij and its first two derivatives at x.
    pub fn factor_eval(&self, i: usize, j: usize, x: T) -> Jet<T> {
        let mut out = Jet::zero();
        for (l, idx) in self.range(i, j).enumerate() {
            let (a, s, ih) = (self.alpha[idx], self.shift[idx], self.inv_width[idx]);
            let (v, d1, d2) = self.kinds[l].eval((x - s) * ih);
            out.v += a * v;
            out.d1 += a * d1 * ih;
            out.d2 += a * d2 * ih * ih;
        }
        out
    }

    fn factor_value(&self, i: usize, j: usize, x: T) -> T {
        let mut v = T::zero();
        for (l, idx) in self.range(i, j).enumerate() {
            let u = (x - self.shift[idx]) * self.inv_width[idx];
            v += self.alpha[idx] * self.kinds[l].eval3(u)[0];
        }
        v
    }

    /// ∫_lo^hi k_ij.
    fn factor_integral(&self, i: usize, j: usize, lo: f64, hi: f64) -> f64 {
        self.range(i, j)
            .enumerate()
            .map(|(l, idx)| {
                self.alpha[idx].f64()
                    * analytic_integral_1d(self.kinds[l], self.shift[idx].f64(), self.width[idx].f64(), lo, hi)
            })
            .sum()
    }

    /// Per-(i, j) factor integrals over the domain, as used in Z.
    pub fn factor_integrals(&self) -> &[f64] {
        &self.integrals
    }

    /// (constraint hinge sum, boundary value sum), both unweighted.
    pub fn penalty_terms(&self) -> (f64, f64) {
        self.penalties(None, &PenaltyWeights { constraint: 1.0, boundary: 1.0 })
    }

    /// Penalty sums; with `grad`, adds the weighted (sub)gradient in natural coordinates.
    fn penalties(&self, mut grad: Option<&mut [T]>, w: &PenaltyWeights) -> (f64, f64) {
        let (n, d) = (self.rank, self.dim);
        let k = self.block();
        let mut constraint = 0.0;
        let mut boundary = 0.0;
        let w1 = T::of(w.constraint);
        let w2 = T::of(w.boundary);
        for i in 0..n {
            for j in 0..d {
                let (o, r) = (self.domain.center[j], self.domain.half_widths[j]);
                for idx in self.range(i, j) {
                    let (s, h) = (self.shift[idx].f64(), self.width[idx].f64());
                    let dev = s - o;
                    let a = dev.abs();
                    let sg = dev.signum() * if dev == 0.0 { 0.0 } else { 1.0 };
                    if a > r {
                        constraint += a - r;
                        if let Some(g) = grad.as_deref_mut() {
                            g[n + k + idx] += w1 * T::of(sg);
                        }
                    }
                    let gap = r - a;
                    if h > gap.abs() {
                        constraint += h - gap.abs();
                        if let Some(g) = grad.as_deref_mut() {
                            let sgap = if gap > 0.0 { 1.0 } else if gap < 0.0 { -1.0 } else { 0.0 };
                            g[n + k + idx] += w1 * T::of(sgap * sg);
                            g[n + 2 * k + idx] += w1 * self.width[idx];
                        }
                    }
                }
                for x in [o + r, o - r] {
                    let xt = T::of(x);
                    boundary += self.factor_value(i, j, xt).f64();
                    if w.boundary != 0.0 {
                        if let Some(g) = grad.as_deref_mut() {
                            self.backward(i, j, xt, Jet::new(w2, T::zero(), T::zero()), g);
                        }
                    }
                }
            }
        }
        (constraint, boundary)
    }

    /// Gradient of `adj · jet_ij(x)` into natural-coordinate slots.
    fn backward(&self, i: usize, j: usize, x: T, adj: Jet<T>, grad: &mut [T]) {
        let n = self.rank;
        let k = self.block();
        for (l, idx) in self.range(i, j).enumerate() {
            let (a, s, ih) = (self.alpha[idx], self.shift[idx], self.inv_width[idx]);
            let u = (x - s) * ih;
            let [f0, f1, f2, f3] = self.kinds[l].eval3(u);
            if f0 == T::zero() && f1 == T::zero() && f2 == T::zero() && f3 == T::zero() {
                continue;
            }
            let (b1, b2) = (adj.d1 * ih, adj.d2 * ih * ih);
            let two = T::one() + T::one();
            grad[n + idx] += adj.v * f0 + b1 * f1 + b2 * f2;
            grad[n + k + idx] -= a * ih * (adj.v * f1 + b1 * f2 + b2 * f3);
            grad[n + 2 * k + idx] -= a * (u * (adj.v * f1 + b1 * f2 + b2 * f3) + b1 * f1 + two * b2 * f2);
        }
    }

    /// Adds `scale · ∂Z/∂ψ` in natural coordinates.
    fn normalizer_backward(&self, scale: f64, grad: &mut [T]) {
        let (n, d) = (self.rank, self.dim);
        let k = self.block();
        let mut prefix = vec![1.0; d + 1];
        let mut suffix = vec![1.0; d + 1];
        for i in 0..n {
            let ints = &self.integrals[i * d..(i + 1) * d];
            for j in 0..d {
                prefix[j + 1] = prefix[j] * ints[j];
            }
            for j in (0..d).rev() {
                suffix[j] = suffix[j + 1] * ints[j];
            }
            grad[i] += T::of(scale * prefix[d]);
            let ci = self.c[i].f64();
            for j in 0..d {
                let outer = scale * ci * prefix[j] * suffix[j + 1];
                if outer == 0.0 {
                    continue;
                }
                let (lo, hi) = (self.domain.lower(j), self.domain.upper(j));
                for (l, idx) in self.range(i, j).enumerate() {
                    let kind = self.kinds[l];
                    let (a, s, h) = (self.alpha[idx].f64(), self.shift[idx].f64(), self.width[idx].f64());
                    let (ua, ub) = ((lo - s) / h, (hi - s) / h);
                    let jint = kind.integral(ua, ub);
                    let (pa, pb) = (kind.eval3(ua)[0], kind.eval3(ub)[0]);
                    grad[n + idx] += T::of(outer * h * jint);
                    grad[n + k + idx] += T::of(outer * -a * (pb - pa));
                    grad[n + 2 * k + idx] += T::of(outer * a * h * (jint - ub * pb + ua * pa));
                }
            }
        }
    }

    /// Converts natural-coordinate gradients of c and α into raw softmax coordinates.
    fn finish_gradient(&self, grad: &mut [T]) {
        let n = self.rank;
        softmax_backward(&self.c, &mut grad[..n]);
        let m = self.kinds.len();
        for g in 0..n * self.dim {
            let r = g * m..(g + 1) * m;
            softmax_backward(&self.alpha[r.clone()], &mut grad[n + r.start..n + r.end]);
        }
    }
}

impl<T: Real> TensorFactors<T> for Trbfn<T> {
    type Scratch = ();

    fn dim(&self) -> usize {
        self.dim
    }

    fn rank(&self) -> usize {
        self.rank
    }

    fn num_params(&self) -> usize {
        self.params.len()
    }

    fn weight(&self, i: usize) -> T {
        self.c[i]
    }

    fn new_scratch(&self) {}

    fn zero_jet_is_inert(&self) -> bool {
        true
    }

    fn factor_forward(&self, i: usize, j: usize, x: T, _: &mut ()) -> Jet<T> {
        self.factor_eval(i, j, x)
    }

    fn factor_backward(&self, i: usize, j: usize, x: T, adj: Jet<T>, _: &mut (), grad: &mut [T]) {
        self.backward(i, j, x, adj, grad);
    }

    fn weight_backward(&self, i: usize, g: T, grad: &mut [T]) {
        grad[i] += g;
    }
}

impl<T: Real> DensityModel<T> for Trbfn<T> {
    fn family(&self) -> ModelFamily {
        ModelFamily::Trbfn
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
                "expected {} TRBFN parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        if let Some(p) = params.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("parameter {p} is not finite")));
        }
        self.params.copy_from_slice(params);
        let (n, k, m) = (self.rank, self.block(), self.kinds.len());
        softmax(&params[..n], &mut self.c);
        for g in 0..n * self.dim {
            let r = g * m..(g + 1) * m;
            softmax(&params[n + r.start..n + r.end], &mut self.alpha[r]);
        }
        self.shift.copy_from_slice(&params[n + k..n + 2 * k]);
        for (w, &lh) in self.width.iter_mut().zip(&params[n + 2 * k..]) {
            *w = lh.exp();
        }
        if self.width.iter().any(|h| *h == T::zero() || !h.is_finite()) {
            return Err(Error::Parameter("bandwidth underflowed to zero or overflowed".into()));
        }
        for (iw, &w) in self.inv_width.iter_mut().zip(&self.width) {
            *iw = T::one() / w;
        }
        let mut z = 0.0;
        for i in 0..n {
            let mut prod = self.c[i].f64();
            for j in 0..self.dim {
                let v = self.factor_integral(i, j, self.domain.lower(j), self.domain.upper(j));
                self.integrals[i * self.dim + j] = v;
                prod *= v;
            }
            z += prod;
        }
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::DegenerateModel(format!("normalizer Z = {z}: no mass inside the domain")));
        }
        self.z = z;
        Ok(())
    }

    fn value(&self, x: &[T]) -> T {
        let mut p = T::zero();
        for i in 0..self.rank {
            let mut prod = self.c[i];
            for (j, &xj) in x.iter().enumerate() {
                prod *= self.factor_value(i, j, xj);
            }
            p += prod;
        }
        p / T::of(self.z)
    }

    fn derivatives(&self, x: &[T]) -> Derivatives<T> {
        let d = self.dim;
        let jets: Vec<Jet<T>> =
            (0..self.rank * d).map(|ij| self.factor_eval(ij / d, ij % d, x[ij % d])).collect();
        let (p, grad, hess) = assemble_derivatives(&self.c, &jets, d);
        let iz = T::one() / T::of(self.z);
        Derivatives { value: p * iz, grad: grad.into_iter().map(|g| g * iz).collect(), hess: hess.into_iter().map(|h| h * iz).collect() }
    }

    fn box_integral(&self, lo: &[f64], hi: &[f64]) -> Result<f64> {
        if lo.len() != self.dim || hi.len() != self.dim {
            return Err(Error::Input(format!("box must have dimension {}", self.dim)));
        }
        let mut total = 0.0;
        for i in 0..self.rank {
            let mut prod = self.c[i].f64();
            for j in 0..self.dim {
                prod *= self.factor_integral(i, j, lo[j], hi[j]);
            }
            total += prod;
        }
        Ok(total / self.z)
    }

    fn loss(&self, batch: &Batch<T>, weights: &PenaltyWeights, mut grad: Option<&mut [T]>) -> Result<LossBreakdown> {
        if let Some(g) = grad.as_deref_mut() {
            if g.len() != self.params.len() {
                return Err(Error::Parameter(format!("gradient buffer has {} slots, expected {}", g.len(), self.params.len())));
            }
            g.iter_mut().for_each(|v| *v = T::zero());
        }
        let (sumsq, dz) = residual_pass(self, T::of(self.z), batch, grad.as_deref_mut())?;
        if let Some(g) = grad.as_deref_mut() {
            self.normalizer_backward(dz.f64(), g);
        }
        let (constraint, boundary) = self.penalties(grad.as_deref_mut(), weights);
        if let Some(g) = grad {
            self.finish_gradient(g);
        }
        let residual = sumsq.f64();
        Ok(LossBreakdown {
            total: residual + weights.constraint * constraint + weights.boundary * boundary,
            residual,
            constraint,
            boundary,
        })
    }

    fn parameter_groups(&self) -> Option<ParameterGroups> {
        let (n, k) = (self.rank, self.block());
        Some(ParameterGroups { combination: vec![0..n + k], base: vec![n + k..n + 3 * k] })
    }
}
