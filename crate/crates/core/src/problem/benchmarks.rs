//! The five Gibbs-form benchmarks with closed-form potentials and diffusions.
//!
//! Every potential splits into independent coordinate groups of at most three
//! variables, which makes the exact normalizer a product of low-dimensional
//! Gauss–Legendre integrals.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{make_gibbs_problem, Problem};
use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::quadrature::{composite_nodes, gauss_legendre};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkId {
    /// 2D ring potential H = 2(x1² + x2² - 1)², D = 2I.
    Ring2D,
    /// 4D single mode with a state-dependent diffusion block on (x3, x4).
    UniMode4D,
    /// 6D single mode, three quartic pairs, D = 2I.
    UniMode6D,
    /// 6D four-mode potential, D = 2I.
    MultiMode6D,
    /// 10D two-mode potential, D = 2I.
    MultiMode10D,
}

impl BenchmarkId {
    pub const ALL: [BenchmarkId; 5] = [
        BenchmarkId::Ring2D,
        BenchmarkId::UniMode4D,
        BenchmarkId::UniMode6D,
        BenchmarkId::MultiMode6D,
        BenchmarkId::MultiMode10D,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BenchmarkId::Ring2D => "ring2d",
            BenchmarkId::UniMode4D => "unimode4d",
            BenchmarkId::UniMode6D => "unimode6d",
            BenchmarkId::MultiMode6D => "multimode6d",
            BenchmarkId::MultiMode10D => "multimode10d",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            BenchmarkId::Ring2D => 2,
            BenchmarkId::UniMode4D => 4,
            BenchmarkId::UniMode6D | BenchmarkId::MultiMode6D => 6,
            BenchmarkId::MultiMode10D => 10,
        }
    }

    pub fn potential(self) -> Potential {
        use Term::*;
        let quartic = || vec![QuarticPair { scale: 3.0 }];
        let groups = match self {
            BenchmarkId::Ring2D => vec![Group::new(vec![0, 1], vec![Ring { scale: 2.0 }])],
            BenchmarkId::UniMode4D => vec![
                Group::new(vec![0, 1], quartic()),
                Group::new(vec![2, 3], vec![Quadratic { scale: 2.0, cross: -0.3 }]),
            ],
            BenchmarkId::UniMode6D => vec![
                Group::new(vec![0, 1], quartic()),
                Group::new(vec![2, 3], quartic()),
                Group::new(vec![4, 5], quartic()),
            ],
            BenchmarkId::MultiMode6D => vec![
                Group::new(
                    vec![0, 1, 2],
                    vec![
                        Quadratic { scale: 2.0, cross: 0.5 },
                        LogWell { index: 0, stiffness: 1.0, offset: 0.02 },
                        LogWell { index: 1, stiffness: 1.0, offset: 0.02 },
                    ],
                ),
                Group::new(vec![3, 4, 5], vec![Quadratic { scale: 0.5, cross: 0.2 }]),
            ],
            BenchmarkId::MultiMode10D => vec![
                Group::new(vec![0, 1, 2], vec![Quadratic { scale: 2.5, cross: 0.1 }]),
                Group::new(vec![3, 4, 5], vec![Quadratic { scale: 2.0, cross: 0.2 }]),
                Group::new(vec![6, 7], vec![Quadratic { scale: 3.0, cross: -0.01 }]),
                Group::new(
                    vec![8, 9],
                    vec![
                        Quadratic { scale: 3.0, cross: -0.01 },
                        LogWell { index: 0, stiffness: 2.0, offset: 0.02 },
                    ],
                ),
            ],
        };
        Potential { dim: self.dim(), groups }
    }

    pub fn diffusion(self) -> Diffusion {
        match self {
            BenchmarkId::UniMode4D => Diffusion::CoupledBlock { dim: 4, first: 2, coupling: 0.1 },
            _ => Diffusion::Isotropic { dim: self.dim(), kappa: 2.0 },
        }
    }

    /// The Gibbs problem f = -½ D ∇H + g for this benchmark.
    pub fn problem(self) -> Problem {
        let pot = Arc::new(self.potential());
        let diff = Arc::new(self.diffusion());
        let (p1, p2, p3) = (pot.clone(), pot.clone(), pot);
        let (d1, d2, d3) = (diff.clone(), diff.clone(), diff);
        make_gibbs_problem(
            self.dim(),
            Arc::new(move |x: &[f64]| p1.value(x)),
            Arc::new(move |x: &[f64]| p2.gradient(x)),
            Arc::new(move |x: &[f64]| p3.hessian(x)),
            Arc::new(move |x: &[f64]| d1.matrix(x)),
            Arc::new(move |x: &[f64], i, j, k| d2.grad(x, i, j, k)),
            Arc::new(move |x: &[f64], i, j| d3.hess(x, i, j)),
        )
        .expect("benchmark callables are dimensionally consistent")
    }

    /// Noise matrix σ with σσᵀ = D, used by the SDE simulator.
    pub fn sigma(self, x: &[f64]) -> Vec<f64> {
        self.diffusion().sqrt(x)
    }
}

impl fmt::Display for BenchmarkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BenchmarkId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BenchmarkId::ALL
            .into_iter()
            .find(|b| b.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown benchmark `{s}`")))
    }
}

/// Additive piece of a group potential, in the group's local coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Term {
    /// scale · (x0² + x1² - 1)²
    Ring { scale: f64 },
    /// scale · ((x0⁴ - x1)² + 2 x1²)
    QuarticPair { scale: f64 },
    /// scale · (Σ x_i² + cross · Σ_{i<j} x_i x_j)
    Quadratic { scale: f64, cross: f64 },
    /// -ln(stiffness · x_index² + offset)
    LogWell { index: usize, stiffness: f64, offset: f64 },
}

impl Term {
    fn value(&self, x: &[f64]) -> f64 {
        match *self {
            Term::Ring { scale } => {
                let q = x[0] * x[0] + x[1] * x[1] - 1.0;
                scale * q * q
            }
            Term::QuarticPair { scale } => {
                let a = x[0].powi(4) - x[1];
                scale * (a * a + 2.0 * x[1] * x[1])
            }
            Term::Quadratic { scale, cross } => {
                let mut sq = 0.0;
                let mut pairs = 0.0;
                for i in 0..x.len() {
                    sq += x[i] * x[i];
                    for j in i + 1..x.len() {
                        pairs += x[i] * x[j];
                    }
                }
                scale * (sq + cross * pairs)
            }
            Term::LogWell { index, stiffness, offset } => -(stiffness * x[index] * x[index] + offset).ln(),
        }
    }

    /// Adds value, gradient and row-major Hessian into local buffers.
    fn accumulate(&self, x: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64 {
        let n = x.len();
        match *self {
            Term::Ring { scale } => {
                let q = x[0] * x[0] + x[1] * x[1] - 1.0;
                for i in 0..2 {
                    grad[i] += 4.0 * scale * q * x[i];
                    for j in 0..2 {
                        let delta = if i == j { q } else { 0.0 };
                        hess[i * n + j] += 4.0 * scale * (2.0 * x[i] * x[j] + delta);
                    }
                }
                scale * q * q
            }
            Term::QuarticPair { scale } => {
                let (u, v) = (x[0], x[1]);
                let a = u.powi(4) - v;
                grad[0] += scale * 8.0 * u.powi(3) * a;
                grad[1] += scale * (-2.0 * a + 4.0 * v);
                hess[0] += scale * (56.0 * u.powi(6) - 24.0 * u * u * v);
                hess[1] += scale * (-8.0 * u.powi(3));
                hess[n] += scale * (-8.0 * u.powi(3));
                hess[n + 1] += scale * 6.0;
                scale * (a * a + 2.0 * v * v)
            }
            Term::Quadratic { scale, cross } => {
                let total: f64 = x.iter().sum();
                for i in 0..n {
                    grad[i] += scale * (2.0 * x[i] + cross * (total - x[i]));
                    for j in 0..n {
                        hess[i * n + j] += if i == j { 2.0 * scale } else { scale * cross };
                    }
                }
                self.value(x)
            }
            Term::LogWell { index, stiffness, offset } => {
                let t = x[index];
                let s = stiffness * t * t + offset;
                grad[index] += -2.0 * stiffness * t / s;
                hess[index * n + index] += -(2.0 * stiffness * offset - 2.0 * stiffness * stiffness * t * t) / (s * s);
                -s.ln()
            }
        }
    }
}

/// Potential restricted to one group of coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub indices: Vec<usize>,
    pub terms: Vec<Term>,
}

impl Group {
    pub fn new(indices: Vec<usize>, terms: Vec<Term>) -> Self {
        Self { indices, terms }
    }

    /// Potential value at local coordinates.
    pub fn value(&self, local: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.value(local)).sum()
    }
}

/// H(x) = Σ_groups H_g(x_g).
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    pub dim: usize,
    pub groups: Vec<Group>,
}

impl Potential {
    fn local(&self, g: &Group, x: &[f64]) -> Vec<f64> {
        g.indices.iter().map(|&i| x[i]).collect()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.groups.iter().map(|g| g.value(&self.local(g, x))).sum()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.derivatives(x).1
    }

    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        self.derivatives(x).2
    }

    /// Value, gradient and row-major Hessian.
    pub fn derivatives(&self, x: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let d = self.dim;
        let mut grad = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        let mut value = 0.0;
        for g in &self.groups {
            let n = g.indices.len();
            let local = self.local(g, x);
            let mut lg = vec![0.0; n];
            let mut lh = vec![0.0; n * n];
            for t in &g.terms {
                value += t.accumulate(&local, &mut lg, &mut lh);
            }
            for (a, &ia) in g.indices.iter().enumerate() {
                grad[ia] += lg[a];
                for (b, &ib) in g.indices.iter().enumerate() {
                    hess[ia * d + ib] += lh[a * n + b];
                }
            }
        }
        (value, grad, hess)
    }
}

/// Benchmark diffusion matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Diffusion {
    /// D = κ I.
    Isotropic { dim: usize, kappa: f64 },
    /// D = 2 I plus 2V on the 2×2 block of coordinates (first, first + 1),
    /// V = coupling · x_first² · x_{first+1}².
    CoupledBlock { dim: usize, first: usize, coupling: f64 },
}

impl Diffusion {
    fn dim(&self) -> usize {
        match *self {
            Diffusion::Isotropic { dim, .. } | Diffusion::CoupledBlock { dim, .. } => dim,
        }
    }

    fn in_block(&self, i: usize) -> bool {
        match *self {
            Diffusion::CoupledBlock { first, .. } => i == first || i == first + 1,
            Diffusion::Isotropic { .. } => false,
        }
    }

    pub fn matrix(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut m = vec![0.0; d * d];
        match *self {
            Diffusion::Isotropic { kappa, .. } => {
                for i in 0..d {
                    m[i * d + i] = kappa;
                }
            }
            Diffusion::CoupledBlock { first, coupling, .. } => {
                for i in 0..d {
                    m[i * d + i] = 2.0;
                }
                let v = coupling * x[first] * x[first] * x[first + 1] * x[first + 1];
                for i in [first, first + 1] {
                    for j in [first, first + 1] {
                        m[i * d + j] += 2.0 * v;
                    }
                }
            }
        }
        m
    }

    /// ∂_k D_ij.
    pub fn grad(&self, x: &[f64], i: usize, j: usize, k: usize) -> f64 {
        match *self {
            Diffusion::Isotropic { .. } => 0.0,
            Diffusion::CoupledBlock { first, coupling, .. } => {
                if !(self.in_block(i) && self.in_block(j) && self.in_block(k)) {
                    return 0.0;
                }
                let (a, b) = (x[first], x[first + 1]);
                let dv = if k == first { 2.0 * coupling * a * b * b } else { 2.0 * coupling * a * a * b };
                2.0 * dv
            }
        }
    }

    /// ∂_i ∂_j D_ij.
    pub fn hess(&self, x: &[f64], i: usize, j: usize) -> f64 {
        match *self {
            Diffusion::Isotropic { .. } => 0.0,
            Diffusion::CoupledBlock { first, coupling, .. } => {
                if !(self.in_block(i) && self.in_block(j)) {
                    return 0.0;
                }
                let (a, b) = (x[first], x[first + 1]);
                let d2v = if i != j {
                    4.0 * coupling * a * b
                } else if i == first {
                    2.0 * coupling * b * b
                } else {
                    2.0 * coupling * a * a
                };
                2.0 * d2v
            }
        }
    }

    /// Symmetric positive square root of D.
    pub fn sqrt(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut s = vec![0.0; d * d];
        match *self {
            Diffusion::Isotropic { kappa, .. } => {
                let k = kappa.sqrt();
                for i in 0..d {
                    s[i * d + i] = k;
                }
            }
            Diffusion::CoupledBlock { first, .. } => {
                let m = self.matrix(x);
                for i in 0..d {
                    s[i * d + i] = 2f64.sqrt();
                }
                let (p, q) = (first, first + 1);
                let (a, b, c) = (m[p * d + p], m[p * d + q], m[q * d + q]);
                // sqrt(M) = (M + √det I) / √(tr M + 2√det M) for 2×2 SPD M
                let sdet = (a * c - b * b).sqrt();
                let t = (a + c + 2.0 * sdet).sqrt();
                s[p * d + p] = (a + sdet) / t;
                s[q * d + q] = (c + sdet) / t;
                s[p * d + q] = b / t;
                s[q * d + p] = b / t;
            }
        }
        s
    }
}

/// Panel cap for the normalizer refinement (points per dimension = panels · 16).
const MAX_NORMALIZER_POINTS: usize = 1 << 25;
const NORMALIZER_RTOL: f64 = 1e-10;

fn group_integral(group: &Group, lo: &[f64], hi: &[f64], panels: usize) -> f64 {
    let rule = gauss_legendre(16).expect("16-point rule");
    let grids: Vec<(Vec<f64>, Vec<f64>)> =
        lo.iter().zip(hi).map(|(&a, &b)| composite_nodes(&rule, a, b, panels)).collect();
    let n = grids.len();
    let len = grids[0].0.len();
    let mut idx = vec![0usize; n];
    let mut local = vec![0.0; n];
    let mut total = 0.0;
    loop {
        let mut w = 1.0;
        for k in 0..n {
            local[k] = grids[k].0[idx[k]];
            w *= grids[k].1[idx[k]];
        }
        total += w * (-group.value(&local)).exp();
        let mut k = n;
        loop {
            if k == 0 {
                return total;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < len {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// ∫_domain exp(-H) as a product of per-group integrals, each refined by
/// doubling the panel count until the relative change drops below 1e-10.
pub fn exact_normalizer(benchmark: BenchmarkId, domain: &Domain) -> Result<f64> {
    potential_normalizer(&benchmark.potential(), domain)
}

pub fn potential_normalizer(potential: &Potential, domain: &Domain) -> Result<f64> {
    if domain.dim() != potential.dim {
        return Err(Error::Input(format!(
            "domain dimension {} does not match potential dimension {}",
            domain.dim(),
            potential.dim
        )));
    }
    let mut z = 1.0;
    for g in &potential.groups {
        let lo: Vec<f64> = g.indices.iter().map(|&i| domain.lower(i)).collect();
        let hi: Vec<f64> = g.indices.iter().map(|&i| domain.upper(i)).collect();
        let mut panels = 1usize;
        let mut prev = group_integral(g, &lo, &hi, panels);
        loop {
            panels *= 2;
            if (panels * 16).pow(g.indices.len() as u32) > MAX_NORMALIZER_POINTS {
                return Err(Error::Integration(format!(
                    "group {:?} did not reach relative change {NORMALIZER_RTOL} before the panel cap",
                    g.indices
                )));
            }
            let next = group_integral(g, &lo, &hi, panels);
            let done = (next - prev).abs() <= NORMALIZER_RTOL * next.abs();
            prev = next;
            if done {
                break;
            }
        }
        z *= prev;
    }
    Ok(z)
}

/// exp(-H(x)) / normalization.
pub fn exact_density(benchmark: BenchmarkId, x: &[f64], normalization: f64) -> f64 {
    (-benchmark.potential().value(x)).exp() / normalization
}

/// Exact stationary density of a benchmark, normalized on a given domain.
#[derive(Debug, Clone)]
pub struct ExactSolution {
    pub benchmark: BenchmarkId,
    pub potential: Potential,
    pub normalizer: f64,
}

impl ExactSolution {
    pub fn new(benchmark: BenchmarkId, domain: &Domain) -> Result<Self> {
        let potential = benchmark.potential();
        let normalizer = potential_normalizer(&potential, domain)?;
        Ok(Self { benchmark, potential, normalizer })
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        (-self.potential.value(x)).exp() / self.normalizer
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central_grad(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|k| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[k] += h;
                xm[k] -= h;
                (f(&xp) - f(&xm)) / (2.0 * h)
            })
            .collect()
    }

    fn lcg(state: &mut u64) -> f64 {
        *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*state >> 11) as f64) / ((1u64 << 53) as f64)
    }

    #[test]
    fn parse_ids() {
        for b in BenchmarkId::ALL {
            assert_eq!(b.as_str().parse::<BenchmarkId>().unwrap(), b);
        }
        assert!("ring3d".parse::<BenchmarkId>().is_err());
    }

    #[test]
    fn ring_drift_closed_form() {
        let pb = BenchmarkId::Ring2D.problem();
        let f = (pb.drift)(&[1.0, 0.0]);
        assert!(f[0].abs() < 1e-15 && f[1].abs() < 1e-15);
        let x = [0.3, -1.2];
        let rho = x[0] * x[0] + x[1] * x[1];
        let f = (pb.drift)(&x);
        assert!((f[0] + 8.0 * x[0] * (rho - 1.0)).abs() < 1e-13);
        assert!((f[1] + 8.0 * x[1] * (rho - 1.0)).abs() < 1e-13);
    }

    #[test]
    fn unimode4d_correction_term() {
        // g_3 = ∂_3 (D_33 / 2) + ∂_4 (D_34 / 2) = 0.2 x3 x4² + 0.2 x3² x4
        let diff = BenchmarkId::UniMode4D.diffusion();
        let mut s = 7u64;
        for _ in 0..100 {
            let x: Vec<f64> = (0..4).map(|_| 4.0 * lcg(&mut s) - 2.0).collect();
            let g2 = 0.5 * (diff.grad(&x, 2, 2, 2) + diff.grad(&x, 2, 3, 3));
            let want = 0.2 * x[2] * x[3] * x[3] + 0.2 * x[2] * x[2] * x[3];
            assert!((g2 - want).abs() < 1e-12);
            // cross-check the derivative table by finite differences of D
            for i in 0..4 {
                for j in 0..4 {
                    let dij = |y: &[f64]| diff.matrix(y)[i * 4 + j];
                    let fd = central_grad(&dij, &x, 1e-5);
                    for k in 0..4 {
                        assert!((fd[k] - diff.grad(&x, i, j, k)).abs() < 1e-7);
                    }
                    let fd2 = {
                        let h = 1e-4;
                        let mut pp = x.clone();
                        let mut pm = x.clone();
                        let mut mp = x.clone();
                        let mut mm = x.clone();
                        pp[i] += h;
                        pp[j] += h;
                        pm[i] += h;
                        pm[j] -= h;
                        mp[i] -= h;
                        mp[j] += h;
                        mm[i] -= h;
                        mm[j] -= h;
                        (dij(&pp) - dij(&pm) - dij(&mp) + dij(&mm)) / (4.0 * h * h)
                    };
                    assert!((fd2 - diff.hess(&x, i, j)).abs() < 1e-5, "i={i} j={j}");
                }
            }
        }
    }

    #[test]
    fn sigma_squares_to_diffusion() {
        let diff = BenchmarkId::UniMode4D.diffusion();
        let x = [0.1, 0.2, 1.3, -0.8];
        let s = diff.sqrt(&x);
        let m = diff.matrix(&x);
        for i in 0..4 {
            for j in 0..4 {
                let v: f64 = (0..4).map(|k| s[i * 4 + k] * s[j * 4 + k]).sum();
                assert!((v - m[i * 4 + j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn potential_derivatives_match_finite_differences() {
        let mut s = 11u64;
        for b in BenchmarkId::ALL {
            let pot = b.potential();
            for _ in 0..20 {
                let x: Vec<f64> = (0..b.dim()).map(|_| 3.0 * lcg(&mut s) - 1.5).collect();
                let (_, g, h) = pot.derivatives(&x);
                let fd = central_grad(&|y| pot.value(y), &x, 1e-5);
                for k in 0..b.dim() {
                    assert!((fd[k] - g[k]).abs() <= 1e-6 * (1.0 + g[k].abs()), "{b} grad {k}");
                }
                for k in 0..b.dim() {
                    let gk = |y: &[f64]| pot.gradient(y)[k];
                    let fd = central_grad(&gk, &x, 1e-5);
                    for l in 0..b.dim() {
                        let hv = h[k * b.dim() + l];
                        assert!((fd[l] - hv).abs() <= 1e-6 * (1.0 + hv.abs()), "{b} hess {k}{l}");
                    }
                }
            }
        }
    }

    #[test]
    fn div_drift_matches_finite_differences() {
        let mut s = 3u64;
        for b in BenchmarkId::ALL {
            let pb = b.problem();
            for _ in 0..20 {
                let x: Vec<f64> = (0..b.dim()).map(|_| 2.0 * lcg(&mut s) - 1.0).collect();
                let h = 1e-5;
                let mut fd = 0.0;
                for i in 0..b.dim() {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    fd += ((pb.drift)(&xp)[i] - (pb.drift)(&xm)[i]) / (2.0 * h);
                }
                let div = (pb.div_drift)(&x);
                assert!((fd - div).abs() <= 1e-6 * div.abs().max(1.0), "{b}: {fd} vs {div}");
            }
        }
    }

    #[test]
    fn flat_potential_normalizer_is_volume() {
        let pot = Potential { dim: 3, groups: vec![Group::new(vec![0, 1, 2], vec![])] };
        let dom = Domain::new(vec![0.5, -1.0, 2.0], vec![1.0, 0.5, 2.0]).unwrap();
        let z = potential_normalizer(&pot, &dom).unwrap();
        assert!((z - 2.0 * 1.0 * 4.0).abs() < 1e-12);
    }

    #[test]
    fn separable_gaussian_normalizer() {
        let d = 4;
        let pot = Potential {
            dim: d,
            groups: (0..d)
                .map(|i| Group::new(vec![i], vec![Term::Quadratic { scale: 0.5, cross: 0.0 }]))
                .collect(),
        };
        let dom = Domain::isotropic(vec![0.0; d], 12.0).unwrap();
        let z = potential_normalizer(&pot, &dom).unwrap();
        let want = (2.0 * std::f64::consts::PI).powf(d as f64 / 2.0);
        assert!((z - want).abs() <= 1e-10 * want);
    }

    #[test]
    fn ring_normalizer_matches_refined_simpson() {
        let dom = Domain::new(vec![-0.0056, 0.0026], vec![2.1467, 2.1467]).unwrap();
        let z = exact_normalizer(BenchmarkId::Ring2D, &dom).unwrap();
        let pot = BenchmarkId::Ring2D.potential();
        let simpson = |n: usize| {
            let (ax, bx) = (dom.lower(0), dom.upper(0));
            let (ay, by) = (dom.lower(1), dom.upper(1));
            let hx = (bx - ax) / n as f64;
            let hy = (by - ay) / n as f64;
            let w = |i: usize| if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            let mut s = 0.0;
            for i in 0..=n {
                for j in 0..=n {
                    let x = [ax + i as f64 * hx, ay + j as f64 * hy];
                    s += w(i) * w(j) * (-pot.value(&x)).exp();
                }
            }
            s * hx * hy / 9.0
        };
        let coarse = simpson(800);
        let fine = simpson(1600);
        // Richardson estimate for a fourth-order rule
        let extrapolated = fine + (fine - coarse) / 15.0;
        assert!((fine - coarse).abs() < 1e-8 * fine);
        assert!((z - extrapolated).abs() < 1e-10 * z, "{z} vs {extrapolated}");
    }

    #[test]
    fn ring_exact_density_properties() {
        let z = 1.7;
        let a = exact_density(BenchmarkId::Ring2D, &[1.0, 0.0], z);
        let b = exact_density(BenchmarkId::Ring2D, &[0.0, 1.0], z);
        let c = exact_density(BenchmarkId::Ring2D, &[0.0, 0.0], z);
        assert!((a - b).abs() < 1e-15);
        assert!((a / c - 2f64.exp()).abs() < 1e-12);
        // the ring is the maximizer
        for k in 0..50 {
            let t = 0.04 * k as f64;
            assert!(exact_density(BenchmarkId::Ring2D, &[t, 0.3 * t], z) <= a + 1e-15);
        }
    }
}
