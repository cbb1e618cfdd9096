//! Numerical support: SDE-based estimation of the bounding hyperrectangle and
//! its refinement from a trained model's sub-box integrals.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{BenchmarkId, Problem};
use crate::rng::stream_rng;

/// Hyperrectangle ⊗_j [O_j - r_j, O_j + r_j].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub center: Vec<f64>,
    pub half_widths: Vec<f64>,
}

impl Domain {
    pub fn new(center: Vec<f64>, half_widths: Vec<f64>) -> Result<Self> {
        if center.is_empty() || center.len() != half_widths.len() {
            return Err(Error::DegenerateDomain(format!(
                "center has {} entries, half-widths {}",
                center.len(),
                half_widths.len()
            )));
        }
        if let Some(j) = half_widths.iter().position(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::DegenerateDomain(format!("half-width {j} is {}", half_widths[j])));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::DegenerateDomain("non-finite center".into()));
        }
        Ok(Self { center, half_widths })
    }

    /// Cube with half-edge `r` in every dimension.
    pub fn isotropic(center: Vec<f64>, r: f64) -> Result<Self> {
        let d = center.len();
        Self::new(center, vec![r; d])
    }

    /// Same center, isotropic half-edge `r`.
    pub fn with_radius(&self, r: f64) -> Result<Self> {
        Self::isotropic(self.center.clone(), r)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn lower(&self, j: usize) -> f64 {
        self.center[j] - self.half_widths[j]
    }

    pub fn upper(&self, j: usize) -> f64 {
        self.center[j] + self.half_widths[j]
    }

    pub fn lower_corner(&self) -> Vec<f64> {
        (0..self.dim()).map(|j| self.lower(j)).collect()
    }

    pub fn upper_corner(&self) -> Vec<f64> {
        (0..self.dim()).map(|j| self.upper(j)).collect()
    }

    pub fn volume(&self) -> f64 {
        self.half_widths.iter().map(|r| 2.0 * r).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && (0..self.dim()).all(|j| x[j] >= self.lower(j) && x[j] <= self.upper(j))
    }

    /// Largest half-width; equals B for isotropic domains.
    pub fn max_half_width(&self) -> f64 {
        self.half_widths.iter().cloned().fold(0.0, f64::max)
    }
}

/// Euler–Maruyama settings for the support estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdeSimConfig {
    pub step_size: f64,
    pub burnin_steps: usize,
    pub terminal_steps: usize,
    pub num_trajectories: usize,
    pub margin_factor: f64,
    pub seed: u64,
}

impl Default for SdeSimConfig {
    fn default() -> Self {
        Self {
            step_size: 1e-3,
            burnin_steps: 1_000_000,
            terminal_steps: 1_500_000,
            num_trajectories: 10,
            margin_factor: 1.1,
            seed: 0,
        }
    }
}

impl SdeSimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config(format!("step size must be positive, got {}", self.step_size)));
        }
        if self.burnin_steps == 0 || self.burnin_steps >= self.terminal_steps {
            return Err(Error::Config(format!(
                "need 0 < burnin_steps < terminal_steps, got {} and {}",
                self.burnin_steps, self.terminal_steps
            )));
        }
        if self.num_trajectories == 0 {
            return Err(Error::Config("at least one trajectory is required".into()));
        }
        if !(self.margin_factor > 1.0) {
            return Err(Error::Config(format!("margin factor must exceed 1, got {}", self.margin_factor)));
        }
        Ok(())
    }

    pub fn retained_per_trajectory(&self) -> usize {
        self.terminal_steps - self.burnin_steps
    }
}

/// Noise matrix σ(x), row-major d×d, with σσᵀ = D.
pub type SigmaFn<'a> = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync + 'a;

/// Running componentwise sum, minimum and maximum of a point stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStats {
    pub count: usize,
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl SampleStats {
    pub fn new(dim: usize) -> Self {
        Self { count: 0, sum: vec![0.0; dim], sum_sq: vec![0.0; dim], min: vec![f64::INFINITY; dim], max: vec![f64::NEG_INFINITY; dim] }
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let first = points.first().ok_or_else(|| Error::Input("empty trajectory point set".into()))?;
        let mut s = Self::new(first.len());
        for p in points {
            s.push(p);
        }
        Ok(s)
    }

    pub fn push(&mut self, x: &[f64]) {
        self.count += 1;
        for j in 0..x.len() {
            self.sum[j] += x[j];
            self.sum_sq[j] += x[j] * x[j];
            self.min[j] = self.min[j].min(x[j]);
            self.max[j] = self.max[j].max(x[j]);
        }
    }

    /// Appends `other`; sums are added in call order, so merging in a fixed
    /// order is deterministic.
    pub fn merge(&mut self, other: &SampleStats) {
        self.count += other.count;
        for j in 0..self.sum.len() {
            self.sum[j] += other.sum[j];
            self.sum_sq[j] += other.sum_sq[j];
            self.min[j] = self.min[j].min(other.min[j]);
            self.max[j] = self.max[j].max(other.max[j]);
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        self.sum.iter().map(|s| s / self.count as f64).collect()
    }

    /// Population variance per coordinate.
    pub fn variance(&self) -> Vec<f64> {
        let n = self.count as f64;
        (0..self.sum.len()).map(|j| self.sum_sq[j] / n - (self.sum[j] / n).powi(2)).collect()
    }

    /// max_i |O_j - z_ij| per coordinate, around `center`.
    pub fn max_deviation(&self, center: &[f64]) -> Vec<f64> {
        (0..center.len()).map(|j| (center[j] - self.min[j]).max(self.max[j] - center[j])).collect()
    }
}

fn simulate_trajectory(
    problem: &Problem,
    sigma: &SigmaFn<'_>,
    z0: &[f64],
    config: &SdeSimConfig,
    k: usize,
    visit: &mut dyn FnMut(&[f64]),
) -> Result<()> {
    let d = problem.dim;
    let mut rng = stream_rng(config.seed, k as u64);
    let sqrt_h = config.step_size.sqrt();
    let mut z = z0.to_vec();
    let mut noise = vec![0.0; d];
    for step in 1..=config.terminal_steps {
        let f = (problem.drift)(&z);
        let s = sigma(&z);
        for n in noise.iter_mut() {
            let xi: f64 = StandardNormal.sample(&mut rng);
            *n = sqrt_h * xi;
        }
        for i in 0..d {
            let mut dz = f[i] * config.step_size;
            for (l, n) in noise.iter().enumerate() {
                dz += s[i * d + l] * n;
            }
            z[i] += dz;
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { trajectory: k, step });
        }
        if step > config.burnin_steps {
            visit(&z);
        }
    }
    Ok(())
}

fn check_starts(problem: &Problem, starts: &[Vec<f64>], config: &SdeSimConfig) -> Result<()> {
    config.validate()?;
    if starts.len() != config.num_trajectories {
        return Err(Error::Input(format!(
            "{} initial points for {} trajectories",
            starts.len(),
            config.num_trajectories
        )));
    }
    if starts.iter().any(|z| z.len() != problem.dim) {
        return Err(Error::Input(format!("initial points must have dimension {}", problem.dim)));
    }
    Ok(())
}

/// Q copies of the origin, the default initial set.
pub fn origin_starts(dim: usize, q: usize) -> Vec<Vec<f64>> {
    vec![vec![0.0; dim]; q]
}

/// Runs Q independent trajectories z ← z + f h + σ Δβ and returns the points
/// of steps burnin+1..=terminal, trajectory-major.
pub fn euler_maruyama(
    problem: &Problem,
    sigma: &SigmaFn<'_>,
    starts: &[Vec<f64>],
    config: &SdeSimConfig,
) -> Result<Vec<Vec<f64>>> {
    check_starts(problem, starts, config)?;
    let per: Vec<Result<Vec<Vec<f64>>>> = starts
        .par_iter()
        .enumerate()
        .map(|(k, z0)| {
            let mut out = Vec::with_capacity(config.retained_per_trajectory());
            simulate_trajectory(problem, sigma, z0, config, k, &mut |z| out.push(z.to_vec()))?;
            Ok(out)
        })
        .collect();
    let mut all = Vec::with_capacity(config.num_trajectories * config.retained_per_trajectory());
    for r in per {
        all.extend(r?);
    }
    Ok(all)
}

/// Same simulation as [`euler_maruyama`] but keeps only sum/min/max, so
/// full-scale runs (millions of retained points) fit in memory.
pub fn simulate_stats(
    problem: &Problem,
    sigma: &SigmaFn<'_>,
    starts: &[Vec<f64>],
    config: &SdeSimConfig,
) -> Result<SampleStats> {
    check_starts(problem, starts, config)?;
    let per: Vec<Result<SampleStats>> = starts
        .par_iter()
        .enumerate()
        .map(|(k, z0)| {
            let mut st = SampleStats::new(problem.dim);
            simulate_trajectory(problem, sigma, z0, config, k, &mut |z| st.push(z))?;
            Ok(st)
        })
        .collect();
    let mut total = SampleStats::new(problem.dim);
    for st in per {
        total.merge(&st?);
    }
    Ok(total)
}

/// Center, margin-scaled radius B and isotropic domain from accumulated statistics.
pub fn domain_from_stats(stats: &SampleStats, margin: f64) -> Result<(Vec<f64>, f64, Domain)> {
    if stats.count == 0 {
        return Err(Error::Input("empty trajectory point set".into()));
    }
    let center = stats.mean();
    let b = margin * stats.max_deviation(&center).into_iter().fold(0.0, f64::max);
    if !(b > 0.0) {
        return Err(Error::DegenerateDomain(format!(
            "all trajectory points coincide, so B = {b}"
        )));
    }
    let domain = Domain::isotropic(center.clone(), b)?;
    Ok((center, b, domain))
}

/// O = mean of Ξ, B = C · max_j max_i |O_j - z_ij|, isotropic domain of half-edge B.
pub fn estimate_domain(points: &[Vec<f64>], margin: f64) -> Result<(Vec<f64>, f64, Domain)> {
    domain_from_stats(&SampleStats::from_points(points)?, margin)
}

pub fn anisotropic_from_stats(stats: &SampleStats) -> Result<Domain> {
    if stats.count == 0 {
        return Err(Error::Input("empty trajectory point set".into()));
    }
    let center = stats.mean();
    let r = stats.max_deviation(&center);
    Domain::new(center, r)
}

/// Per-dimension half-widths r_j = max_i |O_j - z_ij|, without margin.
pub fn estimate_domain_anisotropic(points: &[Vec<f64>]) -> Result<Domain> {
    anisotropic_from_stats(&SampleStats::from_points(points)?)
}

/// Outcome of the support refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub radius: f64,
    /// (candidate, sub-box integral) in ascending candidate order.
    pub table: Vec<(f64, f64)>,
    pub fell_back: bool,
}

/// Smallest candidate r whose centered sub-box integral exceeds
/// `threshold - tolerance`; B when none does.
///
/// `tolerance` is 0 for exact comparisons; tables printed to k decimals need
/// half a unit in the last place to reproduce their stated choices.
pub fn refine_domain<F>(
    mut integral: F,
    fallback: f64,
    candidates: &[f64],
    threshold: f64,
    tolerance: f64,
) -> Result<Refinement>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut sorted = candidates.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut table = Vec::with_capacity(sorted.len());
    let mut chosen = None;
    for r in sorted {
        let v = integral(r)?;
        table.push((r, v));
        if chosen.is_none() && v > threshold - tolerance {
            chosen = Some(r);
        }
    }
    Ok(Refinement { radius: chosen.unwrap_or(fallback), table, fell_back: chosen.is_none() })
}

/// Published support settings for each benchmark: the candidate set S_n, the
/// threshold ϑ and the reference supports found by the SDE estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportDefaults {
    pub center: Vec<f64>,
    pub radius: f64,
    /// Per-dimension half-widths when the support is anisotropic.
    pub half_widths: Option<Vec<f64>>,
    pub candidates: Vec<f64>,
    pub threshold: f64,
}

fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step).round() as usize;
    (0..=n).map(|k| ((start + k as f64 * step) * 1e6).round() / 1e6).collect()
}

impl BenchmarkId {
    pub fn support_defaults(self) -> SupportDefaults {
        let d = self.dim();
        match self {
            BenchmarkId::Ring2D => SupportDefaults {
                center: vec![-0.0056, 0.0026],
                radius: 2.1467,
                half_widths: None,
                candidates: vec![],
                threshold: 0.999,
            },
            BenchmarkId::UniMode4D => SupportDefaults {
                center: vec![-0.0043, 0.1048, 0.0044, 0.0081],
                radius: 2.6472,
                half_widths: None,
                candidates: grid(0.4, 2.4, 0.4),
                threshold: 0.999,
            },
            BenchmarkId::UniMode6D => SupportDefaults {
                center: vec![0.0; d],
                radius: 1.5191,
                half_widths: None,
                candidates: grid(0.2, 1.4, 0.2),
                threshold: 0.99,
            },
            BenchmarkId::MultiMode6D => SupportDefaults {
                center: vec![-0.0322, 0.0598, -0.0045, 0.0197, -0.0036, 0.0054],
                radius: 5.2872,
                half_widths: None,
                candidates: grid(1.2, 5.2, 0.4),
                threshold: 0.97,
            },
            // only the first five center coordinates are tabulated; the rest stay 0
            BenchmarkId::MultiMode10D => SupportDefaults {
                center: vec![0.0017, -0.0016, -0.0026, -0.0025, 0.0058, 0.0, 0.0, 0.0, 0.0, 0.0],
                radius: 2.8580,
                half_widths: Some(vec![
                    2.2911, 2.1985, 2.17, 2.4365, 2.622, 2.3835, 2.2343, 1.875, 2.1955, 2.0016,
                ]),
                candidates: grid(0.3, 2.4, 0.3),
                threshold: 0.97,
            },
        }
    }

    /// Reference support as a [`Domain`].
    pub fn reference_domain(self) -> Domain {
        let s = self.support_defaults();
        let r = s.half_widths.unwrap_or_else(|| vec![s.radius; self.dim()]);
        Domain::new(s.center, r).expect("reference supports are valid")
    }
}
