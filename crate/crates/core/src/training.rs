//! Collocation batches, the discrete residual loss and the epoch loop.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::model::{DensityModel, LossBreakdown, PenaltyWeights};
use crate::optim::{poly_lr, two_step_schedule, LrSchedule, Optimizer, OptimizerConfig, TwoStepPhase};
use crate::problem::Problem;
use crate::rng::{derive_seed, stream_rng};
use crate::scalar::Real;
use crate::tensor::{Batch, PointOperator};

/// Settings of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub penalty: PenaltyWeights,
    pub optimizer: OptimizerConfig,
    pub schedule: LrSchedule,
    /// Phase length of alternating combination/base training; None trains all parameters.
    pub two_step: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100_000,
            batch_size: 5000,
            penalty: PenaltyWeights { constraint: 50_000.0, boundary: 100.0 },
            optimizer: OptimizerConfig::default(),
            schedule: LrSchedule::default(),
            two_step: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.penalty.constraint >= 0.0 && self.penalty.boundary >= 0.0) {
            return Err(Error::Config("penalty weights must be nonnegative".into()));
        }
        if self.two_step == Some(0) {
            return Err(Error::Config("two-step phase length must be positive".into()));
        }
        Ok(())
    }

    /// Learning rate at `epoch`; the two-step schedule restarts with every phase.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        match self.two_step {
            Some(phase) => poly_lr(&LrSchedule { total_steps: phase, ..self.schedule }, epoch % phase),
            None => poly_lr(&self.schedule, epoch),
        }
    }
}

/// M i.i.d. uniform points on the domain, row-major.
pub fn sample_uniform<R: Rng + ?Sized>(domain: &Domain, m: usize, rng: &mut R) -> Vec<f64> {
    let d = domain.dim();
    let mut pts = Vec::with_capacity(m * d);
    for _ in 0..m {
        for j in 0..d {
            pts.push(rng.random_range(domain.lower(j)..domain.upper(j)));
        }
    }
    pts
}

/// Batch of `points` (row-major) with the operator coefficients of `problem`.
pub fn build_batch<T: Real>(problem: &Problem, points: Vec<f64>) -> Result<Batch<T>> {
    let d = problem.dim;
    if points.len() % d != 0 {
        return Err(Error::Input(format!("point buffer of length {} is not a multiple of {d}", points.len())));
    }
    let ops: Vec<PointOperator<T>> = points
        .par_chunks(d)
        .map(|x| {
            let c = problem.coefficients(x);
            PointOperator::from_f64(c.zeroth, &c.first, &c.second)
        })
        .collect();
    Ok(Batch { dim: d, points: points.iter().map(|&v| T::of(v)).collect(), ops, points_f64: points })
}

/// Batch used at `epoch`: its own random stream, so a resumed run sees the same points.
pub fn epoch_batch<T: Real>(problem: &Problem, domain: &Domain, size: usize, seed: u64, epoch: usize) -> Result<Batch<T>> {
    let mut rng = stream_rng(derive_seed(seed, "batch"), epoch as u64);
    build_batch(problem, sample_uniform(domain, size, &mut rng))
}

/// Σ_b (L p(x_b))² computed from the model's spatial derivatives alone; the
/// reference for any model, including ones without parameter gradients.
pub fn residual_sum<T: Real, M: DensityModel<T> + ?Sized>(model: &M, batch: &Batch<T>) -> Result<f64> {
    let d = batch.dim;
    let mut total = 0.0;
    for (b, op) in batch.ops.iter().enumerate() {
        let der = model.derivatives(&batch.points[b * d..(b + 1) * d]);
        let mut r = op.w0 * der.value;
        for a in 0..d {
            r += op.w1[a] * der.grad[a];
            for c in 0..d {
                r += op.w2[a * d + c] * der.hess[a * d + c];
            }
        }
        if !r.is_finite() {
            return Err(Error::NonFiniteResidual { index: b, point: batch.points_f64[b * d..(b + 1) * d].to_vec() });
        }
        total += r.f64() * r.f64();
    }
    Ok(total)
}

/// Loss of `model` on `batch`: residual sum of squares plus weighted penalties.
pub fn loss<T: Real, M: DensityModel<T> + ?Sized>(model: &M, batch: &Batch<T>, weights: &PenaltyWeights) -> Result<LossBreakdown> {
    model.loss(batch, weights, None)
}

/// One row of the loss history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub loss: LossBreakdown,
}

/// Resumable training position: the next epoch and the optimizer buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T> {
    pub epoch: usize,
    pub optimizer: Optimizer<T>,
}

impl<T: Real> TrainState<T> {
    pub fn new(config: &TrainConfig, num_params: usize) -> Self {
        Self { epoch: 0, optimizer: Optimizer::new(config.optimizer, num_params) }
    }
}

/// Runs epochs `state.epoch..config.epochs`: sample a batch, take the exact
/// loss gradient, step the optimizer. `on_epoch` sees every record after the
/// update it describes.
pub fn train<T, M, F>(model: &mut M, problem: &Problem, config: &TrainConfig, state: &mut TrainState<T>, mut on_epoch: F) -> Result<Vec<EpochRecord>>
where
    T: Real,
    M: DensityModel<T>,
    F: FnMut(&EpochRecord, &M, &TrainState<T>) -> Result<()>,
{
    config.validate()?;
    if problem.dim != model.dim() {
        return Err(Error::Config(format!("problem dimension {} but model dimension {}", problem.dim, model.dim())));
    }
    let groups = model.parameter_groups();
    if config.two_step.is_some() && groups.is_none() {
        return Err(Error::Config("two-step training needs a model with combination/base groups".into()));
    }
    let mut history = Vec::with_capacity(config.epochs.saturating_sub(state.epoch));
    let mut grad = vec![T::zero(); model.num_params()];
    let mut params = model.params().to_vec();
    while state.epoch < config.epochs {
        let epoch = state.epoch;
        let diverged = |detail: String| Error::TrainingDivergence { epoch, detail };
        let batch = epoch_batch::<T>(problem, model.domain(), config.batch_size, config.seed, epoch)?;
        let loss = model.loss(&batch, &config.penalty, Some(&mut grad)).map_err(|e| diverged(e.to_string()))?;
        if !loss.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(diverged(format!("loss {}", loss.total)));
        }
        let lr = config.learning_rate(epoch);
        let active = match (config.two_step, &groups) {
            (Some(phase), Some(g)) => Some(match two_step_schedule(epoch, phase) {
                TwoStepPhase::Combination => g.combination.clone(),
                TwoStepPhase::Base => g.base.clone(),
            }),
            _ => None,
        };
        params.copy_from_slice(model.params());
        state.optimizer.step(&mut params, &grad, T::of(lr), active.as_deref());
        model.set_params(&params).map_err(|e| diverged(e.to_string()))?;
        state.epoch += 1;
        let rec = EpochRecord { epoch, lr, loss };
        on_epoch(&rec, model, state)?;
        history.push(rec);
    }
    Ok(history)
}
