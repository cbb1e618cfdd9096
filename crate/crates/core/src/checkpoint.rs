//! Serializable snapshot of a model and its training position.
//!
//! Parameters and optimizer buffers are stored as f64, which holds every f32
//! exactly, so save → load is bit-exact in either precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::model::{DensityModel, ModelFamily};
use crate::optim::{Optimizer, OptimizerConfig};
use crate::scalar::{Precision, Real};
use crate::tffn::Tffn;
use crate::training::TrainState;
use crate::trbfn::{RbfKind, Trbfn};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Architecture of the stored model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Architecture {
    Trbfn { rank: usize, kinds: Vec<RbfKind> },
    Tffn { rank: usize, hidden: Vec<usize>, panels: usize, points: usize },
}

impl Architecture {
    pub fn family(&self) -> ModelFamily {
        match self {
            Architecture::Trbfn { .. } => ModelFamily::Trbfn,
            Architecture::Tffn { .. } => ModelFamily::Tffn,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSnapshot {
    pub config: OptimizerConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub precision: Precision,
    pub architecture: Architecture,
    pub domain: Domain,
    pub params: Vec<f64>,
    /// Next epoch to run.
    pub epoch: usize,
    pub optimizer: Option<OptimizerSnapshot>,
}

fn widen<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.f64()).collect()
}

fn narrow<T: Real>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::of(x)).collect()
}

impl Checkpoint {
    fn build<T: Real>(architecture: Architecture, domain: &Domain, params: &[T], state: Option<&TrainState<T>>) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            precision: T::PRECISION,
            architecture,
            domain: domain.clone(),
            params: widen(params),
            epoch: state.map_or(0, |s| s.epoch),
            optimizer: state.map(|s| OptimizerSnapshot {
                config: s.optimizer.config,
                m: widen(&s.optimizer.m),
                v: widen(&s.optimizer.v),
                steps: s.optimizer.steps,
            }),
        }
    }

    pub fn from_trbfn<T: Real>(model: &Trbfn<T>, state: Option<&TrainState<T>>) -> Self {
        let arch = Architecture::Trbfn { rank: model.rank(), kinds: model.kinds().to_vec() };
        Self::build(arch, model.domain(), model.params(), state)
    }

    pub fn from_tffn<T: Real>(model: &Tffn<T>, state: Option<&TrainState<T>>) -> Self {
        let (panels, points) = model.quadrature();
        let arch = Architecture::Tffn { rank: model.rank(), hidden: model.hidden().to_vec(), panels, points };
        Self::build(arch, model.domain(), model.params(), state)
    }

    fn check<T: Real>(&self, family: ModelFamily) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Input(format!("unsupported checkpoint version {}", self.version)));
        }
        if self.architecture.family() != family {
            return Err(Error::Input(format!(
                "checkpoint holds a {} model, expected {}",
                self.architecture.family().as_str(),
                family.as_str()
            )));
        }
        if self.precision != T::PRECISION {
            return Err(Error::Input(format!(
                "checkpoint precision is {}, requested {}",
                self.precision.as_str(),
                T::PRECISION.as_str()
            )));
        }
        Ok(())
    }

    pub fn train_state<T: Real>(&self, num_params: usize) -> Result<Option<TrainState<T>>> {
        self.optimizer
            .as_ref()
            .map(|o| {
                let opt = Optimizer::from_state(o.config, num_params, narrow(&o.m), narrow(&o.v), o.steps)?;
                Ok(TrainState { epoch: self.epoch, optimizer: opt })
            })
            .transpose()
    }

    pub fn to_trbfn<T: Real>(&self) -> Result<Trbfn<T>> {
        self.check::<T>(ModelFamily::Trbfn)?;
        let Architecture::Trbfn { rank, kinds } = &self.architecture else { unreachable!() };
        Trbfn::from_params(*rank, kinds.clone(), self.domain.clone(), narrow(&self.params))
    }

    pub fn to_tffn<T: Real>(&self) -> Result<Tffn<T>> {
        self.check::<T>(ModelFamily::Tffn)?;
        let Architecture::Tffn { rank, hidden, panels, points } = &self.architecture else { unreachable!() };
        Tffn::with_quadrature(*rank, hidden, self.domain.clone(), narrow(&self.params), *panels, *points)
    }
}
