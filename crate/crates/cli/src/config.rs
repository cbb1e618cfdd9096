//! Run configuration: a TOML file with sections `[sde]`, `[domain]`,
//! `[model]`, `[train]` and `[eval]`. Every key is optional except
//! `benchmark`; missing keys take the published settings for that benchmark.

use serde::{Deserialize, Serialize};
use tnnfp::geometry::SdeSimConfig;
use tnnfp::optim::{AdamConfig, LionConfig, LrSchedule, OptimizerConfig};
use tnnfp::rng::derive_seed;
use tnnfp::{BenchmarkId, Domain, ModelFamily, PenaltyWeights, Precision, RbfKind, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub benchmark: BenchmarkId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub sde: SdeSection,
    #[serde(default)]
    pub domain: DomainSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_size: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burnin_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_trajectories: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin_factor: Option<f64>,
    /// Per-dimension half-widths without margin instead of one isotropic B.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anisotropic: Option<bool>,
}

/// Where `estimate-domain` takes the support from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainSource {
    /// Simulate the SDE.
    Simulate,
    /// Write the published support without simulating.
    Reference,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<DomainSource>,
    /// Domain file read by `train`, `refine` and written by `estimate-domain`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    /// Output of `refine`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refined_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Slack subtracted from the threshold; 0 keeps the comparison strict.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<ModelFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<Precision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    /// TRBFN kernel kinds, one per basis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kinds: Option<Vec<RbfKind>>,
    /// TFFN hidden widths.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub panels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Lion,
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint_weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_decay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_power: Option<f64>,
    /// Alternate combination/base updates in phases of this many epochs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub two_step: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_csv: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// Center of the test box Γ; defaults to the origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_half_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Vec<f64>>,
    /// Radii for `integrate-table`; defaults to the refinement candidates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    /// Checkpoint read by `eval`, `refine`, `export-slice` and `integrate-table`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integral_csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slice_csv: Option<String>,
    /// Zero-based free coordinates of the slice.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slice_axes: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slice_resolution: Option<usize>,
    /// Values of the fixed coordinates; defaults to 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slice_fixed: Option<Vec<f64>>,
}

/// Configuration with every default filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub benchmark: BenchmarkId,
    pub seed: u64,
    pub sde: SdeSimConfig,
    pub anisotropic: bool,
    pub domain_source: DomainSource,
    pub domain_file: String,
    pub refined_file: String,
    pub candidates: Vec<f64>,
    pub threshold: f64,
    pub tolerance: f64,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub checkpoint_every: usize,
    pub checkpoint_file: String,
    pub loss_file: String,
    pub eval: EvalSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub family: ModelFamily,
    pub precision: Precision,
    pub rank: usize,
    pub kinds: Vec<RbfKind>,
    pub hidden: Vec<usize>,
    pub panels: usize,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSpec {
    pub gamma: Domain,
    pub samples: usize,
    pub thresholds: Vec<f64>,
    pub radii: Vec<f64>,
    pub checkpoint_file: String,
    pub report_file: String,
    pub integral_file: String,
    pub slice_file: String,
    pub slice_axes: (usize, usize),
    pub slice_resolution: usize,
    pub slice_fixed: Vec<f64>,
}

/// Published per-benchmark settings.
struct Published {
    trbfn_rank: usize,
    trbfn_bases: usize,
    tffn_rank: usize,
    trbfn_batch: usize,
    tffn_batch: usize,
    weights: PenaltyWeights,
    gamma_half_width: f64,
    thresholds: [f64; 3],
    samples: usize,
}

fn published(b: BenchmarkId) -> Published {
    let strong = PenaltyWeights { constraint: 50_000.0, boundary: 100.0 };
    let weak = PenaltyWeights { constraint: 100.0, boundary: 100.0 };
    match b {
        BenchmarkId::Ring2D => Published {
            trbfn_rank: 1000,
            trbfn_bases: 3,
            tffn_rank: 64,
            trbfn_batch: 5000,
            tffn_batch: 4096,
            weights: strong,
            gamma_half_width: 2.0,
            thresholds: [1e-2, 5e-2, 1e-1],
            samples: 100_000,
        },
        BenchmarkId::UniMode4D => Published {
            trbfn_rank: 1000,
            trbfn_bases: 3,
            tffn_rank: 64,
            trbfn_batch: 5000,
            tffn_batch: 4096,
            weights: strong,
            gamma_half_width: 1.0,
            thresholds: [1e-2, 5e-2, 1e-1],
            samples: 100_000,
        },
        BenchmarkId::UniMode6D => Published {
            trbfn_rank: 800,
            trbfn_bases: 3,
            tffn_rank: 128,
            trbfn_batch: 5000,
            tffn_batch: 16_000,
            weights: strong,
            gamma_half_width: 1.0,
            thresholds: [5e-2, 2.5e-1, 5e-1],
            samples: 500_000,
        },
        BenchmarkId::MultiMode6D => Published {
            trbfn_rank: 800,
            trbfn_bases: 6,
            tffn_rank: 128,
            trbfn_batch: 40_000,
            tffn_batch: 16_000,
            weights: weak,
            gamma_half_width: 2.0,
            thresholds: [2e-4, 1e-3, 5e-3],
            samples: 500_000,
        },
        BenchmarkId::MultiMode10D => Published {
            trbfn_rank: 800,
            trbfn_bases: 3,
            tffn_rank: 128,
            trbfn_batch: 10_000,
            tffn_batch: 16_000,
            weights: weak,
            gamma_half_width: 0.7,
            thresholds: [1e-3, 1e-2, 1e-1],
            samples: 500_000,
        },
    }
}

pub fn parse(text: &str) -> anyhow::Result<RunConfig> {
    Ok(toml::from_str(text)?)
}

pub fn to_toml(config: &RunConfig) -> anyhow::Result<String> {
    Ok(toml::to_string(config)?)
}

impl RunConfig {
    pub fn new(benchmark: BenchmarkId) -> Self {
        Self {
            benchmark,
            seed: None,
            sde: SdeSection::default(),
            domain: DomainSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
        }
    }

    /// Fills defaults; command-line overrides are applied by the caller first.
    pub fn resolve(&self) -> anyhow::Result<Settings> {
        let b = self.benchmark;
        let d = b.dim();
        let pubd = published(b);
        let support = b.support_defaults();
        let seed = self.seed.unwrap_or(0);

        let base = SdeSimConfig::default();
        let s = &self.sde;
        let sde = SdeSimConfig {
            step_size: s.step_size.unwrap_or(base.step_size),
            burnin_steps: s.burnin_steps.unwrap_or(base.burnin_steps),
            terminal_steps: s.terminal_steps.unwrap_or(base.terminal_steps),
            num_trajectories: s.num_trajectories.unwrap_or(base.num_trajectories),
            margin_factor: s.margin_factor.unwrap_or(base.margin_factor),
            seed: derive_seed(seed, "sde"),
        };
        sde.validate()?;
        let anisotropic = s.anisotropic.unwrap_or(support.half_widths.is_some());

        let m = &self.model;
        let family = m.family.unwrap_or(ModelFamily::Trbfn);
        let model = ModelSpec {
            family,
            precision: m.precision.unwrap_or(match family {
                ModelFamily::Trbfn => Precision::Single,
                ModelFamily::Tffn => Precision::Double,
            }),
            rank: m.rank.unwrap_or(match family {
                ModelFamily::Trbfn => pubd.trbfn_rank,
                ModelFamily::Tffn => pubd.tffn_rank,
            }),
            kinds: m.kinds.clone().unwrap_or_else(|| vec![RbfKind::Wendland; pubd.trbfn_bases]),
            hidden: m.hidden.clone().unwrap_or_else(|| vec![8, 8]),
            panels: m.panels.unwrap_or(tnnfp::quadrature::DEFAULT_PANELS),
            points: m.points.unwrap_or(tnnfp::quadrature::DEFAULT_POINTS),
        };
        if model.rank == 0 {
            anyhow::bail!("model rank must be at least 1");
        }
        if family == ModelFamily::Trbfn && model.kinds.is_empty() {
            anyhow::bail!("a TRBFN needs at least one kernel kind");
        }
        if family == ModelFamily::Tffn && (model.hidden.is_empty() || model.hidden.contains(&0)) {
            anyhow::bail!("TFFN hidden widths must be nonempty and positive");
        }

        let t = &self.train;
        let epochs = t.epochs.unwrap_or(100_000);
        let lr_start_default = match family {
            ModelFamily::Trbfn => 9e-4,
            ModelFamily::Tffn => 1e-3,
        };
        let optimizer = match t.optimizer.unwrap_or(OptimizerKind::Lion) {
            OptimizerKind::Lion => {
                let c = LionConfig::default();
                if t.eps.is_some() {
                    anyhow::bail!("`eps` only applies to adam");
                }
                OptimizerConfig::Lion(LionConfig {
                    beta1: t.beta1.unwrap_or(c.beta1),
                    beta2: t.beta2.unwrap_or(c.beta2),
                    weight_decay: t.weight_decay.unwrap_or(c.weight_decay),
                })
            }
            OptimizerKind::Adam => {
                let c = AdamConfig::default();
                if t.weight_decay.is_some() {
                    anyhow::bail!("`weight_decay` only applies to lion");
                }
                OptimizerConfig::Adam(AdamConfig {
                    beta1: t.beta1.unwrap_or(c.beta1),
                    beta2: t.beta2.unwrap_or(c.beta2),
                    eps: t.eps.unwrap_or(c.eps),
                })
            }
            OptimizerKind::Sgd => {
                if t.beta1.is_some() || t.beta2.is_some() || t.eps.is_some() || t.weight_decay.is_some() {
                    anyhow::bail!("sgd takes no optimizer hyperparameters");
                }
                OptimizerConfig::Sgd
            }
        };
        let default_weights = match family {
            ModelFamily::Trbfn => pubd.weights,
            ModelFamily::Tffn => PenaltyWeights::NONE,
        };
        let train = TrainConfig {
            epochs,
            batch_size: t.batch_size.unwrap_or(match family {
                ModelFamily::Trbfn => pubd.trbfn_batch,
                ModelFamily::Tffn => pubd.tffn_batch,
            }),
            penalty: PenaltyWeights {
                constraint: t.constraint_weight.unwrap_or(default_weights.constraint),
                boundary: t.boundary_weight.unwrap_or(default_weights.boundary),
            },
            optimizer,
            schedule: LrSchedule {
                lr_start: t.lr_start.unwrap_or(lr_start_default),
                lr_end: t.lr_end.unwrap_or(8e-6),
                total_steps: epochs,
                power: t.lr_power.unwrap_or(1.0),
            },
            two_step: t.two_step,
            seed: derive_seed(seed, "train"),
        };
        train.validate()?;

        let e = &self.eval;
        let center = e.box_center.clone().unwrap_or_else(|| vec![0.0; d]);
        if center.len() != d {
            anyhow::bail!("eval.box_center has {} coordinates, benchmark needs {d}", center.len());
        }
        let gamma = Domain::isotropic(center, e.box_half_width.unwrap_or(pubd.gamma_half_width))?;
        let thresholds = e.thresholds.clone().unwrap_or_else(|| pubd.thresholds.to_vec());
        let candidates = self.domain.candidates.clone().unwrap_or_else(|| support.candidates.clone());
        let axes = e.slice_axes.unwrap_or([0, 1]);
        let slice_fixed = e.slice_fixed.clone().unwrap_or_else(|| vec![0.0; d]);
        if slice_fixed.len() != d {
            anyhow::bail!("eval.slice_fixed has {} coordinates, benchmark needs {d}", slice_fixed.len());
        }
        let eval = EvalSpec {
            gamma,
            samples: e.samples.unwrap_or(pubd.samples),
            thresholds,
            radii: e.radii.clone().unwrap_or_else(|| candidates.clone()),
            checkpoint_file: e.checkpoint.clone().unwrap_or_else(|| "checkpoint.json".into()),
            report_file: e.report_csv.clone().unwrap_or_else(|| "eval.csv".into()),
            integral_file: e.integral_csv.clone().unwrap_or_else(|| "integrals.csv".into()),
            slice_file: e.slice_csv.clone().unwrap_or_else(|| "slice.csv".into()),
            slice_axes: (axes[0], axes[1]),
            slice_resolution: e.slice_resolution.unwrap_or(101),
            slice_fixed,
        };

        Ok(Settings {
            benchmark: b,
            seed,
            sde,
            anisotropic,
            domain_source: self.domain.source.unwrap_or(DomainSource::Simulate),
            domain_file: self.domain.file.clone().unwrap_or_else(|| "domain.json".into()),
            refined_file: self.domain.refined_file.clone().unwrap_or_else(|| "domain.refined.json".into()),
            candidates,
            threshold: self.domain.threshold.unwrap_or(support.threshold),
            tolerance: self.domain.tolerance.unwrap_or(0.0),
            model,
            train,
            checkpoint_every: t.checkpoint_every.unwrap_or(1000),
            checkpoint_file: t.checkpoint.clone().unwrap_or_else(|| "checkpoint.json".into()),
            loss_file: t.loss_csv.clone().unwrap_or_else(|| "loss.csv".into()),
            eval,
        })
    }
}
