//! The pipeline stages. Each reads and writes files under one run directory,
//! and every output is a pure function of the configuration and its inputs.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tnnfp::evaluation::{evaluate, integral_table, slice_grid};
use tnnfp::geometry::{anisotropic_from_stats, domain_from_stats, origin_starts, refine_domain, simulate_stats};
use tnnfp::problem::ExactSolution;
use tnnfp::rng::derive_seed;
use tnnfp::training::{train, EpochRecord};
use tnnfp::{BenchmarkId, Checkpoint, DensityModel, Domain, ModelFamily, Precision, Real, TrainState, Tffn, Trbfn};

use crate::config::{DomainSource, Settings};

/// Support written by `estimate-domain` and `refine`, with how it was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainFile {
    pub benchmark: BenchmarkId,
    pub domain: Domain,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Simulated {
        seed: u64,
        step_size: f64,
        burnin_steps: usize,
        terminal_steps: usize,
        num_trajectories: usize,
        margin_factor: f64,
        anisotropic: bool,
        samples: usize,
        /// B before it is spread over the dimensions; absent for anisotropic supports.
        radius: Option<f64>,
    },
    Reference,
    Refined {
        threshold: f64,
        tolerance: f64,
        fell_back: bool,
        /// (candidate r, ∫ p_N over the centered box of half-edge r)
        table: Vec<(f64, f64)>,
    },
}

pub fn read_domain(path: &Path) -> anyhow::Result<DomainFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading domain file {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing domain file {}", path.display()))
}

/// Writes through a temporary sibling so an interrupted run never leaves a torn file.
fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming onto {}", path.display()))?;
    Ok(())
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_checkpoint(path: &Path) -> anyhow::Result<Checkpoint> {
    let text = fs::read_to_string(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing checkpoint {}", path.display()))
}

pub fn estimate_domain(s: &Settings, out: &Path) -> anyhow::Result<DomainFile> {
    let b = s.benchmark;
    let file = match s.domain_source {
        DomainSource::Reference => DomainFile { benchmark: b, domain: b.reference_domain(), provenance: Provenance::Reference },
        DomainSource::Simulate => {
            let problem = b.problem();
            let sigma = move |x: &[f64]| b.sigma(x);
            let stats = simulate_stats(&problem, &sigma, &origin_starts(b.dim(), s.sde.num_trajectories), &s.sde)?;
            let (domain, radius) = if s.anisotropic {
                (anisotropic_from_stats(&stats)?, None)
            } else {
                let (_, radius, domain) = domain_from_stats(&stats, s.sde.margin_factor)?;
                (domain, Some(radius))
            };
            DomainFile {
                benchmark: b,
                domain,
                provenance: Provenance::Simulated {
                    seed: s.sde.seed,
                    step_size: s.sde.step_size,
                    burnin_steps: s.sde.burnin_steps,
                    terminal_steps: s.sde.terminal_steps,
                    num_trajectories: s.sde.num_trajectories,
                    margin_factor: s.sde.margin_factor,
                    anisotropic: s.anisotropic,
                    samples: stats.count,
                    radius,
                },
            }
        }
    };
    write_json(&out.join(&s.domain_file), &file)?;
    Ok(file)
}

/// Checkpoint conversions for the two families.
pub trait Persist<T: Real>: DensityModel<T> + Sized {
    fn save(&self, state: Option<&TrainState<T>>) -> Checkpoint;
    fn load(ck: &Checkpoint) -> tnnfp::Result<Self>;
    fn label(&self) -> String;
}

impl<T: Real> Persist<T> for Trbfn<T> {
    fn save(&self, state: Option<&TrainState<T>>) -> Checkpoint {
        Checkpoint::from_trbfn(self, state)
    }

    fn load(ck: &Checkpoint) -> tnnfp::Result<Self> {
        ck.to_trbfn()
    }

    fn label(&self) -> String {
        format!("TRBFN({}, {})", self.rank(), self.bases())
    }
}

impl<T: Real> Persist<T> for Tffn<T> {
    fn save(&self, state: Option<&TrainState<T>>) -> Checkpoint {
        Checkpoint::from_tffn(self, state)
    }

    fn load(ck: &Checkpoint) -> tnnfp::Result<Self> {
        ck.to_tffn()
    }

    fn label(&self) -> String {
        let widths: Vec<String> = self.hidden().iter().map(|w| w.to_string()).collect();
        format!("TFFN({}, [1 {} 1])", self.rank(), widths.join(" "))
    }
}

/// Calls `$body` with `$m` bound to the concrete model held by `$ck`.
macro_rules! with_model {
    ($ck:expr, $m:ident => $body:expr) => {{
        let ck: &Checkpoint = $ck;
        match (ck.architecture.family(), ck.precision) {
            (ModelFamily::Trbfn, Precision::Single) => {
                let $m = <Trbfn<f32> as Persist<f32>>::load(ck)?;
                $body
            }
            (ModelFamily::Trbfn, Precision::Double) => {
                let $m = <Trbfn<f64> as Persist<f64>>::load(ck)?;
                $body
            }
            (ModelFamily::Tffn, Precision::Single) => {
                let $m = <Tffn<f32> as Persist<f32>>::load(ck)?;
                $body
            }
            (ModelFamily::Tffn, Precision::Double) => {
                let $m = <Tffn<f64> as Persist<f64>>::load(ck)?;
                $body
            }
        }
    }};
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub epochs_run: usize,
    pub final_epoch: usize,
    pub last: Option<EpochRecord>,
}

const LOSS_HEADER: &str = "epoch,lr,total,residual,constraint,boundary";

fn loss_row(r: &EpochRecord) -> String {
    format!("{},{},{},{},{},{}", r.epoch, r.lr, r.loss.total, r.loss.residual, r.loss.constraint, r.loss.boundary)
}

/// Opens the loss CSV, keeping only rows before `epoch` when resuming.
fn open_loss_csv(path: &Path, epoch: usize) -> anyhow::Result<BufWriter<fs::File>> {
    let mut kept = vec![LOSS_HEADER.to_string()];
    if epoch > 0 {
        let text = fs::read_to_string(path).with_context(|| format!("reading loss history {}", path.display()))?;
        for line in text.lines().skip(1) {
            let e: usize = line.split(',').next().and_then(|v| v.parse().ok()).context("malformed loss row")?;
            if e < epoch {
                kept.push(line.to_string());
            }
        }
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    for line in kept {
        writeln!(w, "{line}")?;
    }
    Ok(w)
}

fn run_training<T: Real, M: Persist<T>>(
    s: &Settings,
    out: &Path,
    mut model: M,
    mut state: TrainState<T>,
) -> anyhow::Result<TrainSummary> {
    let problem = s.benchmark.problem();
    let ck_path = out.join(&s.checkpoint_file);
    let mut loss = open_loss_csv(&out.join(&s.loss_file), state.epoch)?;
    let start = state.epoch;
    let every = s.checkpoint_every.max(1);
    let result = train(&mut model, &problem, &s.train, &mut state, |rec, m, st| {
        writeln!(loss, "{}", loss_row(rec)).map_err(|e| tnnfp::Error::Input(e.to_string()))?;
        if st.epoch % every == 0 && st.epoch < s.train.epochs {
            loss.flush().map_err(|e| tnnfp::Error::Input(e.to_string()))?;
            write_json(&ck_path, &m.save(Some(st))).map_err(|e| tnnfp::Error::Input(e.to_string()))?;
        }
        Ok(())
    });
    loss.flush()?;
    let history = result?;
    write_json(&ck_path, &model.save(Some(&state)))?;
    Ok(TrainSummary { epochs_run: state.epoch - start, final_epoch: state.epoch, last: history.last().cloned() })
}

fn fresh_training<T: Real>(s: &Settings, out: &Path, domain: Domain) -> anyhow::Result<TrainSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(s.seed, "init"));
    let spec = &s.model;
    match spec.family {
        ModelFamily::Trbfn => {
            let m: Trbfn<T> = Trbfn::init(spec.rank, spec.kinds.clone(), domain, &mut rng)?;
            let st = TrainState::new(&s.train, m.num_params());
            run_training(s, out, m, st)
        }
        ModelFamily::Tffn => {
            let init: Tffn<T> = Tffn::init(spec.rank, &spec.hidden, domain.clone(), &mut rng)?;
            let m = Tffn::with_quadrature(spec.rank, &spec.hidden, domain, init.params().to_vec(), spec.panels, spec.points)?;
            let st = TrainState::new(&s.train, m.num_params());
            run_training(s, out, m, st)
        }
    }
}

fn resumed_training<T: Real, M: Persist<T>>(s: &Settings, out: &Path, ck: &Checkpoint) -> anyhow::Result<TrainSummary> {
    let m = M::load(ck)?;
    let state = ck
        .train_state::<T>(m.num_params())?
        .context("checkpoint has no optimizer state to resume from")?;
    if state.optimizer.config != s.train.optimizer {
        bail!("checkpoint optimizer {} differs from configured {}", state.optimizer.config.name(), s.train.optimizer.name());
    }
    run_training(s, out, m, state)
}

/// Trains up to the configured epoch count, or pauses at `until` if that is earlier.
/// The learning-rate schedule always spans the configured count, so a paused run
/// resumed later is identical to an uninterrupted one.
pub fn train_model(s: &Settings, out: &Path, resume: bool, until: Option<usize>) -> anyhow::Result<TrainSummary> {
    let mut s = s.clone();
    if let Some(u) = until {
        s.train.epochs = s.train.epochs.min(u);
    }
    let s = &s;
    let ck_path = out.join(&s.checkpoint_file);
    if resume && ck_path.exists() {
        let ck = read_checkpoint(&ck_path)?;
        if ck.architecture.family() != s.model.family || ck.precision != s.model.precision {
            bail!(
                "checkpoint holds a {} {} model, config asks for {} {}",
                ck.precision.as_str(),
                ck.architecture.family().as_str(),
                s.model.precision.as_str(),
                s.model.family.as_str()
            );
        }
        return match (s.model.family, s.model.precision) {
            (ModelFamily::Trbfn, Precision::Single) => resumed_training::<f32, Trbfn<f32>>(s, out, &ck),
            (ModelFamily::Trbfn, Precision::Double) => resumed_training::<f64, Trbfn<f64>>(s, out, &ck),
            (ModelFamily::Tffn, Precision::Single) => resumed_training::<f32, Tffn<f32>>(s, out, &ck),
            (ModelFamily::Tffn, Precision::Double) => resumed_training::<f64, Tffn<f64>>(s, out, &ck),
        };
    }
    let file = read_domain(&out.join(&s.domain_file))?;
    if file.benchmark != s.benchmark {
        bail!("domain file is for {}, config names {}", file.benchmark, s.benchmark);
    }
    match s.model.precision {
        Precision::Single => fresh_training::<f32>(s, out, file.domain),
        Precision::Double => fresh_training::<f64>(s, out, file.domain),
    }
}

fn centered_table<T: Real, M: DensityModel<T>>(m: &M, radii: &[f64]) -> anyhow::Result<Vec<(f64, f64)>> {
    Ok(integral_table(|r| m.centered_integral(r), radii)?)
}

pub fn refine(s: &Settings, out: &Path) -> anyhow::Result<DomainFile> {
    let file = read_domain(&out.join(&s.domain_file))?;
    let ck = read_checkpoint(&out.join(&s.eval.checkpoint_file))?;
    let fallback = file.domain.max_half_width();
    let refinement = with_model!(&ck, m => {
        if m.domain() != &file.domain {
            bail!("checkpoint was trained on a different domain than {}", s.domain_file);
        }
        refine_domain(|r| m.centered_integral(r), fallback, &s.candidates, s.threshold, s.tolerance)?
    });
    for (r, v) in &refinement.table {
        eprintln!("r = {r}: integral {v:.6}");
    }
    if refinement.fell_back {
        eprintln!("warning: no candidate exceeds {}, keeping the original support", s.threshold);
    }
    let domain = if refinement.fell_back {
        file.domain.clone()
    } else {
        Domain::isotropic(file.domain.center.clone(), refinement.radius)?
    };
    let refined = DomainFile {
        benchmark: file.benchmark,
        domain,
        provenance: Provenance::Refined {
            threshold: s.threshold,
            tolerance: s.tolerance,
            fell_back: refinement.fell_back,
            table: refinement.table,
        },
    };
    write_json(&out.join(&s.refined_file), &refined)?;
    Ok(refined)
}

fn eval_model<T: Real, M: Persist<T>>(s: &Settings, out: &Path, m: &M) -> anyhow::Result<tnnfp::evaluation::EvalReport> {
    let exact = ExactSolution::new(s.benchmark, m.domain())?;
    let e = &s.eval;
    let exact_fn = |x: &[f64]| exact.density(x);
    let model_fn = |x: &[f64]| m.value_f64(x);
    let report = evaluate(&exact_fn, &model_fn, &e.gamma, e.samples, &e.thresholds, derive_seed(s.seed, "eval"))?;
    let mut w = BufWriter::new(fs::File::create(out.join(&e.report_file))?);
    report.write_csv(&mut w, &format!("\"{}\"", m.label()), m.num_params())?;
    w.flush()?;
    Ok(report)
}

pub fn eval(s: &Settings, out: &Path) -> anyhow::Result<tnnfp::evaluation::EvalReport> {
    let ck = read_checkpoint(&out.join(&s.eval.checkpoint_file))?;
    with_model!(&ck, m => eval_model(s, out, &m))
}

pub fn integrate_table(s: &Settings, out: &Path) -> anyhow::Result<Vec<(f64, f64)>> {
    let ck = read_checkpoint(&out.join(&s.eval.checkpoint_file))?;
    let table = with_model!(&ck, m => centered_table(&m, &s.eval.radii)?);
    let mut w = BufWriter::new(fs::File::create(out.join(&s.eval.integral_file))?);
    writeln!(w, "r,integral")?;
    for (r, v) in &table {
        writeln!(w, "{r},{v}")?;
    }
    w.flush()?;
    Ok(table)
}

pub fn export_slice(s: &Settings, out: &Path) -> anyhow::Result<PathBuf> {
    let ck = read_checkpoint(&out.join(&s.eval.checkpoint_file))?;
    let e = &s.eval;
    let (a, b) = e.slice_axes;
    let grid = with_model!(&ck, m => {
        let dom = m.domain();
        if a >= dom.dim() || b >= dom.dim() {
            bail!("slice axes ({a}, {b}) exceed the model dimension {}", dom.dim());
        }
        let f = |x: &[f64]| m.value_f64(x);
        slice_grid(&f, &e.slice_fixed, (a, b), (dom.lower(a), dom.upper(a)), (dom.lower(b), dom.upper(b)), e.slice_resolution)?
    });
    let path = out.join(&e.slice_file);
    let mut w = BufWriter::new(fs::File::create(&path)?);
    grid.write_csv(&mut w)?;
    w.flush()?;
    Ok(path)
}
