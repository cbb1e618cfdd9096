use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use tnnfp::Precision;
use tnnfp_cli::{commands, config};

#[derive(Parser)]
#[command(name = "tnnfp", version, about = "Tensor neural network solvers for steady-state Fokker-Planck equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory holding every input and output file.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Root seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Model arithmetic; overrides the configuration.
    #[arg(long, global = true)]
    precision: Option<Precision>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the SDE and write the numerical support.
    EstimateDomain,
    /// Train a model on the support and write a checkpoint and loss history.
    Train {
        /// Continue from the checkpoint in the run directory.
        #[arg(long)]
        resume: bool,
        /// Pause after this many epochs without shortening the schedule.
        #[arg(long)]
        until: Option<usize>,
    },
    /// Shrink the support to the smallest candidate holding enough mass.
    Refine,
    /// Relative errors against the exact density.
    Eval,
    /// Model values over a two-coordinate grid.
    ExportSlice,
    /// Integrals over centered sub-boxes.
    IntegrateTable,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let path = cli.config.context("--config is required")?;
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = config::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.precision.is_some() {
        cfg.model.precision = cli.precision;
    }
    let s = cfg.resolve()?;
    std::fs::create_dir_all(&cli.out)?;
    let out = cli.out.as_path();
    match cli.command {
        Command::EstimateDomain => {
            let f = commands::estimate_domain(&s, out)?;
            println!("center {:?}", f.domain.center);
            println!("half-widths {:?}", f.domain.half_widths);
        }
        Command::Train { resume, until } => {
            let sum = commands::train_model(&s, out, resume, until)?;
            match sum.last {
                Some(r) => println!("epoch {}: loss {} (residual {})", r.epoch, r.loss.total, r.loss.residual),
                None => println!("nothing to do: already at epoch {}", sum.final_epoch),
            }
        }
        Command::Refine => {
            let f = commands::refine(&s, out)?;
            println!("half-widths {:?}", f.domain.half_widths);
        }
        Command::Eval => {
            let r = commands::eval(&s, out)?;
            for row in &r.rows {
                match row.error {
                    Some(e) => println!("eps {}: n = {}, relative error {e:.6}", row.epsilon, row.count),
                    None => println!("eps {}: no test points above the threshold", row.epsilon),
                }
            }
            println!("rms difference {:.6e}", r.l2_difference);
        }
        Command::ExportSlice => {
            let p = commands::export_slice(&s, out)?;
            println!("wrote {}", p.display());
        }
        Command::IntegrateTable => {
            for (r, v) in commands::integrate_table(&s, out)? {
                println!("r = {r}: {v:.6}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
