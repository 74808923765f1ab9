//! Command-line runner for the PINN training stack.
//!
//! Every subcommand resolves an experiment configuration the same way:
//! either `--config path/to/file.ini` or `--preset name`, with optional
//! `--seed` and `--out` overrides applied afterwards. Errors print to
//! stderr and map to stable exit codes (2 = bad configuration or
//! arguments, 3 = training diverged, 4 = verification failure).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pinn_core::harness::{self, RunRecord, PRESETS};
use pinn_core::{Error, ExperimentConfig};

#[derive(Parser)]
#[command(name = "pinn", version, about = "PINN training and benchmark runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Path to an INI experiment configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Name of a built-in configuration preset.
    #[arg(long)]
    preset: Option<String>,
    /// Override the experiment seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), None) => ExperimentConfig::from_ini_path(path)?,
            (None, Some(name)) => harness::preset(name)?,
            (None, None) => {
                return Err(Error::InvalidArgument(format!(
                    "pass --config or --preset (presets: {})",
                    PRESETS.join(", ")
                )));
            }
            (Some(_), Some(_)) => unreachable!("clap rejects --config with --preset"),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a network and write loss history, checkpoint and fields.
    Train(ConfigArgs),
    /// Sweep the optimizer hyperparameter grid on a held-out loss.
    GridSearch(ConfigArgs),
    /// Evaluate a saved checkpoint against the reference solution.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Checkpoint produced by `pinn train`.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Compute (and cache) the finite-difference reference solution.
    SolveRef(ConfigArgs),
    /// Summarize two or more run records into a comparison table.
    Compare {
        /// Run records (`record.json`) from `pinn train`.
        #[arg(num_args = 2.., required = true)]
        records: Vec<PathBuf>,
        /// Where to write the comparison CSV.
        #[arg(long, default_value = "compare.csv")]
        out: PathBuf,
    },
    /// Check network derivatives against finite differences.
    GradCheck {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Number of random parameter/point draws.
        #[arg(long, default_value_t = 100)]
        draws: usize,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.resolve()?;
            let record = harness::train(&cfg)?;
            println!(
                "trained {} with {} for {} epochs: final loss {:.6e}, rel-L2 {:.6e}",
                record.pde,
                record.optimizer,
                record.epochs_run,
                record.final_loss.as_ref().map_or(f64::NAN, |l| l.total),
                record.rel_l2.unwrap_or(f64::NAN),
            );
            println!("artifacts in {}", cfg.out_dir.display());
        }
        Command::GridSearch(args) => {
            let cfg = args.resolve()?;
            let cells = harness::grid_search(&cfg)?;
            std::fs::create_dir_all(&cfg.out_dir)?;
            let path = cfg.out_dir.join("grid.csv");
            harness::write_grid_csv(&cells, &path)?;
            println!("grid search over {} cells:", cells.len());
            for cell in &cells {
                match cell.validation_loss {
                    Some(v) => println!(
                        "  eta={:<8} beta1={:<5} beta2={:<6} holdout loss {v:.6e}",
                        cell.eta, cell.beta1, cell.beta2
                    ),
                    None => println!(
                        "  eta={:<8} beta1={:<5} beta2={:<6} {}",
                        cell.eta, cell.beta1, cell.beta2, cell.status
                    ),
                }
            }
            println!("written to {}", path.display());
        }
        Command::Evaluate { cfg, checkpoint } => {
            let cfg = cfg.resolve()?;
            let report = harness::evaluate(&checkpoint, &cfg)?;
            println!(
                "rel-L2 {:.6e}; fields at {} and {}",
                report.rel_l2,
                report.solution_field_path.display(),
                report.error_field_path.display()
            );
        }
        Command::SolveRef(args) => {
            let cfg = args.resolve()?;
            let field = harness::reference_field(
                &cfg.pde,
                cfg.solver_cells,
                cfg.eval_cells,
                &cfg.cache_dir,
            )?;
            let path = harness::reference_cache_path(
                &cfg.pde,
                cfg.solver_cells,
                cfg.eval_cells,
                &cfg.cache_dir,
            );
            println!(
                "reference for {} on a {}x{} grid (max |u| = {:.6}) cached at {}",
                cfg.pde.kind.name(),
                field.grid().nx(),
                field.grid().nt(),
                field.max_abs(),
                path.display()
            );
        }
        Command::Compare { records, out } => {
            let loaded = records
                .iter()
                .map(|p| RunRecord::load(p))
                .collect::<Result<Vec<_>, _>>()?;
            let rows = harness::compare(&loaded, &out)?;
            println!(
                "{:<10} {:>6} {:>14} {:>12} {:>12}",
                "optimizer", "seed", "final loss", "rel-L2", "smoothness"
            );
            for row in &rows {
                println!(
                    "{:<10} {:>6} {:>14.6e} {:>12.6e} {:>12.6e}",
                    row.optimizer, row.seed, row.final_total, row.rel_l2, row.smoothness
                );
            }
            println!("written to {}", out.display());
        }
        Command::GradCheck { cfg, draws } => {
            let cfg = cfg.resolve()?;
            let report = harness::grad_check_suite(&cfg.pde, draws, cfg.seed)?;
            println!(
                "gradient check passed: {} draws, worst relative error {:.3e} (tolerance {:.0e})",
                report.draws, report.worst, report.tol
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(1))
        }
    }
}
