//! Argument parsing and dispatch for the `dudo` binary.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dudo_core::suites::Scope;

use crate::commands::{self, Axis, Precision};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "dudo", version, about = "Dual-domain unified MRI reconstruction on synthetic phantoms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed of the command (training seed, or phantom seed for simulate).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default: `<output_dir>/<command>`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, global = true, default_value = "f32")]
    pub precision: Precision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScopeArg {
    Ops,
    Blocks,
    Model,
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write one simulated problem as tensor files and PGM previews.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Acceleration (default: the first evaluation acceleration).
        #[arg(long)]
        accel: Option<f64>,
    },
    /// Train from scratch and write a checkpoint and the loss curve.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate held-out phantoms; without a checkpoint the fresh initialisation is used.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train and evaluate every variant along one ablation axis.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: Axis,
    },
    /// Run the finite-difference gradient suites (always in f64).
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(value_enum, default_value = "all")]
        scope: ScopeArg,
        /// Random instances per check (default depends on the scope).
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Print the parameter breakdown of the configured model.
    Params {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> CliResult<RunConfig> {
    match &common.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

/// Runs one parsed command.
pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { common, accel } => {
            let cfg = load(&common)?;
            let seed = common.seed.unwrap_or(cfg.train.seed);
            let accel = accel.unwrap_or(cfg.eval.accels[0]);
            let out = commands::out_dir(&cfg, common.out, "simulate");
            let m = commands::simulate(&cfg, seed, accel, &out, common.precision)?;
            println!("wrote {} artifacts to {}", m.artifacts.len(), out.display());
        }
        Command::Train { common } => {
            let mut cfg = load(&common)?;
            if let Some(s) = common.seed {
                cfg.train.seed = s;
            }
            let out = commands::out_dir(&cfg, common.out, "train");
            let r = commands::train(&cfg, &out, common.precision, true)?;
            println!(
                "trained {} steps, final loss {}, checkpoint in {}",
                r.losses.len(),
                r.losses.last().map_or("n/a".into(), |l| format!("{l:.6}")),
                out.join("checkpoint").display()
            );
        }
        Command::Eval { common, checkpoint } => {
            let mut cfg = load(&common)?;
            if let Some(s) = common.seed {
                cfg.train.seed = s;
            }
            let out = commands::out_dir(&cfg, common.out, "eval");
            let rep = commands::eval(&cfg, checkpoint.as_deref(), &out, common.precision)?;
            println!("{:<8} {:>6} {:>10} {:>8} {:>10}", "cond", "accel", "psnr_db", "ssim", "zf_psnr");
            for r in &rep.summary {
                println!(
                    "{:<8} {:>6} {:>10.3} {:>8.4} {:>10.3}",
                    r.condition.as_str(),
                    r.accel,
                    r.psnr_mean,
                    r.ssim_mean,
                    r.zf_psnr_mean
                );
            }
        }
        Command::Ablate { common, axis } => {
            let mut cfg = load(&common)?;
            if let Some(s) = common.seed {
                cfg.train.seed = s;
            }
            let out = commands::out_dir(&cfg, common.out, &format!("ablate_{}", axis.as_str()));
            let rows = commands::ablate(&cfg, axis, &out, common.precision, true)?;
            println!("wrote {} rows to {}", rows.len(), out.join("ablation.csv").display());
        }
        Command::Gradcheck { common, scope, seeds } => {
            let cfg = load(&common)?;
            let scopes = match scope {
                ScopeArg::Ops => vec![Scope::Ops],
                ScopeArg::Blocks => vec![Scope::Blocks],
                ScopeArg::Model => vec![Scope::Model],
                ScopeArg::All => vec![Scope::Ops, Scope::Blocks, Scope::Model],
            };
            let out = commands::out_dir(&cfg, common.out, "gradcheck");
            let results = commands::gradcheck(&scopes, seeds, &out, cfg.hash())?;
            println!("all {} checks passed", results.len());
        }
        Command::Params { common } => {
            let cfg = load(&common)?;
            let out = commands::out_dir(&cfg, common.out, "params");
            commands::params(&cfg, &out)?;
        }
    }
    Ok(())
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

impl From<clap::Error> for CliError {
    fn from(e: clap::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}
