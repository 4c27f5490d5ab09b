use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fcpinn_cli::commands;
use fcpinn_cli::config::parse_pair;
use fcpinn_cli::{CliError, RunConfig};

#[derive(Parser)]
#[command(name = "fcpinn", about = "Frequency-compensated PINN surrogate for cylinder wake flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset defaults: paper or desk.
    #[arg(long)]
    preset: Option<String>,
    /// Override any configuration key, e.g. `--set train.epochs=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    run_dir: Option<PathBuf>,
}

#[derive(Args)]
struct TrainFlags {
    /// full or no-ffm.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every design and write the datasets.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Train a surrogate on the generated datasets.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Quadrant report and snapshot triptychs for the best checkpoint.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: TrainFlags,
        /// `u_inlet,d_y,t`; may be repeated.
        #[arg(long)]
        snapshot: Vec<String>,
    },
    /// Train Full, No-FFM, Strong-Reg and No-Reg and compare them.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        /// Seeds per variant.
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        strong_lambda: Option<f64>,
    },
    /// Taylor-Green convergence and, optionally, the wake frequency check.
    ValidateSolver {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        shedding: bool,
    },
}

fn resolve(common: &Common, extra: Vec<(String, String)>) -> Result<RunConfig, CliError> {
    let file = match &common.config {
        Some(p) => Some(
            std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?,
        ),
        None => None,
    };
    let mut pairs = Vec::new();
    if let Some(p) = &common.preset {
        pairs.push(("preset".to_string(), p.clone()));
    }
    if let Some(d) = &common.data_dir {
        pairs.push(("data_dir".to_string(), d.display().to_string()));
    }
    if let Some(d) = &common.run_dir {
        pairs.push(("run_dir".to_string(), d.display().to_string()));
    }
    for s in &common.set {
        pairs.push(parse_pair(s)?);
    }
    pairs.extend(extra);
    RunConfig::resolve(file.as_deref(), &pairs)
}

fn train_pairs(f: &TrainFlags) -> Vec<(String, String)> {
    let mut v = Vec::new();
    if let Some(x) = &f.variant {
        v.push(("train.variant".to_string(), x.clone()));
    }
    if let Some(x) = f.lambda {
        v.push(("train.lambda".to_string(), x.to_string()));
    }
    if let Some(x) = f.seed {
        v.push(("train.seed".to_string(), x.to_string()));
    }
    v
}

fn parse_snapshot(s: &str) -> Result<(f64, f64, f64), CliError> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || CliError::Config(format!("--snapshot expects u_inlet,d_y,t, got `{s}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let n = |k: usize| parts[k].parse::<f64>().map_err(|_| bad());
    Ok((n(0)?, n(1)?, n(2)?))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { common } => {
            let cfg = resolve(&common, Vec::new())?;
            eprint!("{}", cfg.to_text());
            let rows = commands::generate(&cfg, |m| eprintln!("generated {m}"))?;
            println!("wrote {} design files to {}", rows.len(), cfg.data_dir.display());
        }
        Command::Train { common, flags } => {
            let cfg = resolve(&common, train_pairs(&flags))?;
            eprint!("{}", cfg.to_text());
            let out = commands::train_run(&cfg)?;
            println!(
                "best validation MSE {:e} at epoch {} ({} epochs{})",
                out.best_val,
                out.best_epoch,
                out.history.len(),
                if out.stopped_early { ", stopped early" } else { "" }
            );
        }
        Command::Evaluate { common, flags, snapshot } => {
            let cfg = resolve(&common, train_pairs(&flags))?;
            let snaps = snapshot.iter().map(|s| parse_snapshot(s)).collect::<Result<Vec<_>, _>>()?;
            let ev = commands::evaluate(&cfg, &snaps, |w| eprintln!("warning: {w}"))?;
            print!("{}", ev.report.to_text());
            println!("validation MSE {:e}", ev.validation_mse);
            for f in ev.snapshots {
                println!("wrote {}", f.display());
            }
        }
        Command::Ablate { common, seed, seeds, strong_lambda } => {
            let mut extra = Vec::new();
            if let Some(s) = seed {
                extra.push(("train.seed".to_string(), s.to_string()));
            }
            if let Some(n) = seeds {
                extra.push(("ablate.seeds".to_string(), n.to_string()));
            }
            if let Some(l) = strong_lambda {
                extra.push(("ablate.strong_lambda".to_string(), l.to_string()));
            }
            let cfg = resolve(&common, extra)?;
            eprint!("{}", cfg.to_text());
            let table = commands::ablate(&cfg)?;
            print!("{}", table.to_text());
            let failed = table.rows.iter().filter(|r| r.result.is_err()).count();
            if failed > 0 {
                return Err(CliError::Runtime(format!("{failed} ablation run(s) failed")));
            }
        }
        Command::ValidateSolver { common, shedding } => {
            let cfg = resolve(&common, Vec::new())?;
            let v = commands::validate_solver(&cfg, shedding)?;
            print!("{}", v.to_text());
            if !v.passed() {
                return Err(CliError::Runtime("solver validation failed".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
