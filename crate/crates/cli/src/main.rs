//! qdistill: experiment runner for finite-blocklength key and entanglement
//! conversion protocols.

mod config;
mod runner;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ExperimentConfig, Scenario};

#[derive(Parser)]
#[command(
    name = "qdistill",
    version,
    about = "Finite-blocklength simulation of secret-key and entanglement conversion protocols"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config file (flat `key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Validate the config and print derived code sizes without simulating.
    #[arg(long)]
    dry_run: bool,
    /// Fill the wall_time_ms column (makes the CSV run-dependent).
    #[arg(long)]
    timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Coherent-information rate of a channel.
    Rate(CommonArgs),
    /// Typical-set diagnostics of a source.
    Typical(CommonArgs),
    /// Key-generation code construction metrics.
    Code(CommonArgs),
    /// Protocol simulation (keygen | keydist | entgen | entdist | enttrans).
    Protocol(CommonArgs),
    /// Maximise coherent information over parameterized inputs.
    Optimize(CommonArgs),
}

fn scenario_allowed(command: &Command, scenario: Scenario) -> bool {
    match command {
        Command::Rate(_) => scenario == Scenario::Rate,
        Command::Typical(_) => scenario == Scenario::Typical,
        Command::Code(_) => scenario == Scenario::Code,
        Command::Protocol(_) => matches!(
            scenario,
            Scenario::KeyGen
                | Scenario::KeyDist
                | Scenario::EntGen
                | Scenario::EntDist
                | Scenario::EntTrans
        ),
        Command::Optimize(_) => scenario == Scenario::Optimize,
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    out.with_extension("manifest.txt")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args = match &cli.command {
        Command::Rate(a)
        | Command::Typical(a)
        | Command::Code(a)
        | Command::Protocol(a)
        | Command::Optimize(a) => a,
    };

    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("config error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(1);
        }
    };
    let mut cfg = match ExperimentConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out = out.display().to_string();
    }
    if args.timing {
        cfg.timing = true;
    }
    if !scenario_allowed(&cli.command, cfg.scenario) {
        eprintln!(
            "config error: scenario `{}` does not belong to this subcommand",
            cfg.scenario.name()
        );
        return ExitCode::from(1);
    }

    if args.dry_run {
        match runner::dry_run_report(&cfg) {
            Ok(report) => {
                print!("{report}");
                return ExitCode::SUCCESS;
            }
            Err(e) => {
                eprintln!("config error: {e}");
                return ExitCode::from(1);
            }
        }
    }

    let report = runner::run_experiment(&cfg);
    let csv = runner::to_csv(&report.rows);
    let out_path = PathBuf::from(&cfg.out);
    if let Err(e) = std::fs::write(&out_path, &csv) {
        eprintln!("cannot write {}: {e}", out_path.display());
        return ExitCode::from(1);
    }
    if let Err(e) = std::fs::write(manifest_path(&out_path), runner::manifest(&cfg)) {
        eprintln!("cannot write manifest: {e}");
        return ExitCode::from(1);
    }
    print!("{csv}");
    if report.warnings > 0 {
        eprintln!(
            "warning: {} of {} rows were infeasible (see the error column)",
            report.warnings,
            report.rows.len()
        );
    }
    if report.warnings == report.rows.len() {
        return ExitCode::from(2);
    }
    ExitCode::SUCCESS
}
