use std::path::PathBuf;
use std::process::ExitCode;

use chstab::app::{execute, prepare, Command, Invocation};
use chstab::config::Overrides;
use chstab::output::write_json;
use chstab_core::feedback::Convention;
use clap::{Args, Parser, Subcommand};

/// Proportional boundary feedback for the linearized conserved phase-field system.
#[derive(Parser)]
#[command(name = "chstab", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Parent of the per-run directories
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "k-modes")]
    k_modes: Option<usize>,
    /// e501+, e501-, pi1+ or pi1-
    #[arg(long, value_parser = parse_convention)]
    convention: Option<Convention>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Unstable eigenpairs, assumption checks and the open-loop spectrum
    Spectrum(Common),
    /// Synthesize the feedback law and certify the closed loop
    Synth(Common),
    /// Integrate the closed loop from the configured initial state
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Full nonlinear dynamics instead of the linearization
        #[arg(long)]
        nonlinear: bool,
    },
    /// Run the invariant battery
    Verify {
        #[command(flatten)]
        common: Common,
        /// Replace the synthesized gain by zero
        #[arg(long)]
        zero_gain: bool,
    },
}

fn parse_convention(s: &str) -> Result<Convention, String> {
    s.parse().map_err(|e: chstab_core::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, command) = match cli.command {
        Cmd::Spectrum(c) => (c, Command::Spectrum),
        Cmd::Synth(c) => (c, Command::Synth),
        Cmd::Simulate { common, nonlinear } => (common, Command::Simulate { nonlinear }),
        Cmd::Verify { common, zero_gain } => (common, Command::Verify { zero_gain }),
    };
    let inv = Invocation {
        config: common.config,
        out: common.out.clone(),
        overrides: Overrides {
            seed: common.seed,
            k_modes: common.k_modes,
            convention: common.convention,
        },
        command,
    };
    let (dir, result) = match prepare(&inv) {
        Ok((cfg, dir, command)) => {
            let r = execute(&cfg, &dir, command);
            (Some(dir), r)
        }
        Err(e) => (None, Err(e)),
    };
    match result {
        Ok(outcome) => {
            println!("{}", outcome.run_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let record = e.record();
            let target = dir.unwrap_or(common.out);
            if std::fs::create_dir_all(&target).is_ok() {
                let _ = write_json(&target.join("error.json"), &record);
            }
            eprintln!("{}", serde_json::to_string(&record).unwrap_or_else(|_| e.to_string()));
            ExitCode::from(record.exit_code as u8)
        }
    }
}
