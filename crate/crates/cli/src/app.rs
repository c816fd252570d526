//! Subcommand execution.

use std::path::{Path, PathBuf};

use chstab_core::closed_loop::{fit_decay, DecayFit, SpectralReport};
use chstab_core::feedback::{FeedbackLaw, LawRecord};
use serde::Serialize;

use crate::config::{Overrides, RunMode, ScenarioConfig};
use crate::error::{CliError, CliResult};
use crate::output::{run_dir, write_json, write_trajectory_csv};
use crate::scenario::Scenario;
use crate::verify::{verify, VerifyOptions, MIN_MARGIN};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Spectrum,
    Synth,
    Simulate { nonlinear: bool },
    Verify { zero_gain: bool },
}

#[derive(Clone, Debug)]
pub struct Invocation {
    pub config: PathBuf,
    pub out: PathBuf,
    pub overrides: Overrides,
    pub command: Command,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub run_dir: PathBuf,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Serialize)]
struct LawOutput {
    law: LawRecord,
    closed_loop: SpectralReport,
    certified: bool,
}

#[derive(Debug, Serialize)]
struct SimulationReport {
    mode: &'static str,
    initial: String,
    dt: f64,
    t_final: f64,
    samples: usize,
    initial_norm: f64,
    final_norm: f64,
    mass_drift: f64,
    margin: f64,
    fit: Option<DecayFit>,
}

/// Loads the config and applies overrides. Returns the effective config, its
/// run directory and the command with `simulate` resolved against `run.mode`.
pub fn prepare(inv: &Invocation) -> CliResult<(ScenarioConfig, PathBuf, Command)> {
    let mut cfg = ScenarioConfig::load(&inv.config)?;
    cfg.apply(&inv.overrides);
    let mut command = inv.command;
    if let Command::Simulate { nonlinear } = command {
        let nonlinear = nonlinear || cfg.run.mode == Some(RunMode::SimulateNonlinear);
        command = Command::Simulate { nonlinear };
        cfg.run.mode = Some(if nonlinear {
            RunMode::SimulateNonlinear
        } else {
            RunMode::SimulateLinear
        });
    }
    cfg.validate()?;
    let name = match command {
        Command::Verify { zero_gain: true } => format!("{}-zero-gain", cfg.hash()),
        _ => cfg.hash(),
    };
    let dir = run_dir(&inv.out, &name)?;
    let stale = dir.join("error.json");
    if stale.exists() {
        std::fs::remove_file(&stale).map_err(|e| CliError::io(&stale, e))?;
    }
    Ok((cfg, dir, command))
}

pub fn execute(cfg: &ScenarioConfig, dir: &Path, command: Command) -> CliResult<Outcome> {
    let mut files = Vec::new();
    let mut put = |name: &str| {
        let p = dir.join(name);
        files.push(p.clone());
        p
    };
    let text = toml::to_string(cfg).map_err(|e| CliError::Config(e.to_string()))?;
    let cfg_path = put("config.toml");
    std::fs::write(&cfg_path, text).map_err(|e| CliError::io(&cfg_path, e))?;

    let scn = Scenario::build(cfg)?;
    write_json(&put("spectrum.json"), &scn.spectrum_output())?;
    match command {
        Command::Spectrum => {}
        Command::Synth => {
            let law = scn.synthesize()?;
            write_law(&scn, &law, &put("law.json"))?;
        }
        Command::Simulate { nonlinear } => {
            let law = scn.synthesize()?;
            let system = write_law(&scn, &law, &put("law.json"))?;
            let margin = system.spectrum.margin;
            let x0 = scn.initial_state(&mut scn.rng())?;
            let traj = if nonlinear {
                let model = scn.nonlinear_model(system)?;
                scn.simulate_nonlinear(&model, &x0)?
            } else {
                scn.simulate_linear(&system, &x0)?
            };
            write_trajectory_csv(&put("trajectory.csv"), &traj)?;
            let t_final = cfg.discretization.t_final;
            let report = SimulationReport {
                mode: if nonlinear { "simulate-nonlinear" } else { "simulate-linear" },
                initial: cfg.run.initial.clone(),
                dt: traj.dt,
                t_final,
                samples: traj.len(),
                initial_norm: traj.norms[0],
                final_norm: *traj.norms.last().expect("non-empty trajectory"),
                mass_drift: traj.mass_drift(),
                margin,
                fit: fit_decay(&traj, (t_final / 2.0, t_final)).ok(),
            };
            write_json(&put("report.json"), &report)?;
        }
        Command::Verify { zero_gain } => {
            let report = verify(&scn, VerifyOptions { zero_gain })?;
            write_json(&put("report.json"), &report)?;
            if !report.passed {
                return Err(CliError::VerifyFailed(report.failed()));
            }
        }
    }
    Ok(Outcome {
        run_dir: dir.to_path_buf(),
        files,
    })
}

fn write_law(
    scn: &Scenario,
    law: &FeedbackLaw,
    path: &Path,
) -> CliResult<chstab_core::closed_loop::ClosedLoopSystem> {
    let system = scn.closed_loop(law)?;
    write_json(
        path,
        &LawOutput {
            law: law.to_record(),
            closed_loop: system.spectrum.clone(),
            certified: system.spectrum.certifies(MIN_MARGIN),
        },
    )?;
    Ok(system)
}
