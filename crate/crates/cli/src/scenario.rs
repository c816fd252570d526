//! Pipeline objects built from a validated configuration.

use std::path::Path;

use chstab_core::basis::{neumann_modes, CollocationGrid, Domain, ModeSet};
use chstab_core::closed_loop::{
    assemble_closed_loop, assemble_open_loop, integrate_linear, integrate_nonlinear, mass_matched,
    spectral_report, ClosedLoopSystem, NonlinearModel, SpectralReport, StateVec, Trajectory,
};
use chstab_core::feedback::{synthesize, FeedbackLaw, SynthesisOptions};
use chstab_core::spectrum::{
    check_assumptions, derive_params, effective_slope, unstable_basis, AssumptionReport, Equilibrium,
    PhysParams, UnstableBasis, UnstableEntry,
};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{InitialCondition, ScenarioConfig};
use crate::error::{CliError, CliResult};

#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub domain: Domain,
    pub modes: ModeSet,
    pub grid: CollocationGrid,
    pub equilibrium: Equilibrium,
    pub params: PhysParams,
    pub unstable: UnstableBasis,
    pub assumptions: AssumptionReport,
}

/// Whitespace- or comma-separated numbers; `#` starts a comment.
pub fn read_numbers(path: &Path) -> CliResult<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            let v: f64 = tok.parse().map_err(|_| {
                CliError::Config(format!("{}:{}: '{tok}' is not a number", path.display(), no + 1))
            })?;
            out.push(v);
        }
    }
    Ok(out)
}

impl Scenario {
    pub fn build(config: &ScenarioConfig) -> CliResult<Self> {
        config.validate()?;
        let domain = config.build_domain()?;
        let modes = neumann_modes(&domain, config.k())?;
        let grid = CollocationGrid::dealiased(&modes)?;
        let eq = &config.physics.equilibrium;
        let equilibrium = match &eq.table {
            Some(path) => Equilibrium::tabulated(read_numbers(path)?, eq.theta_inf),
            None => Equilibrium::constant(eq.phi_inf.unwrap_or(0.0), eq.theta_inf),
        };
        let fbar = effective_slope(&equilibrium, &grid)?;
        let ph = &config.physics;
        let params = derive_params(ph.nu, ph.l0, ph.gamma0, fbar)?;
        let unstable = unstable_basis(&modes, &params)?;
        let assumptions = check_assumptions(&modes, &params, &unstable);
        Ok(Self {
            config: config.clone(),
            domain,
            modes,
            grid,
            equilibrium,
            params,
            unstable,
            assumptions,
        })
    }

    pub fn k(&self) -> usize {
        self.modes.len()
    }

    /// Same scenario at another truncation.
    pub fn with_k(&self, k: usize) -> CliResult<Self> {
        let mut cfg = self.config.clone();
        cfg.discretization.k = Some(k);
        Self::build(&cfg)
    }

    pub fn synthesis_options(&self) -> CliResult<SynthesisOptions> {
        let s = &self.config.synthesis;
        Ok(SynthesisOptions {
            eta1: s.eta1,
            delta: s.delta,
            convention: self.config.convention()?,
            allow_failed_assumptions: s.allow_failed_assumptions,
        })
    }

    pub fn synthesize(&self) -> CliResult<FeedbackLaw> {
        let opts = self.synthesis_options()?;
        Ok(synthesize(&self.modes, &self.params, &self.unstable, &self.assumptions, &opts)?)
    }

    pub fn closed_loop(&self, law: &FeedbackLaw) -> CliResult<ClosedLoopSystem> {
        Ok(assemble_closed_loop(&self.modes, &self.params, law)?)
    }

    pub fn open_loop_report(&self) -> SpectralReport {
        spectral_report(&assemble_open_loop(&self.modes, &self.params))
    }

    pub fn nonlinear_model(&self, system: ClosedLoopSystem) -> CliResult<NonlinearModel> {
        Ok(NonlinearModel::new(&self.modes, &self.params, system, &self.equilibrium)?)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.config.run.seed)
    }

    /// Initial state per the run block; random states use `rng`.
    pub fn initial_state(&self, rng: &mut ChaCha8Rng) -> CliResult<StateVec> {
        let k = self.k();
        let x = match self.config.initial()? {
            InitialCondition::RandomMassMatched => random_mass_matched(k, self.config.run.amplitude, rng),
            InitialCondition::Eigvec(j) => {
                let e = self.unstable.entries().get(j - 1).ok_or_else(|| {
                    CliError::Config(format!("eigvec({j}) but only {} unstable entries", self.unstable.n()))
                })?;
                e.state_vector(k) * self.config.run.amplitude
            }
            InitialCondition::File(p) => {
                let v = read_numbers(&p)?;
                if v.len() != 2 * k {
                    return Err(CliError::Config(format!(
                        "initial state file has {} values, expected 2K = {}",
                        v.len(),
                        2 * k
                    )));
                }
                DVector::from_vec(v)
            }
        };
        Ok(StateVec::from_stacked(&x)?)
    }

    pub fn simulate_linear(&self, system: &ClosedLoopSystem, state0: &StateVec) -> CliResult<Trajectory> {
        let d = &self.config.discretization;
        Ok(integrate_linear(system, state0, d.t_final, d.dt_linear)?)
    }

    pub fn simulate_nonlinear(&self, model: &NonlinearModel, state0: &StateVec) -> CliResult<Trajectory> {
        let d = &self.config.discretization;
        Ok(integrate_nonlinear(model, state0, d.t_final, d.dt, d.record_stride)?)
    }

    pub fn spectrum_output(&self) -> SpectrumOutput {
        SpectrumOutput {
            k: self.k(),
            n: self.unstable.n(),
            params: self.params,
            lambda_bar: self.params.lambda_bar(),
            lambdas: self.unstable.lambdas(),
            entries: self.unstable.entries().to_vec(),
            warnings: self.unstable.warnings().to_vec(),
            assumptions: self.assumptions.clone(),
            assumptions_ok: self.assumptions.ok(),
            open_loop: self.open_loop_report(),
        }
    }
}

/// Uniform coefficients in `[−1, 1]`, zero y-mass, scaled to norm `amplitude`.
pub fn random_mass_matched(k: usize, amplitude: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
    loop {
        let x = mass_matched(DVector::from_fn(2 * k, |_, _| rng.gen_range(-1.0..1.0)));
        let n = x.norm();
        if n > 0.0 {
            return x * (amplitude / n);
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumOutput {
    pub k: usize,
    pub n: usize,
    pub params: PhysParams,
    pub lambda_bar: f64,
    pub lambdas: Vec<f64>,
    pub entries: Vec<UnstableEntry>,
    pub warnings: Vec<String>,
    pub assumptions: AssumptionReport,
    pub assumptions_ok: bool,
    pub open_loop: SpectralReport,
}
