//! TOML scenario configuration.
//!
//! ```toml
//! [domain]
//! kind = "interval"
//! lengths = [4.442882938158366]
//! gamma1 = ["right"]
//!
//! [physics]
//! nu = 1.0
//! l0 = 1.0
//! gamma0 = 1.0
//! [physics.equilibrium]
//! phi_inf = 0.0
//! theta_inf = 0.0
//!
//! [discretization]
//! k = 32
//! dt = 1e-3
//! t_final = 80.0
//!
//! [synthesis]
//! convention = "e501-"
//!
//! [run]
//! mode = "verify"
//! seed = 7
//! initial = "random-mass-matched"
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chstab_core::basis::{Domain, Side};
use chstab_core::feedback::Convention;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Interval,
    Rectangle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub kind: DomainKind,
    pub lengths: Vec<f64>,
    pub gamma1: Vec<Side>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumConfig {
    /// Constant `φ∞`; mutually exclusive with `table`.
    pub phi_inf: Option<f64>,
    /// File of `φ∞` values on the dealiased grid nodes (x-major), one per line.
    pub table: Option<PathBuf>,
    #[serde(default)]
    pub theta_inf: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    pub nu: f64,
    pub l0: f64,
    pub gamma0: f64,
    #[serde(default)]
    pub equilibrium: EquilibriumConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscretizationConfig {
    /// Number of retained modes; 32 on intervals, 64 on rectangles when absent.
    pub k: Option<usize>,
    /// Nonlinear step.
    pub dt: f64,
    /// Output spacing of the (exact) linear propagator.
    pub dt_linear: f64,
    pub t_final: f64,
    /// Keep every `record_stride`-th nonlinear step.
    pub record_stride: usize,
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        Self {
            k: None,
            dt: 1e-3,
            dt_linear: 0.05,
            t_final: 80.0,
            record_stride: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisConfig {
    pub eta1: Option<f64>,
    pub delta: Option<f64>,
    pub convention: String,
    pub allow_failed_assumptions: bool,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            eta1: None,
            delta: None,
            convention: Convention::PINNED.to_string(),
            allow_failed_assumptions: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    Spectrum,
    Synth,
    SimulateLinear,
    SimulateNonlinear,
    Verify,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InitialCondition {
    RandomMassMatched,
    /// 1-based index into the unstable basis.
    Eigvec(usize),
    File(PathBuf),
}

impl FromStr for InitialCondition {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        let s = s.trim();
        if s == "random-mass-matched" {
            return Ok(Self::RandomMassMatched);
        }
        let inner = |prefix: &str| {
            s.strip_prefix(prefix)
                .and_then(|r| r.strip_prefix('('))
                .and_then(|r| r.strip_suffix(')'))
                .map(str::trim)
        };
        if let Some(j) = inner("eigvec") {
            let j: usize = j
                .parse()
                .map_err(|_| CliError::Config(format!("bad eigenvector index in '{s}'")))?;
            if j == 0 {
                return Err(CliError::Config("eigvec index is 1-based".into()));
            }
            return Ok(Self::Eigvec(j));
        }
        if let Some(p) = inner("file") {
            return Ok(Self::File(PathBuf::from(p)));
        }
        Err(CliError::Config(format!(
            "initial condition '{s}' is not one of random-mass-matched, eigvec(j), file(path)"
        )))
    }
}

impl fmt::Display for InitialCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::RandomMassMatched => write!(f, "random-mass-matched"),
            Self::Eigvec(j) => write!(f, "eigvec({j})"),
            Self::File(p) => write!(f, "file({})", p.display()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mode: Option<RunMode>,
    pub seed: u64,
    pub initial: String,
    /// Norm of the random initial state.
    pub amplitude: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: None,
            seed: 0,
            initial: "random-mass-matched".into(),
            amplitude: 1e-2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub domain: DomainConfig,
    pub physics: PhysicsConfig,
    #[serde(default)]
    pub discretization: DiscretizationConfig,
    #[serde(default)]
    pub synthesis: SynthesisConfig,
    #[serde(default)]
    pub run: RunConfig,
}

/// Command-line overrides applied on top of the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub k_modes: Option<usize>,
    pub convention: Option<Convention>,
}

fn positive(name: &str, v: f64) -> CliResult<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))?;
        Ok(cfg)
    }

    /// Reads and validates; relative table/initial-state paths are resolved against the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(t) = &cfg.physics.equilibrium.table {
            if t.is_relative() {
                cfg.physics.equilibrium.table = Some(base.join(t));
            }
        }
        if let InitialCondition::File(p) = cfg.initial()? {
            if p.is_relative() {
                cfg.run.initial = InitialCondition::File(base.join(p)).to_string();
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.run.seed = s;
        }
        if let Some(k) = o.k_modes {
            self.discretization.k = Some(k);
        }
        if let Some(c) = o.convention {
            self.synthesis.convention = c.to_string();
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let d = &self.domain;
        let want = match d.kind {
            DomainKind::Interval => 1,
            DomainKind::Rectangle => 2,
        };
        if d.lengths.len() != want {
            return Err(CliError::Config(format!(
                "domain.lengths needs {want} entries for {:?}, got {}",
                d.kind,
                d.lengths.len()
            )));
        }
        for &l in &d.lengths {
            positive("domain length", l)?;
        }
        self.build_domain()?;
        let p = &self.physics;
        positive("physics.nu", p.nu)?;
        positive("physics.l0", p.l0)?;
        positive("physics.gamma0", p.gamma0)?;
        let eq = &p.equilibrium;
        match (eq.phi_inf, &eq.table) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "physics.equilibrium: give either phi_inf or table, not both".into(),
                ))
            }
            (Some(v), None) if !v.is_finite() => {
                return Err(CliError::Config(format!("phi_inf must be finite, got {v}")))
            }
            (None, Some(t)) if !t.is_file() => {
                return Err(CliError::Config(format!("equilibrium table {} does not exist", t.display())))
            }
            _ => {}
        }
        if !eq.theta_inf.is_finite() {
            return Err(CliError::Config("theta_inf must be finite".into()));
        }
        let disc = &self.discretization;
        if self.k() < 2 {
            return Err(CliError::Config(format!("k must be at least 2, got {}", self.k())));
        }
        if self.k() > 128 {
            return Err(CliError::Config(format!("k = {} exceeds the dense limit 128", self.k())));
        }
        positive("discretization.dt", disc.dt)?;
        positive("discretization.dt_linear", disc.dt_linear)?;
        positive("discretization.t_final", disc.t_final)?;
        if disc.t_final < disc.dt.max(disc.dt_linear) {
            return Err(CliError::Config("t_final must be at least one step".into()));
        }
        if disc.record_stride == 0 {
            return Err(CliError::Config("record_stride must be at least 1".into()));
        }
        let s = &self.synthesis;
        if let Some(e) = s.eta1 {
            positive("synthesis.eta1", e)?;
        }
        if let Some(e) = s.delta {
            positive("synthesis.delta", e)?;
        }
        self.convention()?;
        positive("run.amplitude", self.run.amplitude)?;
        if let InitialCondition::File(p) = self.initial()? {
            if !p.is_file() {
                return Err(CliError::Config(format!("initial state file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.discretization.k.unwrap_or(match self.domain.kind {
            DomainKind::Interval => 32,
            DomainKind::Rectangle => 64,
        })
    }

    pub fn convention(&self) -> CliResult<Convention> {
        Ok(self.synthesis.convention.parse()?)
    }

    pub fn initial(&self) -> CliResult<InitialCondition> {
        self.run.initial.parse()
    }

    pub fn build_domain(&self) -> CliResult<Domain> {
        let d = &self.domain;
        Ok(match d.kind {
            DomainKind::Interval => Domain::interval(d.lengths[0], &d.gamma1)?,
            DomainKind::Rectangle => Domain::rectangle(d.lengths[0], d.lengths[1], &d.gamma1)?,
        })
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(digest)[..16].to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const R1: &str = r#"
[domain]
kind = "interval"
lengths = [4.442882938158366]
gamma1 = ["right"]

[physics]
nu = 1.0
l0 = 1.0
gamma0 = 1.0
"#;

    #[test]
    fn defaults() {
        let c = ScenarioConfig::parse(R1).unwrap();
        c.validate().unwrap();
        assert_eq!(c.k(), 32);
        assert_eq!(c.convention().unwrap(), Convention::PINNED);
        assert_eq!(c.initial().unwrap(), InitialCondition::RandomMassMatched);
        assert_eq!(c.physics.equilibrium.phi_inf, None);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ScenarioConfig::parse(&format!("{R1}\nbogus = 1\n")).is_err());
        let mut c = ScenarioConfig::parse(R1).unwrap();
        c.physics.nu = -1.0;
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::parse(R1).unwrap();
        c.domain.lengths.push(1.0);
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::parse(R1).unwrap();
        c.domain.gamma1 = vec![Side::Top];
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::parse(R1).unwrap();
        c.synthesis.convention = "xyz+".into();
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::parse(R1).unwrap();
        c.physics.equilibrium.table = Some("/nonexistent/table.txt".into());
        assert!(c.validate().is_err());
    }

    #[test]
    fn initial_specs() {
        assert_eq!("eigvec(2)".parse::<InitialCondition>().unwrap(), InitialCondition::Eigvec(2));
        assert_eq!(
            "file(a/b.txt)".parse::<InitialCondition>().unwrap(),
            InitialCondition::File("a/b.txt".into())
        );
        assert!("eigvec(0)".parse::<InitialCondition>().is_err());
        assert!("sine".parse::<InitialCondition>().is_err());
    }

    #[test]
    fn hash_tracks_overrides() {
        let c = ScenarioConfig::parse(R1).unwrap();
        let mut d = c.clone();
        assert_eq!(c.hash(), d.hash());
        d.apply(&Overrides {
            seed: Some(9),
            ..Default::default()
        });
        assert_ne!(c.hash(), d.hash());
        assert_eq!(c.hash().len(), 16);
    }
}
