//! Proportional boundary feedback: η ladder, Λ matrices, Gram matrix of the
//! eigenvector traces on Γ₁, the coupler `A = (Σ_k Λ_k B Λ_k)⁻¹` and the
//! boundary weights `w = s·Λ_S·A·Z`.
//!
//! Two conventions are supported. `e501` builds `Λ_S` from the δ-shifted
//! diagonals and carries no `α₀` factor; `pi1` carries `α₀` and leaves the
//! last diagonal entry unshifted. The coupler always uses the shifted
//! diagonals, otherwise the two zero eigenvalues make `Σ_k B_k` singular.
//! The sign is a separate flag; [`Convention::PINNED`] is the one that
//! certifies closed-loop stability on the reference scenarios.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::basis::{trace_pairing, ModeSet};
use crate::error::{Error, Result};
use crate::lifting::{assemble_lift, assemble_lift_auto, shifted_lambdas, LiftAttempt};
use crate::spectrum::{AssumptionReport, PhysParams, UnstableBasis};

/// Condition number above which `Σ_k B_k` is rejected.
pub const COUPLER_COND_LIMIT: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaLadder {
    values: Vec<f64>,
}

impl EtaLadder {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn first(&self) -> f64 {
        self.values[0]
    }
}

/// `η_1 < η_1 + 1/(N−1) < η_1 + 1/(N−2) < … < η_1 + 1`.
pub fn eta_ladder(eta1: f64, n: usize) -> Result<EtaLadder> {
    if n < 2 {
        return Err(Error::Config(format!("the ladder needs N >= 2, got {n}")));
    }
    if !(eta1 > 0.0 && eta1.is_finite()) {
        return Err(Error::Config(format!("eta1 must be positive, got {eta1}")));
    }
    let mut values = vec![eta1];
    values.extend((2..=n).map(|k| eta1 + 1.0 / (n - k + 1) as f64));
    Ok(EtaLadder { values })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    E501,
    Pi1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Convention {
    pub family: Family,
    /// `+1` or `−1`.
    pub sign: i8,
}

impl Convention {
    /// Shifted `Λ_S`, no `α₀`, negative sign.
    pub const PINNED: Convention = Convention {
        family: Family::E501,
        sign: -1,
    };

    pub const ALL: [Convention; 4] = [
        Convention { family: Family::E501, sign: 1 },
        Convention { family: Family::E501, sign: -1 },
        Convention { family: Family::Pi1, sign: 1 },
        Convention { family: Family::Pi1, sign: -1 },
    ];

    pub fn alpha0_factor(&self) -> bool {
        self.family == Family::Pi1
    }

    pub fn shifted_gains(&self) -> bool {
        self.family == Family::E501
    }
}

impl Default for Convention {
    fn default() -> Self {
        Self::PINNED
    }
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fam = match self.family {
            Family::E501 => "e501",
            Family::Pi1 => "pi1",
        };
        write!(f, "{fam}{}", if self.sign < 0 { '-' } else { '+' })
    }
}

impl FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (fam, sign) = match s.char_indices().last() {
            Some((i, '+')) => (&s[..i], 1),
            Some((i, '-')) => (&s[..i], -1),
            _ => (s.as_str(), Convention::PINNED.sign),
        };
        let family = match fam.trim_end_matches([',', ':']) {
            "e501" => Family::E501,
            "pi1" => Family::Pi1,
            other => return Err(Error::Config(format!("unknown convention '{other}'"))),
        };
        Ok(Convention { family, sign })
    }
}

/// `ψ_j|Γ₁ = coeff · e_mode|Γ₁`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiTrace {
    pub mode: usize,
    pub coeff: f64,
}

/// Gram matrix `B_ij = ⟨ψ_i, ψ_j⟩₀`.
pub fn gram_matrix(unstable: &UnstableBasis, modes: &ModeSet) -> Result<DMatrix<f64>> {
    let e = unstable.entries();
    let n = e.len();
    let mut b = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = e[i].coeff_psi * e[j].coeff_psi * trace_pairing(modes, e[i].mode, e[j].mode)?;
            b[(i, j)] = v;
            b[(j, i)] = v;
        }
    }
    Ok(b)
}

/// Diagonal of `Λ_η = diag(1/(η − λ_j))`.
pub fn lambda_diag(eta: f64, lambdas: &[f64]) -> DVector<f64> {
    DVector::from_iterator(lambdas.len(), lambdas.iter().map(|l| 1.0 / (eta - l)))
}

#[derive(Clone, Debug)]
pub struct Coupler {
    /// `Σ_k Λ_k B Λ_k`
    pub sum: DMatrix<f64>,
    /// `A = (Σ_k B_k)⁻¹`
    pub inverse: DMatrix<f64>,
    pub condition: f64,
    pub min_eigenvalue: f64,
}

/// `B_k = Λ_k B Λ_k` for every rung of the ladder.
pub fn ladder_blocks(gram: &DMatrix<f64>, ladder: &EtaLadder, shifted: &[f64]) -> Vec<DMatrix<f64>> {
    ladder
        .values()
        .iter()
        .map(|&eta| {
            let d = lambda_diag(eta, shifted);
            DMatrix::from_fn(gram.nrows(), gram.ncols(), |i, j| d[i] * gram[(i, j)] * d[j])
        })
        .collect()
}

pub fn coupler_matrix(gram: &DMatrix<f64>, ladder: &EtaLadder, shifted: &[f64]) -> Result<Coupler> {
    let sum = ladder_blocks(gram, ladder, shifted)
        .into_iter()
        .fold(DMatrix::zeros(gram.nrows(), gram.ncols()), |acc, b| acc + b);
    let eig = SymmetricEigen::new(sum.clone()).eigenvalues;
    let (min, max) = (eig.min(), eig.max());
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= COUPLER_COND_LIMIT) {
        return Err(Error::Singular(format!(
            "sum of ladder Gram blocks is singular or ill-conditioned (cond = {condition:.3e}); \
             likely a vanishing trace of some psi_j on gamma1 or coincident shifted eigenvalues"
        )));
    }
    let chol = sum
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("sum of ladder Gram blocks is not positive definite".into()))?;
    let inv = chol.inverse();
    let inverse = (&inv + inv.transpose()) * 0.5;
    Ok(Coupler {
        sum,
        inverse,
        condition,
        min_eigenvalue: min,
    })
}

/// `Z_j = ⟨(y, z), (φ_j, ψ_j)⟩` from `(y, z)` coefficients.
pub fn modal_coordinates(state: &DVector<f64>, unstable: &UnstableBasis) -> DVector<f64> {
    let k = state.len() / 2;
    DVector::from_iterator(
        unstable.n(),
        unstable
            .entries()
            .iter()
            .map(|e| e.coeff_phi * state[e.mode] + e.coeff_psi * state[k + e.mode]),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryControl {
    /// `u = Σ_i w_i ψ_i|Γ₁`
    pub weights: Vec<f64>,
    /// `‖u‖` in `L²(Γ₁)`.
    pub norm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisOptions {
    pub eta1: Option<f64>,
    pub delta: Option<f64>,
    pub convention: Convention,
    /// Synthesize even when an assumption check failed.
    pub allow_failed_assumptions: bool,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            eta1: None,
            delta: None,
            convention: Convention::PINNED,
            allow_failed_assumptions: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FeedbackLaw {
    unstable: UnstableBasis,
    alpha0: f64,
    delta: f64,
    ladder: EtaLadder,
    shifted: Vec<f64>,
    gram: DMatrix<f64>,
    coupler: Coupler,
    convention: Convention,
    lift_log: Vec<LiftAttempt>,
}

pub fn synthesize(
    modes: &ModeSet,
    p: &PhysParams,
    unstable: &UnstableBasis,
    report: &AssumptionReport,
    opts: &SynthesisOptions,
) -> Result<FeedbackLaw> {
    if !report.ok() && !opts.allow_failed_assumptions {
        return Err(Error::Assumption(report.failures().join("; ")));
    }
    let (lift, lift_log) = assemble_lift_auto(modes, p, unstable, opts.eta1, opts.delta)?;
    let ladder = eta_ladder(lift.eta(), unstable.n())?;
    for &eta in &ladder.values()[1..] {
        assemble_lift(modes, p, unstable, eta, lift.delta())?;
    }
    let gram = gram_matrix(unstable, modes)?;
    let shifted = shifted_lambdas(unstable, lift.delta());
    let coupler = coupler_matrix(&gram, &ladder, &shifted)?;
    Ok(FeedbackLaw {
        unstable: unstable.clone(),
        alpha0: p.alpha0,
        delta: lift.delta(),
        ladder,
        shifted,
        gram,
        coupler,
        convention: opts.convention,
        lift_log,
    })
}

impl FeedbackLaw {
    pub fn n(&self) -> usize {
        self.unstable.n()
    }

    pub fn unstable(&self) -> &UnstableBasis {
        &self.unstable
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn ladder(&self) -> &EtaLadder {
        &self.ladder
    }

    pub fn shifted_lambdas(&self) -> &[f64] {
        &self.shifted
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn coupler(&self) -> &Coupler {
        &self.coupler
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    pub fn lift_log(&self) -> &[LiftAttempt] {
        &self.lift_log
    }

    pub fn with_convention(&self, convention: Convention) -> Self {
        Self {
            convention,
            ..self.clone()
        }
    }

    pub fn psi_traces(&self) -> Vec<PsiTrace> {
        self.unstable
            .entries()
            .iter()
            .map(|e| PsiTrace {
                mode: e.mode,
                coeff: e.coeff_psi,
            })
            .collect()
    }

    fn gain_lambdas(&self) -> Vec<f64> {
        if self.convention.shifted_gains() {
            self.shifted.clone()
        } else {
            self.unstable.lambdas()
        }
    }

    fn scale(&self) -> f64 {
        let a = if self.convention.alpha0_factor() { self.alpha0 } else { 1.0 };
        f64::from(self.convention.sign) * a
    }

    /// Diagonal of `Λ_{η_k}` used in the gain, per rung.
    pub fn rung_diagonals(&self) -> Vec<DVector<f64>> {
        let l = self.gain_lambdas();
        self.ladder.values().iter().map(|&eta| lambda_diag(eta, &l)).collect()
    }

    /// Diagonal of `Λ_S = Σ_k Λ_{η_k}`.
    pub fn lambda_s(&self) -> DVector<f64> {
        self.rung_diagonals()
            .into_iter()
            .fold(DVector::zeros(self.n()), |acc, d| acc + d)
    }

    /// `N × N` matrix mapping `Z` to the weights.
    pub fn weight_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.lambda_s()) * &self.coupler.inverse * self.scale()
    }

    /// `N × 2K` gain from `(y, z)` coefficients to weights.
    pub fn gain_matrix(&self, k: usize) -> DMatrix<f64> {
        self.weight_matrix() * self.unstable.projector_rows(k)
    }

    pub fn eval(&self, z: &DVector<f64>) -> BoundaryControl {
        let w = self.weight_matrix() * z;
        let norm = w.dot(&(&self.gram * &w)).max(0.0).sqrt();
        BoundaryControl {
            weights: w.iter().copied().collect(),
            norm,
        }
    }

    /// Weights of the individual feedbacks `u_k`, one per rung; they sum to [`Self::eval`].
    pub fn rung_weights(&self, z: &DVector<f64>) -> Vec<DVector<f64>> {
        let az = &self.coupler.inverse * z * self.scale();
        self.rung_diagonals()
            .into_iter()
            .map(|d| d.component_mul(&az))
            .collect()
    }

    pub fn to_record(&self) -> LawRecord {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
        };
        LawRecord {
            convention: self.convention.to_string(),
            n: self.n(),
            alpha0: self.alpha0,
            delta: self.delta,
            eta_ladder: self.ladder.values.clone(),
            lambdas: self.unstable.lambdas(),
            shifted_lambdas: self.shifted.clone(),
            lambda_s: self.lambda_s().iter().copied().collect(),
            entries: self.unstable.entries().to_vec(),
            psi_traces: self.psi_traces(),
            gram: rows(&self.gram),
            coupler_sum: rows(&self.coupler.sum),
            coupler: rows(&self.coupler.inverse),
            coupler_condition: self.coupler.condition,
            lift_log: self.lift_log.clone(),
        }
    }

    /// Rebuilds a law from its audit record, recomputing the coupler.
    pub fn from_record(rec: &LawRecord, modes: &ModeSet) -> Result<Self> {
        let unstable = UnstableBasis::from_entries(rec.entries.clone())?;
        let ladder = eta_ladder(rec.eta_ladder[0], unstable.n())?;
        let gram = gram_matrix(&unstable, modes)?;
        let shifted = shifted_lambdas(&unstable, rec.delta);
        let coupler = coupler_matrix(&gram, &ladder, &shifted)?;
        Ok(Self {
            unstable,
            alpha0: rec.alpha0,
            delta: rec.delta,
            ladder,
            shifted,
            gram,
            coupler,
            convention: rec.convention.parse()?,
            lift_log: rec.lift_log.clone(),
        })
    }
}

/// JSON-serializable snapshot of a synthesized law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawRecord {
    pub convention: String,
    pub n: usize,
    pub alpha0: f64,
    pub delta: f64,
    pub eta_ladder: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub shifted_lambdas: Vec<f64>,
    pub lambda_s: Vec<f64>,
    pub entries: Vec<crate::spectrum::UnstableEntry>,
    pub psi_traces: Vec<PsiTrace>,
    pub gram: Vec<Vec<f64>>,
    pub coupler_sum: Vec<Vec<f64>>,
    pub coupler: Vec<Vec<f64>>,
    pub coupler_condition: f64,
    pub lift_log: Vec<LiftAttempt>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{neumann_modes, Domain, Side};
    use crate::spectrum::{check_assumptions, derive_params, unstable_basis};
    use std::f64::consts::PI;

    fn r1() -> (ModeSet, PhysParams, UnstableBasis, FeedbackLaw) {
        let ms = neumann_modes(&Domain::interval(2f64.sqrt() * PI, &[Side::Right]).unwrap(), 32).unwrap();
        let p = derive_params(1.0, 1.0, 1.0, -1.0).unwrap();
        let ub = unstable_basis(&ms, &p).unwrap();
        let rep = check_assumptions(&ms, &p, &ub);
        let law = synthesize(&ms, &p, &ub, &rep, &SynthesisOptions::default()).unwrap();
        (ms, p, ub, law)
    }

    #[test]
    fn ladders() {
        assert_eq!(eta_ladder(2.0, 3).unwrap().values(), &[2.0, 2.5, 3.0]);
        assert_eq!(eta_ladder(1.0, 2).unwrap().values(), &[1.0, 2.0]);
        for n in 2..12 {
            let l = eta_ladder(1.7, n).unwrap();
            assert!((l.values().last().unwrap() - l.first() - 1.0).abs() < 1e-14);
            assert!(l.values().windows(2).all(|w| w[0] < w[1]));
        }
        assert!(eta_ladder(1.0, 1).is_err());
        assert!(eta_ladder(0.0, 3).is_err());
    }

    #[test]
    fn convention_parsing() {
        for c in Convention::ALL {
            assert_eq!(c.to_string().parse::<Convention>().unwrap(), c);
        }
        assert_eq!("E501".parse::<Convention>().unwrap(), Convention::PINNED);
        assert!("foo+".parse::<Convention>().is_err());
    }

    #[test]
    fn r1_gram_is_rank_one() {
        let (ms, _, ub, law) = r1();
        let l = 2f64.sqrt() * PI;
        let e = ub.entries()[0];
        let t = [
            e.coeff_psi * (2.0 / l).sqrt() * (PI).cos(),
            1.0 / (2.0 * l).sqrt(),
            1.0 / (2.0 * l).sqrt(),
        ];
        assert!((t[0] - 0.4129036).abs() < 1e-6);
        assert!((t[1] - 0.335469).abs() < 1e-6);
        for i in 0..3 {
            for j in 0..3 {
                assert!((law.gram()[(i, j)] - t[i] * t[j]).abs() < 1e-14);
            }
        }
        assert_eq!(gram_matrix(&ub, &ms).unwrap(), *law.gram());
        let sv = law.gram().clone().singular_values();
        assert!(sv.iter().filter(|s| **s > 1e-12).count() == 1);
    }

    #[test]
    fn coupler_inverts_sum() {
        let (_, _, _, law) = r1();
        let c = law.coupler();
        let id = &c.inverse * &c.sum;
        assert!((id - DMatrix::identity(3, 3)).abs().max() < 1e-10);
        assert!(c.min_eigenvalue > 0.0);
    }

    #[test]
    fn vanishing_trace_is_singular() {
        let (_, _, _, law) = r1();
        let mut g = law.gram().clone();
        for j in 0..3 {
            g[(0, j)] = 0.0;
            g[(j, 0)] = 0.0;
        }
        let err = coupler_matrix(&g, law.ladder(), law.shifted_lambdas()).unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
        // unshifted zero eigenvalues duplicate a column of the Cauchy matrix
        let err = coupler_matrix(law.gram(), law.ladder(), &law.unstable().lambdas()).unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
    }

    #[test]
    fn feedback_linearity_and_zero() {
        let (_, _, _, law) = r1();
        assert!(law.eval(&DVector::zeros(3)).weights.iter().all(|w| *w == 0.0));
        let z = DVector::from_vec(vec![0.3, -1.2, 0.7]);
        let w1 = law.eval(&z).weights;
        let w2 = law.eval(&(&z * 2.5)).weights;
        for (a, b) in w1.iter().zip(&w2) {
            assert!((2.5 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn unit_vector_column() {
        let (_, _, _, law) = r1();
        let z = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        // oracle: compose Lambda_S and A independently
        let etas = law.ladder().values();
        let lt = law.shifted_lambdas();
        let ls: Vec<f64> = (0..3).map(|i| etas.iter().map(|e| 1.0 / (e - lt[i])).sum()).collect();
        let a = law.coupler().inverse.clone();
        let w = law.eval(&z).weights;
        for i in 0..3 {
            let expect = -ls[i] * a[(i, 0)];
            assert!((w[i] - expect).abs() <= 1e-12 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn rung_sum_equals_aggregate() {
        let (_, _, _, law) = r1();
        let z = DVector::from_vec(vec![0.2, 0.5, -0.4]);
        for c in Convention::ALL {
            let l = law.with_convention(c);
            let total = l.rung_weights(&z).into_iter().fold(DVector::zeros(3), |a, b| a + b);
            let agg = DVector::from_vec(l.eval(&z).weights);
            assert!((total - &agg).norm() <= 1e-12 * agg.norm().max(1.0));
        }
    }

    #[test]
    fn modal_coordinates_of_eigenvectors() {
        let (_, _, ub, _) = r1();
        for (j, e) in ub.entries().iter().enumerate() {
            let z = modal_coordinates(&e.state_vector(32), &ub);
            for i in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((z[i] - expect).abs() < 1e-15);
            }
        }
        let mut s = DVector::zeros(64);
        s[5] = 1.0;
        s[40] = -2.0;
        assert_eq!(modal_coordinates(&s, &ub), DVector::zeros(3));
    }

    #[test]
    fn record_round_trip() {
        let (ms, _, _, law) = r1();
        let rec = law.to_record();
        let json = serde_json::to_string(&rec).unwrap();
        let back: LawRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rec);
        let law2 = FeedbackLaw::from_record(&back, &ms).unwrap();
        assert_eq!(law2.weight_matrix(), law.weight_matrix());
    }

    #[test]
    fn refuses_failed_assumptions() {
        let ms = neumann_modes(&Domain::interval(PI, &[Side::Right]).unwrap(), 32).unwrap();
        let p = derive_params(1.0, 1.0, 1.0, -1.0).unwrap();
        let ub = unstable_basis(&ms, &p).unwrap();
        let rep = check_assumptions(&ms, &p, &ub);
        let err = synthesize(&ms, &p, &ub, &rep, &SynthesisOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Assumption(_)));
        let opts = SynthesisOptions {
            allow_failed_assumptions: true,
            ..Default::default()
        };
        assert!(synthesize(&ms, &p, &ub, &rep, &opts).is_ok());
    }
}
