//! Neumann lifting: maps boundary data `a ∈ L²(Γ₁)` to the state solving
//! the shifted, unstable-mode-corrected elliptic problem, in truncated
//! spectral coordinates.
//!
//! Boundary data only reach the z-rows: the flux contributions in the
//! y-equation, `ν·(−γ₀/ν)` and `γ·α₀`, cancel because `γα₀ = γ₀`.

use nalgebra::{DMatrix, DVector, LU};
use serde::{Deserialize, Serialize};

use crate::basis::{trace_pairing_matrix, ModeSet};
use crate::error::{Error, Result};
use crate::spectrum::{mode_block, PhysParams, UnstableBasis};

/// Condition number above which the lifting system is treated as singular.
pub const LIFT_COND_LIMIT: f64 = 1e12;
/// Number of η doublings attempted by [`assemble_lift_auto`].
pub const LIFT_MAX_RETRIES: usize = 8;

/// Block-diagonal matrix of the linearized operator in the `(y, z)` layout.
pub fn operator_matrix(modes: &ModeSet, p: &PhysParams) -> DMatrix<f64> {
    let k = modes.len();
    let mut m = DMatrix::zeros(2 * k, 2 * k);
    for (j, mode) in modes.modes().iter().enumerate() {
        let b = mode_block(mode.mu, p);
        m[(j, j)] = b[(0, 0)];
        m[(j, k + j)] = b[(0, 1)];
        m[(k + j, j)] = b[(1, 0)];
        m[(k + j, k + j)] = b[(1, 1)];
    }
    m
}

/// Shifted eigenvalues `(λ_1, …, λ_{N−1}, λ_N + δ)`.
pub fn shifted_lambdas(unstable: &UnstableBasis, delta: f64) -> Vec<f64> {
    let mut l = unstable.lambdas();
    if let Some(last) = l.last_mut() {
        *last += delta;
    }
    l
}

/// Right-hand side produced by trace data `a = Σ a_k e_k|Γ₁`:
/// `α₀⟨a, e_j⟩₀` in z-row `j`, zero in every y-row.
pub fn boundary_source(trace_pairs: &DMatrix<f64>, alpha0: f64, a: &DVector<f64>) -> DVector<f64> {
    let k = trace_pairs.nrows();
    let mut rhs = DVector::zeros(2 * k);
    let z = trace_pairs.tr_mul(a) * alpha0;
    rhs.rows_mut(k, k).copy_from(&z);
    rhs
}

#[derive(Clone, Debug)]
pub struct LiftSystem {
    eta: f64,
    delta: f64,
    alpha0: f64,
    matrix: DMatrix<f64>,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    condition: f64,
    trace_pairs: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftAttempt {
    pub eta: f64,
    pub condition: f64,
    pub accepted: bool,
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn assemble_lift(
    modes: &ModeSet,
    p: &PhysParams,
    unstable: &UnstableBasis,
    eta: f64,
    delta: f64,
) -> Result<LiftSystem> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Config(format!("delta must be positive, got {delta}")));
    }
    let max_abs = unstable.lambdas().iter().fold(0.0f64, |m, l| m.max(l.abs()));
    if !(eta > max_abs && eta.is_finite()) {
        return Err(Error::Config(format!(
            "eta = {eta} must exceed every |lambda_j| (max {max_abs})"
        )));
    }
    let shifted = shifted_lambdas(unstable, delta);
    if shifted.iter().any(|l| eta - l == 0.0) {
        return Err(Error::Config(format!("eta = {eta} coincides with a shifted eigenvalue")));
    }

    let k = modes.len();
    let n = unstable.n();
    let mut matrix = operator_matrix(modes, p);
    for i in 0..2 * k {
        matrix[(i, i)] += eta;
    }
    for (j, e) in unstable.entries().iter().enumerate() {
        let v = e.state_vector(k);
        let mut weight = -2.0 * e.lambda;
        if j + 1 == n {
            weight -= delta;
        }
        matrix.ger(weight, &v, &v, 1.0);
    }

    let condition = condition_number(&matrix);
    if !(condition < LIFT_COND_LIMIT) {
        return Err(Error::Singular(format!(
            "lifting system is singular or ill-conditioned (cond = {condition:.3e}); eta = {eta} is insufficient"
        )));
    }
    Ok(LiftSystem {
        eta,
        delta,
        alpha0: p.alpha0,
        lu: matrix.clone().lu(),
        matrix,
        condition,
        trace_pairs: trace_pairing_matrix(modes),
    })
}

/// Default starting shift `η₁ = 1 + 2·max|λ_j|`.
pub fn default_eta(unstable: &UnstableBasis) -> f64 {
    1.0 + 2.0 * unstable.lambdas().iter().fold(0.0f64, |m, l| m.max(l.abs()))
}

/// Default `δ = min(1, η₁/2)`.
pub fn default_delta(eta1: f64) -> f64 {
    (eta1 / 2.0).min(1.0)
}

/// Assembles with `η` starting at `eta` (or the default) and doubling until
/// the condition estimate falls below [`LIFT_COND_LIMIT`].
pub fn assemble_lift_auto(
    modes: &ModeSet,
    p: &PhysParams,
    unstable: &UnstableBasis,
    eta: Option<f64>,
    delta: Option<f64>,
) -> Result<(LiftSystem, Vec<LiftAttempt>)> {
    let mut eta = eta.unwrap_or_else(|| default_eta(unstable));
    let delta = delta.unwrap_or_else(|| default_delta(eta));
    let mut log = Vec::new();
    let mut last_err = None;
    for _ in 0..=LIFT_MAX_RETRIES {
        match assemble_lift(modes, p, unstable, eta, delta) {
            Ok(sys) => {
                log.push(LiftAttempt {
                    eta,
                    condition: sys.condition,
                    accepted: true,
                });
                return Ok((sys, log));
            }
            Err(e @ Error::Singular(_)) => {
                log.push(LiftAttempt {
                    eta,
                    condition: f64::INFINITY,
                    accepted: false,
                });
                last_err = Some(e);
                eta *= 2.0;
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

impl LiftSystem {
    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn k(&self) -> usize {
        self.trace_pairs.nrows()
    }

    pub fn source(&self, a: &DVector<f64>) -> Result<DVector<f64>> {
        if a.len() != self.k() {
            return Err(Error::Config(format!(
                "trace data has {} coefficients, expected K = {}",
                a.len(),
                self.k()
            )));
        }
        Ok(boundary_source(&self.trace_pairs, self.alpha0, a))
    }

    /// `D_η a` in `(y, z)` coefficients.
    pub fn apply(&self, a: &DVector<f64>) -> Result<DVector<f64>> {
        let rhs = self.source(a)?;
        self.lu
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("lifting LU solve failed".into()))
    }

    /// Relative residual `‖M x − b‖ / ‖b‖` of a lifted state.
    pub fn residual(&self, a: &DVector<f64>, x: &DVector<f64>) -> Result<f64> {
        let rhs = self.source(a)?;
        let r = (&self.matrix * x - &rhs).norm();
        let scale = rhs.norm();
        Ok(if scale == 0.0 { r } else { r / scale })
    }

    /// `|⟨D_η a, (φ_j, ψ_j)⟩ − α₀/(η − λ̃_j)·⟨a, ψ_j⟩₀|` for every unstable entry.
    pub fn verify_identity(&self, unstable: &UnstableBasis, a: &DVector<f64>) -> Result<Vec<f64>> {
        let k = self.k();
        let x = self.apply(a)?;
        let shifted = shifted_lambdas(unstable, self.delta);
        let pairs_a = self.trace_pairs.tr_mul(a);
        Ok(unstable
            .entries()
            .iter()
            .zip(shifted)
            .map(|(e, lt)| {
                let lhs = e.state_vector(k).dot(&x);
                let a_psi = e.coeff_psi * pairs_a[e.mode];
                let rhs = self.alpha0 / (self.eta - lt) * a_psi;
                (lhs - rhs).abs()
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{neumann_modes, Domain, Side};
    use crate::spectrum::{derive_params, unstable_basis};
    use std::f64::consts::PI;

    fn setup() -> (ModeSet, PhysParams, UnstableBasis) {
        let ms = neumann_modes(&Domain::interval(2f64.sqrt() * PI, &[Side::Right]).unwrap(), 32).unwrap();
        let p = derive_params(1.0, 1.0, 1.0, -1.0).unwrap();
        let ub = unstable_basis(&ms, &p).unwrap();
        (ms, p, ub)
    }

    #[test]
    fn r1_is_solvable() {
        let (ms, p, ub) = setup();
        let sys = assemble_lift(&ms, &p, &ub, 2.0, 0.5).unwrap();
        assert!(sys.condition().is_finite() && sys.condition() < LIFT_COND_LIMIT);
        let a = DVector::from_fn(32, |i, _| (i as f64 * 0.37).sin());
        let x = sys.apply(&a).unwrap();
        assert!(sys.residual(&a, &x).unwrap() <= 1e-10);
    }

    #[test]
    fn zero_data_and_y_rows() {
        let (ms, p, ub) = setup();
        let sys = assemble_lift(&ms, &p, &ub, 2.0, 0.5).unwrap();
        assert_eq!(sys.apply(&DVector::zeros(32)).unwrap(), DVector::zeros(64));
        let src = sys.source(&DVector::from_element(32, 1.3)).unwrap();
        assert!(src.rows(0, 32).iter().all(|v| *v == 0.0));
        // gamma * alpha0 reproduces gamma0 for arbitrary constants
        for (l0, g0) in [(1.0, 1.0), (4.0, 1.0), (0.3, 2.7)] {
            let q = derive_params(1.0, l0, g0, 0.0).unwrap();
            assert!((q.gamma * q.alpha0 - g0).abs() <= 1e-14 * g0);
        }
        assert!(sys.apply(&DVector::zeros(3)).is_err());
    }

    #[test]
    fn support_follows_source() {
        let (ms, p, ub) = setup();
        let sys = assemble_lift(&ms, &p, &ub, 2.0, 0.5).unwrap();
        // every correction lives on one Neumann mode, so the matrix couples
        // only the pair (j, K + j)
        let m = sys.matrix();
        for i in 0..64 {
            for j in 0..64 {
                if i % 32 != j % 32 {
                    assert_eq!(m[(i, j)], 0.0);
                }
            }
        }
        // on a rectangle side x = Lx the trace of e_(0,1) only reaches modes with n = 1
        let d = Domain::rectangle(1.5 * PI, 1.1 * PI, &[Side::Right]).unwrap();
        let ms = neumann_modes(&d, 40).unwrap();
        let ub = unstable_basis(&ms, &p).unwrap();
        let sys = assemble_lift(&ms, &p, &ub, default_eta(&ub), 0.5).unwrap();
        let k = ms.len();
        let target = ms
            .modes()
            .iter()
            .position(|m| m.index == crate::basis::ModeIndex::Plane(0, 1))
            .unwrap();
        let mut a = DVector::zeros(k);
        a[target] = 1.0;
        let x = sys.apply(&a).unwrap();
        for (j, mode) in ms.modes().iter().enumerate() {
            let crate::basis::ModeIndex::Plane(_, n) = mode.index else { unreachable!() };
            if n != 1 {
                assert_eq!(x[j], 0.0);
                assert_eq!(x[k + j], 0.0);
            }
        }
        assert!(x.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn identity_holds() {
        let (ms, p, ub) = setup();
        let sys = assemble_lift(&ms, &p, &ub, 2.0, 0.5).unwrap();
        let e = ub.entries()[0];
        // a = psi_1 restricted to the boundary, as trace coefficients
        let mut a = DVector::zeros(32);
        a[e.mode] = e.coeff_psi;
        let res = sys.verify_identity(&ub, &a).unwrap();
        assert!(res.iter().all(|r| *r <= 1e-9), "{res:?}");
    }

    #[test]
    fn invalid_parameters() {
        let (ms, p, ub) = setup();
        assert!(assemble_lift(&ms, &p, &ub, 0.1, 0.5).is_err());
        assert!(assemble_lift(&ms, &p, &ub, 2.0, 0.0).is_err());
        assert!(assemble_lift(&ms, &p, &ub, 0.5, 0.5).is_err());
    }

    #[test]
    fn auto_policy() {
        let (ms, p, ub) = setup();
        let (sys, log) = assemble_lift_auto(&ms, &p, &ub, None, None).unwrap();
        assert_eq!(log.len(), 1);
        assert!((sys.eta() - default_eta(&ub)).abs() < 1e-15);
        assert!((sys.delta() - default_delta(sys.eta())).abs() < 1e-15);
    }
}
