//! Physical constants, per-mode reduction of the linearized operator and
//! extraction of its nonpositive eigenpairs.
//!
//! On `span{(e_k, 0), (0, e_k)}` the operator acts as the symmetric block
//! `M(μ) = [[νμ² − F_l μ, γμ], [γμ, −μ]]`, so its spectrum is the union of
//! the 2×2 block spectra over the Neumann modes.

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::basis::{CollocationGrid, ModeSet};
use crate::error::{Error, Result};

/// Relative tolerance for eigenvalue coincidences (H₀ and H₁ checks).
pub const COINCIDENCE_RTOL: f64 = 1e-8;
/// Sup-norm below which an eigenvector trace on Γ₁ counts as vanishing.
pub const TRACE_ATOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysParams {
    pub nu: f64,
    pub l0: f64,
    pub gamma0: f64,
    /// Mean curvature `F̄″` of the potential along the equilibrium.
    pub fbar: f64,
    pub alpha0: f64,
    pub gamma: f64,
    pub l: f64,
    pub f_l: f64,
}

impl PhysParams {
    /// `λ̄ = (γ² − F_l)/ν`.
    pub fn lambda_bar(&self) -> f64 {
        (self.gamma * self.gamma - self.f_l) / self.nu
    }

    /// Lower end `(F_l − γ²)/ν` of the window of Laplacian eigenvalues that
    /// can carry a negative eigenvalue of the operator.
    pub fn mu_threshold(&self) -> f64 {
        -self.lambda_bar()
    }
}

pub fn derive_params(nu: f64, l0: f64, gamma0: f64, fbar: f64) -> Result<PhysParams> {
    for (name, v) in [("nu", nu), ("l0", l0), ("gamma0", gamma0)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Config(format!("{name} must be positive, got {v}")));
        }
    }
    if !fbar.is_finite() {
        return Err(Error::Config(format!("mean curvature must be finite, got {fbar}")));
    }
    let alpha0 = (gamma0 / l0).sqrt();
    let gamma = alpha0 * l0;
    let l = gamma0 * l0;
    Ok(PhysParams {
        nu,
        l0,
        gamma0,
        fbar,
        alpha0,
        gamma,
        l,
        f_l: fbar + l,
    })
}

/// Double-well derivative `F′(φ) = φ³ − φ`.
pub fn potential_slope(phi: f64) -> f64 {
    phi * phi * phi - phi
}

/// `F″(φ) = 3φ² − 1`.
pub fn potential_curvature(phi: f64) -> f64 {
    3.0 * phi * phi - 1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiProfile {
    Constant(f64),
    /// Values on the collocation grid nodes (x-major).
    Tabulated(Vec<f64>),
}

/// Stationary state `(φ∞, θ∞)` of the uncontrolled system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub phi: PhiProfile,
    pub theta: f64,
}

impl Equilibrium {
    pub fn constant(phi: f64, theta: f64) -> Self {
        Self {
            phi: PhiProfile::Constant(phi),
            theta,
        }
    }

    pub fn tabulated(values: Vec<f64>, theta: f64) -> Self {
        Self {
            phi: PhiProfile::Tabulated(values),
            theta,
        }
    }

    /// `φ∞` on the grid nodes.
    pub fn phi_on_grid(&self, grid: &CollocationGrid) -> Result<DVector<f64>> {
        match &self.phi {
            PhiProfile::Constant(c) => Ok(DVector::from_element(grid.len(), *c)),
            PhiProfile::Tabulated(v) => {
                if v.len() != grid.len() {
                    return Err(Error::Config(format!(
                        "tabulated equilibrium has {} values but the grid has {} nodes",
                        v.len(),
                        grid.len()
                    )));
                }
                Ok(DVector::from_column_slice(v))
            }
        }
    }

    /// Spectral coefficients of `φ∞`; exact for a constant profile.
    pub fn phi_coeffs(&self, grid: &CollocationGrid) -> Result<DVector<f64>> {
        let k = grid.modes().len();
        match &self.phi {
            PhiProfile::Constant(c) => Ok(constant_coeffs(k, *c, grid.modes().domain().measure())),
            PhiProfile::Tabulated(_) => grid.to_coeff(&self.phi_on_grid(grid)?),
        }
    }

    pub fn theta_coeffs(&self, modes: &ModeSet) -> DVector<f64> {
        constant_coeffs(modes.len(), self.theta, modes.domain().measure())
    }
}

/// Coefficients of the constant function `c` (mode 0 is `1/√m_Ω`).
pub fn constant_coeffs(k: usize, c: f64, measure: f64) -> DVector<f64> {
    let mut v = DVector::zeros(k);
    v[0] = c * measure.sqrt();
    v
}

/// Mean of `F″(φ∞)` over the domain.
pub fn effective_slope(eq: &Equilibrium, grid: &CollocationGrid) -> Result<f64> {
    match &eq.phi {
        PhiProfile::Constant(c) => Ok(potential_curvature(*c)),
        PhiProfile::Tabulated(_) => {
            let phi = eq.phi_on_grid(grid)?;
            let curv = phi.map(potential_curvature);
            Ok(grid.integrate(&curv) / grid.modes().domain().measure())
        }
    }
}

/// Restriction of the linearized operator to the pair `(e_k, 0), (0, e_k)`.
pub fn mode_block(mu: f64, p: &PhysParams) -> Matrix2<f64> {
    Matrix2::new(
        p.nu * mu * mu - p.f_l * mu,
        p.gamma * mu,
        p.gamma * mu,
        -mu,
    )
}

/// Linear and constant coefficients `(b, c)` of `X² + bX + c` whose roots are
/// the block eigenvalues.
pub fn quadratic_coefficients(mu: f64, p: &PhysParams) -> (f64, f64) {
    let b = (p.f_l + 1.0) * mu - p.nu * mu * mu;
    let c = -p.nu * mu * mu * mu + (p.f_l - p.gamma * p.gamma) * mu * mu;
    (b, c)
}

/// Sorted real roots of the block characteristic polynomial.
pub fn quadratic_roots(mu: f64, p: &PhysParams) -> Result<(f64, f64)> {
    if mu > 0.0 || !mu.is_finite() {
        return Err(Error::Config(format!("Laplacian eigenvalue must be <= 0, got {mu}")));
    }
    let (b, c) = quadratic_coefficients(mu, p);
    let mut disc = b * b - 4.0 * c;
    if disc < 0.0 {
        // The block is symmetric, so only round-off can make this negative.
        if disc < -1e-12 * (b * b + 4.0 * c.abs()).max(f64::MIN_POSITIVE) {
            return Err(Error::Discriminant(disc));
        }
        disc = 0.0;
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        return Ok((0.0, 0.0));
    }
    let (r1, r2) = (q, c / q);
    Ok(if r1 <= r2 { (r1, r2) } else { (r2, r1) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    ZeroSym,
    ZeroAnti,
    Negative,
}

/// Eigenpair `(φ, ψ) = (coeff_phi·e_k, coeff_psi·e_k)` with eigenvalue `≤ 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnstableEntry {
    pub lambda: f64,
    pub kind: EntryKind,
    /// Position of `e_k` in the mode set (0 is the constant mode).
    pub mode: usize,
    pub mu: f64,
    pub coeff_phi: f64,
    pub coeff_psi: f64,
}

impl UnstableEntry {
    /// Eigenvector in the stacked `(y, z)` coefficient layout of length `2K`.
    pub fn state_vector(&self, k: usize) -> DVector<f64> {
        let mut v = DVector::zeros(2 * k);
        v[self.mode] = self.coeff_phi;
        v[k + self.mode] = self.coeff_psi;
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnstableBasis {
    entries: Vec<UnstableEntry>,
    warnings: Vec<String>,
}

impl UnstableBasis {
    /// Rebuilds a basis from stored entries. The antisymmetric zero entry must come last.
    pub fn from_entries(entries: Vec<UnstableEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Config("unstable basis has no entries".into()));
        }
        for e in &entries {
            let norm = e.coeff_phi.hypot(e.coeff_psi);
            if !e.lambda.is_finite() || e.lambda > 0.0 || (norm - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "invalid unstable entry on mode {}: lambda {}, norm {}",
                    e.mode, e.lambda, norm
                )));
            }
        }
        if entries.last().map(|e| e.kind) != Some(EntryKind::ZeroAnti) {
            return Err(Error::Config(
                "the antisymmetric zero entry must be last".into(),
            ));
        }
        Ok(Self {
            entries,
            warnings: Vec::new(),
        })
    }

    pub fn entries(&self) -> &[UnstableEntry] {
        &self.entries
    }

    pub fn n(&self) -> usize {
        self.entries.len()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.lambda).collect()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Rows are the eigenvectors in `(y, z)` coefficient layout: an `N × 2K` matrix.
    pub fn projector_rows(&self, k: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n(), 2 * k);
        for (i, e) in self.entries.iter().enumerate() {
            m[(i, e.mode)] = e.coeff_phi;
            m[(i, k + e.mode)] = e.coeff_psi;
        }
        m
    }
}

fn zero_entries() -> [UnstableEntry; 2] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [
        UnstableEntry {
            lambda: 0.0,
            kind: EntryKind::ZeroSym,
            mode: 0,
            mu: 0.0,
            coeff_phi: s,
            coeff_psi: s,
        },
        UnstableEntry {
            lambda: 0.0,
            kind: EntryKind::ZeroAnti,
            mode: 0,
            mu: 0.0,
            coeff_phi: -s,
            coeff_psi: s,
        },
    ]
}

/// Collects the nonpositive eigenpairs: negative roots from modes inside
/// `[(F_l − γ²)/ν, 0)` plus the two zero eigenvectors on the constant mode.
pub fn unstable_basis(modes: &ModeSet, p: &PhysParams) -> Result<UnstableBasis> {
    let threshold = p.mu_threshold();
    let smallest = modes.mus().into_iter().fold(f64::INFINITY, f64::min);
    if threshold < 0.0 && smallest >= threshold {
        return Err(Error::Truncation {
            required_mu: threshold,
            smallest_mu: smallest,
        });
    }
    let window = threshold - 1e-12 * threshold.abs();
    let mut negatives = Vec::new();
    let mut warnings = Vec::new();
    for (idx, mode) in modes.modes().iter().enumerate() {
        if mode.is_constant() || mode.mu < window {
            continue;
        }
        let mu = mode.mu;
        let (root, _) = quadratic_roots(mu, p)?;
        let (b, _) = quadratic_coefficients(mu, p);
        let zero_tol = 1e-12 * b.abs().max(1.0);
        if root < -zero_tol {
            let den = (p.gamma * mu).hypot(root + mu);
            negatives.push(UnstableEntry {
                lambda: root,
                kind: EntryKind::Negative,
                mode: idx,
                mu,
                coeff_phi: (root + mu) / den,
                coeff_psi: p.gamma * mu / den,
            });
        } else if root.abs() <= zero_tol {
            warnings.push(format!(
                "mode {idx} (mu = {mu:.6e}) sits on the boundary mu = (F_l - gamma^2)/nu: \
                 its root is 0 and it is excluded from the negative eigenvalues"
            ));
        }
    }
    negatives.sort_by(|a, b| a.lambda.total_cmp(&b.lambda).then(a.mode.cmp(&b.mode)));
    negatives.extend(zero_entries());
    Ok(UnstableBasis {
        entries: negatives,
        warnings,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct H0Verdict {
    pub ok: bool,
    pub lambda_bar: f64,
    /// `min |λ̄ + μ_j|` over the nonconstant modes.
    pub nearest_distance: f64,
    pub nearest_mu: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct H1Verdict {
    pub ok: bool,
    /// Smallest gap between distinct negative eigenvalues (`None` with fewer than two).
    pub min_gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceVerdict {
    pub ok: bool,
    /// Sup of `|ψ_j|` over the Γ₁ samples, per entry.
    pub sup: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub h0: H0Verdict,
    pub h1: H1Verdict,
    pub traces: TraceVerdict,
    /// `F_l − γ² ≤ 0`; without it no negative eigenvalue exists.
    pub necessary_condition: bool,
}

impl AssumptionReport {
    pub fn ok(&self) -> bool {
        self.h0.ok && self.h1.ok && self.traces.ok
    }

    /// Human-readable list of the failed checks.
    pub fn failures(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !self.h0.ok {
            v.push(format!(
                "H0: lambda_bar = {:.6e} coincides with a Neumann eigenvalue (distance {:.3e}); \
                 the zero eigenvalue is not of multiplicity 2",
                self.h0.lambda_bar, self.h0.nearest_distance
            ));
        }
        if !self.h1.ok {
            v.push(format!(
                "H1: negative eigenvalues are not simple (min gap {:.3e})",
                self.h1.min_gap.unwrap_or(0.0)
            ));
        }
        if !self.traces.ok {
            v.push("trace: some psi_j vanishes on gamma1".to_string());
        }
        v
    }
}

pub fn check_assumptions(modes: &ModeSet, p: &PhysParams, unstable: &UnstableBasis) -> AssumptionReport {
    let lambda_bar = p.lambda_bar();
    let (nearest_distance, nearest_mu) = modes
        .modes()
        .iter()
        .filter(|m| !m.is_constant())
        .map(|m| ((lambda_bar + m.mu).abs(), m.mu))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap_or((f64::INFINITY, f64::NAN));
    let h0 = H0Verdict {
        ok: nearest_distance >= COINCIDENCE_RTOL * lambda_bar.abs().max(1.0),
        lambda_bar,
        nearest_distance,
        nearest_mu,
    };

    let neg: Vec<f64> = unstable
        .entries()
        .iter()
        .filter(|e| e.kind == EntryKind::Negative)
        .map(|e| e.lambda)
        .collect();
    let mut min_gap: Option<f64> = None;
    let mut h1_ok = true;
    for i in 0..neg.len() {
        for j in i + 1..neg.len() {
            let gap = (neg[i] - neg[j]).abs();
            min_gap = Some(min_gap.map_or(gap, |g| g.min(gap)));
            if gap <= COINCIDENCE_RTOL * neg[i].abs().max(neg[j].abs()).max(1.0) {
                h1_ok = false;
            }
        }
    }

    let domain = modes.domain();
    let samples = domain.boundary_samples(64);
    let sup: Vec<f64> = unstable
        .entries()
        .iter()
        .map(|e| {
            let mode = &modes.modes()[e.mode];
            samples
                .iter()
                .map(|&(x, y)| (e.coeff_psi * mode.value(domain, x, y)).abs())
                .fold(0.0, f64::max)
        })
        .collect();

    AssumptionReport {
        h0,
        h1: H1Verdict { ok: h1_ok, min_gap },
        traces: TraceVerdict {
            ok: sup.iter().all(|s| *s > TRACE_ATOL),
            sup,
        },
        necessary_condition: p.f_l - p.gamma * p.gamma <= 0.0,
    }
}

/// Eigenvalues of a 2×2 block by dense symmetric eigensolve, ascending.
pub fn block_eigenvalues_dense(block: &Matrix2<f64>) -> (f64, f64) {
    let e = SymmetricEigen::new(*block).eigenvalues;
    if e[0] <= e[1] {
        (e[0], e[1])
    } else {
        (e[1], e[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{neumann_modes, Domain, Side};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn r1() -> PhysParams {
        derive_params(1.0, 1.0, 1.0, -1.0).unwrap()
    }

    fn r1_modes(k: usize) -> ModeSet {
        neumann_modes(&Domain::interval(2f64.sqrt() * PI, &[Side::Right]).unwrap(), k).unwrap()
    }

    #[test]
    fn derived_constants() {
        let p = r1();
        assert_eq!((p.alpha0, p.gamma, p.l, p.f_l), (1.0, 1.0, 1.0, 0.0));
        let p = derive_params(1.0, 4.0, 1.0, 0.0).unwrap();
        assert_relative_eq!(p.alpha0, 0.5, epsilon = 1e-15);
        assert_relative_eq!(p.gamma, 2.0, epsilon = 1e-15);
        assert_relative_eq!(p.l, 4.0, epsilon = 1e-15);
        assert_relative_eq!(p.f_l, 4.0, epsilon = 1e-15);
        assert!(derive_params(0.0, 1.0, 1.0, 0.0).is_err());
        assert!(derive_params(1.0, -1.0, 1.0, 0.0).is_err());
        assert!(derive_params(1.0, 1.0, f64::NAN, 0.0).is_err());
    }

    #[test]
    fn slope_of_constant_equilibria() {
        let ms = r1_modes(8);
        let g = CollocationGrid::dealiased(&ms).unwrap();
        assert_eq!(effective_slope(&Equilibrium::constant(0.0, 0.0), &g).unwrap(), -1.0);
        assert_eq!(effective_slope(&Equilibrium::constant(1.0, 0.0), &g).unwrap(), 2.0);
        let l = 2f64.sqrt() * PI;
        let table: Vec<f64> = g.coords().iter().map(|(x, _)| (PI * x / l).cos()).collect();
        let s = effective_slope(&Equilibrium::tabulated(table, 0.0), &g).unwrap();
        assert_relative_eq!(s, 0.5, epsilon = 1e-13);
        assert!(effective_slope(&Equilibrium::tabulated(vec![0.0; 3], 0.0), &g).is_err());
    }

    #[test]
    fn blocks() {
        let p = r1();
        assert_eq!(mode_block(0.0, &p), Matrix2::zeros());
        assert_eq!(mode_block(-0.5, &p), Matrix2::new(0.25, -0.5, -0.5, 0.5));
        assert_eq!(mode_block(-1.0, &p), Matrix2::new(1.0, -1.0, -1.0, 1.0));
    }

    #[test]
    fn roots_reference_values() {
        let p = r1();
        let (lo, hi) = quadratic_roots(-0.5, &p).unwrap();
        // oracle: quadratic formula for X^2 - 0.75X - 0.125
        let d = (0.75f64 * 0.75 + 0.5).sqrt();
        assert_relative_eq!(lo, (0.75 - d) / 2.0, epsilon = 1e-15);
        assert_relative_eq!(hi, (0.75 + d) / 2.0, epsilon = 1e-15);
        assert!((lo + 0.1403882032).abs() < 1e-10);
        assert!((hi - 0.8903882032).abs() < 1e-10);

        let (lo, hi) = quadratic_roots(-2.0, &p).unwrap();
        assert_relative_eq!(lo, 3.0 - 5f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(hi, 3.0 + 5f64.sqrt(), epsilon = 1e-14);

        // positive mean curvature: both roots positive
        let q = derive_params(1.0, 1.0, 1.0, 1.0).unwrap();
        let (lo, _) = quadratic_roots(-1.0, &q).unwrap();
        assert!(lo > 0.0);
        assert!(quadratic_roots(0.5, &p).is_err());
    }

    #[test]
    fn r1_unstable_basis() {
        let ms = r1_modes(32);
        let ub = unstable_basis(&ms, &r1()).unwrap();
        assert_eq!(ub.n(), 3);
        let e = ub.entries()[0];
        assert_eq!(e.kind, EntryKind::Negative);
        assert_eq!(e.mode, 1);
        assert!((e.lambda + 0.1403882032).abs() < 1e-10);
        // oracle: t40 with lambda from the quadratic formula
        let lam = (0.75 - (0.75f64 * 0.75 + 0.5).sqrt()) / 2.0;
        let r = (0.5f64 * 0.5 + (lam - 0.5).powi(2)).sqrt();
        assert_relative_eq!(e.coeff_psi, -0.5 / r, epsilon = 1e-14);
        assert_relative_eq!(e.coeff_phi, (lam - 0.5) / r, epsilon = 1e-14);
        assert!((e.coeff_psi + 0.6154122).abs() < 1e-7);
        assert!((e.coeff_phi + 0.7882054).abs() < 1e-7);
        assert_eq!(ub.entries()[1].kind, EntryKind::ZeroSym);
        assert_eq!(ub.entries()[2].kind, EntryKind::ZeroAnti);
        assert_eq!(&ub.lambdas()[1..], &[0.0, 0.0]);
        for e in ub.entries() {
            assert!((e.coeff_phi.powi(2) + e.coeff_psi.powi(2) - 1.0).abs() < 1e-12);
        }
        let rows = ub.projector_rows(32);
        let gram = &rows * rows.transpose();
        assert!((gram - DMatrix::identity(3, 3)).abs().max() < 1e-12);
        assert!(ub.warnings().is_empty());
    }

    #[test]
    fn positive_curvature_has_only_zero_entries() {
        let ms = r1_modes(16);
        let p = derive_params(1.0, 1.0, 1.0, 2.0).unwrap();
        let ub = unstable_basis(&ms, &p).unwrap();
        assert_eq!(ub.n(), 2);
    }

    #[test]
    fn boundary_root_is_excluded_with_warning() {
        let ms = neumann_modes(&Domain::interval(PI, &[Side::Right]).unwrap(), 16).unwrap();
        let ub = unstable_basis(&ms, &r1()).unwrap();
        assert_eq!(ub.n(), 2);
        assert_eq!(ub.warnings().len(), 1);
    }

    #[test]
    fn truncation_too_small() {
        // threshold -1 needs a mode below -1; K = 2 on L = sqrt(2)pi reaches only -0.5
        let err = unstable_basis(&r1_modes(2), &r1()).unwrap_err();
        assert!(matches!(err, Error::Truncation { .. }));
    }

    #[test]
    fn assumption_checks() {
        let ms = r1_modes(32);
        let p = r1();
        let ub = unstable_basis(&ms, &p).unwrap();
        let rep = check_assumptions(&ms, &p, &ub);
        assert!(rep.ok(), "{:?}", rep.failures());
        assert_eq!(rep.h0.lambda_bar, 1.0);
        assert_relative_eq!(rep.h0.nearest_distance, 0.5, epsilon = 1e-14);
        assert!(rep.h1.min_gap.is_none());
        assert!(rep.necessary_condition);

        let ms = neumann_modes(&Domain::interval(PI, &[Side::Right]).unwrap(), 32).unwrap();
        let ub = unstable_basis(&ms, &p).unwrap();
        let rep = check_assumptions(&ms, &p, &ub);
        assert!(!rep.h0.ok);
        assert_eq!(rep.failures().len(), 1);
    }

    #[test]
    fn degenerate_square_violates_h1() {
        // square of side 2pi: modes (1,0),(0,1) share mu = -1/4; threshold = -1
        let d = Domain::rectangle(2.0 * PI, 2.0 * PI, &[Side::Right, Side::Top]).unwrap();
        let ms = neumann_modes(&d, 40).unwrap();
        let p = r1();
        let ub = unstable_basis(&ms, &p).unwrap();
        let rep = check_assumptions(&ms, &p, &ub);
        assert!(!rep.h1.ok);
        assert_eq!(rep.h1.min_gap, Some(0.0));
    }

    #[test]
    fn roots_match_dense_blocks() {
        let p = derive_params(0.7, 1.3, 2.1, -0.9).unwrap();
        for mu in [-0.01, -0.3, -1.0, -4.5, -30.0, -400.0] {
            let (a, b) = quadratic_roots(mu, &p).unwrap();
            let (c, d) = block_eigenvalues_dense(&mode_block(mu, &p));
            let scale = 1.0 + b.abs();
            assert!((a - c).abs() <= 1e-10 * scale && (b - d).abs() <= 1e-10 * scale);
        }
    }
}
