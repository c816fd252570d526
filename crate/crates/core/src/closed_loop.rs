//! Open and closed loop on the `2K` spectral coefficients, spectrum
//! certification, time integration and decay fitting.
//!
//! Layout of a state: `[y_0 … y_{K−1}, z_0 … z_{K−1}]`, mode 0 constant.

use nalgebra::{DMatrix, DVector, Schur};
use serde::{Deserialize, Serialize};

use crate::basis::{trace_pairing, CollocationGrid, ModeSet};
use crate::error::{Error, Result};
use crate::feedback::FeedbackLaw;
use crate::lifting::operator_matrix;
use crate::spectrum::{potential_slope, Equilibrium, PhysParams, UnstableBasis};

/// Relative spectral tolerance: `tol = SPECTRAL_RTOL · ‖matrix‖_F`.
pub const SPECTRAL_RTOL: f64 = 1e-10;
/// Blow-up threshold relative to the initial norm.
pub const BLOWUP_FACTOR: f64 = 1e6;
/// Number of times the nonlinear step is halved before giving up.
pub const MAX_HALVINGS: usize = 6;
/// Minimum number of samples in a decay-fit window.
pub const MIN_FIT_SAMPLES: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct StateVec {
    pub y: DVector<f64>,
    pub z: DVector<f64>,
}

impl StateVec {
    pub fn zeros(k: usize) -> Self {
        Self {
            y: DVector::zeros(k),
            z: DVector::zeros(k),
        }
    }

    pub fn from_stacked(x: &DVector<f64>) -> Result<Self> {
        if x.len() % 2 != 0 || x.is_empty() {
            return Err(Error::Config(format!("stacked state has odd length {}", x.len())));
        }
        let k = x.len() / 2;
        Ok(Self {
            y: x.rows(0, k).into_owned(),
            z: x.rows(k, k).into_owned(),
        })
    }

    pub fn stacked(&self) -> DVector<f64> {
        let k = self.k();
        let mut x = DVector::zeros(2 * k);
        x.rows_mut(0, k).copy_from(&self.y);
        x.rows_mut(k, k).copy_from(&self.z);
        x
    }

    pub fn k(&self) -> usize {
        self.y.len()
    }

    /// `‖(y, z)‖` in `L² × L²` (Parseval).
    pub fn norm(&self) -> f64 {
        (self.y.norm_squared() + self.z.norm_squared()).sqrt()
    }

    /// Coefficient of the constant mode in `y`; proportional to `∫y`.
    pub fn mass(&self) -> f64 {
        self.y[0]
    }

    pub fn is_finite(&self) -> bool {
        self.y.iter().chain(self.z.iter()).all(|v| v.is_finite())
    }
}

/// Removes the `y`-mass of a stacked state so that `∫y = 0`.
pub fn mass_matched(mut x: DVector<f64>) -> DVector<f64> {
    x[0] = 0.0;
    x
}

/// Reference state `(φ∞, σ∞)` in coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Reference {
    pub phi: DVector<f64>,
    pub theta: DVector<f64>,
}

impl Reference {
    pub fn new(eq: &Equilibrium, grid: &CollocationGrid) -> Result<Self> {
        Ok(Self {
            phi: eq.phi_coeffs(grid)?,
            theta: eq.theta_coeffs(grid.modes()),
        })
    }

    fn sigma(&self, p: &PhysParams) -> DVector<f64> {
        (&self.theta + &self.phi * p.l0) * p.alpha0
    }
}

/// `y = φ − φ∞`, `z = α₀(θ + l₀φ) − σ∞`.
pub fn to_fluctuation(
    theta: &DVector<f64>,
    phi: &DVector<f64>,
    reference: &Reference,
    p: &PhysParams,
) -> Result<StateVec> {
    let k = reference.phi.len();
    if theta.len() != k || phi.len() != k {
        return Err(Error::Config(format!("fields must have {k} coefficients")));
    }
    let sigma = (theta + phi * p.l0) * p.alpha0;
    Ok(StateVec {
        y: phi - &reference.phi,
        z: sigma - reference.sigma(p),
    })
}

/// Inverse of [`to_fluctuation`]: returns `(θ, φ)`.
pub fn from_fluctuation(
    state: &StateVec,
    reference: &Reference,
    p: &PhysParams,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if state.k() != reference.phi.len() {
        return Err(Error::Config("state and reference sizes differ".into()));
    }
    let phi = &state.y + &reference.phi;
    let sigma = &state.z + reference.sigma(p);
    let theta = sigma / p.alpha0 - &phi * p.l0;
    Ok((theta, phi))
}

/// `d/dt (y, z) = open_loop · (y, z)` without control.
pub fn assemble_open_loop(modes: &ModeSet, p: &PhysParams) -> DMatrix<f64> {
    -operator_matrix(modes, p)
}

/// `2K × N`: column `i` carries `α₀⟨ψ_i, e_j⟩₀` in z-row `j`; y-rows stay zero.
pub fn input_coupling(modes: &ModeSet, unstable: &UnstableBasis, alpha0: f64) -> Result<DMatrix<f64>> {
    let k = modes.len();
    let mut b = DMatrix::zeros(2 * k, unstable.n());
    for (i, e) in unstable.entries().iter().enumerate() {
        if e.mode >= k {
            return Err(Error::Config(format!(
                "unstable entry {i} lives on mode {} but only {k} modes are retained",
                e.mode
            )));
        }
        for j in 0..k {
            b[(k + j, i)] = alpha0 * e.coeff_psi * trace_pairing(modes, e.mode, j)?;
        }
    }
    Ok(b)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralClass {
    Growing,
    Neutral,
    Decaying,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
    pub class: SpectralClass,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpectralCounts {
    pub growing: usize,
    pub neutral: usize,
    pub decaying: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    /// Sorted by real part, largest first; ties by imaginary part, largest first.
    pub eigenvalues: Vec<Eigenvalue>,
    pub matrix_norm: f64,
    pub tol: f64,
    pub counts: SpectralCounts,
    pub abscissa: f64,
    /// Largest real part once the neutral eigenvalue closest to 0 is removed.
    pub mass_complement_abscissa: f64,
    /// `c = −mass_complement_abscissa`.
    pub margin: f64,
}

impl SpectralReport {
    /// One neutral eigenvalue (the mass), none growing, margin at least `min_margin`.
    pub fn certifies(&self, min_margin: f64) -> bool {
        self.counts.growing == 0 && self.counts.neutral == 1 && self.margin >= min_margin
    }
}

fn dense_eigenvalues(m: &DMatrix<f64>) -> Vec<(f64, f64)> {
    let n = m.nrows();
    if n == 0 {
        return Vec::new();
    }
    let ev = match Schur::try_new(m.clone(), f64::EPSILON, 100_000) {
        Some(s) => s.complex_eigenvalues(),
        None => m.complex_eigenvalues(),
    };
    ev.iter().map(|c| (c.re, c.im)).collect()
}

pub fn spectral_report(m: &DMatrix<f64>) -> SpectralReport {
    let matrix_norm = m.norm();
    let tol = SPECTRAL_RTOL * matrix_norm;
    let mut raw = dense_eigenvalues(m);
    raw.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    let classify = |re: f64| {
        if re > tol {
            SpectralClass::Growing
        } else if re < -tol {
            SpectralClass::Decaying
        } else {
            SpectralClass::Neutral
        }
    };
    let eigenvalues: Vec<Eigenvalue> = raw
        .iter()
        .map(|&(re, im)| Eigenvalue {
            re,
            im,
            class: classify(re),
        })
        .collect();
    let count = |c| eigenvalues.iter().filter(|e| e.class == c).count();
    let counts = SpectralCounts {
        growing: count(SpectralClass::Growing),
        neutral: count(SpectralClass::Neutral),
        decaying: count(SpectralClass::Decaying),
    };
    let abscissa = eigenvalues.first().map_or(f64::NEG_INFINITY, |e| e.re);
    let mass = eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, e)| e.class == SpectralClass::Neutral)
        .min_by(|a, b| a.1.re.hypot(a.1.im).total_cmp(&b.1.re.hypot(b.1.im)))
        .map(|(i, _)| i);
    let mass_complement_abscissa = eigenvalues
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != mass)
        .map(|(_, e)| e.re)
        .fold(f64::NEG_INFINITY, f64::max);
    SpectralReport {
        eigenvalues,
        matrix_norm,
        tol,
        counts,
        abscissa,
        mass_complement_abscissa,
        margin: -mass_complement_abscissa,
    }
}

#[derive(Clone, Debug)]
pub struct ClosedLoopSystem {
    pub open_loop: DMatrix<f64>,
    pub input_coupling: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    pub closed: DMatrix<f64>,
    pub spectrum: SpectralReport,
}

impl ClosedLoopSystem {
    pub fn k(&self) -> usize {
        self.open_loop.nrows() / 2
    }

    /// Control weights `w = gain · x`.
    pub fn weights(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.gain * x
    }
}

pub fn assemble_closed_loop(modes: &ModeSet, p: &PhysParams, law: &FeedbackLaw) -> Result<ClosedLoopSystem> {
    let k = modes.len();
    closed_loop_with_gain(modes, p, law.unstable(), law.gain_matrix(k))
}

/// Closed loop for an arbitrary `N × 2K` gain.
pub fn closed_loop_with_gain(
    modes: &ModeSet,
    p: &PhysParams,
    unstable: &UnstableBasis,
    gain: DMatrix<f64>,
) -> Result<ClosedLoopSystem> {
    let k = modes.len();
    if gain.nrows() != unstable.n() || gain.ncols() != 2 * k {
        return Err(Error::Config(format!(
            "gain is {}x{}, expected {}x{}",
            gain.nrows(),
            gain.ncols(),
            unstable.n(),
            2 * k
        )));
    }
    let open_loop = assemble_open_loop(modes, p);
    let input_coupling = input_coupling(modes, unstable, p.alpha0)?;
    let closed = &open_loop + &input_coupling * &gain;
    let spectrum = spectral_report(&closed);
    Ok(ClosedLoopSystem {
        open_loop,
        input_coupling,
        gain,
        closed,
        spectrum,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVec>,
    pub weights: Vec<Vec<f64>>,
    pub norms: Vec<f64>,
    /// Step actually used (after any halving).
    pub dt: f64,
}

impl Trajectory {
    fn new(dt: f64) -> Self {
        Self {
            times: Vec::new(),
            states: Vec::new(),
            weights: Vec::new(),
            norms: Vec::new(),
            dt,
        }
    }

    fn push(&mut self, t: f64, x: &DVector<f64>, w: &DVector<f64>) -> Result<()> {
        let s = StateVec::from_stacked(x)?;
        self.norms.push(s.norm());
        self.states.push(s);
        self.times.push(t);
        self.weights.push(w.iter().copied().collect());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&StateVec> {
        self.states.last()
    }

    /// `max_t |y_0(t) − y_0(0)|`.
    pub fn mass_drift(&self) -> f64 {
        let Some(first) = self.states.first() else {
            return 0.0;
        };
        self.states
            .iter()
            .map(|s| (s.mass() - first.mass()).abs())
            .fold(0.0, f64::max)
    }
}

fn check_horizon(t_final: f64, dt: f64) -> Result<usize> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Config(format!("time step must be positive, got {dt}")));
    }
    if !(t_final.is_finite() && t_final >= dt) {
        return Err(Error::Config(format!("horizon {t_final} must be at least dt = {dt}")));
    }
    Ok((t_final / dt).round() as usize)
}

/// `exp(C·dt)` with the conserved constant-mode y-row restored exactly.
pub fn propagator(c: &DMatrix<f64>, dt: f64) -> DMatrix<f64> {
    let mut e = (c * dt).exp();
    if c.row(0).iter().all(|&v| v == 0.0) {
        e.row_mut(0).fill(0.0);
        e[(0, 0)] = 1.0;
    }
    e
}

/// `(exp(C·dt), dt·φ₁(C·dt))` from one exponential of the augmented matrix.
pub fn etd_propagators(c: &DMatrix<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = c.nrows();
    let mut aug = DMatrix::zeros(2 * n, 2 * n);
    aug.view_mut((0, 0), (n, n)).copy_from(&(c * dt));
    aug.view_mut((0, n), (n, n)).fill_with_identity();
    aug.view_mut((0, n), (n, n)).scale_mut(dt);
    let ex = aug.exp();
    let mut e = ex.view((0, 0), (n, n)).into_owned();
    let mut phi = ex.view((0, n), (n, n)).into_owned();
    if c.row(0).iter().all(|&v| v == 0.0) {
        e.row_mut(0).fill(0.0);
        e[(0, 0)] = 1.0;
        phi.row_mut(0).fill(0.0);
        phi[(0, 0)] = dt;
    }
    (e, phi)
}

pub fn integrate_linear(
    system: &ClosedLoopSystem,
    state0: &StateVec,
    t_final: f64,
    dt: f64,
) -> Result<Trajectory> {
    integrate_matrix(&system.closed, &system.gain, state0, t_final, dt)
}

/// Linear flow of `matrix`, recording `gain · x` at every step.
pub fn integrate_matrix(
    matrix: &DMatrix<f64>,
    gain: &DMatrix<f64>,
    state0: &StateVec,
    t_final: f64,
    dt: f64,
) -> Result<Trajectory> {
    let steps = check_horizon(t_final, dt)?;
    if state0.k() * 2 != matrix.nrows() || !state0.is_finite() {
        return Err(Error::Config("initial state does not match the system".into()));
    }
    let e = propagator(matrix, dt);
    let mut x = state0.stacked();
    let mut traj = Trajectory::new(dt);
    traj.push(0.0, &x, &(gain * &x))?;
    for n in 1..=steps {
        x = &e * &x;
        traj.push(n as f64 * dt, &x, &(gain * &x))?;
    }
    Ok(traj)
}

/// Nonlinear closed loop around an equilibrium.
#[derive(Clone, Debug)]
pub struct NonlinearModel {
    system: ClosedLoopSystem,
    grid: CollocationGrid,
    mus: DVector<f64>,
    p: PhysParams,
    phi_inf: DVector<f64>,
    slope_inf: DVector<f64>,
}

impl NonlinearModel {
    pub fn new(
        modes: &ModeSet,
        p: &PhysParams,
        system: ClosedLoopSystem,
        eq: &Equilibrium,
    ) -> Result<Self> {
        if system.k() != modes.len() {
            return Err(Error::Config("closed loop and mode set sizes differ".into()));
        }
        let grid = CollocationGrid::dealiased(modes)?;
        let phi_inf = eq.phi_on_grid(&grid)?;
        let slope_inf = phi_inf.map(potential_slope);
        Ok(Self {
            system,
            grid,
            mus: DVector::from_vec(modes.mus()),
            p: *p,
            phi_inf,
            slope_inf,
        })
    }

    pub fn system(&self) -> &ClosedLoopSystem {
        &self.system
    }

    pub fn grid(&self) -> &CollocationGrid {
        &self.grid
    }

    /// Coefficients of `N(y) = F′(y + φ∞) − F′(φ∞)`.
    pub fn nonlinearity(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let yg = self.grid.to_grid(y)?;
        let n = DVector::from_iterator(
            yg.len(),
            yg.iter()
                .zip(self.phi_inf.iter().zip(self.slope_inf.iter()))
                .map(|(&v, (&phi, &f))| potential_slope(v + phi) - f),
        );
        self.grid.to_coeff(&n)
    }

    /// Full vector field: `ẏ = −νμ²y + μ⟨N(y), e⟩ + lμy − γμz`,
    /// `ż = μz − γμy + α₀·(boundary control)`.
    pub fn rhs(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let k = self.mus.len();
        if x.len() != 2 * k {
            return Err(Error::Config("state length mismatch".into()));
        }
        let y = x.rows(0, k).into_owned();
        let z = x.rows(k, k);
        let n = self.nonlinearity(&y)?;
        let p = &self.p;
        let mut f = &self.system.input_coupling * (&self.system.gain * x);
        for j in 0..k {
            let mu = self.mus[j];
            f[j] += (-p.nu * mu * mu + p.l * mu) * y[j] + mu * n[j] - p.gamma * mu * z[j];
            f[k + j] += mu * z[j] - p.gamma * mu * y[j];
        }
        Ok(f)
    }

    /// `rhs(x) − closed · x`; nonzero only in y-rows.
    pub fn remainder(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let k = self.mus.len();
        let y = x.rows(0, k).into_owned();
        let n = self.nonlinearity(&y)?;
        let mut g = DVector::zeros(2 * k);
        for j in 0..k {
            g[j] = self.mus[j] * (n[j] - self.p.fbar * y[j]);
        }
        Ok(g)
    }
}

/// Central finite-difference Jacobian.
pub fn fd_jacobian<F>(f: F, x0: &DVector<f64>, h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let n = x0.len();
    let mut jac = DMatrix::zeros(f(x0)?.len(), n);
    for i in 0..n {
        let mut xp = x0.clone();
        let mut xm = x0.clone();
        xp[i] += h;
        xm[i] -= h;
        let d = (f(&xp)? - f(&xm)?) / (2.0 * h);
        jac.set_column(i, &d);
    }
    Ok(jac)
}

/// Exponential-Euler integration of the nonlinear loop; the linear part is
/// propagated exactly. Halves `dt` on blow-up, up to [`MAX_HALVINGS`] times.
pub fn integrate_nonlinear(
    model: &NonlinearModel,
    state0: &StateVec,
    t_final: f64,
    dt: f64,
    stride: usize,
) -> Result<Trajectory> {
    check_horizon(t_final, dt)?;
    if state0.k() != model.mus.len() || !state0.is_finite() {
        return Err(Error::Config("initial state does not match the model".into()));
    }
    let stride = stride.max(1);
    let mut dt = dt;
    let mut last_err = None;
    for _ in 0..=MAX_HALVINGS {
        match nonlinear_attempt(model, state0, t_final, dt, stride) {
            Ok(t) => return Ok(t),
            Err(e @ Error::Divergence { .. }) => {
                last_err = Some(e);
                dt *= 0.5;
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

fn nonlinear_attempt(
    model: &NonlinearModel,
    state0: &StateVec,
    t_final: f64,
    dt: f64,
    stride: usize,
) -> Result<Trajectory> {
    let steps = check_horizon(t_final, dt)?;
    let (e, phi) = etd_propagators(&model.system.closed, dt);
    let gain = &model.system.gain;
    let mut x = state0.stacked();
    let limit = BLOWUP_FACTOR * state0.norm();
    let mut traj = Trajectory::new(dt);
    traj.push(0.0, &x, &(gain * &x))?;
    for n in 1..=steps {
        let g = model.remainder(&x)?;
        x = &e * &x + &phi * g;
        let norm = x.norm();
        if !norm.is_finite() || norm > limit {
            return Err(Error::Divergence {
                step: n,
                time: n as f64 * dt,
                norm,
                limit,
            });
        }
        if n % stride == 0 || n == steps {
            traj.push(n as f64 * dt, &x, &(gain * &x))?;
        }
    }
    Ok(traj)
}

/// Smallest `C` with `‖x(t)‖ ≤ C·e^{−rate·t}·‖x(0)‖` along the trajectory.
pub fn decay_constant(traj: &Trajectory, rate: f64) -> f64 {
    let n0 = traj.norms.first().copied().unwrap_or(0.0);
    if n0 <= 0.0 {
        return 1.0;
    }
    traj.times
        .iter()
        .zip(&traj.norms)
        .map(|(&t, &n)| n * (rate * t).exp() / n0)
        .fold(1.0, f64::max)
}

/// Time after which the bound `C·e^{−rate·t}` of [`decay_constant`] drops below `fraction`.
pub fn decay_horizon(linear: &Trajectory, rate: f64, fraction: f64) -> f64 {
    (decay_constant(linear, rate) / fraction).ln() / rate
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub c1: f64,
    pub c2: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

/// Least-squares line through `ln ‖state(t)‖²` on `window`.
/// Samples with vanishing norm end the window early.
pub fn fit_decay(traj: &Trajectory, window: (f64, f64)) -> Result<DecayFit> {
    let n0 = traj.norms.first().copied().unwrap_or(0.0);
    if n0 <= 0.0 {
        return Err(Error::Config("initial norm must be positive to fit a decay".into()));
    }
    let mut pts = Vec::new();
    for (&t, &n) in traj.times.iter().zip(&traj.norms) {
        if t < window.0 || t > window.1 {
            continue;
        }
        if !(n > 0.0 && n.is_finite()) {
            break;
        }
        pts.push((t, (n * n).ln()));
    }
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(Error::Config(format!(
            "decay fit needs at least {MIN_FIT_SAMPLES} samples, window has {}",
            pts.len()
        )));
    }
    let m = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let vm = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let stt: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
    let stv: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - vm)).sum();
    let slope = stv / stt;
    let intercept = vm - slope * tm;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - vm).powi(2)).sum();
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r_squared = if ss_tot <= f64::EPSILON * m * vm.abs().max(1.0) {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(DecayFit {
        c1: intercept.exp() / (n0 * n0),
        c2: -slope,
        r_squared,
        window: (pts[0].0, pts[pts.len() - 1].0),
        samples: pts.len(),
    })
}
