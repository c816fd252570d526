//! Invariant battery run by `chstab verify`.

use chstab_core::basis::{ModeSet, Shape, Side};
use chstab_core::closed_loop::{
    assemble_open_loop, closed_loop_with_gain, decay_horizon, fd_jacobian, fit_decay, integrate_matrix,
    ClosedLoopSystem, StateVec,
};
use chstab_core::feedback::{modal_coordinates, Convention, FeedbackLaw};
use chstab_core::lifting::assemble_lift;
use chstab_core::spectrum::{derive_params, quadratic_roots, EntryKind, PhiProfile};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::CliResult;
use crate::scenario::{random_mass_matched, Scenario};

pub const ORTHONORMALITY_TOL: f64 = 1e-12;
pub const ROUND_TRIP_TOL: f64 = 1e-12;
pub const BLOCK_TOL: f64 = 1e-9;
pub const LIFT_TOL: f64 = 1e-9;
pub const CAUCHY_RTOL: f64 = 1e-8;
pub const INVERSE_TOL: f64 = 1e-10;
pub const MIN_MARGIN: f64 = 1e-3;
pub const TRUNCATION_TOL: f64 = 1e-6;
pub const MASS_TOL: f64 = 1e-10;
pub const JACOBIAN_RTOL: f64 = 1e-6;
pub const DECAY_RUNS: usize = 20;
pub const SCAN_SETS: usize = 100;
pub const LIFT_SAMPLES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub measured: Option<f64>,
    pub threshold: Option<f64>,
    pub detail: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Counts {
    pub pass: usize,
    pub fail: usize,
    pub skipped: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub config_hash: String,
    pub k: usize,
    pub n: usize,
    pub convention: String,
    pub zero_gain: bool,
    pub passed: bool,
    pub counts: Counts,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn failed(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| c.status == Status::Fail)
            .map(|c| c.name.clone())
            .collect()
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct VerifyOptions {
    /// Replace the synthesized gain by zero.
    pub zero_gain: bool,
}

struct Battery {
    checks: Vec<Check>,
}

impl Battery {
    fn push(&mut self, name: &str, ok: bool, measured: f64, threshold: f64, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            status: if ok { Status::Pass } else { Status::Fail },
            measured: Some(measured),
            threshold: Some(threshold),
            detail: detail.into(),
        });
    }

    fn flag(&mut self, name: &str, ok: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            status: if ok { Status::Pass } else { Status::Fail },
            measured: None,
            threshold: None,
            detail: detail.into(),
        });
    }

    fn skip(&mut self, name: &str, why: &str) {
        self.checks.push(Check {
            name: name.into(),
            status: Status::Skipped,
            measured: None,
            threshold: None,
            detail: why.into(),
        });
    }
}

/// Largest deviation of the discrete mode Gram matrix from the identity.
pub fn orthonormality_error(scn: &Scenario) -> f64 {
    let k = scn.k();
    let cols: Vec<DVector<f64>> = (0..k).map(|j| scn.grid.mode_values(j)).collect();
    let mut worst = 0.0f64;
    for i in 0..k {
        for j in 0..=i {
            let g = scn.grid.inner(&cols[i], &cols[j]);
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g - target).abs());
        }
    }
    worst
}

/// Largest `|Δλ|/max(1, |λ|)` between a dense symmetric eigensolve of the open loop and the per-mode roots.
pub fn block_equivalence_error(scn: &Scenario) -> CliResult<f64> {
    let dense = SymmetricEigen::new(-assemble_open_loop(&scn.modes, &scn.params)).eigenvalues;
    let mut dense: Vec<f64> = dense.iter().copied().collect();
    let mut roots = Vec::with_capacity(dense.len());
    for &mu in &scn.modes.mus() {
        let (a, b) = quadratic_roots(mu, &scn.params)?;
        roots.push(a);
        roots.push(b);
    }
    dense.sort_by(f64::total_cmp);
    roots.sort_by(f64::total_cmp);
    Ok(dense
        .iter()
        .zip(&roots)
        .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
        .fold(0.0, f64::max))
}

/// `det Σ_k B_k` from the Cauchy structure when Γ₁ is a single interval endpoint:
/// `Σ_k B_k = D_t C Cᵀ D_t` with `C_jk = 1/(η_k − λ̃_j)` and `t_j = ψ_j(endpoint)`.
pub fn cauchy_determinant(modes: &ModeSet, law: &FeedbackLaw) -> Option<f64> {
    let domain = modes.domain();
    let Shape::Interval { length } = *domain.shape() else {
        return None;
    };
    let x = match domain.gamma1() {
        [Side::Left] => 0.0,
        [Side::Right] => length,
        _ => return None,
    };
    let mut t = Vec::with_capacity(law.n());
    for e in law.unstable().entries() {
        t.push(e.coeff_psi * modes.mode(e.mode).ok()?.value(domain, x, 0.0));
    }
    let lt = law.shifted_lambdas();
    let eta = law.ladder().values();
    let n = t.len();
    let mut det_c = 1.0;
    for i in 0..n {
        for j in (i + 1)..n {
            det_c *= (eta[j] - eta[i]) * (lt[i] - lt[j]);
        }
    }
    for &l in lt {
        for &e in eta {
            det_c /= e - l;
        }
    }
    let pt: f64 = t.iter().product();
    Some(pt * pt * det_c * det_c)
}

pub fn verify(scn: &Scenario, opts: VerifyOptions) -> CliResult<VerifyReport> {
    let mut b = Battery { checks: Vec::new() };
    let mut rng = scn.rng();
    let k = scn.k();

    let ortho = orthonormality_error(scn);
    b.push(
        "orthonormality",
        ortho <= ORTHONORMALITY_TOL,
        ortho,
        ORTHONORMALITY_TOL,
        "max |<e_i, e_j> - delta_ij| on the dealiased grid",
    );

    let mut rt = 0.0f64;
    for _ in 0..5 {
        let c = DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0));
        let back = scn.grid.to_coeff(&scn.grid.to_grid(&c)?)?;
        rt = rt.max((back - c).amax());
    }
    b.push("transform_round_trip", rt <= ROUND_TRIP_TOL, rt, ROUND_TRIP_TOL, "coefficients -> grid -> coefficients");

    let blk = block_equivalence_error(scn)?;
    b.push("block_equivalence", blk <= BLOCK_TOL, blk, BLOCK_TOL, "dense open-loop eigenvalues vs per-mode roots, relative to max(1, |lambda|)");

    let open = scn.open_loop_report();
    let (mut grow, mut neutral) = (0, 0);
    for &mu in &scn.modes.mus() {
        let (lo, hi) = quadratic_roots(mu, &scn.params)?;
        for r in [lo, hi] {
            if -r > open.tol {
                grow += 1;
            } else if r.abs() <= open.tol {
                neutral += 1;
            }
        }
    }
    b.flag(
        "open_loop_spectrum",
        open.counts.growing == grow && open.counts.neutral == neutral,
        format!(
            "counts (growing, neutral, decaying) = ({}, {}, {}); per-mode roots give ({grow}, {neutral})",
            open.counts.growing, open.counts.neutral, open.counts.decaying
        ),
    );

    let mut found = 0usize;
    for _ in 0..SCAN_SETS {
        let p = derive_params(
            rng.gen_range(0.1..5.0),
            rng.gen_range(0.1..5.0),
            rng.gen_range(0.1..5.0),
            rng.gen_range(0.01..5.0),
        )?;
        for &mu in &scn.modes.mus() {
            let (lo, _) = quadratic_roots(mu, &p)?;
            if lo < -1e-12 * mu.abs().max(1.0) {
                found += 1;
            }
        }
    }
    b.push(
        "necessary_condition",
        found == 0,
        found as f64,
        0.0,
        format!("{SCAN_SETS} random parameter sets with positive mean curvature; strictly negative eigenvalues found"),
    );

    let a = &scn.assumptions;
    b.push("h0", a.h0.ok, a.h0.nearest_distance, 0.0, format!("lambda_bar = {:.12e}", a.h0.lambda_bar));
    b.flag("h1", a.h1.ok, format!("min gap {:?}", a.h1.min_gap));
    b.flag("trace_nonvanishing", a.traces.ok, format!("sup |psi_j| on gamma1 = {:?}", a.traces.sup));

    const SYNTH_CHECKS: [&str; 13] = [
        "synthesis",
        "lift_identity",
        "coupler_positive_definite",
        "coupler_cauchy",
        "coupler_inverse",
        "feedback_equilibrium",
        "closed_loop_certification",
        "convention_scan",
        "truncation_convergence",
        "linear_decay",
        "mass_conservation",
        "jacobian",
        "nonlinear_decay",
    ];
    let skip_all = |b: &mut Battery, from: usize, why: &str| {
        for name in &SYNTH_CHECKS[from..] {
            b.skip(name, why);
        }
    };

    let open_growth = open_loop_growth(scn)?;
    match open_growth {
        Some((rate, lambda)) => b.push(
            "open_loop_growth",
            rate >= 0.9 * lambda.abs(),
            rate,
            0.9 * lambda.abs(),
            "uncontrolled growth rate of Z_1 from (phi_1, psi_1)",
        ),
        None => b.skip("open_loop_growth", "no strictly negative eigenvalue"),
    }

    let convention = scn.config.convention()?;
    let n = scn.unstable.n();
    let hash = scn.config.hash();
    let finish = |b: Battery| {
        let mut counts = Counts::default();
        for c in &b.checks {
            match c.status {
                Status::Pass => counts.pass += 1,
                Status::Fail => counts.fail += 1,
                Status::Skipped => counts.skipped += 1,
            }
        }
        VerifyReport {
            config_hash: hash.clone(),
            k,
            n,
            convention: convention.to_string(),
            zero_gain: opts.zero_gain,
            passed: counts.fail == 0,
            counts,
            checks: b.checks,
        }
    };

    if !a.ok() && !scn.config.synthesis.allow_failed_assumptions {
        skip_all(&mut b, 0, "assumption check failed");
        return Ok(finish(b));
    }
    let law = match scn.synthesize() {
        Ok(l) => {
            b.flag("synthesis", true, format!("N = {}, eta_1 = {}, delta = {}", l.n(), l.ladder().first(), l.delta()));
            l
        }
        Err(e) => {
            b.flag("synthesis", false, e.to_string());
            skip_all(&mut b, 1, "synthesis failed");
            return Ok(finish(b));
        }
    };

    let mut worst = 0.0f64;
    for &eta in law.ladder().values() {
        let lift = assemble_lift(&scn.modes, &scn.params, &scn.unstable, eta, law.delta())?;
        for _ in 0..LIFT_SAMPLES {
            let data = DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0));
            let r = lift.verify_identity(&scn.unstable, &data)?;
            worst = r.into_iter().fold(worst, f64::max);
        }
    }
    b.push(
        "lift_identity",
        worst <= LIFT_TOL,
        worst,
        LIFT_TOL,
        format!("{LIFT_SAMPLES} random boundary data per ladder rung"),
    );

    let coupler = law.coupler();
    b.push(
        "coupler_positive_definite",
        coupler.min_eigenvalue > 0.0,
        coupler.min_eigenvalue,
        0.0,
        format!("condition {:.6e}", coupler.condition),
    );
    match cauchy_determinant(&scn.modes, &law) {
        Some(oracle) => {
            let det = coupler.sum.clone().lu().determinant();
            let rel = ((det - oracle) / oracle).abs();
            b.push("coupler_cauchy", rel <= CAUCHY_RTOL, rel, CAUCHY_RTOL, format!("det = {det:.12e}, oracle = {oracle:.12e}"));
        }
        None => b.skip("coupler_cauchy", "oracle applies to a single interval endpoint"),
    }
    let inv_err = (&coupler.inverse * &coupler.sum - DMatrix::identity(n, n)).amax();
    b.push("coupler_inverse", inv_err <= INVERSE_TOL, inv_err, INVERSE_TOL, "max |A * sum_k B_k - I|");

    let w0 = law.eval(&DVector::zeros(n));
    b.flag(
        "feedback_equilibrium",
        w0.weights.iter().all(|&w| w == 0.0),
        "u = 0 at the equilibrium",
    );

    let gain = if opts.zero_gain {
        DMatrix::zeros(n, 2 * k)
    } else {
        law.gain_matrix(k)
    };
    let system = closed_loop_with_gain(&scn.modes, &scn.params, &scn.unstable, gain)?;
    let s = &system.spectrum;
    let certified = s.certifies(MIN_MARGIN);
    b.push(
        "closed_loop_certification",
        certified,
        s.margin,
        MIN_MARGIN,
        format!(
            "counts (growing, neutral, decaying) = ({}, {}, {}), tol = {:.3e}",
            s.counts.growing, s.counts.neutral, s.counts.decaying, s.tol
        ),
    );

    let passing: Vec<String> = Convention::ALL
        .iter()
        .filter(|c| {
            scn.closed_loop(&law.with_convention(**c))
                .map(|sys| sys.spectrum.certifies(MIN_MARGIN))
                .unwrap_or(false)
        })
        .map(|c| c.to_string())
        .collect();
    b.flag(
        "convention_scan",
        opts.zero_gain || passing.contains(&law.convention().to_string()),
        format!("certifying conventions: [{}]", passing.join(", ")),
    );

    match scn.with_k(2 * k).and_then(|big| {
        let l2 = big.synthesize()?;
        let g2 = if opts.zero_gain {
            DMatrix::zeros(n, 4 * k)
        } else {
            l2.gain_matrix(2 * k)
        };
        Ok(closed_loop_with_gain(&big.modes, &big.params, &big.unstable, g2)?.spectrum.margin)
    }) {
        Ok(m2) => {
            let d = (m2 - s.margin).abs();
            b.push("truncation_convergence", d <= TRUNCATION_TOL, d, TRUNCATION_TOL, format!("margin at K = {}: {m2}", 2 * k));
        }
        Err(e) => b.flag("truncation_convergence", false, e.to_string()),
    }

    let c = s.margin;
    let (decay, mut drift) = linear_decay(scn, &system, &mut rng)?;
    match decay {
        Some((min_c2, min_r2)) => {
            let bound = 1.8 * c * 0.9;
            b.push(
                "linear_decay",
                certified && min_c2 >= bound && min_r2 >= 0.98,
                min_c2,
                bound,
                format!("{DECAY_RUNS} mass-matched runs; min fitted C2 (norm^2 rate) with min R^2 = {min_r2:.6}"),
            );
        }
        None => b.flag("linear_decay", false, "decay fit impossible (norms vanished or window too short)"),
    }

    let constant_eq = matches!(scn.equilibrium.phi, PhiProfile::Constant(_));
    let model = scn.nonlinear_model(system.clone())?;
    if constant_eq {
        let jac = fd_jacobian(|x| model.rhs(x), &DVector::zeros(2 * k), 1e-6)?;
        let mut worst = 0.0f64;
        for i in 0..2 * k {
            let scale = system.closed.row(i).norm().max(1.0);
            worst = worst.max((jac.row(i) - system.closed.row(i)).norm() / scale);
        }
        b.push("jacobian", worst <= JACOBIAN_RTOL, worst, JACOBIAN_RTOL, "row-wise relative FD Jacobian error at 0");
    } else {
        b.skip("jacobian", "tabulated equilibrium: linear part uses the mean curvature");
    }

    let amplitude = scn.config.run.amplitude;
    let x0 = StateVec::from_stacked(&random_mass_matched(k, amplitude, &mut rng))?;
    let nl_result = if certified {
        let lin = integrate_matrix(&system.closed, &system.gain, &x0, scn.config.discretization.t_final, scn.config.discretization.dt_linear)?;
        let horizon = decay_horizon(&lin, 0.9 * c, 1e-2);
        let d = &scn.config.discretization;
        Some((horizon, chstab_core::closed_loop::integrate_nonlinear(&model, &x0, horizon, d.dt, d.record_stride)))
    } else {
        None
    };
    match nl_result {
        Some((horizon, Ok(traj))) => {
            drift = drift.max(traj.mass_drift());
            let ratio = traj.norms.last().copied().unwrap_or(f64::INFINITY) / traj.norms[0];
            b.push(
                "mass_conservation",
                drift <= MASS_TOL,
                drift,
                MASS_TOL,
                "max |y^1(t) - y^1(0)| over linear and nonlinear runs",
            );
            b.push(
                "nonlinear_decay",
                ratio <= 1e-2,
                ratio,
                1e-2,
                format!("amplitude {amplitude:e}, horizon {horizon:.6} from the linear decay bound, dt {}", traj.dt),
            );
        }
        Some((_, Err(e))) => {
            b.push("mass_conservation", drift <= MASS_TOL, drift, MASS_TOL, "linear runs only");
            b.flag("nonlinear_decay", false, e.to_string());
        }
        None => {
            b.push("mass_conservation", drift <= MASS_TOL, drift, MASS_TOL, "linear runs only");
            b.flag("nonlinear_decay", false, "closed loop not certified; no decay horizon");
        }
    }

    Ok(finish(b))
}

/// Growth rate of `Z_1` for the uncontrolled system started on `(φ_1, ψ_1)`.
pub fn open_loop_growth(scn: &Scenario) -> CliResult<Option<(f64, f64)>> {
    let Some(e) = scn.unstable.entries().iter().find(|e| e.kind == EntryKind::Negative) else {
        return Ok(None);
    };
    let k = scn.k();
    let horizon = 10.0;
    let open = assemble_open_loop(&scn.modes, &scn.params);
    let s0 = StateVec::from_stacked(&e.state_vector(k))?;
    let traj = integrate_matrix(&open, &DMatrix::zeros(0, 2 * k), &s0, horizon, 0.5)?;
    let z0 = modal_coordinates(&traj.states[0].stacked(), &scn.unstable)[0].abs();
    let z1 = modal_coordinates(&traj.last().expect("non-empty").stacked(), &scn.unstable)[0].abs();
    Ok(Some(((z1 / z0).ln() / horizon, e.lambda)))
}

/// Minimum fitted rate and `R²` over the random mass-matched runs, plus the mass drift.
fn linear_decay(
    scn: &Scenario,
    system: &ClosedLoopSystem,
    rng: &mut ChaCha8Rng,
) -> CliResult<(Option<(f64, f64)>, f64)> {
    let k = scn.k();
    let t_final = scn.config.discretization.t_final;
    let step = (t_final / 400.0).max(scn.config.discretization.dt_linear);
    let mut min_c2 = f64::INFINITY;
    let mut min_r2 = f64::INFINITY;
    let mut drift = 0.0f64;
    let mut ok = true;
    for _ in 0..DECAY_RUNS {
        let x0 = StateVec::from_stacked(&random_mass_matched(k, 1.0, rng))?;
        let traj = integrate_matrix(&system.closed, &system.gain, &x0, t_final, step)?;
        drift = drift.max(traj.mass_drift());
        match fit_decay(&traj, (t_final / 2.0, t_final)) {
            Ok(f) => {
                min_c2 = min_c2.min(f.c2);
                min_r2 = min_r2.min(f.r_squared);
            }
            Err(_) => ok = false,
        }
    }
    Ok((ok.then_some((min_c2, min_r2)), drift))
}
