use std::f64::consts::PI;

use chstab_core::basis::{neumann_modes, CollocationGrid, Domain, ModeSet, Side};
use chstab_core::closed_loop::{
    assemble_closed_loop, assemble_open_loop, from_fluctuation, spectral_report, to_fluctuation, Reference,
};
use chstab_core::feedback::{synthesize, Convention, SynthesisOptions};
use chstab_core::lifting::assemble_lift;
use chstab_core::spectrum::{
    check_assumptions, derive_params, quadratic_roots, unstable_basis, EntryKind, Equilibrium, PhysParams,
};
use nalgebra::{DVector, SymmetricEigen};
use proptest::prelude::*;

fn interval(len: f64, k: usize) -> ModeSet {
    neumann_modes(&Domain::interval(len, &[Side::Right]).unwrap(), k).unwrap()
}

fn r1() -> (ModeSet, PhysParams) {
    (interval(2f64.sqrt() * PI, 32), derive_params(1.0, 1.0, 1.0, -1.0).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grid_round_trip(coeffs in prop::collection::vec(-1.0f64..1.0, 12), len in 1.0f64..8.0) {
        let ms = interval(len, 12);
        let grid = CollocationGrid::dealiased(&ms).unwrap();
        let c = DVector::from_vec(coeffs);
        let vals = grid.to_grid(&c).unwrap();
        let back = grid.to_coeff(&vals).unwrap();
        prop_assert!((back - &c).amax() <= 1e-12);
        let parseval = grid.inner(&vals, &vals);
        prop_assert!((parseval - c.norm_squared()).abs() <= 1e-12 * c.norm_squared().max(1.0));
    }

    #[test]
    fn rectangle_round_trip(coeffs in prop::collection::vec(-1.0f64..1.0, 15), lx in 1.0f64..5.0, ly in 1.0f64..5.0) {
        let ms = neumann_modes(&Domain::rectangle(lx, ly, &[Side::Top]).unwrap(), 15).unwrap();
        let grid = CollocationGrid::dealiased(&ms).unwrap();
        let c = DVector::from_vec(coeffs);
        let back = grid.to_coeff(&grid.to_grid(&c).unwrap()).unwrap();
        prop_assert!((back - &c).amax() <= 1e-12);
    }

    #[test]
    fn no_negative_roots_for_convex_potential(
        nu in 0.1f64..5.0, l0 in 0.1f64..5.0, g0 in 0.1f64..5.0, fbar in 0.01f64..5.0, len in 0.5f64..10.0
    ) {
        let ms = interval(len, 24);
        let p = derive_params(nu, l0, g0, fbar).unwrap();
        for &mu in &ms.mus() {
            let (lo, _) = quadratic_roots(mu, &p).unwrap();
            prop_assert!(lo >= -1e-12 * mu.abs().max(1.0));
        }
    }

    #[test]
    fn open_loop_matches_blocks(nu in 0.2f64..3.0, g0 in 0.2f64..3.0, fbar in -3.0f64..3.0, len in 1.0f64..6.0) {
        let ms = interval(len, 10);
        let p = derive_params(nu, 1.0, g0, fbar).unwrap();
        let dense = SymmetricEigen::new(-assemble_open_loop(&ms, &p)).eigenvalues;
        let mut dense: Vec<f64> = dense.iter().copied().collect();
        let mut blocks: Vec<f64> = ms.mus().iter().flat_map(|&mu| {
            let (a, b) = quadratic_roots(mu, &p).unwrap();
            [a, b]
        }).collect();
        dense.sort_by(f64::total_cmp);
        blocks.sort_by(f64::total_cmp);
        for (a, b) in dense.iter().zip(&blocks) {
            prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn lift_is_linear(a in prop::collection::vec(-1.0f64..1.0, 32), b in prop::collection::vec(-1.0f64..1.0, 32), s in -2.0f64..2.0) {
        let (ms, p) = r1();
        let u = unstable_basis(&ms, &p).unwrap();
        let lift = assemble_lift(&ms, &p, &u, 1.3, 0.6).unwrap();
        let (a, b) = (DVector::from_vec(a), DVector::from_vec(b));
        let lhs = lift.apply(&(&a + &b * s)).unwrap();
        let rhs = lift.apply(&a).unwrap() + lift.apply(&b).unwrap() * s;
        prop_assert!((lhs - &rhs).amax() <= 1e-9 * rhs.amax().max(1.0));
    }

    #[test]
    fn fluctuation_inverse(th in prop::collection::vec(-2.0f64..2.0, 8), ph in prop::collection::vec(-2.0f64..2.0, 8), l0 in 0.2f64..4.0, g0 in 0.2f64..4.0) {
        let ms = interval(3.0, 8);
        let grid = CollocationGrid::dealiased(&ms).unwrap();
        let p = derive_params(1.0, l0, g0, 0.5).unwrap();
        let r = Reference::new(&Equilibrium::constant(0.4, 0.1), &grid).unwrap();
        let (th, ph) = (DVector::from_vec(th), DVector::from_vec(ph));
        let s = to_fluctuation(&th, &ph, &r, &p).unwrap();
        let (th2, ph2) = from_fluctuation(&s, &r, &p).unwrap();
        prop_assert!((th2 - th).amax() <= 1e-13 && (ph2 - ph).amax() <= 1e-13);
    }
}

#[test]
fn convex_equilibrium_keeps_zero_modes_only() {
    let ms = interval(2f64.sqrt() * PI, 32);
    let p = derive_params(1.0, 1.0, 1.0, 2.0).unwrap();
    let u = unstable_basis(&ms, &p).unwrap();
    assert_eq!(u.n(), 2);
    assert!(u.entries().iter().all(|e| e.kind != EntryKind::Negative));
}

#[test]
fn pinned_convention_is_the_stable_one() {
    let (ms, p) = r1();
    let u = unstable_basis(&ms, &p).unwrap();
    let rep = check_assumptions(&ms, &p, &u);
    let law = synthesize(&ms, &p, &u, &rep, &SynthesisOptions::default()).unwrap();
    let margin = |c: Convention| assemble_closed_loop(&ms, &p, &law.with_convention(c)).unwrap().spectrum;
    assert!(margin(Convention::PINNED).certifies(1e-3));
    let flipped = Convention {
        sign: 1,
        ..Convention::PINNED
    };
    assert!(!margin(flipped).certifies(1e-3));
}

#[test]
fn open_loop_has_one_growing_mode() {
    let (ms, p) = r1();
    let rep = spectral_report(&assemble_open_loop(&ms, &p));
    assert_eq!((rep.counts.growing, rep.counts.neutral), (1, 2));
    assert!((rep.eigenvalues[0].re - 0.1403882032).abs() <= 1e-7);
}
