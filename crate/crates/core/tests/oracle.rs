// Copyright 2026 nstab Contributors
// SPDX-License-Identifier: Apache-2.0

//! Characteristic roots, method-of-steps simulation and D-subdivision.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra as na;
use nstab_core::oracle::*;
use nstab_core::stability::{full_test, TestOptions, Verdict};
use nstab_core::system::*;
use num_complex::Complex64;
use proptest::prelude::*;

fn scalar(a0: f64, a1: f64, d: f64, h: f64) -> SystemF64 {
    SystemF64::scalar(a0, a1, d, h)
}

fn example2(kp: f64, ki: f64) -> SystemF64 {
    example2_matrices(&Example2Params::reference(kp, ki))
        .unwrap()
        .to_f64()
}

#[test]
fn delay_free_scalar_has_single_root() {
    let set = characteristic_roots(
        &scalar(-0.7, 0.0, 0.0, 1.0),
        &RootSearch::for_system(&scalar(-0.7, 0.0, 0.0, 1.0)),
    )
    .unwrap();
    assert_eq!(set.roots.len(), 1);
    assert!((set.roots[0] - Complex64::new(-0.7, 0.0)).norm() < 1e-10);
}

#[test]
fn retarded_boundary_roots_on_imaginary_axis() {
    let h = 1.0;
    let sys = scalar(0.0, -FRAC_PI_2 / h, 0.0, h);
    let set = characteristic_roots(&sys, &RootSearch::for_system(&sys)).unwrap();
    let top = set.rightmost().unwrap();
    assert!(top.re.abs() < 1e-9);
    assert!((top.im.abs() - FRAC_PI_2 / h).abs() < 1e-9);
    assert!(set
        .roots
        .iter()
        .any(|s| (s.im + top.im).abs() < 1e-9 && s.re.abs() < 1e-9));
}

#[test]
fn roots_satisfy_characteristic_equation() {
    for sys in [
        example2(1.0, 1.0),
        example2(1.0, -1.0),
        scalar(0.8, -1.2, -0.3, 1.0),
    ] {
        let set = characteristic_roots(&sys, &RootSearch::for_system(&sys)).unwrap();
        assert!(set.converged);
        for (s, r) in set.roots.iter().zip(&set.residuals) {
            assert!(
                *r <= 1e-10 * s.norm().max(1.0).powi(sys.n() as i32),
                "{s}: {r:e}"
            );
        }
    }
}

#[test]
fn example2_stable_case_has_left_half_plane_roots() {
    let sys = example2(1.0, 1.0);
    let region = Region {
        re_min: -20.0,
        re_max: 2.0,
        im_max: 200.0,
    };
    let search = RootSearch::for_system(&sys).with_region(region);
    let set = characteristic_roots(&sys, &search).unwrap();
    assert!(!set.roots.is_empty());
    assert!(
        set.roots.iter().all(|s| s.re < 0.0),
        "{:?}",
        set.rightmost()
    );
    let unstable = example2(1.0, -1.0);
    let top = rightmost_root(&unstable).unwrap().unwrap();
    assert!(top.re > 0.0);
}

#[test]
fn simulation_of_decaying_exponential() {
    let sys = scalar(-1.0, 0.0, 0.0, 1.0);
    let phi = InitialFunction::constant(na::DVector::from_element(1, 1.0));
    let tr = simulate_method_of_steps(&sys, &phi, 5.0, 1.0 / 200.0).unwrap();
    let last = tr.x.last().unwrap()[0];
    assert!((tr.t.last().unwrap() - 5.0).abs() < 1e-12);
    assert!((last - (-5.0f64).exp()).abs() < 1e-8);
}

#[test]
fn simulation_of_growing_exponential() {
    let sys = scalar(1.0, 0.0, 0.0, 1.0);
    let phi = InitialFunction::constant(na::DVector::from_element(1, 1.0));
    let tr = simulate_method_of_steps(&sys, &phi, 3.0, 0.005).unwrap();
    assert!((tr.x.last().unwrap()[0] - 3.0f64.exp()).abs() < 1e-8 * 3.0f64.exp());
}

#[test]
fn scalar_example_decays() {
    let sys = scalar(0.8, -1.2, -0.3, 1.0);
    let phi = InitialFunction::constant(na::DVector::from_element(1, 1.0));
    let tr = simulate_method_of_steps(&sys, &phi, 60.0, 1.0 / 200.0).unwrap();
    assert!(tr.x.last().unwrap().norm() < 1e-3);
}

#[test]
fn oversized_step_is_rejected() {
    let phi = InitialFunction::constant(na::DVector::from_element(1, 1.0));
    assert!(simulate_method_of_steps(&scalar(-1.0, 0.0, 0.0, 0.5), &phi, 1.0, 0.6).is_err());
}

#[test]
fn difference_operator_is_continuous_at_knots() {
    let sys = scalar(-0.5, 0.6, 0.4, 1.0);
    let phi = InitialFunction::affine(
        na::DVector::from_element(1, 1.0),
        na::DVector::from_element(1, 2.0),
    );
    let tr = simulate_method_of_steps(&sys, &phi, 6.0, 1.0 / 200.0).unwrap();
    let z = tr.difference_operator(&sys.d);
    let m = tr.steps_per_delay;
    // Away from knots z moves by O(dt) per step; at knots it must not jump more.
    let typical = z
        .windows(2)
        .map(|w| (&w[1] - &w[0]).norm())
        .fold(0.0, f64::max);
    for k in 1..6 {
        let i = k * m - m;
        if i == 0 || i + 1 >= z.len() {
            continue;
        }
        let left = (&z[i] - &z[i - 1]).norm();
        let right = (&z[i + 1] - &z[i]).norm();
        assert!(left <= typical && right <= typical);
        assert!(
            (left - right).abs() < 1e-3,
            "knot {k}: {left:e} vs {right:e}"
        );
    }
}

#[test]
fn d_subdivision_real_branch_and_classical_point() {
    let curves = scalar_d_subdivision(0.0, 1.0, &default_omega_grid(1.0, 400)).unwrap();
    assert_eq!(curves[0].kind, BranchKind::RealRoot);
    for p in &curves[0].points {
        assert!((p[0] + p[1]).abs() < 1e-12);
    }
    let p = imaginary_crossing(0.0, 1.0, FRAC_PI_2).unwrap();
    assert!(p[0].abs() < 1e-15);
    assert!((p[1] + FRAC_PI_2).abs() < 1e-15);
    assert!(imaginary_crossing(0.3, 1.0, PI).is_none());
    assert!(scalar_d_subdivision(1.0, 1.0, &[1.0]).is_err());
}

#[test]
fn imaginary_crossing_solves_characteristic_equation() {
    for &(d, h, w) in &[(-0.3, 1.0, 1.3), (0.5, 0.4, 7.0), (0.0, 2.0, 0.6)] {
        let [a0, a1] = imaginary_crossing(d, h, w).unwrap();
        let det = characteristic_det(&scalar(a0, a1, d, h), Complex64::new(0.0, w));
        assert!(det.norm() < 1e-12);
    }
}

#[test]
fn verdicts_flip_across_a_boundary_point() {
    let opts = TestOptions {
        digits: Some(32),
        ..Default::default()
    };
    let inside = full_test(
        &SystemConfig::scalar(0.0, -FRAC_PI_2 + 0.2, 0.0, 1.0),
        &opts,
    )
    .unwrap();
    let outside = full_test(
        &SystemConfig::scalar(0.0, -FRAC_PI_2 - 0.2, 0.0, 1.0),
        &opts,
    )
    .unwrap();
    assert_eq!(inside.verdict, Verdict::Stable, "{}", inside.reason);
    assert_eq!(outside.verdict, Verdict::Unstable, "{}", outside.reason);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn simulation_agrees_with_rightmost_root(a0 in -2.0f64..1.0, a1 in -1.5f64..1.5, d in -0.6f64..0.6) {
        let sys = scalar(a0, a1, d, 1.0);
        let s = rightmost_root(&sys).unwrap().unwrap();
        prop_assume!(s.re.abs() >= 0.05);
        let probe = decay_probe(&sys, None).unwrap();
        let expected = if s.re < 0.0 { DecayVerdict::Decaying } else { DecayVerdict::Growing };
        prop_assert_eq!(probe.verdict, expected, "rate {} vs root {}", probe.rate, s);
    }
}
