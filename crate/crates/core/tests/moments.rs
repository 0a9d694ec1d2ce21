// Copyright 2026 nstab Contributors
// SPDX-License-Identifier: Apache-2.0

//! Moment recursions and the blocks of `P_N` against independent evaluations.

use nstab_core::exec::Exec;
use nstab_core::linalg::Mat;
use nstab_core::lyapunov::solve_delay_lyapunov;
use nstab_core::moments::*;
use nstab_core::scalar::with_digits;
use nstab_core::system::NeutralSystem;
use nstab_core::Real;
use proptest::prelude::*;

fn scalar(a0: f64, a1: f64, d: f64, h: f64) -> NeutralSystem {
    NeutralSystem::scalar(a0, a1, d, h).unwrap()
}

fn rel_err(a: &Mat, b: &Mat) -> f64 {
    let scale = b.max_abs().to_f64().max(1e-300);
    (a - b).max_abs().to_f64() / scale
}

#[test]
fn delay_free_moments_match_closed_form() {
    with_digits(32, || {
        let (a, h) = (-1.3f64, 0.7f64);
        let dlm = solve_delay_lyapunov(&scalar(a, 0.0, 0.0, h)).unwrap();
        let m = MomentSet::compute(&dlm, 2, Exec::Sequential).unwrap();
        let c = -1.0 / (2.0 * a);
        let g0 = c * ((a * h).exp() - 1.0) / a;
        let h00 = c / a * (((a * h).exp() - 1.0) / a - h);
        assert!((m.g()[0][(0, 0)].to_f64() - g0).abs() < 1e-10);
        assert!((m.gbar()[0][(0, 0)].to_f64() - g0).abs() < 1e-10);
        assert!((m.h(0, 0)[(0, 0)].to_f64() - h00).abs() < 1e-10);
    });
}

#[test]
fn recursion_matches_quadrature_on_matrix_system() {
    with_digits(32, || {
        let sys = NeutralSystem::new(
            Mat::from_f64(2, 2, &[-1.0, 0.4, 0.2, -1.7]),
            Mat::from_f64(2, 2, &[0.3, -0.1, 0.2, 0.25]),
            Mat::from_f64(2, 2, &[0.2, 0.1, -0.15, 0.3]),
            Real::from_f64(0.9),
            None,
        )
        .unwrap();
        let dlm = solve_delay_lyapunov(&sys).unwrap();
        let m = MomentSet::compute(&dlm, 6, Exec::Sequential).unwrap();
        let rec = assemble_j(&sys, &dlm, &m, 6).unwrap();
        let quad = quadrature_j(&sys, &dlm, 6, 1e-12).unwrap();
        for (k, (r, q)) in rec.all().iter().zip(quad.all()).enumerate() {
            assert!(rel_err(r, q) <= 1e-8, "J{k}: {}", rel_err(r, q));
        }
    });
}

#[test]
fn criterion_is_symmetric_and_nested() {
    with_digits(32, || {
        let sys = scalar(0.8, -1.2, -0.3, 1.0);
        let b = CriterionBuilder::new(&sys, 8, Exec::Sequential).unwrap();
        let p8 = b.criterion(8).unwrap();
        assert!(p8.p.is_symmetric());
        for k in 1..8 {
            let pk = b.criterion(k).unwrap();
            assert_eq!(pk.p, p8.p.leading(pk.p.rows()));
        }
        assert!(b.criterion(9).is_err());
    });
}

#[test]
fn parallel_and_sequential_agree_exactly() {
    with_digits(40, || {
        let sys = scalar(-0.5, 0.4, 0.3, 0.6);
        let s = CriterionBuilder::new(&sys, 10, Exec::Sequential)
            .unwrap()
            .criterion(10)
            .unwrap();
        let p = CriterionBuilder::new(&sys, 10, Exec::Parallel)
            .unwrap()
            .criterion(10)
            .unwrap();
        assert_eq!(s.p, p.p);
    });
}

#[test]
fn block_dump_has_full_precision_strings() {
    with_digits(40, || {
        let c = assemble_p(&scalar(-1.0, 0.2, 0.1, 1.0), 2).unwrap();
        let d = c.dump();
        assert_eq!(d.digits, 40);
        assert_eq!(d.p.len(), 3);
        let v = Real::parse(&d.p[0][0]).unwrap();
        assert_eq!(v, c.p[(0, 0)]);
    });
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn scalar_recursion_matches_quadrature(
        a0 in -2.0f64..1.0, a1 in -1.0f64..1.0, d in -0.8f64..0.8, h in 0.1f64..2.0,
    ) {
        with_digits(32, || {
            let sys = scalar(a0, a1, d, h);
            let Ok(dlm) = solve_delay_lyapunov(&sys) else { return Ok(()) };
            prop_assume!(dlm.propagator().is_invertible());
            let m = MomentSet::compute(&dlm, 3, Exec::Sequential).unwrap();
            let rec = assemble_j(&sys, &dlm, &m, 3).unwrap();
            let quad = quadrature_j(&sys, &dlm, 3, 1e-12).unwrap();
            for (r, q) in rec.all().iter().zip(quad.all()) {
                prop_assert!(rel_err(r, q) <= 1e-8);
            }
            Ok(())
        })?;
    }
}
