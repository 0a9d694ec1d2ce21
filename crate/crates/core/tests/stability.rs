// Copyright 2026 nstab Contributors
// SPDX-License-Identifier: Apache-2.0

//! Decision layer: PSD test, constants, `N*` and the combined verdict.

use nstab_core::exec::Exec;
use nstab_core::linalg::Mat;
use nstab_core::lyapunov::solve_delay_lyapunov;
use nstab_core::moments::CriterionBuilder;
use nstab_core::oracle::rightmost_root;
use nstab_core::scalar::with_digits;
use nstab_core::stability::*;
use nstab_core::system::*;
use proptest::prelude::*;

fn constants(c1: f64, c2: f64, mu: f64, a0: f64) -> SufficiencyConstants {
    SufficiencyConstants {
        m1: 0.0,
        m2: 0.0,
        m3: 0.0,
        c1,
        c2,
        mu,
        mu_tight: mu,
        r: 1.0,
        a0,
        h: 1.0,
        norm_d: 0.0,
        grid: SUP_GRID,
        safety: SUP_SAFETY,
    }
}

fn opts(digits: u32) -> TestOptions {
    TestOptions {
        digits: Some(digits),
        ..Default::default()
    }
}

#[test]
fn psd_check_examples() {
    assert!(psd_check(&Mat::identity(4), 1e-9).unwrap().psd);
    let c = psd_check(&Mat::from_f64(2, 2, &[1.0, 0.0, 0.0, -1e-3]), 1e-9).unwrap();
    assert!(!c.psd);
    assert_eq!(c.failing_pivot, Some(2));
    assert!(c.witness_quotient.unwrap() < 0.0);
    assert!(
        psd_check(&Mat::from_f64(2, 2, &[1.0, 0.0, 0.0, -1e-15]), 1e-9)
            .unwrap()
            .psd
    );
    assert!(psd_check(&Mat::from_f64(2, 2, &[1.0, 2.0, 0.0, 1.0]), 1e-9).is_err());
}

#[test]
fn lambert_w_fixed_points() {
    let e = std::f64::consts::E;
    assert_eq!(lambert_w(0.0).unwrap(), 0.0);
    assert!((lambert_w(e).unwrap() - 1.0).abs() < 1e-15);
    assert!((lambert_w(2.0 * e * e).unwrap() - 2.0).abs() < 1e-15);
    assert!(lambert_w(-0.1).is_err());
}

#[test]
fn lambert_w_residual_on_log_grid() {
    for i in 0..=160 {
        let z = 10f64.powf(-8.0 + 0.1 * i as f64);
        let w = lambert_w(z).unwrap();
        assert!((w * w.exp() - z).abs() <= 1e-14 * z, "z = {z:e}");
    }
}

#[test]
fn delta_vanishes_without_delay_terms() {
    for n in 0..20 {
        assert_eq!(delta_n(0.0, 0.0, 3.0, n), 0.0);
    }
    let fact: f64 = (1..=6).map(f64::from).product();
    assert!((delta_n(1.0, 0.5, 1.0, 6) - 16.0 / fact).abs() < 1e-15);
}

#[test]
fn n_star_at_unit_ratio() {
    let ns = compute_n_star(
        &constants(1.0 / 16.0, 1.0 / 64.0, 1.0, 0.75),
        NStarRule::Tight,
    )
    .unwrap();
    assert_eq!(ns.ratio, 1.0);
    assert_eq!(ns.value, 3);
}

#[test]
fn n_star_degenerate_cases() {
    assert_eq!(
        compute_n_star(&constants(0.0, 0.0, 2.0, 0.1), NStarRule::Tight)
            .unwrap()
            .value,
        1
    );
    assert_eq!(
        compute_n_star(&constants(1.0, 1.0, 0.0, 0.1), NStarRule::Tight)
            .unwrap()
            .value,
        1
    );
}

#[test]
fn zero_difference_operator_constants() {
    with_digits(32, || {
        let sys = NeutralSystem::scalar(-1.0, 0.4, 0.0, 0.8).unwrap();
        let dlm = solve_delay_lyapunov(&sys).unwrap();
        let c = sufficiency_constants(&sys, &dlm, Exec::Sequential).unwrap();
        assert_eq!(c.m3, 0.0);
        assert!((c.c2 - c.h * c.h * c.m2).abs() < 1e-15);
        assert!(c.c1 >= c.c2);
        let sys = NeutralSystem::scalar(-1.0, 0.0, 0.0, 0.8).unwrap();
        let dlm = solve_delay_lyapunov(&sys).unwrap();
        let c = sufficiency_constants(&sys, &dlm, Exec::Sequential).unwrap();
        assert_eq!((c.m1, c.m2, c.m3, c.c1, c.c2), (0.0, 0.0, 0.0, 0.0, 0.0));
        assert_eq!(c.delta(5), 0.0);
    });
}

#[test]
fn scalar_example_constants_are_finite() {
    with_digits(32, || {
        let sys = NeutralSystem::scalar(0.8, -1.2, -0.3, 1.0).unwrap();
        let dlm = solve_delay_lyapunov(&sys).unwrap();
        let c = sufficiency_constants(&sys, &dlm, Exec::Sequential).unwrap();
        for v in [c.m1, c.m2, c.m3, c.c1, c.c2, c.mu] {
            assert!(v.is_finite() && v > 0.0);
        }
        let ns = compute_n_star(&c, NStarRule::Tight).unwrap();
        assert!(ns.delta <= c.a0);
        let ns = compute_n_star(&c, NStarRule::Conservative).unwrap();
        assert!(ns.delta <= c.a0);
    });
}

#[test]
fn necessary_test_on_stable_delay_free_system() {
    with_digits(32, || {
        let sys = NeutralSystem::new(
            Mat::from_f64(2, 2, &[-1.0, 0.5, 0.0, -2.0]),
            Mat::zeros(2, 2),
            Mat::zeros(2, 2),
            nstab_core::Real::one(),
            None,
        )
        .unwrap();
        let b = CriterionBuilder::new(&sys, 10, Exec::Sequential).unwrap();
        for n in 1..=10 {
            assert!(
                necessary_test(&b.criterion(n).unwrap(), 1e-20)
                    .unwrap()
                    .pass,
                "N = {n}"
            );
        }
    });
}

#[test]
fn necessary_test_rejects_growing_exponential() {
    with_digits(32, || {
        let sys = NeutralSystem::scalar(1.0, 0.0, 0.0, 1.0).unwrap();
        let b = CriterionBuilder::new(&sys, 4, Exec::Sequential).unwrap();
        assert!(
            !necessary_test(&b.criterion(2).unwrap(), 1e-20)
                .unwrap()
                .pass
        );
    });
}

#[test]
fn sufficient_test_without_shift_is_necessary_test() {
    with_digits(32, || {
        let sys = NeutralSystem::scalar(-1.0, 0.0, 0.0, 1.0).unwrap();
        let dlm = solve_delay_lyapunov(&sys).unwrap();
        let c = sufficiency_constants(&sys, &dlm, Exec::Sequential).unwrap();
        let b = CriterionBuilder::new(&sys, 5, Exec::Sequential).unwrap();
        let p = b.criterion(5).unwrap();
        assert_eq!(shifted_criterion(&p, c.shift(5)), p.p);
        assert_eq!(
            sufficient_test(&p, &c, 1e-20).unwrap().pass,
            necessary_test(&p, 1e-20).unwrap().pass
        );
    });
}

#[test]
fn dominant_shift_is_not_certified() {
    with_digits(32, || {
        let sys = NeutralSystem::scalar(-1.0, 0.3, 0.2, 1.0).unwrap();
        let b = CriterionBuilder::new(&sys, 3, Exec::Sequential).unwrap();
        let p = b.criterion(3).unwrap();
        // n = 1, N = 3: make δ₃ twice n(N+1)‖P₃‖ with μ = 1, so δ₃ = 8c₁/3!.
        let bound = (3 + 1) as f64 * p.p.spectral_norm().to_f64();
        let c = constants(2.0 * bound * 6.0 / 8.0, 0.0, 1.0, 1.0);
        assert!(c.delta(3) > bound);
        assert!(!sufficient_test(&p, &c, 1e-20).unwrap().pass);
    });
}

#[test]
fn scalar_example_is_stable() {
    let r = full_test(&SystemConfig::scalar(0.8, -1.2, -0.3, 1.0), &opts(32)).unwrap();
    assert_eq!(r.verdict, Verdict::Stable, "{}", r.reason);
    assert_eq!(r.n_used, r.n_star.as_ref().map(|n| n.value));
}

#[test]
fn example2_reference_verdicts() {
    let stable = full_test(
        &SystemConfig::example2(Example2Params::reference(1.0, 1.0)),
        &opts(32),
    )
    .unwrap();
    assert_eq!(stable.verdict, Verdict::Stable, "{}", stable.reason);
    let ns = stable.n_star.unwrap();
    assert!((21..=31).contains(&ns.value), "N* = {}", ns.value);
    let unstable = full_test(
        &SystemConfig::example2(Example2Params::reference(1.0, -1.0)),
        &opts(32),
    )
    .unwrap();
    assert_eq!(unstable.verdict, Verdict::Unstable, "{}", unstable.reason);
    let ns = unstable.n_star.unwrap();
    assert!((26..=36).contains(&ns.value), "N* = {}", ns.value);
}

#[test]
fn order_cap_below_n_star_is_inconclusive() {
    let o = TestOptions {
        max_order: Some(5),
        ..opts(32)
    };
    let r = full_test(&SystemConfig::scalar(0.8, -1.2, -0.3, 1.0), &o).unwrap();
    assert_eq!(r.verdict, Verdict::Inconclusive);
    assert_eq!(r.n_used, Some(5));
}

#[test]
fn inadmissible_system_is_an_error() {
    assert!(full_test(&SystemConfig::scalar(-1.0, 0.0, 1.0, 1.0), &opts(16)).is_err());
}

#[test]
fn report_serializes_without_wall_time_by_default() {
    let r = full_test(&SystemConfig::scalar(-1.0, 0.2, 0.1, 1.0), &opts(24)).unwrap();
    let json = serde_json::to_string(&r).unwrap();
    assert!(!json.contains("wall_ms"));
    let back: StabilityReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, r);
}

proptest! {
    #[test]
    fn delta_ratio_identity(c1 in 0.01f64..100.0, c2 in 0.0f64..100.0, mu in 0.01f64..50.0, n in 0usize..80) {
        let ratio = delta_n(c1, c2, mu, n + 1) / delta_n(c1, c2, mu, n);
        prop_assert!((ratio - mu / (n + 1) as f64).abs() <= 1e-12 * ratio);
    }

    #[test]
    fn n_star_meets_margin(c1 in 0.01f64..100.0, c2 in 0.0f64..100.0, mu in 0.05f64..30.0, a0 in 1e-4f64..1.0) {
        let c = constants(c1, c2.min(c1), mu, a0);
        let ns = compute_n_star(&c, NStarRule::Tight).unwrap();
        prop_assert!(ns.delta <= a0 * (1.0 + 1e-12));
    }

    #[test]
    fn psd_inherits_to_leading_blocks(a0 in -2.0f64..0.5, a1 in -1.0f64..1.0, d in -0.7f64..0.7) {
        with_digits(32, || {
            let Ok(sys) = NeutralSystem::scalar(a0, a1, d, 1.0) else { return Ok(()) };
            let Ok(b) = CriterionBuilder::new(&sys, 6, Exec::Sequential) else { return Ok(()) };
            let pass: Vec<bool> = (1..=6)
                .map(|n| necessary_test(&b.criterion(n).unwrap(), 1e-20).unwrap().pass)
                .collect();
            for n in 1..6 {
                prop_assert!(!pass[n] || pass[n - 1], "N = {} passes but N = {} does not", n + 1, n);
            }
            Ok(())
        })?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn verdict_agrees_with_roots(a0 in -2.0f64..1.0, a1 in -1.5f64..1.5, d in -0.6f64..0.6) {
        let cfg = SystemConfig::scalar(a0, a1, d, 1.0);
        let f = cfg.realize().unwrap().to_f64();
        let s = rightmost_root(&f).unwrap().unwrap();
        prop_assume!(s.re.abs() >= 0.05);
        let r = full_test(&cfg, &opts(32)).unwrap();
        let expected = if s.re < 0.0 { Verdict::Stable } else { Verdict::Unstable };
        prop_assert_eq!(r.verdict, expected, "{}", r.reason);
    }
}
