// Copyright 2026 nstab Contributors
// SPDX-License-Identifier: Apache-2.0

//! Decision layer: PSD testing, the sufficiency constants, the order `N*`
//! and the necessary, sufficient and combined stability verdicts.

use std::time::Instant;

use nalgebra as na;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::{pivoted_cholesky, rayleigh_quotient, Mat};
use crate::lyapunov::{
    lyapunov_condition_check, solve_delay_lyapunov, ConditionStatus, DelayLyapunovMatrix,
    LyapunovConditionReport, LyapunovResiduals,
};
use crate::moments::{CriterionBuilder, CriterionMatrix};
use crate::scalar::{
    default_digits, digits, ln_factorial, with_digits, Real, MAX_DIGITS, MIN_DIGITS,
};
use crate::system::{growth_constants, validate, NeutralSystem, SystemConfig};

/// Outcome of [`psd_check`].
#[derive(Clone, Debug)]
pub struct PsdCertificate {
    pub psd: bool,
    /// Absolute pivot threshold `tol·‖M‖₂`.
    pub threshold: Real,
    /// 1-based pivot step at which the factorization failed.
    pub failing_pivot: Option<usize>,
    /// Row index (0-based) of the failing pivot.
    pub failing_index: Option<usize>,
    /// Vector `x` with `xᵀMx < −threshold`.
    pub witness: Option<Vec<Real>>,
    /// `xᵀMx / xᵀx` for the witness.
    pub witness_quotient: Option<Real>,
}

/// Pivoted Cholesky PSD test with pivot threshold `−tol·‖M‖₂`.
pub fn psd_check(m: &Mat, tol: f64) -> Result<PsdCertificate> {
    if !m.is_square() || !m.is_symmetric() {
        return Err(Error::InvalidArgument(
            "PSD check needs a symmetric matrix".into(),
        ));
    }
    let threshold = Real::from_f64(tol) * m.spectral_norm();
    Ok(psd_with_threshold(m, threshold))
}

fn psd_with_threshold(m: &Mat, threshold: Real) -> PsdCertificate {
    let c = pivoted_cholesky(m, &threshold);
    let witness_quotient = c.witness.as_ref().map(|x| rayleigh_quotient(m, x));
    PsdCertificate {
        psd: c.psd,
        threshold,
        failing_pivot: c.failing_step,
        failing_index: c.failing_index,
        witness: c.witness,
        witness_quotient,
    }
}

/// Which `μ` enters the `N*` formula.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NStarRule {
    /// `μ = hr/2`.
    #[default]
    Tight,
    /// `μ = max{hr/2, (hr/2)²}`.
    Conservative,
}

/// Sup-norm constants of the sufficiency bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SufficiencyConstants {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub c1: f64,
    pub c2: f64,
    /// `max{hr/2, (hr/2)²}`.
    pub mu: f64,
    /// `hr/2`.
    pub mu_tight: f64,
    pub r: f64,
    pub a0: f64,
    pub h: f64,
    pub norm_d: f64,
    /// Grid intervals used for `M₁`, `M₂`.
    pub grid: usize,
    pub safety: f64,
}

impl SufficiencyConstants {
    pub fn mu_for(&self, rule: NStarRule) -> f64 {
        match rule {
            NStarRule::Tight => self.mu_tight,
            NStarRule::Conservative => self.mu,
        }
    }

    /// `δ_N` with `μ = max{hr/2, (hr/2)²}`.
    pub fn delta(&self, order: usize) -> f64 {
        delta_n(self.c1, self.c2, self.mu, order)
    }

    /// Top-left shift `δ_N/(1−‖D‖)²` of the sufficiency test.
    pub fn shift(&self, order: usize) -> f64 {
        self.delta(order) / (1.0 - self.norm_d).powi(2)
    }
}

/// Number of grid intervals for the sup-norm estimates.
pub const SUP_GRID: usize = 1000;
/// Safety multiplier applied to grid maxima.
pub const SUP_SAFETY: f64 = 1.05;

fn norm2(m: &na::DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

/// `M₁ = sup‖Uᵀ(θ)A₁ − U′ᵀ(θ)D‖`, `M₂ = sup‖A₁ᵀU(θ)A₁ + 2A₁ᵀU′(θ)D − DᵀU″(θ)D‖`
/// over `(0, h)` and `M₃ = ‖DᵀPD‖`, then `c₁`, `c₂` and `μ`.
pub fn sufficiency_constants(
    sys: &NeutralSystem,
    dlm: &DelayLyapunovMatrix,
    exec: Exec,
) -> Result<SufficiencyConstants> {
    let g = growth_constants(sys)?;
    let f = sys.to_f64();
    let (a1, d) = (&f.a1, &f.d);
    let (a1t, dt) = (a1.transpose(), d.transpose());
    let states = dlm.states_on_grid(SUP_GRID, exec);
    let mut m1 = 0.0f64;
    let mut m2 = 0.0f64;
    for s in &states {
        let dv = dlm.derivatives_from_state(s);
        let (u, du, ddu) = (dv.u.to_dmatrix(), dv.du.to_dmatrix(), dv.ddu.to_dmatrix());
        m1 = m1.max(norm2(&(u.transpose() * a1 - du.transpose() * d)));
        m2 = m2.max(norm2(
            &(&a1t * &u * a1 + 2.0 * &a1t * &du * d - &dt * &ddu * d),
        ));
    }
    m1 *= SUP_SAFETY;
    m2 *= SUP_SAFETY;
    let p = dlm.p().to_dmatrix();
    let m3 = norm2(&(&dt * p * d));
    let h = f.h;
    let norm_d = g.norm_d.to_f64();
    let r = g.r.to_f64();
    let c1 = h * ((1.0 + norm_d) * m1 + h * m2 + m3);
    let c2 = h * (h * m2 + m3);
    let half = h * r / 2.0;
    Ok(SufficiencyConstants {
        m1,
        m2,
        m3,
        c1,
        c2,
        mu: half.max(half * half),
        mu_tight: half,
        r,
        a0: g.a0.to_f64(),
        h,
        norm_d,
        grid: SUP_GRID,
        safety: SUP_SAFETY,
    })
}

/// `δ_N = (8c₁ + 16c₂) μ^N / N!`, in log space.
pub fn delta_n(c1: f64, c2: f64, mu: f64, order: usize) -> f64 {
    let k = 8.0 * c1 + 16.0 * c2;
    if k == 0.0 {
        return 0.0;
    }
    if order == 0 {
        return k;
    }
    if mu == 0.0 {
        return 0.0;
    }
    (k.ln() + order as f64 * mu.ln() - ln_factorial(order)).exp()
}

/// Principal branch of the Lambert W function on `z ≥ 0` by Halley iteration.
pub fn lambert_w(z: f64) -> Result<f64> {
    if !(z >= 0.0) || !z.is_finite() {
        return Err(Error::Domain {
            value: z,
            domain: "[0, ∞)".into(),
        });
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    let mut w = if z < 1.0 {
        z.ln_1p()
    } else {
        let l = z.ln();
        (l - l.max(1.0).ln()).max(0.5)
    };
    for _ in 0..100 {
        let ew = w.exp();
        let fw = w * ew - z;
        let wp1 = w + 1.0;
        let step = fw / (ew * wp1 - (w + 2.0) * fw / (2.0 * wp1));
        w -= step;
        if step.abs() <= 1e-17 * w.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(w)
}

/// `N*` with the inputs that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NStar {
    pub value: usize,
    pub rule: NStarRule,
    pub mu: f64,
    /// `(8c₁ + 16c₂)/a₀`.
    pub ratio: f64,
    /// `δ_{N*}` evaluated with the rule's `μ`.
    pub delta: f64,
}

/// `N* = ⌈μ·exp(1 + W(log((8c₁+16c₂)/a₀)/(eμ)))⌉`.
///
/// Returns 1 when the ratio is below 1 (the bound is already below `a₀`)
/// or when `μ = 0`.
pub fn compute_n_star(c: &SufficiencyConstants, rule: NStarRule) -> Result<NStar> {
    let mu = c.mu_for(rule);
    let ratio = (8.0 * c.c1 + 16.0 * c.c2) / c.a0;
    let value = if mu == 0.0 || ratio < 1.0 {
        1
    } else {
        let arg = ratio.ln() / (std::f64::consts::E * mu);
        let n = mu * (1.0 + lambert_w(arg)?).exp();
        n.ceil().max(1.0) as usize
    };
    Ok(NStar {
        value,
        rule,
        mu,
        ratio,
        delta: delta_n(c.c1, c.c2, mu, value),
    })
}

/// Outcome of the necessary or sufficient matrix test at one order.
#[derive(Clone, Debug)]
pub struct MatrixTest {
    pub order: usize,
    pub pass: bool,
    pub lambda_min: Real,
    pub certificate: PsdCertificate,
}

/// `P_N ⪰ 0` within the relative tolerance `tol`.
pub fn necessary_test(criterion: &CriterionMatrix, tol: f64) -> Result<MatrixTest> {
    let cert = psd_check(&criterion.p, tol)?;
    Ok(MatrixTest {
        order: criterion.order,
        pass: cert.psd,
        lambda_min: criterion.lambda_min.clone(),
        certificate: cert,
    })
}

/// `P_N − 𝒳_N` with the top-left block `δ_N/(1−‖D‖)²·I_n`.
pub fn shifted_criterion(criterion: &CriterionMatrix, shift: f64) -> Mat {
    let n = criterion.blocks.j0.rows();
    let mut p = criterion.p.clone();
    let s = Real::from_f64(shift);
    for i in 0..n {
        p[(i, i)] = &p[(i, i)] - &s;
    }
    p
}

/// `P_N − 𝒳_N ⪰ 0` within `tol`; passing certifies exponential stability.
pub fn sufficient_test(
    criterion: &CriterionMatrix,
    constants: &SufficiencyConstants,
    tol: f64,
) -> Result<MatrixTest> {
    let shifted = shifted_criterion(criterion, constants.shift(criterion.order));
    let cert = psd_check(&shifted, tol)?;
    let (lmin, _) = crate::linalg::sym_extreme_eigenvalues(&shifted);
    Ok(MatrixTest {
        order: criterion.order,
        pass: cert.psd,
        lambda_min: lmin,
        certificate: cert,
    })
}

/// Relative PSD tolerance `10^{−max(d−10, ⌈d/2⌉)}` for a requested precision of `d` digits.
pub fn default_tolerance(digits: u32) -> f64 {
    let d = digits as i32;
    10f64.powi(-(d - 10).max((d + 1) / 2))
}

/// Final verdict.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Stable,
    Unstable,
    Inconclusive,
}

impl Verdict {
    /// Process exit code: 0 stable, 1 unstable, 2 inconclusive.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Stable => 0,
            Verdict::Unstable => 1,
            Verdict::Inconclusive => 2,
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(match self {
            Verdict::Stable => "Stable",
            Verdict::Unstable => "Unstable",
            Verdict::Inconclusive => "Inconclusive",
        })
    }
}

/// Options of [`full_test`].
#[derive(Clone, Debug, PartialEq)]
pub struct TestOptions {
    /// Starting precision; falls back to the config, then the global default.
    pub digits: Option<u32>,
    /// Test at this order instead of `N*`.
    pub order: Option<usize>,
    /// Cap on the order (ladder and final test).
    pub max_order: Option<usize>,
    /// Relative PSD tolerance; `None` uses [`default_tolerance`].
    pub tol: Option<f64>,
    pub rule: NStarRule,
    /// Early-exit necessity checks at `N = 2, 4, 8, …`.
    pub ladder: bool,
    /// `ε` of the Lyapunov condition.
    pub eps: f64,
    /// Escalation cap in digits.
    pub max_digits: u32,
    pub exec: Exec,
    pub timing: bool,
}

impl Default for TestOptions {
    fn default() -> Self {
        TestOptions {
            digits: None,
            order: None,
            max_order: None,
            tol: None,
            rule: NStarRule::Tight,
            ladder: true,
            eps: 1e-6,
            max_digits: 1024,
            exec: Exec::default(),
            timing: false,
        }
    }
}

/// One matrix check at a given precision with its audit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderCheck {
    pub order: usize,
    pub digits: u32,
    /// `λ_min(P_N)` as a decimal string.
    pub lambda_min: String,
    /// Absolute PSD threshold `τ`.
    pub tolerance: String,
    /// `‖P_N(d) − P_N(d')‖_F` against the audit precision `d'`.
    pub audit_error: String,
    pub outcome: CheckOutcome,
    /// Whether the sufficiency shift was applied.
    pub shifted: bool,
}

/// Audited result of one matrix check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckOutcome {
    Pass,
    Fail,
    Undecided,
}

/// Full diagnostic report of [`full_test`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub verdict: Verdict,
    pub reason: String,
    pub n: usize,
    pub h: String,
    pub n_used: Option<usize>,
    pub n_star: Option<NStar>,
    pub lambda_min: Option<String>,
    pub constants: Option<SufficiencyConstants>,
    pub lyapunov_condition: LyapunovConditionReport,
    pub residuals: Option<LyapunovResiduals>,
    pub digits_requested: u32,
    pub digits_used: u32,
    pub checks: Vec<OrderCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<u64>,
}

/// Audit precision `d + max(16, d/2)`.
pub fn audit_digits(d: u32) -> u32 {
    (d + (d / 2).max(16)).min(MAX_DIGITS)
}

struct Level {
    digits: u32,
    audit: u32,
    builder: CriterionBuilder,
    audit_builder: CriterionBuilder,
}

impl Level {
    fn new(
        realize: &dyn Fn() -> Result<NeutralSystem>,
        d: u32,
        n_max: usize,
        exec: Exec,
    ) -> Result<Level> {
        let audit = audit_digits(d);
        let build = |dd: u32| with_digits(dd, || CriterionBuilder::new(&realize()?, n_max, exec));
        Ok(Level {
            digits: d,
            audit,
            builder: build(d)?,
            audit_builder: build(audit)?,
        })
    }

    fn check(
        &self,
        order: usize,
        shift: Option<f64>,
        tol_rel: f64,
    ) -> Result<(OrderCheck, CriterionMatrix)> {
        let c = self.builder.criterion(order)?;
        let ca = self.audit_builder.criterion(order)?;
        let (p, pa) = match shift {
            Some(s) => (
                with_digits(self.digits, || shifted_criterion(&c, s)),
                with_digits(self.audit, || shifted_criterion(&ca, s)),
            ),
            None => (c.p.clone(), ca.p.clone()),
        };
        let (cert, lmin) = with_digits(self.digits, || {
            let (lmin, lmax) = match shift {
                Some(_) => crate::linalg::sym_extreme_eigenvalues(&p),
                None => (c.lambda_min.clone(), c.lambda_max.clone()),
            };
            let scale = lmin.abs().max(lmax.abs());
            (
                psd_with_threshold(&p, Real::from_f64(tol_rel) * &scale),
                lmin,
            )
        });
        let (outcome, tau, eps) = with_digits(self.audit, || {
            let eps = (&pa - &p.rounded()).norm_fro();
            let tau = cert.threshold.rounded();
            let outcome = if cert.psd && eps <= tau {
                CheckOutcome::Pass
            } else if !cert.psd
                && cert.witness.as_ref().is_some_and(|x| {
                    let xr: Vec<Real> = x.iter().map(Real::rounded).collect();
                    rayleigh_quotient(&pa, &xr) < -(&tau + &eps)
                })
            {
                CheckOutcome::Fail
            } else {
                CheckOutcome::Undecided
            };
            (outcome, tau, eps)
        });
        Ok((
            OrderCheck {
                order,
                digits: self.digits,
                lambda_min: lmin.to_decimal_string(),
                tolerance: tau.to_sci_string(6),
                audit_error: eps.to_sci_string(6),
                outcome,
                shifted: shift.is_some(),
            },
            c,
        ))
    }
}

/// Runs [`full_test_with`] on a configuration, re-reading it at each precision.
pub fn full_test(config: &SystemConfig, opts: &TestOptions) -> Result<StabilityReport> {
    let d0 = opts
        .digits
        .or(config.precision_digits)
        .unwrap_or_else(default_digits);
    full_test_with(&|| config.realize(), d0, opts)
}

/// Runs [`full_test_with`] on an already built system.
pub fn full_test_system(sys: &NeutralSystem, opts: &TestOptions) -> Result<StabilityReport> {
    let d0 = opts.digits.unwrap_or_else(digits);
    full_test_with(&|| Ok(sys.rounded()), d0, opts)
}

/// The combined test.
///
/// 1. Validate and check the Lyapunov condition on the computed spectrum; a
///    violation means instability.
/// 2. Compute the sup constants and `N*` once at `max(d₀, 16)` digits.
/// 3. At precision `d` build `P_N` up to the target order together with a
///    copy at the audit precision `d'`. Each check passes when `P_N(d)` is
///    PSD within `τ` and `‖P_N(d) − P_N(d')‖_F ≤ τ`; it fails when the
///    pivot witness has Rayleigh quotient below `−(τ+ε)` on `P_N(d')`.
/// 4. The ladder `N = 2, 4, 8, …` stops with Unstable at the first failure.
///    The final order decides; an undecided check doubles `d` up to the cap.
pub fn full_test_with(
    realize: &dyn Fn() -> Result<NeutralSystem>,
    d0: u32,
    opts: &TestOptions,
) -> Result<StabilityReport> {
    let start = Instant::now();
    if !(MIN_DIGITS..=MAX_DIGITS).contains(&d0) {
        return Err(Error::InvalidArgument(format!(
            "precision {d0} outside [{MIN_DIGITS}, {MAX_DIGITS}]"
        )));
    }
    let base_digits = d0.max(16);
    let sys0 = with_digits(base_digits, realize)?;
    validate(&sys0).into_result()?;
    let n = sys0.n();
    let h = sys0.h().to_decimal_string();

    let cond = lyapunov_condition_check(&sys0, opts.eps);
    let mut report = StabilityReport {
        verdict: Verdict::Inconclusive,
        reason: String::new(),
        n,
        h,
        n_used: None,
        n_star: None,
        lambda_min: None,
        constants: None,
        lyapunov_condition: cond.clone(),
        residuals: None,
        digits_requested: d0,
        digits_used: d0,
        checks: Vec::new(),
        wall_ms: None,
    };
    let finish = |mut r: StabilityReport| {
        if opts.timing {
            r.wall_ms = Some(start.elapsed().as_millis() as u64);
        }
        Ok(r)
    };
    match cond.status {
        ConditionStatus::Violated => {
            report.verdict = Verdict::Unstable;
            report.reason = format!("Lyapunov condition violated: {}", cond.message);
            return finish(report);
        }
        ConditionStatus::Inconclusive => {
            report.reason = format!("Lyapunov condition inconclusive: {}", cond.message);
            return finish(report);
        }
        ConditionStatus::Satisfied => {}
    }

    let (constants, n_star) = with_digits(base_digits, || -> Result<_> {
        let dlm = solve_delay_lyapunov(&sys0)?;
        let c = sufficiency_constants(&sys0, &dlm, opts.exec)?;
        let ns = compute_n_star(&c, opts.rule)?;
        Ok((c, ns))
    })?;
    let ns = n_star.value;
    report.constants = Some(constants.clone());
    report.n_star = Some(n_star);

    let mut target = opts.order.unwrap_or(ns);
    if let Some(cap) = opts.max_order {
        target = target.min(cap);
    }
    let target = target.max(1);
    let ladder: Vec<usize> = if opts.ladder {
        std::iter::successors(Some(2usize), |k| k.checked_mul(2))
            .take_while(|&k| k < target)
            .collect()
    } else {
        Vec::new()
    };

    // The tolerance is fixed by the requested precision; escalation only
    // shrinks the audit error.
    let tol_rel = opts.tol.unwrap_or_else(|| default_tolerance(d0));
    let mut d = d0;
    loop {
        report.digits_used = d;
        let level = match Level::new(realize, d, target, opts.exec) {
            Ok(l) => l,
            Err(Error::DegenerateBoundary { .. }) | Err(Error::RecursionUnavailable { .. })
                if d * 2 <= opts.max_digits =>
            {
                d *= 2;
                continue;
            }
            Err(e) => return Err(e),
        };
        report.residuals = Some(level.builder.lyapunov().residuals().clone());
        let mut early_fail = None;
        for &k in &ladder {
            let (chk, _) = level.check(k, None, tol_rel)?;
            let fail = chk.outcome == CheckOutcome::Fail;
            report.checks.push(chk);
            if fail {
                early_fail = Some(k);
                break;
            }
        }
        if let Some(k) = early_fail {
            let last = report.checks.last().expect("just pushed");
            report.lambda_min = Some(last.lambda_min.clone());
            report.n_used = Some(k);
            report.verdict = Verdict::Unstable;
            report.reason = format!("P_{k} is not positive semidefinite");
            return finish(report);
        }
        let (chk, _) = level.check(target, None, tol_rel)?;
        let outcome = chk.outcome;
        report.lambda_min = Some(chk.lambda_min.clone());
        report.n_used = Some(target);
        report.checks.push(chk);
        match outcome {
            CheckOutcome::Fail => {
                report.verdict = Verdict::Unstable;
                report.reason = format!("P_{target} is not positive semidefinite");
                return finish(report);
            }
            CheckOutcome::Pass if target >= ns => {
                report.verdict = Verdict::Stable;
                report.reason =
                    format!("P_{target} is positive semidefinite and N = {target} ≥ N* = {ns}");
                return finish(report);
            }
            CheckOutcome::Pass if opts.order.is_some() && opts.order.unwrap_or(0) <= target => {
                let shift = constants.shift(target);
                let (sc, _) = level.check(target, Some(shift), tol_rel)?;
                let so = sc.outcome;
                report.checks.push(sc);
                match so {
                    CheckOutcome::Pass => {
                        report.verdict = Verdict::Stable;
                        report.reason =
                            format!("P_{target} − X_{target} is positive semidefinite (sufficiency certified)");
                        return finish(report);
                    }
                    CheckOutcome::Fail => {
                        report.verdict = Verdict::Inconclusive;
                        report.reason = format!(
                            "P_{target} passes the necessary test but the sufficiency shift is not covered below N* = {ns}"
                        );
                        return finish(report);
                    }
                    CheckOutcome::Undecided => {}
                }
            }
            CheckOutcome::Pass => {
                report.verdict = Verdict::Inconclusive;
                report.reason = format!(
                    "P_{target} passes the necessary test but the order cap is below N* = {ns}"
                );
                return finish(report);
            }
            CheckOutcome::Undecided => {}
        }
        if d * 2 > opts.max_digits {
            report.verdict = Verdict::Inconclusive;
            report.reason = format!(
                "criterion undecided at {d} digits (audit error exceeds tolerance); escalation cap {} reached",
                opts.max_digits
            );
            return finish(report);
        }
        d *= 2;
    }
}
