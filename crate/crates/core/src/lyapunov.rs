// Copyright 2026 nstab Contributors
// SPDX-License-Identifier: Apache-2.0

//! The delay Lyapunov matrix `U(θ)`, `θ ∈ [−h, h]`.
//!
//! On `[0, h]` the pair `y(θ) = [vec U(θ); vec U(θ−h)]` obeys `y′ = L y`,
//! where `L` combines the dynamic property with its mirror image for negative
//! arguments. The initial value `y(0)` is fixed by the boundary conditions
//! `U(θ−h)|_{θ=h} = U(0)`, `U(−h) = Uᵀ(h)`, `U(0) = Uᵀ(0)` and the algebraic
//! property `P − DᵀPD = −W` with `P = U′(0+) − U′(0−)`. These give `4n²`
//! linear equations in `2n²` unknowns, solved in the least-squares sense with
//! a rank check.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::{expm, lstsq, Lu, Mat};
use crate::oracle::{characteristic_roots, RootSearch};
use crate::scalar::{bits, digits, Real};
use crate::system::{validate, NeutralSystem};

/// The propagator `L` acting on `[vec U(θ); vec U(θ−h)]`.
#[derive(Clone, Debug)]
pub struct PropagatorL {
    n: usize,
    l: Mat,
    lu: Option<Lu>,
    rcond: f64,
}

impl PropagatorL {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &Mat {
        &self.l
    }

    /// False when `det(L)` is zero to working precision.
    pub fn is_invertible(&self) -> bool {
        self.lu.is_some()
    }

    /// Pivot-ratio estimate of the reciprocal condition of `L`.
    pub fn rcond(&self) -> f64 {
        self.rcond
    }

    pub fn apply(&self, v: &[Real]) -> Vec<Real> {
        self.l.matvec(v)
    }

    /// Solves `L x = b`.
    pub fn solve(&self, b: &[Real]) -> Result<Vec<Real>> {
        match &self.lu {
            Some(lu) => Ok(lu.solve(b)),
            None => Err(Error::RecursionUnavailable { rcond: self.rcond }),
        }
    }
}

/// Commutation matrix `T` with `vec(Xᵀ) = T vec(X)` for `n × n` matrices.
pub fn commutation(n: usize) -> Mat {
    let mut t = Mat::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            t[(i * n + j, j * n + i)] = Real::one();
        }
    }
    t
}

/// Builds `L = M⁻¹K` with `M = [[I⊗I, −I⊗D], [−Dᵀ⊗I, I⊗I]]` and
/// `K = [[I⊗A₀, I⊗A₁], [−A₁ᵀ⊗I, −A₀ᵀ⊗I]]` in the `vec(AXB) = (A⊗B)vec X`
/// convention.
pub fn build_l(sys: &NeutralSystem) -> Result<PropagatorL> {
    let n = sys.n();
    let m = n * n;
    let id = Mat::identity(n);
    let kv = Mat::kron_vec;
    let mut big_m = Mat::identity(2 * m);
    big_m.set_block(0, m, &-&kv(&id, sys.d()));
    big_m.set_block(m, 0, &-&kv(&sys.d().transpose(), &id));
    let mut big_k = Mat::zeros(2 * m, 2 * m);
    big_k.set_block(0, 0, &kv(&id, sys.a0()));
    big_k.set_block(0, m, &kv(&id, sys.a1()));
    big_k.set_block(m, 0, &-&kv(&sys.a1().transpose(), &id));
    big_k.set_block(m, m, &-&kv(&sys.a0().transpose(), &id));
    let m_lu = Lu::new(&big_m)
        .map_err(|_| Error::Singular("leading block of L is singular; requires ‖D‖ < 1".into()))?;
    let l = m_lu.solve_mat(&big_k);
    let (lu, rcond) = match Lu::new(&l) {
        Ok(lu) => {
            let rc = lu.pivot_ratio();
            let floor = (2 * m) as f64 * 2f64.powi(-(bits() as i32)) * 64.0;
            if rc <= floor {
                (None, rc)
            } else {
                (Some(lu), rc)
            }
        }
        Err(_) => (None, 0.0),
    };
    Ok(PropagatorL { n, l, lu, rcond })
}

/// Maximum residuals of the three defining properties.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovResiduals {
    /// `U′(θ) − U′(θ−h)D − U(θ)A₀ − U(θ−h)A₁` over `θ ∈ [0, h]`.
    pub dynamic: f64,
    /// `U′(θ) − DᵀU′(θ+h) + A₀ᵀU(θ) + A₁ᵀU(θ+h)` over `θ ∈ [−h, 0]`.
    pub dynamic_negative: f64,
    /// Propagated `U(θ−h)` against `Uᵀ(h−θ)`.
    pub symmetry: f64,
    /// `P − DᵀPD + W`.
    pub algebraic: f64,
    /// Least-squares residual of the boundary system.
    pub boundary: f64,
    pub boundary_rank: usize,
    pub boundary_condition: f64,
}

impl LyapunovResiduals {
    pub fn max(&self) -> f64 {
        self.dynamic
            .max(self.dynamic_negative)
            .max(self.symmetry)
            .max(self.algebraic)
    }
}

/// Verification tolerance `10^{−(digits−6)}` for the active precision.
pub fn residual_tolerance() -> f64 {
    10f64.powi(-(digits() as i32 - 6))
}

/// Number of grid intervals used for residual verification.
pub const RESIDUAL_GRID: usize = 100;

/// Semi-analytic representation of the delay Lyapunov matrix.
#[derive(Clone, Debug)]
pub struct DelayLyapunovMatrix {
    n: usize,
    h: Real,
    prop: PropagatorL,
    y0: Vec<Real>,
    exp_hl: Mat,
    u0: Mat,
    uh: Mat,
    umh: Mat,
    up0: Mat,
    p: Mat,
    residuals: LyapunovResiduals,
}

fn first_half(n: usize, v: &[Real]) -> Mat {
    Mat::unvec(n, n, &v[..n * n])
}

fn second_half(n: usize, v: &[Real]) -> Mat {
    Mat::unvec(n, n, &v[n * n..])
}

/// Solves the boundary-value problem for `U`.
pub fn solve_delay_lyapunov(sys: &NeutralSystem) -> Result<DelayLyapunovMatrix> {
    validate(sys).into_result()?;
    let n = sys.n();
    let m = n * n;
    let prop = build_l(sys)?;
    let l = prop.matrix();
    let exp_hl = expm(&l.scale(sys.h()));
    let t = commutation(n);
    let l_e = l.matmul(&exp_hl);

    let mut a = Mat::zeros(4 * m, 2 * m);
    let mut rhs = vec![Real::zero(); 4 * m];
    // U(θ−h) at θ = h equals U(0).
    for i in 0..m {
        for j in 0..2 * m {
            a[(i, j)] = exp_hl[(m + i, j)].clone();
        }
        a[(i, i)] -= Real::one();
    }
    // U(−h) = Uᵀ(h).
    let t_e = t.matmul(&exp_hl.block(0, 0, m, 2 * m));
    for i in 0..m {
        for j in 0..2 * m {
            a[(m + i, j)] = -t_e[(i, j)].clone();
        }
        a[(m + i, m + i)] += Real::one();
    }
    // P − DᵀPD = −W with P = U′(0+) − U′(0−).
    let pmap = &l.block(0, 0, m, 2 * m) - &l_e.block(m, 0, m, 2 * m);
    let alg = &Mat::identity(m) - &Mat::kron_vec(&sys.d().transpose(), sys.d());
    let alg_rows = alg.matmul(&pmap);
    a.set_block(2 * m, 0, &alg_rows);
    for (i, w) in sys.w().vec().into_iter().enumerate() {
        rhs[2 * m + i] = -w;
    }
    // U(0) = Uᵀ(0).
    let sym = &Mat::identity(m) - &t;
    a.set_block(3 * m, 0, &sym);

    let sol = lstsq(&a, &rhs)?;
    if sol.rank < 2 * m {
        return Err(Error::DegenerateBoundary {
            rank: sol.rank,
            size: 2 * m,
            condition: sol.condition,
        });
    }
    let y0 = sol.x;
    let yh = exp_hl.matvec(&y0);
    let u0 = first_half(n, &y0);
    let umh = second_half(n, &y0);
    let uh = first_half(n, &yh);
    let up0 = first_half(n, &l.matvec(&y0));
    let p = &up0 + &up0.transpose();
    let mut dlm = DelayLyapunovMatrix {
        n,
        h: sys.h().clone(),
        prop,
        y0,
        exp_hl,
        u0,
        uh,
        umh,
        up0,
        p,
        residuals: LyapunovResiduals {
            dynamic: 0.0,
            dynamic_negative: 0.0,
            symmetry: 0.0,
            algebraic: 0.0,
            boundary: sol.residual.to_f64(),
            boundary_rank: sol.rank,
            boundary_condition: sol.condition,
        },
    };
    dlm.residuals = dlm.compute_residuals(sys, RESIDUAL_GRID);
    Ok(dlm)
}

/// `U`, `U′`, `U″` at one point of `[0, h]`.
#[derive(Clone, Debug)]
pub struct UDerivatives {
    pub u: Mat,
    pub du: Mat,
    pub ddu: Mat,
}

impl DelayLyapunovMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> &Real {
        &self.h
    }

    pub fn propagator(&self) -> &PropagatorL {
        &self.prop
    }

    /// `[vec U(0); vec U(−h)]`.
    pub fn y0(&self) -> &[Real] {
        &self.y0
    }

    pub fn u0(&self) -> &Mat {
        &self.u0
    }

    pub fn uh(&self) -> &Mat {
        &self.uh
    }

    pub fn umh(&self) -> &Mat {
        &self.umh
    }

    /// One-sided derivative `U′(0+)`.
    pub fn du0_plus(&self) -> &Mat {
        &self.up0
    }

    /// Jump matrix `P = U′(0+) − U′(0−) = U′(0+) + U′(0+)ᵀ`.
    pub fn p(&self) -> &Mat {
        &self.p
    }

    pub fn residuals(&self) -> &LyapunovResiduals {
        &self.residuals
    }

    fn check_domain(&self, theta: &Real) -> Result<()> {
        if theta.abs() > self.h {
            Err(Error::Domain {
                value: theta.to_f64(),
                domain: format!("[-h, h] with h = {}", self.h.to_f64()),
            })
        } else {
            Ok(())
        }
    }

    /// `exp(θL)·y0` for `θ ∈ [0, h]`.
    pub fn state(&self, theta: &Real) -> Result<Vec<Real>> {
        if theta.is_sign_negative() {
            return Err(Error::Domain {
                value: theta.to_f64(),
                domain: "[0, h]".into(),
            });
        }
        self.check_domain(theta)?;
        if *theta == self.h {
            return Ok(self.exp_hl.matvec(&self.y0));
        }
        if theta.is_zero() {
            return Ok(self.y0.clone());
        }
        Ok(expm(&self.prop.l.scale(theta)).matvec(&self.y0))
    }

    /// `U(θ)` for `θ ∈ [−h, h]`, using `U(−θ) = Uᵀ(θ)` on the negative half.
    pub fn eval_u(&self, theta: &Real) -> Result<Mat> {
        self.check_domain(theta)?;
        if theta.is_sign_negative() {
            return Ok(self.eval_u(&-theta)?.transpose());
        }
        Ok(first_half(self.n, &self.state(theta)?))
    }

    /// `U′` (`order = 1`) or `U″` (`order = 2`).
    ///
    /// On `[0, h]` the derivative is one-sided at the endpoints (`θ = 0`
    /// gives `U′(0+)`). Negative arguments use `U′(−s) = −U′ᵀ(s)` and
    /// `U″(−s) = U″ᵀ(s)`.
    pub fn eval_u_derivative(&self, theta: &Real, order: u32) -> Result<Mat> {
        if !(1..=2).contains(&order) {
            return Err(Error::InvalidArgument(format!(
                "derivative order must be 1 or 2, got {order}"
            )));
        }
        self.check_domain(theta)?;
        if theta.is_sign_negative() {
            let pos = self.eval_u_derivative(&-theta, order)?.transpose();
            return Ok(if order == 1 { -&pos } else { pos });
        }
        let mut v = self.state(theta)?;
        for _ in 0..order {
            v = self.prop.apply(&v);
        }
        Ok(first_half(self.n, &v))
    }

    /// `U`, `U′`, `U″` from a state vector.
    pub fn derivatives_from_state(&self, state: &[Real]) -> UDerivatives {
        let s1 = self.prop.apply(state);
        let s2 = self.prop.apply(&s1);
        UDerivatives {
            u: first_half(self.n, state),
            du: first_half(self.n, &s1),
            ddu: first_half(self.n, &s2),
        }
    }

    /// States at `θ_k = k·h/intervals`, `k = 0..=intervals`.
    ///
    /// The grid is cut into a fixed number of chunks, each seeded with its
    /// own exponential and advanced by a shared step propagator, so the
    /// result does not depend on `exec`.
    pub fn states_on_grid(&self, intervals: usize, exec: Exec) -> Vec<Vec<Real>> {
        assert!(intervals >= 1, "grid needs at least one interval");
        const CHUNKS: usize = 8;
        let step = &self.h / Real::from_i64(intervals as i64);
        let step_prop = expm(&self.prop.l.scale(&step));
        let per = intervals.div_ceil(CHUNKS).max(1);
        let starts: Vec<usize> = (0..=intervals).step_by(per).collect();
        let chunks = exec.map(starts, |k0| {
            let k1 = (k0 + per).min(intervals + 1);
            let theta0 = &step * Real::from_i64(k0 as i64);
            let mut s = if k0 == 0 {
                self.y0.clone()
            } else {
                expm(&self.prop.l.scale(&theta0)).matvec(&self.y0)
            };
            let mut out = Vec::with_capacity(k1 - k0);
            for k in k0..k1 {
                if k > k0 {
                    s = step_prop.matvec(&s);
                }
                out.push(if k == intervals {
                    self.exp_hl.matvec(&self.y0)
                } else {
                    s.clone()
                });
            }
            out
        });
        chunks.into_iter().flatten().collect()
    }

    fn compute_residuals(&self, sys: &NeutralSystem, intervals: usize) -> LyapunovResiduals {
        let n = self.n;
        let states = self.states_on_grid(intervals, Exec::Sequential);
        let derivs: Vec<UDerivatives> = states
            .iter()
            .map(|s| self.derivatives_from_state(s))
            .collect();
        let (a0, a1, d) = (sys.a0(), sys.a1(), sys.d());
        let mut dynamic = Real::zero();
        let mut dynamic_negative = Real::zero();
        let mut symmetry = Real::zero();
        for k in 0..=intervals {
            let mirror = &derivs[intervals - k];
            // Values at θ−h obtained through the symmetry property from θ' = h−θ.
            let u_back = mirror.u.transpose();
            let du_back = -&mirror.du.transpose();
            let cur = &derivs[k];
            let res = &(&(&cur.du - &du_back.matmul(d)) - &cur.u.matmul(a0)) - &u_back.matmul(a1);
            dynamic = dynamic.max(res.norm_fro());
            // Negative argument θ = −s, s = θ_k; θ + h = h − s.
            let s_state = cur;
            let fwd = mirror;
            let u_neg = s_state.u.transpose();
            let du_neg = -&s_state.du.transpose();
            let res_neg = &(&(&du_neg - &d.transpose().matmul(&fwd.du))
                + &a0.transpose().matmul(&u_neg))
                + &a1.transpose().matmul(&fwd.u);
            dynamic_negative = dynamic_negative.max(res_neg.norm_fro());
            let v = second_half(n, &states[k]);
            symmetry = symmetry.max((&v - &mirror.u.transpose()).norm_fro());
        }
        let alg = &(&self.p - &d.transpose().matmul(&self.p).matmul(d)) + sys.w();
        LyapunovResiduals {
            dynamic: dynamic.to_f64(),
            dynamic_negative: dynamic_negative.to_f64(),
            symmetry: symmetry.to_f64(),
            algebraic: alg.norm_fro().to_f64(),
            ..self.residuals.clone()
        }
    }
}

/// Tri-state outcome of the Lyapunov condition check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConditionStatus {
    Satisfied,
    Violated,
    Inconclusive,
}

/// Result of checking `|s₁ + s₂| > ε` over the computed spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovConditionReport {
    pub status: ConditionStatus,
    pub satisfied: bool,
    /// Smallest `|sᵢ + sⱼ|` over examined pairs (including `i = j`).
    pub margin: f64,
    pub eps: f64,
    /// Examined roots as `[re, im]`.
    pub roots_examined: Vec<[f64; 2]>,
    /// Real part of the rightmost examined root.
    pub spectral_abscissa: Option<f64>,
    pub message: String,
}

/// Checks the Lyapunov condition over the roots found in a bounded region.
///
/// This is a finite-region approximation of the spectral condition: only
/// roots inside the search rectangle are examined.
pub fn lyapunov_condition_check(sys: &NeutralSystem, eps: f64) -> LyapunovConditionReport {
    let f = sys.to_f64();
    let search = RootSearch::for_system(&f);
    match characteristic_roots(&f, &search) {
        Err(e) => LyapunovConditionReport {
            status: ConditionStatus::Inconclusive,
            satisfied: false,
            margin: f64::NAN,
            eps,
            roots_examined: Vec::new(),
            spectral_abscissa: None,
            message: e.to_string(),
        },
        Ok(set) => {
            let roots = &set.roots;
            let mut margin = f64::INFINITY;
            for i in 0..roots.len() {
                for j in i..roots.len() {
                    margin = margin.min((roots[i] + roots[j]).norm());
                }
            }
            let abscissa = roots
                .iter()
                .map(|s| s.re)
                .fold(None, |acc: Option<f64>, x| {
                    Some(acc.map_or(x, |a| a.max(x)))
                });
            let (status, message) = if !set.converged {
                (
                    ConditionStatus::Inconclusive,
                    "root search did not converge under refinement".to_string(),
                )
            } else if margin > eps {
                (ConditionStatus::Satisfied, String::new())
            } else {
                (
                    ConditionStatus::Violated,
                    format!("two roots sum to {margin:.3e} ≤ ε = {eps:e}"),
                )
            };
            LyapunovConditionReport {
                status,
                satisfied: status == ConditionStatus::Satisfied,
                margin,
                eps,
                roots_examined: roots.iter().map(|s| [s.re, s.im]).collect(),
                spectral_abscissa: abscissa,
                message,
            }
        }
    }
}
