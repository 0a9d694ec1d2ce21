// Copyright 2026 nstab Contributors
// SPDX-License-Identifier: Apache-2.0

//! Moment integrals of the delay Lyapunov matrix, the blocks `J₀…J₆` and
//! the criterion matrix `P_N` in the monomial basis.
//!
//! Moments are computed by vectorized recursions through `L⁻¹`. A direct
//! adaptive-quadrature evaluation of the defining integrals is provided as
//! an oracle and as the fallback when `det(L) = 0`.

use nalgebra as na;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::{sym_extreme_eigenvalues, vadd, vscale, Mat};
use crate::lyapunov::{solve_delay_lyapunov, DelayLyapunovMatrix};
use crate::quadrature::{integrate, QuadOptions};
use crate::scalar::{digits, Real};
use crate::system::NeutralSystem;

/// `(−h)^{k+1}/(k+1)`; the integral of `θ^k` over `[−h, 0]` is its negative.
fn c_coef(h: &Real, k: usize) -> Real {
    Real::neg_pow(h, k + 1) / Real::from_i64(k as i64 + 1)
}

/// Moment matrices up to index `order − 1`.
///
/// With `θ, θ₁, θ₂ ∈ [−h, 0]` and the lower triangle `θ₂ ≤ θ₁`:
/// `G_k = ∫U(h+θ)θ^k`, `Ḡ_k = ∫U(θ)θ^k`, `H_ij = ∬ θ₁^i θ₂^j U(θ₁−θ₂)`,
/// `H̄_ij` its companion from the second half of the state, and the
/// derivative moments `K_ij`, `Q_ij` of `U′`, `U″` over the same triangle.
#[derive(Clone, Debug)]
pub struct MomentSet {
    order: usize,
    g: Vec<Mat>,
    gbar: Vec<Mat>,
    h: Vec<Vec<Mat>>,
    hbar: Vec<Vec<Mat>>,
    k: Vec<Vec<Mat>>,
    q: Vec<Vec<Mat>>,
}

fn split(n: usize, v: &[Real]) -> (Mat, Mat) {
    let m = n * n;
    (Mat::unvec(n, n, &v[..m]), Mat::unvec(n, n, &v[m..]))
}

fn stack(a: &Mat, b: &Mat) -> Vec<Real> {
    let mut v = a.vec();
    v.extend(b.vec());
    v
}

fn g_vectors(dlm: &DelayLyapunovMatrix, order: usize) -> Result<Vec<Vec<Real>>> {
    let prop = dlm.propagator();
    let h = dlm.h();
    let mut out: Vec<Vec<Real>> = Vec::with_capacity(order);
    if order == 0 {
        return Ok(out);
    }
    let rhs = stack(&(dlm.uh() - dlm.u0()), &(dlm.u0() - dlm.umh()));
    out.push(prop.solve(&rhs)?);
    for k in 1..order {
        let r = vadd(
            &vscale(&out[k - 1], &Real::from_i64(k as i64)),
            &vscale(dlm.y0(), &Real::neg_pow(h, k)),
        );
        out.push(vscale(&prop.solve(&r)?, &Real::from_i64(-1)));
    }
    Ok(out)
}

/// `G_k` and `Ḡ_k` for `k < order`.
pub fn compute_g(dlm: &DelayLyapunovMatrix, order: usize) -> Result<(Vec<Mat>, Vec<Mat>)> {
    let n = dlm.n();
    Ok(g_vectors(dlm, order)?.iter().map(|v| split(n, v)).unzip())
}

/// Moments indexed `[i][j]`.
pub type MomentTable = Vec<Vec<Mat>>;

/// `H_ij` and `H̄_ij` for `i, j < order`, given `G` and `Ḡ` of at least that order.
///
/// Rows `i` are independent and run under `exec`; each row is a sequential
/// recursion in `j`.
pub fn compute_h(
    dlm: &DelayLyapunovMatrix,
    g: &[Mat],
    gbar: &[Mat],
    order: usize,
    exec: Exec,
) -> Result<(MomentTable, MomentTable)> {
    if g.len() < order || gbar.len() < order {
        return Err(Error::InvalidArgument(format!(
            "need {order} first moments, got {}",
            g.len().min(gbar.len())
        )));
    }
    let n = dlm.n();
    let prop = dlm.propagator();
    let h = dlm.h();
    let rows = exec.map(
        (0..order).collect(),
        |i: usize| -> Result<(Vec<Mat>, Vec<Mat>)> {
            let gi = stack(&g[i], &gbar[i]);
            let mut prev: Option<Vec<Real>> = None;
            let mut hr = Vec::with_capacity(order);
            let mut hbr = Vec::with_capacity(order);
            for j in 0..order {
                let mut r = vadd(
                    &vscale(dlm.y0(), &c_coef(h, i + j)),
                    &vscale(&gi, &Real::neg_pow(h, j)),
                );
                if let Some(p) = &prev {
                    r = vadd(&r, &vscale(p, &Real::from_i64(j as i64)));
                }
                let x = prop.solve(&r)?;
                let (a, b) = split(n, &x);
                hr.push(a);
                hbr.push(b);
                prev = Some(x);
            }
            Ok((hr, hbr))
        },
    );
    let mut hh = Vec::with_capacity(order);
    let mut hb = Vec::with_capacity(order);
    for r in rows {
        let (a, b) = r?;
        hh.push(a);
        hb.push(b);
    }
    Ok((hh, hb))
}

impl MomentSet {
    /// Runs both recursions and derives the `U′` and `U″` moments.
    pub fn compute(dlm: &DelayLyapunovMatrix, order: usize, exec: Exec) -> Result<MomentSet> {
        let (g, gbar) = compute_g(dlm, order)?;
        let (h, hbar) = compute_h(dlm, &g, &gbar, order, exec)?;
        let hd = dlm.h();
        let (u0, uh, up0) = (dlm.u0(), dlm.uh(), dlm.du0_plus());
        let mut k: Vec<Vec<Mat>> = vec![Vec::with_capacity(order); order];
        let mut q: Vec<Vec<Mat>> = vec![Vec::with_capacity(order); order];
        for i in 0..order {
            // Boundary term of the `U″` moments: U(h)δ_{i0} − (−h)^i U(0) − i G_{i−1}.
            let mut edge = -&u0.scale(&Real::neg_pow(hd, i));
            if i == 0 {
                edge = &edge + uh;
            } else {
                edge = &edge - &g[i - 1].scale(&Real::from_i64(i as i64));
            }
            for j in 0..order {
                let c = c_coef(hd, i + j);
                let pj = Real::neg_pow(hd, j);
                let mut kij = &u0.scale(&c) + &g[i].scale(&pj);
                let mut qij = &up0.scale(&c) + &edge.scale(&pj);
                if j > 0 {
                    let jj = Real::from_i64(j as i64);
                    kij = &kij + &h[i][j - 1].scale(&jj);
                    qij = &qij + &k[i][j - 1].scale(&jj);
                }
                k[i].push(kij);
                q[i].push(qij);
            }
        }
        Ok(MomentSet {
            order,
            g,
            gbar,
            h,
            hbar,
            k,
            q,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn g(&self) -> &[Mat] {
        &self.g
    }

    pub fn gbar(&self) -> &[Mat] {
        &self.gbar
    }

    pub fn h(&self, i: usize, j: usize) -> &Mat {
        &self.h[i][j]
    }

    pub fn hbar(&self, i: usize, j: usize) -> &Mat {
        &self.hbar[i][j]
    }

    /// Lower-triangle moment of `U′`.
    pub fn k(&self, i: usize, j: usize) -> &Mat {
        &self.k[i][j]
    }

    /// Lower-triangle moment of `U″`.
    pub fn q(&self, i: usize, j: usize) -> &Mat {
        &self.q[i][j]
    }
}

/// The blocks of `P_N`.
///
/// `J₀ = U(0)` is `n × n`; `J₁`, `J₂` are `n × nN`; `J₃…J₆` are `nN × nN`
/// full-square double (or single) integrals over `[−h, 0]²`.
#[derive(Clone, Debug, PartialEq)]
pub struct JBlocks {
    pub order: usize,
    pub j0: Mat,
    pub j1: Mat,
    pub j2: Mat,
    pub j3: Mat,
    pub j4: Mat,
    pub j5: Mat,
    pub j6: Mat,
}

impl JBlocks {
    /// Blocks of a lower order (monomial nesting).
    pub fn leading(&self, order: usize) -> JBlocks {
        assert!(order <= self.order, "order {order} exceeds {}", self.order);
        let n = self.j0.rows();
        let c = n * order;
        JBlocks {
            order,
            j0: self.j0.clone(),
            j1: self.j1.block(0, 0, n, c),
            j2: self.j2.block(0, 0, n, c),
            j3: self.j3.leading(c),
            j4: self.j4.leading(c),
            j5: self.j5.leading(c),
            j6: self.j6.leading(c),
        }
    }

    /// All seven blocks in order.
    pub fn all(&self) -> [&Mat; 7] {
        [
            &self.j0, &self.j1, &self.j2, &self.j3, &self.j4, &self.j5, &self.j6,
        ]
    }

    /// `P_N = [[J₀, J₁−J₂], [·ᵀ, J₃+J₄+J₄ᵀ−J₅−J₆]]`, exactly symmetric.
    pub fn criterion(&self) -> Mat {
        let n = self.j0.rows();
        let c = n * self.order;
        let size = n + c;
        let mut p = Mat::zeros(size, size);
        p.set_block(0, 0, &self.j0.symmetric_part());
        let top = &self.j1 - &self.j2;
        p.set_block(0, n, &top);
        p.set_block(n, 0, &top.transpose());
        let j4t = self.j4.transpose();
        for r in 0..c {
            for col in 0..=r {
                let v = &self.j3[(r, col)] + &self.j4[(r, col)] + &j4t[(r, col)]
                    - &self.j5[(r, col)]
                    - &self.j6[(r, col)];
                p[(n + r, n + col)] = v.clone();
                p[(n + col, n + r)] = v;
            }
        }
        p
    }
}

/// Assembles `J₀…J₆` of order `order` from recursively computed moments.
pub fn assemble_j(
    sys: &NeutralSystem,
    dlm: &DelayLyapunovMatrix,
    moments: &MomentSet,
    order: usize,
) -> Result<JBlocks> {
    if order > moments.order() {
        return Err(Error::InvalidArgument(format!(
            "order {order} exceeds computed moments {}",
            moments.order()
        )));
    }
    let n = sys.n();
    let c = n * order;
    let (a1, d) = (sys.a1(), sys.d());
    let (a1t, dt) = (a1.transpose(), d.transpose());
    let h = dlm.h();
    let u0 = dlm.u0();
    let u0d = u0.matmul(d);
    let mut j1 = Mat::zeros(n, c);
    let mut j2 = Mat::zeros(n, c);
    for k in 0..order {
        j1.set_block(0, k * n, &moments.g[k].transpose().matmul(a1));
        let b = if k == 0 {
            (&dlm.uh().transpose() - u0).matmul(d)
        } else {
            &(-&u0d.scale(&Real::neg_pow(h, k)))
                - &moments.g[k - 1]
                    .transpose()
                    .matmul(d)
                    .scale(&Real::from_i64(k as i64))
        };
        j2.set_block(0, k * n, &b);
    }
    let x: Vec<Vec<Mat>> = (0..order)
        .map(|i| {
            (0..order)
                .map(|j| a1t.matmul(&moments.h[i][j]).matmul(a1))
                .collect()
        })
        .collect();
    let y: Vec<Vec<Mat>> = (0..order)
        .map(|i| {
            (0..order)
                .map(|j| dt.matmul(&moments.q[i][j]).matmul(d))
                .collect()
        })
        .collect();
    let dpd = dt.matmul(dlm.p()).matmul(d);
    let mut j3 = Mat::zeros(c, c);
    let mut j4 = Mat::zeros(c, c);
    let mut j5 = Mat::zeros(c, c);
    let mut j6 = Mat::zeros(c, c);
    for i in 0..order {
        for j in 0..order {
            j3.set_block(i * n, j * n, &(&x[i][j] + &x[j][i].transpose()));
            let kk = &moments.k[i][j] - &moments.k[j][i].transpose();
            j4.set_block(i * n, j * n, &a1t.matmul(&kk).matmul(d));
            j5.set_block(i * n, j * n, &(&y[i][j] + &y[j][i].transpose()));
            j6.set_block(i * n, j * n, &dpd.scale(&-c_coef(h, i + j)));
        }
    }
    Ok(JBlocks {
        order,
        j0: u0.clone(),
        j1,
        j2,
        j3,
        j4,
        j5,
        j6,
    })
}

/// How the moment blocks were obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MomentSource {
    Recursion,
    /// Double-precision quadrature, used when `det(L) = 0`.
    Quadrature,
}

/// `P_N` together with its blocks and smallest eigenvalue.
#[derive(Clone, Debug)]
pub struct CriterionMatrix {
    pub order: usize,
    pub p: Mat,
    pub blocks: JBlocks,
    pub lambda_min: Real,
    pub lambda_max: Real,
    pub source: MomentSource,
}

impl CriterionMatrix {
    fn from_blocks(blocks: JBlocks, source: MomentSource) -> Self {
        let p = blocks.criterion();
        let (lambda_min, lambda_max) = sym_extreme_eigenvalues(&p);
        CriterionMatrix {
            order: blocks.order,
            p,
            blocks,
            lambda_min,
            lambda_max,
            source,
        }
    }

    /// Full-precision JSON dump of `P_N` and every block.
    pub fn dump(&self) -> BlockDump {
        let rows = |m: &Mat| m.to_decimal_rows();
        BlockDump {
            order: self.order,
            digits: digits(),
            source: self.source,
            lambda_min: self.lambda_min.to_decimal_string(),
            p: rows(&self.p),
            j0: rows(&self.blocks.j0),
            j1: rows(&self.blocks.j1),
            j2: rows(&self.blocks.j2),
            j3: rows(&self.blocks.j3),
            j4: rows(&self.blocks.j4),
            j5: rows(&self.blocks.j5),
            j6: rows(&self.blocks.j6),
        }
    }
}

/// Serializable form of a [`CriterionMatrix`] with decimal-string entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockDump {
    pub order: usize,
    pub digits: u32,
    pub source: MomentSource,
    pub lambda_min: String,
    pub p: Vec<Vec<String>>,
    pub j0: Vec<Vec<String>>,
    pub j1: Vec<Vec<String>>,
    pub j2: Vec<Vec<String>>,
    pub j3: Vec<Vec<String>>,
    pub j4: Vec<Vec<String>>,
    pub j5: Vec<Vec<String>>,
    pub j6: Vec<Vec<String>>,
}

/// Cache of the pipeline `U → moments → J` at a fixed precision.
///
/// Blocks are computed once at `max_order`; lower orders are leading
/// principal submatrices.
#[derive(Clone, Debug)]
pub struct CriterionBuilder {
    digits: u32,
    max_order: usize,
    dlm: DelayLyapunovMatrix,
    blocks: JBlocks,
    source: MomentSource,
}

impl CriterionBuilder {
    /// Solves for `U` and all moments up to `max_order` at the active precision.
    pub fn new(sys: &NeutralSystem, max_order: usize, exec: Exec) -> Result<Self> {
        let dlm = solve_delay_lyapunov(sys)?;
        Self::from_lyapunov(sys, dlm, max_order, exec)
    }

    pub fn from_lyapunov(
        sys: &NeutralSystem,
        dlm: DelayLyapunovMatrix,
        max_order: usize,
        exec: Exec,
    ) -> Result<Self> {
        let (blocks, source) = if dlm.propagator().is_invertible() {
            let m = MomentSet::compute(&dlm, max_order, exec)?;
            (
                assemble_j(sys, &dlm, &m, max_order)?,
                MomentSource::Recursion,
            )
        } else {
            (
                quadrature_j(sys, &dlm, max_order, 1e-12)?,
                MomentSource::Quadrature,
            )
        };
        Ok(CriterionBuilder {
            digits: digits(),
            max_order,
            dlm,
            blocks,
            source,
        })
    }

    pub fn digits(&self) -> u32 {
        self.digits
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn lyapunov(&self) -> &DelayLyapunovMatrix {
        &self.dlm
    }

    pub fn source(&self) -> MomentSource {
        self.source
    }

    /// `P_N` for `order ≤ max_order`, evaluated at the builder's precision.
    pub fn criterion(&self, order: usize) -> Result<CriterionMatrix> {
        if order > self.max_order {
            return Err(Error::InvalidArgument(format!(
                "order {order} exceeds cached maximum {}",
                self.max_order
            )));
        }
        Ok(crate::scalar::with_digits(self.digits, || {
            CriterionMatrix::from_blocks(self.blocks.leading(order), self.source)
        }))
    }
}

/// Runs the full pipeline for one order.
pub fn assemble_p(sys: &NeutralSystem, order: usize) -> Result<CriterionMatrix> {
    CriterionBuilder::new(sys, order, Exec::Sequential)?.criterion(order)
}

/// Double-precision evaluator of `U`, `U′`, `U″` from the propagator and `y0`.
struct UF64 {
    n: usize,
    l: na::DMatrix<f64>,
    l2: na::DMatrix<f64>,
    y0: na::DVector<f64>,
}

impl UF64 {
    fn new(dlm: &DelayLyapunovMatrix) -> Self {
        let l = dlm.propagator().matrix().to_dmatrix();
        let y0 = na::DVector::from_iterator(dlm.y0().len(), dlm.y0().iter().map(Real::to_f64));
        UF64 {
            n: dlm.n(),
            l2: &l * &l,
            l,
            y0,
        }
    }

    fn first(&self, v: &na::DVector<f64>) -> na::DMatrix<f64> {
        let n = self.n;
        na::DMatrix::from_column_slice(n, n, &v.as_slice()[..n * n])
    }

    /// `(U, U′, U″)` at `θ ∈ [−h, h]`, using one-sided values at `θ = 0`.
    fn eval(&self, theta: f64) -> [na::DMatrix<f64>; 3] {
        let s = theta.abs();
        let st = (&self.l * s).exp() * &self.y0;
        let u = self.first(&st);
        let du = self.first(&(&self.l * &st));
        let ddu = self.first(&(&self.l2 * &st));
        if theta < 0.0 {
            [u.transpose(), -du.transpose(), ddu.transpose()]
        } else {
            [u, du, ddu]
        }
    }
}

/// `J₀…J₆` by adaptive quadrature of their defining integrals.
///
/// Monomials are evaluated as `(θ/h)^k` and rescaled afterwards so that
/// every entry carries a comparable relative tolerance `tol`.
pub fn quadrature_j(
    sys: &NeutralSystem,
    dlm: &DelayLyapunovMatrix,
    order: usize,
    tol: f64,
) -> Result<JBlocks> {
    let f = sys.to_f64();
    let n = f.n();
    let h = f.h;
    let c = n * order;
    let u = UF64::new(dlm);
    let (a1, d) = (&f.a1, &f.d);
    let (a1t, dt) = (a1.transpose(), d.transpose());
    let opts = QuadOptions {
        abs_tol: 1e-300,
        rel_tol: tol,
        max_intervals: 2000,
    };
    let inner_opts = QuadOptions {
        rel_tol: tol * 1e-2,
        ..opts
    };
    let pw = |x: f64, k: usize| x.powi(k as i32);

    // Single integrals: J₁, J₂ (n × nN) and J₆ scaled.
    let u0p = u.eval(0.0)[1].clone();
    let p = &u0p + u0p.transpose();
    let dpd = &dt * &p * d;
    let single = integrate(
        |th| {
            let [uv, du, _] = u.eval(h + th);
            let b1 = uv.transpose() * a1;
            let b2 = du.transpose() * d;
            let t = th / h;
            let mut out = Vec::with_capacity(2 * n * c + order * order);
            for k in 0..order {
                let m = pw(t, k);
                out.extend((&b1 * m).iter());
                out.extend((&b2 * m).iter());
            }
            for k in 0..2 * order {
                out.push(pw(t, k));
            }
            out
        },
        -h,
        0.0,
        opts,
    )?;
    // Double integrals: J₃, J₄, J₅ with the kink of U′, U″ at θ₁ = θ₂.
    let per = n * n;
    let double = integrate(
        |t1| {
            let inner = |t2: f64| {
                let [uv, du, ddu] = u.eval(t1 - t2);
                let m3 = &a1t * uv * a1;
                let m4 = &a1t * du * d;
                let m5 = &dt * ddu * d;
                let (x1, x2) = (t1 / h, t2 / h);
                let mut out = Vec::with_capacity(3 * per * order * order);
                for i in 0..order {
                    for j in 0..order {
                        let w = pw(x1, i) * pw(x2, j);
                        out.extend((&m3 * w).iter());
                        out.extend((&m4 * w).iter());
                        out.extend((&m5 * w).iter());
                    }
                }
                out
            };
            let lo = integrate(inner, -h, t1, inner_opts);
            let hi = integrate(inner, t1, 0.0, inner_opts);
            match (lo, hi) {
                (Ok(a), Ok(b)) => a.value.iter().zip(&b.value).map(|(x, y)| x + y).collect(),
                _ => vec![f64::NAN; 3 * per * order * order],
            }
        },
        -h,
        0.0,
        opts,
    )?;
    if double.value.iter().any(|x| !x.is_finite()) {
        return Err(Error::Quadrature {
            requested: tol,
            achieved: f64::INFINITY,
        });
    }

    let to_real = |x: f64, scale: f64| Real::from_f64(x) * Real::from_f64(scale);
    let mut j1 = Mat::zeros(n, c);
    let mut j2 = Mat::zeros(n, c);
    let mut j6 = Mat::zeros(c, c);
    let stride = 2 * per;
    for k in 0..order {
        let base = k * stride;
        let sc = pw(h, k);
        for col in 0..n {
            for row in 0..n {
                let idx = col * n + row;
                j1[(row, k * n + col)] = to_real(single.value[base + idx], sc);
                j2[(row, k * n + col)] = to_real(single.value[base + per + idx], sc);
            }
        }
    }
    let mono = &single.value[order * stride..];
    for i in 0..order {
        for j in 0..order {
            let sc = pw(h, i + j);
            for r in 0..n {
                for s in 0..n {
                    j6[(i * n + r, j * n + s)] = to_real(mono[i + j] * dpd[(r, s)], sc);
                }
            }
        }
    }
    let mut j3 = Mat::zeros(c, c);
    let mut j4 = Mat::zeros(c, c);
    let mut j5 = Mat::zeros(c, c);
    for i in 0..order {
        for j in 0..order {
            let base = (i * order + j) * 3 * per;
            let sc = pw(h, i + j);
            for col in 0..n {
                for row in 0..n {
                    let idx = col * n + row;
                    let (r, s) = (i * n + row, j * n + col);
                    j3[(r, s)] = to_real(double.value[base + idx], sc);
                    j4[(r, s)] = to_real(double.value[base + per + idx], sc);
                    j5[(r, s)] = to_real(double.value[base + 2 * per + idx], sc);
                }
            }
        }
    }
    let j0 = Mat::from_dmatrix(&u.eval(0.0)[0]);
    Ok(JBlocks {
        order,
        j0,
        j1,
        j2,
        j3,
        j4,
        j5,
        j6,
    })
}
