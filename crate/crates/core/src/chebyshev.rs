// Copyright 2026 nstab Contributors
// SPDX-License-Identifier: Apache-2.0

//! Shifted Chebyshev basis `p_k(θ) = T_k(2θ/h + 1)` on `[−h, 0]`, projection
//! of functions onto it, the link to the monomial basis and the
//! approximation-error bound.

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::scalar::{ln_factorial, Real};

/// The first `order` shifted Chebyshev polynomials on `[−h, 0]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChebyshevBasis {
    h: Real,
    order: usize,
}

/// Chebyshev and monomial coefficients of a projection, stacked by degree.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionCoefficients {
    pub order: usize,
    /// Dimension of the projected function.
    pub dim: usize,
    /// `Q = [Q₀; …; Q_{N−1}]` with `φ_N = Σ p_k Q_k`.
    pub q: Vec<Real>,
    /// `Φ = [Φ₀; …; Φ_{N−1}]` with `φ_N = Σ θ^k Φ_k`.
    pub phi: Vec<Real>,
}

/// Gram matrices of the basis under the Chebyshev weight.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrices {
    /// `D_N = ∫ p pᵀ w`, diagonal up to rounding.
    pub d: Mat,
    /// `S_N = ∫ Θ Θᵀ w` with `Θ = [1, θ, …, θ^{N−1}]ᵀ`.
    pub s: Mat,
    /// `T_N = ∫ p Θᵀ w`, upper triangular.
    pub t: Mat,
}

impl ChebyshevBasis {
    pub fn new(h: Real, order: usize) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::InvalidArgument("h must be positive".into()));
        }
        Ok(ChebyshevBasis { h, order })
    }

    pub fn h(&self) -> &Real {
        &self.h
    }

    pub fn order(&self) -> usize {
        self.order
    }

    fn shifted(&self, theta: &Real) -> Real {
        Real::from_i64(2) * theta / &self.h + 1.0
    }

    /// `p₀(θ), …, p_{N−1}(θ)` by the three-term recurrence.
    pub fn eval(&self, theta: &Real) -> Result<Vec<Real>> {
        if *theta > 0.0 || (theta + &self.h).is_sign_negative() {
            return Err(Error::Domain {
                value: theta.to_f64(),
                domain: format!("[-h, 0] with h = {}", self.h.to_f64()),
            });
        }
        Ok(self.eval_unchecked(theta))
    }

    fn eval_unchecked(&self, theta: &Real) -> Vec<Real> {
        let x = self.shifted(theta);
        let mut out = Vec::with_capacity(self.order);
        for k in 0..self.order {
            let v = match k {
                0 => Real::one(),
                1 => x.clone(),
                _ => Real::from_i64(2) * &x * &out[k - 1] - &out[k - 2],
            };
            out.push(v);
        }
        out
    }

    /// Coefficients `C` with `p_k(θ) = Σ_j C[k][j] θ^j` (lower triangular).
    pub fn monomial_coefficients(&self) -> Mat {
        let n = self.order;
        let mut c = Mat::zeros(n, n);
        if n == 0 {
            return c;
        }
        // x = a θ + 1 with a = 2/h.
        let a = Real::from_i64(2) / &self.h;
        c[(0, 0)] = Real::one();
        if n > 1 {
            c[(1, 0)] = Real::one();
            c[(1, 1)] = a.clone();
        }
        for k in 2..n {
            for j in 0..=k {
                let mut v = -&c[(k - 2, j)];
                if j < k {
                    v += Real::from_i64(2) * &c[(k - 1, j)];
                }
                if j > 0 {
                    v += Real::from_i64(2) * &a * &c[(k - 1, j - 1)];
                }
                c[(k, j)] = v;
            }
        }
        c
    }

    /// Chebyshev–Gauss nodes on `[−h, 0]` and the common weight
    /// `(h/2)(π/M)` absorbing `w(θ)`.
    pub fn gauss_nodes(&self, m: usize) -> (Vec<Real>, Real) {
        let pi = Real::pi();
        let half_h = &self.h / Real::from_i64(2);
        let nodes = (1..=m)
            .map(|k| {
                let x =
                    (&pi * Real::from_i64(2 * k as i64 - 1) / Real::from_i64(2 * m as i64)).cos();
                &half_h * (x - 1.0)
            })
            .collect();
        (nodes, &half_h * &pi / Real::from_i64(m as i64))
    }

    /// Gram matrices by Chebyshev–Gauss quadrature with `4N` nodes.
    pub fn gram_matrices(&self) -> GramMatrices {
        let n = self.order;
        let (nodes, w) = self.gauss_nodes(4 * n.max(1));
        let mut d = Mat::zeros(n, n);
        let mut s = Mat::zeros(n, n);
        let mut t = Mat::zeros(n, n);
        for th in &nodes {
            let p = self.eval_unchecked(th);
            let mono: Vec<Real> = (0..n).map(|k| th.powi(k as i32)).collect();
            for i in 0..n {
                for j in 0..n {
                    d[(i, j)] += &w * &p[i] * &p[j];
                    s[(i, j)] += &w * &mono[i] * &mono[j];
                    t[(i, j)] += &w * &p[i] * &mono[j];
                }
            }
        }
        // T is upper triangular by orthogonality; drop the quadrature noise.
        for i in 0..n {
            for j in 0..i {
                t[(i, j)] = Real::zero();
            }
        }
        GramMatrices { d, s, t }
    }

    /// Exact diagonal `d₀ = πh/2`, `d_k = πh/4`.
    pub fn norms(&self) -> Vec<Real> {
        let base = Real::pi() * &self.h;
        (0..self.order)
            .map(|k| if k == 0 { &base / 2.0 } else { &base / 4.0 })
            .collect()
    }

    /// Orthogonal projection of `φ: [−h, 0] → ℝⁿ`.
    ///
    /// `Q` comes from Chebyshev–Gauss quadrature with `4N` nodes and `Φ` from
    /// the triangular system `T_N Φ = D_N Q`.
    pub fn project(&self, f: impl Fn(&Real) -> Vec<Real>) -> Result<ProjectionCoefficients> {
        let n = self.order;
        if n == 0 {
            return Err(Error::InvalidArgument(
                "projection order must be at least 1".into(),
            ));
        }
        let (nodes, w) = self.gauss_nodes(4 * n);
        let norms = self.norms();
        let mut dim = None;
        let mut acc: Vec<Real> = Vec::new();
        for th in &nodes {
            let v = f(th);
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Quadrature {
                    requested: 0.0,
                    achieved: f64::INFINITY,
                });
            }
            let nd = *dim.get_or_insert(v.len());
            if v.len() != nd {
                return Err(Error::Dimension(
                    "projected function changed dimension".into(),
                ));
            }
            if acc.is_empty() {
                acc = vec![Real::zero(); n * nd];
            }
            let p = self.eval_unchecked(th);
            for k in 0..n {
                let pk = &w * &p[k];
                for (c, x) in v.iter().enumerate() {
                    acc[k * nd + c] += &pk * x;
                }
            }
        }
        let nd = dim.unwrap_or(0);
        let q: Vec<Real> = acc
            .iter()
            .enumerate()
            .map(|(idx, x)| x / &norms[idx / nd.max(1)])
            .collect();
        let t = self.gram_matrices().t;
        // Back substitution on T Φ = D Q, componentwise.
        let mut phi = vec![Real::zero(); n * nd];
        for c in 0..nd {
            for i in (0..n).rev() {
                let mut v = &norms[i] * &q[i * nd + c];
                for j in i + 1..n {
                    v -= &t[(i, j)] * &phi[j * nd + c];
                }
                phi[i * nd + c] = v / &t[(i, i)];
            }
        }
        Ok(ProjectionCoefficients {
            order: n,
            dim: nd,
            q,
            phi,
        })
    }
}

impl ProjectionCoefficients {
    /// `Σ p_k(θ) Q_k`.
    pub fn eval_chebyshev(&self, basis: &ChebyshevBasis, theta: &Real) -> Vec<Real> {
        let p = basis.eval_unchecked(theta);
        (0..self.dim)
            .map(|c| Real::dot((0..self.order).map(|k| (&p[k], &self.q[k * self.dim + c]))))
            .collect()
    }

    /// `Σ θ^k Φ_k` by Horner's rule.
    pub fn eval_monomial(&self, theta: &Real) -> Vec<Real> {
        (0..self.dim)
            .map(|c| {
                let mut v = Real::zero();
                for k in (0..self.order).rev() {
                    v = v * theta + &self.phi[k * self.dim + c];
                }
                v
            })
            .collect()
    }
}

/// `4(hr/2)^N / N!`, evaluated in log space.
pub fn error_bound(order: usize, h: f64, r: f64) -> f64 {
    let mu = h * r / 2.0;
    if order == 0 {
        return 4.0;
    }
    if mu == 0.0 {
        return 0.0;
    }
    (4f64.ln() + order as f64 * mu.ln() - ln_factorial(order)).exp()
}
