// Copyright 2026 nstab Contributors
// SPDX-License-Identifier: Apache-2.0

//! Dense linear algebra over [`Real`].
//!
//! Sizes in this crate are small (2n² for the propagator, n(N+1) for the
//! criterion matrix) so everything is plain row-major storage with
//! straightforward O(n³) kernels. Every kernel runs at the precision active
//! on the calling thread.

use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use nalgebra as na;

use crate::error::{Error, Result};
use crate::scalar::{bits, ln_factorial, Real};

/// Row-major dense matrix of [`Real`].
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<Real>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![Real::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Mat::from_fn(n, n, |i, j| if i == j { Real::one() } else { Real::zero() })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Real) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    /// Builds from row-major `f64` values.
    ///
    /// # Panics
    ///
    /// Panics if `values.len() != rows * cols`.
    pub fn from_f64(rows: usize, cols: usize, values: &[f64]) -> Self {
        assert_eq!(
            values.len(),
            rows * cols,
            "value count does not match shape"
        );
        Mat::from_fn(rows, cols, |i, j| Real::from_f64(values[i * cols + j]))
    }

    /// Builds from nested rows; every row must have the same length.
    pub fn from_rows_f64(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Ok(Mat::from_fn(r, c, |i, j| Real::from_f64(rows[i][j])))
    }

    pub fn from_dmatrix(m: &na::DMatrix<f64>) -> Self {
        Mat::from_fn(m.nrows(), m.ncols(), |i, j| Real::from_f64(m[(i, j)]))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[Real] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[Real] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Copy re-rounded to the active precision.
    pub fn rounded(&self) -> Self {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(Real::rounded).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)].clone())
    }

    pub fn scale(&self, s: &Real) -> Self {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn scale_f64(&self, s: f64) -> Self {
        self.scale(&Real::from_f64(s))
    }

    fn zip_with(&self, other: &Mat, f: impl Fn(&Real, &Real) -> Real) -> Mat {
        assert_eq!(self.shape(), other.shape(), "shape mismatch");
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(a, b))
                .collect(),
        }
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let k = self.cols;
        Mat::from_fn(self.rows, other.cols, |i, j| {
            Real::dot(
                self.row(i)
                    .iter()
                    .zip((0..k).map(|t| &other.data[t * other.cols + j])),
            )
        })
    }

    pub fn matvec(&self, v: &[Real]) -> Vec<Real> {
        assert_eq!(self.cols, v.len(), "vector length differs");
        (0..self.rows)
            .map(|i| Real::dot(self.row(i).iter().zip(v)))
            .collect()
    }

    /// Copy of the `nr × nc` block starting at `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Mat {
        Mat::from_fn(nr, nc, |i, j| self[(r0 + i, c0 + j)].clone())
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &Mat) {
        for i in 0..b.rows {
            for j in 0..b.cols {
                self[(r0 + i, c0 + j)] = b[(i, j)].clone();
            }
        }
    }

    /// Leading principal `k × k` submatrix.
    pub fn leading(&self, k: usize) -> Mat {
        self.block(0, 0, k, k)
    }

    /// Standard Kronecker product.
    pub fn kron(a: &Mat, b: &Mat) -> Mat {
        Mat::from_fn(a.rows * b.rows, a.cols * b.cols, |i, j| {
            &a[(i / b.rows, j / b.cols)] * &b[(i % b.rows, j % b.cols)]
        })
    }

    /// Kronecker product in the convention `vec(AXB) = (A ⊗ B) vec(X)`.
    ///
    /// With column-major `vec`, this is the standard product of `Bᵀ` and `A`.
    pub fn kron_vec(a: &Mat, b: &Mat) -> Mat {
        Mat::kron(&b.transpose(), a)
    }

    /// Column-major vectorization.
    pub fn vec(&self) -> Vec<Real> {
        let mut out = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                out.push(self[(i, j)].clone());
            }
        }
        out
    }

    /// Inverse of [`Mat::vec`].
    pub fn unvec(rows: usize, cols: usize, v: &[Real]) -> Mat {
        assert_eq!(v.len(), rows * cols, "vector length does not match shape");
        Mat::from_fn(rows, cols, |i, j| v[j * rows + i].clone())
    }

    pub fn norm_fro(&self) -> Real {
        Real::dot(self.data.iter().zip(&self.data)).sqrt()
    }

    pub fn max_abs(&self) -> Real {
        self.data
            .iter()
            .map(Real::abs)
            .fold(Real::zero(), Real::max)
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> Real {
        (0..self.rows)
            .map(|i| Real::sum(self.row(i).iter().map(Real::abs).collect::<Vec<_>>().iter()))
            .fold(Real::zero(), Real::max)
    }

    /// Spectral norm as the square root of the largest eigenvalue of `AᵀA`.
    pub fn spectral_norm(&self) -> Real {
        if self.data.iter().all(Real::is_zero) {
            return Real::zero();
        }
        let g = self.transpose().matmul(self);
        let (_, max) = sym_extreme_eigenvalues(&g);
        max.max(Real::zero()).sqrt()
    }

    /// `(A + Aᵀ)/2`.
    pub fn symmetric_part(&self) -> Mat {
        let half = Real::from_f64(0.5);
        self.zip_with(&self.transpose(), |a, b| (a + b) * &half)
    }

    /// Exact symmetry test.
    pub fn is_symmetric(&self) -> bool {
        self.is_square() && (0..self.rows).all(|i| (0..i).all(|j| self[(i, j)] == self[(j, i)]))
    }

    pub fn trace(&self) -> Real {
        Real::sum((0..self.rows.min(self.cols)).map(|i| &self[(i, i)]))
    }

    pub fn to_f64_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(Real::to_f64).collect())
            .collect()
    }

    pub fn to_dmatrix(&self) -> na::DMatrix<f64> {
        na::DMatrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)].to_f64())
    }

    /// Row-major decimal strings.
    pub fn to_decimal_rows(&self) -> Vec<Vec<String>> {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(Real::to_decimal_string).collect())
            .collect()
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = Real;
    fn index(&self, (i, j): (usize, usize)) -> &Real {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Real {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Add<&Mat> for &Mat {
    type Output = Mat;
    fn add(self, rhs: &Mat) -> Mat {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub<&Mat> for &Mat {
    type Output = Mat;
    fn sub(self, rhs: &Mat) -> Mat {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Mul<&Mat> for &Mat {
    type Output = Mat;
    fn mul(self, rhs: &Mat) -> Mat {
        self.matmul(rhs)
    }
}

impl Neg for &Mat {
    type Output = Mat;
    fn neg(self) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| -x).collect(),
        }
    }
}

/// Elementwise `a + b`.
pub fn vadd(a: &[Real], b: &[Real]) -> Vec<Real> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Elementwise `a - b`.
pub fn vsub(a: &[Real], b: &[Real]) -> Vec<Real> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn vscale(a: &[Real], s: &Real) -> Vec<Real> {
    a.iter().map(|x| x * s).collect()
}

pub fn vnorm(a: &[Real]) -> Real {
    Real::dot(a.iter().zip(a)).sqrt()
}

/// LU factorization with partial pivoting, `PA = LU`.
#[derive(Clone, Debug)]
pub struct Lu {
    lu: Mat,
    perm: Vec<usize>,
    sign_negative: bool,
}

impl Lu {
    /// Factors a square matrix; fails only on an exactly zero pivot.
    pub fn new(a: &Mat) -> Result<Lu> {
        if !a.is_square() {
            return Err(Error::Dimension(format!(
                "LU needs a square matrix, got {}×{}",
                a.rows, a.cols
            )));
        }
        let n = a.rows;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign_negative = false;
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| lu[(i, k)].abs().total_cmp(&lu[(j, k)].abs()))
                .expect("nonempty range");
            if lu[(p, k)].is_zero() {
                return Err(Error::Singular(format!("zero pivot in column {k}")));
            }
            if p != k {
                for j in 0..n {
                    lu.data.swap(p * n + j, k * n + j);
                }
                perm.swap(p, k);
                sign_negative = !sign_negative;
            }
            let pivot = lu[(k, k)].clone();
            for i in k + 1..n {
                let f = &lu[(i, k)] / &pivot;
                for j in k + 1..n {
                    let t = &f * &lu[(k, j)];
                    lu[(i, j)] -= t;
                }
                lu[(i, k)] = f;
            }
        }
        Ok(Lu {
            lu,
            perm,
            sign_negative,
        })
    }

    pub fn dim(&self) -> usize {
        self.lu.rows
    }

    pub fn solve(&self, b: &[Real]) -> Vec<Real> {
        let n = self.dim();
        assert_eq!(b.len(), n, "right-hand side length differs");
        let mut x: Vec<Real> = self.perm.iter().map(|&p| b[p].clone()).collect();
        for i in 0..n {
            let s = Real::dot(self.lu.row(i)[..i].iter().zip(&x[..i]));
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s = Real::dot(self.lu.row(i)[i + 1..].iter().zip(&x[i + 1..]));
            x[i] = (&x[i] - s) / &self.lu[(i, i)];
        }
        x
    }

    pub fn solve_mat(&self, b: &Mat) -> Mat {
        let cols: Vec<Vec<Real>> = (0..b.cols)
            .map(|j| self.solve(&(0..b.rows).map(|i| b[(i, j)].clone()).collect::<Vec<_>>()))
            .collect();
        Mat::from_fn(b.rows, b.cols, |i, j| cols[j][i].clone())
    }

    pub fn inverse(&self) -> Mat {
        self.solve_mat(&Mat::identity(self.dim()))
    }

    pub fn det(&self) -> Real {
        let mut d = Real::one();
        for i in 0..self.dim() {
            d *= &self.lu[(i, i)];
        }
        if self.sign_negative {
            -d
        } else {
            d
        }
    }

    /// Ratio of the smallest to the largest pivot magnitude, a cheap
    /// reciprocal-condition indicator.
    pub fn pivot_ratio(&self) -> f64 {
        let mags: Vec<f64> = (0..self.dim())
            .map(|i| self.lu[(i, i)].abs().to_f64())
            .collect();
        let max = mags.iter().cloned().fold(0.0, f64::max);
        let min = mags.iter().cloned().fold(f64::INFINITY, f64::min);
        if max == 0.0 {
            0.0
        } else {
            min / max
        }
    }
}

/// Result of a rank-revealing least-squares solve.
#[derive(Clone, Debug)]
pub struct LstsqSolution {
    pub x: Vec<Real>,
    pub rank: usize,
    /// `|R₀₀| / |R_kk|` for the last retained column.
    pub condition: f64,
    /// Euclidean norm of `Ax − b`.
    pub residual: Real,
}

/// Minimizes `‖Ax − b‖` by Householder QR with column pivoting.
///
/// Columns whose diagonal of `R` falls below `m·u·10³·|R₀₀|` are treated as
/// dependent and their unknowns set to zero; the returned rank reports how
/// many were kept.
pub fn lstsq(a: &Mat, b: &[Real]) -> Result<LstsqSolution> {
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(Error::Dimension(format!(
            "least squares: {m} rows but right-hand side of length {}",
            b.len()
        )));
    }
    if m < n {
        return Err(Error::Dimension(format!(
            "least squares needs rows ≥ columns, got {m}×{n}"
        )));
    }
    let mut r = a.clone();
    let mut rhs = b.to_vec();
    let mut cols: Vec<usize> = (0..n).collect();
    let mut diag = Vec::with_capacity(n);
    for k in 0..n {
        let col_norm2 = |r: &Mat, j: usize| {
            Real::sum(
                (k..m)
                    .map(|i| r[(i, j)].square())
                    .collect::<Vec<_>>()
                    .iter(),
            )
        };
        let p = (k..n)
            .max_by(|&i, &j| col_norm2(&r, i).total_cmp(&col_norm2(&r, j)))
            .expect("nonempty range");
        if p != k {
            for i in 0..m {
                r.data.swap(i * n + p, i * n + k);
            }
            cols.swap(p, k);
        }
        let norm = col_norm2(&r, k).sqrt();
        if norm.is_zero() {
            diag.push(Real::zero());
            continue;
        }
        let alpha = if r[(k, k)].is_sign_negative() {
            norm
        } else {
            -norm
        };
        let mut v: Vec<Real> = (k..m).map(|i| r[(i, k)].clone()).collect();
        v[0] -= &alpha;
        let beta = Real::dot(v.iter().zip(&v));
        if !beta.is_zero() {
            let two_over = Real::from_f64(2.0) / &beta;
            for j in k..n {
                let s = Real::dot(v.iter().zip((k..m).map(|i| &r.data[i * n + j]))) * &two_over;
                for (t, vi) in v.iter().enumerate() {
                    let upd = vi * &s;
                    r[(k + t, j)] -= upd;
                }
            }
            let s = Real::dot(v.iter().zip(&rhs[k..])) * &two_over;
            for (t, vi) in v.iter().enumerate() {
                let upd = vi * &s;
                rhs[k + t] -= upd;
            }
        }
        diag.push(r[(k, k)].abs());
    }
    let u = 2f64.powi(-(bits() as i32));
    let r00 = diag.first().cloned().unwrap_or_else(Real::zero);
    let tol = &r00 * (m as f64 * u * 1e3);
    let rank = diag
        .iter()
        .take_while(|d| **d > tol && !d.is_zero())
        .count();
    let mut y = vec![Real::zero(); n];
    for i in (0..rank).rev() {
        let s = Real::dot(r.row(i)[i + 1..rank].iter().zip(&y[i + 1..rank]));
        y[i] = (&rhs[i] - s) / &r[(i, i)];
    }
    let mut x = vec![Real::zero(); n];
    for (k, &c) in cols.iter().enumerate() {
        x[c] = y[k].clone();
    }
    let residual = vnorm(&vsub(&a.matvec(&x), b));
    let condition = if rank == 0 {
        f64::INFINITY
    } else {
        (&r00 / &diag[rank - 1]).to_f64()
    };
    Ok(LstsqSolution {
        x,
        rank,
        condition,
        residual,
    })
}

/// Matrix exponential by scaling and squaring with a diagonal Padé
/// approximant whose degree is chosen for the active precision.
pub fn expm(a: &Mat) -> Mat {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.rows;
    let norm = a.norm_inf().to_f64();
    if norm == 0.0 {
        return Mat::identity(n);
    }
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a.scale(&Real::from_f64(2f64.powi(-s)));
    let target = -(f64::from(bits()) + 8.0) * std::f64::consts::LN_2;
    let mut q = 2usize;
    loop {
        let ln_err = 2.0 * ln_factorial(q) - ln_factorial(2 * q) - ln_factorial(2 * q + 1)
            + (2 * q + 1) as f64 * 0.5f64.ln();
        if ln_err < target || q >= 200 {
            break;
        }
        q += 1;
    }
    let mut num = Mat::identity(n);
    let mut den = Mat::identity(n);
    let mut power = Mat::identity(n);
    let mut c = Real::one();
    for k in 1..=q {
        c *= Real::ratio((q - k + 1) as i64, (k * (2 * q - k + 1)) as i64);
        power = power.matmul(&scaled);
        let term = power.scale(&c);
        num = &num + &term;
        den = if k % 2 == 1 {
            &den - &term
        } else {
            &den + &term
        };
    }
    let mut result = Lu::new(&den)
        .expect("Padé denominator is nonsingular for a scaled argument")
        .solve_mat(&num);
    for _ in 0..s {
        result = result.matmul(&result);
    }
    result
}

/// Householder reduction of a symmetric matrix to tridiagonal form.
///
/// Returns the diagonal and the subdiagonal.
pub fn tridiagonalize(a: &Mat) -> (Vec<Real>, Vec<Real>) {
    assert!(a.is_square(), "tridiagonalize needs a square matrix");
    let n = a.rows;
    let mut t = a.symmetric_part();
    for k in 0..n.saturating_sub(2) {
        let m = k + 1;
        let norm = vnorm(&(m..n).map(|i| t[(i, k)].clone()).collect::<Vec<_>>());
        if norm.is_zero() {
            continue;
        }
        let alpha = if t[(m, k)].is_sign_negative() {
            norm
        } else {
            -norm
        };
        let mut v: Vec<Real> = (m..n).map(|i| t[(i, k)].clone()).collect();
        v[0] -= &alpha;
        let vtv = Real::dot(v.iter().zip(&v));
        if vtv.is_zero() {
            continue;
        }
        let beta = Real::from_f64(2.0) / &vtv;
        let p: Vec<Real> = (m..n)
            .map(|i| Real::dot(t.row(i)[m..].iter().zip(&v)) * &beta)
            .collect();
        let kk = Real::dot(v.iter().zip(&p)) * &beta * 0.5;
        let q: Vec<Real> = p.iter().zip(&v).map(|(pi, vi)| pi - &(&kk * vi)).collect();
        for i in 0..v.len() {
            for j in 0..v.len() {
                let upd = &v[i] * &q[j] + &q[i] * &v[j];
                t[(m + i, m + j)] -= upd;
            }
        }
        t[(m, k)] = alpha.clone();
        t[(k, m)] = alpha;
        for i in m + 1..n {
            t[(i, k)] = Real::zero();
            t[(k, i)] = Real::zero();
        }
    }
    let diag = (0..n).map(|i| t[(i, i)].clone()).collect();
    let off = (1..n).map(|i| t[(i, i - 1)].clone()).collect();
    (diag, off)
}

/// Number of eigenvalues of the tridiagonal matrix strictly below `x`.
fn sturm_count(diag: &[Real], off2: &[Real], x: &Real, pivmin: &Real) -> usize {
    let mut count = 0;
    let mut q = &diag[0] - x;
    for i in 0..diag.len() {
        if i > 0 {
            q = &diag[i] - x - &off2[i - 1] / &q;
        }
        if q.abs() < *pivmin {
            q = -pivmin.clone();
        }
        if q.is_sign_negative() {
            count += 1;
        }
    }
    count
}

/// Eigenvalue bracketer for a symmetric matrix via Sturm bisection.
#[derive(Clone, Debug)]
pub struct SymSpectrum {
    diag: Vec<Real>,
    off2: Vec<Real>,
    lo: Real,
    hi: Real,
    pivmin: Real,
}

impl SymSpectrum {
    pub fn new(a: &Mat) -> Self {
        let (diag, off) = tridiagonalize(a);
        let n = diag.len();
        let off_abs: Vec<Real> = off.iter().map(Real::abs).collect();
        let radius = |i: usize| {
            let mut r = Real::zero();
            if i > 0 {
                r += &off_abs[i - 1];
            }
            if i + 1 < n {
                r += &off_abs[i];
            }
            r
        };
        let mut lo = Real::zero();
        let mut hi = Real::zero();
        for (i, d) in diag.iter().enumerate() {
            let r = radius(i);
            let l = d - &r;
            let h = d + &r;
            if i == 0 || l < lo {
                lo = l;
            }
            if i == 0 || h > hi {
                hi = h;
            }
        }
        let span = lo
            .abs()
            .max(hi.abs())
            .max(Real::from_f64(f64::MIN_POSITIVE));
        let pivmin = &span * 2f64.powi(-2 * bits() as i32);
        let widen = &span * 2f64.powi(4 - bits() as i32);
        SymSpectrum {
            off2: off.iter().map(Real::square).collect(),
            diag,
            lo: lo - &widen,
            hi: hi + widen,
            pivmin,
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Eigenvalues strictly below `x`.
    pub fn count_below(&self, x: &Real) -> usize {
        sturm_count(&self.diag, &self.off2, x, &self.pivmin)
    }

    /// `k`-th smallest eigenvalue, zero-based.
    pub fn eigenvalue(&self, k: usize) -> Real {
        assert!(k < self.dim(), "eigenvalue index out of range");
        let mut lo = self.lo.clone();
        let mut hi = self.hi.clone();
        let eps = 2f64.powi(2 - bits() as i32);
        for _ in 0..(bits() as usize + 2200) {
            let mid = (&lo + &hi) * 0.5;
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(&mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
            let width = &hi - &lo;
            let scale = lo.abs().max(hi.abs());
            if width <= &scale * eps + &self.pivmin {
                break;
            }
        }
        (lo + hi) * 0.5
    }
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn sym_extreme_eigenvalues(a: &Mat) -> (Real, Real) {
    let spec = SymSpectrum::new(a);
    let n = spec.dim();
    (spec.eigenvalue(0), spec.eigenvalue(n - 1))
}

/// Outcome of a pivoted Cholesky factorization with a pivot threshold.
#[derive(Clone, Debug)]
pub struct PivotedCholesky {
    pub psd: bool,
    /// Number of pivots accepted as positive.
    pub rank: usize,
    /// 1-based step at which the factorization failed.
    pub failing_step: Option<usize>,
    /// Original (0-based) row index of the failing pivot.
    pub failing_index: Option<usize>,
    /// Value of the failing pivot (or the indefinite 2×2 quotient).
    pub failing_value: Option<Real>,
    /// Vector `x` with `xᵀAx` equal to the failing value.
    pub witness: Option<Vec<Real>>,
}

/// Pivoted (diagonal-pivoting) Cholesky with acceptance threshold `thresh`.
///
/// A pivot below `-thresh` proves the matrix is not PSD. Once all remaining
/// diagonal entries lie in `[-thresh, thresh]` the trailing Schur complement
/// is checked for an indefinite 2×2 principal minor before declaring PSD.
pub fn pivoted_cholesky(a: &Mat, thresh: &Real) -> PivotedCholesky {
    assert!(a.is_square(), "Cholesky needs a square matrix");
    let n = a.rows;
    let mut s = a.clone();
    let mut l = Mat::zeros(n, n);
    let mut perm: Vec<usize> = (0..n).collect();
    let neg_thresh = -thresh;

    let build_witness = |l: &Mat, perm: &[usize], k: usize, e: &[Real]| -> Vec<Real> {
        // x = [−L11⁻ᵀ L21ᵀ e; e] in pivoted coordinates.
        let mut z: Vec<Real> = (0..k)
            .map(|c| Real::dot((k..n).map(|r| &l[(r, c)]).zip(e)))
            .collect();
        for i in (0..k).rev() {
            let s = Real::dot((i + 1..k).map(|r| &l[(r, i)]).zip(&z[i + 1..k]));
            z[i] = -((&z[i] + s) / &l[(i, i)]);
        }
        let mut x = vec![Real::zero(); n];
        for t in 0..k {
            x[perm[t]] = z[t].clone();
        }
        for t in k..n {
            x[perm[t]] = e[t - k].clone();
        }
        x
    };

    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| s[(i, i)].total_cmp(&s[(j, j)]))
            .expect("nonempty range");
        let d = s[(p, p)].clone();
        if d < neg_thresh {
            let mut e = vec![Real::zero(); n - k];
            e[p - k] = Real::one();
            let x = build_witness(&l, &perm, k, &e);
            return PivotedCholesky {
                psd: false,
                rank: k,
                failing_step: Some(k + 1),
                failing_index: Some(perm[p]),
                failing_value: Some(d),
                witness: Some(x),
            };
        }
        if d <= *thresh {
            // Remaining diagonal is negligible; look for an indefinite 2×2 minor.
            let mut worst: Option<(usize, usize, Real)> = None;
            for i in k..n {
                for j in k..i {
                    let q = &s[(i, i)] + &s[(j, j)] - s[(i, j)].abs() * 2.0;
                    if worst.as_ref().is_none_or(|w| q < w.2) {
                        worst = Some((i, j, q));
                    }
                }
            }
            if let Some((i, j, q)) = worst {
                if q < neg_thresh {
                    let mut e = vec![Real::zero(); n - k];
                    e[i - k] = Real::one();
                    e[j - k] = if s[(i, j)].is_sign_negative() {
                        Real::one()
                    } else {
                        -Real::one()
                    };
                    let x = build_witness(&l, &perm, k, &e);
                    return PivotedCholesky {
                        psd: false,
                        rank: k,
                        failing_step: Some(k + 1),
                        failing_index: Some(perm[i]),
                        failing_value: Some(q),
                        witness: Some(x),
                    };
                }
            }
            return PivotedCholesky {
                psd: true,
                rank: k,
                failing_step: None,
                failing_index: None,
                failing_value: None,
                witness: None,
            };
        }
        if p != k {
            for j in 0..n {
                s.data.swap(p * n + j, k * n + j);
            }
            for i in 0..n {
                s.data.swap(i * n + p, i * n + k);
            }
            for j in 0..k {
                l.data.swap(p * n + j, k * n + j);
            }
            perm.swap(p, k);
        }
        let lkk = d.sqrt();
        for i in k + 1..n {
            l[(i, k)] = &s[(i, k)] / &lkk;
        }
        l[(k, k)] = lkk;
        for i in k + 1..n {
            for j in k + 1..=i {
                let upd = &l[(i, k)] * &l[(j, k)];
                s[(i, j)] -= upd;
                if i != j {
                    s[(j, i)] = s[(i, j)].clone();
                }
            }
        }
    }
    PivotedCholesky {
        psd: true,
        rank: n,
        failing_step: None,
        failing_index: None,
        failing_value: None,
        witness: None,
    }
}

/// `xᵀAx / xᵀx`.
pub fn rayleigh_quotient(a: &Mat, x: &[Real]) -> Real {
    let ax = a.matvec(x);
    Real::dot(x.iter().zip(&ax)) / Real::dot(x.iter().zip(x))
}
