// Copyright 2026 nstab Contributors
// SPDX-License-Identifier: Apache-2.0

//! Independent double-precision ground truth: characteristic roots,
//! method-of-steps simulation and D-subdivision curves for the scalar case.

use nalgebra as na;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::SystemF64;

type CMat = na::DMatrix<Complex64>;

/// Rectangle `[re_min, re_max] × [−im_max, im_max]` in the complex plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub re_min: f64,
    pub re_max: f64,
    pub im_max: f64,
}

impl Region {
    pub fn contains(&self, s: Complex64) -> bool {
        s.re >= self.re_min && s.re <= self.re_max && s.im.abs() <= self.im_max
    }
}

/// Parameters of a characteristic-root search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootSearch {
    pub region: Region,
    /// Chebyshev nodes per delay interval in the first pass.
    pub nodes: usize,
    /// Upper limit for node doubling.
    pub max_nodes: usize,
    /// Agreement required between successive refinements.
    pub tol: f64,
}

fn spectral_norm(m: &na::DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

impl RootSearch {
    /// Square region of half-width `max(2r, 10/h)` around the origin.
    pub fn for_system(sys: &SystemF64) -> Self {
        let nd = spectral_norm(&sys.d);
        let r = (spectral_norm(&sys.a0) + spectral_norm(&sys.a1)) / (1.0 - nd).max(1e-3);
        let rho = (2.0 * r).max(10.0 / sys.h).max(1.0);
        RootSearch {
            region: Region {
                re_min: -rho,
                re_max: rho,
                im_max: rho,
            },
            nodes: 40,
            max_nodes: 320,
            tol: 1e-8,
        }
    }

    pub fn with_region(mut self, region: Region) -> Self {
        self.region = region;
        self
    }
}

/// Characteristic roots found inside a region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootSet {
    /// Sorted by decreasing real part, then increasing imaginary part.
    pub roots: Vec<Complex64>,
    pub region: Region,
    /// Node count of the last discretization.
    pub nodes: usize,
    /// True when two successive refinements agreed.
    pub converged: bool,
    /// `|det Δ(s)|` for each root.
    pub residuals: Vec<f64>,
}

impl RootSet {
    pub fn rightmost(&self) -> Option<Complex64> {
        self.roots.first().copied()
    }
}

/// `Δ(s) = sI − A₀ − s e^{−sh} D − e^{−sh} A₁` and its derivative in `s`.
pub fn characteristic_matrix(sys: &SystemF64, s: Complex64) -> (CMat, CMat) {
    let n = sys.n();
    let c = |m: &na::DMatrix<f64>| m.map(|x| Complex64::new(x, 0.0));
    let (a0, a1, d) = (c(&sys.a0), c(&sys.a1), c(&sys.d));
    let eye = CMat::identity(n, n);
    let e = (-s * sys.h).exp();
    let delta = &eye * s - &a0 - &d * (s * e) - &a1 * e;
    let ddelta = &eye - &d * e + &d * (s * sys.h * e) + &a1 * (sys.h * e);
    (delta, ddelta)
}

/// `det Δ(s)`.
pub fn characteristic_det(sys: &SystemF64, s: Complex64) -> Complex64 {
    characteristic_matrix(sys, s).0.determinant()
}

/// Chebyshev points `cos(jπ/M)` and differentiation matrix on `[−1, 1]`.
pub fn cheb(m: usize) -> (Vec<f64>, na::DMatrix<f64>) {
    let x: Vec<f64> = (0..=m)
        .map(|j| (std::f64::consts::PI * j as f64 / m as f64).cos())
        .collect();
    let c = |j: usize| {
        let base = if j == 0 || j == m { 2.0 } else { 1.0 };
        if j.is_multiple_of(2) {
            base
        } else {
            -base
        }
    };
    let mut dm = na::DMatrix::zeros(m + 1, m + 1);
    for i in 0..=m {
        for j in 0..=m {
            if i != j {
                dm[(i, j)] = c(i) / c(j) / (x[i] - x[j]);
            }
        }
    }
    for i in 0..=m {
        let s: f64 = (0..=m).filter(|&j| j != i).map(|j| dm[(i, j)]).sum();
        dm[(i, i)] = -s;
    }
    (x, dm)
}

/// Collocation of the infinitesimal generator on `M+1` Chebyshev nodes.
fn generator(sys: &SystemF64, m: usize) -> na::DMatrix<f64> {
    let n = sys.n();
    let (_, dc) = cheb(m);
    let scale = 2.0 / sys.h;
    let size = n * (m + 1);
    let mut g = na::DMatrix::zeros(size, size);
    for j in 1..=m {
        for k in 0..=m {
            let v = scale * dc[(j, k)];
            for t in 0..n {
                g[(j * n + t, k * n + t)] = v;
            }
        }
    }
    // x′(0) = A₀x(0) + A₁x(−h) + D x′(−h), with x′(−h) from the last
    // differentiation row.
    for k in 0..=m {
        let w = scale * dc[(m, k)];
        for r in 0..n {
            for c in 0..n {
                let mut v = w * sys.d[(r, c)];
                if k == 0 {
                    v += sys.a0[(r, c)];
                }
                if k == m {
                    v += sys.a1[(r, c)];
                }
                g[(r, k * n + c)] = v;
            }
        }
    }
    g
}

/// Newton iteration `s ← s − 1/tr(Δ⁻¹Δ′)` on `det Δ(s) = 0`.
pub fn newton_polish(sys: &SystemF64, s0: Complex64) -> Option<(Complex64, f64)> {
    let mut s = s0;
    for _ in 0..60 {
        let (delta, ddelta) = characteristic_matrix(sys, s);
        let lu = delta.clone().lu();
        let Some(sol) = lu.solve(&ddelta) else {
            return Some((s, 0.0));
        };
        let tr = sol.trace();
        if tr.norm() == 0.0 || !tr.is_finite() {
            return None;
        }
        let step = 1.0 / tr;
        s -= step;
        if !s.is_finite() {
            return None;
        }
        if step.norm() <= 1e-14 * s.norm().max(1.0) {
            let det = characteristic_det(sys, s).norm();
            return Some((s, det));
        }
    }
    None
}

fn sort_roots(roots: &mut [(Complex64, f64)]) {
    roots.sort_by(|a, b| b.0.re.total_cmp(&a.0.re).then(a.0.im.total_cmp(&b.0.im)));
}

fn roots_at(sys: &SystemF64, m: usize, region: &Region) -> Result<Vec<(Complex64, f64)>> {
    let g = generator(sys, m);
    let eig = g.complex_eigenvalues();
    if eig.iter().any(|z| !z.is_finite()) {
        return Err(Error::RootFinder(format!(
            "collocation eigenproblem with {m} nodes returned non-finite values"
        )));
    }
    let n = sys.n() as i32;
    let mut out: Vec<(Complex64, f64)> = Vec::new();
    for &z in eig.iter() {
        let Some((s, det)) = newton_polish(sys, z) else {
            continue;
        };
        if !region.contains(s) || (s - z).norm() > 1e-2 * z.norm().max(1.0) {
            continue;
        }
        if det > 1e-10 * s.norm().max(1.0).powi(n) {
            continue;
        }
        if out
            .iter()
            .any(|(r, _)| (r - s).norm() <= 1e-7 * s.norm().max(1.0))
        {
            continue;
        }
        out.push((s, det));
    }
    sort_roots(&mut out);
    Ok(out)
}

/// Characteristic roots inside the search region.
///
/// Candidates come from a pseudospectral collocation of the neutral
/// generator. Each is polished by Newton iteration on `det Δ(s)`. The node
/// count doubles until the rightmost root moves less than `tol` and the
/// number of roots in the inner half of the region stops changing.
pub fn characteristic_roots(sys: &SystemF64, search: &RootSearch) -> Result<RootSet> {
    let region = search.region;
    let inner = Region {
        re_min: region.re_min / 2.0,
        re_max: region.re_max,
        im_max: region.im_max / 2.0,
    };
    let count_inner = |r: &[(Complex64, f64)]| r.iter().filter(|(s, _)| inner.contains(*s)).count();
    let mut m = search.nodes.max(4);
    let mut prev = roots_at(sys, m, &region)?;
    loop {
        let next_m = m * 2;
        if next_m > search.max_nodes {
            return Ok(finish(prev, region, m, false));
        }
        let next = roots_at(sys, next_m, &region)?;
        let agree = match (prev.first(), next.first()) {
            (Some(a), Some(b)) => (a.0 - b.0).norm() <= search.tol * b.0.norm().max(1.0),
            (None, None) => true,
            _ => false,
        } && count_inner(&prev) == count_inner(&next);
        m = next_m;
        if agree {
            return Ok(finish(next, region, m, true));
        }
        prev = next;
    }
}

fn finish(roots: Vec<(Complex64, f64)>, region: Region, nodes: usize, converged: bool) -> RootSet {
    RootSet {
        residuals: roots.iter().map(|r| r.1).collect(),
        roots: roots.into_iter().map(|r| r.0).collect(),
        region,
        nodes,
        converged,
    }
}

/// Rightmost characteristic root in the default search region.
pub fn rightmost_root(sys: &SystemF64) -> Result<Option<Complex64>> {
    Ok(characteristic_roots(sys, &RootSearch::for_system(sys))?.rightmost())
}

/// Initial function on `[−h, 0]` with its derivative.
pub struct InitialFunction<'a> {
    value: Box<dyn Fn(f64) -> na::DVector<f64> + Sync + 'a>,
    derivative: Box<dyn Fn(f64) -> na::DVector<f64> + Sync + 'a>,
}

impl<'a> InitialFunction<'a> {
    pub fn new(
        value: impl Fn(f64) -> na::DVector<f64> + Sync + 'a,
        derivative: impl Fn(f64) -> na::DVector<f64> + Sync + 'a,
    ) -> Self {
        InitialFunction {
            value: Box::new(value),
            derivative: Box::new(derivative),
        }
    }

    pub fn constant(v: na::DVector<f64>) -> Self {
        let n = v.len();
        let v2 = v.clone();
        InitialFunction::new(move |_| v2.clone(), move |_| na::DVector::zeros(n))
    }

    /// `φ(θ) = v + θ w`.
    pub fn affine(v: na::DVector<f64>, w: na::DVector<f64>) -> Self {
        let w2 = w.clone();
        InitialFunction::new(move |t| &v + &w * t, move |_| w2.clone())
    }

    pub fn value(&self, theta: f64) -> na::DVector<f64> {
        (self.value)(theta)
    }

    pub fn derivative(&self, theta: f64) -> na::DVector<f64> {
        (self.derivative)(theta)
    }
}

/// Sampled solution on a uniform time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<na::DVector<f64>>,
    /// Right-sided derivatives `x′(t+)`.
    pub dx: Vec<na::DVector<f64>>,
    pub dt: f64,
    /// Steps per delay interval.
    pub steps_per_delay: usize,
}

impl Trajectory {
    /// `x(t_k) − D x(t_k − h)` for `k ≥ steps_per_delay`.
    pub fn difference_operator(&self, d: &na::DMatrix<f64>) -> Vec<na::DVector<f64>> {
        let m = self.steps_per_delay;
        (m..self.x.len())
            .map(|k| &self.x[k] - d * &self.x[k - m])
            .collect()
    }
}

fn hermite(
    x0: &na::DVector<f64>,
    x1: &na::DVector<f64>,
    d0: &na::DVector<f64>,
    d1: &na::DVector<f64>,
    dt: f64,
    s: f64,
) -> na::DVector<f64> {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    x0 * h00 + d0 * (h10 * dt) + x1 * h01 + d1 * (h11 * dt)
}

/// Integrates the system by the method of steps with classical RK4.
///
/// The integrated variable is `z = x − Dx(t−h)` with `z′ = A₀x + A₁x(t−h)`
/// and `x = z + Dx(t−h)`. The step is `h/⌈h/dt⌉`, so knots `kh` fall on the
/// grid; past values between grid points come from cubic Hermite
/// interpolation with one-sided derivatives, which keeps the derivative
/// jumps at the knots out of the interpolant.
pub fn simulate_method_of_steps(
    sys: &SystemF64,
    phi: &InitialFunction<'_>,
    horizon: f64,
    dt: f64,
) -> Result<Trajectory> {
    let h = sys.h;
    if !(dt > 0.0) || !(horizon > 0.0) {
        return Err(Error::InvalidArgument(
            "dt and horizon must be positive".into(),
        ));
    }
    if dt > h {
        return Err(Error::InvalidArgument(format!(
            "step dt = {dt} exceeds the delay h = {h}"
        )));
    }
    let m = (h / dt).ceil() as usize;
    let dt = h / m as f64;
    let steps = (horizon / dt).ceil() as usize;
    let (a0, a1, d) = (&sys.a0, &sys.a1, &sys.d);

    let mut x: Vec<na::DVector<f64>> = Vec::with_capacity(steps + 1);
    let mut dx_r: Vec<na::DVector<f64>> = Vec::with_capacity(steps + 1);
    let mut dx_l: Vec<na::DVector<f64>> = Vec::with_capacity(steps + 1);

    // Past value x(t_j + s·dt) and one-sided derivatives at knot j (j may be negative).
    let past_val = |x: &[na::DVector<f64>],
                    dr: &[na::DVector<f64>],
                    dl: &[na::DVector<f64>],
                    j: isize,
                    s: f64| {
        if j < 0 {
            return phi.value((j as f64 + s) * dt);
        }
        let j = j as usize;
        if s == 0.0 {
            return x[j].clone();
        }
        hermite(&x[j], &x[j + 1], &dr[j], &dl[j + 1], dt, s)
    };
    let past_dx = |dr: &[na::DVector<f64>],
                   dl: &[na::DVector<f64>],
                   j: isize|
     -> (na::DVector<f64>, na::DVector<f64>) {
        if j < 0 {
            let v = phi.derivative(j as f64 * dt);
            (v.clone(), v)
        } else {
            let j = j as usize;
            (dl[j].clone(), dr[j].clone())
        }
    };

    let x0 = phi.value(0.0);
    let xp0 = phi.value(-h);
    let mut z = &x0 - d * &xp0;
    x.push(x0.clone());
    let (_, dpast_r) = past_dx(&dx_r, &dx_l, -(m as isize));
    dx_r.push(a0 * &x0 + a1 * &xp0 + d * &dpast_r);
    dx_l.push(phi.derivative(0.0));

    for k in 0..steps {
        let j = k as isize - m as isize;
        let xp_a = past_val(&x, &dx_r, &dx_l, j, 0.0);
        let xp_b = past_val(&x, &dx_r, &dx_l, j, 0.5);
        let xp_c = if j + 1 < 0 {
            phi.value((j + 1) as f64 * dt)
        } else {
            x[(j + 1) as usize].clone()
        };
        let f = |z: &na::DVector<f64>, xp: &na::DVector<f64>| a0 * (z + d * xp) + a1 * xp;
        let k1 = f(&z, &xp_a);
        let k2 = f(&(&z + &k1 * (dt / 2.0)), &xp_b);
        let k3 = f(&(&z + &k2 * (dt / 2.0)), &xp_b);
        let k4 = f(&(&z + &k3 * dt), &xp_c);
        z += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        let x_new = &z + d * &xp_c;
        let (pl, pr) = past_dx(&dx_r, &dx_l, j + 1);
        let base = a0 * &x_new + a1 * &xp_c;
        dx_l.push(&base + d * &pl);
        dx_r.push(&base + d * &pr);
        x.push(x_new);
        if x.last().is_some_and(|v| !v.iter().all(|e| e.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "simulation overflowed at t = {}",
                (k + 1) as f64 * dt
            )));
        }
    }
    Ok(Trajectory {
        t: (0..=steps).map(|k| k as f64 * dt).collect(),
        x,
        dx: dx_r,
        dt,
        steps_per_delay: m,
    })
}

/// Qualitative long-horizon behaviour of a simulated solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecayVerdict {
    Decaying,
    Growing,
    Undetermined,
}

/// Outcome of [`decay_probe`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayProbe {
    pub verdict: DecayVerdict,
    /// Estimated exponential rate from the envelope ratio.
    pub rate: f64,
    pub horizon: f64,
}

/// Simulates from a generic affine initial function and estimates the
/// exponential rate from the envelope on `[T/4, T/2]` versus `[3T/4, T]`.
pub fn decay_probe(sys: &SystemF64, horizon: Option<f64>) -> Result<DecayProbe> {
    let n = sys.n();
    let h = sys.h;
    let horizon = horizon.unwrap_or_else(|| (200.0 * h).max(100.0));
    let v = na::DVector::from_fn(n, |i, _| 1.0 + 0.37 * i as f64);
    let w = na::DVector::from_fn(n, |i, _| 0.5 - 0.21 * i as f64);
    let phi = InitialFunction::affine(v, w);
    let dt = h / 200.0;
    // Large growth rates overflow long before the horizon; shorten if needed.
    let mut t_end = horizon;
    let traj = loop {
        match simulate_method_of_steps(sys, &phi, t_end, dt) {
            Ok(tr) if tr.x.iter().all(|x| x.norm() < 1e150) => break tr,
            _ if t_end > 4.0 * h => t_end /= 4.0,
            Ok(tr) => break tr,
            Err(e) => return Err(e),
        }
    };
    let env = |a: f64, b: f64| {
        traj.t
            .iter()
            .zip(&traj.x)
            .filter(|(t, _)| **t >= a && **t <= b)
            .map(|(_, x)| x.norm())
            .fold(0.0f64, f64::max)
    };
    let early = env(t_end / 4.0, t_end / 2.0);
    let late = env(0.75 * t_end, t_end);
    let rate = if early > 0.0 && late > 0.0 {
        (late / early).ln() / (t_end / 2.0)
    } else if late == 0.0 {
        f64::NEG_INFINITY
    } else {
        f64::INFINITY
    };
    let verdict = if rate < -0.01 {
        DecayVerdict::Decaying
    } else if rate > 0.01 {
        DecayVerdict::Growing
    } else {
        DecayVerdict::Undetermined
    };
    Ok(DecayProbe {
        verdict,
        rate,
        horizon: t_end,
    })
}

/// Kind of a D-subdivision boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchKind {
    /// A real root crosses at `s = 0`.
    RealRoot,
    /// A pair crosses at `s = ±iω`.
    Imaginary,
}

/// One boundary polyline in the `(a₀, a₁)` plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCurve {
    pub kind: BranchKind,
    /// Points `[a₀, a₁]`.
    pub points: Vec<[f64; 2]>,
    /// Frequencies of the points (empty for the real-root branch).
    pub omega: Vec<f64>,
}

/// `(a₀, a₁)` with `s = iω` a root of `s(1 − d e^{−sh}) = a₀ + a₁ e^{−sh}`.
///
/// Returns `None` where `sin ωh = 0`.
pub fn imaginary_crossing(d: f64, h: f64, omega: f64) -> Option<[f64; 2]> {
    let (s, c) = (omega * h).sin_cos();
    if s.abs() < 1e-12 {
        return None;
    }
    let a1 = -omega * (1.0 - d * c) / s;
    let a0 = -omega * d * s - a1 * c;
    Some([a0, a1])
}

/// Stability boundaries of the scalar neutral equation in the `(a₀, a₁)` plane.
///
/// The imaginary branches are split wherever `sin ωh` changes sign. The
/// real-root branch `a₁ = −a₀` is returned as a segment spanning the
/// `a₀` range of the imaginary branches (at least `[−10, 10]`).
pub fn scalar_d_subdivision(d: f64, h: f64, omega_grid: &[f64]) -> Result<Vec<BoundaryCurve>> {
    if !(d.abs() < 1.0) {
        return Err(Error::Assumption(format!("|d| < 1 required, got d = {d}")));
    }
    if !(h > 0.0) {
        return Err(Error::Assumption(format!("h > 0 required, got h = {h}")));
    }
    let mut curves: Vec<BoundaryCurve> = Vec::new();
    let mut current: Option<(f64, BoundaryCurve)> = None;
    for &w in omega_grid {
        let sign = (w * h).sin().signum();
        match imaginary_crossing(d, h, w) {
            Some(p) if w > 0.0 => {
                let same = current.as_ref().is_some_and(|(sg, _)| *sg == sign);
                if !same {
                    if let Some((_, c)) = current.take() {
                        curves.push(c);
                    }
                    current = Some((
                        sign,
                        BoundaryCurve {
                            kind: BranchKind::Imaginary,
                            points: Vec::new(),
                            omega: Vec::new(),
                        },
                    ));
                }
                let c = &mut current.as_mut().expect("just set").1;
                c.points.push(p);
                c.omega.push(w);
            }
            _ => {
                if let Some((_, c)) = current.take() {
                    curves.push(c);
                }
            }
        }
    }
    if let Some((_, c)) = current.take() {
        curves.push(c);
    }
    curves.retain(|c| !c.points.is_empty());
    let span = curves
        .iter()
        .flat_map(|c| c.points.iter().map(|p| p[0].abs()))
        .filter(|x| x.is_finite())
        .fold(10.0f64, f64::max);
    curves.insert(
        0,
        BoundaryCurve {
            kind: BranchKind::RealRoot,
            points: vec![[-span, span], [span, -span]],
            omega: Vec::new(),
        },
    );
    Ok(curves)
}

/// Uniform grid on `[0, 20π/h]` used when no ω range is given.
pub fn default_omega_grid(h: f64, points: usize) -> Vec<f64> {
    let top = 20.0 * std::f64::consts::PI / h;
    (1..=points)
        .map(|k| top * k as f64 / points as f64)
        .collect()
}
