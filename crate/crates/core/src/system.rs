// Copyright 2026 nstab Contributors
// SPDX-License-Identifier: Apache-2.0

//! The neutral system `d/dt[x(t) − Dx(t−h)] = A₀x(t) + A₁x(t−h)`, its
//! admissibility checks, the growth constants `r` and `a₀`, and the
//! configuration format.

use std::fmt;
use std::path::Path;

use nalgebra as na;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{pivoted_cholesky, sym_extreme_eigenvalues, Mat};
use crate::scalar::Real;

/// A neutral time-delay system together with the derivative weight `W`.
#[derive(Clone, Debug, PartialEq)]
pub struct NeutralSystem {
    a0: Mat,
    a1: Mat,
    d: Mat,
    h: Real,
    w: Mat,
}

impl NeutralSystem {
    /// Builds a system; fails with [`Error::Dimension`] on inconsistent shapes.
    ///
    /// `w = None` selects the identity.
    pub fn new(a0: Mat, a1: Mat, d: Mat, h: Real, w: Option<Mat>) -> Result<Self> {
        let n = a0.rows();
        if n == 0 {
            return Err(Error::Dimension(
                "system dimension must be at least 1".into(),
            ));
        }
        let w = w.unwrap_or_else(|| Mat::identity(n));
        for (name, m) in [("A0", &a0), ("A1", &a1), ("D", &d), ("W", &w)] {
            if m.shape() != (n, n) {
                return Err(Error::Dimension(format!(
                    "{name} is {}×{}, expected {n}×{n}",
                    m.rows(),
                    m.cols()
                )));
            }
        }
        if !h.is_finite() {
            return Err(Error::InvalidArgument("delay h must be finite".into()));
        }
        Ok(NeutralSystem { a0, a1, d, h, w })
    }

    /// Scalar system `d/dt[x − d·x(t−h)] = a₀x + a₁x(t−h)` with `W = 1`.
    pub fn scalar(a0: f64, a1: f64, d: f64, h: f64) -> Result<Self> {
        NeutralSystem::new(
            Mat::from_f64(1, 1, &[a0]),
            Mat::from_f64(1, 1, &[a1]),
            Mat::from_f64(1, 1, &[d]),
            Real::from_f64(h),
            None,
        )
    }

    pub fn n(&self) -> usize {
        self.a0.rows()
    }

    pub fn a0(&self) -> &Mat {
        &self.a0
    }

    pub fn a1(&self) -> &Mat {
        &self.a1
    }

    pub fn d(&self) -> &Mat {
        &self.d
    }

    pub fn h(&self) -> &Real {
        &self.h
    }

    pub fn w(&self) -> &Mat {
        &self.w
    }

    /// Copy with every entry re-rounded to the active precision.
    pub fn rounded(&self) -> Self {
        NeutralSystem {
            a0: self.a0.rounded(),
            a1: self.a1.rounded(),
            d: self.d.rounded(),
            h: self.h.rounded(),
            w: self.w.rounded(),
        }
    }

    /// Double-precision copy for the oracles.
    pub fn to_f64(&self) -> SystemF64 {
        SystemF64 {
            a0: self.a0.to_dmatrix(),
            a1: self.a1.to_dmatrix(),
            d: self.d.to_dmatrix(),
            h: self.h.to_f64(),
            w: self.w.to_dmatrix(),
        }
    }
}

/// Double-precision view of a [`NeutralSystem`].
#[derive(Clone, Debug, PartialEq)]
pub struct SystemF64 {
    pub a0: na::DMatrix<f64>,
    pub a1: na::DMatrix<f64>,
    pub d: na::DMatrix<f64>,
    pub h: f64,
    pub w: na::DMatrix<f64>,
}

impl SystemF64 {
    pub fn n(&self) -> usize {
        self.a0.nrows()
    }

    pub fn scalar(a0: f64, a1: f64, d: f64, h: f64) -> Self {
        let m = |x| na::DMatrix::from_element(1, 1, x);
        SystemF64 {
            a0: m(a0),
            a1: m(a1),
            d: m(d),
            h,
            w: m(1.0),
        }
    }
}

/// One failed admissibility condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    NonPositiveDelay { h: f64 },
    WeightNotSymmetric,
    WeightNotPositiveDefinite { lambda_min: f64 },
    DifferenceOperatorNorm { norm: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveDelay { h } => write!(f, "h>0 violated (h = {h})"),
            Violation::WeightNotSymmetric => write!(f, "W=Wᵀ violated"),
            Violation::WeightNotPositiveDefinite { lambda_min } => {
                write!(f, "λ_min(W)>0 violated (λ_min = {lambda_min:e})")
            }
            Violation::DifferenceOperatorNorm { norm } => {
                write!(f, "‖D‖<1 violated (‖D‖ = {norm})")
            }
        }
    }
}

/// Admissibility report; empty means the test applies.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_admissible(&self) -> bool {
        self.violations.is_empty()
    }

    /// Fails with [`Error::Assumption`] listing every violation.
    pub fn into_result(self) -> Result<()> {
        if self.is_admissible() {
            Ok(())
        } else {
            let msgs: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
            Err(Error::Assumption(msgs.join("; ")))
        }
    }
}

/// Checks `h > 0`, `W = Wᵀ ≻ 0` and `‖D‖ < 1`.
pub fn validate(sys: &NeutralSystem) -> ValidationReport {
    let mut violations = Vec::new();
    if !(sys.h > 0.0) {
        violations.push(Violation::NonPositiveDelay { h: sys.h.to_f64() });
    }
    if !sys.w.is_symmetric() {
        violations.push(Violation::WeightNotSymmetric);
    } else {
        let (lmin, _) = sym_extreme_eigenvalues(&sys.w);
        if !(lmin > 0.0) {
            violations.push(Violation::WeightNotPositiveDefinite {
                lambda_min: lmin.to_f64(),
            });
        }
    }
    // ‖D‖ < 1 exactly when I − DᵀD ≻ 0; the factorization decides the
    // boundary case ‖D‖ = 1 without eigenvalue rounding.
    let n = sys.d.rows();
    let gap = &Mat::identity(n) - &sys.d.transpose().matmul(&sys.d);
    let contractive = pivoted_cholesky(&gap, &Real::zero()).rank == n;
    let norm_d = sys.d.spectral_norm();
    if !contractive || !(norm_d < 1.0) {
        violations.push(Violation::DifferenceOperatorNorm {
            norm: norm_d.to_f64(),
        });
    }
    ValidationReport { violations }
}

/// The derivative-growth bound `r` and the instability margin `a₀`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthConstants {
    pub r: Real,
    pub a0: Real,
    pub norm_a0: Real,
    pub norm_a1: Real,
    pub norm_d: Real,
    pub lambda_min_w: Real,
}

/// `r = (‖A₀‖+‖A₁‖)/(1−‖D‖)` and `a₀ = λ_min(W)/(4r)` with spectral norms.
pub fn growth_constants(sys: &NeutralSystem) -> Result<GrowthConstants> {
    validate(sys).into_result()?;
    let norm_a0 = sys.a0.spectral_norm();
    let norm_a1 = sys.a1.spectral_norm();
    let norm_d = sys.d.spectral_norm();
    let (lambda_min_w, _) = sym_extreme_eigenvalues(&sys.w);
    let r = (&norm_a0 + &norm_a1) / (Real::one() - &norm_d);
    if r.is_zero() {
        return Err(Error::Assumption(
            "r = 0 (A0 = A1 = 0): the margin a0 is undefined".into(),
        ));
    }
    let a0 = &lambda_min_w / (&r * 4.0);
    Ok(GrowthConstants {
        r,
        a0,
        norm_a0,
        norm_a1,
        norm_d,
        lambda_min_w,
    })
}

/// Parameters of the PI-controlled second-order plant with a shifted spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Example2Params {
    pub a: f64,
    pub b: f64,
    pub h: f64,
    pub d: f64,
    pub sigma: f64,
    pub kp: f64,
    pub ki: f64,
}

impl Example2Params {
    /// `a = 0.4, b = 50, h = 0.2, d = 0.8, σ = 0.3` with the given gains.
    pub fn reference(kp: f64, ki: f64) -> Self {
        Example2Params {
            a: 0.4,
            b: 50.0,
            h: 0.2,
            d: 0.8,
            sigma: 0.3,
            kp,
            ki,
        }
    }
}

/// Builds the 2×2 closed-loop matrices of the controlled plant.
pub fn example2_matrices(p: &Example2Params) -> Result<NeutralSystem> {
    let r = Real::from_f64;
    let (a, b, h, d, sigma, kp, ki) =
        (r(p.a), r(p.b), r(p.h), r(p.d), r(p.sigma), r(p.kp), r(p.ki));
    let alpha1 = &d + &kp;
    if alpha1.is_zero() {
        return Err(Error::SingularParameterization(
            "alpha1 = d + kp = 0".into(),
        ));
    }
    let shift = (&sigma * &h).exp();
    let alpha2 = (&d - &kp) * &shift;
    let bd2 = &b * d.square();
    let bkp_a_d = (&b * &kp + &a) * &d;
    let akp = &a * &kp;
    let beta1 = &bkp_a_d + &bd2 + &akp + &ki;
    let beta2 = (&bkp_a_d - &bd2 - &akp - &ki) * &shift;
    let bkid = &b * &ki * &d;
    let aki = &a * &ki;
    let gamma1 = &bkid + &aki;
    let gamma2 = (&bkid - &aki) * &shift;
    let s2 = sigma.square();

    let zero = Real::zero;
    let dm = Mat::from_fn(2, 2, |i, j| {
        if i == 1 && j == 1 {
            -(&alpha2 / &alpha1)
        } else {
            zero()
        }
    });
    let a0_21 = (-(&s2 * &alpha1) + &sigma * &beta1 - &gamma1) / &alpha1;
    let a0_22 = (-&beta1 + &sigma * &alpha1 * 2.0) / &alpha1;
    let a0 = Mat::from_fn(2, 2, |i, j| match (i, j) {
        (0, 1) => Real::one(),
        (1, 0) => a0_21.clone(),
        (1, 1) => a0_22.clone(),
        _ => zero(),
    });
    let a1_21 = (-(&s2 * &alpha2) + &sigma * &beta2 - &gamma2) / &alpha1;
    let a1_22 = (-&beta2 + &sigma * &alpha2 * 2.0) / &alpha1;
    let a1 = Mat::from_fn(2, 2, |i, j| match (i, j) {
        (1, 0) => a1_21.clone(),
        (1, 1) => a1_22.clone(),
        _ => zero(),
    });
    NeutralSystem::new(a0, a1, dm, h, None)
}

/// A matrix entry: a JSON/TOML number, or a decimal string parsed at the
/// working precision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Num(f64),
    Text(String),
}

impl Entry {
    pub fn to_real(&self) -> Result<Real> {
        match self {
            Entry::Num(x) => Ok(Real::from_f64(*x)),
            Entry::Text(s) => Real::parse(s),
        }
    }
}

/// A matrix given as row-major nested arrays, or a bare scalar for n = 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixEntries {
    Scalar(Entry),
    Rows(Vec<Vec<Entry>>),
}

impl MatrixEntries {
    pub fn to_mat(&self) -> Result<Mat> {
        match self {
            MatrixEntries::Scalar(e) => {
                let v = e.to_real()?;
                Ok(Mat::from_fn(1, 1, |_, _| v.clone()))
            }
            MatrixEntries::Rows(rows) => {
                let r = rows.len();
                let c = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|row| row.len() != c) {
                    return Err(Error::Dimension("ragged matrix rows".into()));
                }
                let mut m = Mat::zeros(r, c);
                for (i, row) in rows.iter().enumerate() {
                    for (j, e) in row.iter().enumerate() {
                        m[(i, j)] = e.to_real()?;
                    }
                }
                Ok(m)
            }
        }
    }

    fn set(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        match self {
            MatrixEntries::Scalar(e) if i == 0 && j == 0 => {
                *e = Entry::Num(value);
                Ok(())
            }
            MatrixEntries::Rows(rows) => {
                let cell = rows
                    .get_mut(i)
                    .and_then(|row| row.get_mut(j))
                    .ok_or_else(|| Error::Config(format!("index [{i}][{j}] out of range")))?;
                *cell = Entry::Num(value);
                Ok(())
            }
            _ => Err(Error::Config(format!("index [{i}][{j}] out of range"))),
        }
    }
}

/// System configuration as read from JSON or TOML.
///
/// Either `example2` or all of `A0`, `A1`, `D`, `h` must be present.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(rename = "A0", default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<MatrixEntries>,
    #[serde(rename = "A1", default, skip_serializing_if = "Option::is_none")]
    pub a1: Option<MatrixEntries>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d: Option<MatrixEntries>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Entry>,
    #[serde(rename = "W", default, skip_serializing_if = "Option::is_none")]
    pub w: Option<MatrixEntries>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision_digits: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example2: Option<Example2Params>,
}

/// Input format of a configuration document.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConfigFormat {
    Json,
    Toml,
}

impl ConfigFormat {
    /// Guesses from a file extension; anything but `.toml` is JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("toml") => ConfigFormat::Toml,
            _ => ConfigFormat::Json,
        }
    }
}

/// Parses a document; errors carry the parser's line and column.
pub fn parse_document<T: serde::de::DeserializeOwned>(
    text: &str,
    format: ConfigFormat,
) -> Result<T> {
    match format {
        ConfigFormat::Json => serde_json::from_str(text).map_err(|e| Error::Config(e.to_string())),
        ConfigFormat::Toml => toml::from_str(text).map_err(|e| Error::Config(e.to_string())),
    }
}

/// Reads and parses a document, picking the format from the extension.
pub fn load_document<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_document(&text, ConfigFormat::from_path(path)).map_err(|e| in_file(path, e))
}

fn in_file(path: &Path, e: Error) -> Error {
    match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => Error::Config(format!("{}: {other}", path.display())),
    }
}

impl SystemConfig {
    pub fn parse(text: &str, format: ConfigFormat) -> Result<Self> {
        let cfg: SystemConfig = parse_document(text, format)?;
        cfg.check_shape()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: SystemConfig = load_document(path)?;
        cfg.check_shape().map_err(|e| in_file(path, e))?;
        Ok(cfg)
    }

    /// Scalar configuration with `W = 1`.
    pub fn scalar(a0: f64, a1: f64, d: f64, h: f64) -> Self {
        let s = |x| Some(MatrixEntries::Scalar(Entry::Num(x)));
        SystemConfig {
            a0: s(a0),
            a1: s(a1),
            d: s(d),
            h: Some(Entry::Num(h)),
            ..Default::default()
        }
    }

    pub fn example2(params: Example2Params) -> Self {
        SystemConfig {
            example2: Some(params),
            ..Default::default()
        }
    }

    fn check_shape(&self) -> Result<()> {
        let explicit = [
            self.a0.is_some(),
            self.a1.is_some(),
            self.d.is_some(),
            self.h.is_some(),
        ];
        match (&self.example2, explicit.iter().any(|&b| b)) {
            (Some(_), true) => Err(Error::Config(
                "give either `example2` or the matrices A0, A1, D, h, not both".into(),
            )),
            (None, _) if !explicit.iter().all(|&b| b) => Err(Error::Config(
                "missing keys: A0, A1, D and h are all required".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Builds the system at the active precision.
    pub fn realize(&self) -> Result<NeutralSystem> {
        self.check_shape()?;
        let w = self.w.as_ref().map(MatrixEntries::to_mat).transpose()?;
        if let Some(p) = &self.example2 {
            let sys = example2_matrices(p)?;
            return match w {
                Some(w) => NeutralSystem::new(
                    sys.a0().clone(),
                    sys.a1().clone(),
                    sys.d().clone(),
                    sys.h().clone(),
                    Some(w),
                ),
                None => Ok(sys),
            };
        }
        let get = |m: &Option<MatrixEntries>| m.as_ref().expect("checked").to_mat();
        NeutralSystem::new(
            get(&self.a0)?,
            get(&self.a1)?,
            get(&self.d)?,
            self.h.as_ref().expect("checked").to_real()?,
            w,
        )
    }

    /// Overwrites one scalar parameter.
    ///
    /// Paths are Example-2 names (`a`, `b`, `h`, `d`, `sigma`, `kp`, `ki`),
    /// `h` for explicit systems, or matrix entries such as `A0[1][0]`.
    pub fn set_param(&mut self, path: &str, value: f64) -> Result<()> {
        let path = path.trim();
        if let Some(p) = self.example2.as_mut() {
            let slot = match path {
                "a" => &mut p.a,
                "b" => &mut p.b,
                "h" => &mut p.h,
                "d" => &mut p.d,
                "sigma" => &mut p.sigma,
                "kp" => &mut p.kp,
                "ki" => &mut p.ki,
                _ => {
                    return Err(Error::Config(format!(
                        "unknown example2 parameter {path:?}"
                    )))
                }
            };
            *slot = value;
            return Ok(());
        }
        if path == "h" {
            self.h = Some(Entry::Num(value));
            return Ok(());
        }
        let (name, rest) = path
            .split_once('[')
            .ok_or_else(|| Error::Config(format!("cannot resolve parameter path {path:?}")))?;
        let idx: Vec<usize> = rest
            .trim_end_matches(']')
            .split("][")
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("bad index in {path:?}")))?;
        let (i, j) = match idx.as_slice() {
            [i, j] => (*i, *j),
            [i] => (*i, 0),
            _ => return Err(Error::Config(format!("bad index in {path:?}"))),
        };
        let target = match name.trim() {
            "A0" => &mut self.a0,
            "A1" => &mut self.a1,
            "D" => &mut self.d,
            "W" => &mut self.w,
            other => return Err(Error::Config(format!("unknown matrix {other:?}"))),
        };
        target
            .as_mut()
            .ok_or_else(|| Error::Config(format!("matrix {name} not present")))?
            .set(i, j, value)
    }
}
