// Copyright 2026 nstab Contributors
// SPDX-License-Identifier: Apache-2.0

//! Two-parameter sweeps over a base configuration.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use nstab_core::exec::Exec;
use nstab_core::stability::{full_test, TestOptions};
use nstab_core::system::{load_document, SystemConfig};
use nstab_core::Error;
use serde::{Deserialize, Serialize};

/// One swept parameter: `points` values evenly spaced on `[min, max]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    /// Parameter path understood by [`SystemConfig::set_param`].
    pub path: String,
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.min];
        }
        let last = (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                if i + 1 == self.points {
                    self.max
                } else {
                    self.min + (self.max - self.min) * i as f64 / last
                }
            })
            .collect()
    }
}

/// A sweep specification file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: SystemConfig,
    pub p1: Axis,
    pub p2: Axis,
}

impl SweepSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let spec: SweepSpec = load_document(path)?;
        spec.check()?;
        Ok(spec)
    }

    fn check(&self) -> Result<()> {
        for axis in [&self.p1, &self.p2] {
            if axis.points == 0 {
                bail!("axis {:?} needs at least one point", axis.path);
            }
            if !(axis.min.is_finite() && axis.max.is_finite()) {
                bail!("axis {:?} has a non-finite range", axis.path);
            }
            let mut probe = self.base.clone();
            probe
                .set_param(&axis.path, axis.min)
                .with_context(|| format!("axis {:?} does not resolve to a scalar", axis.path))?;
        }
        Ok(())
    }

    /// Grid points in row-major order (`p1` outer, `p2` inner).
    pub fn grid(&self) -> Vec<(f64, f64)> {
        let v2 = self.p2.values();
        self.p1
            .values()
            .into_iter()
            .flat_map(|a| v2.iter().map(move |&b| (a, b)))
            .collect()
    }
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p1: f64,
    pub p2: f64,
    pub verdict: String,
    #[serde(rename = "N_star")]
    pub n_star: Option<usize>,
    pub lambda_min: Option<String>,
    pub wall_ms: Option<u64>,
    pub detail: String,
}

fn evaluate(spec: &SweepSpec, p1: f64, p2: f64, opts: &TestOptions) -> SweepRow {
    let start = Instant::now();
    let mut row = SweepRow {
        p1,
        p2,
        verdict: String::new(),
        n_star: None,
        lambda_min: None,
        wall_ms: None,
        detail: String::new(),
    };
    let mut cfg = spec.base.clone();
    let outcome = cfg
        .set_param(&spec.p1.path, p1)
        .and_then(|_| cfg.set_param(&spec.p2.path, p2))
        .and_then(|_| full_test(&cfg, opts));
    match outcome {
        Ok(r) => {
            row.verdict = r.verdict.to_string();
            row.n_star = r.n_star.map(|n| n.value);
            row.lambda_min = r.lambda_min;
            row.detail = r.reason;
        }
        Err(
            e @ (Error::Assumption(_) | Error::SingularParameterization(_) | Error::Dimension(_)),
        ) => {
            row.verdict = "Invalid".into();
            row.detail = e.to_string();
        }
        Err(e) => {
            row.verdict = "Error".into();
            row.detail = e.to_string();
        }
    }
    if opts.timing {
        row.wall_ms = Some(start.elapsed().as_millis() as u64);
    }
    row
}

/// Evaluates every grid point; rows come back in grid order whatever the
/// worker count.
pub fn run(spec: &SweepSpec, opts: &TestOptions, jobs: Option<usize>) -> Vec<SweepRow> {
    let point_opts = TestOptions {
        exec: Exec::Sequential,
        ..opts.clone()
    };
    Exec::with_jobs(jobs).map(spec.grid(), |(a, b)| evaluate(spec, a, b, &point_opts))
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
