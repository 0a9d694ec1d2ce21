// Copyright 2026 nstab Contributors
// SPDX-License-Identifier: Apache-2.0

//! `nstab`: stability analysis of linear neutral time-delay systems.
//!
//! Exit status of `analyze`: 0 stable, 1 unstable, 2 inconclusive, 3 error.
//! `verify` exits 4 when the criterion and the oracles disagree.

mod sweep;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra as na;
use nstab_core::exec::Exec;
use nstab_core::lyapunov::{solve_delay_lyapunov, RESIDUAL_GRID};
use nstab_core::moments::assemble_p;
use nstab_core::oracle::{
    characteristic_roots, decay_probe, default_omega_grid, scalar_d_subdivision,
    simulate_method_of_steps, BranchKind, DecayVerdict, InitialFunction, Region, RootSearch,
};
use nstab_core::scalar::{set_default_digits, with_digits, Real, DEFAULT_DIGITS};
use nstab_core::stability::{
    compute_n_star, full_test, sufficiency_constants, NStarRule, TestOptions, Verdict,
};
use nstab_core::system::SystemConfig;
use serde::Serialize;

const EXIT_ERROR: u8 = 3;
const EXIT_DISAGREE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "nstab",
    version,
    about = "Stability test for linear neutral time-delay systems"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Working precision in significant decimal digits (default 16).
    #[arg(long, global = true, env = "NEUTRAL_STAB_PRECISION")]
    precision: Option<u32>,
    /// Test at this order instead of N*.
    #[arg(long, global = true)]
    order: Option<usize>,
    /// Cap on the tested order.
    #[arg(long, global = true)]
    max_order: Option<usize>,
    /// Relative PSD tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Worker threads (1 runs sequentially).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Record wall-clock times in reports and CSV.
    #[arg(long, global = true)]
    timing: bool,
    /// Accepted for interface stability; every computation is deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Which μ enters N*.
    #[arg(long, global = true, value_enum, default_value_t = Rule::Tight)]
    rule: Rule,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rule {
    Tight,
    Conservative,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full test on one system and print the JSON report.
    Analyze {
        config: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Write P_N and its blocks at full precision as JSON.
        #[arg(long)]
        dump_blocks: Option<PathBuf>,
    },
    /// Evaluate a two-parameter grid and write CSV.
    Sweep {
        spec: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Tabulate U(θ) on [0, h] and report the defining-property residuals.
    Lyap {
        config: PathBuf,
        #[arg(long, default_value_t = 11)]
        grid: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print N* and the sufficiency constants as JSON.
    Nstar { config: PathBuf },
    /// Compare the verdict with the characteristic roots and a simulation.
    Verify { config: PathBuf },
    /// Characteristic roots inside a rectangle as CSV.
    Roots {
        config: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        re_min: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        re_max: Option<f64>,
        #[arg(long)]
        im_max: Option<f64>,
    },
    /// D-subdivision boundaries of x′(t) − d x′(t−h) = a₀x(t) + a₁x(t−h) as CSV.
    Dsub {
        #[arg(long, allow_hyphen_values = true)]
        d: f64,
        #[arg(long)]
        h: f64,
        /// Upper end of the frequency grid (default 20π/h).
        #[arg(long)]
        omega_max: Option<f64>,
        #[arg(long, default_value_t = 2000)]
        points: usize,
    },
    /// Method-of-steps simulation from a constant initial function as CSV.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        horizon: f64,
        /// Step size (default h/200).
        #[arg(long)]
        dt: Option<f64>,
        /// Constant initial value, one entry per state (default all ones).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        phi: Option<Vec<f64>>,
        /// Keep every k-th sample.
        #[arg(long, default_value_t = 1)]
        every: usize,
    },
}

impl Common {
    fn options(&self, digits: Option<u32>) -> TestOptions {
        TestOptions {
            digits,
            order: self.order,
            max_order: self.max_order,
            tol: self.tol,
            rule: match self.rule {
                Rule::Tight => NStarRule::Tight,
                Rule::Conservative => NStarRule::Conservative,
            },
            exec: Exec::with_jobs(self.jobs),
            timing: self.timing,
            ..Default::default()
        }
    }

    /// Flag or environment first, then the config file, then 16 digits.
    fn digits_for(&self, cfg: &SystemConfig) -> u32 {
        self.precision
            .or(cfg.precision_digits)
            .unwrap_or(DEFAULT_DIGITS)
    }
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let mut out = sink(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn analyze(
    common: &Common,
    config: &Path,
    output: Option<&Path>,
    dump: Option<&Path>,
) -> Result<u8> {
    let cfg = SystemConfig::load(config)?;
    let digits = common.digits_for(&cfg);
    let report = full_test(&cfg, &common.options(Some(digits)))?;
    if let (Some(path), Some(order)) = (dump, report.n_used) {
        let blocks = with_digits(report.digits_used, || -> Result<_> {
            Ok(assemble_p(&cfg.realize()?, order)?.dump())
        })?;
        write_json(&blocks, Some(path))?;
    }
    write_json(&report, output)?;
    Ok(report.verdict.exit_code() as u8)
}

fn lyap(common: &Common, config: &Path, grid: usize, output: Option<&Path>) -> Result<u8> {
    if grid == 0 {
        bail!("--grid must be at least 1");
    }
    let cfg = SystemConfig::load(config)?;
    with_digits(common.digits_for(&cfg), || -> Result<u8> {
        let sys = cfg.realize()?;
        let dlm = solve_delay_lyapunov(&sys)?;
        let n = sys.n();
        let mut w = csv::Writer::from_writer(sink(output)?);
        let mut header = vec!["theta".to_string()];
        for i in 0..n {
            for j in 0..n {
                header.push(format!("U[{i}][{j}]"));
            }
        }
        w.write_record(&header)?;
        for k in 0..grid {
            let theta = if grid == 1 {
                Real::zero()
            } else {
                sys.h() * Real::ratio(k as i64, grid as i64 - 1)
            };
            let u = dlm.eval_u(&theta)?;
            let mut rec = vec![theta.to_decimal_string()];
            rec.extend(u.data().iter().map(Real::to_decimal_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        let r = dlm.residuals();
        eprintln!("residuals over {RESIDUAL_GRID} intervals:");
        eprintln!("  dynamic          {:.3e}", r.dynamic);
        eprintln!("  dynamic (θ < 0)  {:.3e}", r.dynamic_negative);
        eprintln!("  symmetry         {:.3e}", r.symmetry);
        eprintln!("  algebraic        {:.3e}", r.algebraic);
        Ok(0)
    })
}

#[derive(Serialize)]
struct NStarReport {
    n_star: nstab_core::stability::NStar,
    constants: nstab_core::stability::SufficiencyConstants,
    digits: u32,
}

fn nstar(common: &Common, config: &Path) -> Result<u8> {
    let cfg = SystemConfig::load(config)?;
    let digits = common.digits_for(&cfg).max(16);
    let opts = common.options(None);
    let report = with_digits(digits, || -> Result<_> {
        let sys = cfg.realize()?;
        let dlm = solve_delay_lyapunov(&sys)?;
        let constants = sufficiency_constants(&sys, &dlm, opts.exec)?;
        Ok(NStarReport {
            n_star: compute_n_star(&constants, opts.rule)?,
            constants,
            digits,
        })
    })?;
    write_json(&report, None)?;
    Ok(0)
}

fn verify(common: &Common, config: &Path) -> Result<u8> {
    let cfg = SystemConfig::load(config)?;
    let report = full_test(&cfg, &common.options(Some(common.digits_for(&cfg))))?;
    let f = with_digits(DEFAULT_DIGITS, || cfg.realize())?.to_f64();
    let roots = characteristic_roots(&f, &RootSearch::for_system(&f))?;
    let top = roots.rightmost();
    let from_roots = match top {
        Some(s) if s.re < 0.0 => Verdict::Stable,
        Some(_) => Verdict::Unstable,
        None => Verdict::Inconclusive,
    };
    let probe = decay_probe(&f, None)?;
    let from_sim = match probe.verdict {
        DecayVerdict::Decaying => Verdict::Stable,
        DecayVerdict::Growing => Verdict::Unstable,
        DecayVerdict::Undetermined => Verdict::Inconclusive,
    };
    let mut out = io::stdout().lock();
    writeln!(out, "{:<12} {:<13} detail", "method", "verdict")?;
    writeln!(
        out,
        "{:<12} {:<13} {}",
        "criterion", report.verdict, report.reason
    )?;
    let root_detail = match top {
        Some(s) => format!(
            "rightmost root {:.6} {:+.6}i ({} roots, converged {})",
            s.re,
            s.im,
            roots.roots.len(),
            roots.converged
        ),
        None => "no roots in the search region".into(),
    };
    writeln!(out, "{:<12} {:<13} {}", "roots", from_roots, root_detail)?;
    writeln!(
        out,
        "{:<12} {:<13} rate {:.4e} over T = {}",
        "simulation", from_sim, probe.rate, probe.horizon
    )?;
    let agree = report.verdict == from_roots && from_roots == from_sim;
    writeln!(out, "agreement: {}", if agree { "yes" } else { "NO" })?;
    out.flush()?;
    if agree {
        Ok(0)
    } else {
        eprintln!("criterion, roots and simulation disagree");
        Ok(EXIT_DISAGREE)
    }
}

fn roots(
    config: &Path,
    re_min: Option<f64>,
    re_max: Option<f64>,
    im_max: Option<f64>,
) -> Result<u8> {
    let cfg = SystemConfig::load(config)?;
    let f = with_digits(DEFAULT_DIGITS, || cfg.realize())?.to_f64();
    let base = RootSearch::for_system(&f);
    let region = Region {
        re_min: re_min.unwrap_or(base.region.re_min),
        re_max: re_max.unwrap_or(base.region.re_max),
        im_max: im_max.unwrap_or(base.region.im_max),
    };
    let set = characteristic_roots(&f, &base.with_region(region))?;
    let mut w = csv::Writer::from_writer(sink(None)?);
    w.write_record(["re", "im", "residual"])?;
    for (s, r) in set.roots.iter().zip(&set.residuals) {
        w.write_record([s.re.to_string(), s.im.to_string(), format!("{r:e}")])?;
    }
    w.flush()?;
    if !set.converged {
        eprintln!(
            "warning: root search did not converge at {} nodes",
            set.nodes
        );
    }
    Ok(0)
}

fn dsub(d: f64, h: f64, omega_max: Option<f64>, points: usize) -> Result<u8> {
    let grid = match omega_max {
        Some(top) => (1..=points)
            .map(|k| top * k as f64 / points as f64)
            .collect(),
        None => default_omega_grid(h, points),
    };
    let curves = scalar_d_subdivision(d, h, &grid)?;
    let mut w = csv::Writer::from_writer(sink(None)?);
    w.write_record(["curve", "kind", "omega", "a0", "a1"])?;
    for (i, c) in curves.iter().enumerate() {
        let kind = match c.kind {
            BranchKind::RealRoot => "real",
            BranchKind::Imaginary => "imaginary",
        };
        for (k, p) in c.points.iter().enumerate() {
            let omega = c.omega.get(k).map_or(String::new(), f64::to_string);
            w.write_record([
                i.to_string(),
                kind.to_string(),
                omega,
                p[0].to_string(),
                p[1].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(0)
}

fn simulate(
    config: &Path,
    horizon: f64,
    dt: Option<f64>,
    phi: Option<Vec<f64>>,
    every: usize,
) -> Result<u8> {
    let cfg = SystemConfig::load(config)?;
    let f = with_digits(DEFAULT_DIGITS, || cfg.realize())?.to_f64();
    let n = f.n();
    let v = match phi {
        Some(v) if v.len() == n => na::DVector::from_vec(v),
        Some(v) => bail!("--phi has {} entries, the system has {n} states", v.len()),
        None => na::DVector::from_element(n, 1.0),
    };
    let tr = simulate_method_of_steps(
        &f,
        &InitialFunction::constant(v),
        horizon,
        dt.unwrap_or(f.h / 200.0),
    )?;
    let mut w = csv::Writer::from_writer(sink(None)?);
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for (t, x) in tr.t.iter().zip(&tr.x).step_by(every.max(1)) {
        let mut rec = vec![t.to_string()];
        rec.extend(x.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    let common = &cli.common;
    if let Some(d) = common.precision {
        set_default_digits(d)?;
    }
    match &cli.command {
        Command::Analyze {
            config,
            output,
            dump_blocks,
        } => analyze(common, config, output.as_deref(), dump_blocks.as_deref()),
        Command::Sweep { spec, output } => {
            let spec = sweep::SweepSpec::load(spec)?;
            let rows = sweep::run(&spec, &common.options(common.precision), common.jobs);
            sweep::write_csv(&rows, sink(output.as_deref())?)?;
            Ok(0)
        }
        Command::Lyap {
            config,
            grid,
            output,
        } => lyap(common, config, *grid, output.as_deref()),
        Command::Nstar { config } => nstar(common, config),
        Command::Verify { config } => verify(common, config),
        Command::Roots {
            config,
            re_min,
            re_max,
            im_max,
        } => roots(config, *re_min, *re_max, *im_max),
        Command::Dsub {
            d,
            h,
            omega_max,
            points,
        } => dsub(*d, *h, *omega_max, *points),
        Command::Simulate {
            config,
            horizon,
            dt,
            phi,
            every,
        } => simulate(config, *horizon, *dt, phi.clone(), *every),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
