// Copyright 2026 nstab Contributors
// SPDX-License-Identifier: Apache-2.0

//! Adaptive Gauss–Kronrod (7, 15) quadrature for vector-valued integrands.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
/// Gauss weights for the odd Kronrod nodes `XGK[1], XGK[3], XGK[5], XGK[7]`.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances and limits for [`integrate`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 1e-14,
            rel_tol: 1e-12,
            max_intervals: 4000,
        }
    }
}

/// Integral estimate with its error estimate (max-norm).
#[derive(Clone, Debug, PartialEq)]
pub struct QuadResult {
    pub value: Vec<f64>,
    pub error: f64,
    pub evaluations: usize,
}

struct Panel {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn kronrod<F: FnMut(f64) -> Vec<f64>>(f: &mut F, a: f64, b: f64) -> Panel {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let fc = f(c);
    let dim = fc.len();
    let mut k = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    for t in 0..dim {
        k[t] = WGK[7] * fc[t];
        g[t] = WG[3] * fc[t];
    }
    for j in 0..7 {
        let x = r * XGK[j];
        let f1 = f(c - x);
        let f2 = f(c + x);
        for t in 0..dim {
            let s = f1[t] + f2[t];
            k[t] += WGK[j] * s;
            if j % 2 == 1 {
                g[t] += WG[j / 2] * s;
            }
        }
    }
    let value: Vec<f64> = k.iter().map(|x| x * r).collect();
    let diff: Vec<f64> = k.iter().zip(&g).map(|(x, y)| (x - y) * r).collect();
    Panel {
        a,
        b,
        value,
        error: max_norm(&diff),
    }
}

/// Integrates `f` over `[a, b]` by globally adaptive bisection.
///
/// Terminates when the summed error estimate is below
/// `max(abs_tol, rel_tol·‖I‖∞)`; otherwise returns a [`Error::Quadrature`]
/// error carrying the achieved estimate.
pub fn integrate<F>(mut f: F, a: f64, b: f64, opts: QuadOptions) -> Result<QuadResult>
where
    F: FnMut(f64) -> Vec<f64>,
{
    if a == b {
        let dim = f(a).len();
        return Ok(QuadResult {
            value: vec![0.0; dim],
            error: 0.0,
            evaluations: 1,
        });
    }
    let mut heap = BinaryHeap::new();
    let first = kronrod(&mut f, a, b);
    let mut total = first.value.clone();
    let mut err = first.error;
    let mut evals = 15;
    heap.push(first);
    loop {
        let tol = opts.abs_tol.max(opts.rel_tol * max_norm(&total));
        if err <= tol {
            break;
        }
        if heap.len() >= opts.max_intervals {
            return Err(Error::Quadrature {
                requested: tol,
                achieved: err,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::Quadrature {
                requested: tol,
                achieved: err,
            });
        }
        let left = kronrod(&mut f, worst.a, mid);
        let right = kronrod(&mut f, mid, worst.b);
        evals += 30;
        let parts = left.value.iter().zip(&right.value).zip(&worst.value);
        for (t, ((l, r), w)) in total.iter_mut().zip(parts) {
            *t += l + r - w;
        }
        heap.push(left);
        heap.push(right);
        err = heap.iter().map(|p| p.error).sum();
    }
    // Re-sum to avoid drift from incremental updates.
    let mut value = vec![0.0; total.len()];
    for p in heap.iter() {
        for (v, x) in value.iter_mut().zip(&p.value) {
            *v += x;
        }
    }
    Ok(QuadResult {
        value,
        error: err,
        evaluations: evals,
    })
}
