//! Exhaustive grid search over tight allocations, for tiny instances.
//!
//! Capacity increases in every `b_pq` and `p_pq`, so some optimum spends every
//! budget and only the splits need searching. Each RAT's bandwidth split has
//! `L − 1` free fractions and each terminal's power split has `K − 1`. The
//! objective separates by terminal once bandwidth is fixed, so the best power
//! split is found per terminal, which keeps the search exhaustive.
//!
//! After the coarse pass the grid is rebuilt with the same number of points
//! over `±1` coarse step around the incumbent, once per refinement.

use serde::{Deserialize, Serialize};

use crate::capacity::to_bps_per_hz;
use crate::error::{Error, Result};
use crate::model::{validate_scenario, Allocation, Matrix, Scenario};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub points: usize,
    pub refinements: usize,
    /// Refuse grids needing more objective evaluations than this per pass.
    pub max_evaluations: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            points: 50,
            refinements: 1,
            max_evaluations: 200_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub allocation: Allocation,
    pub capacity_nats_per_s: f64,
    pub capacity_bps_per_hz: f64,
    pub evaluations: u64,
}

fn term(beta: f64, c: f64, b: f64, p: f64) -> f64 {
    if b <= 0.0 || p <= 0.0 {
        0.0
    } else {
        beta * b * (c * p / b).ln_1p()
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Completes free fractions to a split of 1, or `None` when they overshoot.
fn complete(free: &[f64]) -> Option<Vec<f64>> {
    let used: f64 = free.iter().sum();
    if used > 1.0 + 1e-12 {
        return None;
    }
    let mut out = free.to_vec();
    out.push((1.0 - used).max(0.0));
    Some(out)
}

/// Calls `visit` with every combination drawn from `axes`.
fn for_each_point(axes: &[Vec<f64>], mut visit: impl FnMut(&[f64])) {
    let mut idx = vec![0usize; axes.len()];
    let mut point: Vec<f64> = axes.iter().map(|a| a[0]).collect();
    loop {
        visit(&point);
        let mut d = 0;
        loop {
            if d == axes.len() {
                return;
            }
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                point[d] = axes[d][idx[d]];
                break;
            }
            idx[d] = 0;
            point[d] = axes[d][0];
            d += 1;
        }
    }
}

struct Pass {
    /// Fractions of each RAT's budget held by each terminal, `[q][p]`.
    bw: Vec<Vec<f64>>,
    /// Fractions of each terminal's budget on each RAT, `[p][q]`.
    pw: Vec<Vec<f64>>,
    value: f64,
    evaluations: u64,
}

fn search(s: &Scenario, bw_axes: &[Vec<f64>], pw_axes: &[Vec<Vec<f64>>]) -> Option<Pass> {
    let (l, k) = (s.num_mmts(), s.num_rats());
    let free_b = l - 1;
    let mut best: Option<Pass> = None;
    let mut evaluations = 0u64;
    let mut row_b = vec![0.0; k];
    for_each_point(bw_axes, |point| {
        let mut split = Vec::with_capacity(k);
        for q in 0..k {
            match complete(&point[q * free_b..(q + 1) * free_b]) {
                Some(f) => split.push(f),
                None => return,
            }
        }
        let mut total = 0.0;
        let mut powers = Vec::with_capacity(l);
        for p in 0..l {
            for q in 0..k {
                row_b[q] = split[q][p] * s.rats[q].total_bandwidth_hz;
            }
            let budget = s.mmts[p].max_power_w;
            let mut best_row = f64::NEG_INFINITY;
            let mut best_split = vec![0.0; k];
            for_each_point(&pw_axes[p], |free| {
                let Some(f) = complete(free) else { return };
                let mut rate = 0.0;
                for q in 0..k {
                    rate += term(s.rats[q].efficiency, s.channel.gain(p, q), row_b[q], f[q] * budget);
                }
                evaluations += 1;
                if rate > best_row {
                    best_row = rate;
                    best_split = f;
                }
            });
            total += best_row;
            powers.push(best_split);
        }
        if best.as_ref().is_none_or(|b| total > b.value) {
            best = Some(Pass {
                bw: split,
                pw: powers,
                value: total,
                evaluations: 0,
            });
        }
    });
    best.map(|mut b| {
        b.evaluations = evaluations;
        b
    })
}

fn grid_size(bw_axes: &[Vec<f64>], pw_axes: &[Vec<Vec<f64>>]) -> f64 {
    let bw: f64 = bw_axes.iter().map(|a| a.len() as f64).product();
    let pw: f64 = pw_axes
        .iter()
        .map(|axes| axes.iter().map(|a| a.len() as f64).product::<f64>())
        .sum();
    bw * pw
}

pub fn grid_search(s: &Scenario, cfg: &OracleConfig) -> Result<OracleResult> {
    let report = validate_scenario(s);
    if !report.is_valid() {
        return Err(Error::InvalidScenario(report.violations));
    }
    if cfg.points < 2 {
        return Err(Error::InvalidConfig(vec!["points >= 2".into()]));
    }
    let (l, k) = (s.num_mmts(), s.num_rats());
    let coarse = linspace(0.0, 1.0, cfg.points);
    let mut bw_axes = vec![coarse.clone(); k * (l - 1)];
    let mut pw_axes = vec![vec![coarse.clone(); k - 1]; l];
    let evaluations = grid_size(&bw_axes, &pw_axes);
    if evaluations > cfg.max_evaluations as f64 {
        return Err(Error::InvalidConfig(vec![format!(
            "oracle grid needs {evaluations:.3e} evaluations, above max_evaluations = {}",
            cfg.max_evaluations
        )]));
    }

    let step = 1.0 / (cfg.points - 1) as f64;
    let mut incumbent = search(s, &bw_axes, &pw_axes).expect("coarse grid contains the equal split");
    let mut total_evaluations = incumbent.evaluations;
    let free_b = l - 1;
    for _ in 0..cfg.refinements {
        let around = |v: f64| linspace((v - step).max(0.0), (v + step).min(1.0), cfg.points);
        for q in 0..k {
            for p in 0..free_b {
                bw_axes[q * free_b + p] = around(incumbent.bw[q][p]);
            }
        }
        for (p, axes) in pw_axes.iter_mut().enumerate() {
            for (q, axis) in axes.iter_mut().enumerate() {
                *axis = around(incumbent.pw[p][q]);
            }
        }
        // The refined grid may miss the incumbent itself; keep the better one.
        if let Some(refined) = search(s, &bw_axes, &pw_axes) {
            total_evaluations += refined.evaluations;
            if refined.value > incumbent.value {
                incumbent = refined;
            }
        }
    }

    let bandwidth = Matrix::from_fn(l, k, |p, q| incumbent.bw[q][p] * s.rats[q].total_bandwidth_hz);
    let power = Matrix::from_fn(l, k, |p, q| incumbent.pw[p][q] * s.mmts[p].max_power_w);
    Ok(OracleResult {
        allocation: Allocation { bandwidth, power },
        capacity_nats_per_s: incumbent.value,
        capacity_bps_per_hz: to_bps_per_hz(incumbent.value, s.total_bandwidth_hz()),
        evaluations: total_evaluations,
    })
}
