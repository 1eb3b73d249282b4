//! Sum-capacity objective, Lagrangian and KKT residuals.
//!
//! A pair contributes `β b ln(1 + c p / b)` nats/s. Terms with `b` at or below
//! the bandwidth floor contribute exactly zero, which is the continuous
//! extension of the perspective function at `b = 0`.
//!
//! Residual normalization: report fields hold the raw left-hand sides. The
//! scalar `residual_norm` is measured on the unit-normalized instance, with
//! bandwidth in units of the total system bandwidth and each terminal's power
//! in units of its own budget. In those units every product term (a rate)
//! is divided by `Σ_q B_q` and power stationarity is scaled by `P_p / Σ_q B_q`.
//! Bandwidth stationarity is already per Hz and is left as is.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Allocation, DualPrices, Matrix, Scenario};

/// Rate of one terminal across its RATs, in nats/s.
pub fn user_rate(b_row: &[f64], p_row: &[f64], c_row: &[f64], betas: &[f64], b_floor: f64) -> Result<f64> {
    let k = betas.len();
    if b_row.len() != k || p_row.len() != k || c_row.len() != k {
        return Err(Error::Malformed("user_rate vectors must share length K".into()));
    }
    let mut rate = 0.0;
    for q in 0..k {
        let (b, p) = (b_row[q], p_row[q]);
        if b < 0.0 || p < 0.0 || b.is_nan() || p.is_nan() {
            return Err(Error::InvalidAllocation(format!("negative entry at RAT {q}")));
        }
        if b > b_floor {
            rate += betas[q] * b * (c_row[q] * p / b).ln_1p();
        }
    }
    Ok(rate)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Capacity {
    pub nats_per_s: f64,
    pub bps_per_hz: f64,
}

/// Converts a rate in nats/s into bits/s per Hz of total system bandwidth.
pub fn to_bps_per_hz(nats_per_s: f64, total_bandwidth_hz: f64) -> f64 {
    nats_per_s / (LN_2 * total_bandwidth_hz)
}

fn check_shapes(s: &Scenario, a: &Allocation) -> Result<()> {
    let expected = (s.num_mmts(), s.num_rats());
    for (what, m) in [("bandwidth", &a.bandwidth), ("power", &a.power), ("channel", s.channel.gains())] {
        if m.shape() != expected {
            return Err(Error::ShapeMismatch {
                what,
                expected,
                found: m.shape(),
            });
        }
    }
    Ok(())
}

pub fn total_capacity_with_floor(s: &Scenario, a: &Allocation, b_floor: f64) -> Result<Capacity> {
    check_shapes(s, a)?;
    let betas = s.betas();
    let mut total = 0.0;
    for p in 0..s.num_mmts() {
        total += user_rate(
            a.bandwidth.row(p),
            a.power.row(p),
            s.channel.gains().row(p),
            &betas,
            b_floor,
        )?;
    }
    Ok(Capacity {
        nats_per_s: total,
        bps_per_hz: to_bps_per_hz(total, s.total_bandwidth_hz()),
    })
}

pub fn total_capacity(s: &Scenario, a: &Allocation) -> Result<Capacity> {
    total_capacity_with_floor(s, a, s.default_b_floor())
}

fn check_prices(s: &Scenario, d: &DualPrices) -> Result<()> {
    if d.lambda.len() != s.num_rats() || d.mu.len() != s.num_mmts() {
        return Err(Error::ShapeMismatch {
            what: "prices",
            expected: (s.num_rats(), s.num_mmts()),
            found: (d.lambda.len(), d.mu.len()),
        });
    }
    Ok(())
}

/// Lagrangian: objective plus priced budget slacks.
pub fn lagrangian(s: &Scenario, a: &Allocation, d: &DualPrices, b_floor: f64) -> Result<f64> {
    check_prices(s, d)?;
    let mut value = total_capacity_with_floor(s, a, b_floor)?.nats_per_s;
    for (q, rat) in s.rats.iter().enumerate() {
        value += d.lambda[q] * (rat.total_bandwidth_hz - a.bandwidth.col_sum(q));
    }
    for (p, mmt) in s.mmts.iter().enumerate() {
        value += d.mu[p] * (mmt.max_power_w - a.power.row_sum(p));
    }
    Ok(value)
}

/// `ln(1 + x) − x/(1 + x)`: the bandwidth marginal per unit efficiency at SNR `x`.
#[inline]
pub fn bandwidth_marginal(x: f64) -> f64 {
    x.ln_1p() - x / (1.0 + x)
}

/// Stationarity values `(∂L/∂b, ∂L/∂p)` for one pair.
///
/// A pair at or below the bandwidth floor is evaluated in the limit `b → 0`
/// along the ray `p = s·b` with `s = [β/μ − 1/c]⁺`. On that ray `∂L/∂b` equals
/// the best per-Hz profit the pair could make at the current prices, so a
/// positive value flags a pair that should be switched on. With `s = 0` the
/// limits reduce to `(−λ, βc − μ)`.
pub fn pair_stationarity(beta: f64, c: f64, b: f64, p: f64, lambda: f64, mu: f64, b_floor: f64) -> (f64, f64) {
    if b > b_floor {
        let x = c * p / b;
        (beta * bandwidth_marginal(x) - lambda, beta * c / (1.0 + x) - mu)
    } else {
        let ray = if mu > 0.0 && c > 0.0 {
            (beta / mu - 1.0 / c).max(0.0)
        } else {
            0.0
        };
        let x = c * ray;
        (beta * bandwidth_marginal(x) - lambda, beta * c / (1.0 + x) - mu)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub stationarity_b: Matrix,
    pub stationarity_p: Matrix,
    pub comp_slack_b: Matrix,
    pub comp_slack_p: Matrix,
    pub comp_slack_lambda: Vec<f64>,
    pub comp_slack_mu: Vec<f64>,
    /// Max-norm over normalized complementarity entries and the stationarity
    /// entries of strictly positive variables.
    pub residual_norm: f64,
    /// Largest positive stationarity entry among zero variables (normalized).
    /// Zero when every inactive pair is unprofitable at the given prices.
    pub dual_infeasibility: f64,
}

pub fn kkt_residuals(s: &Scenario, a: &Allocation, d: &DualPrices, b_floor: f64) -> Result<KktReport> {
    check_shapes(s, a)?;
    check_prices(s, d)?;
    let (l, k) = (s.num_mmts(), s.num_rats());
    let b_ref = s.total_bandwidth_hz();
    let mut stationarity_b = Matrix::zeros(l, k);
    let mut stationarity_p = Matrix::zeros(l, k);
    let mut comp_slack_b = Matrix::zeros(l, k);
    let mut comp_slack_p = Matrix::zeros(l, k);
    let mut residual: f64 = 0.0;
    let mut infeasibility: f64 = 0.0;

    for p in 0..l {
        let p_unit = s.mmts[p].max_power_w / b_ref;
        for q in 0..k {
            let beta = s.rats[q].efficiency;
            let c = s.channel.gain(p, q);
            let (bw, pw) = (a.bandwidth.get(p, q), a.power.get(p, q));
            let (sb, sp) = pair_stationarity(beta, c, bw, pw, d.lambda[q], d.mu[p], b_floor);
            stationarity_b.set(p, q, sb);
            stationarity_p.set(p, q, sp);
            comp_slack_b.set(p, q, bw * sb);
            comp_slack_p.set(p, q, pw * sp);

            residual = residual
                .max((bw * sb / b_ref).abs())
                .max((pw * sp / b_ref).abs());
            if bw > b_floor {
                residual = residual.max(sb.abs());
            } else {
                infeasibility = infeasibility.max(sb);
            }
            if pw > 0.0 {
                residual = residual.max((sp * p_unit).abs());
            } else {
                infeasibility = infeasibility.max(sp * p_unit);
            }
        }
    }

    let comp_slack_lambda: Vec<f64> = (0..k)
        .map(|q| d.lambda[q] * (s.rats[q].total_bandwidth_hz - a.bandwidth.col_sum(q)))
        .collect();
    let comp_slack_mu: Vec<f64> = (0..l)
        .map(|p| d.mu[p] * (s.mmts[p].max_power_w - a.power.row_sum(p)))
        .collect();
    for v in comp_slack_lambda.iter().chain(&comp_slack_mu) {
        residual = residual.max((v / b_ref).abs());
    }

    Ok(KktReport {
        stationarity_b,
        stationarity_p,
        comp_slack_b,
        comp_slack_p,
        comp_slack_lambda,
        comp_slack_mu,
        residual_norm: residual,
        dual_infeasibility: infeasibility.max(0.0),
    })
}
