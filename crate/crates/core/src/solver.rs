//! Dual-decomposition solver for the joint bandwidth and power problem, and
//! the switched (one RAT per terminal) baseline.
//!
//! Each outer iteration runs four steps:
//!
//! 1. For every active pair, solve the bandwidth equation `f(b) = 0` at the
//!    current power and bandwidth price. Columns that overspend `B_q` are
//!    scaled back onto the budget.
//! 2. Recover power from bandwidth with `p = b [β/μ − 1/c]⁺`. A terminal
//!    whose row overspends `P_p` is projected by waterfilling.
//! 3. Take a projected subgradient step on both price families.
//! 4. Record the iteration and test for convergence.
//!
//! Price steps are relative: the normalized subgradient (violation over
//! budget, clipped to `[−1, 1]`) is multiplied by `ξ` and the current price.
//! Bandwidth prices live near unity but power prices scale with `c`, which
//! spans many decades across terminals, so a single absolute `ξ` cannot
//! serve both. Subgradients use the pre-projection sums.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::capacity::{self, bandwidth_marginal, KktReport};
use crate::error::{Error, Result};
use crate::model::{
    validate_scenario, Allocation, DualPrices, InnerMethod, Matrix, Scenario, SolverConfig,
};
use crate::rootfind::{self, RootProblem, RootTrace};

/// Bandwidth a revived pair restarts from, as a fraction of its equal share.
const REVIVE_FRACTION: f64 = 1e-3;

/// `p = b [β/μ − 1/c]⁺`.
pub fn power_from_bandwidth(b: f64, beta: f64, c: f64, mu: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::UninitializedPrice(mu));
    }
    if c <= 0.0 || b <= 0.0 {
        return Ok(0.0);
    }
    Ok(b * (beta / mu - 1.0 / c).max(0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waterfill {
    pub powers: Vec<f64>,
    /// Common level `n` shared by the powered channels; `None` when no
    /// channel can carry power.
    pub level: Option<f64>,
}

/// Classic waterfilling: `p_q = b_q [n − 1/c_q]⁺` with `Σ p_q = budget`.
pub fn waterfill(b_row: &[f64], c_row: &[f64], budget: f64, b_floor: f64) -> Waterfill {
    let ones = vec![1.0; b_row.len()];
    waterfill_weighted(b_row, c_row, &ones, budget, b_floor)
}

/// Waterfilling with per-RAT efficiencies: `p_q = b_q [β_q n − 1/c_q]⁺`.
///
/// At `n = 1/μ` this is the coupling rule, so the two agree at a fixed point
/// whatever the efficiencies are. With all `β_q = 1` it is [`waterfill`].
pub fn waterfill_weighted(b_row: &[f64], c_row: &[f64], betas: &[f64], budget: f64, b_floor: f64) -> Waterfill {
    let mut powers = vec![0.0; b_row.len()];
    let mut active: Vec<usize> = (0..b_row.len())
        .filter(|&q| b_row[q] > b_floor && c_row[q] > 0.0 && betas[q] > 0.0)
        .collect();
    if active.is_empty() || !(budget > 0.0) {
        return Waterfill { powers, level: None };
    }
    let threshold = |q: usize| 1.0 / (betas[q] * c_row[q]);
    active.sort_by(|&a, &b| threshold(a).total_cmp(&threshold(b)));

    let mut sum_inv = 0.0;
    let mut sum_beta = 0.0;
    let mut level = f64::NAN;
    let mut used = 0;
    // Grow the powered set in order of threshold until the next channel
    // would sit above the water.
    for (i, &q) in active.iter().enumerate() {
        let candidate_inv = sum_inv + b_row[q] / c_row[q];
        let candidate_beta = sum_beta + b_row[q] * betas[q];
        let n = (budget + candidate_inv) / candidate_beta;
        if i > 0 && n <= threshold(q) {
            break;
        }
        sum_inv = candidate_inv;
        sum_beta = candidate_beta;
        level = n;
        used = i + 1;
    }
    for &q in &active[..used] {
        powers[q] = b_row[q] * (betas[q] * level - 1.0 / c_row[q]).max(0.0);
    }
    Waterfill {
        powers,
        level: Some(level),
    }
}

/// `μ' = max(floor, μ + ξ (Σ_q p_pq − P_p))`.
pub fn update_mu(mu: f64, xi: f64, power_sum: f64, budget: f64, floor: f64) -> f64 {
    (mu + xi * (power_sum - budget)).max(0.0).max(floor)
}

/// `λ' = max(floor, λ + ξ (Σ_p b_pq − B_q))`.
pub fn update_lambda(lambda: f64, xi: f64, bw_sum: f64, budget: f64, floor: f64) -> f64 {
    (lambda + xi * (bw_sum - budget)).max(0.0).max(floor)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Parallel,
    Switched,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Parallel => "parallel",
            Mode::Switched => "switched",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parallel" => Ok(Mode::Parallel),
            "switched" => Ok(Mode::Switched),
            other => Err(Error::Malformed(format!("unknown mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outer-loop history. Violations are relative to the budgets and measured
/// before projection.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub capacity: Vec<f64>,
    pub lambda: Vec<Vec<f64>>,
    pub mu: Vec<Vec<f64>>,
    pub bw_violation: Vec<f64>,
    pub pw_violation: Vec<f64>,
    pub kkt_residual: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl SolveTrace {
    pub fn len(&self) -> usize {
        self.capacity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.capacity.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveMetadata {
    pub seed: u64,
    pub config_hash: String,
    pub method: InnerMethod,
    pub mode: Mode,
    pub wall_ms: f64,
}

/// Inner solve of one pair in the final iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairTrace {
    pub mmt: usize,
    pub rat: usize,
    pub trace: RootTrace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub allocation: Allocation,
    pub prices: DualPrices,
    pub trace: SolveTrace,
    pub capacity_nats_per_s: f64,
    pub capacity_bps_per_hz: f64,
    pub kkt: KktReport,
    pub metadata: SolveMetadata,
    #[serde(skip)]
    pub root_traces: Vec<PairTrace>,
}

impl SolveResult {
    pub fn converged(&self) -> bool {
        self.trace.converged
    }

    pub fn support_sizes(&self) -> Vec<usize> {
        self.allocation.support_sizes()
    }
}

/// Consistency of a power matrix with the coupling rule and a shared water
/// level, both in power-budget units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingCheck {
    /// `max |p − b [β/μ − 1/c]⁺| / (P_p (1 + p/P_p))` over pairs with bandwidth.
    pub coupling_error: f64,
    /// Largest relative spread of `p/(β b) + 1/(β c)` among one terminal's powered pairs.
    pub level_spread: f64,
}

pub fn coupling_check(s: &Scenario, a: &Allocation, d: &DualPrices, b_floor: f64) -> CouplingCheck {
    let mut coupling_error: f64 = 0.0;
    let mut level_spread: f64 = 0.0;
    for p in 0..s.num_mmts() {
        let budget = s.mmts[p].max_power_w;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for q in 0..s.num_rats() {
            let beta = s.rats[q].efficiency;
            let c = s.channel.gain(p, q);
            let (b, pw) = (a.bandwidth.get(p, q), a.power.get(p, q));
            if b <= b_floor || c <= 0.0 {
                continue;
            }
            let implied = if d.mu[p] > 0.0 { b * (beta / d.mu[p] - 1.0 / c).max(0.0) } else { f64::INFINITY };
            let rel = pw / budget;
            coupling_error = coupling_error.max((rel - implied / budget).abs() / (1.0 + rel));
            if pw > 0.0 {
                let level = (pw / b + 1.0 / c) / beta;
                lo = lo.min(level);
                hi = hi.max(level);
            }
        }
        if hi >= lo {
            level_spread = level_spread.max((hi - lo) / hi);
        }
    }
    CouplingCheck {
        coupling_error,
        level_spread,
    }
}

struct Workspace {
    b: Matrix,
    p: Matrix,
    lambda: Vec<f64>,
    mu: Vec<f64>,
}

/// Which pairs may carry traffic, and how many share each RAT.
struct Support {
    active: Vec<Vec<bool>>,
    per_rat: Vec<usize>,
    per_mmt: Vec<usize>,
}

impl Support {
    fn of(s: &Scenario) -> Self {
        let (l, k) = (s.num_mmts(), s.num_rats());
        let active: Vec<Vec<bool>> = (0..l)
            .map(|p| (0..k).map(|q| s.channel.gain(p, q) > 0.0 && s.rats[q].efficiency > 0.0).collect())
            .collect();
        let per_rat = (0..k).map(|q| (0..l).filter(|&p| active[p][q]).count()).collect();
        let per_mmt = active.iter().map(|row| row.iter().filter(|&&x| x).count()).collect();
        Support {
            active,
            per_rat,
            per_mmt,
        }
    }

    fn share(&self, s: &Scenario, q: usize) -> f64 {
        s.rats[q].total_bandwidth_hz / self.per_rat[q].max(1) as f64
    }
}

/// Starting point: equal bandwidth shares, equal power split, and the prices
/// each terminal would see if it owned its equal shares alone.
///
/// For terminal `p` holding `b_q = B_q / n_q` on its active RATs, the
/// single-user optimum is the waterfilling solution with level `n_p`, so
/// `μ_p = 1/n_p`, and `λ_q = max_p β_q g(c_pq p_pq / b_q)` with
/// `g(x) = ln(1+x) − x/(1+x)` over the pairs that receive power.
fn initialize(s: &Scenario, support: &Support, cfg: &SolverConfig, b_floor: f64) -> Workspace {
    let (l, k) = (s.num_mmts(), s.num_rats());
    let betas = s.betas();
    let mut b = Matrix::zeros(l, k);
    let mut p = Matrix::zeros(l, k);
    let mut mu = vec![1.0; l];
    let mut lambda = vec![0.0f64; k];
    for m in 0..l {
        for q in 0..k {
            if support.active[m][q] {
                b.set(m, q, support.share(s, q));
                p.set(m, q, s.mmts[m].max_power_w / support.per_mmt[m] as f64);
            }
        }
        let wf = waterfill_weighted(b.row(m), s.channel.gains().row(m), &betas, s.mmts[m].max_power_w, b_floor);
        if support.per_mmt[m] == 0 {
            mu[m] = cfg.price_floor;
        }
        if let Some(level) = wf.level {
            mu[m] = 1.0 / level;
            for q in 0..k {
                if wf.powers[q] > 0.0 {
                    let x = s.channel.gain(m, q) * wf.powers[q] / b.get(m, q);
                    lambda[q] = lambda[q].max(betas[q] * bandwidth_marginal(x));
                }
            }
        }
    }
    let fallback = lambda.iter().copied().filter(|&x| x > 0.0).fold(f64::INFINITY, f64::min);
    let fallback = if fallback.is_finite() { fallback } else { 1.0 };
    for x in &mut lambda {
        if *x <= 0.0 {
            *x = fallback;
        }
        *x = x.max(cfg.price_floor);
    }
    Workspace { b, p, lambda, mu }
}

fn relative_violation(sum: f64, budget: f64) -> f64 {
    ((sum - budget) / budget).max(0.0)
}

struct Outcome {
    allocation: Allocation,
    prices: DualPrices,
    trace: SolveTrace,
    kkt: KktReport,
    root_traces: Vec<PairTrace>,
}

fn run_dual_loop(s: &Scenario, cfg: &SolverConfig) -> Result<Outcome> {
    let (l, k) = (s.num_mmts(), s.num_rats());
    let b_floor = s.b_floor(cfg.b_floor_rel);
    let betas = s.betas();
    let support = Support::of(s);
    let mut ws = initialize(s, &support, cfg, b_floor);
    let mut trace = SolveTrace::default();
    let mut root_traces = Vec::new();
    let mut last_kkt = None;

    let mut next_b = Matrix::zeros(l, k);
    let mut p14 = Matrix::zeros(l, k);

    for n in 0..cfg.max_outer_iters {
        // (i) bandwidth from the per-pair root, at the current power and λ.
        root_traces.clear();
        for m in 0..l {
            for q in 0..k {
                let mut value = 0.0;
                if support.active[m][q] {
                    let beta = betas[q];
                    let c = s.channel.gain(m, q);
                    let power = ws.p.get(m, q);
                    let problem = RootProblem {
                        beta,
                        c,
                        power,
                        lambda: ws.lambda[q],
                    };
                    // Profit of the pair along the coupling ray at the
                    // current prices; positive means it should grow.
                    let (profit, _) =
                        capacity::pair_stationarity(beta, c, 0.0, 0.0, ws.lambda[q], ws.mu[m], b_floor);
                    let prev = ws.b.get(m, q);
                    let revive = REVIVE_FRACTION * support.share(s, q);
                    let fading = profit < 0.0 && prev <= revive;
                    if problem.has_interior_root() && !fading {
                        let b0 = if prev > b_floor { prev } else { support.share(s, q) };
                        match rootfind::solve_with(&problem, b0, cfg) {
                            Ok((root, rt)) => {
                                value = root;
                                root_traces.push(PairTrace { mmt: m, rat: q, trace: rt });
                            }
                            Err(Error::NoInteriorRoot) => {}
                            Err(e) => return Err(e),
                        }
                    } else if profit > 0.0 {
                        value = revive;
                    }
                }
                next_b.set(m, q, if value > b_floor { value } else { 0.0 });
            }
        }
        let raw_bw: Vec<f64> = (0..k).map(|q| next_b.col_sum(q)).collect();
        for (q, &sum) in raw_bw.iter().enumerate() {
            let budget = s.rats[q].total_bandwidth_hz;
            if sum > budget {
                let scale = budget / sum;
                for m in 0..l {
                    next_b.set(m, q, next_b.get(m, q) * scale);
                }
            }
        }
        std::mem::swap(&mut ws.b, &mut next_b);

        // (ii) power from the coupling rule, waterfilled when a row overspends.
        let mut raw_pw = vec![0.0; l];
        for m in 0..l {
            for q in 0..k {
                let v = power_from_bandwidth(ws.b.get(m, q), betas[q], s.channel.gain(m, q), ws.mu[m])?;
                p14.set(m, q, v);
            }
            raw_pw[m] = p14.row_sum(m);
            let budget = s.mmts[m].max_power_w;
            if raw_pw[m] > budget {
                let wf = waterfill_weighted(ws.b.row(m), s.channel.gains().row(m), &betas, budget, b_floor);
                ws.p.row_mut(m).copy_from_slice(&wf.powers);
            } else {
                ws.p.row_mut(m).copy_from_slice(p14.row(m));
            }
        }

        // (iv) record and test against the prices that produced this iterate.
        let alloc = Allocation {
            bandwidth: ws.b.clone(),
            power: ws.p.clone(),
        };
        let prices = DualPrices {
            lambda: ws.lambda.clone(),
            mu: ws.mu.clone(),
        };
        let kkt = capacity::kkt_residuals(s, &alloc, &prices, b_floor)?;
        let cap = capacity::total_capacity_with_floor(s, &alloc, b_floor)?.nats_per_s;
        let bw_violation = raw_bw
            .iter()
            .zip(&s.rats)
            .map(|(&sum, r)| relative_violation(sum, r.total_bandwidth_hz))
            .fold(0.0, f64::max);
        let pw_violation = (0..l)
            .filter(|&m| support.per_mmt[m] > 0)
            .map(|m| relative_violation(raw_pw[m], s.mmts[m].max_power_w))
            .fold(0.0, f64::max);
        trace.capacity.push(cap);
        trace.lambda.push(prices.lambda.clone());
        trace.mu.push(prices.mu.clone());
        trace.bw_violation.push(bw_violation);
        trace.pw_violation.push(pw_violation);
        trace.kkt_residual.push(kkt.residual_norm);
        trace.iterations = n + 1;

        let coupling = coupling_check(s, &alloc, &prices, b_floor);
        let done = kkt.residual_norm <= cfg.kkt_tol
            && kkt.dual_infeasibility <= cfg.kkt_tol
            && bw_violation <= cfg.feas_tol
            && pw_violation <= cfg.feas_tol
            && coupling.coupling_error <= cfg.consistency_tol
            && coupling.level_spread <= cfg.consistency_tol;
        last_kkt = Some(kkt);
        if done {
            trace.converged = true;
            break;
        }

        // (iii) relative projected subgradient steps.
        let xi = if cfg.diminishing_step {
            cfg.step_size / ((n + 1) as f64).sqrt()
        } else {
            cfg.step_size
        };
        for q in 0..k {
            let budget = s.rats[q].total_bandwidth_hz;
            let g = ((raw_bw[q] - budget) / budget).clamp(-1.0, 1.0);
            let lam = ws.lambda[q];
            ws.lambda[q] = update_lambda(lam, xi * lam / budget, budget * (1.0 + g), budget, cfg.price_floor);
        }
        for m in 0..l {
            if support.per_mmt[m] == 0 {
                continue;
            }
            let budget = s.mmts[m].max_power_w;
            let g = ((raw_pw[m] - budget) / budget).clamp(-1.0, 1.0);
            let mu = ws.mu[m];
            ws.mu[m] = update_mu(mu, xi * mu / budget, budget * (1.0 + g), budget, cfg.price_floor);
        }
    }

    let prices = DualPrices {
        lambda: trace.lambda.last().cloned().unwrap_or_else(|| ws.lambda.clone()),
        mu: trace.mu.last().cloned().unwrap_or_else(|| ws.mu.clone()),
    };
    let allocation = finalize(s, ws.b, ws.p, b_floor);
    let kkt = match last_kkt {
        Some(_) => capacity::kkt_residuals(s, &allocation, &prices, b_floor)?,
        None => unreachable!("max_outer_iters >= 1 is validated"),
    };
    Ok(Outcome {
        allocation,
        prices,
        trace,
        kkt,
        root_traces,
    })
}

/// Snaps sub-floor bandwidth to zero and scales each budget back to feasibility.
fn finalize(s: &Scenario, mut b: Matrix, mut p: Matrix, b_floor: f64) -> Allocation {
    let (l, k) = (s.num_mmts(), s.num_rats());
    for m in 0..l {
        for q in 0..k {
            if b.get(m, q) <= b_floor {
                b.set(m, q, 0.0);
                p.set(m, q, 0.0);
            }
        }
    }
    for q in 0..k {
        let sum = b.col_sum(q);
        let budget = s.rats[q].total_bandwidth_hz;
        if sum > budget {
            let scale = budget / sum;
            for m in 0..l {
                b.set(m, q, b.get(m, q) * scale);
            }
        }
    }
    for m in 0..l {
        let sum = p.row_sum(m);
        let budget = s.mmts[m].max_power_w;
        if sum > budget {
            let scale = budget / sum;
            p.row_mut(m).iter_mut().for_each(|x| *x *= scale);
        }
    }
    Allocation {
        bandwidth: b,
        power: p,
    }
}

fn check_inputs(s: &Scenario, cfg: &SolverConfig) -> Result<()> {
    let report = validate_scenario(s);
    if !report.is_valid() {
        return Err(Error::InvalidScenario(report.violations));
    }
    let bad = cfg.violations();
    if !bad.is_empty() {
        return Err(Error::InvalidConfig(bad));
    }
    Ok(())
}

fn package(s: &Scenario, cfg: &SolverConfig, mode: Mode, out: Outcome, started: Instant) -> Result<SolveResult> {
    let cap = capacity::total_capacity_with_floor(s, &out.allocation, s.b_floor(cfg.b_floor_rel))?;
    Ok(SolveResult {
        allocation: out.allocation,
        prices: out.prices,
        trace: out.trace,
        capacity_nats_per_s: cap.nats_per_s,
        capacity_bps_per_hz: cap.bps_per_hz,
        kkt: out.kkt,
        metadata: SolveMetadata {
            seed: s.seed,
            config_hash: cfg.hash(),
            method: cfg.inner_method,
            mode,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        },
        root_traces: out.root_traces,
    })
}

/// Joint allocation where every terminal may use every RAT at once.
///
/// Non-convergence is reported through `trace.converged`; the returned
/// allocation is feasible either way.
pub fn solve_parallel(s: &Scenario, cfg: &SolverConfig) -> Result<SolveResult> {
    let started = Instant::now();
    check_inputs(s, cfg)?;
    let out = run_dual_loop(s, cfg)?;
    package(s, cfg, Mode::Parallel, out, started)
}

/// Greedy one-RAT-per-terminal assignment in ascending terminal order.
///
/// Terminal `p` picks the RAT maximizing `β_q (B_q/ℓ_q) ln(1 + c_pq P_p ℓ_q / B_q)`
/// where `ℓ_q` counts the terminals already on `q` plus itself. Ties go to the
/// lowest RAT index.
pub fn switched_assignment(s: &Scenario) -> Vec<usize> {
    let k = s.num_rats();
    let mut load = vec![0usize; k];
    let mut choice = Vec::with_capacity(s.num_mmts());
    for p in 0..s.num_mmts() {
        let mut best = 0;
        let mut best_value = f64::NEG_INFINITY;
        for q in 0..k {
            let share = (load[q] + 1) as f64;
            let bw = s.rats[q].total_bandwidth_hz / share;
            let value =
                s.rats[q].efficiency * bw * (s.channel.gain(p, q) * s.mmts[p].max_power_w / bw).ln_1p();
            if value > best_value {
                best = q;
                best_value = value;
            }
        }
        load[best] += 1;
        choice.push(best);
    }
    choice
}

/// Switched baseline: each terminal spends its whole budget on the single RAT
/// chosen by [`switched_assignment`], and bandwidth inside each RAT is split
/// optimally by the same dual loop restricted to the assigned pairs.
pub fn solve_switched(s: &Scenario, cfg: &SolverConfig) -> Result<SolveResult> {
    let started = Instant::now();
    check_inputs(s, cfg)?;
    let choice = switched_assignment(s);
    let restricted = s.masked(|p, q| choice[p] == q);
    let out = run_dual_loop(&restricted, cfg)?;
    package(&restricted, cfg, Mode::Switched, out, started).map(|mut r| {
        r.metadata.seed = s.seed;
        r
    })
}

pub fn solve(s: &Scenario, cfg: &SolverConfig, mode: Mode) -> Result<SolveResult> {
    match mode {
        Mode::Parallel => solve_parallel(s, cfg),
        Mode::Switched => solve_switched(s, cfg),
    }
}
