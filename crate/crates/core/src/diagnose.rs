//! Convergence-order report for the inner root finders.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::channel::FadingStream;
use crate::error::{Error, Result};
use crate::model::InnerMethod;
use crate::rootfind::{
    check_monotone_improvement, estimate_convergence_order, reference_root, solve_root, ConvergenceOrder, Direction,
    RootProblem, RootTrace, ScalarFunction,
};

/// Newton order at or above this counts as quadratic.
pub const NEWTON_ORDER_THRESHOLD: f64 = 1.7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnoseConfig {
    pub problems: usize,
    pub seed: u64,
    /// Starting points are drawn log-uniformly within this factor of the root.
    pub start_spread: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        DiagnoseConfig {
            problems: 10,
            seed: 1,
            start_spread: 10.0,
            tol: 1e-13,
            max_iters: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemOrder {
    pub problem: RootProblem,
    pub b0: f64,
    pub root: f64,
    pub steps: usize,
    pub order: Option<ConvergenceOrder>,
    pub note: Option<String>,
    /// Whether `|f|` never increased along the trace.
    pub abs_f_descends: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseReport {
    pub quadratic_sequence: ConvergenceOrder,
    pub linear_sequence: ConvergenceOrder,
    pub sqrt2_newton: ConvergenceOrder,
    pub newton: Vec<ProblemOrder>,
    pub modified_newton: Vec<ProblemOrder>,
    pub newton_at_threshold: usize,
}

/// `e_k = 2^(−2^k)` for `k = 0..=5`.
pub fn quadratic_sequence() -> Vec<f64> {
    (0..=5).map(|k| 2f64.powi(-(1 << k))).collect()
}

/// `e_k = 0.5^k` for `k = 0..=20`.
pub fn linear_sequence() -> Vec<f64> {
    (0..=20).map(|k| 0.5f64.powi(k)).collect()
}

struct SquareMinusTwo;

impl ScalarFunction for SquareMinusTwo {
    fn value(&self, x: f64) -> f64 {
        x * x - 2.0
    }

    fn derivative(&self, x: f64) -> f64 {
        2.0 * x
    }
}

/// Errors of plain Newton on `x² − 2` from `x0 = 2`, up to the first exact hit.
pub fn sqrt2_newton_errors() -> Vec<f64> {
    let mut x = 2.0f64;
    let mut errors = vec![x - std::f64::consts::SQRT_2];
    for _ in 0..8 {
        x -= SquareMinusTwo.value(x) / SquareMinusTwo.derivative(x);
        let e = (x - std::f64::consts::SQRT_2).abs();
        if e == 0.0 {
            break;
        }
        errors.push(e);
    }
    errors
}

/// Random bandwidth problems at the scale of the default experiment.
pub fn random_problems(count: usize, seed: u64) -> Vec<RootProblem> {
    let mut rng = FadingStream::new(seed);
    (0..count)
        .map(|_| RootProblem {
            beta: 0.5 + 0.5 * rng.next_uniform(),
            c: 10f64.powf(8.0 + 2.0 * rng.next_uniform()),
            power: 1e-3 + 0.019 * rng.next_uniform(),
            lambda: 0.1 + 2.9 * rng.next_uniform(),
        })
        .collect()
}

fn relative_errors(trace: &RootTrace, root: f64) -> Vec<f64> {
    trace
        .iterates
        .iter()
        .map(|b| (b - root).abs() / root)
        .take_while(|&e| e > 0.0)
        .collect()
}

fn measure(problem: RootProblem, b0: f64, method: InnerMethod, cfg: &DiagnoseConfig) -> Result<ProblemOrder> {
    let root = reference_root(&problem).ok_or(Error::NoInteriorRoot)?;
    let trace = match solve_root(&problem, b0, method, cfg.tol, cfg.max_iters) {
        Ok(t) => t,
        Err(Error::MaxIterations { trace, .. }) => *trace,
        Err(e) => return Err(e),
    };
    let abs_f: Vec<f64> = trace.f_values.iter().map(|v| v.abs()).collect();
    let (order, note) = match estimate_convergence_order(&relative_errors(&trace, root)) {
        Ok(o) => (Some(o), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(ProblemOrder {
        problem,
        b0,
        root,
        steps: trace.steps(),
        order,
        note,
        abs_f_descends: check_monotone_improvement(&abs_f, Direction::Descent),
    })
}

pub fn diagnose(cfg: &DiagnoseConfig) -> Result<DiagnoseReport> {
    let problems = random_problems(cfg.problems, cfg.seed);
    let mut starts = FadingStream::new(cfg.seed.wrapping_add(1));
    let mut newton = Vec::with_capacity(problems.len());
    let mut modified_newton = Vec::with_capacity(problems.len());
    for problem in problems {
        let root = reference_root(&problem).ok_or(Error::NoInteriorRoot)?;
        let b0 = root * cfg.start_spread.powf(2.0 * starts.next_uniform() - 1.0);
        newton.push(measure(problem, b0, InnerMethod::Newton, cfg)?);
        modified_newton.push(measure(problem, b0, InnerMethod::ModifiedNewton, cfg)?);
    }
    let newton_at_threshold = newton
        .iter()
        .filter(|p| p.order.is_some_and(|o| o.order >= NEWTON_ORDER_THRESHOLD))
        .count();
    Ok(DiagnoseReport {
        quadratic_sequence: estimate_convergence_order(&quadratic_sequence())?,
        linear_sequence: estimate_convergence_order(&linear_sequence())?,
        sqrt2_newton: estimate_convergence_order(&sqrt2_newton_errors())?,
        newton,
        modified_newton,
        newton_at_threshold,
    })
}

fn order_cell(p: &ProblemOrder) -> String {
    p.order.map_or_else(|| "n/a".into(), |o| format!("{:.3}", o.order))
}

impl DiagnoseReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "synthetic 2^(-2^k): order {:.4}, rate {:.4}", self.quadratic_sequence.order, self.quadratic_sequence.rate);
        let _ = writeln!(out, "synthetic 0.5^k:    order {:.4}, rate {:.4}", self.linear_sequence.order, self.linear_sequence.rate);
        let _ = writeln!(out, "newton on x^2 - 2:  order {:.4}", self.sqrt2_newton.order);
        let _ = writeln!(out);
        let _ = writeln!(out, "  # {:>14} {:>14} {:>7} {:>7} {:>14} {:>7}", "root_hz", "b0_hz", "newton", "steps", "modified", "steps");
        for (i, (n, m)) in self.newton.iter().zip(&self.modified_newton).enumerate() {
            let _ = writeln!(
                out,
                "{:>3} {:>14.6e} {:>14.6e} {:>7} {:>7} {:>14} {:>7}",
                i + 1,
                n.root,
                n.b0,
                order_cell(n),
                n.steps,
                order_cell(m),
                m.steps
            );
        }
        let _ = writeln!(
            out,
            "\nnewton order >= {NEWTON_ORDER_THRESHOLD} on {} of {} problems",
            self.newton_at_threshold,
            self.newton.len()
        );
        let descending = self.newton.iter().filter(|p| p.abs_f_descends).count();
        let _ = writeln!(out, "newton |f| non-increasing on {descending} of {} traces", self.newton.len());
        out
    }
}
