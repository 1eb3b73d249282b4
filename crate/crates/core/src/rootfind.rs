//! Scalar root finding for the per-pair bandwidth equation, plus convergence
//! diagnostics for iterative sequences.
//!
//! For fixed power `p` and bandwidth price `λ`, the bandwidth stationarity
//! function is
//!
//! ```text
//! f(b)  = β ln(1 + cp/b) − β cp/(b + cp) − λ
//! f'(b) = −β (cp)² / (b (b + cp)²)
//! ```
//!
//! `f` falls from `+∞` at `b → 0⁺` to `−λ` as `b → ∞`, so a unique positive
//! root exists whenever `λ > 0` and `cp > 0`.
//!
//! All three methods run inside a sign-change bracket `[lo, hi]`. Any update
//! that leaves the bracket is replaced by the bracket midpoint, so every
//! iterate stays in the initial bracket.

use serde::{Deserialize, Serialize};

use crate::capacity::bandwidth_marginal;
use crate::error::{Error, Result};
use crate::model::{InnerMethod, SolverConfig};

/// Geometric bracket expansion factor and cap.
const BRACKET_FACTOR: f64 = 10.0;
const BRACKET_STEPS: usize = 60;
/// Bracket width, relative to `1 + b`, at which the root counts as located.
const BRACKET_REL_WIDTH: f64 = 1e-12;

/// A differentiable scalar function on `(0, ∞)`.
pub trait ScalarFunction {
    fn value(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;
}

/// One (terminal, RAT) bandwidth subproblem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootProblem {
    pub beta: f64,
    pub c: f64,
    pub power: f64,
    pub lambda: f64,
}

impl RootProblem {
    pub fn has_interior_root(&self) -> bool {
        self.lambda > 0.0 && self.beta > 0.0 && self.c * self.power > 0.0
    }
}

impl ScalarFunction for RootProblem {
    fn value(&self, b: f64) -> f64 {
        self.beta * bandwidth_marginal(self.c * self.power / b) - self.lambda
    }

    fn derivative(&self, b: f64) -> f64 {
        let cp = self.c * self.power;
        let s = b + cp;
        -self.beta * cp * cp / (b * s * s)
    }
}

pub fn f_eval(rp: &RootProblem, b: f64) -> Result<f64> {
    if !(b > 0.0) {
        return Err(Error::Domain(b));
    }
    Ok(rp.value(b))
}

pub fn f_prime_eval(rp: &RootProblem, b: f64) -> Result<f64> {
    if !(b > 0.0) {
        return Err(Error::Domain(b));
    }
    Ok(rp.derivative(b))
}

/// The derivative in the form `(cp/(b+cp)) (β/(b+cp) − 1/b)`. It agrees with
/// [`f_prime_eval`] only at `β = 1`; kept for comparison.
pub fn f_prime_printed(rp: &RootProblem, b: f64) -> Result<f64> {
    if !(b > 0.0) {
        return Err(Error::Domain(b));
    }
    let cp = rp.c * rp.power;
    Ok(cp / (b + cp) * (rp.beta / (b + cp) - 1.0 / b))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootTrace {
    pub method: InnerMethod,
    pub iterates: Vec<f64>,
    pub f_values: Vec<f64>,
    pub converged: bool,
    /// Initial sign-change bracket.
    pub bracket: (f64, f64),
}

impl RootTrace {
    pub fn steps(&self) -> usize {
        self.iterates.len().saturating_sub(1)
    }

    pub fn root(&self) -> f64 {
        *self.iterates.last().expect("trace holds b0")
    }
}

/// Finds `lo < hi` with opposite signs of `f`, starting from `b0` and moving
/// geometrically in the direction the local slope points to.
fn find_bracket<F: ScalarFunction>(f: &F, b0: f64, f0: f64) -> Option<(f64, f64)> {
    let slope = f.derivative(b0);
    let go_up = if slope != 0.0 && slope.is_finite() { -f0 / slope > 0.0 } else { f0 > 0.0 };
    let mut near = b0;
    for _ in 0..BRACKET_STEPS {
        let far = if go_up { near * BRACKET_FACTOR } else { near / BRACKET_FACTOR };
        let ff = f.value(far);
        if ff == 0.0 || (ff.signum() != f0.signum() && ff.is_finite()) {
            return Some(if go_up { (near, far) } else { (far, near) });
        }
        near = far;
    }
    None
}

/// Safeguarded scalar solve of `f(b) = 0` on `b > 0`.
///
/// The chord update reuses `f'(b0)` throughout. A chord step that fails to
/// halve `|f|` is followed by a bisection step, which bounds the work when
/// the frozen slope is a poor fit.
pub fn solve_root<F: ScalarFunction>(
    f: &F,
    b0: f64,
    method: InnerMethod,
    tol: f64,
    max_iters: usize,
) -> Result<RootTrace> {
    if !(b0 > 0.0) || !b0.is_finite() {
        return Err(Error::Domain(b0));
    }
    let f0 = f.value(b0);
    let mut trace = RootTrace {
        method,
        iterates: vec![b0],
        f_values: vec![f0],
        converged: false,
        bracket: (b0, b0),
    };
    if f0.abs() <= tol {
        trace.converged = true;
        return Ok(trace);
    }
    let (mut lo, mut hi) = find_bracket(f, b0, f0).ok_or(Error::NoInteriorRoot)?;
    trace.bracket = (lo, hi);
    let lo_sign = f.value(lo).signum();
    let frozen = f.derivative(b0);

    let mut b = b0;
    let mut fb = f0;
    for _ in 0..max_iters {
        let slope = match method {
            InnerMethod::Newton => f.derivative(b),
            InnerMethod::ModifiedNewton => frozen,
            InnerMethod::Bisection => f64::NAN,
        };
        let step = b - fb / slope;
        let mut next = if step.is_finite() && step > lo && step < hi {
            step
        } else {
            0.5 * (lo + hi)
        };
        let mut f_next = f.value(next);
        if f_next.signum() == lo_sign {
            lo = next;
        } else {
            hi = next;
        }
        if method == InnerMethod::ModifiedNewton && f_next.abs() > 0.5 * fb.abs() && f_next.abs() > tol {
            next = 0.5 * (lo + hi);
            f_next = f.value(next);
            if f_next.signum() == lo_sign {
                lo = next;
            } else {
                hi = next;
            }
        }
        b = next;
        fb = f_next;
        trace.iterates.push(b);
        trace.f_values.push(fb);
        if fb.abs() <= tol || hi - lo <= BRACKET_REL_WIDTH * (1.0 + b) {
            trace.converged = true;
            return Ok(trace);
        }
    }
    Err(Error::MaxIterations {
        cap: max_iters,
        trace: Box::new(trace),
    })
}

fn solve_problem(rp: &RootProblem, b0: f64, method: InnerMethod, cfg: &SolverConfig) -> Result<(f64, RootTrace)> {
    if !(b0 > 0.0) {
        return Err(Error::Domain(b0));
    }
    if !rp.has_interior_root() {
        return Err(Error::NoInteriorRoot);
    }
    let trace = solve_root(rp, b0, method, cfg.inner_tol, cfg.inner_max_iters)?;
    Ok((trace.root(), trace))
}

pub fn newton_solve(rp: &RootProblem, b0: f64, cfg: &SolverConfig) -> Result<(f64, RootTrace)> {
    solve_problem(rp, b0, InnerMethod::Newton, cfg)
}

pub fn modified_newton_solve(rp: &RootProblem, b0: f64, cfg: &SolverConfig) -> Result<(f64, RootTrace)> {
    solve_problem(rp, b0, InnerMethod::ModifiedNewton, cfg)
}

pub fn bisection_solve(rp: &RootProblem, b0: f64, cfg: &SolverConfig) -> Result<(f64, RootTrace)> {
    solve_problem(rp, b0, InnerMethod::Bisection, cfg)
}

pub fn solve_with(rp: &RootProblem, b0: f64, cfg: &SolverConfig) -> Result<(f64, RootTrace)> {
    solve_problem(rp, b0, cfg.inner_method, cfg)
}

/// Closed-form root via the SNR equation `β g(x) = λ`, `b = cp / x`, solved
/// by plain bisection on `x`. Independent of the bracketed solvers above.
pub fn reference_root(rp: &RootProblem) -> Option<f64> {
    if !rp.has_interior_root() {
        return None;
    }
    let target = rp.lambda / rp.beta;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while bandwidth_marginal(hi) < target {
        hi *= 2.0;
        if !hi.is_finite() {
            return None;
        }
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if bandwidth_marginal(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(rp.c * rp.power / (0.5 * (lo + hi)))
}

/// Fitted `e_{k+1} ≈ a · e_k^p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceOrder {
    pub order: f64,
    pub rate: f64,
    pub terms_used: usize,
}

/// Errors below this are treated as floating-point floor.
const ORDER_FLOOR: f64 = 1e-14;
/// Preferred upper edge of the asymptotic window.
const ORDER_CEILING: f64 = 1e-2;
const ORDER_MIN_TERMS: usize = 4;
const ORDER_MAX_TERMS: usize = 8;

/// Least-squares fit of `ln e_{k+1} = p ln e_k + ln a`.
///
/// Works on the longest strictly decreasing run of terms above `1e-14` at the
/// end of the sequence. If at least four of those lie below `1e-2` only that
/// asymptotic part is used; either way at most the last eight terms enter.
pub fn estimate_convergence_order(errors: &[f64]) -> Result<ConvergenceOrder> {
    if errors.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
        return Err(Error::InsufficientData("errors must be finite and > 0".into()));
    }
    let above_floor = errors.iter().position(|&e| e <= ORDER_FLOOR).unwrap_or(errors.len());
    let usable = &errors[..above_floor];
    let mut start = usable.len().saturating_sub(1);
    while start > 0 && usable[start - 1] > usable[start] {
        start -= 1;
    }
    let run = &usable[start..];
    let asymptotic: Vec<f64> = run.iter().copied().filter(|&e| e < ORDER_CEILING).collect();
    let chosen: &[f64] = if asymptotic.len() >= ORDER_MIN_TERMS { &asymptotic } else { run };
    if chosen.len() < ORDER_MIN_TERMS {
        return Err(Error::InsufficientData(format!(
            "need {ORDER_MIN_TERMS} decreasing terms, have {}",
            chosen.len()
        )));
    }
    let window = &chosen[chosen.len().saturating_sub(ORDER_MAX_TERMS)..];
    let xs: Vec<f64> = window[..window.len() - 1].iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = window[1..].iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("degenerate error sequence".into()));
    }
    let order = sxy / sxx;
    Ok(ConvergenceOrder {
        order,
        rate: (my - order * mx).exp(),
        terms_used: window.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Ascent,
    Descent,
}

/// True when the sequence never moves against `direction` by more than
/// `1e-12` times its largest magnitude.
pub fn check_monotone_improvement(values: &[f64], direction: Direction) -> bool {
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let slack = 1e-12 * scale;
    values.windows(2).all(|w| match direction {
        Direction::Ascent => w[1] >= w[0] - slack,
        Direction::Descent => w[1] <= w[0] + slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn rp(beta: f64, c: f64, power: f64, lambda: f64) -> RootProblem {
        RootProblem { beta, c, power, lambda }
    }

    #[test]
    fn f_examples() {
        let zero = rp(1.0, 1.0, 0.0, 0.0);
        for b in [1e-6, 1.0, 1e6] {
            assert_eq!(f_eval(&zero, b).unwrap(), 0.0);
        }
        let p = rp(1.0, 1.0, 1.0, 0.0);
        assert!((f_eval(&p, 1.0).unwrap() - 0.193_147_180_559_945_3).abs() < 1e-16);
        let far = f_eval(&p, 1e9).unwrap();
        assert!(far > 0.0 && far < 1e-17, "{far}");
        assert!(matches!(f_eval(&p, 0.0), Err(Error::Domain(_))));
        assert!(f_eval(&p, -1.0).is_err());
    }

    #[test]
    fn f_prime_examples() {
        assert_eq!(f_prime_eval(&rp(1.0, 1.0, 0.0, 0.3), 2.0).unwrap(), 0.0);
        assert_eq!(f_prime_eval(&rp(1.0, 1.0, 1.0, 0.0), 1.0).unwrap(), -0.25);
        for b in [1e-3, 0.5, 7.0, 1e4] {
            assert!(f_prime_eval(&rp(0.4, 3.0, 2.0, 0.1), b).unwrap() < 0.0);
        }
        assert!(f_prime_eval(&rp(1.0, 1.0, 1.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn printed_derivative_matches_only_at_unit_efficiency() {
        for b in [0.1, 1.0, 3.0, 50.0] {
            let one = rp(1.0, 2.0, 1.5, 0.2);
            let a = f_prime_eval(&one, b).unwrap();
            let p = f_prime_printed(&one, b).unwrap();
            assert!((a - p).abs() <= 1e-14 * a.abs());
            let half = rp(0.5, 2.0, 1.5, 0.2);
            let a = f_prime_eval(&half, b).unwrap();
            let p = f_prime_printed(&half, b).unwrap();
            assert!((a - p).abs() > 1e-6 * a.abs());
        }
    }

    #[test]
    fn newton_fixed_point_returns_immediately() {
        let cfg = SolverConfig::default();
        let p = rp(1.0, 1.0, 1.0, LN_2 - 0.5);
        let (root, trace) = newton_solve(&p, 1.0, &cfg).unwrap();
        assert_eq!(root, 1.0);
        assert_eq!(trace.steps(), 0);
        assert!(trace.converged);
    }

    #[test]
    fn newton_first_step_and_root() {
        let cfg = SolverConfig::default();
        let p = rp(1.0, 1.0, 1.0, 0.1);
        let (root, trace) = newton_solve(&p, 1.0, &cfg).unwrap();
        // 1 + (ln 2 − 0.6) / 0.25
        assert!((trace.iterates[1] - 1.372588722239781).abs() < 1e-12);
        let reference = reference_root(&p).unwrap();
        assert!((root - reference).abs() < 1e-10);
        assert!(check_monotone_improvement(
            &trace.f_values.iter().map(|f| f.abs()).collect::<Vec<_>>(),
            Direction::Descent
        ));
    }

    #[test]
    fn modified_newton_agrees_with_newton() {
        let cfg = SolverConfig::default();
        let p = rp(1.0, 1.0, 1.0, 0.1);
        let (a, _) = newton_solve(&p, 1.0, &cfg).unwrap();
        let (b, _) = modified_newton_solve(&p, 1.0, &cfg).unwrap();
        let (c, _) = bisection_solve(&p, 1.0, &cfg).unwrap();
        assert!((a - b).abs() < 1e-8);
        assert!((a - c).abs() < 1e-8);
    }

    #[test]
    fn zero_power_has_no_interior_root() {
        let cfg = SolverConfig::default();
        let p = rp(1.0, 1.0, 0.0, 0.1);
        assert!(matches!(newton_solve(&p, 1.0, &cfg), Err(Error::NoInteriorRoot)));
        assert!(matches!(modified_newton_solve(&p, 1.0, &cfg), Err(Error::NoInteriorRoot)));
        let p = rp(1.0, 1.0, 1.0, 0.0);
        assert!(matches!(newton_solve(&p, 1.0, &cfg), Err(Error::NoInteriorRoot)));
    }

    #[test]
    fn root_scales_with_power() {
        let cfg = SolverConfig::default();
        let base = rp(0.8, 2.0, 1.0, 0.3);
        let (r1, _) = newton_solve(&base, 1.0, &cfg).unwrap();
        let t = 37.5;
        let scaled = RootProblem { power: t, ..base };
        let (rt, _) = newton_solve(&scaled, t, &cfg).unwrap();
        assert!((rt - t * r1).abs() <= 1e-9 * rt);
    }

    struct Affine;
    impl ScalarFunction for Affine {
        fn value(&self, x: f64) -> f64 {
            6.0 - 2.0 * x
        }
        fn derivative(&self, _x: f64) -> f64 {
            -2.0
        }
    }

    #[test]
    fn chord_is_exact_on_affine_functions() {
        let trace = solve_root(&Affine, 1.0, InnerMethod::ModifiedNewton, 1e-12, 50).unwrap();
        assert_eq!(trace.steps(), 1);
        assert_eq!(trace.root(), 3.0);
    }

    #[test]
    fn far_start_stays_inside_bracket() {
        let cfg = SolverConfig::default();
        let p = rp(1.0, 3e9, 0.02, 2.5);
        for method in [InnerMethod::Newton, InnerMethod::ModifiedNewton, InnerMethod::Bisection] {
            for b0 in [1.0, 1e3, 1e9, 1e12] {
                let trace = solve_root(&p, b0, method, cfg.inner_tol, cfg.inner_max_iters).unwrap();
                let (lo, hi) = trace.bracket;
                assert!(trace.iterates[1..].iter().all(|&b| b >= lo && b <= hi), "{method:?} {b0}");
                let reference = reference_root(&p).unwrap();
                assert!((trace.root() - reference).abs() <= 1e-8 * (1.0 + reference));
            }
        }
    }

    #[test]
    fn order_of_synthetic_sequences() {
        let quad: Vec<f64> = (0..6).map(|k| 2f64.powf(-(2f64.powi(k)))).collect();
        let o = estimate_convergence_order(&quad).unwrap();
        assert!((o.order - 2.0).abs() < 0.05 && (o.rate - 1.0).abs() < 0.05, "{o:?}");
        let lin: Vec<f64> = (0..10).map(|k| 0.5f64.powi(k)).collect();
        let o = estimate_convergence_order(&lin).unwrap();
        assert!((o.order - 1.0).abs() < 0.05 && (o.rate - 0.5).abs() < 0.05, "{o:?}");
    }

    #[test]
    fn order_of_newton_on_sqrt2() {
        let mut x = 2.0f64;
        let mut errors = vec![];
        for _ in 0..8 {
            let e = (x - std::f64::consts::SQRT_2).abs();
            if e == 0.0 {
                break;
            }
            errors.push(e);
            x -= (x * x - 2.0) / (2.0 * x);
        }
        let o = estimate_convergence_order(&errors).unwrap();
        assert!((1.7..=2.3).contains(&o.order), "{o:?}");
    }

    #[test]
    fn order_needs_data() {
        assert!(estimate_convergence_order(&[0.5, 0.25, 0.1]).is_err());
        assert!(estimate_convergence_order(&[0.5, 0.0, 0.1, 0.01, 0.001]).is_err());
    }

    #[test]
    fn monotone_examples() {
        assert!(check_monotone_improvement(&[3.0, 2.0, 1.0], Direction::Descent));
        assert!(!check_monotone_improvement(&[1.0, 2.0, 1.5], Direction::Ascent));
        assert!(check_monotone_improvement(&[1.0, 2.0, 2.0], Direction::Ascent));
    }
}
