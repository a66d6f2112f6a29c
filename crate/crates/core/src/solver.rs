//! Saddle-point solver for the one-step exposure game.
//!
//! The curing player minimizes and the infection player maximizes the
//! expected exposure, each over a budget simplex `{u ≥ 0, Σu = B}`. The
//! payoff is convex in `x` and concave in `y`, so projected first-order
//! descent-ascent converges to a saddle point. Termination is decided on a
//! certified upper bound of the restricted duality gap
//! `max_y' E(x, y') - min_x' E(x', y)`, never on iterate movement.

use crate::error::{PolyaError, Result};
use crate::exposure::{ExposureEvaluation, ExposureGame};
use crate::simplex::project_simplex;
use crate::urn::UrnState;

/// A payoff that is convex in `x` and concave in `y`.
pub trait SaddleFunction {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64], y: &[f64]) -> f64;
    fn evaluate(&self, x: &[f64], y: &[f64]) -> ExposureEvaluation;
}

impl SaddleFunction for ExposureGame {
    fn dim(&self) -> usize {
        self.node_count()
    }

    fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        ExposureGame::value(self, x, y)
    }

    fn evaluate(&self, x: &[f64], y: &[f64]) -> ExposureEvaluation {
        ExposureGame::evaluate(self, x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Simultaneous projected steps `x ← Π(x - η∇x)`, `y ← Π(y + η∇y)`.
    DescentAscent,
    /// Korpelevich extragradient: a look-ahead step, then an update using the
    /// gradients at the look-ahead point.
    Extragradient,
}

/// Step size schedule. `None` for an initial step means `B / (N·G₀)`, where
/// `G₀` is the gradient norm at the starting point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    Fixed(f64),
    /// `η₀ / √k` at iteration `k`.
    Diminishing(Option<f64>),
    /// Extragradient step halved whenever the local Lipschitz test fails and
    /// grown slowly otherwise. Behaves like `Fixed(η₀)` for descent-ascent.
    Adaptive(Option<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Target for the certified gap.
    pub tol: f64,
    pub method: Method,
    pub step_rule: StepRule,
    /// Report the uniform average of the iterates instead of the last one.
    pub averaging: bool,
    /// Iterations between gap certifications.
    pub check_every: usize,
    /// Iteration cap for each best-response subproblem of the gap certificate.
    pub inner_max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            tol: 1e-6,
            method: Method::Extragradient,
            step_rule: StepRule::Adaptive(None),
            averaging: false,
            check_every: 10,
            inner_max_iters: 2_000,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(PolyaError::InvalidArgument(format!("tol = {} must be positive", self.tol)));
        }
        if self.max_iters == 0 || self.check_every == 0 {
            return Err(PolyaError::InvalidArgument(
                "max_iters and check_every must be at least 1".into(),
            ));
        }
        let eta = match self.step_rule {
            StepRule::Fixed(e) => Some(e),
            StepRule::Diminishing(e) | StepRule::Adaptive(e) => e,
        };
        if let Some(e) = eta {
            if !(e > 0.0 && e.is_finite()) {
                return Err(PolyaError::InvalidArgument(format!("step size {e} must be positive")));
            }
        }
        Ok(())
    }
}

/// A saddle point candidate together with its certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub x_star: Vec<f64>,
    pub y_star: Vec<f64>,
    pub value: f64,
    /// Certified upper bound on the restricted duality gap.
    pub gap: f64,
    pub iterations: usize,
    /// `gap <= tol`.
    pub converged: bool,
}

/// Bounds on the restricted duality gap at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapCertificate {
    /// Valid upper bound on the gap.
    pub upper: f64,
    /// Gap achieved by the best responses found; a lower bound.
    pub lower: f64,
    /// Both best-response subproblems reached their tolerance.
    pub inner_converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub value: f64,
    pub gap: f64,
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub equilibrium: Equilibrium,
    pub trace: Vec<TraceRow>,
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Frank-Wolfe residual `max_{s ∈ Y} g·(s - y)` of a maximization over the
/// `budget` simplex. Nonnegative, and zero exactly at a maximizer.
fn ascent_residual(g: &[f64], y: &[f64], budget: f64) -> f64 {
    let best = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (budget * best - dot(g, y)).max(0.0)
}

/// Frank-Wolfe residual `max_{s ∈ X} g·(x - s)` of a minimization.
fn descent_residual(g: &[f64], x: &[f64], budget: f64) -> f64 {
    let best = g.iter().copied().fold(f64::INFINITY, f64::min);
    (dot(g, x) - budget * best).max(0.0)
}

struct BestResponse {
    /// Best objective value reached.
    achieved: f64,
    /// Bound on the optimal value (upper for maximization, lower for minimization).
    bound: f64,
    converged: bool,
}

/// Projected gradient with backtracking on `sign·φ` over the budget simplex,
/// where `φ` is `y ↦ E(x, y)` (`maximize = true`) or `x ↦ E(x, y)`.
fn best_response<G: SaddleFunction>(
    game: &G,
    fixed: &[f64],
    start: &[f64],
    budget: f64,
    maximize: bool,
    tol: f64,
    max_iters: usize,
) -> BestResponse {
    let n = start.len();
    let sign = if maximize { 1.0 } else { -1.0 };
    // objective and gradient of the maximization of sign·φ
    let eval = |u: &[f64]| {
        let e = if maximize {
            game.evaluate(fixed, u)
        } else {
            game.evaluate(u, fixed)
        };
        let g: Vec<f64> = if maximize { e.grad_y } else { e.grad_x };
        (e.value, g.into_iter().map(|v| sign * v).collect::<Vec<_>>())
    };
    let value_at = |u: &[f64]| {
        if maximize {
            game.value(fixed, u)
        } else {
            game.value(u, fixed)
        }
    };

    let mut u = start.to_vec();
    let (mut val, mut g) = eval(&u);
    let mut t = {
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax > 0.0 {
            budget.max(1.0) / (n as f64 * gmax)
        } else {
            1.0
        }
    };
    let mut converged = false;
    for _ in 0..max_iters {
        if ascent_residual(&g, &u, budget) <= tol {
            converged = true;
            break;
        }
        let mut moved = false;
        while t > 1e-300 {
            let cand = project_simplex(
                &u.iter().zip(&g).map(|(a, b)| a + t * b).collect::<Vec<_>>(),
                budget,
            );
            let step: Vec<f64> = cand.iter().zip(&u).map(|(a, b)| a - b).collect();
            let step_sq = dot(&step, &step);
            if step_sq == 0.0 {
                break;
            }
            let cand_val = value_at(&cand);
            let model = sign * val + dot(&g, &step) - step_sq / (2.0 * t);
            if sign * cand_val >= model {
                if sign * cand_val >= sign * val {
                    u = cand;
                    let next = eval(&u);
                    val = next.0;
                    g = next.1;
                    moved = true;
                }
                t *= 1.5;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let residual = ascent_residual(&g, &u, budget);
    converged |= residual <= tol;
    // `val + sign·residual` bounds the optimum by concavity (convexity).
    BestResponse {
        achieved: val,
        bound: val + sign * residual,
        converged,
    }
}

/// Certified bounds on `max_y' E(x, y') - min_x' E(x', y)` with each
/// best-response problem solved to Frank-Wolfe residual `inner_tol`.
pub fn certify_gap<G: SaddleFunction>(
    game: &G,
    x: &[f64],
    y: &[f64],
    budget_black: f64,
    budget_red: f64,
    inner_tol: f64,
    inner_max_iters: usize,
) -> GapCertificate {
    let up = best_response(game, x, y, budget_red, true, inner_tol, inner_max_iters);
    let down = best_response(game, y, x, budget_black, false, inner_tol, inner_max_iters);
    let upper = (up.bound - down.bound).max(0.0);
    let lower = (up.achieved - down.achieved).max(0.0).min(upper);
    GapCertificate {
        upper,
        lower,
        inner_converged: up.converged && down.converged,
    }
}

/// First-order bound on the restricted gap at `(x, y)`: the sum of both
/// players' Frank-Wolfe residuals. Valid for any convex-concave payoff.
pub fn linearization_gap(eval: &ExposureEvaluation, x: &[f64], y: &[f64], budget_black: f64, budget_red: f64) -> f64 {
    descent_residual(&eval.grad_x, x, budget_black) + ascent_residual(&eval.grad_y, y, budget_red)
}

/// Restricted duality gap of the exposure game at `(x, y)`, with inner
/// problems solved to `opts.tol / 10`.
pub fn restricted_gap(
    state: &UrnState,
    x: &[f64],
    y: &[f64],
    budget_black: f64,
    budget_red: f64,
    opts: &SolverOptions,
) -> Result<GapCertificate> {
    opts.validate()?;
    check_budgets(budget_black, budget_red)?;
    let game = ExposureGame::new(state)?;
    check_feasible(x, budget_black, game.dim(), "x")?;
    check_feasible(y, budget_red, game.dim(), "y")?;
    Ok(certify_gap(
        &game,
        x,
        y,
        budget_black,
        budget_red,
        opts.tol / 10.0,
        opts.inner_max_iters,
    ))
}

fn check_budgets(budget_black: f64, budget_red: f64) -> Result<()> {
    if !(budget_black >= 0.0 && budget_black.is_finite() && budget_red >= 0.0 && budget_red.is_finite()) {
        return Err(PolyaError::InvalidArgument(format!(
            "budgets must be nonnegative (got black {budget_black}, red {budget_red})"
        )));
    }
    Ok(())
}

fn check_feasible(v: &[f64], budget: f64, n: usize, name: &str) -> Result<()> {
    let sum: f64 = v.iter().sum();
    if v.len() != n || v.iter().any(|a| !(*a >= 0.0)) || (sum - budget).abs() > 1e-9 * budget.max(1.0) {
        return Err(PolyaError::InvalidArgument(format!(
            "{name} must be a nonnegative {n}-vector summing to {budget}"
        )));
    }
    Ok(())
}

/// Equilibrium of the exposure game at `state`, starting from the uniform allocation.
pub fn solve_equilibrium(state: &UrnState, budget_black: f64, budget_red: f64, opts: &SolverOptions) -> Result<Equilibrium> {
    let game = ExposureGame::new(state)?;
    solve_saddle(&game, budget_black, budget_red, opts, None).map(|o| o.equilibrium)
}

/// Equilibrium of the exposure game at `state`, warm-started from `(x0, y0)`
/// (projected onto the budget simplices first).
pub fn solve_equilibrium_from(
    state: &UrnState,
    budget_black: f64,
    budget_red: f64,
    opts: &SolverOptions,
    x0: &[f64],
    y0: &[f64],
) -> Result<Equilibrium> {
    let game = ExposureGame::new(state)?;
    solve_saddle(&game, budget_black, budget_red, opts, Some((x0, y0))).map(|o| o.equilibrium)
}

/// Projected descent-ascent on any convex-concave payoff. Returns the
/// certified-best iterate among all checkpoints, so the reported gap never
/// increases with `max_iters`. Hitting `max_iters` is not an error; the
/// result then has `converged == false`.
pub fn solve_saddle<G: SaddleFunction>(
    game: &G,
    budget_black: f64,
    budget_red: f64,
    opts: &SolverOptions,
    warm: Option<(&[f64], &[f64])>,
) -> Result<SolveOutcome> {
    opts.validate()?;
    check_budgets(budget_black, budget_red)?;
    let n = game.dim();
    let (mut x, mut y) = match warm {
        Some((x0, y0)) if x0.len() == n && y0.len() == n => {
            (project_simplex(x0, budget_black), project_simplex(y0, budget_red))
        }
        Some(_) => {
            return Err(PolyaError::InvalidArgument(format!(
                "warm start must have {n} entries per player"
            )))
        }
        None => (
            vec![budget_black / n as f64; n],
            vec![budget_red / n as f64; n],
        ),
    };

    let evaluate = |x: &[f64], y: &[f64], iteration: usize| -> Result<ExposureEvaluation> {
        let e = game.evaluate(x, y);
        if e.value.is_finite() && e.grad_x.iter().chain(&e.grad_y).all(|g| g.is_finite()) {
            Ok(e)
        } else {
            Err(PolyaError::NonFinite { iteration })
        }
    };

    let mut current = evaluate(&x, &y, 0)?;
    let g0 = norm(current.grad_x.iter().chain(&current.grad_y).copied());
    let scale = budget_black.max(budget_red);
    let auto_eta = if g0 > 0.0 && scale > 0.0 {
        scale / (n as f64 * g0)
    } else {
        1.0
    };
    let eta0 = match opts.step_rule {
        StepRule::Fixed(e) => e,
        StepRule::Diminishing(e) | StepRule::Adaptive(e) => e.unwrap_or(auto_eta),
    };
    let mut eta = eta0;

    let mut sum_x = vec![0.0; n];
    let mut sum_y = vec![0.0; n];
    let mut trace = Vec::new();
    let mut best: Option<Equilibrium> = None;

    let mut checkpoint = |x: &[f64], y: &[f64], eval: &ExposureEvaluation, iteration: usize, step: f64| -> bool {
        let gap = certified_gap(game, eval, x, y, budget_black, budget_red, opts);
        trace.push(TraceRow {
            iter: iteration,
            value: eval.value,
            gap,
            step,
        });
        if best.as_ref().is_none_or(|b| gap < b.gap) {
            best = Some(Equilibrium {
                x_star: x.to_vec(),
                y_star: y.to_vec(),
                value: eval.value,
                gap,
                iterations: iteration,
                converged: gap <= opts.tol,
            });
        }
        gap <= opts.tol
    };

    if checkpoint(&x, &y, &current, 0, eta) {
        return finish(best, trace, 0);
    }

    for k in 1..=opts.max_iters {
        let step = match opts.step_rule {
            StepRule::Diminishing(_) => eta0 / (k as f64).sqrt(),
            _ => eta,
        };
        match opts.method {
            Method::DescentAscent => {
                x = descend(&x, &current.grad_x, step, budget_black);
                y = ascend(&y, &current.grad_y, step, budget_red);
            }
            Method::Extragradient => {
                let mut step = step;
                let look = loop {
                    let xb = descend(&x, &current.grad_x, step, budget_black);
                    let yb = ascend(&y, &current.grad_y, step, budget_red);
                    let eb = evaluate(&xb, &yb, k)?;
                    if !matches!(opts.step_rule, StepRule::Adaptive(_)) {
                        break eb;
                    }
                    let moved = norm(xb.iter().zip(&x).chain(yb.iter().zip(&y)).map(|(a, b)| a - b));
                    let changed = norm(
                        eb.grad_x
                            .iter()
                            .zip(&current.grad_x)
                            .chain(eb.grad_y.iter().zip(&current.grad_y))
                            .map(|(a, b)| a - b),
                    );
                    if moved == 0.0 || step * changed <= 0.9 * moved {
                        if step * changed < 0.45 * moved {
                            eta = step * 1.2;
                        } else {
                            eta = step;
                        }
                        break eb;
                    }
                    step *= 0.5;
                    if step < 1e-300 {
                        return Err(PolyaError::NonFinite { iteration: k });
                    }
                };
                x = descend(&x, &look.grad_x, step, budget_black);
                y = ascend(&y, &look.grad_y, step, budget_red);
            }
        }
        current = evaluate(&x, &y, k)?;
        for (s, v) in sum_x.iter_mut().zip(&x) {
            *s += v;
        }
        for (s, v) in sum_y.iter_mut().zip(&y) {
            *s += v;
        }

        if k % opts.check_every == 0 || k == opts.max_iters {
            let done = if opts.averaging {
                let ax: Vec<f64> = sum_x.iter().map(|s| s / k as f64).collect();
                let ay: Vec<f64> = sum_y.iter().map(|s| s / k as f64).collect();
                let ea = evaluate(&ax, &ay, k)?;
                checkpoint(&ax, &ay, &ea, k, step)
            } else {
                checkpoint(&x, &y, &current, k, step)
            };
            if done {
                return finish(best, trace, k);
            }
        }
    }
    finish(best, trace, opts.max_iters)
}

fn finish(best: Option<Equilibrium>, trace: Vec<TraceRow>, iterations: usize) -> Result<SolveOutcome> {
    let mut equilibrium = best.expect("the initial point is always certified");
    equilibrium.iterations = iterations;
    Ok(SolveOutcome { equilibrium, trace })
}

fn descend(x: &[f64], g: &[f64], step: f64, budget: f64) -> Vec<f64> {
    project_simplex(&x.iter().zip(g).map(|(a, b)| a - step * b).collect::<Vec<_>>(), budget)
}

fn ascend(y: &[f64], g: &[f64], step: f64, budget: f64) -> Vec<f64> {
    project_simplex(&y.iter().zip(g).map(|(a, b)| a + step * b).collect::<Vec<_>>(), budget)
}

/// Cheap first-order bound first; best-response solves only once that bound
/// is within a few orders of magnitude of the target.
fn certified_gap<G: SaddleFunction>(
    game: &G,
    eval: &ExposureEvaluation,
    x: &[f64],
    y: &[f64],
    budget_black: f64,
    budget_red: f64,
    opts: &SolverOptions,
) -> f64 {
    let linear = linearization_gap(eval, x, y, budget_black, budget_red);
    if linear <= opts.tol || linear > 1e3 * opts.tol {
        return linear;
    }
    let cert = certify_gap(game, x, y, budget_black, budget_red, opts.tol / 10.0, opts.inner_max_iters);
    linear.min(cert.upper)
}
