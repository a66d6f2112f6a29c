//! Monte Carlo comparison of equilibrium and uniform allocation policies.
//!
//! Each trial simulates the contagion process; at every step the exposure
//! game is solved on that trial's realized state and the selected case decides
//! which side plays its equilibrium allocation. The empirical average
//! infection rate at step `n` is the fraction of red draws over all nodes and
//! trials.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{PolyaError, Result};
use crate::graph::{BuiltinKind, Network};
use crate::solver::{solve_equilibrium, solve_equilibrium_from, Equilibrium, SolverOptions};
use crate::urn::{simulate_with_rng, trial_rng, PolicyPair, UrnState};

/// Which players use the exposure-game equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyCase {
    /// Case 1: both players play the equilibrium.
    EquilibriumBoth,
    /// Case 2: equilibrium curing against uniform infection.
    UniformInfection,
    /// Case 3: uniform curing against equilibrium infection.
    UniformCuring,
}

impl PolicyCase {
    pub const ALL: [PolicyCase; 3] = [
        PolicyCase::EquilibriumBoth,
        PolicyCase::UniformInfection,
        PolicyCase::UniformCuring,
    ];

    pub fn number(self) -> u8 {
        match self {
            PolicyCase::EquilibriumBoth => 1,
            PolicyCase::UniformInfection => 2,
            PolicyCase::UniformCuring => 3,
        }
    }

    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(PolicyCase::EquilibriumBoth),
            2 => Ok(PolicyCase::UniformInfection),
            3 => Ok(PolicyCase::UniformCuring),
            other => Err(PolyaError::InvalidArgument(format!("case must be 1, 2 or 3, got {other}"))),
        }
    }
}

impl fmt::Display for PolicyCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// When the equilibrium is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyMode {
    /// Re-solved at every step on each trial's own history.
    PerTrial,
    /// Solved once on the initial state and reused for every step and trial.
    Frozen,
}

impl FromStr for PolicyMode {
    type Err = PolyaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-trial" => Ok(PolicyMode::PerTrial),
            "frozen" => Ok(PolicyMode::Frozen),
            other => Err(PolyaError::InvalidArgument(format!(
                "policy mode must be per-trial or frozen, got '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub network: Arc<Network>,
    pub initial_red: Vec<f64>,
    pub initial_black: Vec<f64>,
    pub budget_red: f64,
    pub budget_black: f64,
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    pub case: PolicyCase,
    pub solver: SolverOptions,
    pub policy_mode: PolicyMode,
}

impl ExperimentConfig {
    /// 10 red and 10 black balls per node, both budgets `10N`, 50 steps, 1000 trials.
    pub fn with_defaults(network: Arc<Network>, case: PolicyCase, seed: u64) -> Self {
        let n = network.node_count();
        Self {
            initial_red: vec![10.0; n],
            initial_black: vec![10.0; n],
            budget_red: 10.0 * n as f64,
            budget_black: 10.0 * n as f64,
            horizon: 50,
            trials: 1000,
            seed,
            case,
            solver: SolverOptions::default(),
            policy_mode: PolicyMode::PerTrial,
            network,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 || self.horizon == 0 {
            return Err(PolyaError::InvalidArgument("trials and horizon must be at least 1".into()));
        }
        if !(self.budget_red >= 0.0 && self.budget_black >= 0.0) {
            return Err(PolyaError::InvalidArgument("budgets must be nonnegative".into()));
        }
        self.solver.validate()
    }

    fn initial_state(&self) -> Result<UrnState> {
        UrnState::new(
            Arc::clone(&self.network),
            self.initial_red.clone(),
            self.initial_black.clone(),
        )
    }
}

/// Policy pair for `case` at `state`, plus the joint equilibrium it came from.
/// `warm` seeds the solver with a previous equilibrium.
pub fn case_policy(
    state: &UrnState,
    case: PolicyCase,
    budget_black: f64,
    budget_red: f64,
    opts: &SolverOptions,
    warm: Option<&Equilibrium>,
) -> Result<(PolicyPair, Equilibrium)> {
    let eq = match warm {
        Some(w) => solve_equilibrium_from(state, budget_black, budget_red, opts, &w.x_star, &w.y_star)?,
        None => solve_equilibrium(state, budget_black, budget_red, opts)?,
    };
    if !eq.converged {
        return Err(PolyaError::NotConverged {
            gap: eq.gap,
            tol: opts.tol,
            iterations: eq.iterations,
        });
    }
    Ok((policy_for_case(&eq, case, budget_black, budget_red), eq))
}

fn policy_for_case(eq: &Equilibrium, case: PolicyCase, budget_black: f64, budget_red: f64) -> PolicyPair {
    let n = eq.x_star.len();
    let uniform = PolicyPair::uniform(n, budget_black, budget_red);
    let (curing, infection) = match case {
        PolicyCase::EquilibriumBoth => (eq.x_star.clone(), eq.y_star.clone()),
        PolicyCase::UniformInfection => (eq.x_star.clone(), uniform.infection),
        PolicyCase::UniformCuring => (uniform.curing, eq.y_star.clone()),
    };
    PolicyPair::new(curing, infection, budget_black, budget_red)
}

/// Empirical average infection rate per step with standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct InfectionCurve {
    /// `mean[n - 1]` estimates the average infection rate at step `n`.
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub trials: usize,
    /// `per_trial[m][n - 1]`: fraction of nodes drawing red in trial `m` at step `n`.
    pub per_trial: Vec<Vec<f64>>,
    /// Largest certified gap over all solves.
    pub max_gap: f64,
}

impl InfectionCurve {
    fn from_trials(per_trial: Vec<Vec<f64>>, max_gap: f64) -> Self {
        let m = per_trial.len();
        let horizon = per_trial.first().map_or(0, Vec::len);
        let (mean, stderr) = (0..horizon)
            .map(|t| mean_and_stderr(per_trial.iter().map(|row| row[t])))
            .unzip();
        Self {
            mean,
            stderr,
            trials: m,
            per_trial,
            max_gap,
        }
    }

    pub fn horizon(&self) -> usize {
        self.mean.len()
    }

    /// Mean over trials of each trial's average infection over steps
    /// `from..=to` (1-based), with the standard error across trials.
    pub fn window_average(&self, from: usize, to: usize) -> (f64, f64) {
        assert!(from >= 1 && from <= to && to <= self.horizon(), "window out of range");
        mean_and_stderr(
            self.per_trial
                .iter()
                .map(|row| row[from - 1..to].iter().sum::<f64>() / (to - from + 1) as f64),
        )
    }
}

/// Sample mean and standard error of the mean; the error is zero for a single sample.
pub fn mean_and_stderr(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let k = v.len() as f64;
    let mean = v.iter().sum::<f64>() / k;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// Standard error of a difference of two independent means.
pub fn pooled_stderr(a: f64, b: f64) -> f64 {
    (a * a + b * b).sqrt()
}

struct TrialRecord {
    infected: Vec<f64>,
    max_gap: f64,
}

fn run_trial(cfg: &ExperimentConfig, init: &UrnState, trial: usize, frozen: Option<&PolicyPair>) -> Result<TrialRecord> {
    let mut rng = trial_rng(cfg.seed, trial as u64);
    let mut warm: Option<Equilibrium> = None;
    let mut max_gap = 0.0f64;
    let traj = simulate_with_rng(
        init,
        |state| {
            if let Some(p) = frozen {
                return Ok(p.clone());
            }
            let (pair, eq) = case_policy(state, cfg.case, cfg.budget_black, cfg.budget_red, &cfg.solver, warm.as_ref())
                .map_err(|e| PolyaError::Trial {
                    trial,
                    step: state.step() + 1,
                    source: Box::new(e),
                })?;
            max_gap = max_gap.max(eq.gap);
            warm = Some(eq);
            Ok(pair)
        },
        cfg.horizon,
        &mut rng,
    )?;
    let n = init.node_count() as f64;
    let infected = traj
        .draws
        .iter()
        .map(|z| z.iter().map(|&v| f64::from(v)).sum::<f64>() / n)
        .collect();
    Ok(TrialRecord { infected, max_gap })
}

/// Runs all trials of one case. Trials execute on the current rayon pool and
/// are reduced in trial order, so the result does not depend on the number
/// of workers.
pub fn run_case(cfg: &ExperimentConfig) -> Result<InfectionCurve> {
    cfg.validate()?;
    let init = cfg.initial_state()?;
    let frozen = match cfg.policy_mode {
        PolicyMode::PerTrial => None,
        PolicyMode::Frozen => Some(case_policy(&init, cfg.case, cfg.budget_black, cfg.budget_red, &cfg.solver, None)?),
    };
    let frozen_pair = frozen.as_ref().map(|(p, _)| p);
    let records = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| run_trial(cfg, &init, trial, frozen_pair))
        .collect::<Result<Vec<_>>>()?;
    let max_gap = records
        .iter()
        .map(|r| r.max_gap)
        .chain(frozen.as_ref().map(|(_, eq)| eq.gap))
        .fold(0.0, f64::max);
    Ok(InfectionCurve::from_trials(
        records.into_iter().map(|r| r.infected).collect(),
        max_gap,
    ))
}

/// Settings shared by the nine curves of the three-network comparison.
#[derive(Debug, Clone)]
pub struct Figure4Config {
    pub initial_red: f64,
    pub initial_black: f64,
    /// Budget per node; each player gets `budget_per_node · N`.
    pub budget_per_node: f64,
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    pub solver: SolverOptions,
    pub policy_mode: PolicyMode,
}

impl Default for Figure4Config {
    fn default() -> Self {
        Self {
            initial_red: 10.0,
            initial_black: 10.0,
            budget_per_node: 10.0,
            horizon: 50,
            trials: 1000,
            seed: 0,
            solver: SolverOptions::default(),
            policy_mode: PolicyMode::PerTrial,
        }
    }
}

/// One labelled curve of an experiment table.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRecord {
    pub network: String,
    pub case: PolicyCase,
    pub curve: InfectionCurve,
}

/// The three test networks: 7-node line, 6-node star, 6-node circle.
pub fn figure4_networks() -> Vec<(String, Network)> {
    [(BuiltinKind::Line, 7), (BuiltinKind::Star, 6), (BuiltinKind::Circle, 6)]
        .into_iter()
        .map(|(kind, n)| {
            (
                format!("{kind}{n}"),
                Network::builtin(kind, n).expect("builtin sizes are valid"),
            )
        })
        .collect()
}

/// All three cases on all three test networks, in network-then-case order.
pub fn run_figure4(base: &Figure4Config) -> Result<Vec<CurveRecord>> {
    let mut out = Vec::with_capacity(9);
    for (label, net) in figure4_networks() {
        let n = net.node_count();
        let net = Arc::new(net);
        for case in PolicyCase::ALL {
            let cfg = ExperimentConfig {
                network: Arc::clone(&net),
                initial_red: vec![base.initial_red; n],
                initial_black: vec![base.initial_black; n],
                budget_red: base.budget_per_node * n as f64,
                budget_black: base.budget_per_node * n as f64,
                horizon: base.horizon,
                trials: base.trials,
                seed: base.seed,
                case,
                solver: base.solver.clone(),
                policy_mode: base.policy_mode,
            };
            out.push(CurveRecord {
                network: label.clone(),
                case,
                curve: run_case(&cfg)?,
            });
        }
    }
    Ok(out)
}
