//! Urn dynamics: the classical Polya urn and the network contagion process.
//!
//! Each node owns an urn with initial red/black masses plus the masses added by
//! past draws. A node's draw samples its *super urn*, the union of the urns in
//! its closed neighbourhood. Given the history, the draws of different nodes
//! at the same step are independent Bernoulli variables.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{PolyaError, Result};
use crate::graph::Network;

/// Relative slack allowed when checking `Σ allocation ≤ budget`.
const BUDGET_SLACK: f64 = 1e-9;

/// RNG for trial `trial` of an experiment seeded with `seed`.
///
/// Every trial gets its own ChaCha stream, so results do not depend on which
/// worker runs which trial.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Single classical Polya urn in normalized form: `U_n = (ρ + δ·Σz) / (1 + nδ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalUrn {
    rho: f64,
    delta: f64,
    draws: u64,
    red_draws: u64,
}

impl ClassicalUrn {
    /// `rho` is the initial red fraction, `delta` the added mass relative to the
    /// initial total. `delta = 0` is the non-reinforcing limit.
    pub fn new(rho: f64, delta: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(PolyaError::InvalidUrn(format!("rho = {rho} must lie in (0, 1)")));
        }
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(PolyaError::InvalidUrn(format!("delta = {delta} must be >= 0")));
        }
        Ok(Self {
            rho,
            delta,
            draws: 0,
            red_draws: 0,
        })
    }

    /// Urn with `red` and `black` balls that returns `added` balls of the drawn colour.
    pub fn from_counts(red: f64, black: f64, added: f64) -> Result<Self> {
        let total = red + black;
        Self::new(red / total, added / total)
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn draws(&self) -> u64 {
        self.draws
    }

    pub fn red_draws(&self) -> u64 {
        self.red_draws
    }

    /// Current red proportion `U_n`, which is also `P(next draw is red)`.
    pub fn proportion(&self) -> f64 {
        (self.rho + self.delta * self.red_draws as f64) / (1.0 + self.draws as f64 * self.delta)
    }

    /// Draws with the uniform sample `u ∈ [0, 1)`: red iff `u < U_{n-1}`.
    pub fn step(&mut self, u: f64) -> u8 {
        let z = u8::from(u < self.proportion());
        self.draws += 1;
        self.red_draws += u64::from(z);
        z
    }
}

/// Curing (`curing[i] = Δ_b,i`) and infection (`infection[i] = Δ_r,i`)
/// allocations for one step, with the budgets they must respect.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyPair {
    pub curing: Vec<f64>,
    pub infection: Vec<f64>,
    pub budget_black: f64,
    pub budget_red: f64,
}

impl PolicyPair {
    pub fn new(curing: Vec<f64>, infection: Vec<f64>, budget_black: f64, budget_red: f64) -> Self {
        Self {
            curing,
            infection,
            budget_black,
            budget_red,
        }
    }

    /// Both budgets spread evenly over `n` nodes.
    pub fn uniform(n: usize, budget_black: f64, budget_red: f64) -> Self {
        Self::new(
            vec![budget_black / n as f64; n],
            vec![budget_red / n as f64; n],
            budget_black,
            budget_red,
        )
    }

    /// No reinforcement at all; the process only observes.
    pub fn zero(n: usize) -> Self {
        Self::uniform(n, 0.0, 0.0)
    }

    /// Checks shape, sign and budget constraints for an `n`-node network.
    pub fn validate(&self, n: usize) -> Result<()> {
        for (name, v, budget) in [
            ("curing", &self.curing, self.budget_black),
            ("infection", &self.infection, self.budget_red),
        ] {
            if !(budget >= 0.0 && budget.is_finite()) {
                return Err(PolyaError::InfeasiblePolicy(format!(
                    "{name} budget {budget} must be a nonnegative number"
                )));
            }
            if v.len() != n {
                return Err(PolyaError::InfeasiblePolicy(format!(
                    "{name} vector has {} entries, expected {n}",
                    v.len()
                )));
            }
            if let Some((i, a)) = v.iter().enumerate().find(|(_, a)| !(**a >= 0.0 && a.is_finite())) {
                return Err(PolyaError::InfeasiblePolicy(format!(
                    "{name}[{i}] = {a} must be nonnegative"
                )));
            }
            let total: f64 = v.iter().sum();
            if total > budget + BUDGET_SLACK * budget.max(1.0) {
                return Err(PolyaError::InfeasiblePolicy(format!(
                    "{name} allocations sum to {total}, exceeding budget {budget}"
                )));
            }
        }
        Ok(())
    }
}

/// Urn contents of every node at step `n`, kept as initial masses plus the
/// cumulative masses added after red and black draws.
#[derive(Debug, Clone)]
pub struct UrnState {
    net: Arc<Network>,
    initial_red: Vec<f64>,
    initial_black: Vec<f64>,
    added_red: Vec<f64>,
    added_black: Vec<f64>,
    step: usize,
}

impl UrnState {
    pub fn new(net: Arc<Network>, initial_red: Vec<f64>, initial_black: Vec<f64>) -> Result<Self> {
        let n = net.node_count();
        for (name, v) in [("initial_red", &initial_red), ("initial_black", &initial_black)] {
            if v.len() != n {
                return Err(PolyaError::InvalidUrn(format!(
                    "{name} has {} entries, expected {n}",
                    v.len()
                )));
            }
            if let Some((i, m)) = v.iter().enumerate().find(|(_, m)| !(**m > 0.0 && m.is_finite())) {
                return Err(PolyaError::InvalidUrn(format!("{name}[{i}] = {m} must be positive")));
            }
        }
        Ok(Self {
            net,
            initial_red,
            initial_black,
            added_red: vec![0.0; n],
            added_black: vec![0.0; n],
            step: 0,
        })
    }

    /// Every node starts with `red` red and `black` black balls.
    pub fn uniform(net: Arc<Network>, red: f64, black: f64) -> Result<Self> {
        let n = net.node_count();
        Self::new(net, vec![red; n], vec![black; n])
    }

    /// State with explicit accumulated additions, e.g. to evaluate the game at
    /// an arbitrary history.
    pub fn with_history(
        net: Arc<Network>,
        initial_red: Vec<f64>,
        initial_black: Vec<f64>,
        added_red: Vec<f64>,
        added_black: Vec<f64>,
        step: usize,
    ) -> Result<Self> {
        let mut state = Self::new(net, initial_red, initial_black)?;
        let n = state.node_count();
        for (name, v) in [("added_red", &added_red), ("added_black", &added_black)] {
            if v.len() != n || v.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
                return Err(PolyaError::InvalidUrn(format!(
                    "{name} must hold {n} nonnegative masses"
                )));
            }
        }
        state.added_red = added_red;
        state.added_black = added_black;
        state.step = step;
        Ok(state)
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn shared_network(&self) -> &Arc<Network> {
        &self.net
    }

    pub fn node_count(&self) -> usize {
        self.net.node_count()
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn initial_red(&self) -> &[f64] {
        &self.initial_red
    }

    pub fn initial_black(&self) -> &[f64] {
        &self.initial_black
    }

    pub fn added_red(&self) -> &[f64] {
        &self.added_red
    }

    pub fn added_black(&self) -> &[f64] {
        &self.added_black
    }

    /// The same state with the roles of red and black exchanged.
    pub fn swap_colours(&self) -> UrnState {
        UrnState {
            net: Arc::clone(&self.net),
            initial_red: self.initial_black.clone(),
            initial_black: self.initial_red.clone(),
            added_red: self.added_black.clone(),
            added_black: self.added_red.clone(),
            step: self.step,
        }
    }

    /// Red mass currently in node `i`'s own urn.
    pub fn red_mass(&self, i: usize) -> f64 {
        self.initial_red[i] + self.added_red[i]
    }

    /// Black mass currently in node `i`'s own urn.
    pub fn black_mass(&self, i: usize) -> f64 {
        self.initial_black[i] + self.added_black[i]
    }

    /// Total mass `X_{i,n}` of node `i`'s own urn.
    pub fn total_mass(&self, i: usize) -> f64 {
        self.red_mass(i) + self.black_mass(i)
    }

    /// Red and black mass of node `i`'s super urn.
    pub fn super_urn_masses(&self, i: usize) -> Result<(f64, f64)> {
        let nb = self.net.closed_neighborhood(i)?;
        Ok(nb.iter().fold((0.0, 0.0), |(r, b), &j| {
            (r + self.red_mass(j), b + self.black_mass(j))
        }))
    }

    /// Red proportion `S_{i,n}` of node `i`'s super urn.
    pub fn super_urn_proportion(&self, i: usize) -> Result<f64> {
        let (r, b) = self.super_urn_masses(i)?;
        Ok(r / (r + b))
    }

    /// `S_{i,n}` for every node.
    pub fn proportions(&self) -> Vec<f64> {
        (0..self.node_count())
            .map(|i| {
                self.super_urn_proportion(i)
                    .expect("node ids below node_count are valid")
            })
            .collect()
    }

    /// Network exposure: the mean super-urn red proportion.
    pub fn network_exposure(&self) -> f64 {
        let p = self.proportions();
        p.iter().sum::<f64>() / p.len() as f64
    }

    /// Advances one step. Node `i` draws red iff `uniforms[i] < S_{i,n-1}`;
    /// a red draw adds `policy.infection[i]` red mass, a black draw adds
    /// `policy.curing[i]` black mass to node `i`'s own urn.
    pub fn advance(&mut self, policy: &PolicyPair, uniforms: &[f64]) -> Result<Vec<u8>> {
        let n = self.node_count();
        policy.validate(n)?;
        if uniforms.len() != n {
            return Err(PolyaError::InvalidArgument(format!(
                "expected {n} uniform samples, got {}",
                uniforms.len()
            )));
        }
        let draws: Vec<u8> = self
            .proportions()
            .iter()
            .zip(uniforms)
            .map(|(&p, &u)| u8::from(u < p))
            .collect();
        for (i, &z) in draws.iter().enumerate() {
            if z == 1 {
                self.added_red[i] += policy.infection[i];
            } else {
                self.added_black[i] += policy.curing[i];
            }
        }
        self.step += 1;
        Ok(draws)
    }

    /// Advances one step drawing the `N` uniforms from `rng` in node-id order.
    pub fn advance_with<R: Rng + ?Sized>(&mut self, policy: &PolicyPair, rng: &mut R) -> Result<Vec<u8>> {
        let uniforms: Vec<f64> = (0..self.node_count()).map(|_| rng.gen::<f64>()).collect();
        self.advance(policy, &uniforms)
    }
}

/// Free-function form of [`UrnState::advance`]; returns the draws and the new state.
pub fn network_step(state: &UrnState, policy: &PolicyPair, uniforms: &[f64]) -> Result<(Vec<u8>, UrnState)> {
    let mut next = state.clone();
    let z = next.advance(policy, uniforms)?;
    Ok((z, next))
}

/// Record of a simulated run for steps `n = 1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `draws[t][i]` is node `i`'s draw at step `t + 1`.
    pub draws: Vec<Vec<u8>>,
    /// `proportions[t][i]` is `S_{i,t+1}`, the super-urn proportion after the draw.
    pub proportions: Vec<Vec<f64>>,
    /// Network exposure after each step.
    pub exposures: Vec<f64>,
    pub policies: Vec<PolicyPair>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.draws.len()
    }

    /// Draw of node `i` at step `n` (1-based).
    pub fn draw(&self, i: usize, n: usize) -> u8 {
        self.draws[n - 1][i]
    }
}

/// Runs `horizon` steps from `init`, asking `policy` for each step's
/// allocation given the current state. Deterministic in `seed`.
pub fn simulate_trajectory<F>(init: &UrnState, policy: F, horizon: usize, seed: u64) -> Result<Trajectory>
where
    F: FnMut(&UrnState) -> Result<PolicyPair>,
{
    simulate_with_rng(init, policy, horizon, &mut trial_rng(seed, 0))
}

pub fn simulate_with_rng<F, R>(init: &UrnState, mut policy: F, horizon: usize, rng: &mut R) -> Result<Trajectory>
where
    F: FnMut(&UrnState) -> Result<PolicyPair>,
    R: Rng + ?Sized,
{
    if horizon == 0 {
        return Err(PolyaError::InvalidArgument("horizon must be at least 1".into()));
    }
    let mut state = init.clone();
    let mut traj = Trajectory {
        draws: Vec::with_capacity(horizon),
        proportions: Vec::with_capacity(horizon),
        exposures: Vec::with_capacity(horizon),
        policies: Vec::with_capacity(horizon),
    };
    for _ in 0..horizon {
        let pair = policy(&state)?;
        let z = state.advance_with(&pair, rng)?;
        let p = state.proportions();
        traj.exposures.push(p.iter().sum::<f64>() / p.len() as f64);
        traj.draws.push(z);
        traj.proportions.push(p);
        traj.policies.push(pair);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::BuiltinKind;

    fn single() -> Arc<Network> {
        Arc::new(Network::new(1, &[]).unwrap())
    }

    #[test]
    fn classical_urn_update() {
        let mut urn = ClassicalUrn::from_counts(1.0, 1.0, 1.0).unwrap();
        assert_eq!(urn.rho(), 0.5);
        assert_eq!(urn.delta(), 0.5);
        assert_eq!(urn.proportion(), 0.5);
        assert_eq!(urn.step(0.0), 1);
        assert!((urn.proportion() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(urn.step(0.999), 0);
        assert!((urn.proportion() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn classical_urn_without_reinforcement_is_constant() {
        let mut urn = ClassicalUrn::new(0.3, 0.0).unwrap();
        for k in 0..100 {
            urn.step(if k % 3 == 0 { 0.1 } else { 0.9 });
            assert_eq!(urn.proportion(), 0.3);
        }
        assert!(ClassicalUrn::new(0.0, 0.1).is_err());
        assert!(ClassicalUrn::new(0.5, -1.0).is_err());
    }

    #[test]
    fn super_urn_proportions() {
        let star = Arc::new(Network::builtin(BuiltinKind::Star, 6).unwrap());
        let s = UrnState::uniform(star, 10.0, 10.0).unwrap();
        assert_eq!(s.super_urn_proportion(0).unwrap(), 0.5);
        assert_eq!(s.network_exposure(), 0.5);

        let pair = Arc::new(Network::new(2, &[(0, 1)]).unwrap());
        let s = UrnState::new(pair, vec![1.0, 1.0], vec![1.0, 3.0]).unwrap();
        assert!((s.super_urn_proportion(0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(s.super_urn_proportion(2).is_err());
        // both nodes share the same super urn
        assert!((s.network_exposure() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn initial_proportion_is_super_urn_ratio() {
        let line = Arc::new(Network::builtin(BuiltinKind::Line, 3).unwrap());
        let s = UrnState::new(line, vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]).unwrap();
        assert!((s.super_urn_proportion(0).unwrap() - 3.0 / 12.0).abs() < 1e-15);
        assert!((s.super_urn_proportion(1).unwrap() - 6.0 / 21.0).abs() < 1e-15);
        assert!((s.super_urn_proportion(2).unwrap() - 5.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn red_draw_adds_infection_mass() {
        let mut s = UrnState::uniform(single(), 10.0, 10.0).unwrap();
        let z = s.advance(&PolicyPair::uniform(1, 10.0, 10.0), &[0.2]).unwrap();
        assert_eq!(z, vec![1]);
        assert_eq!(s.total_mass(0), 30.0);
        assert!((s.super_urn_proportion(0).unwrap() - 20.0 / 30.0).abs() < 1e-15);
        assert_eq!(s.step(), 1);
    }

    #[test]
    fn near_black_urn_draws_red_rarely() {
        let mut s = UrnState::new(single(), vec![1e-3], vec![1.0]).unwrap();
        let p = s.super_urn_proportion(0).unwrap();
        assert_eq!(s.advance(&PolicyPair::zero(1), &[p * 0.999]).unwrap(), vec![1]);
        assert_eq!(s.advance(&PolicyPair::zero(1), &[p * 1.001]).unwrap(), vec![0]);
    }

    #[test]
    fn zero_policy_only_advances_step() {
        let line = Arc::new(Network::builtin(BuiltinKind::Line, 4).unwrap());
        let mut s = UrnState::uniform(line, 3.0, 7.0).unwrap();
        let before = s.proportions();
        s.advance(&PolicyPair::zero(4), &[0.1, 0.9, 0.2, 0.8]).unwrap();
        assert_eq!(s.proportions(), before);
        assert_eq!(s.step(), 1);
        assert!(s.added_red().iter().chain(s.added_black()).all(|&m| m == 0.0));
    }

    #[test]
    fn infeasible_policies_are_rejected() {
        let mut s = UrnState::uniform(single(), 1.0, 1.0).unwrap();
        let over = PolicyPair::new(vec![2.0], vec![0.0], 1.0, 1.0);
        assert!(matches!(s.advance(&over, &[0.5]), Err(PolyaError::InfeasiblePolicy(_))));
        let negative = PolicyPair::new(vec![0.0], vec![-1.0], 1.0, 1.0);
        assert!(negative.validate(1).is_err());
        let short = PolicyPair::uniform(2, 1.0, 1.0);
        assert!(short.validate(1).is_err());
        assert!(s.advance(&PolicyPair::zero(1), &[0.5, 0.5]).is_err());
    }

    #[test]
    fn bad_initial_urns_are_rejected() {
        assert!(UrnState::new(single(), vec![0.0], vec![1.0]).is_err());
        assert!(UrnState::new(single(), vec![1.0, 1.0], vec![1.0]).is_err());
        assert!(UrnState::with_history(single(), vec![1.0], vec![1.0], vec![-1.0], vec![0.0], 1).is_err());
    }

    #[test]
    fn simulation_is_deterministic_and_composes() {
        let circle = Arc::new(Network::builtin(BuiltinKind::Circle, 5).unwrap());
        let init = UrnState::uniform(circle, 2.0, 3.0).unwrap();
        let policy = |_: &UrnState| Ok(PolicyPair::uniform(5, 5.0, 5.0));
        let a = simulate_trajectory(&init, policy, 20, 42).unwrap();
        let b = simulate_trajectory(&init, policy, 20, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.horizon(), 20);

        let one = simulate_trajectory(&init, policy, 1, 9).unwrap();
        let mut rng = trial_rng(9, 0);
        let uniforms: Vec<f64> = (0..5).map(|_| rng.gen::<f64>()).collect();
        let (z, next) = network_step(&init, &PolicyPair::uniform(5, 5.0, 5.0), &uniforms).unwrap();
        assert_eq!(one.draws[0], z);
        assert_eq!(one.proportions[0], next.proportions());

        assert!(simulate_trajectory(&init, policy, 0, 1).is_err());
        let over_budget = |_: &UrnState| Ok(PolicyPair::new(vec![1.0; 5], vec![2.0; 5], 5.0, 5.0));
        assert!(matches!(
            simulate_trajectory(&init, over_budget, 3, 1),
            Err(PolyaError::InfeasiblePolicy(_))
        ));
    }

    #[test]
    fn single_node_first_draw_is_fair() {
        let init = UrnState::uniform(single(), 10.0, 10.0).unwrap();
        let trials = 100_000u64;
        let reds: u64 = (0..trials)
            .map(|seed| {
                let t = simulate_trajectory(&init, |_| Ok(PolicyPair::uniform(1, 10.0, 10.0)), 1, seed).unwrap();
                u64::from(t.draw(0, 1))
            })
            .sum();
        let mean = reds as f64 / trials as f64;
        let sigma = (0.25 / trials as f64).sqrt();
        assert!((mean - 0.5).abs() <= 3.0 * sigma, "mean {mean}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn mass_conservation_and_bounds(
                red in proptest::collection::vec(0.1f64..50.0, 4),
                black in proptest::collection::vec(0.1f64..50.0, 4),
                curing in proptest::collection::vec(0.0f64..20.0, 4),
                infection in proptest::collection::vec(0.0f64..20.0, 4),
                uniforms in proptest::collection::vec(0.0f64..1.0, 4),
            ) {
                let net = Arc::new(Network::builtin(BuiltinKind::Star, 4).unwrap());
                let mut s = UrnState::new(net, red, black).unwrap();
                let before: Vec<f64> = (0..4).map(|i| s.total_mass(i)).collect();
                let bb: f64 = curing.iter().sum();
                let br: f64 = infection.iter().sum();
                let pair = PolicyPair::new(curing.clone(), infection.clone(), bb, br);
                let z = s.advance(&pair, &uniforms).unwrap();
                for i in 0..4 {
                    let expected = if z[i] == 1 { infection[i] } else { curing[i] };
                    prop_assert!((s.total_mass(i) - before[i] - expected).abs() <= 1e-12 * s.total_mass(i));
                    let p = s.super_urn_proportion(i).unwrap();
                    prop_assert!(p > 0.0 && p < 1.0);
                }
            }
        }
    }
}
