//! One-step expected network exposure `E[S̃_n | F_{n-1}]` as a function of the
//! curing vector `x` and the infection vector `y`, with its gradients.
//!
//! For a fixed outcome `z` of the step-`n` draws, node `i`'s super-urn
//! proportion after the step is
//!
//! ```text
//! f_i(x, y, z) = (c_i + C_i·y) / (c_i + d_i + C_i·y + D_i·x)
//! ```
//!
//! with `C_ij = A_ij z_j`, `D_ij = A_ij (1 - z_j)` and `c_i`, `d_i` the red and
//! black super-urn masses before the step. The expectation weights each outcome
//! by the product-Bernoulli law `w(z) = Π_j S_j^{z_j} (1 - S_j)^{1 - z_j}`.

use rand::Rng;

use crate::error::{PolyaError, Result};
use crate::graph::SelfAdjacency;
use crate::urn::{trial_rng, UrnState};

/// Largest number of jointly enumerated draws (`2^20` outcomes).
pub const ENUMERATION_CAP: usize = 20;

/// Red (`c`) and black (`d`) super-urn masses before the next draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureCoefficients {
    pub c: Vec<f64>,
    pub d: Vec<f64>,
}

impl ExposureCoefficients {
    /// Draw probabilities `S_{i,n-1} = c_i / (c_i + d_i)`.
    pub fn red_probabilities(&self) -> Vec<f64> {
        self.c.iter().zip(&self.d).map(|(c, d)| c / (c + d)).collect()
    }
}

pub fn coefficients(state: &UrnState) -> ExposureCoefficients {
    let n = state.node_count();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for (i, nb) in state.network().closed_neighborhoods().iter().enumerate() {
        for &j in nb {
            c[i] += state.red_mass(j);
            d[i] += state.black_mass(j);
        }
    }
    ExposureCoefficients { c, d }
}

/// The outcome-dependent masks `C` (red draws) and `D` (black draws) of the
/// self-inclusive adjacency matrix. `C + D = A`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutcomeMatrices {
    n: usize,
    red: Vec<u8>,
    black: Vec<u8>,
}

impl OutcomeMatrices {
    pub fn new(adjacency: &SelfAdjacency, z: &[u8]) -> Self {
        let n = adjacency.size();
        assert_eq!(z.len(), n, "outcome length must match the network size");
        let mut red = vec![0u8; n * n];
        let mut black = vec![0u8; n * n];
        for i in 0..n {
            for j in 0..n {
                let a = adjacency.get(i, j);
                red[i * n + j] = a * z[j];
                black[i * n + j] = a * (1 - z[j]);
            }
        }
        Self { n, red, black }
    }

    /// Row `i` of `C`.
    pub fn red_row(&self, i: usize) -> &[u8] {
        &self.red[i * self.n..(i + 1) * self.n]
    }

    /// Row `i` of `D`.
    pub fn black_row(&self, i: usize) -> &[u8] {
        &self.black[i * self.n..(i + 1) * self.n]
    }
}

fn masked_dot(mask: &[u8], v: &[f64]) -> f64 {
    mask.iter().zip(v).filter(|(m, _)| **m == 1).map(|(_, v)| v).sum()
}

/// `f_i(x, y, z)` for the outcome baked into `matrices`.
pub fn node_exposure(
    coeffs: &ExposureCoefficients,
    matrices: &OutcomeMatrices,
    x: &[f64],
    y: &[f64],
    i: usize,
) -> f64 {
    let red = coeffs.c[i] + masked_dot(matrices.red_row(i), y);
    let black = coeffs.d[i] + masked_dot(matrices.black_row(i), x);
    red / (red + black)
}

/// Expected exposure with its gradients. `grad_x ≤ 0` and `grad_y ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureEvaluation {
    pub value: f64,
    pub grad_x: Vec<f64>,
    pub grad_y: Vec<f64>,
}

fn check_point(n: usize, x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != n || y.len() != n {
        return Err(PolyaError::InvalidArgument(format!(
            "policy vectors must have {n} entries (got {} and {})",
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y).any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(PolyaError::InvalidArgument(
            "policy entries must be finite and nonnegative".into(),
        ));
    }
    Ok(())
}

/// Exact expected exposure by enumerating all `2^N` joint outcomes.
///
/// Refuses networks larger than [`ENUMERATION_CAP`]; use
/// [`expected_exposure_mc`] or [`ExposureGame`] there.
pub fn expected_exposure_exact(state: &UrnState, x: &[f64], y: &[f64]) -> Result<ExposureEvaluation> {
    let n = state.node_count();
    if n > ENUMERATION_CAP {
        return Err(PolyaError::EnumerationCap {
            nodes: n,
            cap: ENUMERATION_CAP,
        });
    }
    check_point(n, x, y)?;
    let coeffs = coefficients(state);
    let p = coeffs.red_probabilities();
    let nbhd = state.network().closed_neighborhoods();

    let mut value = 0.0;
    let mut grad_x = vec![0.0; n];
    let mut grad_y = vec![0.0; n];
    for outcome in 0u32..(1u32 << n) {
        let red = |j: usize| outcome >> j & 1 == 1;
        let w: f64 = (0..n).map(|j| if red(j) { p[j] } else { 1.0 - p[j] }).product();
        if w == 0.0 {
            continue;
        }
        for (i, nb) in nbhd.iter().enumerate() {
            let (mut num, mut black) = (coeffs.c[i], coeffs.d[i]);
            for &j in nb {
                if red(j) {
                    num += y[j];
                } else {
                    black += x[j];
                }
            }
            let den = num + black;
            value += w * num / den;
            let scale = w / (den * den);
            for &j in nb {
                if red(j) {
                    grad_y[j] += scale * black;
                } else {
                    grad_x[j] -= scale * num;
                }
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    grad_x.iter_mut().chain(grad_y.iter_mut()).for_each(|g| *g *= inv_n);
    Ok(ExposureEvaluation {
        value: value * inv_n,
        grad_x,
        grad_y,
    })
}

/// Enumeration weights `w(z)` of all joint outcomes, indexed by the bitmask of
/// red draws.
pub fn outcome_weights(state: &UrnState) -> Result<Vec<f64>> {
    let n = state.node_count();
    if n > ENUMERATION_CAP {
        return Err(PolyaError::EnumerationCap {
            nodes: n,
            cap: ENUMERATION_CAP,
        });
    }
    let p = state.proportions();
    Ok((0u32..(1u32 << n))
        .map(|outcome| {
            (0..n)
                .map(|j| if outcome >> j & 1 == 1 { p[j] } else { 1.0 - p[j] })
                .product()
        })
        .collect())
}

struct LocalTable {
    members: Vec<usize>,
    c: f64,
    d: f64,
    // (weight, bitmask over `members`) for every local outcome.
    outcomes: Vec<(f64, u32)>,
}

/// Exact expected exposure using per-node marginal enumeration.
///
/// `f_i` only depends on the draws inside `N_i'`, and those draws are
/// independent, so `E[f_i]` needs `2^|N_i'|` outcomes instead of `2^N`. The
/// result equals [`expected_exposure_exact`] up to rounding.
pub struct ExposureGame {
    n: usize,
    tables: Vec<LocalTable>,
}

impl ExposureGame {
    pub fn new(state: &UrnState) -> Result<Self> {
        let coeffs = coefficients(state);
        let p = coeffs.red_probabilities();
        let mut tables = Vec::with_capacity(state.node_count());
        for (i, nb) in state.network().closed_neighborhoods().iter().enumerate() {
            let k = nb.len();
            if k > ENUMERATION_CAP {
                return Err(PolyaError::EnumerationCap {
                    nodes: k,
                    cap: ENUMERATION_CAP,
                });
            }
            let outcomes = (0u32..(1u32 << k))
                .map(|mask| {
                    let w = nb
                        .iter()
                        .enumerate()
                        .map(|(b, &j)| if mask >> b & 1 == 1 { p[j] } else { 1.0 - p[j] })
                        .product();
                    (w, mask)
                })
                .filter(|(w, _)| *w > 0.0)
                .collect();
            tables.push(LocalTable {
                members: nb.clone(),
                c: coeffs.c[i],
                d: coeffs.d[i],
                outcomes,
            });
        }
        Ok(Self {
            n: state.node_count(),
            tables,
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut total = 0.0;
        for t in &self.tables {
            for &(w, mask) in &t.outcomes {
                let (num, black) = local_masses(t, mask, x, y);
                total += w * num / (num + black);
            }
        }
        total / self.n as f64
    }

    pub fn evaluate(&self, x: &[f64], y: &[f64]) -> ExposureEvaluation {
        let mut value = 0.0;
        let mut grad_x = vec![0.0; self.n];
        let mut grad_y = vec![0.0; self.n];
        for t in &self.tables {
            for &(w, mask) in &t.outcomes {
                let (num, black) = local_masses(t, mask, x, y);
                let den = num + black;
                value += w * num / den;
                let scale = w / (den * den);
                for (b, &j) in t.members.iter().enumerate() {
                    if mask >> b & 1 == 1 {
                        grad_y[j] += scale * black;
                    } else {
                        grad_x[j] -= scale * num;
                    }
                }
            }
        }
        let inv_n = 1.0 / self.n as f64;
        grad_x.iter_mut().chain(grad_y.iter_mut()).for_each(|g| *g *= inv_n);
        ExposureEvaluation {
            value: value * inv_n,
            grad_x,
            grad_y,
        }
    }
}

#[inline]
fn local_masses(t: &LocalTable, mask: u32, x: &[f64], y: &[f64]) -> (f64, f64) {
    let (mut num, mut black) = (t.c, t.d);
    for (b, &j) in t.members.iter().enumerate() {
        if mask >> b & 1 == 1 {
            num += y[j];
        } else {
            black += x[j];
        }
    }
    (num, black)
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

/// Unbiased estimate of the expected exposure from `samples` joint outcomes
/// drawn from the product-Bernoulli law. No size cap. With one sample the
/// standard error is reported as zero.
pub fn expected_exposure_mc(state: &UrnState, x: &[f64], y: &[f64], samples: usize, seed: u64) -> Result<McEstimate> {
    let n = state.node_count();
    check_point(n, x, y)?;
    if samples == 0 {
        return Err(PolyaError::InvalidArgument("samples must be at least 1".into()));
    }
    let coeffs = coefficients(state);
    let p = coeffs.red_probabilities();
    let adjacency = state.network().closed_neighborhoods();
    let mut rng = trial_rng(seed, 0);
    let mut z = vec![false; n];

    // Welford accumulation
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for k in 1..=samples {
        for (zj, pj) in z.iter_mut().zip(&p) {
            *zj = rng.gen::<f64>() < *pj;
        }
        let mut s = 0.0;
        for (i, nb) in adjacency.iter().enumerate() {
            let (mut num, mut black) = (coeffs.c[i], coeffs.d[i]);
            for &j in nb {
                if z[j] {
                    num += y[j];
                } else {
                    black += x[j];
                }
            }
            s += num / (num + black);
        }
        s /= n as f64;
        let delta = s - mean;
        mean += delta / k as f64;
        m2 += delta * (s - mean);
    }
    let stderr = if samples > 1 {
        (m2 / (samples - 1) as f64).sqrt() / (samples as f64).sqrt()
    } else {
        0.0
    };
    Ok(McEstimate {
        estimate: mean,
        stderr,
    })
}

/// Outcome of comparing analytic gradients against central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub max_rel_error: f64,
    pub analytic_x: Vec<f64>,
    pub analytic_y: Vec<f64>,
    pub numeric_x: Vec<f64>,
    pub numeric_y: Vec<f64>,
}

/// Compares the analytic gradients of [`expected_exposure_exact`] with central
/// finite differences of step `h`. The relative error of a component is
/// `|a - fd| / max(|a|, |fd|)`, and zero when both vanish.
pub fn gradient_check(state: &UrnState, x: &[f64], y: &[f64], h: f64) -> Result<GradientCheck> {
    if !(h > 0.0) {
        return Err(PolyaError::InvalidArgument(format!("step h = {h} must be positive")));
    }
    let eval = expected_exposure_exact(state, x, y)?;
    let n = state.node_count();
    let central = |wrt_x: bool, j: usize| -> Result<f64> {
        let (mut xp, mut yp) = (x.to_vec(), y.to_vec());
        let (mut xm, mut ym) = (x.to_vec(), y.to_vec());
        if wrt_x {
            xp[j] += h;
            xm[j] -= h;
        } else {
            yp[j] += h;
            ym[j] -= h;
        }
        let plus = expected_exposure_exact(state, &xp, &yp)?.value;
        let minus = expected_exposure_exact(state, &xm, &ym)?.value;
        Ok((plus - minus) / (2.0 * h))
    };
    let numeric_x = (0..n).map(|j| central(true, j)).collect::<Result<Vec<_>>>()?;
    let numeric_y = (0..n).map(|j| central(false, j)).collect::<Result<Vec<_>>>()?;

    let rel = |a: f64, b: f64| {
        let scale = a.abs().max(b.abs());
        if scale == 0.0 {
            0.0
        } else {
            (a - b).abs() / scale
        }
    };
    let max_rel_error = eval
        .grad_x
        .iter()
        .zip(&numeric_x)
        .chain(eval.grad_y.iter().zip(&numeric_y))
        .map(|(&a, &b)| rel(a, b))
        .fold(0.0, f64::max);
    Ok(GradientCheck {
        max_rel_error,
        analytic_x: eval.grad_x,
        analytic_y: eval.grad_y,
        numeric_x,
        numeric_y,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::graph::{BuiltinKind, Network};
    use crate::urn::PolicyPair;

    fn single(red: f64, black: f64) -> UrnState {
        UrnState::uniform(Arc::new(Network::new(1, &[]).unwrap()), red, black).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn coefficients_without_history_are_super_urn_masses() {
        let line = Arc::new(Network::builtin(BuiltinKind::Line, 3).unwrap());
        let s = UrnState::new(line, vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]).unwrap();
        let k = coefficients(&s);
        assert_eq!(k.c, vec![3.0, 6.0, 5.0]);
        assert_eq!(k.d, vec![9.0, 15.0, 11.0]);
    }

    #[test]
    fn coefficients_after_red_draw() {
        let mut s = single(10.0, 10.0);
        s.advance(&PolicyPair::uniform(1, 10.0, 10.0), &[0.0]).unwrap();
        let k = coefficients(&s);
        assert_eq!((k.c[0], k.d[0]), (20.0, 10.0));
    }

    #[test]
    fn node_exposure_cases() {
        let s = single(10.0, 10.0);
        let k = coefficients(&s);
        let adj = s.network().self_adjacency();
        let red = OutcomeMatrices::new(&adj, &[1]);
        assert!(close(node_exposure(&k, &red, &[123.0], &[10.0], 0), 2.0 / 3.0, 1e-15));
        assert_eq!(node_exposure(&k, &red, &[0.0], &[0.0], 0), 0.5);

        let star = Arc::new(Network::builtin(BuiltinKind::Star, 4).unwrap());
        let s = UrnState::new(star, vec![1.0, 2.0, 3.0, 4.0], vec![2.0, 2.0, 1.0, 5.0]).unwrap();
        let k = coefficients(&s);
        let adj = s.network().self_adjacency();
        let m = OutcomeMatrices::new(&adj, &[1, 0, 1, 0]);
        let (x, y) = ([1.0, 2.0, 3.0, 4.0], [0.5, 1.5, 2.5, 3.5]);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m.red_row(i)[j] + m.black_row(i)[j], adj.get(i, j));
            }
            let f = node_exposure(&k, &m, &x, &y, i);
            let black = k.d[i] + masked_dot(m.black_row(i), &x);
            let den = k.c[i] + k.d[i] + masked_dot(m.red_row(i), &y) + masked_dot(m.black_row(i), &x);
            assert!(close(f + black / den, 1.0, 1e-15));
            let p = s.super_urn_proportion(i).unwrap();
            assert!(close(node_exposure(&k, &m, &[0.0; 4], &[0.0; 4], i), p, 1e-15));
        }
    }

    #[test]
    fn single_node_exact_values() {
        let s = single(10.0, 10.0);
        let e = expected_exposure_exact(&s, &[10.0], &[10.0]).unwrap();
        assert!(close(e.value, 0.5, 1e-15));
        let e = expected_exposure_exact(&s, &[0.0], &[10.0]).unwrap();
        assert!(close(e.value, 7.0 / 12.0, 1e-15));
    }

    #[test]
    fn weights_sum_to_one() {
        let line = Arc::new(Network::builtin(BuiltinKind::Line, 5).unwrap());
        let s = UrnState::new(line, vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![5.0, 1.0, 2.0, 7.0, 1.0]).unwrap();
        let total: f64 = outcome_weights(&s).unwrap().iter().sum();
        assert!(close(total, 1.0, 1e-14));
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let big = Arc::new(Network::builtin(BuiltinKind::Line, ENUMERATION_CAP + 1).unwrap());
        let s = UrnState::uniform(big, 1.0, 1.0).unwrap();
        let v = vec![0.0; ENUMERATION_CAP + 1];
        assert!(matches!(
            expected_exposure_exact(&s, &v, &v),
            Err(PolyaError::EnumerationCap { nodes: 21, cap: 20 })
        ));
        // the factorized evaluator and the estimator have no global cap
        let game = ExposureGame::new(&s).unwrap();
        assert!(close(game.value(&v, &v), 0.5, 1e-15));
        let mc = expected_exposure_mc(&s, &v, &v, 10, 1).unwrap();
        assert!(close(mc.estimate, 0.5, 1e-15));
    }

    #[test]
    fn factorized_matches_full_enumeration() {
        let star = Arc::new(Network::builtin(BuiltinKind::Star, 6).unwrap());
        let s = UrnState::with_history(
            star,
            vec![3.0, 1.0, 4.0, 1.0, 5.0, 9.0],
            vec![2.0, 6.0, 5.0, 3.0, 5.0, 8.0],
            vec![0.0, 7.0, 1.0, 0.0, 2.0, 0.0],
            vec![4.0, 0.0, 0.0, 6.0, 1.0, 3.0],
            3,
        )
        .unwrap();
        let x = [1.0, 0.5, 3.0, 2.0, 0.0, 4.0];
        let y = [0.25, 2.0, 1.0, 0.0, 5.0, 1.5];
        let full = expected_exposure_exact(&s, &x, &y).unwrap();
        let fact = ExposureGame::new(&s).unwrap().evaluate(&x, &y);
        assert!(close(full.value, fact.value, 1e-14));
        for j in 0..6 {
            assert!(close(full.grad_x[j], fact.grad_x[j], 1e-15));
            assert!(close(full.grad_y[j], fact.grad_y[j], 1e-15));
        }
    }

    #[test]
    fn mc_single_sample_has_zero_stderr() {
        let s = single(10.0, 10.0);
        let e = expected_exposure_mc(&s, &[10.0], &[10.0], 1, 3).unwrap();
        assert_eq!(e.stderr, 0.0);
        assert!(e.estimate == 1.0 / 3.0 || close(e.estimate, 2.0 / 3.0, 1e-15));
        assert!(expected_exposure_mc(&s, &[10.0], &[10.0], 0, 3).is_err());
    }

    #[test]
    fn mc_is_deterministic_and_unbiased_for_single_node() {
        let s = single(10.0, 10.0);
        let a = expected_exposure_mc(&s, &[10.0], &[10.0], 100_000, 5).unwrap();
        let b = expected_exposure_mc(&s, &[10.0], &[10.0], 100_000, 5).unwrap();
        assert_eq!(a, b);
        assert!((a.estimate - 0.5).abs() <= 4.0 * a.stderr);
    }

    #[test]
    fn isolated_node_has_zero_gradient() {
        let net = Arc::new(Network::new_allow_disconnected(3, &[(0, 1)]).unwrap());
        let s = UrnState::new(net, vec![2.0, 3.0, 4.0], vec![5.0, 1.0, 2.0]).unwrap();
        let x = [1.0, 2.0, 3.0];
        let y = [2.0, 1.0, 0.5];
        let gc = gradient_check(&s, &x, &y, 1e-5).unwrap();
        assert!(gc.max_rel_error < 1e-6, "{gc:?}");
        // the super urns of nodes 0 and 1 get no contribution from node 2's coordinates
        let eval = expected_exposure_exact(&s, &x, &y).unwrap();
        let k = coefficients(&s);
        let p2 = k.c[2] / (k.c[2] + k.d[2]);
        let own = p2 * (k.d[2]) / ((k.c[2] + k.d[2] + y[2]).powi(2)) / 3.0;
        assert!(close(eval.grad_y[2], own, 1e-15));
    }

    #[test]
    fn gradient_check_rejects_bad_step() {
        let s = single(1.0, 1.0);
        assert!(gradient_check(&s, &[1.0], &[1.0], 0.0).is_err());
    }
}
