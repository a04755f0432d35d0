//! Exact average-reward solvers.
//!
//! These are the reference oracles for the learning code: the gain of a fixed
//! policy comes from the stationary distribution of its induced chain, and
//! the optimal `(ρ*, Q*)` comes from relative value iteration.

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::mdp::{argmax_by, Mdp, QTable, StationaryPolicy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("policy induces {classes} recurrent classes; its gain is not a single scalar")]
    NonUnichain { classes: usize },
    #[error("MDP is not communicating")]
    NotCommunicating,
    #[error("relative value iteration did not converge after {iterations} iterations (span {span:e})")]
    NoConvergence { iterations: usize, span: f64 },
    #[error("policy chooses unavailable actions at states {0:?}")]
    InvalidPolicy(Vec<usize>),
    #[error("stationary distribution solve failed")]
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stopping threshold on the span seminorm of successive iterates.
    pub span_tolerance: f64,
    /// Self-loop weight of the aperiodicity transform `P' = τP + (1-τ)I`.
    pub aperiodicity: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { max_iterations: 1_000_000, span_tolerance: 1e-10, aperiodicity: 0.5 }
    }
}

/// Optimal gain with the relative action values normalised at a reference state.
#[derive(Debug, Clone, PartialEq)]
pub struct GainAndBias {
    pub gain: f64,
    pub bias_q: QTable,
    /// `max_a Q(reference_state, a) == 0` exactly.
    pub reference_state: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub values: GainAndBias,
    pub policy: StationaryPolicy,
    pub iterations: usize,
    /// Max-norm residual of the average-reward Bellman optimality equation.
    pub residual: f64,
}

impl Solution {
    pub fn gain(&self) -> f64 {
        self.values.gain
    }

    pub fn q(&self) -> &QTable {
        &self.values.bias_q
    }
}

fn scc_graph(num_states: usize, edges: impl Iterator<Item = (usize, usize)>) -> Vec<Vec<usize>> {
    let mut g = DiGraph::<(), ()>::with_capacity(num_states, 0);
    let nodes: Vec<_> = (0..num_states).map(|_| g.add_node(())).collect();
    for (u, v) in edges {
        g.add_edge(nodes[u], nodes[v], ());
    }
    tarjan_scc(&g)
        .into_iter()
        .map(|c| {
            let mut v: Vec<usize> = c.into_iter().map(|n| n.index()).collect();
            v.sort_unstable();
            v
        })
        .collect()
}

/// True when every state can reach every other state under some policy.
pub fn is_communicating(mdp: &Mdp) -> bool {
    let ns = mdp.num_states();
    if ns == 0 {
        return false;
    }
    let edges = (0..ns).flat_map(|s| {
        mdp.available_actions(s)
            .flat_map(move |a| mdp.successors(s, a).iter().map(move |t| (s, t.next)))
    });
    scc_graph(ns, edges).len() == 1
}

/// Closed strongly connected components of the chain induced by `policy`.
pub fn recurrent_classes(mdp: &Mdp, policy: &StationaryPolicy) -> Vec<Vec<usize>> {
    let ns = mdp.num_states();
    let edges = (0..ns).flat_map(|s| mdp.successors(s, policy.action(s)).iter().map(move |t| (s, t.next)));
    let sccs = scc_graph(ns, edges);
    let mut comp = vec![0usize; ns];
    for (i, c) in sccs.iter().enumerate() {
        for &s in c {
            comp[s] = i;
        }
    }
    let mut classes: Vec<Vec<usize>> = sccs
        .iter()
        .enumerate()
        .filter(|(i, c)| {
            c.iter()
                .all(|&s| mdp.successors(s, policy.action(s)).iter().all(|t| comp[t.next] == *i))
        })
        .map(|(_, c)| c.clone())
        .collect();
    classes.sort();
    classes
}

const DENSE_LIMIT: usize = 1200;

/// Stationary distribution of the chain induced by a unichain policy.
pub fn stationary_distribution(mdp: &Mdp, policy: &StationaryPolicy) -> Result<Vec<f64>, SolverError> {
    let bad = policy.invalid_states(mdp);
    if !bad.is_empty() {
        return Err(SolverError::InvalidPolicy(bad));
    }
    let classes = recurrent_classes(mdp, policy);
    if classes.len() != 1 {
        return Err(SolverError::NonUnichain { classes: classes.len() });
    }
    let class = &classes[0];
    let n = class.len();
    let mut local = vec![usize::MAX; mdp.num_states()];
    for (i, &s) in class.iter().enumerate() {
        local[s] = i;
    }
    let mut mu_local = if n <= DENSE_LIMIT {
        // Solve μ(P - I) = 0 with the last balance equation replaced by Σμ = 1.
        let mut m = DMatrix::<f64>::zeros(n, n);
        for (i, &s) in class.iter().enumerate() {
            for t in mdp.successors(s, policy.action(s)) {
                let j = local[t.next];
                m[(j, i)] += t.prob;
            }
            m[(i, i)] -= 1.0;
        }
        for i in 0..n {
            m[(n - 1, i)] = 1.0;
        }
        let mut rhs = DVector::<f64>::zeros(n);
        rhs[n - 1] = 1.0;
        let sol = m.lu().solve(&rhs).ok_or(SolverError::Singular)?;
        sol.iter().copied().collect::<Vec<_>>()
    } else {
        // Lazy power iteration for large recurrent classes.
        let mut mu = vec![1.0 / n as f64; n];
        let mut next = vec![0.0; n];
        for _ in 0..1_000_000 {
            next.iter_mut().for_each(|x| *x = 0.0);
            for (i, &s) in class.iter().enumerate() {
                next[i] += 0.5 * mu[i];
                for t in mdp.successors(s, policy.action(s)) {
                    next[local[t.next]] += 0.5 * mu[i] * t.prob;
                }
            }
            let delta: f64 = mu.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
            std::mem::swap(&mut mu, &mut next);
            if delta < 1e-15 {
                break;
            }
        }
        mu
    };
    for x in mu_local.iter_mut() {
        if *x < 0.0 && *x > -1e-13 {
            *x = 0.0;
        }
    }
    let total: f64 = mu_local.iter().sum();
    let mut mu = vec![0.0; mdp.num_states()];
    for (i, &s) in class.iter().enumerate() {
        mu[s] = mu_local[i] / total;
    }
    Ok(mu)
}

/// Exact long-run average reward `ρ^π` of a unichain policy.
pub fn policy_gain(mdp: &Mdp, policy: &StationaryPolicy) -> Result<f64, SolverError> {
    let mu = stationary_distribution(mdp, policy)?;
    Ok(mu
        .iter()
        .enumerate()
        .filter(|(_, m)| **m != 0.0)
        .map(|(s, m)| m * mdp.expected_reward(s, policy.action(s)))
        .sum())
}

fn backup(mdp: &Mdp, h: &[f64], s: usize, a: usize) -> f64 {
    mdp.successors(s, a).iter().map(|t| t.prob * (t.reward + h[t.next])).sum()
}

/// Max-norm residual of `Q(s,a) = E[R + max_a' Q(s',a')] - ρ` over available pairs.
pub fn bellman_residual(mdp: &Mdp, gain: f64, q: &QTable) -> f64 {
    let ns = mdp.num_states();
    let vmax: Vec<f64> = (0..ns)
        .map(|s| mdp.available_actions(s).map(|a| q.get(s, a)).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let mut worst = 0.0f64;
    for s in 0..ns {
        for a in mdp.available_actions(s) {
            let target = backup(mdp, &vmax, s, a) - gain;
            worst = worst.max((q.get(s, a) - target).abs());
        }
    }
    worst
}

pub fn solve_average_reward(mdp: &Mdp) -> Result<Solution, SolverError> {
    solve_average_reward_with(mdp, &SolverConfig::default())
}

/// Relative value iteration on the aperiodicity-transformed MDP, stopped on
/// the span seminorm. The reference state is the initial state.
pub fn solve_average_reward_with(mdp: &Mdp, config: &SolverConfig) -> Result<Solution, SolverError> {
    if !is_communicating(mdp) {
        return Err(SolverError::NotCommunicating);
    }
    let ns = mdp.num_states();
    let na = mdp.num_actions();
    let reference = mdp.initial_state();
    let tau = config.aperiodicity;
    let mut h = vec![0.0; ns];
    let mut th = vec![0.0; ns];
    let mut iterations = 0;
    let mut span = f64::INFINITY;
    let (mut lo, mut hi) = (0.0, 0.0);
    while iterations < config.max_iterations {
        iterations += 1;
        lo = f64::INFINITY;
        hi = f64::NEG_INFINITY;
        for s in 0..ns {
            let best = mdp
                .available_actions(s)
                .map(|a| backup(mdp, &h, s, a))
                .fold(f64::NEG_INFINITY, f64::max);
            th[s] = best;
            let d = best - h[s];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        span = tau * (hi - lo);
        if span < config.span_tolerance {
            break;
        }
        for s in 0..ns {
            h[s] += tau * (th[s] - h[s]);
        }
        let shift = h[reference];
        h.iter_mut().for_each(|x| *x -= shift);
    }
    if !(span < config.span_tolerance) {
        return Err(SolverError::NoConvergence { iterations, span });
    }
    let gain = 0.5 * (lo + hi);
    let mut q = QTable::filled(ns, na, f64::NEG_INFINITY);
    for s in 0..ns {
        for a in mdp.available_actions(s) {
            q.set(s, a, backup(mdp, &h, s, a) - gain);
        }
    }
    let pin = mdp.available_actions(reference).map(|a| q.get(reference, a)).fold(f64::NEG_INFINITY, f64::max);
    for s in 0..ns {
        for a in mdp.available_actions(s) {
            q.set(s, a, q.get(s, a) - pin);
        }
    }
    let policy = StationaryPolicy::new(
        (0..ns)
            .map(|s| argmax_by(mdp.available_actions(s), |a| q.get(s, a)).expect("state without actions"))
            .collect(),
    );
    let residual = bellman_residual(mdp, gain, &q);
    Ok(Solution {
        values: GainAndBias { gain, bias_q: q, reference_state: reference },
        policy,
        iterations,
        residual,
    })
}

/// Actions within `tol` of the best value at each state.
pub fn optimal_action_sets(mdp: &Mdp, q: &QTable, tol: f64) -> Vec<Vec<usize>> {
    (0..mdp.num_states())
        .map(|s| {
            let best = mdp.available_actions(s).map(|a| q.get(s, a)).fold(f64::NEG_INFINITY, f64::max);
            mdp.available_actions(s).filter(|&a| q.get(s, a) >= best - tol).collect()
        })
        .collect()
}

/// Samples a successor of `(s, a)`.
pub fn sample_successor<R: Rng + ?Sized>(mdp: &Mdp, s: usize, a: usize, rng: &mut R) -> (usize, f64) {
    let row = mdp.successors(s, a);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for t in row {
        acc += t.prob;
        if u < acc {
            return (t.next, t.reward);
        }
    }
    let last = row.last().expect("sampled an unavailable action");
    (last.next, last.reward)
}

/// Empirical mean reward of a `steps`-long rollout from the initial state.
pub fn monte_carlo_gain(mdp: &Mdp, policy: &StationaryPolicy, steps: u64, seed: u64) -> f64 {
    assert!(steps >= 1, "steps must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = mdp.initial_state();
    let mut total = 0.0;
    for _ in 0..steps {
        let (next, r) = sample_successor(mdp, s, policy.action(s), &mut rng);
        total += r;
        s = next;
    }
    total / steps as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::MdpBuilder;

    fn cycle(rewards: [f64; 2]) -> Mdp {
        let mut b = MdpBuilder::new(2, 1);
        b.transition(0, 0, 1, 1.0, rewards[0]);
        b.transition(1, 0, 0, 1.0, rewards[1]);
        b.build().unwrap()
    }

    #[test]
    fn constant_reward_self_loop() {
        let mut b = MdpBuilder::new(1, 1);
        b.transition(0, 0, 0, 1.0, 1.0);
        let mdp = b.build().unwrap();
        let pi = StationaryPolicy::new(vec![0]);
        assert_eq!(policy_gain(&mdp, &pi).unwrap(), 1.0);
        assert_eq!(monte_carlo_gain(&mdp, &pi, 17, 3), 1.0);
    }

    #[test]
    fn deterministic_two_cycle() {
        let mdp = cycle([0.0, 4.0]);
        let pi = StationaryPolicy::new(vec![0, 0]);
        assert!((policy_gain(&mdp, &pi).unwrap() - 2.0).abs() < 1e-12);
        let mc = monte_carlo_gain(&mdp, &pi, 1000, 1);
        assert!((mc - 2.0).abs() <= 0.004);
        // periodic chain still converges thanks to the aperiodicity transform
        let sol = solve_average_reward(&mdp).unwrap();
        assert!((sol.gain() - 2.0).abs() < 1e-9);
        assert!(sol.residual < 1e-9);
    }

    #[test]
    fn picks_larger_constant() {
        let mut b = MdpBuilder::new(1, 2);
        b.transition(0, 0, 0, 1.0, 1.0).transition(0, 1, 0, 1.0, 3.0);
        let mdp = b.build().unwrap();
        let sol = solve_average_reward(&mdp).unwrap();
        assert!((sol.gain() - 3.0).abs() < 1e-12);
        assert_eq!(sol.policy.action(0), 1);
        assert_eq!(sol.q().get(0, 1), 0.0);
        assert!((sol.q().get(0, 0) + 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_multichain_policy() {
        let mut b = MdpBuilder::new(2, 2);
        b.transition(0, 0, 0, 1.0, 1.0).transition(0, 1, 1, 1.0, 0.0);
        b.transition(1, 0, 1, 1.0, 2.0).transition(1, 1, 0, 1.0, 0.0);
        let mdp = b.build().unwrap();
        let err = policy_gain(&mdp, &StationaryPolicy::new(vec![0, 0])).unwrap_err();
        assert_eq!(err, SolverError::NonUnichain { classes: 2 });
        assert!(is_communicating(&mdp));
        let sol = solve_average_reward(&mdp).unwrap();
        assert!((sol.gain() - 2.0).abs() < 1e-9);
        assert_eq!(sol.policy.actions(), &[1, 0]);
    }

    #[test]
    fn rejects_non_communicating() {
        let mut b = MdpBuilder::new(2, 1);
        b.transition(0, 0, 1, 1.0, 0.0).transition(1, 0, 1, 1.0, 1.0);
        let mdp = b.build().unwrap();
        assert_eq!(solve_average_reward(&mdp).unwrap_err(), SolverError::NotCommunicating);
        // transient state 0 is fine for policy evaluation
        assert_eq!(policy_gain(&mdp, &StationaryPolicy::new(vec![0, 0])).unwrap(), 1.0);
    }

    #[test]
    fn iteration_cap_reports_no_convergence() {
        let mut b = MdpBuilder::new(5, 1);
        for s in 0..5 {
            b.transition(s, 0, (s + 1) % 5, 1.0, s as f64);
        }
        let mdp = b.build().unwrap();
        let cfg = SolverConfig { max_iterations: 2, ..Default::default() };
        assert!(matches!(
            solve_average_reward_with(&mdp, &cfg),
            Err(SolverError::NoConvergence { iterations: 2, .. })
        ));
    }

    #[test]
    fn invalid_policy_is_reported() {
        let mut b = MdpBuilder::new(1, 2);
        b.transition(0, 0, 0, 1.0, 1.0);
        let mdp = b.build().unwrap();
        assert_eq!(
            policy_gain(&mdp, &StationaryPolicy::new(vec![1])).unwrap_err(),
            SolverError::InvalidPolicy(vec![0])
        );
    }
}
