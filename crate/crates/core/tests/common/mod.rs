#![allow(dead_code)]

use avgshape::mdp::{Mdp, MdpBuilder, StationaryPolicy};
use avgshape::solver::{is_communicating, policy_gain, solve_average_reward, Solution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random MDP with 1 to 3 successors per pair and rewards in [0, 1).
pub fn random_mdp(rng: &mut ChaCha8Rng, ns: usize, na: usize) -> Mdp {
    let mut b = MdpBuilder::new(ns, na);
    for s in 0..ns {
        for a in 0..na {
            let k = rng.random_range(1..=3.min(ns));
            let mut targets: Vec<usize> = Vec::new();
            while targets.len() < k {
                let t = rng.random_range(0..ns);
                if !targets.contains(&t) {
                    targets.push(t);
                }
            }
            let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = w.iter().sum();
            let mut acc = 0.0;
            for (i, &t) in targets.iter().enumerate() {
                let p = if i + 1 == k { 1.0 - acc } else { w[i] / total };
                acc += p;
                b.transition(s, a, t, p, rng.random::<f64>());
            }
        }
    }
    b.build().unwrap()
}

/// Random communicating MDP whose optimal policy is unichain, with its
/// exact solution.
pub fn random_instance(seed: u64, max_states: usize, max_actions: usize) -> (Mdp, Solution) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let ns = rng.random_range(2..=max_states);
        let na = rng.random_range(1..=max_actions);
        let mdp = random_mdp(&mut rng, ns, na);
        if !is_communicating(&mdp) {
            continue;
        }
        let sol = solve_average_reward(&mdp).unwrap();
        if policy_gain(&mdp, &sol.policy).is_ok() {
            return (mdp, sol);
        }
    }
}

/// Random potential table with entries in [-5, 5).
pub fn random_potential(seed: u64, ns: usize, na: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
    (0..ns * na).map(|_| rng.random_range(-5.0..5.0)).collect()
}

pub fn all_policies(mdp: &Mdp) -> Vec<StationaryPolicy> {
    StationaryPolicy::enumerate(mdp)
}

/// MDP in which every action reaches every state with positive probability.
pub fn ergodic_mdp(seed: u64, ns: usize, na: usize) -> Mdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = MdpBuilder::new(ns, na);
    for s in 0..ns {
        for a in 0..na {
            let w: Vec<f64> = (0..ns).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = w.iter().sum();
            for (t, x) in w.iter().enumerate() {
                b.add_mass(s, a, t, x / total, rng.random::<f64>());
            }
        }
    }
    b.build().unwrap()
}

/// Mean reward of a rollout and its standard error from batch means.
pub fn rollout_mean_and_se(mdp: &Mdp, policy: &StationaryPolicy, steps: u64, batches: u64, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per = steps / batches;
    let mut s = mdp.initial_state();
    let mut means = Vec::with_capacity(batches as usize);
    for _ in 0..batches {
        let mut acc = 0.0;
        for _ in 0..per {
            let row = mdp.successors(s, policy.action(s));
            let u: f64 = rng.random();
            let mut c = 0.0;
            let mut pick = row.len() - 1;
            for (i, t) in row.iter().enumerate() {
                c += t.prob;
                if u < c {
                    pick = i;
                    break;
                }
            }
            acc += row[pick].reward;
            s = row[pick].next;
        }
        means.push(acc / per as f64);
    }
    let m = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (batches as f64 - 1.0);
    (m, (var / batches as f64).sqrt())
}

/// Random product graph with at most 12 states and 3 actions.
pub fn random_product(seed: u64) -> avgshape::product::ProductMdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=12);
    let na = rng.random_range(1..=3);
    let p_accept = rng.random_range(0.5..0.95);
    let accepting: Vec<bool> = (0..n).map(|_| rng.random_bool(p_accept)).collect();
    let available: Vec<bool> = (0..n * na).map(|i| i % na == 0 || rng.random_bool(0.8)).collect();
    let rows = (0..n * na)
        .map(|i| {
            if !available[i] {
                return Vec::new();
            }
            let k = rng.random_range(1..=3.min(n));
            let mut targets: Vec<usize> = Vec::new();
            while targets.len() < k {
                let t = rng.random_range(0..n);
                if !targets.contains(&t) {
                    targets.push(t);
                }
            }
            targets.into_iter().map(|t| (t, 1.0 / k as f64)).collect()
        })
        .collect();
    avgshape::product::ProductMdp::from_raw(na, accepting, available, rows, 0).unwrap()
}

/// Pairs from which staying in the accepting states forever is possible,
/// found by enumerating every subset of states: the winning states are the
/// union of all subsets in which each state has an action whose successors
/// all stay in the subset.
pub fn brute_force_region(prod: &avgshape::product::ProductMdp) -> Vec<bool> {
    let n = prod.num_states();
    let na = prod.num_actions();
    assert!(n <= 16);
    let inside = |mask: u32, v: usize| mask >> v & 1 == 1;
    let keeps = |mask: u32, v: usize, a: usize| {
        prod.is_available(v, a) && prod.successors(v, a).iter().all(|&(w, _)| inside(mask, w))
    };
    let mut win = 0u32;
    for mask in 0..1u32 << n {
        let closed = (0..n)
            .filter(|&v| inside(mask, v))
            .all(|v| prod.is_accepting(v) && (0..na).any(|a| keeps(mask, v, a)));
        if closed {
            win |= mask;
        }
    }
    (0..n * na).map(|i| inside(win, i / na) && keeps(win, i / na, i % na)).collect()
}

/// Learner state holding `Q* − Φ` and the optimal gain at every state.
pub fn oracle_state(mdp: &Mdp, sol: &Solution, phi: Option<&avgshape::potential::PotentialTable>) -> avgshape::learning::LearnerState {
    use avgshape::learning::{LearnerState, RhoMode};
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mut st = LearnerState::new(ns, na, mdp.availability().to_vec(), RhoMode::PerState);
    for s in 0..ns {
        for a in 0..na {
            st.q.set(s, a, sol.q().get(s, a) - phi.map_or(0.0, |p| p.get(s, a)));
        }
        st.rho[s] = sol.gain();
    }
    st
}

/// Largest `|E[δ(s,a)]|` over all pairs, with the expectation over successors
/// computed from the model and the greedy successor action found here
/// rather than by the learner.
pub fn max_expected_shaped_error(mdp: &Mdp, q_hat: &avgshape::mdp::QTable, rho: f64, phi: &[f64]) -> f64 {
    let na = mdp.num_actions();
    let value = |s: usize, a: usize| q_hat.get(s, a) + phi[s * na + a];
    let mut worst: f64 = 0.0;
    for s in 0..mdp.num_states() {
        for a in mdp.available_actions(s) {
            let mut e = 0.0;
            for t in mdp.successors(s, a) {
                let a_plus = mdp
                    .available_actions(t.next)
                    .max_by(|&x, &y| value(t.next, x).total_cmp(&value(t.next, y)))
                    .unwrap();
                let f = phi[t.next * na + a_plus] - phi[s * na + a];
                e += t.prob * (t.reward + f + q_hat.get(t.next, a_plus) - rho - q_hat.get(s, a));
            }
            worst = worst.max(e.abs());
        }
    }
    worst
}

/// The MDP with reward `R + Φ(s', π*(s')) − Φ(s, a)`.
pub fn shaped_reward_mdp(mdp: &Mdp, phi: &[f64], policy: &StationaryPolicy) -> Mdp {
    let na = mdp.num_actions();
    mdp.map_rewards(|s, a, s2, r| r + phi[s2 * na + policy.action(s2)] - phi[s * na + a])
}

/// Argmax sets of `values` at each state, with ties within `tol`.
pub fn argmax_sets(mdp: &Mdp, values: impl Fn(usize, usize) -> f64, tol: f64) -> Vec<Vec<usize>> {
    (0..mdp.num_states())
        .map(|s| {
            let best = mdp.available_actions(s).map(|a| values(s, a)).fold(f64::NEG_INFINITY, f64::max);
            mdp.available_actions(s).filter(|&a| values(s, a) >= best - tol).collect()
        })
        .collect()
}
