mod common;

use avgshape::env::gridworld::{gridworld_as_mdp, Grid, GridModel, GridworldConfig, DOWN, RIGHT};
use avgshape::mdp::StationaryPolicy;
use avgshape::solver::{bellman_residual, monte_carlo_gain, policy_gain, solve_average_reward};
use proptest::prelude::*;

#[test]
fn policy_gain_matches_long_rollout() {
    let mdp = common::ergodic_mdp(7, 5, 2);
    let policy = StationaryPolicy::new(vec![0, 1, 0, 1, 0]);
    let exact = policy_gain(&mdp, &policy).unwrap();
    let (mean, se) = common::rollout_mean_and_se(&mdp, &policy, 1_000_000, 100, 7);
    assert!((mean - exact).abs() <= 3.0 * se, "rollout {mean} vs exact {exact} (se {se})");
    let mc = monte_carlo_gain(&mdp, &policy, 1_000_000, 7);
    assert!((mc - exact).abs() <= 3.0 * se, "monte_carlo_gain {mc} vs exact {exact} (se {se})");
}

#[test]
fn optimal_gain_matches_long_rollout() {
    let mdp = common::ergodic_mdp(7, 5, 3);
    let sol = solve_average_reward(&mdp).unwrap();
    let (_, se) = common::rollout_mean_and_se(&mdp, &sol.policy, 1_000_000, 100, 8);
    let mc = monte_carlo_gain(&mdp, &sol.policy, 1_000_000, 8);
    assert!((mc - sol.gain()).abs() <= 3.0 * se);
}

#[test]
fn optimum_matches_policy_enumeration() {
    let mdp = common::ergodic_mdp(11, 3, 3);
    let sol = solve_average_reward(&mdp).unwrap();
    assert_eq!(common::all_policies(&mdp).len(), 27);
    let mut best = f64::NEG_INFINITY;
    let mut best_policies = Vec::new();
    for p in common::all_policies(&mdp) {
        let Ok(g) = policy_gain(&mdp, &p) else { continue };
        if g > best + 1e-9 {
            best = g;
            best_policies = vec![p];
        } else if (g - best).abs() <= 1e-9 {
            best_policies.push(p);
        }
    }
    assert!((sol.gain() - best).abs() < 1e-9);
    assert!(best_policies.contains(&sol.policy), "{:?} not among {:?}", sol.policy, best_policies);
}

#[test]
fn gridworld_optimum_takes_monotone_shortest_paths() {
    let config = GridworldConfig::standard();
    let grid = Grid::new(config.clone());
    let mdp = gridworld_as_mdp(&config, GridModel::Memoryless);
    let sol = solve_average_reward(&mdp).unwrap();
    let goal = grid.goal_cell();
    let (gr, gc) = grid.pos(goal);
    for start in 0..grid.num_cells() {
        if start == goal {
            continue;
        }
        let (r, c) = grid.pos(start);
        let mut cell = start;
        let mut steps = 0;
        while cell != goal {
            let a = sol.policy.action(cell);
            assert!(a == DOWN || a == RIGHT, "action {a} at {:?}", grid.pos(cell));
            cell = grid.move_from(cell, a);
            steps += 1;
            assert!(steps <= 10);
        }
        assert_eq!(steps, (gr - r) + (gc - c), "path from {:?}", (r, c));
    }
}

#[test]
fn solver_is_deterministic() {
    let (mdp, _) = common::random_instance(3, 8, 3);
    let a = solve_average_reward(&mdp).unwrap();
    let b = solve_average_reward(&mdp).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rows_are_stochastic_and_bellman_holds(seed in any::<u64>()) {
        let (mdp, sol) = common::random_instance(seed, 10, 3);
        prop_assert!(mdp.validate().is_empty());
        for s in 0..mdp.num_states() {
            for a in mdp.available_actions(s) {
                let total: f64 = mdp.successors(s, a).iter().map(|t| t.prob).sum();
                prop_assert!((total - 1.0).abs() <= 1e-12);
            }
        }
        prop_assert!(bellman_residual(&mdp, sol.gain(), sol.q()) < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn gains_agree_with_simulation_and_optimum_dominates(seed in any::<u64>()) {
        let (mdp, sol) = common::random_instance(seed, 6, 2);
        let mut best = f64::NEG_INFINITY;
        for p in common::all_policies(&mdp) {
            let Ok(g) = policy_gain(&mdp, &p) else { continue };
            best = best.max(g);
            let (m, se) = common::rollout_mean_and_se(&mdp, &p, 100_000, 50, seed);
            prop_assert!((m - g).abs() <= 5.0 * se + 1e-9, "policy {:?}: {} vs {} (se {})", p, m, g, se);
        }
        prop_assert!((best - sol.gain()).abs() < 1e-9);
        prop_assert!((policy_gain(&mdp, &sol.policy).unwrap() - best).abs() < 1e-9);
    }
}
