mod common;

use avgshape::learning::{
    recover_policy, run_training, Exploration, LearnerConfig, MdpEnv, RateSchedule, RhoMode, ShieldMask, Transition,
};
use avgshape::potential::PotentialTable;
use avgshape::solver::{optimal_action_sets, policy_gain};
use proptest::prelude::*;

fn expected(mdp: &avgshape::mdp::Mdp, s: usize, a: usize, err: impl Fn(&Transition) -> f64) -> f64 {
    mdp.successors(s, a).iter().map(|t| t.prob * err(&Transition { s, a, r: t.reward, next: t.next })).sum()
}

#[test]
fn optimum_is_a_fixed_point_of_r_learning() {
    let (mdp, sol) = common::random_instance(21, 6, 3);
    let st = common::oracle_state(&mdp, &sol, None);
    for s in 0..mdp.num_states() {
        for a in mdp.available_actions(s) {
            assert!(expected(&mdp, s, a, |t| st.td_error(t, None)).abs() < 1e-9);
        }
    }
}

#[test]
fn shifted_optimum_is_a_fixed_point_of_shaped_learning() {
    let (mdp, sol) = common::random_instance(22, 6, 3);
    let values = common::random_potential(22, mdp.num_states(), mdp.num_actions());
    let phi = PotentialTable::from_values(mdp.num_states(), mdp.num_actions(), 1.0, values.clone());
    let st = common::oracle_state(&mdp, &sol, Some(&phi));
    for s in 0..mdp.num_states() {
        for a in mdp.available_actions(s) {
            assert!(expected(&mdp, s, a, |t| st.shaped_td_error(t, &phi)).abs() < 1e-9);
        }
    }
    assert!(common::max_expected_shaped_error(&mdp, &st.q, sol.gain(), &values) < 1e-9);
    let pi = recover_policy(&st, Some(&phi));
    let opt = optimal_action_sets(&mdp, sol.q(), 1e-9);
    assert!((0..mdp.num_states()).all(|s| opt[s].contains(&pi.action(s))));
}

fn small_config(seed: u64) -> LearnerConfig {
    LearnerConfig {
        alpha: 0.2,
        beta: 0.05,
        rates: RateSchedule::Constant,
        rho_mode: RhoMode::PerState,
        exploration: Exploration::Softmax { tau0: 2.0, tau_min: 0.1 },
        seed,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shaped_fixed_point_recovery_and_gain_invariance(seed in any::<u64>()) {
        let (mdp, sol) = common::random_instance(seed, 10, 3);
        let (ns, na) = (mdp.num_states(), mdp.num_actions());
        let values = common::random_potential(seed, ns, na);
        let phi = PotentialTable::from_values(ns, na, 5.0, values.clone());
        let st = common::oracle_state(&mdp, &sol, Some(&phi));
        prop_assert!(common::max_expected_shaped_error(&mdp, &st.q, sol.gain(), &values) < 1e-9);
        let shaped_sets = common::argmax_sets(&mdp, |s, a| st.q.get(s, a) + phi.get(s, a), 1e-9);
        prop_assert_eq!(shaped_sets, optimal_action_sets(&mdp, sol.q(), 1e-9));
        let shaped = common::shaped_reward_mdp(&mdp, &values, &sol.policy);
        prop_assert!((policy_gain(&shaped, &sol.policy).unwrap() - sol.gain()).abs() < 1e-9);
    }

    #[test]
    fn constant_potential_matches_baseline_bit_for_bit(seed in 0u64..1000, c in -50.0f64..50.0) {
        let (mdp, _) = common::random_instance(seed, 6, 3);
        let cfg = small_config(seed);
        let phi = PotentialTable::constant(mdp.num_states(), mdp.num_actions(), c);
        let base = run_training(&mut MdpEnv::new(&mdp), &cfg, None, None, 5000, 500).unwrap();
        let shaped = run_training(&mut MdpEnv::new(&mdp), &cfg, Some(&phi), None, 5000, 500).unwrap();
        prop_assert_eq!(base.digest, shaped.digest);
        prop_assert_eq!(base.state.q.values(), shaped.state.q.values());
        prop_assert_eq!(&base.state.rho, &shaped.state.rho);
        prop_assert_eq!(base.windows, shaped.windows);
    }

    #[test]
    fn shield_always_leaves_an_action(
        ns in 1usize..20,
        na in 1usize..5,
        bits in proptest::collection::vec(any::<(bool, bool)>(), 100),
    ) {
        let mut available: Vec<bool> = (0..ns * na).map(|i| bits[i % bits.len()].0).collect();
        for s in 0..ns {
            available[s * na] = true;
        }
        let allowed: Vec<bool> = (0..ns * na).map(|i| bits[(i * 7 + 3) % bits.len()].1 && available[i]).collect();
        let mask = ShieldMask::from_allowed(na, allowed.clone(), &available);
        for s in 0..ns {
            prop_assert!((0..na).any(|a| mask.allows(s, a) && available[s * na + a]));
            let had = (0..na).any(|a| allowed[s * na + a]);
            prop_assert_eq!(mask.is_fallback(s), !had);
        }
    }
}

#[test]
fn shielded_learner_only_takes_allowed_actions() {
    let (mdp, _) = common::random_instance(5, 6, 3);
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let allowed: Vec<bool> = (0..ns * na).map(|i| i % na == 0).collect();
    let mask = ShieldMask::from_allowed(na, allowed, mdp.availability());
    let run = run_training(&mut MdpEnv::new(&mdp), &small_config(5), None, Some(&mask), 3000, 300).unwrap();
    for s in 0..ns {
        for a in 1..na {
            assert_eq!(run.state.visits(s, a), 0);
        }
    }
}
