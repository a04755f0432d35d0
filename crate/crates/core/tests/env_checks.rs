use std::collections::VecDeque;

use avgshape::env::cartpole::{dynamics, CartState, Discretizer};
use avgshape::env::gridworld::{gridworld_as_mdp, Grid, GridModel, GridworldConfig, GridworldEnv, DOWN, RIGHT, UP};
use avgshape::env::sweep::{SweepConfig, SweepEnv, SweepVariant};
use avgshape::env::{reference_advice, EnvName, Task};
use avgshape::learning::{EnvRng, Environment};
use avgshape::mdp::StationaryPolicy;
use avgshape::solver::{policy_gain, solve_average_reward};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use statrs::distribution::{ChiSquared, ContinuousCDF};

const BUDGET: usize = 100;

/// Simulator placed at `cell` with `t` steps already used.
fn grid_env_at(config: &GridworldConfig, cell: usize, t: usize, rng: &mut EnvRng) -> GridworldEnv {
    let mut env = GridworldEnv::new(config.clone());
    let grid = env.grid().clone();
    let corner = grid.cell(0, 0).unwrap();
    env.set_cell(corner);
    for _ in 0..t {
        env.step(UP, rng);
    }
    assert_eq!(env.steps_since_teleport() as usize, t);
    if t == 0 {
        env.set_cell(cell);
    }
    env
}

#[test]
fn gridworld_simulator_matches_exact_model() {
    let config = GridworldConfig::standard();
    let grid = Grid::new(config.clone());
    let mdp = gridworld_as_mdp(&config, GridModel::Counter);
    let corner = grid.cell(0, 0).unwrap();
    let rows = [
        (grid.cell(4, 5).unwrap(), 0, DOWN),
        (grid.cell(5, 4).unwrap(), 0, RIGHT),
        (grid.cell(2, 3).unwrap(), 0, UP),
        (corner, BUDGET - 1, UP),
        (corner, BUDGET - 1, RIGHT),
    ];
    let samples = 100_000;
    let mut rng = EnvRng::seed_from_u64(99);
    for (cell, t, a) in rows {
        let s = cell * BUDGET + t;
        let row = mdp.successors(s, a);
        let mut counts = vec![0u64; mdp.num_states()];
        for _ in 0..samples {
            let mut env = grid_env_at(&config, cell, t, &mut rng);
            let out = env.step(a, &mut rng);
            let next = out.next * BUDGET + env.steps_since_teleport() as usize;
            let expected = row.iter().find(|x| x.next == next).expect("successor outside the model row");
            assert_eq!(out.reward, expected.reward);
            counts[next] += 1;
        }
        if row.len() == 1 {
            assert_eq!(counts[row[0].next], samples);
            continue;
        }
        let chi2: f64 = row
            .iter()
            .map(|x| {
                let e = x.prob * samples as f64;
                let o = counts[x.next] as f64;
                (o - e) * (o - e) / e
            })
            .sum();
        let critical = ChiSquared::new((row.len() - 1) as f64).unwrap().inverse_cdf(0.999);
        assert!(chi2 < critical, "row ({cell}, {t}, {a}): chi2 {chi2} >= {critical}");
    }
}

#[test]
fn gridworld_simulated_gain_matches_oracle() {
    let config = GridworldConfig::standard();
    let memoryless = gridworld_as_mdp(&config, GridModel::Memoryless);
    let pi = solve_average_reward(&memoryless).unwrap().policy;
    let exact_model = gridworld_as_mdp(&config, GridModel::Counter);
    let lifted = StationaryPolicy::new((0..exact_model.num_states()).map(|s| pi.action(s / BUDGET)).collect());
    let exact = policy_gain(&exact_model, &lifted).unwrap();

    let mut env = GridworldEnv::new(config);
    let mut rng = EnvRng::seed_from_u64(17);
    let mut s = env.reset(&mut rng);
    let batches = 100;
    let per = 10_000;
    let mut means = Vec::new();
    for _ in 0..batches {
        let mut acc = 0.0;
        for _ in 0..per {
            let out = env.step(pi.action(s), &mut rng);
            acc += out.reward;
            s = out.next;
        }
        means.push(acc / per as f64);
    }
    let m = means.iter().sum::<f64>() / batches as f64;
    let se = (means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (batches as f64 - 1.0) / batches as f64).sqrt();
    assert!((m - exact).abs() <= 3.0 * se, "simulated {m} vs exact {exact} (se {se})");
}

#[test]
fn cells_above_the_wall_cannot_reach_goal_moving_down_or_right() {
    let grid = Grid::new(GridworldConfig::with_wall());
    let goal = grid.goal_cell();
    for start in 0..grid.num_cells() {
        let (r, c) = grid.pos(start);
        let mut seen = vec![false; grid.num_cells()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(x) = queue.pop_front() {
            for a in [DOWN, RIGHT] {
                let y = grid.move_from(x, a);
                if !seen[y] {
                    seen[y] = true;
                    queue.push_back(y);
                }
            }
        }
        let above_wall = r < 2 && c >= 2;
        assert_eq!(seen[goal], !above_wall, "cell {:?}", (r, c));
    }
}

/// Visibility by sampling 4096 points along the segment between cell centres.
fn sampled_visibility(task: &Task, a: (usize, usize), b: (usize, usize)) -> bool {
    let layout = &task.geometry().unwrap().layout;
    let (dy, dx) = (b.0 as f64 - a.0 as f64, b.1 as f64 - a.1 as f64);
    if dy * dy + dx * dx > 25.0 {
        return false;
    }
    (0..=4096).all(|i| {
        let t = i as f64 / 4096.0;
        let y = a.0 as f64 + 0.5 + t * dy;
        let x = a.1 as f64 + 0.5 + t * dx;
        let (r, c) = (y.floor(), x.floor());
        let interior = y > r + 1e-9 && y < r + 1.0 - 1e-9 && x > c + 1e-9 && x < c + 1.0 - 1e-9;
        !(interior && layout.is_wall(r as usize, c as usize))
    })
}

#[test]
fn human_visible_label_matches_sampled_rays() {
    let task = Task::new(EnvName::SweepHuman);
    let geo = task.geometry().unwrap();
    let mut visible = 0;
    for o in 0..geo.num_observations() {
        let (robot, human) = geo.decode(o);
        let want = sampled_visibility(&task, geo.floor_pos(robot), geo.floor_pos(geo.human_cells()[human]));
        assert_eq!(geo.label(o).contains(1), want, "robot {:?} human {:?}", geo.floor_pos(robot), geo.floor_pos(geo.human_cells()[human]));
        visible += want as usize;
    }
    assert!(visible > 0 && visible < geo.num_observations());
}

#[test]
fn trash_appears_at_configured_rates() {
    let task = Task::new(EnvName::SweepKitchen);
    let geo = std::sync::Arc::new(task.geometry().unwrap().clone());
    let mut env = SweepEnv::with_geometry(SweepConfig::new(SweepVariant::Kitchen), geo.clone(), 3);
    let stay = (0..geo.num_actions()).find(|&a| geo.offset(a) == (0, 0)).unwrap();
    let mut rng = EnvRng::seed_from_u64(3);
    env.reset(&mut rng);
    let prone = env.trash_prone().to_vec();
    assert!(!prone.is_empty());
    let mut trials = vec![0u64; geo.num_floor()];
    let mut hits = vec![0u64; geo.num_floor()];
    for _ in 0..1_000_000 {
        let before = env.dirty().to_vec();
        env.step(stay, &mut rng);
        for &f in &prone {
            if f != env.robot() && !before[f] {
                trials[f] += 1;
                hits[f] += env.dirty()[f] as u64;
            }
        }
    }
    for &f in &prone {
        let p = env.frequency(f);
        assert!((1.0 / 20.0..1.0 / 10.0).contains(&p));
        let n = trials[f] as f64;
        let rate = hits[f] as f64 / n;
        let sigma = (p * (1.0 - p) / n).sqrt();
        assert!((rate - p).abs() <= 3.0 * sigma, "cell {f}: rate {rate} vs {p} (sigma {sigma})");
    }
}

fn floor_bfs(task: &Task, targets: impl Fn(usize) -> bool) -> Vec<usize> {
    let geo = task.geometry().unwrap();
    let mut dist = vec![usize::MAX; geo.num_floor()];
    let mut queue = VecDeque::new();
    for f in (0..geo.num_floor()).filter(|&f| targets(f)) {
        dist[f] = 0;
        queue.push_back(f);
    }
    while let Some(f) = queue.pop_front() {
        let (r, c) = geo.floor_pos(f);
        for (dr, dc) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
            let (r2, c2) = (r as isize + dr, c as isize + dc);
            if r2 < 0 || c2 < 0 {
                continue;
            }
            if let Some(g) = geo.floor_cell(r2 as usize, c2 as usize) {
                if dist[g] == usize::MAX {
                    dist[g] = dist[f] + 1;
                    queue.push_back(g);
                }
            }
        }
    }
    dist
}

#[test]
fn kitchen_potential_is_negative_distance_with_closer_bonus() {
    let task = Task::new(EnvName::SweepKitchen);
    let geo = task.geometry().unwrap();
    let advice = task.advice().unwrap();
    let dist = floor_bfs(&task, |f| geo.is_kitchen(f));
    assert_eq!(advice.potential.c(), 1.0);
    for f in 0..geo.num_floor() {
        for a in 0..geo.num_actions() {
            let Some(g) = geo.robot_move(f, a) else { continue };
            let phi = advice.potential.get(f, a);
            if advice.region.contains(f, a) {
                assert_eq!(phi, 1.0);
            } else {
                let bonus = if dist[g] < dist[f] { 1.0 } else { 0.0 };
                assert_eq!(phi, -(dist[f] as f64) + bonus, "cell {:?} action {a}", geo.floor_pos(f));
            }
        }
    }
}

#[test]
fn hidden_human_potential_is_minus_six() {
    let task = Task::new(EnvName::SweepHuman);
    let geo = task.geometry().unwrap();
    let advice = task.advice().unwrap();
    let mut hidden = 0;
    for o in 0..geo.num_observations() {
        let (robot, human) = geo.decode(o);
        if geo.human_visible(robot, human) {
            continue;
        }
        hidden += 1;
        for a in (0..geo.num_actions()).filter(|&a| geo.robot_move(robot, a).is_some()) {
            assert!(!advice.region.contains(o, a));
            assert_eq!(advice.potential.get(o, a), -6.0);
        }
    }
    assert!(hidden > 0);
    assert_eq!(advice.potential.c(), 1.0);
}

#[test]
fn inaccurate_cartpole_advice_uses_narrow_range() {
    assert_eq!(reference_advice(EnvName::CartPoleInaccurate).range, Some((-2.0, 2.0)));
    assert_eq!(reference_advice(EnvName::CartPole).range, Some((-2.4, 2.4)));
}

#[test]
fn every_task_is_continuing() {
    for name in EnvName::ALL {
        let task = Task::new(name);
        let mut env = task.instantiate(4);
        let (ns, na) = (env.num_states(), env.num_actions());
        let avail = env.availability();
        assert_eq!(avail.len(), ns * na);
        for s in 0..ns {
            assert!((0..na).any(|a| avail[s * na + a]), "{name}: state {s} has no action");
        }
        let mut rng = EnvRng::seed_from_u64(4);
        let mut s = env.reset(&mut rng);
        for _ in 0..5000 {
            let acts: Vec<usize> = (0..na).filter(|&a| avail[s * na + a]).collect();
            let out = env.step(acts[rng.random_range(0..acts.len())], &mut rng);
            assert!(out.next < ns && out.reward.is_finite());
            s = out.next;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cartpole_clamps_speed_and_wraps_angle(
        x in -3.0f64..3.0,
        x_dot in -1.0f64..1.0,
        theta in -3.1f64..3.1,
        theta_dot in -8.0f64..8.0,
        actions in proptest::collection::vec(0usize..2, 500),
    ) {
        let disc = Discretizer::default();
        let mut s = CartState { x, x_dot, theta, theta_dot };
        for a in actions {
            s = dynamics(s, a);
            prop_assert!(s.x_dot.abs() <= 1.0);
            prop_assert!(s.theta > -std::f64::consts::PI && s.theta <= std::f64::consts::PI);
            prop_assert!(disc.index(&s) < disc.num_states());
        }
    }
}
