//! Continuing gridworld: +100 for reaching the goal cell, after which the
//! agent is teleported to a uniformly random cell. The agent is also
//! teleported when it has not reached the goal within the step budget.

use rand::Rng;

use crate::labels::{ApRegistry, Letter};
use crate::learning::{EnvRng, Environment, StepOutcome};
use crate::mdp::{Mdp, MdpBuilder};

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;
pub const ACTION_NAMES: [&str; 4] = ["up", "down", "left", "right"];

#[derive(Debug, Clone, PartialEq)]
pub struct GridworldConfig {
    pub rows: usize,
    pub cols: usize,
    pub goal: (usize, usize),
    pub start: (usize, usize),
    pub walls: Vec<(usize, usize)>,
    pub goal_reward: f64,
    pub step_budget: u32,
}

impl GridworldConfig {
    /// 6×6 grid, goal in the bottom-right corner, start top-left.
    pub fn standard() -> Self {
        Self { rows: 6, cols: 6, goal: (5, 5), start: (0, 0), walls: Vec::new(), goal_reward: 100.0, step_budget: 100 }
    }

    /// The standard grid with a wall on row 2 spanning columns 2 to 5.
    pub fn with_wall() -> Self {
        Self { walls: (2..=5).map(|c| (2, c)).collect(), ..Self::standard() }
    }
}

/// Grid geometry: open cells are numbered row-major, skipping walls.
#[derive(Debug, Clone)]
pub struct Grid {
    pub config: GridworldConfig,
    cell_of: Vec<Option<usize>>,
    pos_of: Vec<(usize, usize)>,
}

impl Grid {
    pub fn new(config: GridworldConfig) -> Self {
        assert!(config.rows > 0 && config.cols > 0);
        let mut cell_of = vec![None; config.rows * config.cols];
        let mut pos_of = Vec::new();
        for r in 0..config.rows {
            for c in 0..config.cols {
                if !config.walls.contains(&(r, c)) {
                    cell_of[r * config.cols + c] = Some(pos_of.len());
                    pos_of.push((r, c));
                }
            }
        }
        Self { config, cell_of, pos_of }
    }

    pub fn num_cells(&self) -> usize {
        self.pos_of.len()
    }

    pub fn cell(&self, r: usize, c: usize) -> Option<usize> {
        if r < self.config.rows && c < self.config.cols {
            self.cell_of[r * self.config.cols + c]
        } else {
            None
        }
    }

    pub fn pos(&self, cell: usize) -> (usize, usize) {
        self.pos_of[cell]
    }

    pub fn goal_cell(&self) -> usize {
        let (r, c) = self.config.goal;
        self.cell(r, c).expect("goal is a wall")
    }

    pub fn start_cell(&self) -> usize {
        let (r, c) = self.config.start;
        self.cell(r, c).expect("start is a wall")
    }

    /// Deterministic move; blocked by the border and by walls.
    pub fn move_from(&self, cell: usize, action: usize) -> usize {
        let (r, c) = self.pos_of[cell];
        let (r2, c2) = match action {
            UP => (r.wrapping_sub(1), c),
            DOWN => (r + 1, c),
            LEFT => (r, c.wrapping_sub(1)),
            RIGHT => (r, c + 1),
            _ => panic!("invalid action {action}"),
        };
        self.cell(r2, c2).unwrap_or(cell)
    }

    pub fn coords(&self) -> Vec<Vec<i64>> {
        self.pos_of.iter().map(|&(r, c)| vec![r as i64, c as i64]).collect()
    }
}

/// Simulator; observations are open-cell indices.
#[derive(Debug, Clone)]
pub struct GridworldEnv {
    grid: Grid,
    cell: usize,
    since_teleport: u32,
}

impl GridworldEnv {
    pub fn new(config: GridworldConfig) -> Self {
        let grid = Grid::new(config);
        let cell = grid.start_cell();
        Self { grid, cell, since_teleport: 0 }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn cell(&self) -> usize {
        self.cell
    }

    pub fn steps_since_teleport(&self) -> u32 {
        self.since_teleport
    }

    /// Places the agent, resetting the budget counter.
    pub fn set_cell(&mut self, cell: usize) {
        self.cell = cell;
        self.since_teleport = 0;
    }
}

impl Environment for GridworldEnv {
    fn num_states(&self) -> usize {
        self.grid.num_cells()
    }

    fn num_actions(&self) -> usize {
        4
    }

    fn availability(&self) -> Vec<bool> {
        vec![true; self.grid.num_cells() * 4]
    }

    fn reset(&mut self, _rng: &mut EnvRng) -> usize {
        self.set_cell(self.grid.start_cell());
        self.cell
    }

    fn step(&mut self, action: usize, rng: &mut EnvRng) -> StepOutcome {
        let next = self.grid.move_from(self.cell, action);
        self.since_teleport += 1;
        let mut reward = 0.0;
        if next == self.grid.goal_cell() {
            reward = self.grid.config.goal_reward;
            self.set_cell(rng.random_range(0..self.grid.num_cells()));
        } else if self.since_teleport >= self.grid.config.step_budget {
            self.set_cell(rng.random_range(0..self.grid.num_cells()));
        } else {
            self.cell = next;
        }
        StepOutcome { next: self.cell, reward, label: Letter::EMPTY }
    }
}

/// Exact tabular models of the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridModel {
    /// States are cells; the step budget is replaced by a uniform reset with
    /// probability `1 / budget` per step.
    Memoryless,
    /// States are `(cell, steps since teleport)`; matches the simulator exactly.
    Counter,
}

pub fn gridworld_as_mdp(config: &GridworldConfig, model: GridModel) -> Mdp {
    let grid = Grid::new(config.clone());
    let n = grid.num_cells();
    let goal = grid.goal_cell();
    let uniform = 1.0 / n as f64;
    let reward = config.goal_reward;
    match model {
        GridModel::Memoryless => {
            let reset = 1.0 / config.step_budget as f64;
            let mut b = MdpBuilder::new(n, 4).action_names(ACTION_NAMES).initial(grid.start_cell());
            for s in 0..n {
                b.state_name(s, format!("{:?}", grid.pos(s)));
                for a in 0..4 {
                    let next = grid.move_from(s, a);
                    if next == goal {
                        for t in 0..n {
                            b.add_mass(s, a, t, uniform, reward);
                        }
                    } else {
                        b.add_mass(s, a, next, 1.0 - reset, 0.0);
                        for t in 0..n {
                            b.add_mass(s, a, t, reset * uniform, 0.0);
                        }
                    }
                }
            }
            b.coords(grid.coords());
            b.build().expect("gridworld model is valid")
        }
        GridModel::Counter => {
            let k = config.step_budget as usize;
            let idx = |cell: usize, t: usize| cell * k + t;
            let mut b =
                MdpBuilder::new(n * k, 4).action_names(ACTION_NAMES).initial(idx(grid.start_cell(), 0));
            let mut coords = Vec::with_capacity(n * k);
            for s in 0..n {
                let (r, c) = grid.pos(s);
                for t in 0..k {
                    coords.push(vec![r as i64, c as i64]);
                    b.state_name(idx(s, t), format!("({r}, {c})@{t}"));
                    for a in 0..4 {
                        let next = grid.move_from(s, a);
                        if next == goal || t + 1 >= k {
                            let r = if next == goal { reward } else { 0.0 };
                            for u in 0..n {
                                b.add_mass(idx(s, t), a, idx(u, 0), uniform, r);
                            }
                        } else {
                            b.transition(idx(s, t), a, idx(next, t + 1), 1.0, 0.0);
                        }
                    }
                }
            }
            b.coords(coords);
            b.build().expect("gridworld model is valid")
        }
    }
}

/// Labelled model for the "only move down or right" advice: states are
/// `(cell, last move was down/right)` on the grid without walls, and the
/// proposition `downright` holds when the flag is set. Returns the model and
/// the cell of each of its states.
pub fn downright_advice_mdp(config: &GridworldConfig) -> (Mdp, Vec<usize>) {
    let open = GridworldConfig { walls: Vec::new(), ..config.clone() };
    let grid = Grid::new(open);
    let n = grid.num_cells();
    let ap = ApRegistry::new(["downright"]).expect("valid registry");
    let mut b = MdpBuilder::new(2 * n, 4).ap(ap).action_names(ACTION_NAMES).initial(2 * grid.start_cell() + 1);
    let mut coords = Vec::new();
    for s in 0..n {
        let (r, c) = grid.pos(s);
        for flag in 0..2 {
            let v = 2 * s + flag;
            coords.push(vec![r as i64, c as i64]);
            if flag == 1 {
                b.label(v, Letter(1));
            }
            for a in 0..4 {
                let dr = (a == DOWN || a == RIGHT) as usize;
                b.transition(v, a, 2 * grid.move_from(s, a) + dr, 1.0, 0.0);
            }
        }
    }
    b.coords(coords);
    let mdp = b.build().expect("advice model is valid");
    (mdp, (0..2 * n).map(|v| v / 2).collect())
}
