//! Continual area sweeping on a floor plan: trash appears on cells at
//! per-cell rates and the robot is rewarded for each dirty cell it reaches.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::labels::{ApRegistry, Letter};
use crate::learning::{EnvRng, Environment, StepOutcome};
use crate::mdp::{Mdp, MdpBuilder};

pub const DEFAULT_LAYOUT: &str = include_str!("../../layouts/four_rooms.txt");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LayoutError {
    #[error("layout is empty")]
    Empty,
    #[error("row {0} has length {1}, expected {2}")]
    Ragged(usize, usize, usize),
    #[error("unknown layout character `{0}`")]
    UnknownChar(char),
    #[error("layout needs exactly one `{0}` cell")]
    Marker(char),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Wall,
    Floor,
    Kitchen,
    Corridor,
    TopLeft,
}

/// Parsed floor plan. `R` and `H` mark the robot and human start cells and
/// count as corridor.
#[derive(Debug, Clone)]
pub struct Layout {
    rows: usize,
    cols: usize,
    kinds: Vec<CellKind>,
    robot_start: (usize, usize),
    human_start: (usize, usize),
}

impl Layout {
    pub fn parse(text: &str) -> Result<Self, LayoutError> {
        let lines: Vec<&str> = text.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
        if lines.is_empty() {
            return Err(LayoutError::Empty);
        }
        let cols = lines[0].chars().count();
        let mut kinds = Vec::new();
        let (mut robot, mut human) = (Vec::new(), Vec::new());
        for (r, line) in lines.iter().enumerate() {
            let n = line.chars().count();
            if n != cols {
                return Err(LayoutError::Ragged(r, n, cols));
            }
            for (c, ch) in line.chars().enumerate() {
                kinds.push(match ch {
                    '#' => CellKind::Wall,
                    '.' => CellKind::Floor,
                    'K' => CellKind::Kitchen,
                    'C' => CellKind::Corridor,
                    'T' => CellKind::TopLeft,
                    'R' => {
                        robot.push((r, c));
                        CellKind::Corridor
                    }
                    'H' => {
                        human.push((r, c));
                        CellKind::Corridor
                    }
                    other => return Err(LayoutError::UnknownChar(other)),
                });
            }
        }
        if robot.len() != 1 {
            return Err(LayoutError::Marker('R'));
        }
        if human.len() != 1 {
            return Err(LayoutError::Marker('H'));
        }
        Ok(Self { rows: lines.len(), cols, kinds, robot_start: robot[0], human_start: human[0] })
    }

    pub fn default_layout() -> Self {
        Self::parse(DEFAULT_LAYOUT).expect("shipped layout parses")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn kind(&self, r: usize, c: usize) -> CellKind {
        self.kinds[r * self.cols + c]
    }

    pub fn is_wall(&self, r: usize, c: usize) -> bool {
        self.kind(r, c) == CellKind::Wall
    }

    pub fn robot_start(&self) -> (usize, usize) {
        self.robot_start
    }

    pub fn human_start(&self) -> (usize, usize) {
        self.human_start
    }

    /// Whether the segment between the centres of two cells stays out of the
    /// interior of every wall cell.
    pub fn clear_line(&self, a: (usize, usize), b: (usize, usize)) -> bool {
        let (y0, x0) = (a.0 as f64 + 0.5, a.1 as f64 + 0.5);
        let (y1, x1) = (b.0 as f64 + 0.5, b.1 as f64 + 0.5);
        let (rmin, rmax) = (a.0.min(b.0), a.0.max(b.0));
        let (cmin, cmax) = (a.1.min(b.1), a.1.max(b.1));
        for r in rmin..=rmax {
            for c in cmin..=cmax {
                if self.is_wall(r, c) && segment_crosses_square(y0, x0, y1, x1, r as f64, c as f64) {
                    return false;
                }
            }
        }
        true
    }

    /// Within Euclidean `range` (between cell centres) and unobstructed.
    pub fn visible(&self, a: (usize, usize), b: (usize, usize), range: f64) -> bool {
        let dy = a.0 as f64 - b.0 as f64;
        let dx = a.1 as f64 - b.1 as f64;
        dy * dy + dx * dx <= range * range && self.clear_line(a, b)
    }
}

/// Whether the segment has a piece of positive length inside the unit
/// square `[r, r+1] × [c, c+1]`.
fn segment_crosses_square(y0: f64, x0: f64, y1: f64, x1: f64, r: f64, c: f64) -> bool {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (p, d, lo, hi) in [(y0, y1 - y0, r, r + 1.0), (x0, x1 - x0, c, c + 1.0)] {
        if d == 0.0 {
            if p <= lo || p >= hi {
                return false;
            }
        } else {
            let (a, b) = ((lo - p) / d, (hi - p) / d);
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
    }
    t1 - t0 > 1e-12
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariant {
    /// Trash only in the kitchen.
    Kitchen,
    /// Kitchen plus randomly chosen cells in the right half of the corridor.
    KitchenExtra,
    /// Trash only where the human stands.
    Human,
    /// Human-generated trash plus every corridor cell.
    HumanExtra,
}

impl SweepVariant {
    pub fn has_human(self) -> bool {
        matches!(self, SweepVariant::Human | SweepVariant::HumanExtra)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub variant: SweepVariant,
    pub speed: usize,
    /// Per-cell appearance rates are drawn uniformly from this range.
    pub freq_range: (f64, f64),
    /// Probability per step that a dirty cell becomes clean by itself.
    pub cleanup_prob: f64,
    /// Probability per step that the human's cell becomes dirty.
    pub human_trash_prob: f64,
    pub sight_range: f64,
    /// Number of trash-prone kitchen cells; `None` means the whole kitchen.
    pub kitchen_cells: Option<usize>,
    /// Number of trash-prone corridor cells in the extra variant.
    pub extra_cells: usize,
}

impl SweepConfig {
    pub fn new(variant: SweepVariant) -> Self {
        Self {
            variant,
            speed: 3,
            freq_range: (1.0 / 20.0, 1.0 / 10.0),
            cleanup_prob: 0.2,
            human_trash_prob: 0.2,
            sight_range: 5.0,
            kitchen_cells: None,
            extra_cells: 6,
        }
    }
}

/// Static structure shared by the simulator and its advice model.
#[derive(Debug, Clone)]
pub struct SweepGeometry {
    pub layout: Layout,
    pub speed: usize,
    pub sight_range: f64,
    pub has_human: bool,
    floor: Vec<(usize, usize)>,
    floor_index: Vec<Option<usize>>,
    offsets: Vec<(isize, isize)>,
    /// `moves[cell * |A| + a]`, `None` when unavailable.
    moves: Vec<Option<usize>>,
    human_cells: Vec<usize>,
    human_index: Vec<Option<usize>>,
    human_moves: Vec<Vec<usize>>,
    visible: Vec<bool>,
}

impl SweepGeometry {
    pub fn new(layout: Layout, speed: usize, sight_range: f64, has_human: bool) -> Self {
        let (rows, cols) = (layout.rows(), layout.cols());
        let mut floor = Vec::new();
        let mut floor_index = vec![None; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                if !layout.is_wall(r, c) {
                    floor_index[r * cols + c] = Some(floor.len());
                    floor.push((r, c));
                }
            }
        }
        let s = speed as isize;
        let mut offsets = Vec::new();
        for dr in -s..=s {
            for dc in -s..=s {
                if dr.abs() + dc.abs() <= s {
                    offsets.push((dr, dc));
                }
            }
        }
        let mut geo = Self {
            layout,
            speed,
            sight_range,
            has_human,
            floor,
            floor_index,
            offsets,
            moves: Vec::new(),
            human_cells: Vec::new(),
            human_index: Vec::new(),
            human_moves: Vec::new(),
            visible: Vec::new(),
        };
        geo.moves = (0..geo.floor.len()).flat_map(|f| geo.reachable_moves(f)).collect();
        if has_human {
            geo.human_index = vec![None; geo.floor.len()];
            for (f, &(r, c)) in geo.floor.iter().enumerate() {
                if matches!(geo.layout.kind(r, c), CellKind::Corridor | CellKind::TopLeft) {
                    geo.human_index[f] = Some(geo.human_cells.len());
                    geo.human_cells.push(f);
                }
            }
            geo.human_moves = geo
                .human_cells
                .iter()
                .map(|&f| {
                    let (r, c) = geo.floor[f];
                    let mut out = Vec::new();
                    for (dr, dc) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
                        if let Some(g) = geo.floor_at(r as isize + dr, c as isize + dc) {
                            if let Some(h) = geo.human_index[g] {
                                out.push(h);
                            }
                        }
                    }
                    if out.is_empty() {
                        out.push(geo.human_index[f].unwrap());
                    }
                    out
                })
                .collect();
            let nh = geo.human_cells.len();
            geo.visible = (0..geo.floor.len() * nh)
                .map(|i| {
                    let (rf, h) = (i / nh, i % nh);
                    geo.layout.visible(geo.floor[rf], geo.floor[geo.human_cells[h]], sight_range)
                })
                .collect();
        }
        geo
    }

    fn floor_at(&self, r: isize, c: isize) -> Option<usize> {
        if r < 0 || c < 0 || r as usize >= self.layout.rows() || c as usize >= self.layout.cols() {
            return None;
        }
        self.floor_index[r as usize * self.layout.cols() + c as usize]
    }

    /// Targets within `speed` steps of floor-connected movement.
    fn reachable_moves(&self, from: usize) -> Vec<Option<usize>> {
        let mut dist = vec![usize::MAX; self.floor.len()];
        dist[from] = 0;
        let mut queue = VecDeque::from([from]);
        while let Some(f) = queue.pop_front() {
            if dist[f] == self.speed {
                continue;
            }
            let (r, c) = self.floor[f];
            for (dr, dc) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
                if let Some(g) = self.floor_at(r as isize + dr, c as isize + dc) {
                    if dist[g] == usize::MAX {
                        dist[g] = dist[f] + 1;
                        queue.push_back(g);
                    }
                }
            }
        }
        let (r, c) = self.floor[from];
        self.offsets
            .iter()
            .map(|&(dr, dc)| self.floor_at(r as isize + dr, c as isize + dc).filter(|&g| dist[g] <= self.speed))
            .collect()
    }

    pub fn num_floor(&self) -> usize {
        self.floor.len()
    }

    pub fn floor_pos(&self, f: usize) -> (usize, usize) {
        self.floor[f]
    }

    pub fn floor_cell(&self, r: usize, c: usize) -> Option<usize> {
        self.floor_at(r as isize, c as isize)
    }

    pub fn num_actions(&self) -> usize {
        self.offsets.len()
    }

    pub fn offset(&self, a: usize) -> (isize, isize) {
        self.offsets[a]
    }

    pub fn robot_move(&self, f: usize, a: usize) -> Option<usize> {
        self.moves[f * self.offsets.len() + a]
    }

    pub fn human_cells(&self) -> &[usize] {
        &self.human_cells
    }

    pub fn human_moves(&self, h: usize) -> &[usize] {
        &self.human_moves[h]
    }

    pub fn human_slot(&self, f: usize) -> Option<usize> {
        self.human_index.get(f).copied().flatten()
    }

    pub fn num_observations(&self) -> usize {
        if self.has_human {
            self.floor.len() * self.human_cells.len()
        } else {
            self.floor.len()
        }
    }

    pub fn observation(&self, robot: usize, human: usize) -> usize {
        if self.has_human {
            robot * self.human_cells.len() + human
        } else {
            robot
        }
    }

    /// `(robot floor cell, human slot)` of an observation.
    pub fn decode(&self, o: usize) -> (usize, usize) {
        if self.has_human {
            (o / self.human_cells.len(), o % self.human_cells.len())
        } else {
            (o, 0)
        }
    }

    pub fn human_visible(&self, robot: usize, human: usize) -> bool {
        self.visible[robot * self.human_cells.len() + human]
    }

    pub fn is_kitchen(&self, f: usize) -> bool {
        let (r, c) = self.floor[f];
        self.layout.kind(r, c) == CellKind::Kitchen
    }

    pub fn ap() -> ApRegistry {
        ApRegistry::new(["kitchen", "human_visible"]).expect("valid registry")
    }

    pub fn label(&self, o: usize) -> Letter {
        let (robot, human) = self.decode(o);
        let mut l = Letter::EMPTY;
        if self.is_kitchen(robot) {
            l = l.with(0);
        }
        if self.has_human && self.human_visible(robot, human) {
            l = l.with(1);
        }
        l
    }

    pub fn availability(&self) -> Vec<bool> {
        let na = self.num_actions();
        (0..self.num_observations() * na).map(|i| self.robot_move(self.decode(i / na).0, i % na).is_some()).collect()
    }

    /// Labelled model of robot (and human) motion, without rewards. State
    /// coordinates are the robot's cell.
    pub fn advice_mdp(&self) -> Mdp {
        let n = self.num_observations();
        let na = self.num_actions();
        let start = self.floor_cell(self.layout.robot_start().0, self.layout.robot_start().1).unwrap();
        let hstart = if self.has_human {
            let (r, c) = self.layout.human_start();
            self.human_slot(self.floor_cell(r, c).unwrap()).expect("human starts inside its region")
        } else {
            0
        };
        let mut b = MdpBuilder::new(n, na).ap(Self::ap()).initial(self.observation(start, hstart));
        let mut coords = Vec::with_capacity(n);
        for o in 0..n {
            let (robot, human) = self.decode(o);
            let (r, c) = self.floor[robot];
            coords.push(vec![r as i64, c as i64]);
            b.label(o, self.label(o));
            for a in 0..na {
                if let Some(g) = self.robot_move(robot, a) {
                    if self.has_human {
                        let hm = self.human_moves(human);
                        let p = 1.0 / hm.len() as f64;
                        for &h2 in hm {
                            b.add_mass(o, a, self.observation(g, h2), p, 0.0);
                        }
                    } else {
                        b.transition(o, a, g, 1.0, 0.0);
                    }
                }
            }
        }
        b.coords(coords);
        b.build().expect("sweep advice model is valid")
    }
}

/// Simulator. Observations are the robot cell, or `(robot, human)` pairs in
/// the human variants; trash is hidden state.
#[derive(Debug, Clone)]
pub struct SweepEnv {
    geo: std::sync::Arc<SweepGeometry>,
    config: SweepConfig,
    /// Appearance rate per floor cell (0 when not trash-prone).
    freq: Vec<f64>,
    prone: Vec<usize>,
    dirty: Vec<bool>,
    robot: usize,
    human: usize,
}

impl SweepEnv {
    pub fn new(config: SweepConfig, layout: Layout, seed: u64) -> Self {
        let geo = SweepGeometry::new(layout, config.speed, config.sight_range, config.variant.has_human());
        Self::with_geometry(config, std::sync::Arc::new(geo), seed)
    }

    /// Builds a simulator on precomputed geometry; trash-prone cells and
    /// their rates are drawn from `seed`.
    pub fn with_geometry(config: SweepConfig, geo: std::sync::Arc<SweepGeometry>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        let n = geo.num_floor();
        let mut freq = vec![0.0; n];
        let (lo, hi) = config.freq_range;
        let mut draw = |cells: Vec<usize>, rng: &mut ChaCha8Rng| {
            for f in cells {
                freq[f] = if hi > lo { rng.random_range(lo..hi) } else { lo };
            }
        };
        let pick = |mut cells: Vec<usize>, k: Option<usize>, rng: &mut ChaCha8Rng| {
            if let Some(k) = k {
                cells.shuffle(rng);
                cells.truncate(k);
                cells.sort_unstable();
            }
            cells
        };
        let kind = |f: usize| {
            let (r, c) = geo.floor_pos(f);
            (geo.layout.kind(r, c), c)
        };
        let kitchen: Vec<usize> = (0..n).filter(|&f| kind(f).0 == CellKind::Kitchen).collect();
        let corridor: Vec<usize> = (0..n).filter(|&f| kind(f).0 == CellKind::Corridor).collect();
        match config.variant {
            SweepVariant::Kitchen => draw(pick(kitchen, config.kitchen_cells, &mut rng), &mut rng),
            SweepVariant::KitchenExtra => {
                draw(pick(kitchen, config.kitchen_cells, &mut rng), &mut rng);
                let half = geo.layout.cols() / 2;
                let right: Vec<usize> = corridor.into_iter().filter(|&f| kind(f).1 > half).collect();
                draw(pick(right, Some(config.extra_cells), &mut rng), &mut rng);
            }
            SweepVariant::Human => {}
            SweepVariant::HumanExtra => draw(corridor, &mut rng),
        }
        let prone = (0..n).filter(|&f| freq[f] > 0.0).collect();
        let mut env = Self { geo, config, freq, prone, dirty: vec![false; n], robot: 0, human: 0 };
        env.place_at_start();
        env
    }

    fn place_at_start(&mut self) {
        let (r, c) = self.geo.layout.robot_start();
        self.robot = self.geo.floor_cell(r, c).unwrap();
        if self.geo.has_human {
            let (r, c) = self.geo.layout.human_start();
            self.human = self.geo.human_slot(self.geo.floor_cell(r, c).unwrap()).expect("human start in region");
        }
    }

    pub fn geometry(&self) -> &SweepGeometry {
        &self.geo
    }

    pub fn frequency(&self, f: usize) -> f64 {
        self.freq[f]
    }

    pub fn trash_prone(&self) -> &[usize] {
        &self.prone
    }

    pub fn dirty(&self) -> &[bool] {
        &self.dirty
    }

    pub fn robot(&self) -> usize {
        self.robot
    }

    pub fn human_cell(&self) -> Option<usize> {
        self.geo.has_human.then(|| self.geo.human_cells()[self.human])
    }

    pub fn observation(&self) -> usize {
        self.geo.observation(self.robot, self.human)
    }
}

impl Environment for SweepEnv {
    fn num_states(&self) -> usize {
        self.geo.num_observations()
    }

    fn num_actions(&self) -> usize {
        self.geo.num_actions()
    }

    fn availability(&self) -> Vec<bool> {
        self.geo.availability()
    }

    fn reset(&mut self, _rng: &mut EnvRng) -> usize {
        self.dirty.iter_mut().for_each(|d| *d = false);
        self.place_at_start();
        self.observation()
    }

    fn step(&mut self, action: usize, rng: &mut EnvRng) -> StepOutcome {
        self.robot = self.geo.robot_move(self.robot, action).expect("action not available");
        if self.geo.has_human {
            let hm = self.geo.human_moves(self.human);
            self.human = hm[rng.random_range(0..hm.len())];
        }
        let reward = if self.dirty[self.robot] {
            self.dirty[self.robot] = false;
            1.0
        } else {
            0.0
        };
        for &f in &self.prone {
            let u: f64 = rng.random();
            if self.dirty[f] {
                if u < self.config.cleanup_prob {
                    self.dirty[f] = false;
                }
            } else if u < self.freq[f] {
                self.dirty[f] = true;
            }
        }
        if self.geo.has_human && rng.random::<f64>() < self.config.human_trash_prob {
            self.dirty[self.geo.human_cells()[self.human]] = true;
        }
        let next = self.observation();
        StepOutcome { next, reward, label: self.geo.label(next) }
    }
}
