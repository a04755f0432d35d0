//! Benchmark tasks and their reference advice.

pub mod cartpole;
pub mod gridworld;
pub mod sweep;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::automata::{compile_invariant, InvariantFormula};
use crate::learning::{Environment, ShieldMask};
use crate::mdp::Mdp;
use crate::potential::{synthesize_potential, DistanceSpec, PotentialTable};
use crate::product::build_product;
use crate::region::{almost_sure_region, WinningRegion};

use cartpole::{CartPoleEnv, Discretizer, X_LIMIT};
use gridworld::{downright_advice_mdp, Grid, GridworldConfig, GridworldEnv};
use sweep::{Layout, SweepConfig, SweepEnv, SweepGeometry, SweepVariant};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("unknown environment `{0}`")]
    UnknownEnv(String),
    #[error("advice synthesis failed: {0}")]
    Advice(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EnvName {
    Gridworld,
    GridworldWall,
    SweepKitchen,
    SweepKitchenExtra,
    SweepHuman,
    SweepHumanExtra,
    CartPole,
    CartPoleInaccurate,
}

impl EnvName {
    pub const ALL: [EnvName; 8] = [
        EnvName::Gridworld,
        EnvName::GridworldWall,
        EnvName::SweepKitchen,
        EnvName::SweepKitchenExtra,
        EnvName::SweepHuman,
        EnvName::SweepHumanExtra,
        EnvName::CartPole,
        EnvName::CartPoleInaccurate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvName::Gridworld => "gridworld",
            EnvName::GridworldWall => "gridworld-wall",
            EnvName::SweepKitchen => "sweep-kitchen",
            EnvName::SweepKitchenExtra => "sweep-kitchen-extra",
            EnvName::SweepHuman => "sweep-human",
            EnvName::SweepHumanExtra => "sweep-human-extra",
            EnvName::CartPole => "cartpole",
            EnvName::CartPoleInaccurate => "cartpole-inaccurate",
        }
    }

    /// The variant whose advice does not match the reward.
    pub fn inaccurate(self) -> EnvName {
        match self {
            EnvName::Gridworld | EnvName::GridworldWall => EnvName::GridworldWall,
            EnvName::SweepKitchen | EnvName::SweepKitchenExtra => EnvName::SweepKitchenExtra,
            EnvName::SweepHuman | EnvName::SweepHumanExtra => EnvName::SweepHumanExtra,
            EnvName::CartPole | EnvName::CartPoleInaccurate => EnvName::CartPoleInaccurate,
        }
    }

    fn sweep_variant(self) -> Option<SweepVariant> {
        match self {
            EnvName::SweepKitchen => Some(SweepVariant::Kitchen),
            EnvName::SweepKitchenExtra => Some(SweepVariant::KitchenExtra),
            EnvName::SweepHuman => Some(SweepVariant::Human),
            EnvName::SweepHumanExtra => Some(SweepVariant::HumanExtra),
            _ => None,
        }
    }
}

impl fmt::Display for EnvName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvName {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, EnvError> {
        EnvName::ALL.into_iter().find(|n| n.as_str() == s).ok_or_else(|| EnvError::UnknownEnv(s.to_string()))
    }
}

impl TryFrom<String> for EnvName {
    type Error = EnvError;

    fn try_from(s: String) -> Result<Self, EnvError> {
        s.parse()
    }
}

impl From<EnvName> for String {
    fn from(n: EnvName) -> String {
        n.as_str().to_string()
    }
}

/// How `d(s,a)` is obtained for a task.
#[derive(Debug, Clone, PartialEq)]
pub enum DistanceRule {
    Spec(DistanceSpec),
    /// `−scale · dist`, plus `closer_bonus` when the move shortens `dist`,
    /// where `dist` is the floor path length to the cells labelled `label`.
    FloorToTarget { label: String, scale: f64, closer_bonus: f64 },
    /// `−hidden_penalty` when the human is out of sight (or no winning pair
    /// exists for the human's cell), otherwise minus the L1 distance from the
    /// robot to the nearest robot cell that has a winning action for the
    /// current human cell.
    ToVisibility { hidden_penalty: f64 },
    /// `−scale ·` how far the predicted next position lies outside the range.
    RangeGap { scale: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ShieldRule {
    /// Only winning pairs.
    Region,
    /// Winning pairs, plus moves that bring the robot closer to a state
    /// labelled `label` (so the shielded robot can reach the region).
    RegionOrCloser { label: String },
}

/// Published advice for a task.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvicePackage {
    pub formula: InvariantFormula,
    pub distance: DistanceRule,
    pub c: f64,
    pub shield: ShieldRule,
    /// Position range the cart-pole advice keeps the cart in.
    pub range: Option<(f64, f64)>,
}

pub fn reference_advice(name: EnvName) -> AdvicePackage {
    let formula = |t: &str| InvariantFormula::parse(t).expect("built-in formula parses");
    match name {
        EnvName::Gridworld | EnvName::GridworldWall => AdvicePackage {
            formula: formula("G downright"),
            distance: DistanceRule::Spec(DistanceSpec::ConstantPenalty { value: -1.0 }),
            c: 1.0,
            shield: ShieldRule::Region,
            range: None,
        },
        EnvName::SweepKitchen | EnvName::SweepKitchenExtra => AdvicePackage {
            formula: formula("G kitchen"),
            distance: DistanceRule::FloorToTarget { label: "kitchen".into(), scale: 1.0, closer_bonus: 1.0 },
            c: 1.0,
            shield: ShieldRule::RegionOrCloser { label: "kitchen".into() },
            range: None,
        },
        EnvName::SweepHuman | EnvName::SweepHumanExtra => AdvicePackage {
            formula: formula("G human_visible"),
            distance: DistanceRule::ToVisibility { hidden_penalty: 6.0 },
            c: 1.0,
            shield: ShieldRule::Region,
            range: None,
        },
        EnvName::CartPole => AdvicePackage {
            formula: formula("G in_range"),
            distance: DistanceRule::RangeGap { scale: 10.0 },
            c: 1.0,
            shield: ShieldRule::Region,
            range: Some((-X_LIMIT, X_LIMIT)),
        },
        EnvName::CartPoleInaccurate => AdvicePackage {
            range: Some((-2.0, 2.0)),
            ..reference_advice(EnvName::CartPole)
        },
    }
}

/// Winning region, potential and shield over a task's observation space.
#[derive(Debug, Clone)]
pub struct Advice {
    pub region: WinningRegion,
    pub potential: PotentialTable,
    pub shield: ShieldMask,
}

/// A task with its static structure built once; simulators for individual
/// seeds are cheap to create from it.
#[derive(Debug, Clone)]
pub struct Task {
    pub name: EnvName,
    pub gridworld: GridworldConfig,
    pub sweep: SweepConfig,
    pub discretizer: Discretizer,
    geometry: Option<Arc<SweepGeometry>>,
}

impl Task {
    pub fn new(name: EnvName) -> Self {
        Self::with_layout(name, Layout::default_layout())
    }

    pub fn with_layout(name: EnvName, layout: Layout) -> Self {
        let gridworld = match name {
            EnvName::GridworldWall => GridworldConfig::with_wall(),
            _ => GridworldConfig::standard(),
        };
        let variant = name.sweep_variant().unwrap_or(SweepVariant::Kitchen);
        let sweep = SweepConfig::new(variant);
        let geometry = name
            .sweep_variant()
            .map(|v| Arc::new(SweepGeometry::new(layout, sweep.speed, sweep.sight_range, v.has_human())));
        Self { name, gridworld, sweep, discretizer: Discretizer::default(), geometry }
    }

    pub fn geometry(&self) -> Option<&SweepGeometry> {
        self.geometry.as_deref()
    }

    /// Simulator for one run; `seed` also fixes any randomised layout data.
    pub fn instantiate(&self, seed: u64) -> Box<dyn Environment + Send> {
        match self.name {
            EnvName::Gridworld | EnvName::GridworldWall => Box::new(GridworldEnv::new(self.gridworld.clone())),
            EnvName::CartPole | EnvName::CartPoleInaccurate => Box::new(CartPoleEnv::new(self.discretizer.clone())),
            _ => Box::new(SweepEnv::with_geometry(
                self.sweep.clone(),
                self.geometry.clone().expect("sweep task has geometry"),
                seed,
            )),
        }
    }

    pub fn advice_package(&self) -> AdvicePackage {
        reference_advice(self.name)
    }

    /// Synthesises the reference advice for this task.
    pub fn advice(&self) -> Result<Advice, EnvError> {
        let pkg = self.advice_package();
        match self.name {
            EnvName::Gridworld | EnvName::GridworldWall => self.gridworld_advice(&pkg),
            EnvName::CartPole | EnvName::CartPoleInaccurate => Ok(self.cartpole_advice(&pkg)),
            _ => self.sweep_advice(&pkg),
        }
    }

    fn gridworld_advice(&self, pkg: &AdvicePackage) -> Result<Advice, EnvError> {
        let (mdp, cell_of) = downright_advice_mdp(&self.gridworld);
        let w = region_on(&mdp, &pkg.formula)?;
        // The advice model ignores walls; map its cells onto the task's grid.
        let open = Grid::new(GridworldConfig { walls: Vec::new(), ..self.gridworld.clone() });
        let grid = Grid::new(self.gridworld.clone());
        let na = 4;
        let mut members = vec![false; grid.num_cells() * na];
        for v in 0..mdp.num_states() {
            let (r, c) = open.pos(cell_of[v]);
            if let Some(cell) = grid.cell(r, c) {
                for a in 0..na {
                    members[cell * na + a] |= w.contains(v, a);
                }
            }
        }
        let region = WinningRegion::from_members(grid.num_cells(), na, members);
        let DistanceRule::Spec(spec) = &pkg.distance else { unreachable!() };
        let d = match spec {
            DistanceSpec::ConstantPenalty { value } => *value,
            _ => unreachable!(),
        };
        let values = region.members().iter().map(|&m| if m { pkg.c } else { d }).collect();
        let potential = PotentialTable::from_values(grid.num_cells(), na, pkg.c, values);
        let shield = ShieldMask::from_region(&region, &vec![true; grid.num_cells() * na], None);
        Ok(Advice { region, potential, shield })
    }

    fn cartpole_advice(&self, pkg: &AdvicePackage) -> Advice {
        let range = pkg.range.expect("cart-pole advice has a range");
        let DistanceRule::RangeGap { scale } = pkg.distance else { unreachable!() };
        let (members, dist) = cartpole::range_advice(&self.discretizer, range, scale);
        let n = self.discretizer.num_states();
        let values = members.iter().zip(&dist).map(|(&m, &d)| if m { pkg.c } else { d.min(pkg.c - 1.0) }).collect();
        let potential = PotentialTable::from_values(n, 2, pkg.c, values);
        let region = WinningRegion::from_members(n, 2, members);
        let shield = ShieldMask::from_region(&region, &vec![true; n * 2], None);
        Advice { region, potential, shield }
    }

    fn sweep_advice(&self, pkg: &AdvicePackage) -> Result<Advice, EnvError> {
        let geo = self.geometry().expect("sweep task has geometry");
        let mdp = geo.advice_mdp();
        let region = region_on(&mdp, &pkg.formula)?;
        let available = geo.availability();
        let (ns, na) = (mdp.num_states(), mdp.num_actions());
        let targets_of = |label: &str| -> Result<Vec<usize>, EnvError> {
            let bit = mdp.ap().index_of(label).ok_or_else(|| EnvError::Advice(format!("no label `{label}`")))?;
            Ok((0..ns).filter(|&s| mdp.label(s).contains(bit)).collect())
        };
        let potential = match &pkg.distance {
            DistanceRule::FloorToTarget { label, scale, closer_bonus } => {
                let dist = floor_distance_to(geo, &targets_of(label)?);
                let mut table = vec![0.0; ns * na];
                for o in 0..ns {
                    let robot = geo.decode(o).0;
                    for a in 0..na {
                        let mut d = -scale * dist[robot] as f64;
                        if geo.robot_move(robot, a).is_some_and(|g| dist[g] < dist[robot]) {
                            d += closer_bonus;
                        }
                        table[o * na + a] = d;
                    }
                }
                synthesize_potential(&mdp, &region, pkg.c, &DistanceSpec::Custom { table })
                    .map_err(|e| EnvError::Advice(e.to_string()))?
            }
            DistanceRule::Spec(spec) => {
                synthesize_potential(&mdp, &region, pkg.c, spec).map_err(|e| EnvError::Advice(e.to_string()))?
            }
            DistanceRule::ToVisibility { hidden_penalty } => {
                let table = visibility_distance(geo, &region, *hidden_penalty);
                synthesize_potential(&mdp, &region, pkg.c, &DistanceSpec::Custom { table })
                    .map_err(|e| EnvError::Advice(e.to_string()))?
            }
            DistanceRule::RangeGap { .. } => return Err(EnvError::Advice("range advice needs a cart-pole task".into())),
        };
        let shield = match &pkg.shield {
            ShieldRule::Region => ShieldMask::from_region(&region, &available, None),
            ShieldRule::RegionOrCloser { label } => {
                let dist = floor_distance_to(geo, &targets_of(label)?);
                let closer = |o: usize, a: usize| {
                    let (robot, _) = geo.decode(o);
                    geo.robot_move(robot, a).is_some_and(|g| dist[g] < dist[robot])
                };
                ShieldMask::from_region(&region, &available, Some(&closer))
            }
        };
        Ok(Advice { region, potential, shield })
    }
}

fn region_on(mdp: &Mdp, formula: &InvariantFormula) -> Result<WinningRegion, EnvError> {
    let aut = compile_invariant(formula, mdp.ap()).map_err(|e| EnvError::Advice(e.to_string()))?;
    let prod = build_product(mdp, &aut).map_err(|e| EnvError::Advice(e.to_string()))?;
    Ok(almost_sure_region(&prod))
}

/// Shortest 4-connected floor path length from every floor cell to the
/// robot cells of `targets`.
fn floor_distance_to(geo: &SweepGeometry, targets: &[usize]) -> Vec<usize> {
    let mut dist = vec![usize::MAX; geo.num_floor()];
    let mut queue = std::collections::VecDeque::new();
    for &o in targets {
        let f = geo.decode(o).0;
        if dist[f] != 0 {
            dist[f] = 0;
            queue.push_back(f);
        }
    }
    while let Some(f) = queue.pop_front() {
        let (r, c) = geo.floor_pos(f);
        let nbrs = [(r.wrapping_sub(1), c), (r + 1, c), (r, c.wrapping_sub(1)), (r, c + 1)];
        for (r2, c2) in nbrs {
            if let Some(g) = geo.floor_cell(r2, c2) {
                if dist[g] == usize::MAX {
                    dist[g] = dist[f] + 1;
                    queue.push_back(g);
                }
            }
        }
    }
    dist
}

fn visibility_distance(geo: &SweepGeometry, region: &WinningRegion, hidden_penalty: f64) -> Vec<f64> {
    let na = geo.num_actions();
    let nh = geo.human_cells().len();
    let mut table = vec![-hidden_penalty; geo.num_observations() * na];
    for h in 0..nh {
        let good: Vec<usize> =
            (0..geo.num_floor()).filter(|&r| region.states_contains(geo.observation(r, h))).collect();
        if good.is_empty() {
            continue;
        }
        for r in 0..geo.num_floor() {
            if !geo.human_visible(r, h) {
                continue;
            }
            let (y, x) = geo.floor_pos(r);
            let d = good
                .iter()
                .map(|&g| {
                    let (y2, x2) = geo.floor_pos(g);
                    y.abs_diff(y2) + x.abs_diff(x2)
                })
                .min()
                .unwrap();
            let o = geo.observation(r, h);
            table[o * na..(o + 1) * na].fill(-(d as f64));
        }
    }
    table
}
