use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learning::shield::ShieldMask;
use crate::mdp::{QTable, StationaryPolicy};
use crate::numfmt::{round_sig, write_atomic};
use crate::potential::PotentialTable;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnerError {
    #[error("non-finite value after update at step {step} (state {state}, action {action})")]
    NonFinite { step: u64, state: usize, action: usize },
    #[error("invalid learner config: {0}")]
    InvalidConfig(String),
    #[error("{0}")]
    Io(String),
    #[error("malformed q-table file: {0}")]
    Parse(String),
}

/// How the gain estimate is indexed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RhoMode {
    /// One estimate per state, updated at the state the transition left.
    #[default]
    PerState,
    /// A single shared estimate.
    Scalar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateSchedule {
    Constant,
    /// `rate · (κ / (κ + n))^exponent` with `n` the prior visit count and
    /// `κ = offset` (1 by default).
    VisitDecay {
        exponent: f64,
        #[serde(default = "one")]
        offset: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// Exploration with a parameter decaying geometrically from `start` to `end`
/// over the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Exploration {
    Softmax { tau0: f64, tau_min: f64 },
    EpsilonGreedy { eps0: f64, eps_min: f64 },
}

impl Exploration {
    fn bounds(&self) -> (f64, f64) {
        match *self {
            Exploration::Softmax { tau0, tau_min } => (tau0, tau_min),
            Exploration::EpsilonGreedy { eps0, eps_min } => (eps0, eps_min),
        }
    }

    /// Parameter value at `step` of `total`.
    pub fn value_at(&self, step: u64, total: u64) -> f64 {
        let (start, end) = self.bounds();
        if total <= 1 || start == end {
            return start;
        }
        if end == 0.0 {
            return start * (1.0 - step as f64 / total as f64);
        }
        start * (end / start).powf(step as f64 / total as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub alpha: f64,
    pub beta: f64,
    pub rates: RateSchedule,
    pub rho_mode: RhoMode,
    pub exploration: Exploration,
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 0.01,
            rates: RateSchedule::Constant,
            rho_mode: RhoMode::PerState,
            exploration: Exploration::Softmax { tau0: 5.0, tau_min: 0.05 },
            seed: 0,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |m: &str| Err(LearnerError::InvalidConfig(m.into()));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must lie in (0, 1]");
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad("beta must lie in (0, 1]");
        }
        if let RateSchedule::VisitDecay { exponent, offset } = self.rates {
            if !(exponent.is_finite() && exponent >= 0.0) {
                return bad("decay exponent must be a non-negative number");
            }
            if !(offset.is_finite() && offset > 0.0) {
                return bad("decay offset must be positive");
            }
        }
        match self.exploration {
            Exploration::Softmax { tau0, tau_min } if !(tau0 > 0.0 && tau_min > 0.0 && tau0.is_finite()) => {
                bad("temperatures must be positive")
            }
            Exploration::EpsilonGreedy { eps0, eps_min }
                if !((0.0..=1.0).contains(&eps0) && (0.0..=1.0).contains(&eps_min)) =>
            {
                bad("epsilon must lie in [0, 1]")
            }
            _ => Ok(()),
        }
    }
}

/// One observed step `(s, a, r, s')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub next: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState {
    pub q: QTable,
    /// Length `|S|` for [`RhoMode::PerState`], 1 for [`RhoMode::Scalar`].
    pub rho: Vec<f64>,
    pub steps: u64,
    available: Vec<bool>,
    visits_sa: Vec<u32>,
    visits_s: Vec<u32>,
}

/// `(V(a) − V(b))` for `V = Q + Φ`, computed so that a constant `Φ` adds an
/// exact zero.
#[inline]
fn value_diff(q: &[f64], phi: Option<&[f64]>, a: usize, b: usize) -> f64 {
    let dq = q[a] - q[b];
    match phi {
        Some(p) => dq + (p[a] - p[b]),
        None => dq,
    }
}

/// Lowest-index maximiser of `Q + Φ` over the actions admitted by `allowed`.
pub(crate) fn greedy_action(q: &[f64], phi: Option<&[f64]>, allowed: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for a in 0..q.len() {
        if !allowed(a) {
            continue;
        }
        match best {
            None => best = Some(a),
            Some(b) if value_diff(q, phi, a, b) > 0.0 => best = Some(a),
            _ => {}
        }
    }
    best
}

impl LearnerState {
    pub fn new(num_states: usize, num_actions: usize, available: Vec<bool>, rho_mode: RhoMode) -> Self {
        assert_eq!(available.len(), num_states * num_actions);
        let rho_len = match rho_mode {
            RhoMode::PerState => num_states,
            RhoMode::Scalar => 1,
        };
        Self {
            q: QTable::zeros(num_states, num_actions),
            rho: vec![0.0; rho_len],
            steps: 0,
            available,
            visits_sa: vec![0; num_states * num_actions],
            visits_s: vec![0; num_states],
        }
    }

    pub fn num_states(&self) -> usize {
        self.q.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.q.num_actions()
    }

    pub fn rho_mode(&self) -> RhoMode {
        if self.rho.len() == 1 && self.num_states() != 1 {
            RhoMode::Scalar
        } else {
            RhoMode::PerState
        }
    }

    pub fn rho_at(&self, s: usize) -> f64 {
        if self.rho.len() == 1 {
            self.rho[0]
        } else {
            self.rho[s]
        }
    }

    pub fn is_available(&self, s: usize, a: usize) -> bool {
        self.available[s * self.num_actions() + a]
    }

    pub fn availability(&self) -> &[bool] {
        &self.available
    }

    pub fn visits(&self, s: usize, a: usize) -> u32 {
        self.visits_sa[s * self.num_actions() + a]
    }

    fn rates(&self, s: usize, a: usize, config: &LearnerConfig) -> (f64, f64) {
        match config.rates {
            RateSchedule::Constant => (config.alpha, config.beta),
            RateSchedule::VisitDecay { exponent, offset } => {
                let n_sa = self.visits_sa[s * self.num_actions() + a] as f64;
                let n_rho = if self.rho.len() == 1 { self.steps as f64 } else { self.visits_s[s] as f64 };
                (
                    config.alpha * (offset / (offset + n_sa)).powf(exponent),
                    config.beta * (offset / (offset + n_rho)).powf(exponent),
                )
            }
        }
    }

    /// Applies `Q(s,a) += α·δ`, `ρ += β·δ` from one snapshot.
    fn apply(&mut self, t: &Transition, td: f64, config: &LearnerConfig) -> Result<(), LearnerError> {
        let (alpha, beta) = self.rates(t.s, t.a, config);
        let q_new = self.q.get(t.s, t.a) + alpha * td;
        let ri = if self.rho.len() == 1 { 0 } else { t.s };
        let rho_new = self.rho[ri] + beta * td;
        if !q_new.is_finite() || !rho_new.is_finite() {
            return Err(LearnerError::NonFinite { step: self.steps, state: t.s, action: t.a });
        }
        self.q.set(t.s, t.a, q_new);
        self.rho[ri] = rho_new;
        let i = t.s * self.num_actions() + t.a;
        self.visits_sa[i] += 1;
        self.visits_s[t.s] += 1;
        self.steps += 1;
        Ok(())
    }

    /// R-learning: `δ = r + max_{a'} Q(s',a') − ρ(s) − Q(s,a)`. With a shield
    /// the max ranges over the actions it allows at `s'`.
    pub fn td_error(&self, t: &Transition, shield: Option<&ShieldMask>) -> f64 {
        let row = self.q.row(t.next);
        let a2 = greedy_action(row, None, |a| self.admits(shield, t.next, a)).expect("state without actions");
        t.r + row[a2] - self.rho_at(t.s) - self.q.get(t.s, t.a)
    }

    /// Shaped error with look-ahead advice: `a⁺ = argmax (Q + Φ)(s', ·)`,
    /// `F = Φ(s',a⁺) − Φ(s,a)`, `δ = r + F + Q(s',a⁺) − ρ(s) − Q(s,a)`.
    pub fn shaped_td_error(&self, t: &Transition, phi: &PotentialTable) -> f64 {
        let row = self.q.row(t.next);
        let prow = phi.row(t.next);
        let a_plus =
            greedy_action(row, Some(prow), |a| self.is_available(t.next, a)).expect("state without actions");
        let f = prow[a_plus] - phi.get(t.s, t.a);
        (t.r + f) + row[a_plus] - self.rho_at(t.s) - self.q.get(t.s, t.a)
    }

    fn admits(&self, shield: Option<&ShieldMask>, s: usize, a: usize) -> bool {
        self.is_available(s, a) && shield.is_none_or(|m| m.allows(s, a))
    }

    /// Lowest-index maximiser of `Q` (or `Q + Φ`) at `s`.
    pub fn greedy(&self, s: usize, potential: Option<&PotentialTable>, shield: Option<&ShieldMask>) -> usize {
        greedy_action(self.q.row(s), potential.map(|p| p.row(s)), |a| self.admits(shield, s, a))
            .expect("state without actions")
    }

    pub fn to_file_format(&self, variant: &str) -> QTableFile {
        QTableFile {
            variant: variant.to_string(),
            num_states: self.num_states(),
            num_actions: self.num_actions(),
            q: self.q.values().iter().map(|&v| round_sig(v, 12)).collect(),
            rho: self.rho.iter().map(|&v| round_sig(v, 12)).collect(),
            steps: self.steps,
            available: self.available.iter().map(|&b| b as u8).collect(),
        }
    }

    pub fn save(&self, path: &Path, variant: &str) -> Result<(), LearnerError> {
        let text = serde_json::to_string(&self.to_file_format(variant)).expect("q-table serialization cannot fail");
        write_atomic(path, text.as_bytes()).map_err(|e| LearnerError::Io(e.to_string()))
    }

    /// Restores a table saved with [`LearnerState::save`]; returns the variant tag too.
    pub fn load(path: &Path) -> Result<(Self, String), LearnerError> {
        let text = std::fs::read_to_string(path).map_err(|e| LearnerError::Io(e.to_string()))?;
        let f: QTableFile = serde_json::from_str(&text).map_err(|e| LearnerError::Parse(e.to_string()))?;
        let n = f.num_states * f.num_actions;
        if f.q.len() != n || f.available.len() != n || !(f.rho.len() == 1 || f.rho.len() == f.num_states) {
            return Err(LearnerError::Parse("table sizes disagree".into()));
        }
        let state = Self {
            q: QTable::from_values(f.num_states, f.num_actions, f.q),
            rho: f.rho,
            steps: f.steps,
            available: f.available.iter().map(|&b| b != 0).collect(),
            visits_sa: vec![0; n],
            visits_s: vec![0; f.num_states],
        };
        Ok((state, f.variant))
    }
}

/// On-disk Q-table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QTableFile {
    pub variant: String,
    pub num_states: usize,
    pub num_actions: usize,
    pub q: Vec<f64>,
    pub rho: Vec<f64>,
    pub steps: u64,
    pub available: Vec<u8>,
}

pub fn r_learning_update(state: &mut LearnerState, t: &Transition, config: &LearnerConfig) -> Result<(), LearnerError> {
    let td = state.td_error(t, None);
    state.apply(t, td, config)
}

/// R-learning whose bootstrap max is restricted to shield-allowed actions.
pub fn shielded_update(
    state: &mut LearnerState,
    t: &Transition,
    shield: &ShieldMask,
    config: &LearnerConfig,
) -> Result<(), LearnerError> {
    let td = state.td_error(t, Some(shield));
    state.apply(t, td, config)
}

pub fn shaped_update(
    state: &mut LearnerState,
    t: &Transition,
    potential: &PotentialTable,
    config: &LearnerConfig,
) -> Result<(), LearnerError> {
    let td = state.shaped_td_error(t, potential);
    state.apply(t, td, config)
}

/// `argmax_a Q(s,a)`, or `argmax_a (Q + Φ)(s,a)` when a potential is given.
pub fn recover_policy(state: &LearnerState, potential: Option<&PotentialTable>) -> StationaryPolicy {
    StationaryPolicy::new((0..state.num_states()).map(|s| state.greedy(s, potential, None)).collect())
}

/// Samples an action at `s` from the exploration distribution over `V = Q`
/// or `V = Q + Φ`, restricted to shield-allowed actions when a shield is
/// given. `param` is the current temperature or epsilon.
pub fn select_action<R: Rng + ?Sized>(
    state: &LearnerState,
    s: usize,
    exploration: &Exploration,
    param: f64,
    potential: Option<&PotentialTable>,
    shield: Option<&ShieldMask>,
    rng: &mut R,
) -> usize {
    let q = state.q.row(s);
    let phi = potential.map(|p| p.row(s));
    let na = q.len();
    let best = greedy_action(q, phi, |a| state.admits(shield, s, a)).expect("state without actions");
    match exploration {
        Exploration::EpsilonGreedy { .. } => {
            if param > 0.0 && rng.random::<f64>() < param {
                let support: Vec<usize> = (0..na).filter(|&a| state.admits(shield, s, a)).collect();
                support[rng.random_range(0..support.len())]
            } else {
                best
            }
        }
        Exploration::Softmax { .. } => {
            let mut weights = [0.0f64; 32];
            let mut heap;
            let w: &mut [f64] = if na <= weights.len() {
                &mut weights[..na]
            } else {
                heap = vec![0.0; na];
                &mut heap
            };
            let mut total = 0.0;
            for (a, slot) in w.iter_mut().enumerate() {
                *slot = if state.admits(shield, s, a) {
                    (value_diff(q, phi, a, best) / param).exp()
                } else {
                    0.0
                };
                total += *slot;
            }
            let mut u = rng.random::<f64>() * total;
            for (a, &x) in w.iter().enumerate() {
                if x > 0.0 {
                    if u < x {
                        return a;
                    }
                    u -= x;
                }
            }
            best
        }
    }
}
