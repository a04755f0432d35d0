//! Finite tabular MDPs with labelled states.
//!
//! Transitions are stored sparsely: each available `(s, a)` pair owns a list
//! of successors with their probability and reward `R(s, a, s')`. The
//! expected immediate reward is derived on demand.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::{ApRegistry, LabelError, Letter};
use crate::numfmt::round_sig;

/// Tolerance on `Σ P(s, a, ·) = 1`.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Successor {
    pub next: usize,
    pub prob: f64,
    pub reward: f64,
}

/// A single broken MDP invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    RowSum { state: usize, action: usize, sum: f64 },
    ProbabilityOutOfRange { state: usize, action: usize, next: usize, prob: f64 },
    ZeroProbabilitySuccessor { state: usize, action: usize, next: usize },
    SuccessorOutOfRange { state: usize, action: usize, next: usize },
    DuplicateSuccessor { state: usize, action: usize, next: usize },
    NonFiniteReward { state: usize, action: usize, next: usize },
    NoAvailableAction { state: usize },
    InitialOutOfRange { initial: usize },
    LabelOutsideRegistry { state: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowSum { state, action, sum } => write!(
                f,
                "transition row (s{state}, a{action}) sums to {sum}, expected 1"
            ),
            Violation::ProbabilityOutOfRange { state, action, next, prob } => write!(
                f,
                "probability out of range at (s{state}, a{action}) -> s{next}: {prob}"
            ),
            Violation::ZeroProbabilitySuccessor { state, action, next } => write!(
                f,
                "listed successor with zero probability at (s{state}, a{action}) -> s{next}"
            ),
            Violation::SuccessorOutOfRange { state, action, next } => {
                write!(f, "successor s{next} of (s{state}, a{action}) does not exist")
            }
            Violation::DuplicateSuccessor { state, action, next } => {
                write!(f, "successor s{next} listed twice for (s{state}, a{action})")
            }
            Violation::NonFiniteReward { state, action, next } => {
                write!(f, "non-finite reward at (s{state}, a{action}) -> s{next}")
            }
            Violation::NoAvailableAction { state } => {
                write!(f, "state s{state} has no available action")
            }
            Violation::InitialOutOfRange { initial } => {
                write!(f, "initial state s{initial} does not exist")
            }
            Violation::LabelOutsideRegistry { state } => {
                write!(f, "label of s{state} uses propositions outside the registry")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("invalid MDP: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("MDP file: {0}")]
    Parse(String),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Finite MDP `(S, s_I, A, R, P)` with a labelling function `L: S -> 2^AP`.
#[derive(Debug, Clone)]
pub struct Mdp {
    state_names: Vec<String>,
    action_names: Vec<String>,
    initial: usize,
    ap: ApRegistry,
    labels: Vec<Letter>,
    coords: Option<Vec<Vec<i64>>>,
    available: Vec<bool>,
    rows: Vec<Vec<Successor>>,
}

impl Mdp {
    pub fn num_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn num_actions(&self) -> usize {
        self.action_names.len()
    }

    pub fn initial_state(&self) -> usize {
        self.initial
    }

    pub fn ap(&self) -> &ApRegistry {
        &self.ap
    }

    pub fn label(&self, s: usize) -> Letter {
        self.labels[s]
    }

    pub fn labels(&self) -> &[Letter] {
        &self.labels
    }

    pub fn state_name(&self, s: usize) -> &str {
        &self.state_names[s]
    }

    pub fn action_name(&self, a: usize) -> &str {
        &self.action_names[a]
    }

    pub fn action_names(&self) -> &[String] {
        &self.action_names
    }

    /// Integer coordinates attached to each state, used by distance-based
    /// potentials. `None` when the MDP carries no geometry.
    pub fn coords(&self) -> Option<&[Vec<i64>]> {
        self.coords.as_deref()
    }

    pub fn is_available(&self, s: usize, a: usize) -> bool {
        self.available[s * self.num_actions() + a]
    }

    /// Row-major `|S| x |A|` availability mask.
    pub fn availability(&self) -> &[bool] {
        &self.available
    }

    pub fn available_actions(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_actions()).filter(move |&a| self.is_available(s, a))
    }

    pub fn successors(&self, s: usize, a: usize) -> &[Successor] {
        &self.rows[s * self.num_actions() + a]
    }

    /// `Σ_{s'} P(s, a, s') R(s, a, s')`.
    pub fn expected_reward(&self, s: usize, a: usize) -> f64 {
        self.successors(s, a).iter().map(|t| t.prob * t.reward).sum()
    }

    /// Returns a copy whose rewards are replaced by `f(s, a, s', r)`.
    pub fn map_rewards<F>(&self, mut f: F) -> Mdp
    where
        F: FnMut(usize, usize, usize, f64) -> f64,
    {
        let mut out = self.clone();
        let na = self.num_actions();
        for (idx, row) in out.rows.iter_mut().enumerate() {
            for t in row.iter_mut() {
                t.reward = f(idx / na, idx % na, t.next, t.reward);
            }
        }
        out
    }

    /// Checks every structural invariant and reports all violations.
    pub fn validate(&self) -> Vec<Violation> {
        let ns = self.num_states();
        let na = self.num_actions();
        let mut out = Vec::new();
        if self.initial >= ns {
            out.push(Violation::InitialOutOfRange { initial: self.initial });
        }
        let mask = self.ap.mask();
        for s in 0..ns {
            if self.labels[s].0 & !mask != 0 {
                out.push(Violation::LabelOutsideRegistry { state: s });
            }
            let mut any = false;
            for a in 0..na {
                if !self.is_available(s, a) {
                    continue;
                }
                any = true;
                let row = self.successors(s, a);
                let mut sum = 0.0;
                let mut seen: Vec<usize> = Vec::with_capacity(row.len());
                for t in row {
                    if t.next >= ns {
                        out.push(Violation::SuccessorOutOfRange { state: s, action: a, next: t.next });
                    }
                    if !(0.0..=1.0).contains(&t.prob) || t.prob.is_nan() {
                        out.push(Violation::ProbabilityOutOfRange {
                            state: s,
                            action: a,
                            next: t.next,
                            prob: t.prob,
                        });
                    } else if t.prob == 0.0 {
                        out.push(Violation::ZeroProbabilitySuccessor { state: s, action: a, next: t.next });
                    }
                    if !t.reward.is_finite() {
                        out.push(Violation::NonFiniteReward { state: s, action: a, next: t.next });
                    }
                    if seen.contains(&t.next) {
                        out.push(Violation::DuplicateSuccessor { state: s, action: a, next: t.next });
                    }
                    seen.push(t.next);
                    sum += t.prob;
                }
                if !((sum - 1.0).abs() <= ROW_SUM_TOLERANCE) {
                    out.push(Violation::RowSum { state: s, action: a, sum });
                }
            }
            if !any {
                out.push(Violation::NoAvailableAction { state: s });
            }
        }
        out
    }

    pub fn from_json_str(text: &str) -> Result<Mdp, MdpError> {
        let file: MdpFile = serde_json::from_str(text)?;
        file.into_mdp()
    }

    pub fn load(path: &Path) -> Result<Mdp, MdpError> {
        Mdp::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_file_format(&self) -> MdpFile {
        let states = (0..self.num_states())
            .map(|s| StateEntry {
                name: self.state_names[s].clone(),
                labels: self.ap.letter_names(self.labels[s]),
                coords: self.coords.as_ref().map(|c| c[s].clone()),
            })
            .collect();
        let mut transitions = Vec::new();
        for s in 0..self.num_states() {
            for a in self.available_actions(s) {
                transitions.push(TransitionEntry {
                    s: StateRef::Name(self.state_names[s].clone()),
                    a: StateRef::Name(self.action_names[a].clone()),
                    to: self
                        .successors(s, a)
                        .iter()
                        .map(|t| SuccessorEntry {
                            s2: StateRef::Name(self.state_names[t.next].clone()),
                            p: round_sig(t.prob, 15),
                            r: t.reward,
                        })
                        .collect(),
                });
            }
        }
        MdpFile {
            ap: self.ap.names().to_vec(),
            states,
            actions: self.action_names.clone(),
            initial: StateRef::Name(self.state_names[self.initial].clone()),
            transitions,
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_file_format()).expect("MDP serialization cannot fail")
    }
}

/// Incremental constructor for [`Mdp`].
#[derive(Debug, Clone)]
pub struct MdpBuilder {
    state_names: Vec<String>,
    action_names: Vec<String>,
    initial: usize,
    ap: ApRegistry,
    labels: Vec<Letter>,
    coords: Option<Vec<Vec<i64>>>,
    available: Vec<bool>,
    rows: Vec<Vec<Successor>>,
}

impl MdpBuilder {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        Self {
            state_names: (0..num_states).map(|s| format!("s{s}")).collect(),
            action_names: (0..num_actions).map(|a| format!("a{a}")).collect(),
            initial: 0,
            ap: ApRegistry::empty(),
            labels: vec![Letter::EMPTY; num_states],
            coords: None,
            available: vec![false; num_states * num_actions],
            rows: vec![Vec::new(); num_states * num_actions],
        }
    }

    pub fn ap(mut self, ap: ApRegistry) -> Self {
        self.ap = ap;
        self
    }

    pub fn initial(mut self, s: usize) -> Self {
        self.initial = s;
        self
    }

    pub fn state_name(&mut self, s: usize, name: impl Into<String>) -> &mut Self {
        self.state_names[s] = name.into();
        self
    }

    pub fn action_names<S: Into<String>>(mut self, names: impl IntoIterator<Item = S>) -> Self {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        assert_eq!(names.len(), self.action_names.len(), "action name count mismatch");
        self.action_names = names;
        self
    }

    pub fn label(&mut self, s: usize, letter: Letter) -> &mut Self {
        self.labels[s] = letter;
        self
    }

    pub fn coords(&mut self, coords: Vec<Vec<i64>>) -> &mut Self {
        self.coords = Some(coords);
        self
    }

    /// Marks `(s, a)` available and appends a successor.
    pub fn transition(&mut self, s: usize, a: usize, next: usize, prob: f64, reward: f64) -> &mut Self {
        let idx = s * self.action_names.len() + a;
        self.available[idx] = true;
        self.rows[idx].push(Successor { next, prob, reward });
        self
    }

    /// Adds probability mass to an existing successor of `(s, a)` or appends
    /// a new one. Rewards of merged entries must agree.
    pub fn add_mass(&mut self, s: usize, a: usize, next: usize, prob: f64, reward: f64) -> &mut Self {
        let idx = s * self.action_names.len() + a;
        self.available[idx] = true;
        let row = &mut self.rows[idx];
        if let Some(t) = row.iter_mut().find(|t| t.next == next) {
            debug_assert_eq!(t.reward, reward, "conflicting rewards for merged successor");
            t.prob += prob;
        } else {
            row.push(Successor { next, prob, reward });
        }
        self
    }

    /// Builds without checking invariants.
    pub fn build_unchecked(self) -> Mdp {
        Mdp {
            state_names: self.state_names,
            action_names: self.action_names,
            initial: self.initial,
            ap: self.ap,
            labels: self.labels,
            coords: self.coords,
            available: self.available,
            rows: self.rows,
        }
    }

    pub fn build(self) -> Result<Mdp, MdpError> {
        let mdp = self.build_unchecked();
        let violations = mdp.validate();
        if violations.is_empty() {
            Ok(mdp)
        } else {
            Err(MdpError::Invalid(violations))
        }
    }
}

/// Deterministic stationary policy `π: S -> A`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StationaryPolicy {
    actions: Vec<usize>,
}

impl StationaryPolicy {
    pub fn new(actions: Vec<usize>) -> Self {
        Self { actions }
    }

    pub fn action(&self, s: usize) -> usize {
        self.actions[s]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// States whose chosen action is not available in `mdp`.
    pub fn invalid_states(&self, mdp: &Mdp) -> Vec<usize> {
        if self.actions.len() != mdp.num_states() {
            return (0..mdp.num_states().max(self.actions.len())).collect();
        }
        (0..mdp.num_states())
            .filter(|&s| self.actions[s] >= mdp.num_actions() || !mdp.is_available(s, self.actions[s]))
            .collect()
    }

    /// Every deterministic policy of `mdp`, in lexicographic order.
    pub fn enumerate(mdp: &Mdp) -> Vec<StationaryPolicy> {
        let choices: Vec<Vec<usize>> = (0..mdp.num_states())
            .map(|s| mdp.available_actions(s).collect())
            .collect();
        let mut out = vec![Vec::with_capacity(mdp.num_states())];
        for opts in &choices {
            let mut next = Vec::with_capacity(out.len() * opts.len());
            for prefix in &out {
                for &a in opts {
                    let mut p = prefix.clone();
                    p.push(a);
                    next.push(p);
                }
            }
            out = next;
        }
        out.into_iter().map(StationaryPolicy::new).collect()
    }
}

/// Dense `|S| x |A|` table of action values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self::filled(num_states, num_actions, 0.0)
    }

    pub fn filled(num_states: usize, num_actions: usize, v: f64) -> Self {
        Self { num_states, num_actions, values: vec![v; num_states * num_actions] }
    }

    pub fn from_values(num_states: usize, num_actions: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), num_states * num_actions);
        Self { num_states, num_actions, values }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.num_actions + a] = v;
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// Index of the largest entry among `candidates`, ties broken by lowest index.
pub fn argmax_by<F>(candidates: impl Iterator<Item = usize>, mut value: F) -> Option<usize>
where
    F: FnMut(usize) -> f64,
{
    let mut best: Option<(usize, f64)> = None;
    for a in candidates {
        let v = value(a);
        match best {
            Some((_, bv)) if !(v > bv) => {}
            _ => best = Some((a, v)),
        }
    }
    best.map(|(a, _)| a)
}

// ---------------------------------------------------------------------------
// JSON file format

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateRef {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateEntry {
    pub name: String,
    #[serde(default)]
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<Vec<i64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuccessorEntry {
    pub s2: StateRef,
    pub p: f64,
    #[serde(default)]
    pub r: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionEntry {
    pub s: StateRef,
    pub a: StateRef,
    pub to: Vec<SuccessorEntry>,
}

/// On-disk representation of an [`Mdp`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpFile {
    #[serde(default)]
    pub ap: Vec<String>,
    pub states: Vec<StateEntry>,
    pub actions: Vec<String>,
    pub initial: StateRef,
    pub transitions: Vec<TransitionEntry>,
}

fn resolve(r: &StateRef, names: &HashMap<&str, usize>, len: usize, what: &str) -> Result<usize, MdpError> {
    match r {
        StateRef::Index(i) if *i < len => Ok(*i),
        StateRef::Index(i) => Err(MdpError::Parse(format!("{what} index {i} out of range"))),
        StateRef::Name(n) => names
            .get(n.as_str())
            .copied()
            .ok_or_else(|| MdpError::Parse(format!("unknown {what} `{n}`"))),
    }
}

impl MdpFile {
    pub fn into_mdp(self) -> Result<Mdp, MdpError> {
        let ap = ApRegistry::new(self.ap.clone())?;
        let ns = self.states.len();
        let na = self.actions.len();
        let mut state_idx = HashMap::new();
        for (i, st) in self.states.iter().enumerate() {
            if state_idx.insert(st.name.as_str(), i).is_some() {
                return Err(MdpError::Parse(format!("duplicate state name `{}`", st.name)));
            }
        }
        let mut action_idx = HashMap::new();
        for (i, a) in self.actions.iter().enumerate() {
            if action_idx.insert(a.as_str(), i).is_some() {
                return Err(MdpError::Parse(format!("duplicate action name `{a}`")));
            }
        }
        let initial = resolve(&self.initial, &state_idx, ns, "state")?;
        let mut b = MdpBuilder::new(ns, na).action_names(self.actions.clone()).ap(ap.clone()).initial(initial);
        let mut coords = Vec::with_capacity(ns);
        for (i, st) in self.states.iter().enumerate() {
            b.state_name(i, st.name.clone());
            b.label(i, ap.letter(&st.labels)?);
            coords.push(st.coords.clone());
        }
        if ns > 0 && coords.iter().all(Option::is_some) {
            b.coords(coords.into_iter().map(Option::unwrap).collect());
        }
        for tr in &self.transitions {
            let s = resolve(&tr.s, &state_idx, ns, "state")?;
            let a = resolve(&tr.a, &action_idx, na, "action")?;
            if b.available[s * na + a] {
                return Err(MdpError::Parse(format!(
                    "transition row ({}, {}) listed twice",
                    self.states[s].name, self.actions[a]
                )));
            }
            if tr.to.is_empty() {
                return Err(MdpError::Parse(format!(
                    "transition row ({}, {}) has no successors",
                    self.states[s].name, self.actions[a]
                )));
            }
            for t in &tr.to {
                let next = resolve(&t.s2, &state_idx, ns, "state")?;
                b.transition(s, a, next, t.p, t.r);
            }
        }
        b.build()
    }
}
