//! Safety automata over the label alphabet and the invariant-formula front end.
//!
//! Formulas have the shape `G <prop-expr>` where the body is a boolean
//! combination of atoms using `& | ! ( )`, `true`, `false` and `*` (any).
//! An invariant compiles to a two-state DFA: an accepting `safe` state that
//! loops on letters satisfying the body and an absorbing rejecting `sink`.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::{ApRegistry, LabelError, Letter};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AutomatonError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown atom `{0}`")]
    UnknownAtom(String),
    #[error("transition function is not total: state `{state}` has no successor on letter {letter}")]
    NonTotalTransition { state: String, letter: String },
    #[error("{0}")]
    Io(String),
}

impl From<LabelError> for AutomatonError {
    fn from(e: LabelError) -> Self {
        match e {
            LabelError::UnknownAtom(a) => AutomatonError::UnknownAtom(a),
            other => AutomatonError::Parse(other.to_string()),
        }
    }
}

/// Propositional expression over named atoms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PropExpr {
    True,
    False,
    Atom(String),
    Not(Box<PropExpr>),
    And(Box<PropExpr>, Box<PropExpr>),
    Or(Box<PropExpr>, Box<PropExpr>),
}

impl PropExpr {
    pub fn parse(text: &str) -> Result<PropExpr, AutomatonError> {
        let tokens = tokenize(text)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.or()?;
        if p.pos != p.tokens.len() {
            return Err(AutomatonError::Parse(format!("unexpected `{}`", p.tokens[p.pos])));
        }
        Ok(e)
    }

    pub fn atoms(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            PropExpr::Atom(a) => {
                if !out.contains(&a.as_str()) {
                    out.push(a)
                }
            }
            PropExpr::Not(e) => e.collect_atoms(out),
            PropExpr::And(a, b) | PropExpr::Or(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
            PropExpr::True | PropExpr::False => {}
        }
    }

    /// Fails with `UnknownAtom` if an atom is missing from `registry`.
    pub fn check_atoms(&self, registry: &ApRegistry) -> Result<(), AutomatonError> {
        for a in self.atoms() {
            if registry.index_of(a).is_none() {
                return Err(AutomatonError::UnknownAtom(a.to_string()));
            }
        }
        Ok(())
    }

    /// Evaluates against a letter; atoms missing from the registry are false.
    pub fn eval(&self, letter: Letter, registry: &ApRegistry) -> bool {
        match self {
            PropExpr::True => true,
            PropExpr::False => false,
            PropExpr::Atom(a) => registry.index_of(a).is_some_and(|i| letter.contains(i)),
            PropExpr::Not(e) => !e.eval(letter, registry),
            PropExpr::And(a, b) => a.eval(letter, registry) && b.eval(letter, registry),
            PropExpr::Or(a, b) => a.eval(letter, registry) || b.eval(letter, registry),
        }
    }
}

impl fmt::Display for PropExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PropExpr::True => write!(f, "true"),
            PropExpr::False => write!(f, "false"),
            PropExpr::Atom(a) => write!(f, "{a}"),
            PropExpr::Not(e) => write!(f, "!{e}"),
            PropExpr::And(a, b) => write!(f, "({a} & {b})"),
            PropExpr::Or(a, b) => write!(f, "({a} | {b})"),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<String>, AutomatonError> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if "&|!()*".contains(c) {
            out.push(c.to_string());
            i += 1;
        } else if c.is_alphanumeric() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(chars[start..i].iter().collect());
        } else {
            return Err(AutomatonError::Parse(format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<String>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&str> {
        self.tokens.get(self.pos).map(String::as_str)
    }

    fn or(&mut self) -> Result<PropExpr, AutomatonError> {
        let mut lhs = self.and()?;
        while self.peek() == Some("|") {
            self.pos += 1;
            lhs = PropExpr::Or(Box::new(lhs), Box::new(self.and()?));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<PropExpr, AutomatonError> {
        let mut lhs = self.unary()?;
        while self.peek() == Some("&") {
            self.pos += 1;
            lhs = PropExpr::And(Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<PropExpr, AutomatonError> {
        let tok = self
            .peek()
            .ok_or_else(|| AutomatonError::Parse("unexpected end of expression".into()))?
            .to_string();
        self.pos += 1;
        match tok.as_str() {
            "!" => Ok(PropExpr::Not(Box::new(self.unary()?))),
            "(" => {
                let e = self.or()?;
                if self.peek() != Some(")") {
                    return Err(AutomatonError::Parse("missing `)`".into()));
                }
                self.pos += 1;
                Ok(e)
            }
            "true" | "*" => Ok(PropExpr::True),
            "false" => Ok(PropExpr::False),
            "&" | "|" | ")" => Err(AutomatonError::Parse(format!("unexpected `{tok}`"))),
            _ => Ok(PropExpr::Atom(tok)),
        }
    }
}

/// `□ φ` for a propositional body `φ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvariantFormula {
    pub body: PropExpr,
}

impl InvariantFormula {
    pub fn new(body: PropExpr) -> Self {
        Self { body }
    }

    /// Parses `G <expr>` (also accepts `□` or `[]` for the operator).
    pub fn parse(text: &str) -> Result<Self, AutomatonError> {
        let t = text.trim();
        let rest = t
            .strip_prefix('□')
            .or_else(|| t.strip_prefix("[]"))
            .or_else(|| t.strip_prefix('G').filter(|r| r.starts_with(|c: char| c.is_whitespace() || c == '(')))
            .ok_or_else(|| AutomatonError::Parse(format!("expected `G <expr>`, got `{t}`")))?;
        Ok(Self { body: PropExpr::parse(rest)? })
    }
}

impl fmt::Display for InvariantFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "G {}", self.body)
    }
}

/// Deterministic automaton `(Q, q_I, 2^AP, δ, H)` with safety acceptance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SafetyAutomaton {
    ap: ApRegistry,
    state_names: Vec<String>,
    initial: usize,
    accepting: Vec<bool>,
    /// `delta[q * |2^AP| + letter]`
    delta: Vec<usize>,
}

/// Result of running an automaton over a finite word.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOutcome {
    pub final_state: usize,
    pub accepted: bool,
}

impl SafetyAutomaton {
    /// Builds an automaton from a dense, total transition table.
    pub fn new(
        ap: ApRegistry,
        state_names: Vec<String>,
        initial: usize,
        accepting: Vec<bool>,
        delta: Vec<usize>,
    ) -> Result<Self, AutomatonError> {
        let nq = state_names.len();
        if nq == 0 || initial >= nq || accepting.len() != nq {
            return Err(AutomatonError::Parse("malformed automaton".into()));
        }
        if delta.len() != nq * ap.alphabet_size() || delta.iter().any(|&q| q >= nq) {
            return Err(AutomatonError::Parse("transition table has wrong shape".into()));
        }
        Ok(Self { ap, state_names, initial, accepting, delta })
    }

    pub fn ap(&self) -> &ApRegistry {
        &self.ap
    }

    pub fn num_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn initial_state(&self) -> usize {
        self.initial
    }

    pub fn state_name(&self, q: usize) -> &str {
        &self.state_names[q]
    }

    pub fn is_accepting(&self, q: usize) -> bool {
        self.accepting[q]
    }

    pub fn step(&self, q: usize, letter: Letter) -> usize {
        let idx = (letter.0 & self.ap.mask()) as usize;
        self.delta[q * self.ap.alphabet_size() + idx]
    }

    /// Runs over `word`; accepted iff every visited state, the initial one
    /// included, is accepting. Bits beyond the registry width are ignored.
    pub fn run(&self, word: &[Letter]) -> RunOutcome {
        let mut q = self.initial;
        let mut accepted = self.accepting[q];
        for &w in word {
            q = self.step(q, w);
            accepted &= self.accepting[q];
        }
        RunOutcome { final_state: q, accepted }
    }

    /// Structural equality up to renaming of states reachable from the
    /// initial state.
    pub fn is_isomorphic(&self, other: &SafetyAutomaton) -> bool {
        if self.ap != other.ap {
            return false;
        }
        let mut map: HashMap<usize, usize> = HashMap::new();
        let mut back: HashMap<usize, usize> = HashMap::new();
        let mut queue = VecDeque::from([(self.initial, other.initial)]);
        map.insert(self.initial, other.initial);
        back.insert(other.initial, self.initial);
        while let Some((p, q)) = queue.pop_front() {
            if self.accepting[p] != other.accepting[q] {
                return false;
            }
            for letter in self.ap.letters() {
                let (p2, q2) = (self.step(p, letter), other.step(q, letter));
                match (map.get(&p2), back.get(&q2)) {
                    (None, None) => {
                        map.insert(p2, q2);
                        back.insert(q2, p2);
                        queue.push_back((p2, q2));
                    }
                    (Some(&x), Some(&y)) if x == q2 && y == p2 => {}
                    _ => return false,
                }
            }
        }
        true
    }

    pub fn from_json_str(text: &str) -> Result<Self, AutomatonError> {
        let file: DfaFile = serde_json::from_str(text).map_err(|e| AutomatonError::Parse(e.to_string()))?;
        file.into_automaton()
    }

    pub fn to_file_format(&self) -> DfaFile {
        let mut transitions = Vec::new();
        for q in 0..self.num_states() {
            for letter in self.ap.letters() {
                let cube: Vec<String> = self
                    .ap
                    .names()
                    .iter()
                    .enumerate()
                    .map(|(i, n)| if letter.contains(i) { n.clone() } else { format!("!{n}") })
                    .collect();
                transitions.push(DfaTransition {
                    from: self.state_names[q].clone(),
                    when: if cube.is_empty() { "true".into() } else { cube.join(" & ") },
                    to: self.state_names[self.step(q, letter)].clone(),
                });
            }
        }
        DfaFile {
            ap: self.ap.names().to_vec(),
            states: self
                .state_names
                .iter()
                .zip(&self.accepting)
                .map(|(n, &a)| DfaState { name: n.clone(), accepting: a })
                .collect(),
            initial: self.state_names[self.initial].clone(),
            transitions,
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_file_format()).expect("DFA serialization cannot fail")
    }
}

/// Compiles `□ φ` into its canonical two-state safety automaton, or a single
/// accepting state when `φ` is valid over the registry.
pub fn compile_invariant(formula: &InvariantFormula, registry: &ApRegistry) -> Result<SafetyAutomaton, AutomatonError> {
    formula.body.check_atoms(registry)?;
    let sat: Vec<bool> = registry.letters().map(|l| formula.body.eval(l, registry)).collect();
    if sat.iter().all(|&b| b) {
        return SafetyAutomaton::new(registry.clone(), vec!["safe".into()], 0, vec![true], vec![0; sat.len()]);
    }
    let mut delta: Vec<usize> = sat.iter().map(|&ok| if ok { 0 } else { 1 }).collect();
    delta.extend(std::iter::repeat_n(1, sat.len()));
    SafetyAutomaton::new(registry.clone(), vec!["safe".into(), "sink".into()], 0, vec![true, false], delta)
}

pub fn dfa_run(aut: &SafetyAutomaton, word: &[Letter]) -> RunOutcome {
    aut.run(word)
}

pub fn load_dfa(path: &Path) -> Result<SafetyAutomaton, AutomatonError> {
    let text = std::fs::read_to_string(path).map_err(|e| AutomatonError::Io(e.to_string()))?;
    SafetyAutomaton::from_json_str(&text)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DfaState {
    pub name: String,
    pub accepting: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DfaTransition {
    pub from: String,
    /// Propositional pattern; atoms it does not mention are don't-cares.
    pub when: String,
    pub to: String,
}

/// On-disk DFA representation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DfaFile {
    #[serde(default)]
    pub ap: Vec<String>,
    pub states: Vec<DfaState>,
    pub initial: String,
    pub transitions: Vec<DfaTransition>,
}

impl DfaFile {
    pub fn into_automaton(self) -> Result<SafetyAutomaton, AutomatonError> {
        let ap = ApRegistry::new(self.ap.clone())?;
        let mut idx = HashMap::new();
        for (i, s) in self.states.iter().enumerate() {
            if idx.insert(s.name.clone(), i).is_some() {
                return Err(AutomatonError::Parse(format!("duplicate state name `{}`", s.name)));
            }
        }
        let lookup = |n: &str| {
            idx.get(n)
                .copied()
                .ok_or_else(|| AutomatonError::Parse(format!("unknown state `{n}`")))
        };
        let initial = lookup(&self.initial)?;
        let k = ap.alphabet_size();
        let mut delta: Vec<Option<usize>> = vec![None; self.states.len() * k];
        for t in &self.transitions {
            let from = lookup(&t.from)?;
            let to = lookup(&t.to)?;
            let pattern = PropExpr::parse(&t.when)?;
            pattern.check_atoms(&ap)?;
            for letter in ap.letters().filter(|&l| pattern.eval(l, &ap)) {
                let slot = &mut delta[from * k + letter.index()];
                match slot {
                    Some(prev) if *prev != to => {
                        return Err(AutomatonError::Parse(format!(
                            "nondeterministic transitions from `{}` on {:?}",
                            t.from,
                            ap.letter_names(letter)
                        )))
                    }
                    _ => *slot = Some(to),
                }
            }
        }
        let mut dense = Vec::with_capacity(delta.len());
        for (i, d) in delta.iter().enumerate() {
            match d {
                Some(q) => dense.push(*q),
                None => {
                    return Err(AutomatonError::NonTotalTransition {
                        state: self.states[i / k].name.clone(),
                        letter: format!("{:?}", ap.letter_names(Letter((i % k) as u32))),
                    })
                }
            }
        }
        SafetyAutomaton::new(
            ap,
            self.states.iter().map(|s| s.name.clone()).collect(),
            initial,
            self.states.iter().map(|s| s.accepting).collect(),
            dense,
        )
    }
}
