//! Synchronous product of a labelled MDP with a safety automaton.

use std::collections::VecDeque;

use thiserror::Error;

use crate::automata::SafetyAutomaton;
use crate::mdp::Mdp;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProductError {
    #[error("automaton proposition `{0}` is not declared by the MDP")]
    RegistryMismatch(String),
    #[error("malformed product: {0}")]
    Malformed(String),
}

/// Product MDP over joint states `(s, q)`.
///
/// Joint states are created on demand: the initial pair, one entry pair
/// `(s, δ(q_I, L(s)))` per MDP state, and everything reachable from those.
#[derive(Debug, Clone)]
pub struct ProductMdp {
    num_mdp_states: usize,
    num_aut_states: usize,
    num_actions: usize,
    pairs: Vec<(usize, usize)>,
    index: Vec<Option<usize>>,
    initial: usize,
    accepting: Vec<bool>,
    available: Vec<bool>,
    /// `rows[v * |A| + a]` lists `(v', prob)`.
    rows: Vec<Vec<(usize, f64)>>,
}

impl ProductMdp {
    pub fn num_states(&self) -> usize {
        self.pairs.len()
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_mdp_states(&self) -> usize {
        self.num_mdp_states
    }

    pub fn num_aut_states(&self) -> usize {
        self.num_aut_states
    }

    pub fn initial_state(&self) -> usize {
        self.initial
    }

    pub fn pair(&self, v: usize) -> (usize, usize) {
        self.pairs[v]
    }

    pub fn index_of(&self, s: usize, q: usize) -> Option<usize> {
        self.index.get(s * self.num_aut_states + q).copied().flatten()
    }

    /// Membership in `H̄ = S × H`.
    pub fn is_accepting(&self, v: usize) -> bool {
        self.accepting[v]
    }

    pub fn is_available(&self, v: usize, a: usize) -> bool {
        self.available[v * self.num_actions + a]
    }

    pub fn successors(&self, v: usize, a: usize) -> &[(usize, f64)] {
        &self.rows[v * self.num_actions + a]
    }

    /// Product over an abstract graph, bypassing the MDP/automaton pairing.
    /// State `v` is reported as the pair `(v, 0)`.
    pub fn from_raw(
        num_actions: usize,
        accepting: Vec<bool>,
        available: Vec<bool>,
        rows: Vec<Vec<(usize, f64)>>,
        initial: usize,
    ) -> Result<Self, ProductError> {
        let n = accepting.len();
        if available.len() != n * num_actions || rows.len() != n * num_actions || initial >= n.max(1) {
            return Err(ProductError::Malformed("table sizes disagree".into()));
        }
        if rows.iter().flatten().any(|&(v, _)| v >= n) {
            return Err(ProductError::Malformed("successor out of range".into()));
        }
        Ok(Self {
            num_mdp_states: n,
            num_aut_states: 1,
            num_actions,
            pairs: (0..n).map(|v| (v, 0)).collect(),
            index: (0..n).map(Some).collect(),
            initial,
            accepting,
            available,
            rows,
        })
    }
}

/// Builds the product `M × T`. Automaton propositions are matched to the
/// MDP's registry by name.
pub fn build_product(mdp: &Mdp, aut: &SafetyAutomaton) -> Result<ProductMdp, ProductError> {
    for name in aut.ap().names() {
        if mdp.ap().index_of(name).is_none() {
            return Err(ProductError::RegistryMismatch(name.clone()));
        }
    }
    let ns = mdp.num_states();
    let nq = aut.num_states();
    let na = mdp.num_actions();
    let letters: Vec<_> = (0..ns).map(|s| mdp.ap().translate(mdp.label(s), aut.ap())).collect();

    let mut p = ProductMdp {
        num_mdp_states: ns,
        num_aut_states: nq,
        num_actions: na,
        pairs: Vec::new(),
        index: vec![None; ns * nq],
        initial: 0,
        accepting: Vec::new(),
        available: Vec::new(),
        rows: Vec::new(),
    };
    let mut queue = VecDeque::new();
    let intern = |p: &mut ProductMdp, s: usize, q: usize, queue: &mut VecDeque<usize>| -> usize {
        let key = s * nq + q;
        if let Some(v) = p.index[key] {
            return v;
        }
        let v = p.pairs.len();
        p.index[key] = Some(v);
        p.pairs.push((s, q));
        p.accepting.push(aut.is_accepting(q));
        queue.push_back(v);
        v
    };

    let s_i = mdp.initial_state();
    p.initial = intern(&mut p, s_i, aut.step(aut.initial_state(), letters[s_i]), &mut queue);
    for (s, &l) in letters.iter().enumerate() {
        intern(&mut p, s, aut.step(aut.initial_state(), l), &mut queue);
    }

    while let Some(v) = queue.pop_front() {
        let (s, q) = p.pairs[v];
        debug_assert_eq!(p.rows.len(), v * na);
        for a in 0..na {
            let mut row = Vec::new();
            if mdp.is_available(s, a) {
                for succ in mdp.successors(s, a) {
                    let q2 = aut.step(q, letters[succ.next]);
                    let v2 = intern(&mut p, succ.next, q2, &mut queue);
                    // Distinct MDP successors yield distinct joint states.
                    row.push((v2, succ.prob));
                }
            }
            p.available.push(mdp.is_available(s, a));
            p.rows.push(row);
        }
    }
    Ok(p)
}
