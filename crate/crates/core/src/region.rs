//! Almost-sure winning regions of safety objectives on product MDPs.

use std::collections::VecDeque;

use crate::product::ProductMdp;

/// `W ⊆ S × A` together with the product-level set it was projected from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WinningRegion {
    num_states: usize,
    num_actions: usize,
    members: Vec<bool>,
    product_members: Vec<bool>,
}

impl WinningRegion {
    /// Region given directly as an `S × A` bitset, with no product behind it.
    pub fn from_members(num_states: usize, num_actions: usize, members: Vec<bool>) -> Self {
        assert_eq!(members.len(), num_states * num_actions);
        Self { num_states, num_actions, members, product_members: Vec::new() }
    }

    /// Projects a product-level set `W₀ ⊆ V × A` existentially over `q`.
    pub fn project(prod: &ProductMdp, product_members: Vec<bool>) -> Self {
        let na = prod.num_actions();
        let mut members = vec![false; prod.num_mdp_states() * na];
        for v in 0..prod.num_states() {
            let (s, _) = prod.pair(v);
            for a in 0..na {
                if product_members[v * na + a] {
                    members[s * na + a] = true;
                }
            }
        }
        Self { num_states: prod.num_mdp_states(), num_actions: na, members, product_members }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn contains(&self, s: usize, a: usize) -> bool {
        self.members[s * self.num_actions + a]
    }

    pub fn members(&self) -> &[bool] {
        &self.members
    }

    /// `W₀ ⊆ V × A`; empty when built with [`WinningRegion::from_members`].
    pub fn product_members(&self) -> &[bool] {
        &self.product_members
    }

    pub fn product_contains(&self, v: usize, a: usize) -> bool {
        self.product_members[v * self.num_actions + a]
    }

    pub fn is_empty(&self) -> bool {
        !self.members.iter().any(|&m| m)
    }

    pub fn len(&self) -> usize {
        self.members.iter().filter(|&&m| m).count()
    }

    /// Whether `s` has at least one member action.
    pub fn states_contains(&self, s: usize) -> bool {
        (0..self.num_actions).any(|a| self.contains(s, a))
    }

    /// States with at least one member action.
    pub fn states(&self) -> Vec<usize> {
        (0..self.num_states).filter(|&s| self.states_contains(s)).collect()
    }
}

/// Losing sets `(W̄, Ĥ)` of the removal loop, as `V × A` and `V` bitsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LosingSets {
    pub pairs: Vec<bool>,
    pub states: Vec<bool>,
}

impl LosingSets {
    /// `W̄ = (V \ H̄) × A`, `Ĥ = V \ H̄`.
    pub fn initial(prod: &ProductMdp) -> Self {
        let na = prod.num_actions();
        let states: Vec<bool> = (0..prod.num_states()).map(|v| !prod.is_accepting(v)).collect();
        let pairs = (0..prod.num_states() * na).map(|i| states[i / na]).collect();
        Self { pairs, states }
    }

    /// Available pairs outside `W̄`.
    pub fn complement(&self, prod: &ProductMdp) -> Vec<bool> {
        let na = prod.num_actions();
        (0..self.pairs.len())
            .map(|i| !self.pairs[i] && prod.is_available(i / na, i % na))
            .collect()
    }
}

/// One full pass of the removal loop. Returns whether anything changed.
pub fn removal_sweep(prod: &ProductMdp, sets: &mut LosingSets) -> bool {
    let na = prod.num_actions();
    let mut changed = false;
    for v in 0..prod.num_states() {
        for a in 0..na {
            let i = v * na + a;
            if !sets.pairs[i] && prod.successors(v, a).iter().any(|&(v2, _)| sets.states[v2]) {
                sets.pairs[i] = true;
                changed = true;
            }
        }
    }
    for v in 0..prod.num_states() {
        if !sets.states[v] && (0..na).filter(|&a| prod.is_available(v, a)).all(|a| sets.pairs[v * na + a]) {
            sets.states[v] = true;
            changed = true;
        }
    }
    changed
}

/// The removal loop run by full sweeps until nothing changes.
pub fn losing_sets_by_sweeps(prod: &ProductMdp) -> LosingSets {
    let mut sets = LosingSets::initial(prod);
    while removal_sweep(prod, &mut sets) {}
    sets
}

/// The same fixpoint computed with a predecessor worklist in time linear in
/// the size of the product graph.
pub fn losing_sets(prod: &ProductMdp) -> LosingSets {
    let nv = prod.num_states();
    let na = prod.num_actions();
    let mut preds: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nv];
    let mut alive = vec![0usize; nv];
    for v in 0..nv {
        for a in 0..na {
            if prod.is_available(v, a) {
                alive[v] += 1;
                for &(v2, _) in prod.successors(v, a) {
                    preds[v2].push((v, a));
                }
            }
        }
    }
    let mut sets = LosingSets::initial(prod);
    let mut queue: VecDeque<usize> = VecDeque::new();
    for v in 0..nv {
        if sets.states[v] {
            queue.push_back(v);
        } else if alive[v] == 0 {
            sets.states[v] = true;
            queue.push_back(v);
        }
    }
    while let Some(v2) = queue.pop_front() {
        for &(v, a) in &preds[v2] {
            let i = v * na + a;
            if sets.pairs[i] {
                continue;
            }
            sets.pairs[i] = true;
            alive[v] -= 1;
            if alive[v] == 0 && !sets.states[v] {
                sets.states[v] = true;
                queue.push_back(v);
            }
        }
    }
    sets
}

/// Computes `W₀` (pairs that leave `H̄` with probability 0 under some
/// continuation) and projects it onto `S × A`.
pub fn almost_sure_region(prod: &ProductMdp) -> WinningRegion {
    let sets = losing_sets(prod);
    WinningRegion::project(prod, sets.complement(prod))
}
