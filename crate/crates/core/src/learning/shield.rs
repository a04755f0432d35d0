use crate::region::WinningRegion;

/// Actions a shielded learner may take.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShieldMask {
    num_actions: usize,
    allowed: Vec<bool>,
    fallback_states: Vec<usize>,
}

impl ShieldMask {
    /// Allows `(s,a)` if it is available and either in `W` or admitted by
    /// `relax`. States left with no allowed action fall back to all of their
    /// available actions.
    pub fn from_region(
        region: &WinningRegion,
        available: &[bool],
        relax: Option<&dyn Fn(usize, usize) -> bool>,
    ) -> Self {
        let na = region.num_actions();
        let allowed: Vec<bool> = (0..available.len())
            .map(|i| available[i] && (region.members()[i] || relax.is_some_and(|f| f(i / na, i % na))))
            .collect();
        Self::from_allowed(na, allowed, available)
    }

    pub fn from_allowed(num_actions: usize, mut allowed: Vec<bool>, available: &[bool]) -> Self {
        assert_eq!(allowed.len(), available.len());
        let mut fallback_states = Vec::new();
        for s in 0..allowed.len() / num_actions.max(1) {
            let row = s * num_actions..(s + 1) * num_actions;
            if !allowed[row.clone()].iter().any(|&b| b) {
                fallback_states.push(s);
                allowed[row.clone()].copy_from_slice(&available[row]);
            }
        }
        if !fallback_states.is_empty() {
            log::warn!("shield allows nothing at {} states; all actions allowed there", fallback_states.len());
        }
        Self { num_actions, allowed, fallback_states }
    }

    pub fn allows(&self, s: usize, a: usize) -> bool {
        self.allowed[s * self.num_actions + a]
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_states(&self) -> usize {
        self.allowed.len() / self.num_actions.max(1)
    }

    /// States where the mask fell back to every available action.
    pub fn fallback_states(&self) -> &[usize] {
        &self.fallback_states
    }

    pub fn is_fallback(&self, s: usize) -> bool {
        self.fallback_states.binary_search(&s).is_ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_state_falls_back() {
        let w = WinningRegion::from_members(2, 2, vec![true, false, false, false]);
        let m = ShieldMask::from_region(&w, &[true, true, true, false], None);
        assert!(m.allows(0, 0) && !m.allows(0, 1));
        assert!(m.allows(1, 0) && !m.allows(1, 1));
        assert_eq!(m.fallback_states(), &[1]);
    }

    #[test]
    fn relaxation_adds_actions() {
        let w = WinningRegion::from_members(1, 3, vec![true, false, false]);
        let relax = |_s: usize, a: usize| a == 2;
        let m = ShieldMask::from_region(&w, &[true; 3], Some(&relax));
        assert!(m.allows(0, 0) && !m.allows(0, 1) && m.allows(0, 2));
    }
}
