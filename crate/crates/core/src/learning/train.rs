use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::labels::Letter;
use crate::learning::learner::{
    r_learning_update, select_action, shaped_update, shielded_update, LearnerConfig, LearnerError, LearnerState,
    Transition,
};
use crate::learning::shield::ShieldMask;
use crate::mdp::Mdp;
use crate::potential::PotentialTable;
use crate::solver::sample_successor;

pub type EnvRng = ChaCha8Rng;

/// Result of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// Tabular observation of the successor.
    pub next: usize,
    pub reward: f64,
    pub label: Letter,
}

/// A continuing task observed through a finite state index.
pub trait Environment {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    /// Row-major `S × A` availability mask.
    fn availability(&self) -> Vec<bool>;
    /// Starts the run and returns the first observation.
    fn reset(&mut self, rng: &mut EnvRng) -> usize;
    fn step(&mut self, action: usize, rng: &mut EnvRng) -> StepOutcome;
}

/// Simulates a tabular MDP.
#[derive(Debug, Clone)]
pub struct MdpEnv<'a> {
    mdp: &'a Mdp,
    state: usize,
}

impl<'a> MdpEnv<'a> {
    pub fn new(mdp: &'a Mdp) -> Self {
        Self { mdp, state: mdp.initial_state() }
    }
}

impl Environment for MdpEnv<'_> {
    fn num_states(&self) -> usize {
        self.mdp.num_states()
    }

    fn num_actions(&self) -> usize {
        self.mdp.num_actions()
    }

    fn availability(&self) -> Vec<bool> {
        self.mdp.availability().to_vec()
    }

    fn reset(&mut self, _rng: &mut EnvRng) -> usize {
        self.state = self.mdp.initial_state();
        self.state
    }

    fn step(&mut self, action: usize, rng: &mut EnvRng) -> StepOutcome {
        let (next, reward) = sample_successor(self.mdp, self.state, action, rng);
        self.state = next;
        StepOutcome { next, reward, label: self.mdp.label(next) }
    }
}

/// Environment and agent generators for a seed: the same key on streams 0
/// and 1.
pub fn seeded_rngs(seed: u64) -> (EnvRng, EnvRng) {
    let mut env = ChaCha8Rng::seed_from_u64(seed);
    env.set_stream(0);
    let mut agent = ChaCha8Rng::seed_from_u64(seed);
    agent.set_stream(1);
    (env, agent)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    /// Mean raw environment reward of each full window.
    pub windows: Vec<f64>,
    pub state: LearnerState,
    /// Steps taken in states where the shield fell back to all actions.
    pub shield_fallback_steps: u64,
    /// Running hash over every transition and every updated table entry.
    pub digest: u64,
}

const FNV_PRIME: u64 = 0x100000001b3;

fn fold(h: u64, x: u64) -> u64 {
    (h ^ x).wrapping_mul(FNV_PRIME)
}

/// Runs the interaction loop for `total_steps`. The learner is shaped when a
/// potential is given and shielded when a mask is given.
pub fn run_training(
    env: &mut dyn Environment,
    config: &LearnerConfig,
    potential: Option<&PotentialTable>,
    shield: Option<&ShieldMask>,
    total_steps: u64,
    window: u64,
) -> Result<RunResult, LearnerError> {
    config.validate()?;
    if window == 0 || total_steps < window {
        return Err(LearnerError::InvalidConfig("need total_steps >= window >= 1".into()));
    }
    let (ns, na) = (env.num_states(), env.num_actions());
    if potential.is_some_and(|p| p.num_states() != ns || p.num_actions() != na) {
        return Err(LearnerError::InvalidConfig("potential table shape does not match the environment".into()));
    }
    if shield.is_some_and(|m| m.num_states() != ns || m.num_actions() != na) {
        return Err(LearnerError::InvalidConfig("shield shape does not match the environment".into()));
    }
    let (mut env_rng, mut agent_rng) = seeded_rngs(config.seed);
    let mut state = LearnerState::new(ns, na, env.availability(), config.rho_mode);
    let mut s = env.reset(&mut env_rng);
    let mut windows = Vec::with_capacity((total_steps / window) as usize);
    let mut acc = 0.0;
    let mut fallback = 0;
    let mut digest: u64 = 0xcbf29ce484222325;
    for t in 0..total_steps {
        let param = config.exploration.value_at(t, total_steps);
        let a = select_action(&state, s, &config.exploration, param, potential, shield, &mut agent_rng);
        if shield.is_some_and(|m| m.is_fallback(s)) {
            fallback += 1;
        }
        let out = env.step(a, &mut env_rng);
        let tr = Transition { s, a, r: out.reward, next: out.next };
        match (potential, shield) {
            (Some(p), _) => shaped_update(&mut state, &tr, p, config),
            (None, Some(m)) => shielded_update(&mut state, &tr, m, config),
            (None, None) => r_learning_update(&mut state, &tr, config),
        }
        .map_err(|e| match e {
            LearnerError::NonFinite { state, action, .. } => LearnerError::NonFinite { step: t, state, action },
            other => other,
        })?;
        digest = fold(fold(fold(digest, (s * na + a) as u64), out.reward.to_bits()), state.q.get(s, a).to_bits());
        digest = fold(digest, state.rho_at(s).to_bits());
        acc += out.reward;
        if (t + 1) % window == 0 {
            windows.push(acc / window as f64);
            acc = 0.0;
        }
        s = out.next;
    }
    Ok(RunResult { windows, state, shield_fallback_steps: fallback, digest })
}
