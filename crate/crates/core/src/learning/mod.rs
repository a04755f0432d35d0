//! Tabular R-learning with optional look-ahead shaping or shielding.

mod learner;
mod shield;
mod train;

pub use learner::{
    r_learning_update, recover_policy, select_action, shaped_update, shielded_update, Exploration, LearnerConfig,
    LearnerError, LearnerState, QTableFile, RateSchedule, RhoMode, Transition,
};
pub use shield::ShieldMask;
pub use train::{run_training, seeded_rngs, EnvRng, Environment, MdpEnv, RunResult, StepOutcome};
