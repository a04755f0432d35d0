//! Average-reward reinforcement learning with potential-based shaping
//! synthesized from safety advice.

pub mod automata;
pub mod labels;
pub mod mdp;
pub mod numfmt;
pub mod solver;
pub mod potential;
pub mod product;
pub mod region;
pub mod learning;
pub mod env;
pub mod harness;
