//! Multi-seed experiments: configuration, execution, curve tables,
//! statistics and plots.

mod plot;
mod stats;
mod table;

pub use plot::{emit_plot, render_svg, PlotSeries};
pub use stats::{compare_methods, welch, Comparison};
pub use table::{read_aggregate_csv, AggregateRow, CurveRow, CurveTable, Manifest};

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::env::{EnvError, EnvName, Task};
use crate::learning::{run_training, LearnerConfig, LearnerError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("{method} seed {seed}: {source}")]
    Run { method: Method, seed: u64, source: LearnerError },
    #[error("method `{0}` has no rows at step {1}")]
    MissingMethod(String, u64),
    #[error("need at least 2 seeds per method, `{method}` has {count}")]
    InsufficientSeeds { method: String, count: usize },
    #[error("curve table is empty")]
    EmptyTable,
    #[error("malformed curve table: {0}")]
    Parse(String),
    #[error("{0}")]
    Io(String),
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Shaping,
    Shielding,
    Baseline,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Shaping, Method::Shielding, Method::Baseline];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Shaping => "shaping",
            Method::Shielding => "shielding",
            Method::Baseline => "baseline",
        }
    }

    /// Name shown in plot legends.
    pub fn legend(self) -> &'static str {
        match self {
            Method::Shaping => "Shaping",
            Method::Shielding => "Shielding",
            Method::Baseline => "Baseline",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, HarnessError> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| HarnessError::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdviceVariant {
    #[default]
    Accurate,
    Inaccurate,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    /// Raw rows `method,seed,step,window_avg_reward`.
    pub raw: Option<PathBuf>,
    /// Aggregate rows `method,step,mean,stddev`.
    pub aggregate: Option<PathBuf>,
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvName,
    pub methods: Vec<Method>,
    pub total_steps: u64,
    pub window: u64,
    pub seeds: u64,
    /// Runs use seeds `seed_offset .. seed_offset + seeds`.
    #[serde(default)]
    pub seed_offset: u64,
    #[serde(default)]
    pub learner: LearnerConfig,
    #[serde(default)]
    pub advice: AdviceVariant,
    /// Added to every potential value before shaping.
    #[serde(default)]
    pub potential_shift: f64,
    /// Trash-prone kitchen cells in the sweeping tasks (whole kitchen if unset).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kitchen_cells: Option<usize>,
    #[serde(default)]
    pub output: OutputPaths,
}

impl ExperimentConfig {
    /// Desk-scale defaults for `env`.
    pub fn preset(env: EnvName) -> Self {
        let (total_steps, window, seeds) = match env {
            EnvName::Gridworld | EnvName::GridworldWall => (10_000, 100, 20),
            EnvName::SweepKitchen | EnvName::SweepKitchenExtra => (10_000, 500, 20),
            EnvName::SweepHuman => (10_000, 2_500, 20),
            EnvName::SweepHumanExtra => (10_000, 1_000, 20),
            EnvName::CartPole | EnvName::CartPoleInaccurate => (200_000, 1_000, 10),
        };
        Self {
            env,
            methods: Method::ALL.to_vec(),
            total_steps,
            window,
            seeds,
            seed_offset: 0,
            learner: LearnerConfig::default(),
            advice: AdviceVariant::Accurate,
            potential_shift: 0.0,
            kitchen_cells: None,
            output: OutputPaths::default(),
        }
    }

    /// The preset with 100 seeds per method.
    pub fn full_scale(env: EnvName) -> Self {
        Self { seeds: 100, ..Self::preset(env) }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let c: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_json_str(text: &str) -> Result<Self, HarnessError> {
        let c: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Reads a `.json` file as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.into()));
        if self.methods.is_empty() {
            return bad("methods must not be empty");
        }
        if self.seeds == 0 {
            return bad("seeds must be at least 1");
        }
        if self.window == 0 || self.total_steps == 0 || !self.total_steps.is_multiple_of(self.window) {
            return bad("window must be positive and divide total_steps");
        }
        if !self.potential_shift.is_finite() {
            return bad("potential_shift must be finite");
        }
        self.learner.validate().map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Task actually run once the advice variant is applied.
    pub fn resolved_env(&self) -> EnvName {
        match self.advice {
            AdviceVariant::Accurate => self.env,
            AdviceVariant::Inaccurate => self.env.inaccurate(),
        }
    }

    /// Canonical JSON of the resolved config. Output paths are left out since
    /// they do not affect results.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.output = OutputPaths::default();
        c.env = self.resolved_env();
        c.advice = if c.env.inaccurate() == c.env { AdviceVariant::Inaccurate } else { AdviceVariant::Accurate };
        serde_json::to_string(&c).expect("config serialization cannot fail")
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn manifest(&self) -> Manifest {
        Manifest { config: self.canonical_json(), hash: self.content_hash() }
    }

    pub fn task(&self) -> Task {
        let mut task = Task::new(self.resolved_env());
        task.sweep.kitchen_cells = self.kitchen_cells;
        task
    }
}

/// Runs every method × seed cell in parallel and collects the windowed raw
/// rewards. Deterministic given the config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<CurveTable, HarnessError> {
    config.validate()?;
    let task = config.task();
    let needs_advice = config.methods.iter().any(|&m| m != Method::Baseline);
    let advice = if needs_advice { Some(task.advice()?) } else { None };
    let potential = advice.as_ref().map(|a| {
        if config.potential_shift == 0.0 {
            a.potential.clone()
        } else {
            a.potential.shifted(config.potential_shift)
        }
    });
    let mut methods = config.methods.clone();
    methods.sort();
    methods.dedup();
    let jobs: Vec<(Method, u64)> = methods
        .iter()
        .flat_map(|&m| (0..config.seeds).map(move |i| (m, config.seed_offset + i)))
        .collect();
    let results: Vec<Result<Vec<CurveRow>, HarnessError>> = jobs
        .par_iter()
        .map(|&(method, seed)| {
            let mut env = task.instantiate(seed);
            let learner = LearnerConfig { seed, ..config.learner.clone() };
            let (phi, shield) = match method {
                Method::Shaping => (potential.as_ref(), None),
                Method::Shielding => (None, advice.as_ref().map(|a| &a.shield)),
                Method::Baseline => (None, None),
            };
            let run = run_training(env.as_mut(), &learner, phi, shield, config.total_steps, config.window)
                .map_err(|source| HarnessError::Run { method, seed, source })?;
            Ok(run
                .windows
                .iter()
                .enumerate()
                .map(|(i, &value)| CurveRow { method, seed, step: (i as u64 + 1) * config.window, value })
                .collect())
        })
        .collect();
    let mut rows = Vec::with_capacity(jobs.len() * (config.total_steps / config.window) as usize);
    for r in results {
        rows.extend(r?);
    }
    Ok(CurveTable::new(rows).with_manifest(config.manifest()))
}

/// Runs the experiment and writes whichever outputs the config names.
pub fn run_and_write(config: &ExperimentConfig) -> Result<CurveTable, HarnessError> {
    let table = run_experiment(config)?;
    if let Some(p) = &config.output.raw {
        table.write_raw(p)?;
    }
    if let Some(p) = &config.output.aggregate {
        table.write_aggregate(p)?;
    }
    if let Some(p) = &config.output.plot {
        emit_plot(&table, p)?;
    }
    Ok(table)
}
