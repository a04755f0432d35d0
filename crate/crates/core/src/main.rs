use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use avgshape::automata::{compile_invariant, load_dfa, InvariantFormula};
use avgshape::env::{EnvName, Task};
use avgshape::harness::{compare_methods, emit_plot, run_and_write, CurveTable, ExperimentConfig, Method};
use avgshape::learning::{run_training, LearnerConfig};
use avgshape::mdp::Mdp;
use avgshape::potential::{synthesize_potential, DistanceSpec};
use avgshape::product::build_product;
use avgshape::region::almost_sure_region;
use avgshape::solver::solve_average_reward;

#[derive(Parser)]
#[command(name = "avgshape", version, about = "Average-reward learning with advice-based shaping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an MDP file exactly and print its optimal gain and policy.
    Solve {
        #[arg(long)]
        mdp: PathBuf,
    },
    /// Synthesise a winning region and potential table.
    Synth {
        /// Use a built-in task's reference advice.
        #[arg(long, conflicts_with_all = ["mdp", "formula", "dfa"])]
        env: Option<String>,
        #[arg(long)]
        mdp: Option<PathBuf>,
        /// Invariant formula such as `G kitchen`.
        #[arg(long, conflicts_with = "dfa")]
        formula: Option<String>,
        #[arg(long)]
        dfa: Option<PathBuf>,
        /// `const:V`, `region[:scale[:bonus]]`, `target:LABEL[:scale[:bonus]]` or `custom:FILE`.
        #[arg(long, default_value = "const:0")]
        distance: String,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        /// Potential table output (JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one learner on a built-in task.
    Train {
        #[arg(long)]
        env: String,
        #[arg(long, default_value = "shaping")]
        method: String,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        window: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Learner settings (TOML with the `LearnerConfig` fields).
        #[arg(long)]
        learner: Option<PathBuf>,
        /// Save the learned table here.
        #[arg(long)]
        q_out: Option<PathBuf>,
    },
    /// Run a configured multi-seed experiment.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        raw: Option<PathBuf>,
        #[arg(long)]
        aggregate: Option<PathBuf>,
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Welch comparison of two methods at one step of a raw curve file.
    Compare {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        step: u64,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
    },
    /// Render a raw curve file as an SVG plot.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Solve { mdp } => {
            let mdp = Mdp::load(&mdp)?;
            let sol = solve_average_reward(&mdp)?;
            let policy: Vec<&str> = sol.policy.actions().iter().map(|&a| mdp.action_name(a)).collect();
            println!("{}", serde_json::json!({ "gain": sol.gain(), "policy": policy, "residual": sol.residual }));
        }
        Command::Synth { env, mdp, formula, dfa, distance, c, out } => {
            if let Some(name) = env {
                let task = Task::new(name.parse()?);
                let advice = task.advice()?;
                advice.potential.save(&out)?;
                println!(
                    "{}: |W| = {}, shield fallback states = {}",
                    task.name,
                    advice.region.len(),
                    advice.shield.fallback_states().len()
                );
                return Ok(());
            }
            let Some(mdp_path) = mdp else { bail!("either --env or --mdp is required") };
            let mdp = Mdp::load(&mdp_path)?;
            let aut = match (formula, dfa) {
                (Some(f), None) => compile_invariant(&InvariantFormula::parse(&f)?, mdp.ap())?,
                (None, Some(p)) => load_dfa(&p)?,
                _ => bail!("exactly one of --formula or --dfa is required"),
            };
            let prod = build_product(&mdp, &aut)?;
            let region = almost_sure_region(&prod);
            let phi = synthesize_potential(&mdp, &region, c, &DistanceSpec::parse(&distance)?)?;
            phi.save(&out)?;
            println!("|W| = {} over {} states", region.len(), region.states().len());
            for w in phi.warnings() {
                eprintln!("warning: {w:?}");
            }
        }
        Command::Train { env, method, steps, window, seed, learner, q_out } => {
            let name: EnvName = env.parse()?;
            let method: Method = method.parse()?;
            let preset = ExperimentConfig::preset(name);
            let mut config = match learner {
                Some(p) => toml::from_str::<LearnerConfig>(&std::fs::read_to_string(&p)?)
                    .with_context(|| format!("reading {}", p.display()))?,
                None => preset.learner.clone(),
            };
            config.seed = seed;
            let task = Task::new(name);
            let advice = if method == Method::Baseline { None } else { Some(task.advice()?) };
            let mut sim = task.instantiate(seed);
            let (phi, shield) = match method {
                Method::Shaping => (advice.as_ref().map(|a| &a.potential), None),
                Method::Shielding => (None, advice.as_ref().map(|a| &a.shield)),
                Method::Baseline => (None, None),
            };
            let window = window.unwrap_or(preset.window);
            let run = run_training(sim.as_mut(), &config, phi, shield, steps.unwrap_or(preset.total_steps), window)?;
            println!("step,window_avg_reward");
            for (i, v) in run.windows.iter().enumerate() {
                println!("{},{}", (i as u64 + 1) * window, v);
            }
            if let Some(p) = q_out {
                run.state.save(&p, method.as_str())?;
            }
        }
        Command::Experiment { config, raw, aggregate, plot } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            cfg.output.raw = raw.or(cfg.output.raw);
            cfg.output.aggregate = aggregate.or(cfg.output.aggregate);
            cfg.output.plot = plot.or(cfg.output.plot);
            let table = run_and_write(&cfg)?;
            let last = table.last_step().unwrap_or(0);
            for a in table.aggregate().iter().filter(|a| a.step == last) {
                println!("{} step {}: mean {:.4} sd {:.4}", a.method, a.step, a.mean, a.stddev);
            }
            println!("hash {}", cfg.content_hash());
        }
        Command::Compare { input, step, a, b } => {
            let table = CurveTable::read_raw(&input)?;
            let c = compare_methods(&table, step, a.parse()?, b.parse()?)?;
            println!(
                "{} - {} at step {}: {:.6} (95% CI [{:.6}, {:.6}], df {:.2})",
                a, b, step, c.diff, c.lower, c.upper, c.df
            );
        }
        Command::Plot { input, out } => {
            let table = CurveTable::read_raw(&input)?;
            emit_plot(&table, &out)?;
        }
    }
    Ok(())
}
