//! The training loop, greedy evaluation and run directories.

use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use super::metrics::{LossAccumulator, MetricsRow, MetricsWriter};
use crate::agent::AgentNet;
use crate::autodiff::ParamStore;
use crate::env::{make_env, EnvKind};
use crate::error::{usage, Result};
use crate::stats::{quartiles, Quartiles};
use crate::training::{rng_stream, run_episode, Learner, LossBreakdown, ReplayBuffer};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;

const ACTING_STREAM: u64 = 10;
const SAMPLING_STREAM: u64 = 11;
const ENV_SEED_STREAM: u64 = 12;
const EVAL_STREAM: u64 = 13;

pub const CONFIG_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub returns: Vec<f64>,
    pub quartiles: Quartiles,
    pub success_rate: Option<f64>,
}

/// Plays `episodes` greedy episodes. Environment seeds come from `seed`
/// alone, so every call with the same arguments sees the same episodes.
pub fn evaluate(
    env_kind: &EnvKind,
    agent: &AgentNet,
    store: &ParamStore,
    episodes: usize,
    seed: u64,
) -> Result<EvalSummary> {
    if episodes == 0 {
        return Err(usage("evaluation needs at least one episode"));
    }
    let mut env = make_env(env_kind)?;
    let mut rng = rng_stream(seed, EVAL_STREAM);
    let mut returns = Vec::with_capacity(episodes);
    let mut successes = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let env_seed = rng.next_u64();
        let ep = run_episode(env.as_mut(), agent, store, 0.0, env_seed, &mut rng)?;
        returns.push(ep.total_reward());
        successes.push(env.success());
    }
    let success_rate = successes
        .iter()
        .copied()
        .collect::<Option<Vec<bool>>>()
        .map(|s| s.iter().filter(|&&b| b).count() as f64 / s.len() as f64);
    Ok(EvalSummary {
        episodes,
        quartiles: quartiles(&returns)?,
        returns,
        success_rate,
    })
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub rows: Vec<MetricsRow>,
    pub learner: Learner,
}

impl RunOutcome {
    pub fn final_row(&self) -> &MetricsRow {
        self.rows.last().expect("every run records at least one row")
    }
}

/// Trains from scratch into `run_dir`: writes the config snapshot, appends a
/// metrics row at step 0, every `eval_every` env steps and at the end,
/// and saves the final checkpoint (plus periodic ones when
/// `checkpoint_every > 0`).
pub fn train(config: &RunConfig, run_dir: &Path) -> Result<RunOutcome> {
    config.validate()?;
    std::fs::create_dir_all(run_dir)?;
    std::fs::write(run_dir.join(CONFIG_FILE), config.to_toml_string())?;
    let env_kind = config.env_kind();
    let mut env = make_env(&env_kind)?;
    let spec = env.spec().clone();
    let mut learner = Learner::new(&spec, config.learner_config(), config.seed)?;
    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let mut acting = rng_stream(config.seed, ACTING_STREAM);
    let mut sampling = rng_stream(config.seed, SAMPLING_STREAM);
    let mut env_seeds = rng_stream(config.seed, ENV_SEED_STREAM);
    let schedule = config.epsilon_schedule();
    let mut metrics = MetricsWriter::create(&run_dir.join(METRICS_FILE))?;
    let started = Instant::now();
    let mut losses = LossAccumulator::default();
    let mut rows = Vec::new();
    let (mut env_steps, mut episodes) = (0u64, 0u64);
    let mut next_eval = 0u64;

    let mut record = |learner: &Learner, env_steps: u64, episodes: u64, loss: LossBreakdown| -> Result<()> {
        let eval = evaluate(&env_kind, &learner.agent, &learner.params, config.eval_episodes, config.seed)?;
        let row = MetricsRow {
            env_steps,
            episodes,
            train_steps: learner.train_steps,
            eval_return_median: eval.quartiles.median,
            eval_return_q25: eval.quartiles.q25,
            eval_return_q75: eval.quartiles.q75,
            win_or_success_rate: eval.success_rate,
            loss,
            epsilon: schedule.epsilon_at(env_steps),
            wall_clock: if config.log_wall_clock {
                started.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        metrics.append(&row)?;
        rows.push(row);
        Ok(())
    };

    while env_steps < config.total_env_steps {
        if env_steps >= next_eval {
            record(&learner, env_steps, episodes, losses.take())?;
            next_eval = (env_steps / config.eval_every + 1) * config.eval_every;
        }
        let epsilon = schedule.epsilon_at(env_steps);
        let env_seed = env_seeds.random::<u64>();
        let ep = run_episode(env.as_mut(), &learner.agent, &learner.params, epsilon, env_seed, &mut acting)?;
        env_steps += ep.len() as u64;
        episodes += 1;
        buffer.push(ep);
        if buffer.len() >= config.batch_size {
            for _ in 0..config.train_ratio {
                if let Some(l) = learner.train_step(&buffer, config.batch_size, &mut sampling)? {
                    losses.add(&l);
                }
            }
        }
        learner.sync_target(episodes);
        if config.checkpoint_every > 0 && episodes % config.checkpoint_every == 0 {
            let dir = run_dir.join("checkpoints");
            std::fs::create_dir_all(&dir)?;
            Checkpoint::capture(config, &learner, env_steps, episodes)
                .save(&dir.join(format!("episode_{episodes:07}.json")))?;
        }
    }
    record(&learner, env_steps, episodes, losses.take())?;
    Checkpoint::capture(config, &learner, env_steps, episodes).save(&run_dir.join(CHECKPOINT_FILE))?;
    Ok(RunOutcome {
        run_dir: run_dir.to_path_buf(),
        rows,
        learner,
    })
}

/// Greedy evaluation of a saved checkpoint.
pub fn evaluate_checkpoint(path: &Path, episodes: usize, seed: u64) -> Result<EvalSummary> {
    if episodes == 0 {
        return Err(usage("evaluation needs at least one episode"));
    }
    let ck = Checkpoint::load(path)?;
    let learner = ck.learner()?;
    evaluate(&ck.config.env_kind(), &learner.agent, &learner.params, episodes, seed)
}
