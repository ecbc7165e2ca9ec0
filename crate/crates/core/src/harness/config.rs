//! Flat run configuration. Every key has a default; unknown keys are
//! rejected with the list of valid ones.

use crate::agent::EpsilonSchedule;
use crate::env::{EnvKind, PredatorPreyParams};
use crate::error::{usage, Error, Result};
pub use crate::training::Algo;
use crate::training::LearnerConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvName {
    Matrix,
    PredatorPrey,
    Tabular,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvName,
    // matrix game
    pub payoff: Vec<Vec<f64>>,
    pub rounds: usize,
    // predator-prey
    pub grid: usize,
    pub n_agents: usize,
    pub n_prey: usize,
    pub sight: usize,
    pub episode_limit: usize,
    pub capture_bonus: f64,
    pub shaping: f64,
    pub capture_needed: usize,
    pub prey_move_prob: f64,

    pub algo: Algo,
    pub k: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub lr: f64,
    pub rms_smoothing: f64,
    pub rms_eps: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub target_update_episodes: u64,
    pub grad_clip: f64,
    pub epsilon_start: f64,
    pub epsilon_finish: f64,
    pub anneal_steps: u64,
    pub hidden_dim: usize,
    pub per_agent_latent: usize,
    pub body_width: usize,
    pub aggregator_hidden: usize,
    pub rollout_features: bool,

    pub seed: u64,
    pub total_env_steps: u64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    /// Gradient steps per collected episode.
    pub train_ratio: usize,
    /// Episodes between checkpoints; 0 writes only the final one.
    pub checkpoint_every: u64,
    /// Record elapsed seconds in metrics rows (otherwise 0, keeping files
    /// byte-identical across reruns).
    pub log_wall_clock: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let pp = PredatorPreyParams::default();
        let lc = LearnerConfig::default();
        let eps = EpsilonSchedule::default();
        Self {
            env: EnvName::PredatorPrey,
            payoff: vec![vec![10.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 5.0]],
            rounds: 1,
            grid: pp.grid,
            n_agents: pp.n_agents,
            n_prey: pp.n_prey,
            sight: pp.sight,
            episode_limit: pp.episode_limit,
            capture_bonus: pp.capture_bonus,
            shaping: pp.shaping,
            capture_needed: pp.capture_needed,
            prey_move_prob: pp.prey_move_prob,
            algo: lc.algo,
            k: lc.k,
            alpha: lc.alpha,
            gamma: lc.gamma,
            lr: lc.lr,
            rms_smoothing: lc.rms_smoothing,
            rms_eps: lc.rms_eps,
            batch_size: 32,
            buffer_capacity: 5000,
            target_update_episodes: lc.target_update_episodes,
            grad_clip: lc.grad_clip,
            epsilon_start: eps.start,
            epsilon_finish: eps.finish,
            anneal_steps: eps.anneal_steps,
            hidden_dim: lc.hidden_dim,
            per_agent_latent: lc.per_agent_latent,
            body_width: lc.body_width,
            aggregator_hidden: lc.aggregator_hidden,
            rollout_features: lc.rollout_features,
            seed: 0,
            total_env_steps: 200_000,
            eval_every: 10_000,
            eval_episodes: 32,
            train_ratio: 1,
            checkpoint_every: 0,
            log_wall_clock: false,
        }
    }
}

impl RunConfig {
    /// Every accepted key, in declaration order.
    pub fn valid_keys() -> Vec<String> {
        match serde_json::to_value(RunConfig::default()).expect("config serializes") {
            serde_json::Value::Object(map) => map.keys().cloned().collect(),
            _ => unreachable!("config is a struct"),
        }
    }

    fn check_keys(table: &toml::Table) -> Result<()> {
        let valid = Self::valid_keys();
        for key in table.keys() {
            if !valid.iter().any(|k| k == key) {
                return Err(usage(format!(
                    "unknown config key {key:?}; valid keys are: {}",
                    valid.join(", ")
                )));
            }
        }
        Ok(())
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        Self::check_keys(&table)?;
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Self::from_table(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies `key=value` overrides. Values are read as TOML literals, and
    /// as plain strings when that fails (so `algo=qmix` works unquoted).
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[(S, S)]) -> Result<Self> {
        let mut table = toml::Table::try_from(self).expect("config serializes");
        for (key, value) in overrides {
            let (key, value) = (key.as_ref(), value.as_ref());
            let parsed = format!("v = {value}")
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(value.to_string()));
            table.insert(key.to_string(), parsed);
        }
        Self::from_table(table)
    }

    pub fn env_kind(&self) -> EnvKind {
        match self.env {
            EnvName::Matrix => EnvKind::Matrix {
                payoff: self.payoff.clone(),
                rounds: self.rounds,
            },
            EnvName::PredatorPrey => EnvKind::PredatorPrey(PredatorPreyParams {
                grid: self.grid,
                n_agents: self.n_agents,
                n_prey: self.n_prey,
                sight: self.sight,
                episode_limit: self.episode_limit,
                capture_bonus: self.capture_bonus,
                shaping: self.shaping,
                capture_needed: self.capture_needed,
                prey_move_prob: self.prey_move_prob,
            }),
            EnvName::Tabular => EnvKind::Tabular,
        }
    }

    pub fn learner_config(&self) -> LearnerConfig {
        LearnerConfig {
            algo: self.algo,
            k: self.k,
            alpha: self.alpha,
            gamma: self.gamma,
            lr: self.lr,
            rms_smoothing: self.rms_smoothing,
            rms_eps: self.rms_eps,
            grad_clip: self.grad_clip,
            hidden_dim: self.hidden_dim,
            per_agent_latent: self.per_agent_latent,
            body_width: self.body_width,
            aggregator_hidden: self.aggregator_hidden,
            target_update_episodes: self.target_update_episodes,
            rollout_features: self.rollout_features,
        }
    }

    pub fn epsilon_schedule(&self) -> EpsilonSchedule {
        EpsilonSchedule {
            start: self.epsilon_start,
            finish: self.epsilon_finish,
            anneal_steps: self.anneal_steps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.learner_config().validate()?;
        crate::env::make_env(&self.env_kind())?;
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return Err(usage("batch_size must be positive and no larger than buffer_capacity"));
        }
        if self.eval_episodes == 0 || self.eval_every == 0 {
            return Err(usage("eval_episodes and eval_every must be positive"));
        }
        for eps in [self.epsilon_start, self.epsilon_finish] {
            if !(0.0..=1.0).contains(&eps) {
                return Err(usage("epsilon values must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_hyperparameter_table() {
        let c = RunConfig::default();
        assert_eq!(c.lr, 5e-4);
        assert_eq!(c.gamma, 0.99);
        assert_eq!(c.batch_size, 32);
        assert_eq!(c.buffer_capacity, 5000);
        assert_eq!(c.target_update_episodes, 200);
        assert_eq!(c.grad_clip, 10.0);
        assert_eq!(c.k, 3);
        assert_eq!(c.alpha, 0.3);
        assert_eq!((c.epsilon_start, c.epsilon_finish), (1.0, 0.05));
        assert_eq!(c.per_agent_latent, 8);
        assert_eq!((c.rms_smoothing, c.rms_eps), (0.99, 1e-5));
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_list_valid_ones() {
        let err = RunConfig::from_toml_str("learning_rate = 0.1").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Usage(_)));
        assert!(msg.contains("learning_rate") && msg.contains("lr") && msg.contains("per_agent_latent"));
    }

    #[test]
    fn toml_round_trip_and_overrides() {
        let c = RunConfig::from_toml_str("env = \"matrix\"\nalgo = \"qmix-rs\"\nk = 5\n").unwrap();
        assert_eq!((c.env, c.algo, c.k), (EnvName::Matrix, Algo::QmixRs, 5));
        assert_eq!(RunConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
        let o = c.with_overrides(&[("algo", "vdn"), ("seed", "9"), ("lr", "0.001")]).unwrap();
        assert_eq!((o.algo, o.seed, o.lr), (Algo::Vdn, 9, 0.001));
        assert!(c.with_overrides(&[("algo", "mbvd"), ("k", "0")]).is_err());
        assert!(c.with_overrides(&[("algo", "maven")]).is_err());
        assert!(c.with_overrides(&[("nope", "1")]).is_err());
    }
}
