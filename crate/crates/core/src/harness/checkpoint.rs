//! Self-describing JSON checkpoints: config snapshot, named parameter
//! arrays (live and target), optimizer state, counters and random streams.

use super::config::RunConfig;
use crate::autodiff::ParamStore;
use crate::env::make_env;
use crate::error::{Error, Result};
use crate::optim::RmsProp;
use crate::training::Learner;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

pub const CHECKPOINT_FORMAT: &str = "mbvd-checkpoint-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub env_steps: u64,
    pub episodes: u64,
    pub train_steps: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: RunConfig,
    pub counters: Counters,
    pub params: ParamStore,
    pub target: ParamStore,
    pub optimizer: RmsProp,
    pub noise_rng: ChaCha8Rng,
}

impl Checkpoint {
    pub fn capture(config: &RunConfig, learner: &Learner, env_steps: u64, episodes: u64) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            config: config.clone(),
            counters: Counters {
                env_steps,
                episodes,
                train_steps: learner.train_steps,
            },
            params: learner.params.clone(),
            target: learner.target.clone(),
            optimizer: learner.optim.clone(),
            noise_rng: learner.noise_rng().clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(&mut out, self).map_err(|e| Error::Load(e.to_string()))?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Load(format!("cannot open checkpoint {}: {e}", path.display())))?;
        let ck: Checkpoint = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::Load(format!("corrupt checkpoint {}: {e}", path.display())))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Load(format!(
                "unsupported checkpoint format {:?}, expected {CHECKPOINT_FORMAT}",
                ck.format
            )));
        }
        ck.config.validate()?;
        Ok(ck)
    }

    /// Rebuilds the learner from the config snapshot and restores the saved
    /// state into it.
    pub fn learner(&self) -> Result<Learner> {
        let env = make_env(&self.config.env_kind())?;
        let mut learner = Learner::new(env.spec(), self.config.learner_config(), self.config.seed)?;
        learner.restore(
            self.params.clone(),
            self.target.clone(),
            self.optimizer.clone(),
            self.counters.train_steps,
            self.noise_rng.clone(),
        )?;
        Ok(learner)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::EnvName;
    use crate::training::Algo;

    fn config() -> RunConfig {
        RunConfig {
            env: EnvName::Matrix,
            algo: Algo::Mbvd,
            hidden_dim: 8,
            body_width: 8,
            per_agent_latent: 2,
            ..RunConfig::default()
        }
    }

    #[test]
    fn round_trip_restores_a_bit_identical_learner() {
        let cfg = config();
        let env = make_env(&cfg.env_kind()).unwrap();
        let mut learner = Learner::new(env.spec(), cfg.learner_config(), 3).unwrap();
        learner.params.get_mut(crate::autodiff::ParamId(0))[[0, 0]] = 0.123456789;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        let ck = Checkpoint::capture(&cfg, &learner, 7, 2);
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        let restored = back.learner().unwrap();
        assert_eq!(restored.params, learner.params);
        assert_eq!(restored.target, learner.target);
        assert_eq!(restored.optim, learner.optim);
    }

    #[test]
    fn missing_corrupt_or_mismatched_checkpoints_fail_to_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        assert!(matches!(Checkpoint::load(&path), Err(Error::Load(_))));
        std::fs::write(&path, "{\"format\": 1").unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Load(_))));

        let cfg = config();
        let env = make_env(&cfg.env_kind()).unwrap();
        let learner = Learner::new(env.spec(), cfg.learner_config(), 3).unwrap();
        let mut ck = Checkpoint::capture(&cfg, &learner, 0, 0);
        ck.format = "other".into();
        ck.save(&path).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Load(_))));
        ck.format = CHECKPOINT_FORMAT.into();
        ck.config.hidden_dim = 16;
        assert!(matches!(ck.learner(), Err(Error::Load(_))));
    }
}
