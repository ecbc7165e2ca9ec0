//! Stored trajectories and the line-delimited episode file.
//!
//! File layout: a header line `{"format": "mbvd-episode-v1", "spec": …,
//! "seed": …}` followed by one JSON record per step. Record 0 is the reset
//! observation (empty `actions`, zero reward); record `t ≥ 1` carries the joint
//! action taken at `t−1` together with the reward, `done` flag and the
//! observations, state and masks it produced.

use crate::env::{EnvSpec, StepResult};
use crate::error::{usage, Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

pub const EPISODE_FORMAT: &str = "mbvd-episode-v1";

/// One trajectory of `len()` transitions: `len()+1` observations, states and
/// masks, `len()` joint actions and rewards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub obs: Vec<Vec<Vec<f64>>>,
    pub states: Vec<Vec<f64>>,
    pub avail: Vec<Vec<Vec<bool>>>,
    pub actions: Vec<Vec<usize>>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
}

impl EpisodeRecord {
    pub fn start(seed: u64, first: StepResult) -> Self {
        Self {
            seed,
            obs: vec![first.obs],
            states: vec![first.state],
            avail: vec![first.avail_actions],
            actions: Vec::new(),
            rewards: Vec::new(),
            dones: Vec::new(),
        }
    }

    pub fn push(&mut self, joint_action: Vec<usize>, result: StepResult) {
        self.actions.push(joint_action);
        self.rewards.push(result.reward);
        self.dones.push(result.done);
        self.obs.push(result.obs);
        self.states.push(result.state);
        self.avail.push(result.avail_actions);
    }

    /// Number of transitions.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    /// Whether the final step ended through a terminal condition.
    pub fn terminated(&self) -> bool {
        self.dones.last().copied().unwrap_or(false)
    }

    /// Checks shapes, action feasibility and the single-terminal-step rule.
    pub fn validate(&self, spec: &EnvSpec) -> Result<()> {
        let t = self.len();
        if t == 0 || t > spec.episode_limit {
            return Err(usage(format!("episode length {t} outside 1..={}", spec.episode_limit)));
        }
        if self.obs.len() != t + 1
            || self.states.len() != t + 1
            || self.avail.len() != t + 1
            || self.rewards.len() != t
            || self.dones.len() != t
        {
            return Err(usage("episode sequences have inconsistent lengths"));
        }
        if self.dones.iter().filter(|&&d| d).count() != 1 || !self.terminated() {
            return Err(usage("episode must have exactly one terminal step, at the end"));
        }
        for step in 0..=t {
            if self.obs[step].len() != spec.n_agents
                || self.obs[step].iter().any(|o| o.len() != spec.obs_dim)
                || self.states[step].len() != spec.state_dim
                || self.avail[step].len() != spec.n_agents
            {
                return Err(usage(format!("step {step} has the wrong shape")));
            }
            if self.avail[step].iter().any(|row| row.len() != spec.n_actions || !row.iter().any(|&b| b)) {
                return Err(usage(format!("step {step} has an empty or malformed mask")));
            }
        }
        for (step, joint) in self.actions.iter().enumerate() {
            if joint.len() != spec.n_agents {
                return Err(usage(format!("step {step} has the wrong number of actions")));
            }
            for (agent, &a) in joint.iter().enumerate() {
                if a >= spec.n_actions || !self.avail[step][agent][a] {
                    return Err(usage(format!("agent {agent} took masked action {a} at step {step}")));
                }
            }
        }
        if self.rewards.iter().any(|r| !r.is_finite()) {
            return Err(usage("non-finite reward"));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    spec: EnvSpec,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct StepLine {
    t: usize,
    obs: Vec<Vec<f64>>,
    state: Vec<f64>,
    actions: Vec<usize>,
    reward: f64,
    avail: Vec<Vec<bool>>,
    done: bool,
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Load(e.to_string())
}

pub fn write_episode(mut out: impl Write, spec: &EnvSpec, ep: &EpisodeRecord) -> Result<()> {
    let header = Header {
        format: EPISODE_FORMAT.into(),
        spec: spec.clone(),
        seed: ep.seed,
    };
    writeln!(out, "{}", serde_json::to_string(&header).map_err(json_err)?)?;
    for t in 0..=ep.len() {
        let line = StepLine {
            t,
            obs: ep.obs[t].clone(),
            state: ep.states[t].clone(),
            actions: if t == 0 { Vec::new() } else { ep.actions[t - 1].clone() },
            reward: if t == 0 { 0.0 } else { ep.rewards[t - 1] },
            avail: ep.avail[t].clone(),
            done: t > 0 && ep.dones[t - 1],
        };
        writeln!(out, "{}", serde_json::to_string(&line).map_err(json_err)?)?;
    }
    Ok(())
}

pub fn read_episode(input: impl BufRead) -> Result<(EnvSpec, EpisodeRecord)> {
    let mut lines = input.lines();
    let header: Header = match lines.next() {
        Some(l) => serde_json::from_str(&l?).map_err(json_err)?,
        None => return Err(Error::Load("empty episode file".into())),
    };
    if header.format != EPISODE_FORMAT {
        return Err(Error::Load(format!("unknown episode format {}", header.format)));
    }
    let mut ep: Option<EpisodeRecord> = None;
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: StepLine = serde_json::from_str(&line).map_err(json_err)?;
        if s.t != i {
            return Err(Error::Load(format!("expected step {i}, found {}", s.t)));
        }
        let result = StepResult {
            obs: s.obs,
            state: s.state,
            reward: s.reward,
            done: s.done,
            avail_actions: s.avail,
        };
        match ep.as_mut() {
            None => ep = Some(EpisodeRecord::start(header.seed, result)),
            Some(e) => e.push(s.actions, result),
        }
    }
    let ep = ep.ok_or_else(|| Error::Load("episode file has no steps".into()))?;
    ep.validate(&header.spec).map_err(|e| Error::Load(e.to_string()))?;
    Ok((header.spec, ep))
}
