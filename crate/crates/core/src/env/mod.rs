//! Dec-POMDP environments: a shared interface, three built-in tasks, the
//! continuous-action discretizer and an exhaustive value oracle for tabular
//! instances.

mod discretize;
mod matrix;
mod oracle;
mod predator_prey;
mod tabular;

pub use discretize::discretize_action_space;
pub use matrix::MatrixGame;
pub use oracle::{brute_force_optimal_return, ORACLE_MAX_PAIRS};
pub use predator_prey::{PredatorPrey, PredatorPreyParams};
pub use tabular::TabularDecPomdp;

use crate::error::Result;
use serde::{Deserialize, Serialize};

/// Static description of an environment's shapes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub n_agents: usize,
    pub n_actions: usize,
    pub obs_dim: usize,
    pub state_dim: usize,
    pub episode_limit: usize,
    pub has_action_mask: bool,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_agents", self.n_agents),
            ("n_actions", self.n_actions),
            ("obs_dim", self.obs_dim),
            ("state_dim", self.state_dim),
            ("episode_limit", self.episode_limit),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(crate::error::usage(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    /// Number of joint actions, saturating on overflow.
    pub fn joint_actions(&self) -> usize {
        (0..self.n_agents).fold(1usize, |acc, _| acc.saturating_mul(self.n_actions))
    }
}

/// What every `reset` and `step` returns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub obs: Vec<Vec<f64>>,
    pub state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub avail_actions: Vec<Vec<bool>>,
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Deterministic initial configuration for `seed`.
    fn reset(&mut self, seed: u64) -> StepResult;

    /// Advances one step. Fails when the episode is already over or when an
    /// action is masked out.
    fn step(&mut self, joint_action: &[usize]) -> Result<StepResult>;

    /// Whether the finished episode counts as solved, for environments that
    /// have such a notion.
    fn success(&self) -> Option<bool> {
        None
    }
}

/// Environment selection as carried by the run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum EnvKind {
    Matrix { payoff: Vec<Vec<f64>>, rounds: usize },
    PredatorPrey(PredatorPreyParams),
    Tabular,
}

pub fn make_env(kind: &EnvKind) -> Result<Box<dyn Environment>> {
    Ok(match kind {
        EnvKind::Matrix { payoff, rounds } => Box::new(MatrixGame::new(payoff.clone(), *rounds)?),
        EnvKind::PredatorPrey(p) => Box::new(PredatorPrey::new(p.clone())?),
        EnvKind::Tabular => Box::new(TabularDecPomdp::three_node()),
    })
}

/// Shared checks for `step` arguments.
pub(crate) fn check_joint_action(
    spec: &EnvSpec,
    done: bool,
    joint_action: &[usize],
    avail: &[Vec<bool>],
) -> Result<()> {
    use crate::error::usage;
    if done {
        return Err(usage("step called on a finished episode"));
    }
    if joint_action.len() != spec.n_agents {
        return Err(usage(format!(
            "expected {} actions, got {}",
            spec.n_agents,
            joint_action.len()
        )));
    }
    for (agent, &a) in joint_action.iter().enumerate() {
        if a >= spec.n_actions || !avail[agent][a] {
            return Err(usage(format!("action {a} is not available to agent {agent}")));
        }
    }
    Ok(())
}
