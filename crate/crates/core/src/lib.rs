//! Value-decomposition multi-agent Q-learning with an implicit latent world
//! model.
//!
//! Agents act from a shared recurrent Q-network. At training time an
//! imagination module encodes the joint agent hidden state into a latent,
//! rolls it forward `k` steps under the agents' current greedy policies, and
//! aggregates the imagined latents into a rollout state that conditions the
//! mixing network alongside the true global state.

pub mod agent;
pub mod autodiff;
pub mod env;
pub mod episode;
pub mod error;
pub mod harness;
pub mod imagination;
pub mod mixing;
pub mod nn;
pub mod optim;
pub mod stats;
pub mod training;

pub use agent::{AgentHidden, AgentNet, AgentQOutput, EpsilonSchedule};
pub use autodiff::{Grads, Graph, Mat, ParamId, ParamStore, Var};
pub use env::{make_env, EnvKind, EnvSpec, Environment, StepResult};
pub use episode::EpisodeRecord;
pub use error::{Error, Result};
pub use harness::config::{Algo, RunConfig};
pub use imagination::{GaussianLatent, ImaginationModule, ImaginedRollout};
pub use mixing::{Mixer, MixerKind};
pub use training::{Learner, LossBreakdown, ReplayBuffer};
