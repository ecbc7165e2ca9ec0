//! Replay, batched losses, optimization and the acting loop.

mod batch;
mod buffer;
mod learner;

pub use batch::{lookahead_states, Batch};
pub use buffer::ReplayBuffer;
pub use learner::{
    masked_mean, mse_rows, rng_stream, td_target, Algo, Learner, LearnerConfig, LatentNoise, LossBreakdown, LossVars,
};

use crate::agent::{select_actions, AgentNet};
use crate::autodiff::ParamStore;
use crate::env::Environment;
use crate::episode::EpisodeRecord;
use crate::error::Result;
use rand::Rng;

/// Plays one episode with ε-greedy decentralized action selection. Only the
/// agent network is consulted; the stored record includes global states and
/// masks for training.
pub fn run_episode(
    env: &mut dyn Environment,
    agent: &AgentNet,
    store: &ParamStore,
    epsilon: f64,
    seed: u64,
    rng: &mut impl Rng,
) -> Result<EpisodeRecord> {
    let first = env.reset(seed);
    let mut hidden = agent.init_hidden(agent.n_agents).h;
    let mut obs = first.obs.clone();
    let mut avail = first.avail_actions.clone();
    let mut record = EpisodeRecord::start(seed, first);
    let mut last: Option<Vec<usize>> = None;
    loop {
        let inputs = agent.build_inputs(&[obs.as_slice()], &[last.as_deref()]);
        let (q, h) = agent.eval_step(store, &inputs, &hidden);
        hidden = h;
        let actions = select_actions(&q, &avail, epsilon, rng)?;
        let result = env.step(&actions)?;
        obs = result.obs.clone();
        avail = result.avail_actions.clone();
        let done = result.done;
        record.push(actions.clone(), result);
        last = Some(actions);
        if done {
            return Ok(record);
        }
    }
}
