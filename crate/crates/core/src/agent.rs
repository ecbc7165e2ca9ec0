//! Shared-parameter recurrent agent network and decentralized action
//! selection.

use crate::autodiff::{Graph, Mat, ParamId, ParamStore, Var};
use crate::env::EnvSpec;
use crate::error::{usage, Result};
use crate::nn::{GruCell, Linear};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Value written over unavailable actions before any max or argmax.
pub const MASKED_Q: f64 = -1e9;

/// Recurrent hidden state, one row per agent (or per batch-agent pair).
#[derive(Clone, Debug, PartialEq)]
pub struct AgentHidden {
    pub h: Mat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentQOutput {
    pub q: Mat,
    pub next_hidden: AgentHidden,
}

/// `linear(obs ⊕ last action ⊕ agent id → hidden) → ReLU → GRU → linear(→ |U|)`,
/// with parameters shared by every agent.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AgentNet {
    pub fc1: Linear,
    pub gru: GruCell,
    pub fc2: Linear,
    pub n_agents: usize,
    pub n_actions: usize,
    pub obs_dim: usize,
    pub hidden_dim: usize,
}

impl AgentNet {
    pub fn new(store: &mut ParamStore, spec: &EnvSpec, hidden_dim: usize, rng: &mut impl Rng) -> Self {
        let input_dim = spec.obs_dim + spec.n_actions + spec.n_agents;
        Self {
            fc1: Linear::new(store, "agent.fc1", input_dim, hidden_dim, rng),
            gru: GruCell::new(store, "agent.rnn", hidden_dim, hidden_dim, rng),
            fc2: Linear::new(store, "agent.fc2", hidden_dim, spec.n_actions, rng),
            n_agents: spec.n_agents,
            n_actions: spec.n_actions,
            obs_dim: spec.obs_dim,
            hidden_dim,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.obs_dim + self.n_actions + self.n_agents
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = self.fc1.params();
        p.extend(self.gru.params());
        p.extend(self.fc2.params());
        p
    }

    pub fn init_hidden(&self, rows: usize) -> AgentHidden {
        AgentHidden {
            h: Mat::zeros((rows, self.hidden_dim)),
        }
    }

    /// Input rows for one time step of `batch` episodes, agent-minor. A
    /// `None` last action (time zero) encodes as all zeros.
    pub fn build_inputs(&self, obs: &[&[Vec<f64>]], last_actions: &[Option<&[usize]>]) -> Mat {
        let batch = obs.len();
        let mut x = Mat::zeros((batch * self.n_agents, self.input_dim()));
        for (b, (step_obs, last)) in obs.iter().zip(last_actions).enumerate() {
            for a in 0..self.n_agents {
                let r = b * self.n_agents + a;
                for (j, &v) in step_obs[a].iter().enumerate() {
                    x[[r, j]] = v;
                }
                if let Some(last) = last {
                    x[[r, self.obs_dim + last[a]]] = 1.0;
                }
                x[[r, self.obs_dim + self.n_actions + a]] = 1.0;
            }
        }
        x
    }

    /// One recurrent step on the tape. Returns `(q, next_hidden)`.
    pub fn step(&self, g: &mut Graph, store: &ParamStore, inputs: Var, hidden: Var) -> (Var, Var) {
        let x = self.fc1.forward(g, store, inputs);
        let x = g.relu(x);
        let h = self.gru.forward(g, store, x, hidden);
        let q = self.fc2.forward(g, store, h);
        (q, h)
    }

    /// Off-tape recurrent step used while acting. Returns `(q, next_hidden)`.
    pub fn eval_step(&self, store: &ParamStore, inputs: &Mat, hidden: &Mat) -> (Mat, Mat) {
        let mut x = self.fc1.eval(store, inputs);
        x.mapv_inplace(|v| v.max(0.0));
        let h = self.gru.eval(store, &x, hidden);
        (self.fc2.eval(store, &h), h)
    }

    /// The output layer alone, applied to (possibly imagined) hidden states.
    pub fn q_head(&self, g: &mut Graph, store: &ParamStore, hidden: Var) -> Var {
        self.fc2.forward(g, store, hidden)
    }

    /// One recurrent step from explicit one-hot inputs, off the tape.
    pub fn agent_forward(
        &self,
        store: &ParamStore,
        obs: &Mat,
        last_action: &Mat,
        agent_id: &Mat,
        hidden: &AgentHidden,
    ) -> Result<AgentQOutput> {
        let rows = obs.nrows();
        if obs.ncols() != self.obs_dim
            || last_action.dim() != (rows, self.n_actions)
            || agent_id.dim() != (rows, self.n_agents)
            || hidden.h.dim() != (rows, self.hidden_dim)
        {
            return Err(usage("agent_forward input shapes do not match the network"));
        }
        let inputs = ndarray::concatenate(
            ndarray::Axis(1),
            &[obs.view(), last_action.view(), agent_id.view()],
        )
        .expect("row counts checked");
        let mut g = Graph::new();
        let x = g.constant(inputs);
        let h = g.constant(hidden.h.clone());
        let (q, h2) = self.step(&mut g, store, x, h);
        Ok(AgentQOutput {
            q: g.value(q).clone(),
            next_hidden: AgentHidden {
                h: g.value(h2).clone(),
            },
        })
    }
}

/// Index of the largest available entry; ties go to the lowest index.
pub fn greedy_action(q: &[f64], avail: &[bool]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (a, (&v, &ok)) in q.iter().zip(avail).enumerate() {
        let v = if ok { v } else { MASKED_Q };
        if ok && best.is_none_or(|(_, bv)| v > bv) {
            best = Some((a, v));
        }
    }
    best.map(|(a, _)| a)
        .ok_or_else(|| usage("every action is masked out"))
}

/// ε-greedy per agent: with probability ε a uniform draw over available
/// actions, otherwise the masked argmax.
pub fn select_actions(q: &Mat, avail: &[Vec<bool>], epsilon: f64, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(usage(format!("epsilon {epsilon} outside [0, 1]")));
    }
    if q.nrows() != avail.len() {
        return Err(usage("q rows and mask rows differ"));
    }
    q.rows()
        .into_iter()
        .zip(avail)
        .map(|(row, mask)| {
            let allowed: Vec<usize> = (0..mask.len()).filter(|&a| mask[a]).collect();
            if allowed.is_empty() {
                return Err(usage("every action is masked out"));
            }
            let explore: f64 = rng.random();
            if explore < epsilon {
                Ok(allowed[rng.random_range(0..allowed.len())])
            } else {
                greedy_action(row.as_slice().expect("contiguous"), mask)
            }
        })
        .collect()
}

/// Linear anneal from `start` to `finish` over `anneal_steps` env steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub finish: f64,
    pub anneal_steps: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            finish: 0.05,
            anneal_steps: 50_000,
        }
    }
}

impl EpsilonSchedule {
    pub fn epsilon_at(&self, env_step: u64) -> f64 {
        if self.anneal_steps == 0 || env_step >= self.anneal_steps {
            return self.finish;
        }
        let frac = env_step as f64 / self.anneal_steps as f64;
        self.start + (self.finish - self.start) * frac
    }
}
