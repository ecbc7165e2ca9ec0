use super::{one_hot_rows, ImaginationModule};
use crate::agent::{greedy_action, AgentNet};
use crate::autodiff::{Graph, Mat, ParamStore, Var};
use crate::error::{usage, Result};
use serde::{Deserialize, Serialize};

/// A single imagined rollout of horizon `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImaginedRollout {
    /// `ŝ_t` followed by the `k` prior means.
    pub latents: Vec<Vec<f64>>,
    /// Joint hiddens decoded from each prior mean (`k` entries).
    pub decoded_hiddens: Vec<Vec<f64>>,
    /// Greedy joint actions at every latent (`k+1` entries).
    pub actions: Vec<Vec<usize>>,
}

/// Batched rollout on the tape. Only `latents` carry gradient; decoded
/// hiddens and actions are plain values because they only feed argmaxes.
pub struct RolloutVars {
    pub latents: Vec<Var>,
    pub decoded: Vec<Mat>,
    pub actions: Vec<Vec<Vec<usize>>>,
}

/// `sigmoid(logit) > 0.5` per entry; a row with nothing predicted feasible
/// falls back to all actions.
pub fn feasible_mask(logits: &Mat) -> Vec<Vec<bool>> {
    logits
        .rows()
        .into_iter()
        .map(|row| {
            let mask: Vec<bool> = row.iter().map(|&l| l > 0.0).collect();
            if mask.iter().any(|&b| b) {
                mask
            } else {
                vec![true; mask.len()]
            }
        })
        .collect()
}

impl ImaginationModule {
    fn greedy_from_hidden(
        &self,
        agent: &AgentNet,
        store: &ParamStore,
        joint_hidden: &Mat,
        masks: &[Vec<Vec<bool>>],
    ) -> Result<Vec<Vec<usize>>> {
        let (rows, n, h) = (joint_hidden.nrows(), self.dims.n_agents, self.dims.hidden_dim);
        let per_agent = joint_hidden
            .to_shape((rows * n, h))
            .expect("joint hidden is n·hidden wide")
            .to_owned();
        let q = agent.fc2.eval(store, &per_agent);
        (0..rows)
            .map(|r| {
                (0..n)
                    .map(|a| {
                        let row = q.row(r * n + a);
                        greedy_action(row.as_slice().expect("contiguous"), &masks[r][a])
                    })
                    .collect()
            })
            .collect()
    }

    /// Imagines `k` steps ahead for every row of `joint_hidden` (R × n·H),
    /// starting from `root`, the tape node holding the posterior means of
    /// those rows.
    ///
    /// The root action is greedy under the true mask `root_avail`
    /// (R × n × |U|). Each following step takes the prior mean, decodes it to
    /// per-agent hiddens, and acts greedily through the agent Q-head under the
    /// predicted feasibility mask (or no mask when `use_predicted_mask` is
    /// false). Nothing is sampled.
    #[allow(clippy::too_many_arguments)]
    pub fn rollout_on_tape(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        agent: &AgentNet,
        root: Var,
        joint_hidden: &Mat,
        root_avail: &[Vec<Vec<bool>>],
        k: usize,
        use_predicted_mask: bool,
    ) -> Result<RolloutVars> {
        if k < 1 {
            return Err(usage("rollout horizon k must be at least 1"));
        }
        let rows = joint_hidden.nrows();
        if root_avail.len() != rows || g.shape(root).0 != rows {
            return Err(usage("one availability mask and root latent per rollout row is required"));
        }
        let root_actions = self.greedy_from_hidden(agent, store, joint_hidden, root_avail)?;
        let mut latents = vec![root];
        let mut actions = vec![root_actions];
        let mut decoded = Vec::with_capacity(k);
        let all_true = vec![vec![vec![true; self.dims.n_actions]; self.dims.n_agents]; rows];
        for _ in 0..k {
            let prev = *latents.last().expect("non-empty");
            let onehot = g.constant(one_hot_rows(actions.last().expect("non-empty"), self.dims.n_actions));
            let next = self.prior_step(g, store, prev, onehot);
            let mean = g.value(next.mean).clone();
            let hidden = self.decoder.eval(store, &mean);
            let masks = if use_predicted_mask {
                let logits = self.feasible.eval(store, &mean);
                (0..rows)
                    .map(|r| {
                        let per_agent = Mat::from_shape_vec(
                            (self.dims.n_agents, self.dims.n_actions),
                            logits.row(r).to_vec(),
                        )
                        .expect("shape");
                        feasible_mask(&per_agent)
                    })
                    .collect()
            } else {
                all_true.clone()
            };
            actions.push(self.greedy_from_hidden(agent, store, &hidden, &masks)?);
            decoded.push(hidden);
            latents.push(next.mean);
        }
        Ok(RolloutVars {
            latents,
            decoded,
            actions,
        })
    }

    /// Single-sample rollout from one joint hidden.
    pub fn generate_rollout(
        &self,
        store: &ParamStore,
        agent: &AgentNet,
        joint_hidden: &[f64],
        true_avail: &[Vec<bool>],
        k: usize,
        use_predicted_mask: bool,
    ) -> Result<ImaginedRollout> {
        if joint_hidden.len() != self.dims.joint_hidden() {
            return Err(usage("joint hidden has the wrong width"));
        }
        let hidden = Mat::from_shape_vec((1, joint_hidden.len()), joint_hidden.to_vec()).expect("shape");
        let mut g = Graph::new();
        let h = g.constant(hidden.clone());
        let root = self.encode(&mut g, store, h).mean;
        let vars = self.rollout_on_tape(&mut g, store, agent, root, &hidden, &[true_avail.to_vec()], k, use_predicted_mask)?;
        Ok(ImaginedRollout {
            latents: vars.latents.iter().map(|&v| g.value(v).row(0).to_vec()).collect(),
            decoded_hiddens: vars.decoded.iter().map(|m| m.row(0).to_vec()).collect(),
            actions: vars.actions.into_iter().map(|mut a| a.remove(0)).collect(),
        })
    }
}
