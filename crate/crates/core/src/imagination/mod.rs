//! The latent world model: a posterior encoder over the joint agent hidden
//! state with its decoder, an action-conditioned prior transition (itself an
//! auto-encoder over its input), a feasible-action head, and the recurrent
//! aggregator that folds an imagined rollout into one conditioning vector.

mod gaussian;
mod rollout;

pub use gaussian::{
    kl_balanced, kl_balanced_rows, kl_gaussian, kl_rows, kl_to_standard, GaussianLatent, LatentVars,
    LOG_STD_MAX, LOG_STD_MIN,
};
pub use rollout::{feasible_mask, ImaginedRollout, RolloutVars};

use crate::autodiff::{Graph, Mat, ParamId, ParamStore, Var};
use crate::error::{usage, Result};
use crate::nn::{GruCell, Linear, Mlp};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImaginationDims {
    pub n_agents: usize,
    pub n_actions: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub state_dim: usize,
    pub body_width: usize,
    pub aggregator_hidden: usize,
}

impl ImaginationDims {
    pub fn joint_hidden(&self) -> usize {
        self.n_agents * self.hidden_dim
    }

    pub fn joint_action(&self) -> usize {
        self.n_agents * self.n_actions
    }
}

/// GRU over a sequence of vectors from a zero hidden state, followed by a
/// linear projection. Its size does not depend on the sequence length.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RolloutAggregator {
    pub gru: GruCell,
    pub proj: Linear,
}

impl RolloutAggregator {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            gru: GruCell::new(store, &format!("{name}.rnn"), in_dim, hidden, rng),
            proj: Linear::new(store, &format!("{name}.proj"), hidden, out_dim, rng),
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = self.gru.params();
        p.extend(self.proj.params());
        p
    }

    pub fn out_dim(&self) -> usize {
        self.proj.out_dim
    }

    /// Consumes `inputs` in order and returns the projected final hidden.
    pub fn aggregate(&self, g: &mut Graph, store: &ParamStore, inputs: &[Var]) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| usage("cannot aggregate an empty rollout"))?;
        let rows = g.shape(*first).0;
        let mut h = g.constant(Mat::zeros((rows, self.gru.hidden_dim)));
        for &x in inputs {
            h = self.gru.forward(g, store, x, h);
        }
        Ok(self.proj.forward(g, store, h))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ImaginationModule {
    pub dims: ImaginationDims,
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub prior: Mlp,
    pub prior_decoder: Mlp,
    pub feasible: Mlp,
    pub aggregator: RolloutAggregator,
}

impl ImaginationModule {
    pub fn new(store: &mut ParamStore, dims: ImaginationDims, rng: &mut impl Rng) -> Self {
        let (jh, ja, l, w) = (dims.joint_hidden(), dims.joint_action(), dims.latent_dim, dims.body_width);
        Self {
            encoder: Mlp::new(store, "imagination.encoder", &[jh, w, w, 2 * l], rng),
            decoder: Mlp::new(store, "imagination.decoder", &[l, w, w, jh], rng),
            prior: Mlp::new(store, "imagination.prior", &[l + ja, w, w, 2 * l], rng),
            prior_decoder: Mlp::new(store, "imagination.prior_decoder", &[l, w, w, l + ja], rng),
            feasible: Mlp::new(store, "imagination.feasible", &[l, w, ja], rng),
            aggregator: RolloutAggregator::new(
                store,
                "imagination.aggregator",
                l,
                dims.aggregator_hidden,
                dims.state_dim,
                rng,
            ),
            dims,
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = self.world_model_params();
        p.extend(self.aggregator.params());
        p
    }

    /// Everything except the aggregator.
    pub fn world_model_params(&self) -> Vec<ParamId> {
        [&self.encoder, &self.decoder, &self.prior, &self.prior_decoder, &self.feasible]
            .iter()
            .flat_map(|m| m.params())
            .collect()
    }

    pub fn encode(&self, g: &mut Graph, store: &ParamStore, joint_hidden: Var) -> LatentVars {
        let head = self.encoder.forward(g, store, joint_hidden);
        LatentVars::from_head(g, head, self.dims.latent_dim)
    }

    pub fn decode(&self, g: &mut Graph, store: &ParamStore, latent: Var) -> Var {
        self.decoder.forward(g, store, latent)
    }

    pub fn prior_step(&self, g: &mut Graph, store: &ParamStore, prev_latent: Var, joint_action: Var) -> LatentVars {
        let x = g.hcat(&[prev_latent, joint_action]);
        let head = self.prior.forward(g, store, x);
        LatentVars::from_head(g, head, self.dims.latent_dim)
    }

    /// Reconstruction of the prior's input `(ŝ_{t−1}, u_{t−1})` from a latent.
    pub fn prior_reconstruct(&self, g: &mut Graph, store: &ParamStore, latent: Var) -> Var {
        self.prior_decoder.forward(g, store, latent)
    }

    pub fn feasible_logits(&self, g: &mut Graph, store: &ParamStore, latent: Var) -> Var {
        self.feasible.forward(g, store, latent)
    }

    fn row(&self, v: &[f64], dim: usize, what: &str) -> Result<Mat> {
        if v.len() != dim {
            return Err(usage(format!("{what} must have {dim} entries, got {}", v.len())));
        }
        Ok(Mat::from_shape_vec((1, dim), v.to_vec()).expect("shape"))
    }

    /// `q(ŝ | h)` for one concatenated joint hidden.
    pub fn posterior_encode(&self, store: &ParamStore, joint_hidden: &[f64]) -> Result<GaussianLatent> {
        let x = self.row(joint_hidden, self.dims.joint_hidden(), "joint hidden")?;
        let mut g = Graph::new();
        let x = g.constant(x);
        let lat = self.encode(&mut g, store, x);
        Ok(lat.to_latents(&g).remove(0))
    }

    /// Deterministic reconstruction of the joint hidden from a latent.
    pub fn posterior_decode(&self, store: &ParamStore, latent: &[f64]) -> Result<Vec<f64>> {
        let x = self.row(latent, self.dims.latent_dim, "latent")?;
        Ok(self.decoder.eval(store, &x).row(0).to_vec())
    }

    /// Next-latent Gaussian plus the reconstruction of its own input, decoded
    /// from the mean.
    pub fn prior_transition(
        &self,
        store: &ParamStore,
        prev_latent: &[f64],
        joint_action_onehot: &[f64],
    ) -> Result<(GaussianLatent, Vec<f64>)> {
        let prev = self.row(prev_latent, self.dims.latent_dim, "latent")?;
        let act = self.row(joint_action_onehot, self.dims.joint_action(), "joint action")?;
        let mut g = Graph::new();
        let prev = g.constant(prev);
        let act = g.constant(act);
        let lat = self.prior_step(&mut g, store, prev, act);
        let recon = self.prior_reconstruct(&mut g, store, lat.mean);
        let recon = g.value(recon).row(0).to_vec();
        Ok((lat.to_latents(&g).remove(0), recon))
    }

    /// Per-agent per-action logits (n × |U|).
    pub fn predict_feasible_actions(&self, store: &ParamStore, latent_mean: &[f64]) -> Result<Mat> {
        let x = self.row(latent_mean, self.dims.latent_dim, "latent")?;
        let logits = self.feasible.eval(store, &x);
        Ok(Mat::from_shape_vec(
            (self.dims.n_agents, self.dims.n_actions),
            logits.iter().copied().collect(),
        )
        .expect("shape"))
    }

    pub fn aggregate_rollout(&self, store: &ParamStore, latents: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let inputs = latents
            .iter()
            .map(|l| self.row(l, self.dims.latent_dim, "latent").map(|m| g.constant(m)))
            .collect::<Result<Vec<_>>>()?;
        let out = self.aggregator.aggregate(&mut g, store, &inputs)?;
        Ok(g.value(out).row(0).to_vec())
    }
}

pub(crate) fn one_hot_rows(actions: &[Vec<usize>], n_actions: usize) -> Mat {
    let n_agents = actions.first().map_or(0, Vec::len);
    let mut m = Mat::zeros((actions.len(), n_agents * n_actions));
    for (r, joint) in actions.iter().enumerate() {
        for (a, &u) in joint.iter().enumerate() {
            m[[r, a * n_actions + u]] = 1.0;
        }
    }
    m
}
