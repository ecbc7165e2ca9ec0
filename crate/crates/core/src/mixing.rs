//! Value-decomposition mixers. Both take the per-agent chosen utilities
//! (B×n) and a conditioning matrix (B×C) and return `Q_tot` (B×1).

use crate::agent::greedy_action;
use crate::autodiff::{Graph, Mat, ParamId, ParamStore, Var};
use crate::error::{usage, Error, Result};
use crate::nn::{Linear, Mlp};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Largest joint-action space [`check_igm`] will enumerate.
pub const IGM_MAX_JOINT: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixerKind {
    Vdn,
    Qmix,
}

/// Evaluation-only view of a mixer.
pub trait Mixer {
    fn n_agents(&self) -> usize;
    fn q_tot(&self, chosen_q: &Mat, cond: &Mat) -> Vec<f64>;
}

/// First-layer weights applied to the rollout part of the conditioning
/// vector, one matrix per hypernetwork, without biases.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RolloutConditioning {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub dim: usize,
}

/// Monotonic two-layer mixer whose weights are produced by hypernetworks of
/// the conditioning vector and passed through `abs`.
///
/// The conditioning vector is `s` optionally followed by a rollout state.
/// Each hypernetwork's first layer acts on `s` through its own affine map and
/// on the rollout part through [`RolloutConditioning`], which together equal
/// one affine map on the concatenation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QmixMixer {
    pub hyper_w1: Mlp,
    pub hyper_b1: Linear,
    pub hyper_w2: Linear,
    pub hyper_b2: Mlp,
    pub rollout: Option<RolloutConditioning>,
    pub n_agents: usize,
    pub embed_dim: usize,
    pub state_dim: usize,
}

impl QmixMixer {
    pub fn new(
        store: &mut ParamStore,
        n_agents: usize,
        state_dim: usize,
        embed_dim: usize,
        hypernet_hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            hyper_w1: Mlp::new(
                store,
                "mixer.hyper_w1",
                &[state_dim, hypernet_hidden, n_agents * embed_dim],
                rng,
            ),
            hyper_b1: Linear::new(store, "mixer.hyper_b1", state_dim, embed_dim, rng),
            hyper_w2: Linear::new(store, "mixer.hyper_w2", state_dim, embed_dim, rng),
            hyper_b2: Mlp::new(store, "mixer.hyper_b2", &[state_dim, embed_dim, 1], rng),
            rollout: None,
            n_agents,
            embed_dim,
            state_dim,
        }
    }

    /// Extends the conditioning vector with a `dim`-wide rollout state.
    pub fn with_rollout(mut self, store: &mut ParamStore, dim: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (dim as f64).sqrt();
        let mut weight = |name: &str, out: usize| {
            let m = Mat::from_shape_fn((dim, out), |_| rng.random_range(-bound..bound));
            store.add(format!("mixer.rollout.{name}"), m)
        };
        let hidden = self.hyper_w1.layers[0].out_dim;
        self.rollout = Some(RolloutConditioning {
            w1: weight("hyper_w1", hidden),
            b1: weight("hyper_b1", self.embed_dim),
            w2: weight("hyper_w2", self.embed_dim),
            b2: weight("hyper_b2", self.embed_dim),
            dim,
        });
        self
    }

    pub fn cond_dim(&self) -> usize {
        self.state_dim + self.rollout.as_ref().map_or(0, |r| r.dim)
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = self.hyper_w1.params();
        p.extend(self.hyper_b1.params());
        p.extend(self.hyper_w2.params());
        p.extend(self.hyper_b2.params());
        if let Some(r) = &self.rollout {
            p.extend([r.w1, r.b1, r.w2, r.b2]);
        }
        p
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, chosen_q: Var, cond: Var) -> Var {
        let (state, extra) = match &self.rollout {
            Some(r) => {
                let s = g.slice_cols(cond, 0, self.state_dim);
                let x = g.slice_cols(cond, self.state_dim, self.state_dim + r.dim);
                (s, Some((x, r)))
            }
            None => (cond, None),
        };
        let first = |g: &mut Graph, lin: &Linear, pick: fn(&RolloutConditioning) -> ParamId| {
            let y = lin.forward(g, store, state);
            match extra {
                Some((x, r)) => {
                    let w = g.param(store, pick(r));
                    let xy = g.matmul(x, w);
                    g.add(y, xy)
                }
                None => y,
            }
        };
        let w1 = first(g, &self.hyper_w1.layers[0], |r| r.w1);
        let b1 = first(g, &self.hyper_b1, |r| r.b1);
        let w2 = first(g, &self.hyper_w2, |r| r.w2);
        let b2 = first(g, &self.hyper_b2.layers[0], |r| r.b2);

        let w1 = g.relu(w1);
        let w1 = self.hyper_w1.layers[1].forward(g, store, w1);
        let w1 = g.abs(w1);
        let hidden = g.block_row_matvec(chosen_q, w1, self.embed_dim);
        let hidden = g.add(hidden, b1);
        let hidden = g.elu(hidden);
        let w2 = g.abs(w2);
        let b2 = g.relu(b2);
        let b2 = self.hyper_b2.layers[1].forward(g, store, b2);
        let weighted = g.mul(hidden, w2);
        let out = g.row_sum(weighted);
        g.add(out, b2)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum MixingNet {
    Vdn { n_agents: usize },
    Qmix(QmixMixer),
}

impl MixingNet {
    /// A VDN sum, or a QMIX mixer over `s` plus a `rollout_dim`-wide rollout
    /// state when `rollout_dim > 0`.
    pub fn new(
        kind: MixerKind,
        store: &mut ParamStore,
        n_agents: usize,
        state_dim: usize,
        rollout_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        match kind {
            MixerKind::Vdn => MixingNet::Vdn { n_agents },
            MixerKind::Qmix => {
                let m = QmixMixer::new(store, n_agents, state_dim, 32, 64, rng);
                let m = if rollout_dim > 0 { m.with_rollout(store, rollout_dim, rng) } else { m };
                MixingNet::Qmix(m)
            }
        }
    }

    pub fn kind(&self) -> MixerKind {
        match self {
            MixingNet::Vdn { .. } => MixerKind::Vdn,
            MixingNet::Qmix(_) => MixerKind::Qmix,
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        match self {
            MixingNet::Vdn { .. } => Vec::new(),
            MixingNet::Qmix(m) => m.params(),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, chosen_q: Var, cond: Var) -> Var {
        match self {
            MixingNet::Vdn { .. } => g.row_sum(chosen_q),
            MixingNet::Qmix(m) => m.forward(g, store, chosen_q, cond),
        }
    }

    pub fn bind<'a>(&'a self, store: &'a ParamStore) -> BoundMixer<'a> {
        BoundMixer { net: self, store }
    }
}

/// A mixer paired with parameter values.
pub struct BoundMixer<'a> {
    pub net: &'a MixingNet,
    pub store: &'a ParamStore,
}

impl Mixer for BoundMixer<'_> {
    fn n_agents(&self) -> usize {
        match self.net {
            MixingNet::Vdn { n_agents } => *n_agents,
            MixingNet::Qmix(m) => m.n_agents,
        }
    }

    fn q_tot(&self, chosen_q: &Mat, cond: &Mat) -> Vec<f64> {
        let mut g = Graph::new();
        let q = g.constant(chosen_q.clone());
        let c = g.constant(cond.clone());
        let out = self.net.forward(&mut g, self.store, q, c);
        g.value(out).column(0).to_vec()
    }
}

/// Additive decomposition `Q_tot = Σ_a Q_a`.
pub fn vdn_mix(chosen_q: &[f64]) -> f64 {
    chosen_q.iter().sum()
}

/// QMIX mixing of a single sample.
pub fn qmix_mix(mixer: &QmixMixer, store: &ParamStore, chosen_q: &[f64], cond: &[f64]) -> Result<f64> {
    if chosen_q.len() != mixer.n_agents || cond.len() != mixer.cond_dim() {
        return Err(usage(format!(
            "qmix expects {} utilities and a {}-dim condition, got {} and {}",
            mixer.n_agents,
            mixer.cond_dim(),
            chosen_q.len(),
            cond.len()
        )));
    }
    let net = MixingNet::Qmix(mixer.clone());
    let q = Mat::from_shape_vec((1, chosen_q.len()), chosen_q.to_vec()).expect("shape");
    let c = Mat::from_shape_vec((1, cond.len()), cond.to_vec()).expect("shape");
    Ok(net.bind(store).q_tot(&q, &c)[0])
}

/// True iff the lexicographically-first argmax of `Q_tot` over every joint
/// action equals the tuple of per-agent argmaxes (lowest index on ties).
pub fn check_igm(mixer: &dyn Mixer, q_matrix: &Mat, cond: &[f64]) -> Result<bool> {
    let (n, n_actions) = q_matrix.dim();
    if n != mixer.n_agents() {
        return Err(usage("q_matrix rows must equal the mixer's agent count"));
    }
    let joint = (0..n).try_fold(1usize, |acc, _| acc.checked_mul(n_actions));
    let joint = match joint {
        Some(j) if j <= IGM_MAX_JOINT => j,
        _ => {
            return Err(Error::Capacity(format!(
                "{n_actions}^{n} joint actions exceeds {IGM_MAX_JOINT}"
            )))
        }
    };
    let mut chosen = Mat::zeros((joint, n));
    for ja in 0..joint {
        let mut rest = ja;
        for agent in (0..n).rev() {
            chosen[[ja, agent]] = q_matrix[[agent, rest % n_actions]];
            rest /= n_actions;
        }
    }
    let cond = Mat::from_shape_fn((joint, cond.len()), |(_, j)| cond[j]);
    let totals = mixer.q_tot(&chosen, &cond);
    let mut best = 0;
    for (ja, &v) in totals.iter().enumerate() {
        if v > totals[best] {
            best = ja;
        }
    }
    let all = vec![true; n_actions];
    let individual = q_matrix
        .rows()
        .into_iter()
        .map(|row| greedy_action(row.as_slice().expect("contiguous"), &all))
        .collect::<Result<Vec<_>>>()?;
    let individual_index = individual.iter().fold(0, |acc, &a| acc * n_actions + a);
    Ok(best == individual_index)
}
