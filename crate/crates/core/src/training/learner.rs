use super::batch::{lookahead_states, Batch};
use super::ReplayBuffer;
use crate::agent::{AgentNet, MASKED_Q};
use crate::autodiff::{Graph, Mat, ParamStore, Var};
use crate::env::EnvSpec;
use crate::error::{usage, Result};
use crate::imagination::{
    kl_balanced_rows, kl_to_standard, ImaginationDims, ImaginationModule, LatentVars, RolloutAggregator,
};
use crate::mixing::{MixerKind, MixingNet};
use crate::optim::RmsProp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Which value-decomposition learner to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algo {
    #[serde(rename = "mbvd")]
    Mbvd,
    #[serde(rename = "qmix")]
    Qmix,
    #[serde(rename = "vdn")]
    Vdn,
    /// Aggregates the next `k` real states.
    #[serde(rename = "qmix-rs")]
    QmixRs,
    /// Aggregates the posterior means of the next `k` real steps.
    #[serde(rename = "qmix-ls")]
    QmixLs,
}

impl Algo {
    pub const ALL: [Algo; 5] = [Algo::Mbvd, Algo::Qmix, Algo::Vdn, Algo::QmixRs, Algo::QmixLs];

    pub fn name(self) -> &'static str {
        match self {
            Algo::Mbvd => "mbvd",
            Algo::Qmix => "qmix",
            Algo::Vdn => "vdn",
            Algo::QmixRs => "qmix-rs",
            Algo::QmixLs => "qmix-ls",
        }
    }

    pub fn parse(name: &str) -> Result<Algo> {
        Algo::ALL
            .into_iter()
            .find(|a| a.name() == name)
            .ok_or_else(|| usage(format!("unknown algo {name:?}; expected one of mbvd, qmix, vdn, qmix-rs, qmix-ls")))
    }

    pub fn mixer_kind(self) -> MixerKind {
        match self {
            Algo::Vdn => MixerKind::Vdn,
            _ => MixerKind::Qmix,
        }
    }

    /// Whether the mixer sees a rollout state next to `s`.
    pub fn uses_rollout(self) -> bool {
        matches!(self, Algo::Mbvd | Algo::QmixRs | Algo::QmixLs)
    }
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub algo: Algo,
    pub k: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub lr: f64,
    pub rms_smoothing: f64,
    pub rms_eps: f64,
    pub grad_clip: f64,
    pub hidden_dim: usize,
    pub per_agent_latent: usize,
    pub body_width: usize,
    pub aggregator_hidden: usize,
    pub target_update_episodes: u64,
    /// When false an MBVD learner feeds a zero rollout state and drops the
    /// imagination losses.
    pub rollout_features: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            algo: Algo::Mbvd,
            k: 3,
            alpha: 0.3,
            gamma: 0.99,
            lr: 5e-4,
            rms_smoothing: 0.99,
            rms_eps: 1e-5,
            grad_clip: 10.0,
            hidden_dim: 64,
            per_agent_latent: 8,
            body_width: 128,
            aggregator_hidden: 64,
            target_update_episodes: 200,
            rollout_features: true,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.algo.uses_rollout() && self.k < 1 {
            return Err(usage(format!("{} needs k >= 1", self.algo)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(usage("alpha must lie in [0, 1]"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(usage("gamma must lie in (0, 1]"));
        }
        if self.lr <= 0.0 || self.grad_clip <= 0.0 {
            return Err(usage("lr and grad_clip must be positive"));
        }
        if self.hidden_dim == 0 || self.per_agent_latent == 0 || self.body_width == 0 || self.aggregator_hidden == 0 {
            return Err(usage("network widths must be positive"));
        }
        if self.target_update_episodes == 0 {
            return Err(usage("target_update_episodes must be positive"));
        }
        Ok(())
    }

    fn imagination_losses(&self) -> bool {
        self.algo == Algo::Mbvd && self.rollout_features
    }
}

/// Loss values before the optimizer step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_rl: f64,
    pub l_rc: f64,
    pub l_rc_prior: f64,
    pub l_kl: f64,
    pub l_fa: f64,
    pub total: f64,
}

/// Tape nodes of every loss term.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub l_rl: Var,
    pub l_rc: Var,
    pub l_rc_prior: Var,
    pub l_kl: Var,
    pub l_fa: Var,
    pub total: Var,
}

impl LossVars {
    pub fn values(&self, g: &Graph) -> LossBreakdown {
        LossBreakdown {
            l_rl: g.scalar(self.l_rl),
            l_rc: g.scalar(self.l_rc),
            l_rc_prior: g.scalar(self.l_rc_prior),
            l_kl: g.scalar(self.l_kl),
            l_fa: g.scalar(self.l_fa),
            total: g.scalar(self.total),
        }
    }
}

/// Standard-normal draws for the reparameterized samples of one batch.
#[derive(Clone, Debug)]
pub struct LatentNoise {
    /// (T·B) × latent_dim, for the posterior.
    pub posterior: Mat,
    /// ((T−1)·B) × latent_dim, for the prior at `t ≥ 1`.
    pub prior: Mat,
}

impl LatentNoise {
    pub fn zeros(batch: &Batch, latent_dim: usize) -> Self {
        let (t, b) = (batch.max_len, batch.batch_size);
        Self {
            posterior: Mat::zeros((t * b, latent_dim)),
            prior: Mat::zeros((t.saturating_sub(1) * b, latent_dim)),
        }
    }

    pub fn sample(batch: &Batch, latent_dim: usize, rng: &mut impl Rng) -> Self {
        let mut n = Self::zeros(batch, latent_dim);
        n.posterior.mapv_inplace(|_| rng.sample(StandardNormal));
        n.prior.mapv_inplace(|_| rng.sample(StandardNormal));
        n
    }
}

/// `r + γ·(1 − terminal)·next`.
pub fn td_target(reward: f64, terminal: bool, gamma: f64, next_q_tot: f64) -> f64 {
    if terminal {
        reward
    } else {
        reward + gamma * next_q_tot
    }
}

/// `Σ_r mask_r · rows_r / Σ_r mask_r` for an R×1 column of per-row values,
/// or a constant zero when nothing is unmasked.
pub fn masked_mean(g: &mut Graph, rows: Var, mask: &Mat) -> Var {
    let count = mask.sum();
    if count <= 0.0 {
        return g.scalar_const(0.0);
    }
    let m = g.constant(mask.clone());
    let kept = g.mul(rows, m);
    let total = g.sum(kept);
    g.scale(total, 1.0 / count)
}

/// Per-row mean squared error (R×1) between `pred` and `target`.
pub fn mse_rows(g: &mut Graph, pred: Var, target: Var) -> Var {
    let cols = g.shape(pred).1;
    let d = g.sub(pred, target);
    let sq = g.square(d);
    let s = g.row_sum(sq);
    g.scale(s, 1.0 / cols as f64)
}

fn slice_latent(g: &mut Graph, v: LatentVars, start: usize, end: usize) -> LatentVars {
    LatentVars {
        mean: g.slice_rows(v.mean, start, end),
        log_std: g.slice_rows(v.log_std, start, end),
    }
}

fn standard_latent(g: &mut Graph, rows: usize, dim: usize) -> LatentVars {
    LatentVars {
        mean: g.constant(Mat::zeros((rows, dim))),
        log_std: g.constant(Mat::zeros((rows, dim))),
    }
}

fn vcat_mats(parts: &[Mat]) -> Mat {
    let views: Vec<_> = parts.iter().map(|m| m.view()).collect();
    ndarray::concatenate(ndarray::Axis(0), &views).expect("equal widths")
}

/// Stream `stream` of the ChaCha generator seeded with `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Agent unroll over a batch: per time step, Q-values and hiddens.
struct Unroll {
    q: Vec<Var>,
    h: Vec<Var>,
}

/// Networks, live and target parameters, and optimizer state.
#[derive(Clone, Debug)]
pub struct Learner {
    pub config: LearnerConfig,
    pub spec: EnvSpec,
    pub agent: AgentNet,
    pub mixer: MixingNet,
    pub imagination: Option<ImaginationModule>,
    /// Aggregator over real states for the QMIX-RS variant.
    pub state_aggregator: Option<RolloutAggregator>,
    pub params: ParamStore,
    pub target: ParamStore,
    pub optim: RmsProp,
    pub train_steps: u64,
    pub last_grad_norm: f64,
    noise_rng: ChaCha8Rng,
}

impl Learner {
    /// Builds every network from `seed`. Each component draws its initial
    /// weights from its own random stream, so adding or removing one leaves
    /// the others unchanged.
    pub fn new(spec: &EnvSpec, config: LearnerConfig, seed: u64) -> Result<Self> {
        spec.validate()?;
        config.validate()?;
        let mut params = ParamStore::new();
        let agent = AgentNet::new(&mut params, spec, config.hidden_dim, &mut rng_stream(seed, 1));
        let rollout_dim = if config.algo.uses_rollout() { spec.state_dim } else { 0 };
        let mixer = MixingNet::new(
            config.algo.mixer_kind(),
            &mut params,
            spec.n_agents,
            spec.state_dim,
            rollout_dim,
            &mut rng_stream(seed, 2),
        );
        let imagination = matches!(config.algo, Algo::Mbvd | Algo::QmixLs).then(|| {
            let dims = ImaginationDims {
                n_agents: spec.n_agents,
                n_actions: spec.n_actions,
                hidden_dim: config.hidden_dim,
                latent_dim: spec.n_agents * config.per_agent_latent,
                state_dim: spec.state_dim,
                body_width: config.body_width,
                aggregator_hidden: config.aggregator_hidden,
            };
            ImaginationModule::new(&mut params, dims, &mut rng_stream(seed, 3))
        });
        let state_aggregator = (config.algo == Algo::QmixRs).then(|| {
            RolloutAggregator::new(
                &mut params,
                "state_aggregator",
                spec.state_dim,
                config.aggregator_hidden,
                spec.state_dim,
                &mut rng_stream(seed, 4),
            )
        });
        let optim = RmsProp::new(&params, config.lr, config.rms_smoothing, config.rms_eps);
        Ok(Self {
            target: params.clone(),
            spec: spec.clone(),
            agent,
            mixer,
            imagination,
            state_aggregator,
            params,
            optim,
            train_steps: 0,
            last_grad_norm: 0.0,
            noise_rng: rng_stream(seed, 5),
            config,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.spec.n_agents * self.config.per_agent_latent
    }

    pub fn noise_rng(&self) -> &ChaCha8Rng {
        &self.noise_rng
    }

    pub fn set_noise_rng(&mut self, rng: ChaCha8Rng) {
        self.noise_rng = rng;
    }

    fn unroll(&self, g: &mut Graph, store: &ParamStore, batch: &Batch) -> Unroll {
        let rows = batch.batch_size * self.spec.n_agents;
        let mut h = g.constant(Mat::zeros((rows, self.config.hidden_dim)));
        let mut out = Unroll {
            q: Vec::with_capacity(batch.max_len + 1),
            h: Vec::with_capacity(batch.max_len + 1),
        };
        for t in 0..=batch.max_len {
            let obs: Vec<&[Vec<f64>]> = batch.obs[t].iter().map(Vec::as_slice).collect();
            let last: Vec<Option<&[usize]>> = (0..batch.batch_size)
                .map(|b| (t > 0).then(|| batch.actions[t - 1][b].as_slice()))
                .collect();
            let x = g.constant(self.agent.build_inputs(&obs, &last));
            let (q, h2) = self.agent.step(g, store, x, h);
            h = h2;
            out.q.push(q);
            out.h.push(h);
        }
        out
    }

    /// Joint hiddens per time step (B × n·H each).
    fn joint_hiddens(&self, g: &mut Graph, unroll: &Unroll, batch: &Batch) -> Vec<Var> {
        let width = self.spec.n_agents * self.config.hidden_dim;
        unroll.h.iter().map(|&h| g.reshape(h, batch.batch_size, width)).collect()
    }

    /// The rollout state for rows `(t + offset, b)`, `t < T`, stacked
    /// time-major. For MBVD also returns the posterior over those rows and
    /// the detached joint hiddens it was computed from.
    fn rollout_state(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        batch: &Batch,
        joint: &[Var],
        offset: usize,
    ) -> Result<(Var, Option<(LatentVars, Var)>)> {
        let (t_len, b) = (batch.max_len, batch.batch_size);
        let r = t_len * b;
        let k = self.config.k;
        // whether step t' of episode b exists
        let valid = |tp: usize, bi: usize| tp <= batch.lens[bi];
        match self.config.algo {
            Algo::Mbvd if !self.config.rollout_features => {
                Ok((g.constant(Mat::zeros((r, self.spec.state_dim))), None))
            }
            Algo::Mbvd => {
                let im = self.imagination.as_ref().expect("mbvd has an imagination module");
                let jv = g.vcat(&joint[offset..offset + t_len]);
                let jv = g.detach(jv);
                let jh = g.value(jv).clone();
                let post = im.encode(g, store, jv);
                let avail: Vec<Vec<Vec<bool>>> = (0..r).map(|row| batch.avail[row / b + offset][row % b].clone()).collect();
                let roll = im.rollout_on_tape(g, store, &self.agent, post.mean, &jh, &avail, k, self.spec.has_action_mask)?;
                let agg = im.aggregator.aggregate(g, store, &roll.latents)?;
                Ok((agg, Some((post, jv))))
            }
            Algo::QmixRs => {
                let agg = self.state_aggregator.as_ref().expect("qmix-rs has a state aggregator");
                let inputs: Vec<Var> = lookahead_states(batch, offset, k)
                    .into_iter()
                    .map(|m| g.constant(m))
                    .collect();
                Ok((agg.aggregate(g, store, &inputs)?, None))
            }
            Algo::QmixLs => {
                let im = self.imagination.as_ref().expect("qmix-ls has an encoder");
                let jv = g.vcat(joint);
                let jv = g.detach(jv);
                let means = im.encode(g, store, jv).mean;
                let pad = g.constant(Mat::zeros((k * b, im.dims.latent_dim)));
                let ext = g.vcat(&[means, pad]);
                let inputs: Vec<Var> = (1..=k)
                    .map(|i| {
                        let start = (offset + i) * b;
                        let rows = g.slice_rows(ext, start, start + r);
                        let keep = Mat::from_shape_fn((r, 1), |(row, _)| {
                            f64::from(u8::from(valid(row / b + offset + i, row % b)))
                        });
                        let keep = g.constant(keep);
                        g.mul_col(rows, keep)
                    })
                    .collect();
                Ok((im.aggregator.aggregate(g, store, &inputs)?, None))
            }
            Algo::Qmix | Algo::Vdn => Err(usage("this algorithm has no rollout state")),
        }
    }

    fn conditioning(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        batch: &Batch,
        joint: &[Var],
        offset: usize,
    ) -> Result<(Var, Option<(LatentVars, Var)>)> {
        let states = g.constant(vcat_mats(&batch.states[offset..offset + batch.max_len]));
        if !self.config.algo.uses_rollout() {
            return Ok((states, None));
        }
        let (agg, posterior) = self.rollout_state(g, store, batch, joint, offset)?;
        Ok((g.hcat(&[states, agg]), posterior))
    }

    /// TD targets `y` for every row `(t, b)` (R×1), computed with the target
    /// parameters on a separate tape.
    pub fn td_targets(&self, batch: &Batch) -> Result<Mat> {
        let (t_len, b, n) = (batch.max_len, batch.batch_size, self.spec.n_agents);
        let store = &self.target;
        let mut g = Graph::new();
        let unroll = self.unroll(&mut g, store, batch);
        let joint = self.joint_hiddens(&mut g, &unroll, batch);
        let mut max_q = Mat::zeros((t_len * b, n));
        for t in 0..t_len {
            let q = g.value(unroll.q[t + 1]);
            for bi in 0..b {
                for a in 0..n {
                    let mask = &batch.avail[t + 1][bi][a];
                    let best = q
                        .row(bi * n + a)
                        .iter()
                        .zip(mask)
                        .map(|(&v, &ok)| if ok { v } else { MASKED_Q })
                        .fold(f64::NEG_INFINITY, f64::max);
                    max_q[[t * b + bi, a]] = best;
                }
            }
        }
        let (cond, _) = self.conditioning(&mut g, store, batch, &joint, 1)?;
        let mq = g.constant(max_q);
        let next = self.mixer.forward(&mut g, store, mq, cond);
        let next = g.value(next);
        Ok(Mat::from_shape_fn((t_len * b, 1), |(row, _)| {
            let (t, bi) = (row / b, row % b);
            td_target(
                batch.rewards[[t, bi]],
                batch.terminal[[t, bi]] > 0.5,
                self.config.gamma,
                next[[row, 0]],
            )
        }))
    }

    /// Builds every loss term on `g` for the live parameters `store`, given
    /// TD targets and the reparameterization noise.
    pub fn loss_graph(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        batch: &Batch,
        targets: &Mat,
        noise: &LatentNoise,
    ) -> Result<LossVars> {
        let (t_len, b, n, na) = (batch.max_len, batch.batch_size, self.spec.n_agents, self.spec.n_actions);
        let r = t_len * b;
        if targets.dim() != (r, 1) {
            return Err(usage("one TD target per batch row is required"));
        }
        let mask = batch.mask_column();
        let unroll = self.unroll(g, store, batch);
        let joint = self.joint_hiddens(g, &unroll, batch);

        let chosen: Vec<Var> = (0..t_len)
            .map(|t| {
                let idx: Vec<usize> = batch.actions[t].iter().flatten().copied().collect();
                let picked = g.gather_cols(unroll.q[t], &idx);
                g.reshape(picked, b, n)
            })
            .collect();
        let chosen = g.vcat(&chosen);
        let (cond, posterior) = self.conditioning(g, store, batch, &joint, 0)?;
        let q_tot = self.mixer.forward(g, store, chosen, cond);
        let y = g.constant(targets.clone());
        let td = g.sub(q_tot, y);
        let td = g.square(td);
        let l_rl = masked_mean(g, td, &mask);

        let zero = g.scalar_const(0.0);
        let (mut l_rc, mut l_rc_prior, mut l_kl, mut l_fa) = (zero, zero, zero, zero);
        if self.config.imagination_losses() {
            let im = self.imagination.as_ref().expect("mbvd has an imagination module");
            let (post, jv) = posterior.expect("mbvd returns its posterior");
            let l = im.dims.latent_dim;
            if noise.posterior.dim() != (r, l) || noise.prior.dim() != (t_len.saturating_sub(1) * b, l) {
                return Err(usage("latent noise does not match the batch"));
            }
            let z = post.sample(g, noise.posterior.clone());
            let recon = im.decode(g, store, z);
            let rc_rows = mse_rows(g, recon, jv);
            l_rc = masked_mean(g, rc_rows, &mask);

            let q0 = slice_latent(g, post, 0, b);
            let std0 = standard_latent(g, b, l);
            let kl0 = kl_balanced_rows(g, q0, std0, self.config.alpha)?;
            let kl_col = if t_len >= 2 {
                let prev = g.slice_rows(z, 0, r - b);
                let acts: Vec<Vec<usize>> = batch.actions[..t_len - 1].iter().flatten().cloned().collect();
                let u_prev = g.constant(crate::imagination::one_hot_rows(&acts, na));
                let prior = im.prior_step(g, store, prev, u_prev);
                let q_rest = slice_latent(g, post, b, r);
                let reg = kl_to_standard(g, prior);
                let bal = kl_balanced_rows(g, q_rest, prior, self.config.alpha)?;
                let kl_rest = g.add(reg, bal);

                let zp = prior.sample(g, noise.prior.clone());
                let pr = im.prior_reconstruct(g, store, zp);
                let input = g.hcat(&[prev, u_prev]);
                let input = g.detach(input);
                let pr_rows = mse_rows(g, pr, input);
                let rest_mask = mask.slice(ndarray::s![b.., ..]).to_owned();
                l_rc_prior = masked_mean(g, pr_rows, &rest_mask);
                g.vcat(&[kl0, kl_rest])
            } else {
                kl0
            };
            l_kl = masked_mean(g, kl_col, &mask);

            if self.spec.has_action_mask {
                let logits = im.feasible_logits(g, store, z);
                let bits = Mat::from_shape_fn((r, n * na), |(row, j)| {
                    f64::from(u8::from(batch.avail[row / b][row % b][j / na][j % na]))
                });
                let bce = g.bce_with_logits(logits, bits);
                let bce = g.row_sum(bce);
                let bce = g.scale(bce, 1.0 / (n * na) as f64);
                l_fa = masked_mean(g, bce, &mask);
            }
        }
        let mut total = g.add(l_rl, l_rc);
        for term in [l_rc_prior, l_kl, l_fa] {
            total = g.add(total, term);
        }
        Ok(LossVars {
            l_rl,
            l_rc,
            l_rc_prior,
            l_kl,
            l_fa,
            total,
        })
    }

    fn draw_noise(&mut self, batch: &Batch) -> LatentNoise {
        let l = self.latent_dim();
        if self.config.imagination_losses() {
            LatentNoise::sample(batch, l, &mut self.noise_rng)
        } else {
            LatentNoise::zeros(batch, l)
        }
    }

    /// Loss values on `batch` without updating anything except the noise
    /// stream.
    pub fn evaluate_losses(&mut self, batch: &Batch) -> Result<LossBreakdown> {
        let targets = self.td_targets(batch)?;
        let noise = self.draw_noise(batch);
        let mut g = Graph::new();
        let vars = self.loss_graph(&mut g, &self.params, batch, &targets, &noise)?;
        Ok(vars.values(&g))
    }

    /// One RMSProp step on the total loss with global-norm clipping. Returns
    /// the loss values before the step.
    pub fn train_on_batch(&mut self, batch: &Batch) -> Result<LossBreakdown> {
        let targets = self.td_targets(batch)?;
        let noise = self.draw_noise(batch);
        let mut g = Graph::new();
        let vars = self.loss_graph(&mut g, &self.params, batch, &targets, &noise)?;
        let values = vars.values(&g);
        if !values.total.is_finite() {
            return Err(usage(format!("non-finite loss {values:?}")));
        }
        let mut grads = g.backward(vars.total, &self.params);
        self.last_grad_norm = grads.clip_global_norm(self.config.grad_clip);
        self.optim.step(&mut self.params, &grads);
        self.train_steps += 1;
        Ok(values)
    }

    /// Joint agent hiddens (n·H wide) after each observation `0..=T` of a
    /// stored episode, recomputed with the live parameters.
    pub fn episode_joint_hiddens(&self, ep: &crate::episode::EpisodeRecord) -> Vec<Vec<f64>> {
        let mut hidden = self.agent.init_hidden(self.spec.n_agents).h;
        (0..=ep.len())
            .map(|t| {
                let last = (t > 0).then(|| ep.actions[t - 1].as_slice());
                let inputs = self.agent.build_inputs(&[ep.obs[t].as_slice()], &[last]);
                hidden = self.agent.eval_step(&self.params, &inputs, &hidden).1;
                hidden.iter().copied().collect()
            })
            .collect()
    }

    /// One step on the world-model terms only (`L_RC`, `L_RC^Prior`, `L_KL`,
    /// `L_FA`). Agent and mixer parameters receive no gradient.
    pub fn train_world_model_on_batch(&mut self, batch: &Batch) -> Result<LossBreakdown> {
        if !self.config.imagination_losses() {
            return Err(usage("world-model training needs mbvd with rollout features"));
        }
        let targets = Mat::zeros((batch.max_len * batch.batch_size, 1));
        let noise = self.draw_noise(batch);
        let mut g = Graph::new();
        let vars = self.loss_graph(&mut g, &self.params, batch, &targets, &noise)?;
        let mut values = vars.values(&g);
        let mut wm = g.add(vars.l_rc, vars.l_rc_prior);
        for term in [vars.l_kl, vars.l_fa] {
            wm = g.add(wm, term);
        }
        let mut grads = g.backward(wm, &self.params);
        self.last_grad_norm = grads.clip_global_norm(self.config.grad_clip);
        self.optim.step(&mut self.params, &grads);
        self.train_steps += 1;
        values.l_rl = 0.0;
        values.total = g.scalar(wm);
        Ok(values)
    }

    /// Replaces parameters and optimizer state with saved ones of the same
    /// layout.
    pub fn restore(
        &mut self,
        params: ParamStore,
        target: ParamStore,
        optim: RmsProp,
        train_steps: u64,
        noise_rng: ChaCha8Rng,
    ) -> Result<()> {
        if !self.params.same_layout(&params) || !self.params.same_layout(&target) {
            return Err(crate::error::Error::Load("saved parameters do not match the network layout".into()));
        }
        if optim.square_avg().len() != params.len()
            || optim.square_avg().iter().zip(params.iter()).any(|(v, (_, p))| v.dim() != p.dim())
        {
            return Err(crate::error::Error::Load("saved optimizer state does not match the network layout".into()));
        }
        self.params = params;
        self.target = target;
        self.optim = optim;
        self.train_steps = train_steps;
        self.noise_rng = noise_rng;
        Ok(())
    }

    /// Samples a batch and trains on it; `None` while the buffer is too small.
    pub fn train_step(
        &mut self,
        buffer: &ReplayBuffer,
        batch_size: usize,
        rng: &mut impl Rng,
    ) -> Result<Option<LossBreakdown>> {
        let Some(episodes) = buffer.sample(batch_size, rng) else {
            return Ok(None);
        };
        let batch = Batch::new(&episodes, &self.spec, None)?;
        self.train_on_batch(&batch).map(Some)
    }

    /// Copies live parameters into the target when `episode_counter` is a
    /// positive multiple of the update period. Returns whether it synced.
    pub fn sync_target(&mut self, episode_counter: u64) -> bool {
        let period = self.config.target_update_episodes;
        if episode_counter > 0 && episode_counter % period == 0 {
            self.target.copy_from(&self.params);
            true
        } else {
            false
        }
    }

}
