use crate::autodiff::{Graph, Mat, Var};
use crate::error::{usage, Result};
use serde::{Deserialize, Serialize};

pub const LOG_STD_MIN: f64 = -10.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Diagonal Gaussian over the latent state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianLatent {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl GaussianLatent {
    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            log_std: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Analytic `KL[q ‖ p]` for diagonal Gaussians.
pub fn kl_gaussian(q: &GaussianLatent, p: &GaussianLatent) -> Result<f64> {
    if q.dim() != p.dim() || q.log_std.len() != q.dim() || p.log_std.len() != p.dim() {
        return Err(usage("kl_gaussian dimension mismatch"));
    }
    Ok((0..q.dim())
        .map(|i| {
            let (mq, lq, mp, lp) = (q.mean[i], q.log_std[i], p.mean[i], p.log_std[i]);
            let var_q = (2.0 * lq).exp();
            let var_p = (2.0 * lp).exp();
            (lp - lq) + (var_q + (mq - mp).powi(2)) / (2.0 * var_p) - 0.5
        })
        .sum())
}

/// Batched Gaussian parameters on the tape, one distribution per row.
#[derive(Clone, Copy, Debug)]
pub struct LatentVars {
    pub mean: Var,
    pub log_std: Var,
}

impl LatentVars {
    /// Splits a `2L`-wide head into mean and clamped log-std.
    pub fn from_head(g: &mut Graph, head: Var, latent_dim: usize) -> Self {
        let mean = g.slice_cols(head, 0, latent_dim);
        let raw = g.slice_cols(head, latent_dim, 2 * latent_dim);
        let log_std = g.clamp(raw, LOG_STD_MIN, LOG_STD_MAX);
        Self { mean, log_std }
    }

    pub fn detach(&self, g: &mut Graph) -> Self {
        Self {
            mean: g.detach(self.mean),
            log_std: g.detach(self.log_std),
        }
    }

    /// Reparameterized sample `μ + σ·ε` with caller-supplied standard noise.
    pub fn sample(&self, g: &mut Graph, noise: Mat) -> Var {
        let eps = g.constant(noise);
        let std = g.exp(self.log_std);
        let scaled = g.mul(std, eps);
        g.add(self.mean, scaled)
    }

    pub fn to_latents(&self, g: &Graph) -> Vec<GaussianLatent> {
        let m = g.value(self.mean);
        let s = g.value(self.log_std);
        m.rows()
            .into_iter()
            .zip(s.rows())
            .map(|(m, s)| GaussianLatent {
                mean: m.to_vec(),
                log_std: s.to_vec(),
            })
            .collect()
    }
}

/// Per-row `KL[q ‖ p]` on the tape (B×1).
pub fn kl_rows(g: &mut Graph, q: LatentVars, p: LatentVars) -> Var {
    let log_ratio = g.sub(p.log_std, q.log_std);
    let twice = g.scale(log_ratio, -2.0);
    let var_ratio = g.exp(twice);
    let diff = g.sub(q.mean, p.mean);
    let diff_sq = g.square(diff);
    let neg_two_lp = g.scale(p.log_std, -2.0);
    let inv_var_p = g.exp(neg_two_lp);
    let mean_term = g.mul(diff_sq, inv_var_p);
    let quad = g.add(var_ratio, mean_term);
    let quad = g.scale(quad, 0.5);
    let per_dim = g.add(log_ratio, quad);
    let per_dim = g.add_scalar(per_dim, -0.5);
    g.row_sum(per_dim)
}

/// KL to the standard normal, per row.
pub fn kl_to_standard(g: &mut Graph, p: LatentVars) -> Var {
    let (rows, dim) = g.shape(p.mean);
    let zeros = LatentVars {
        mean: g.constant(Mat::zeros((rows, dim))),
        log_std: g.constant(Mat::zeros((rows, dim))),
    };
    kl_rows(g, p, zeros)
}

/// `α·KL[q ‖ sg(p)] + (1−α)·KL[sg(q) ‖ p]`, per row. The value equals the
/// plain KL for every α; only the gradient split between the two
/// distributions changes.
pub fn kl_balanced_rows(g: &mut Graph, q: LatentVars, p: LatentVars, alpha: f64) -> Result<Var> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(usage(format!("KL balancing weight {alpha} outside [0, 1]")));
    }
    let p_stop = p.detach(g);
    let q_stop = q.detach(g);
    let to_posterior = kl_rows(g, q, p_stop);
    let to_prior = kl_rows(g, q_stop, p);
    let a = g.scale(to_posterior, alpha);
    let b = g.scale(to_prior, 1.0 - alpha);
    Ok(g.add(a, b))
}

/// Scalar balanced KL for single distributions, returned as a 1×1 tape node
/// so callers can inspect gradients.
pub fn kl_balanced(g: &mut Graph, q: LatentVars, p: LatentVars, alpha: f64) -> Result<Var> {
    if g.shape(q.mean) != g.shape(p.mean) {
        return Err(usage("kl_balanced dimension mismatch"));
    }
    let rows = kl_balanced_rows(g, q, p, alpha)?;
    Ok(g.sum(rows))
}
