use crate::autodiff::Mat;
use crate::env::EnvSpec;
use crate::episode::EpisodeRecord;
use crate::error::{usage, Result};

/// Episodes padded to a common length, laid out time-major.
///
/// With `T` the padded length, observation-aligned fields (`obs`, `states`,
/// `avail`) hold `T+1` entries and transition fields hold `T`. Padding uses
/// zero observations and states, all-true masks and action 0; `mask` is zero
/// there so padded steps drop out of every loss.
#[derive(Clone, Debug)]
pub struct Batch {
    pub batch_size: usize,
    pub max_len: usize,
    pub lens: Vec<usize>,
    /// `[t][b][agent]` observation vectors.
    pub obs: Vec<Vec<Vec<Vec<f64>>>>,
    /// `[t]` → B × state_dim.
    pub states: Vec<Mat>,
    /// `[t][b][agent][action]`.
    pub avail: Vec<Vec<Vec<Vec<bool>>>>,
    /// `[t][b]` joint actions.
    pub actions: Vec<Vec<Vec<usize>>>,
    /// T × B.
    pub rewards: Mat,
    pub terminal: Mat,
    pub mask: Mat,
}

impl Batch {
    /// Pads `episodes` to their longest length, or to `pad_to` if that is
    /// longer.
    pub fn new(episodes: &[&EpisodeRecord], spec: &EnvSpec, pad_to: Option<usize>) -> Result<Self> {
        if episodes.is_empty() {
            return Err(usage("a batch needs at least one episode"));
        }
        for ep in episodes {
            ep.validate(spec)?;
        }
        let b = episodes.len();
        let lens: Vec<usize> = episodes.iter().map(|e| e.len()).collect();
        let t_max = lens.iter().copied().max().unwrap_or(0).max(pad_to.unwrap_or(0));
        let (n, na) = (spec.n_agents, spec.n_actions);

        let zero_obs = vec![vec![0.0; spec.obs_dim]; n];
        let all_avail = vec![vec![true; na]; n];
        let mut obs = Vec::with_capacity(t_max + 1);
        let mut states = Vec::with_capacity(t_max + 1);
        let mut avail = Vec::with_capacity(t_max + 1);
        for t in 0..=t_max {
            obs.push(
                episodes
                    .iter()
                    .map(|e| e.obs.get(t).cloned().unwrap_or_else(|| zero_obs.clone()))
                    .collect(),
            );
            states.push(Mat::from_shape_fn((b, spec.state_dim), |(i, j)| {
                episodes[i].states.get(t).map_or(0.0, |s| s[j])
            }));
            avail.push(
                episodes
                    .iter()
                    .map(|e| e.avail.get(t).cloned().unwrap_or_else(|| all_avail.clone()))
                    .collect(),
            );
        }
        let actions = (0..t_max)
            .map(|t| {
                episodes
                    .iter()
                    .map(|e| e.actions.get(t).cloned().unwrap_or_else(|| vec![0; n]))
                    .collect()
            })
            .collect();
        let rewards = Mat::from_shape_fn((t_max, b), |(t, i)| episodes[i].rewards.get(t).copied().unwrap_or(0.0));
        let terminal = Mat::from_shape_fn((t_max, b), |(t, i)| {
            f64::from(u8::from(episodes[i].dones.get(t).copied().unwrap_or(false)))
        });
        let mask = Mat::from_shape_fn((t_max, b), |(t, i)| f64::from(u8::from(t < lens[i])));
        Ok(Self {
            batch_size: b,
            max_len: t_max,
            lens,
            obs,
            states,
            avail,
            actions,
            rewards,
            terminal,
            mask,
        })
    }

    /// Mask as an R×1 column over rows `t·B + b`.
    pub fn mask_column(&self) -> Mat {
        column(&self.mask)
    }

    pub fn valid_steps(&self) -> usize {
        self.lens.iter().sum()
    }
}

/// Aggregator inputs of the real-state lookahead: for `i = 1..=k`, the
/// R × state_dim matrix whose row `(t, b)` is `s_{t+offset+i}` of episode `b`,
/// or zeros once that step lies past the end of the episode.
pub fn lookahead_states(batch: &Batch, offset: usize, k: usize) -> Vec<Mat> {
    let (t_len, b) = (batch.max_len, batch.batch_size);
    let s = batch.states[0].ncols();
    (1..=k)
        .map(|i| {
            Mat::from_shape_fn((t_len * b, s), |(row, j)| {
                let (tp, bi) = (row / b + offset + i, row % b);
                if tp <= batch.lens[bi] {
                    batch.states[tp][[bi, j]]
                } else {
                    0.0
                }
            })
        })
        .collect()
}

/// Flattens a T × B matrix into a (T·B) × 1 column, time-major.
pub(crate) fn column(m: &Mat) -> Mat {
    let (t, b) = m.dim();
    Mat::from_shape_fn((t * b, 1), |(r, _)| m[[r / b, r % b]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_env, EnvKind, PredatorPreyParams};

    fn episodes() -> (EnvSpec, Vec<EpisodeRecord>) {
        let mut env = make_env(&EnvKind::PredatorPrey(PredatorPreyParams::default())).unwrap();
        let spec = env.spec().clone();
        let eps = (0..3)
            .map(|seed| {
                let mut ep = EpisodeRecord::start(seed, env.reset(seed));
                for _ in 0..(seed as usize + 2) {
                    let r = env.step(&[0, 0]).unwrap();
                    assert!(!r.done);
                    ep.push(vec![0, 0], r);
                }
                // cut short, as at the time limit
                *ep.dones.last_mut().unwrap() = true;
                ep
            })
            .collect();
        (spec, eps)
    }

    #[test]
    fn pads_to_longest_and_masks() {
        let (spec, eps) = episodes();
        let refs: Vec<&EpisodeRecord> = eps.iter().collect();
        let batch = Batch::new(&refs, &spec, None).unwrap();
        assert_eq!(batch.max_len, 4);
        assert_eq!(batch.obs.len(), 5);
        assert_eq!(batch.actions.len(), 4);
        assert_eq!(batch.mask.column(0).to_vec(), vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(batch.valid_steps(), 2 + 3 + 4);
        assert!(batch.avail[4][0].iter().flatten().all(|&a| a));
        let padded = Batch::new(&refs, &spec, Some(7)).unwrap();
        assert_eq!(padded.max_len, 7);
        assert_eq!(padded.mask.sum(), batch.mask.sum());
        assert_eq!(column(&batch.mask).len(), 12);
    }

    #[test]
    fn lookahead_reads_next_states_and_pads_the_tail() {
        let (spec, eps) = episodes();
        let refs: Vec<&EpisodeRecord> = eps.iter().collect();
        let batch = Batch::new(&refs, &spec, None).unwrap();
        let la = lookahead_states(&batch, 0, 3);
        assert_eq!(la.len(), 3);
        // episode 2 has 4 steps; row t=0 consumes s_1, s_2, s_3
        let row = 2;
        for i in 0..3 {
            assert_eq!(la[i].row(row).to_vec(), eps[2].states[i + 1]);
        }
        // at its last step t=3: one real state s_4, then two zero pads
        let row = 3 * 3 + 2;
        assert_eq!(la[0].row(row).to_vec(), eps[2].states[4]);
        assert!(la[1].row(row).iter().chain(la[2].row(row).iter()).all(|&x| x == 0.0));
    }
}
