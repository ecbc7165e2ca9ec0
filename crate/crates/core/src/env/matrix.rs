use super::{check_joint_action, EnvSpec, Environment, StepResult, TabularDecPomdp};
use crate::error::{usage, Result};

/// Two-agent cooperative matrix game. Both agents receive `payoff[i][j]` for
/// the joint action `(i, j)`. With `rounds == 1` it is a one-shot game;
/// otherwise the same stage game is repeated.
#[derive(Clone, Debug)]
pub struct MatrixGame {
    payoff: Vec<Vec<f64>>,
    rounds: usize,
    spec: EnvSpec,
    t: usize,
    done: bool,
}

impl MatrixGame {
    pub fn new(payoff: Vec<Vec<f64>>, rounds: usize) -> Result<Self> {
        let n_actions = payoff.len();
        if n_actions == 0 || payoff.iter().any(|r| r.len() != n_actions) {
            return Err(usage("payoff matrix must be square and non-empty"));
        }
        if payoff.iter().flatten().any(|x| !x.is_finite()) {
            return Err(usage("payoff entries must be finite"));
        }
        if rounds == 0 {
            return Err(usage("rounds must be at least 1"));
        }
        let spec = EnvSpec {
            n_agents: 2,
            n_actions,
            obs_dim: 1,
            state_dim: 1,
            episode_limit: rounds,
            has_action_mask: false,
        };
        Ok(Self {
            payoff,
            rounds,
            spec,
            t: 0,
            done: false,
        })
    }

    pub fn payoff(&self) -> &[Vec<f64>] {
        &self.payoff
    }

    /// The same game as an enumerable model for the oracle.
    pub fn as_tabular(&self) -> TabularDecPomdp {
        let n = self.spec.n_actions;
        let joint = n * n;
        // state r = rounds already played; state `rounds` is terminal
        let states = self.rounds + 1;
        let mut transitions = vec![vec![Vec::new(); joint]; states];
        let mut rewards = vec![vec![0.0; joint]; states];
        for s in 0..self.rounds {
            for ja in 0..joint {
                transitions[s][ja] = vec![(s + 1, 1.0)];
                rewards[s][ja] = self.payoff[ja / n][ja % n];
            }
        }
        for ja in 0..joint {
            transitions[self.rounds][ja] = vec![(self.rounds, 1.0)];
        }
        let mut terminal = vec![false; states];
        terminal[self.rounds] = true;
        TabularDecPomdp::new(2, n, 0, transitions, rewards, terminal, self.rounds)
            .expect("matrix game is a valid tabular model")
    }

    fn observe(&self, reward: f64) -> StepResult {
        StepResult {
            obs: vec![vec![0.0]; 2],
            state: vec![(self.rounds - self.t) as f64 / self.rounds as f64],
            reward,
            done: self.done,
            avail_actions: vec![vec![true; self.spec.n_actions]; 2],
        }
    }
}

impl Environment for MatrixGame {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _seed: u64) -> StepResult {
        self.t = 0;
        self.done = false;
        self.observe(0.0)
    }

    fn step(&mut self, joint_action: &[usize]) -> Result<StepResult> {
        let avail = vec![vec![true; self.spec.n_actions]; 2];
        check_joint_action(&self.spec, self.done, joint_action, &avail)?;
        let reward = self.payoff[joint_action[0]][joint_action[1]];
        self.t += 1;
        self.done = self.t >= self.rounds;
        Ok(self.observe(reward))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn game() -> MatrixGame {
        MatrixGame::new(
            vec![
                vec![10.0, 0.0, 0.0],
                vec![0.0, 2.0, 0.0],
                vec![0.0, 0.0, 5.0],
            ],
            1,
        )
        .unwrap()
    }

    #[test]
    fn one_shot_pays_matrix_entry_and_ends() {
        let mut g = game();
        for seed in [0, 5, 99] {
            let r0 = g.reset(seed);
            assert_eq!(r0.obs, vec![vec![0.0], vec![0.0]]);
            assert_eq!(r0.reward, 0.0);
            assert!(!r0.done);
            let r = g.step(&[2, 2]).unwrap();
            assert_eq!(r.reward, 5.0);
            assert!(r.done);
        }
        g.reset(0);
        assert_eq!(g.step(&[1, 2]).unwrap().reward, 0.0);
    }

    #[test]
    fn rejects_bad_usage() {
        let mut g = game();
        g.reset(0);
        assert!(g.step(&[3, 0]).is_err());
        assert!(g.step(&[0]).is_err());
        g.step(&[0, 0]).unwrap();
        assert!(g.step(&[0, 0]).is_err());
        assert!(MatrixGame::new(vec![vec![1.0, 2.0]], 1).is_err());
    }

    #[test]
    fn repeated_game_runs_all_rounds() {
        let mut g = MatrixGame::new(vec![vec![1.0, 0.0], vec![0.0, 3.0]], 4).unwrap();
        g.reset(0);
        let mut total = 0.0;
        for i in 0..4 {
            let r = g.step(&[1, 1]).unwrap();
            total += r.reward;
            assert_eq!(r.done, i == 3);
        }
        assert_eq!(total, 12.0);
    }
}
