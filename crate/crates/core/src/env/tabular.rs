use super::{check_joint_action, EnvSpec, Environment, StepResult};
use crate::error::{usage, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A Dec-POMDP small enough to enumerate. Joint actions are indexed with
/// agent 0 as the most significant digit: `ja = Σ a_i · |U|^(n-1-i)`.
#[derive(Clone, Debug)]
pub struct TabularDecPomdp {
    pub n_agents: usize,
    pub n_actions: usize,
    pub start: usize,
    /// `transitions[s][ja]` lists `(next_state, probability)`.
    pub transitions: Vec<Vec<Vec<(usize, f64)>>>,
    pub rewards: Vec<Vec<f64>>,
    pub terminal: Vec<bool>,
    /// `observations[s][agent]`; defaults to the one-hot state for everyone.
    pub observations: Vec<Vec<Vec<f64>>>,
    spec: EnvSpec,
    current: usize,
    t: usize,
    done: bool,
    rng: ChaCha8Rng,
}

impl TabularDecPomdp {
    pub fn new(
        n_agents: usize,
        n_actions: usize,
        start: usize,
        transitions: Vec<Vec<Vec<(usize, f64)>>>,
        rewards: Vec<Vec<f64>>,
        terminal: Vec<bool>,
        horizon: usize,
    ) -> Result<Self> {
        let n_states = transitions.len();
        let spec = EnvSpec {
            n_agents,
            n_actions,
            obs_dim: n_states,
            state_dim: n_states,
            episode_limit: horizon,
            has_action_mask: false,
        };
        spec.validate()?;
        let joint = spec.joint_actions();
        if start >= n_states || rewards.len() != n_states || terminal.len() != n_states {
            return Err(usage("tabular model tables disagree on the state count"));
        }
        for (s, row) in transitions.iter().enumerate() {
            if row.len() != joint || rewards[s].len() != joint {
                return Err(usage(format!("state {s} must list {joint} joint actions")));
            }
            for outcomes in row {
                let total: f64 = outcomes.iter().map(|o| o.1).sum();
                if (total - 1.0).abs() > 1e-9 || outcomes.iter().any(|o| o.0 >= n_states) {
                    return Err(usage(format!("state {s} has an invalid transition")));
                }
            }
        }
        let observations = (0..n_states)
            .map(|s| vec![one_hot(s, n_states); n_agents])
            .collect();
        Ok(Self {
            n_agents,
            n_actions,
            start,
            transitions,
            rewards,
            terminal,
            observations,
            spec,
            current: start,
            t: 0,
            done: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        })
    }

    /// Three nodes, two agents, two actions. Coordinated `(1,1)` moves right
    /// along 0 → 1 → 2 (paying 2 on reaching node 2), coordinated `(0,0)` at
    /// node 0 pays 1, and at node 2 any coordinated action pays 5. Any
    /// miscoordination pays nothing and sends node 2 back to node 0.
    /// Agent 0 sees the node; agent 1 only sees whether it is at node 2.
    pub fn three_node() -> Self {
        let ja = |a: usize, b: usize| a * 2 + b;
        let mut transitions = vec![vec![Vec::new(); 4]; 3];
        let mut rewards = vec![vec![0.0; 4]; 3];
        for a in 0..2 {
            for b in 0..2 {
                let j = ja(a, b);
                let coordinated = a == b;
                transitions[0][j] = vec![(if a == 1 && b == 1 { 1 } else { 0 }, 1.0)];
                rewards[0][j] = if a == 0 && b == 0 { 1.0 } else { 0.0 };
                transitions[1][j] = vec![(
                    match (a, b) {
                        (1, 1) => 2,
                        (0, 0) => 0,
                        _ => 1,
                    },
                    1.0,
                )];
                rewards[1][j] = if a == 1 && b == 1 { 2.0 } else { 0.0 };
                transitions[2][j] = vec![(if coordinated { 2 } else { 0 }, 1.0)];
                rewards[2][j] = if coordinated { 5.0 } else { 0.0 };
            }
        }
        let mut env = Self::new(2, 2, 0, transitions, rewards, vec![false; 3], 4)
            .expect("valid preset");
        for s in 0..3 {
            env.observations[s][1] = vec![if s == 2 { 1.0 } else { 0.0 }, 0.0, 0.0];
        }
        env
    }

    pub fn n_states(&self) -> usize {
        self.transitions.len()
    }

    pub fn horizon(&self) -> usize {
        self.spec.episode_limit
    }

    pub fn joint_index(&self, joint_action: &[usize]) -> usize {
        joint_action
            .iter()
            .fold(0, |acc, &a| acc * self.n_actions + a)
    }

    fn observe(&self, reward: f64) -> StepResult {
        StepResult {
            obs: self.observations[self.current].clone(),
            state: one_hot(self.current, self.n_states()),
            reward,
            done: self.done,
            avail_actions: vec![vec![true; self.n_actions]; self.n_agents],
        }
    }
}

fn one_hot(i: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

impl Environment for TabularDecPomdp {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> StepResult {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.current = self.start;
        self.t = 0;
        self.done = self.terminal[self.start];
        self.observe(0.0)
    }

    fn step(&mut self, joint_action: &[usize]) -> Result<StepResult> {
        let avail = vec![vec![true; self.n_actions]; self.n_agents];
        check_joint_action(&self.spec, self.done, joint_action, &avail)?;
        let ja = self.joint_index(joint_action);
        let reward = self.rewards[self.current][ja];
        let outcomes = &self.transitions[self.current][ja];
        let u: f64 = self.rng.random();
        let mut acc = 0.0;
        let mut next = outcomes.last().expect("non-empty").0;
        for &(s, p) in outcomes {
            acc += p;
            if u < acc {
                next = s;
                break;
            }
        }
        self.current = next;
        self.t += 1;
        self.done = self.terminal[next] || self.t >= self.spec.episode_limit;
        Ok(self.observe(reward))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_state_is_one_hot_start() {
        let mut env = TabularDecPomdp::three_node();
        let r = env.reset(0);
        assert_eq!(r.state, vec![1.0, 0.0, 0.0]);
        assert_eq!(r.reward, 0.0);
        assert!(!r.done);
    }

    #[test]
    fn optimal_plan_collects_expected_rewards() {
        let mut env = TabularDecPomdp::three_node();
        env.reset(0);
        let rewards: Vec<f64> = (0..4)
            .map(|_| env.step(&[1, 1]).unwrap().reward)
            .collect();
        assert_eq!(rewards, vec![0.0, 2.0, 5.0, 5.0]);
    }
}
