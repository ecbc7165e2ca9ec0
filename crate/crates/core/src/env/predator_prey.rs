use super::{check_joint_action, EnvSpec, Environment, StepResult};
use crate::error::{usage, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const STAY: usize = 0;
pub const UP: usize = 1;
pub const DOWN: usize = 2;
pub const LEFT: usize = 3;
pub const RIGHT: usize = 4;
const N_ACTIONS: usize = 5;
const CHANNELS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredatorPreyParams {
    pub grid: usize,
    pub n_agents: usize,
    pub n_prey: usize,
    pub sight: usize,
    pub episode_limit: usize,
    pub capture_bonus: f64,
    /// Reward per predator standing within one step of a live prey.
    pub shaping: f64,
    /// Predators that must be within one step of a prey at once to catch it.
    pub capture_needed: usize,
    /// Chance per step that a live prey tries to move.
    pub prey_move_prob: f64,
}

impl Default for PredatorPreyParams {
    fn default() -> Self {
        Self {
            grid: 7,
            n_agents: 2,
            n_prey: 1,
            sight: 2,
            episode_limit: 30,
            capture_bonus: 10.0,
            shaping: 0.1,
            capture_needed: 2,
            prey_move_prob: 0.5,
        }
    }
}

type Pos = (usize, usize);

/// Partially observable pursuit on a square grid. Predators see a
/// `(2·sight+1)²` window with channels for other predators, prey and
/// off-grid cells, plus their own normalized coordinates. Moves off the grid
/// are masked out; staying is always allowed.
#[derive(Clone, Debug)]
pub struct PredatorPrey {
    params: PredatorPreyParams,
    spec: EnvSpec,
    predators: Vec<Pos>,
    prey: Vec<Pos>,
    alive: Vec<bool>,
    t: usize,
    done: bool,
    rng: ChaCha8Rng,
}

impl PredatorPrey {
    pub fn new(params: PredatorPreyParams) -> Result<Self> {
        let cells = params.grid * params.grid;
        if params.grid < 2 || params.n_agents == 0 || params.n_prey == 0 {
            return Err(usage("predator-prey needs grid ≥ 2, ≥ 1 agent and ≥ 1 prey"));
        }
        if params.n_agents + params.n_prey > cells {
            return Err(usage("more entities than grid cells"));
        }
        if params.capture_needed == 0 || params.capture_needed > params.n_agents {
            return Err(usage("capture_needed must be in 1..=n_agents"));
        }
        if params.episode_limit == 0 || !(0.0..=1.0).contains(&params.prey_move_prob) {
            return Err(usage("invalid episode_limit or prey_move_prob"));
        }
        let window = 2 * params.sight + 1;
        let spec = EnvSpec {
            n_agents: params.n_agents,
            n_actions: N_ACTIONS,
            obs_dim: CHANNELS * window * window + 2,
            state_dim: 2 * params.n_agents + 3 * params.n_prey,
            episode_limit: params.episode_limit,
            has_action_mask: true,
        };
        Ok(Self {
            params,
            spec,
            predators: Vec::new(),
            prey: Vec::new(),
            alive: Vec::new(),
            t: 0,
            done: true,
            rng: ChaCha8Rng::seed_from_u64(0),
        })
    }

    pub fn params(&self) -> &PredatorPreyParams {
        &self.params
    }

    pub fn predators(&self) -> &[Pos] {
        &self.predators
    }

    pub fn prey(&self) -> &[Pos] {
        &self.prey
    }

    /// Places entities directly; used to script scenarios.
    pub fn set_positions(&mut self, predators: Vec<Pos>, prey: Vec<Pos>) {
        assert_eq!(predators.len(), self.params.n_agents);
        assert_eq!(prey.len(), self.params.n_prey);
        self.predators = predators;
        self.alive = vec![true; prey.len()];
        self.prey = prey;
        self.t = 0;
        self.done = false;
    }

    fn moved(&self, (x, y): Pos, action: usize) -> Option<Pos> {
        let g = self.params.grid;
        match action {
            STAY => Some((x, y)),
            UP if y > 0 => Some((x, y - 1)),
            DOWN if y + 1 < g => Some((x, y + 1)),
            LEFT if x > 0 => Some((x - 1, y)),
            RIGHT if x + 1 < g => Some((x + 1, y)),
            _ => None,
        }
    }

    fn avail(&self) -> Vec<Vec<bool>> {
        self.predators
            .iter()
            .map(|&p| (0..N_ACTIONS).map(|a| self.moved(p, a).is_some()).collect())
            .collect()
    }

    fn norm(&self, v: usize) -> f64 {
        v as f64 / (self.params.grid - 1) as f64
    }

    fn observe(&self, reward: f64) -> StepResult {
        let r = self.params.sight as isize;
        let window = (2 * r + 1) as usize;
        let g = self.params.grid as isize;
        let obs = self
            .predators
            .iter()
            .enumerate()
            .map(|(me, &(px, py))| {
                let mut o = vec![0.0; self.spec.obs_dim];
                for dy in -r..=r {
                    for dx in -r..=r {
                        let (cx, cy) = (px as isize + dx, py as isize + dy);
                        let cell = ((dy + r) as usize * window + (dx + r) as usize) * CHANNELS;
                        if cx < 0 || cy < 0 || cx >= g || cy >= g {
                            o[cell + 2] = 1.0;
                            continue;
                        }
                        let here = (cx as usize, cy as usize);
                        if self
                            .predators
                            .iter()
                            .enumerate()
                            .any(|(j, &q)| j != me && q == here)
                        {
                            o[cell] = 1.0;
                        }
                        if self
                            .prey
                            .iter()
                            .zip(&self.alive)
                            .any(|(&q, &alive)| alive && q == here)
                        {
                            o[cell + 1] = 1.0;
                        }
                    }
                }
                let n = o.len();
                o[n - 2] = self.norm(px);
                o[n - 1] = self.norm(py);
                o
            })
            .collect();
        let mut state = Vec::with_capacity(self.spec.state_dim);
        for &(x, y) in &self.predators {
            state.push(self.norm(x));
            state.push(self.norm(y));
        }
        for (&(x, y), &alive) in self.prey.iter().zip(&self.alive) {
            state.push(self.norm(x));
            state.push(self.norm(y));
            state.push(if alive { 1.0 } else { 0.0 });
        }
        StepResult {
            obs,
            state,
            reward,
            done: self.done,
            avail_actions: self.avail(),
        }
    }

    fn near(a: Pos, b: Pos) -> bool {
        a.0.abs_diff(b.0) + a.1.abs_diff(b.1) <= 1
    }
}

impl Environment for PredatorPrey {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> StepResult {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let g = self.params.grid;
        let mut taken: Vec<Pos> = Vec::new();
        let total = self.params.n_agents + self.params.n_prey;
        while taken.len() < total {
            let p = (self.rng.random_range(0..g), self.rng.random_range(0..g));
            if !taken.contains(&p) {
                taken.push(p);
            }
        }
        let prey = taken.split_off(self.params.n_agents);
        self.set_positions(taken, prey);
        self.observe(0.0)
    }

    fn success(&self) -> Option<bool> {
        Some(self.alive.iter().all(|&a| !a))
    }

    fn step(&mut self, joint_action: &[usize]) -> Result<StepResult> {
        let avail = self.avail();
        check_joint_action(&self.spec, self.done, joint_action, &avail)?;
        for (p, &a) in self.predators.iter_mut().zip(joint_action) {
            let (x, y) = *p;
            *p = match a {
                UP => (x, y - 1),
                DOWN => (x, y + 1),
                LEFT => (x - 1, y),
                RIGHT => (x + 1, y),
                _ => (x, y),
            };
        }

        let mut reward = 0.0;
        for i in 0..self.prey.len() {
            if !self.alive[i] {
                continue;
            }
            let close = self
                .predators
                .iter()
                .filter(|&&p| Self::near(p, self.prey[i]))
                .count();
            reward += self.params.shaping * close as f64;
            if close >= self.params.capture_needed {
                self.alive[i] = false;
                reward += self.params.capture_bonus;
            }
        }

        // fixed draws per prey per step keep the random stream independent of
        // the agents' actions
        for i in 0..self.prey.len() {
            let roll: f64 = self.rng.random();
            let dir = self.rng.random_range(0..N_ACTIONS);
            if !self.alive[i] || roll >= self.params.prey_move_prob {
                continue;
            }
            if let Some(next) = self.moved(self.prey[i], dir) {
                let blocked = self.predators.contains(&next)
                    || self
                        .prey
                        .iter()
                        .enumerate()
                        .any(|(j, &q)| j != i && self.alive[j] && q == next);
                if !blocked {
                    self.prey[i] = next;
                }
            }
        }

        self.t += 1;
        self.done = self.alive.iter().all(|a| !a) || self.t >= self.params.episode_limit;
        Ok(self.observe(reward))
    }
}
