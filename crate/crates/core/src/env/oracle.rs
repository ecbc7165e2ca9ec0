use super::TabularDecPomdp;
use crate::error::{Error, Result};

/// Largest `(state, joint action)` table the oracle will enumerate.
pub const ORACLE_MAX_PAIRS: usize = 1_000_000;

/// Exact optimal expected discounted return from the start state over
/// `horizon` steps, by backward induction over every joint action.
///
/// Terminal states absorb with value zero. For deterministic models with a
/// fixed start state the centralized optimum is attained by an open-loop joint
/// plan, so it is also the decentralized optimum.
pub fn brute_force_optimal_return(env: &TabularDecPomdp, horizon: usize, gamma: f64) -> Result<f64> {
    let n_states = env.n_states();
    let joint = (0..env.n_agents).try_fold(1usize, |acc, _| acc.checked_mul(env.n_actions));
    let pairs = joint.and_then(|j| j.checked_mul(n_states));
    let (joint, _) = match (joint, pairs) {
        (Some(j), Some(p)) if p <= ORACLE_MAX_PAIRS => (j, p),
        _ => {
            return Err(Error::Capacity(format!(
                "{n_states} states × {}^{} joint actions exceeds {ORACLE_MAX_PAIRS} pairs",
                env.n_actions, env.n_agents
            )))
        }
    };

    let mut value = vec![0.0; n_states];
    for _ in 0..horizon {
        let next: Vec<f64> = (0..n_states)
            .map(|s| {
                if env.terminal[s] {
                    return 0.0;
                }
                (0..joint)
                    .map(|ja| {
                        let future: f64 = env.transitions[s][ja]
                            .iter()
                            .map(|&(s2, p)| p * value[s2])
                            .sum();
                        env.rewards[s][ja] + gamma * future
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        value = next;
    }
    Ok(value[env.start])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::MatrixGame;

    #[test]
    fn one_shot_matrix_game_is_max_entry() {
        let g = MatrixGame::new(
            vec![vec![1.0, 7.0, 0.0], vec![0.0, 2.0, 3.0], vec![-1.0, 0.0, 5.0]],
            1,
        )
        .unwrap();
        let v = brute_force_optimal_return(&g.as_tabular(), 1, 0.99).unwrap();
        assert_eq!(v, 7.0);
    }

    #[test]
    fn two_step_chain() {
        // 0 -> 1 -> 2 (terminal) paying 0 then 10
        let env = TabularDecPomdp::new(
            1,
            1,
            0,
            vec![vec![vec![(1, 1.0)]], vec![vec![(2, 1.0)]], vec![vec![(2, 1.0)]]],
            vec![vec![0.0], vec![10.0], vec![0.0]],
            vec![false, false, true],
            2,
        )
        .unwrap();
        let v = brute_force_optimal_return(&env, 2, 0.99).unwrap();
        assert!((v - 9.9).abs() < 1e-12);
    }

    #[test]
    fn stochastic_transitions_take_expectation() {
        // single action, 50/50 to a paying or a dead state
        let env = TabularDecPomdp::new(
            1,
            1,
            0,
            vec![
                vec![vec![(1, 0.5), (2, 0.5)]],
                vec![vec![(2, 1.0)]],
                vec![vec![(2, 1.0)]],
            ],
            vec![vec![0.0], vec![4.0], vec![0.0]],
            vec![false, false, true],
            2,
        )
        .unwrap();
        let v = brute_force_optimal_return(&env, 2, 1.0).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_oversized_spaces() {
        let n_actions = 40;
        let n_agents = 4; // 40^4 = 2.56M joint actions
        let mut env = TabularDecPomdp::three_node();
        env.n_agents = n_agents;
        env.n_actions = n_actions;
        assert!(matches!(
            brute_force_optimal_return(&env, 1, 0.99),
            Err(Error::Capacity(_))
        ));
    }
}
