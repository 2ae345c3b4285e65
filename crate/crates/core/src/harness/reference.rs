//! Reference returns on the evaluation layouts, used to normalize learning scores.

use rand::Rng;

use super::train::EVAL_SEED_BASE;
use crate::envs::{ActionSpace, CooperativeEnv, Environment, JointAction, TeamReachHet};
use crate::error::Result;
use crate::rng::{substream, Stream};

/// Mean return of the scripted greedy-assignment controller over the
/// evaluation layouts `EVAL_SEED_BASE..EVAL_SEED_BASE + episodes`.
pub fn scripted_return(env: &TeamReachHet, episodes: usize) -> f64 {
    let total: f64 = (0..episodes as u64).map(|k| env.scripted_oracle_return(EVAL_SEED_BASE + k)).sum();
    total / episodes as f64
}

/// Mean return of uniformly random actions over the evaluation layouts.
pub fn random_return(env: &Environment, episodes: usize) -> Result<f64> {
    let mut rng = substream(0, Stream::Eval);
    let n = env.n_agents();
    let mut total = 0.0;
    for k in 0..episodes as u64 {
        let (mut state, _) = env.reset(EVAL_SEED_BASE + k);
        loop {
            let action = match env.action_space() {
                ActionSpace::Continuous { dim } => JointAction::Continuous(
                    (0..n)
                        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect())
                        .collect(),
                ),
                ActionSpace::Discrete { n: m } => JointAction::Discrete((0..n).map(|_| rng.random_range(0..m)).collect()),
            };
            let out = env.step(&state, &action)?;
            total += out.reward;
            state = out.state;
            if out.done {
                break;
            }
        }
    }
    Ok(total / episodes as f64)
}

/// `(r - random) / (scripted - random)`: 0 at the random policy, 1 at the scripted controller.
pub fn normalized_score(r: f64, random: f64, scripted: f64) -> f64 {
    (r - random) / (scripted - random)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::TeamReachConfig;

    #[test]
    fn scripted_controller_beats_random_on_eval_layouts() {
        let tr = TeamReachHet::new(TeamReachConfig::default()).unwrap();
        let env = Environment::TeamReach(tr.clone());
        let s = scripted_return(&tr, 10);
        let r = random_return(&env, 10).unwrap();
        assert!(s > r + 10.0, "scripted {s} random {r}");
        assert_eq!(normalized_score(s, r, s), 1.0);
        assert_eq!(normalized_score(r, r, s), 0.0);
    }
}
