//! Exactly enumerable cooperative matrix games.

use super::{ActionSpace, CooperativeEnv, EnvState, GroupSpec, JointAction, JointObservation, StepOutcome};
use crate::error::{Error, Result};

/// Largest payoff tensor the enumerators accept.
pub const MAX_ENUMERATION: u128 = 1_000_000;

/// Stateless repeated game with a payoff over every joint discrete action.
///
/// Joint actions are indexed lexicographically with agent 0 most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactGame {
    n_agents: usize,
    n_actions: usize,
    payoff: Vec<f64>,
    horizon: usize,
    groups: GroupSpec,
}

fn table_size(n_agents: usize, n_actions: usize) -> u128 {
    (n_actions as u128).checked_pow(n_agents as u32).unwrap_or(u128::MAX)
}

impl ExactGame {
    pub fn new(n_agents: usize, n_actions: usize, payoff: Vec<f64>, horizon: usize, groups: GroupSpec) -> Result<Self> {
        let entries = table_size(n_agents, n_actions);
        if entries > MAX_ENUMERATION {
            return Err(Error::TooLarge {
                entries,
                limit: MAX_ENUMERATION,
            });
        }
        if n_agents == 0 || n_actions < 2 {
            return Err(Error::Config("games need at least one agent and two actions".into()));
        }
        if payoff.len() as u128 != entries {
            return Err(Error::Shape(format!("payoff has {} entries, expected {entries}", payoff.len())));
        }
        if payoff.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("payoff tensor".into()));
        }
        if groups.n_agents() != n_agents {
            return Err(Error::Config("group spec size does not match agent count".into()));
        }
        if horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        Ok(Self {
            n_agents,
            n_actions,
            payoff,
            horizon,
            groups,
        })
    }

    /// Builds the payoff tensor by evaluating `f` on every joint action.
    pub fn from_fn(
        n_agents: usize,
        n_actions: usize,
        horizon: usize,
        groups: GroupSpec,
        f: impl Fn(&[usize]) -> f64,
    ) -> Result<Self> {
        let entries = table_size(n_agents, n_actions);
        if entries > MAX_ENUMERATION {
            return Err(Error::TooLarge {
                entries,
                limit: MAX_ENUMERATION,
            });
        }
        let payoff = (0..entries as usize)
            .map(|idx| f(&decode(idx, n_agents, n_actions)))
            .collect();
        Self::new(n_agents, n_actions, payoff, horizon, groups)
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn groups(&self) -> &GroupSpec {
        &self.groups
    }

    pub fn payoff_table(&self) -> &[f64] {
        &self.payoff
    }

    pub fn index_of(&self, joint: &[usize]) -> usize {
        joint.iter().fold(0, |acc, &a| acc * self.n_actions + a)
    }

    pub fn joint_of(&self, index: usize) -> Vec<usize> {
        decode(index, self.n_agents, self.n_actions)
    }

    pub fn payoff(&self, joint: &[usize]) -> f64 {
        self.payoff[self.index_of(joint)]
    }

    /// Full payoff view, the lexicographically smallest maximising joint action and the maximum.
    pub fn enumerate(&self) -> Result<(&[f64], Vec<usize>, f64)> {
        let entries = table_size(self.n_agents, self.n_actions);
        if entries > MAX_ENUMERATION {
            return Err(Error::TooLarge {
                entries,
                limit: MAX_ENUMERATION,
            });
        }
        let mut best = 0;
        for (idx, &v) in self.payoff.iter().enumerate() {
            if v > self.payoff[best] {
                best = idx;
            }
        }
        Ok((&self.payoff, self.joint_of(best), self.payoff[best]))
    }

    pub fn max_payoff(&self) -> f64 {
        self.payoff.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Same game with agents `a` and `b` exchanging roles in the payoff.
    pub fn swap_agents(&self, a: usize, b: usize) -> Result<Self> {
        Self::from_fn(self.n_agents, self.n_actions, self.horizon, self.groups.clone(), |joint| {
            let mut j = joint.to_vec();
            j.swap(a, b);
            self.payoff(&j)
        })
    }
}

fn decode(mut index: usize, n_agents: usize, n_actions: usize) -> Vec<usize> {
    let mut out = vec![0; n_agents];
    for slot in out.iter_mut().rev() {
        *slot = index % n_actions;
        index /= n_actions;
    }
    out
}

/// Three agents in groups (A, B, A) pull one of three levers; lever 0 is the no-op.
///
/// Each agent earns +2 for its group's lever and -1 for the other lever; a team
/// bonus of +4 is paid when everyone pulls its group's lever. The optimum
/// (2, 1, 2) pays 10 and the all-no-op action pays 0.
#[derive(Debug, Clone)]
pub struct SignalLever {
    game: ExactGame,
}

/// Lever each group is rewarded for.
pub const SIGNAL_LEVER_TARGETS: [usize; 2] = [2, 1];

impl SignalLever {
    pub fn standard() -> Self {
        Self::with_horizon(1)
    }

    pub fn with_horizon(horizon: usize) -> Self {
        let groups = GroupSpec::from_assignment(vec![0, 1, 0]).expect("valid layout");
        let g = groups.clone();
        let game = ExactGame::from_fn(3, 3, horizon, groups, move |joint| {
            let mut r = 0.0;
            let mut all = true;
            for (i, &a) in joint.iter().enumerate() {
                let target = SIGNAL_LEVER_TARGETS[g.group_of(i)];
                if a == target {
                    r += 2.0;
                } else {
                    all = false;
                    if a != 0 {
                        r -= 1.0;
                    }
                }
            }
            if all {
                r += 4.0;
            }
            r
        })
        .expect("3x3x3 game is enumerable");
        Self { game }
    }

    pub fn from_game(game: ExactGame) -> Self {
        Self { game }
    }

    pub fn game(&self) -> &ExactGame {
        &self.game
    }

    /// The joint action the payoff was built around.
    pub fn designed_optimum(&self) -> Vec<usize> {
        (0..self.game.n_agents)
            .map(|i| SIGNAL_LEVER_TARGETS[self.game.groups.group_of(i)])
            .collect()
    }

    fn observe(&self) -> JointObservation {
        let n = self.game.n_agents;
        JointObservation(
            (0..n)
                .map(|i| {
                    let mut o = vec![0.0; n];
                    o[i] = 1.0;
                    o
                })
                .collect(),
        )
    }

    fn state_at(&self, t: usize) -> EnvState {
        EnvState {
            features: vec![t as f64 / self.game.horizon as f64],
            t,
        }
    }
}

impl CooperativeEnv for SignalLever {
    fn name(&self) -> &'static str {
        "signal_lever"
    }

    fn n_agents(&self) -> usize {
        self.game.n_agents
    }

    fn obs_dim(&self) -> usize {
        self.game.n_agents
    }

    fn state_dim(&self) -> usize {
        1
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete { n: self.game.n_actions }
    }

    fn horizon(&self) -> usize {
        self.game.horizon
    }

    fn groups(&self) -> &GroupSpec {
        &self.game.groups
    }

    fn reset(&self, _seed: u64) -> (EnvState, JointObservation) {
        (self.state_at(0), self.observe())
    }

    fn step(&self, state: &EnvState, action: &JointAction) -> Result<StepOutcome> {
        if state.t >= self.game.horizon {
            return Err(Error::InvalidAction(format!("episode already finished at t = {}", state.t)));
        }
        let joint = match action {
            JointAction::Discrete(a) if a.len() == self.game.n_agents => a,
            _ => return Err(Error::InvalidAction("expected one discrete action per agent".into())),
        };
        if let Some((i, a)) = joint.iter().enumerate().find(|(_, &a)| a >= self.game.n_actions) {
            return Err(Error::InvalidAction(format!("agent {i}: lever {a} out of range")));
        }
        let t = state.t + 1;
        Ok(StepOutcome {
            state: self.state_at(t),
            observation: self.observe(),
            reward: self.game.payoff(joint),
            done: t == self.game.horizon,
        })
    }

    fn is_success_reward(&self, reward: f64) -> Option<bool> {
        Some(reward >= self.game.max_payoff())
    }
}
