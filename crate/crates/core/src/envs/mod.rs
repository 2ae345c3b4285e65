//! Cooperative Dec-POMDP environments with a single shared reward.
//!
//! Two concrete tasks are provided: [`TeamReachHet`], a continuous 2-D
//! landmark-coverage task whose agent groups differ in gear ratio, and
//! [`SignalLever`], a stateless matrix game small enough to enumerate exactly.

mod signal_lever;
mod team_reach;

pub use signal_lever::{ExactGame, SignalLever, MAX_ENUMERATION};
pub use team_reach::{TeamReachConfig, TeamReachHet};

use crate::error::{Error, Result};

/// Partition of agents into parameter-sharing groups plus the agent order used
/// by sequential decompositions. Group ids are zero-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSpec {
    assignment: Vec<usize>,
    n_groups: usize,
    ordering: Vec<usize>,
}

impl GroupSpec {
    pub fn new(assignment: Vec<usize>, ordering: Vec<usize>) -> Result<Self> {
        let n = assignment.len();
        if n == 0 {
            return Err(Error::Config("group spec needs at least one agent".into()));
        }
        let n_groups = assignment.iter().max().map_or(0, |m| m + 1);
        for g in 0..n_groups {
            if !assignment.contains(&g) {
                return Err(Error::Config(format!("group {g} has no members")));
            }
        }
        if ordering.len() != n {
            return Err(Error::Config(format!("ordering has {} entries for {n} agents", ordering.len())));
        }
        let mut seen = vec![false; n];
        for &a in &ordering {
            if a >= n || seen[a] {
                return Err(Error::Config(format!("ordering {ordering:?} is not a permutation")));
            }
            seen[a] = true;
        }
        Ok(Self { assignment, n_groups, ordering })
    }

    /// Groups with identity ordering.
    pub fn from_assignment(assignment: Vec<usize>) -> Result<Self> {
        let n = assignment.len();
        Self::new(assignment, (0..n).collect())
    }

    /// One group per agent (no parameter sharing).
    pub fn no_sharing(n: usize) -> Self {
        Self::from_assignment((0..n).collect()).expect("valid")
    }

    /// A single group (full parameter sharing).
    pub fn full_sharing(n: usize) -> Self {
        Self::from_assignment(vec![0; n]).expect("valid")
    }

    pub fn n_agents(&self) -> usize {
        self.assignment.len()
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn group_of(&self, agent: usize) -> usize {
        self.assignment[agent]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn ordering(&self) -> &[usize] {
        &self.ordering
    }

    pub fn members(&self, group: usize) -> Vec<usize> {
        (0..self.n_agents()).filter(|&a| self.assignment[a] == group).collect()
    }

    pub fn with_ordering(&self, ordering: Vec<usize>) -> Result<Self> {
        Self::new(self.assignment.clone(), ordering)
    }
}

/// Per-agent action space; every agent of an environment shares it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSpace {
    /// Real vector in `[-1, 1]^dim`. The zero vector is the no-op.
    Continuous { dim: usize },
    /// Index in `0..n`; index 0 is the no-op.
    Discrete { n: usize },
}

impl ActionSpace {
    /// Width of one agent's slot in the flat critic encoding.
    pub fn slot_width(&self) -> usize {
        match *self {
            ActionSpace::Continuous { dim } => dim,
            ActionSpace::Discrete { n } => n,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ActionSpace::Discrete { .. })
    }

    /// Encoded no-op slot: zero vector, or the one-hot of index 0.
    pub fn noop_slot(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.slot_width()];
        if let ActionSpace::Discrete { .. } = self {
            v[0] = 1.0;
        }
        v
    }
}

/// Flat critic encoding of a joint action: one fixed-width slot per agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionLayout {
    pub n_agents: usize,
    pub space: ActionSpace,
}

impl ActionLayout {
    pub fn new(n_agents: usize, space: ActionSpace) -> Self {
        Self { n_agents, space }
    }

    pub fn slot_width(&self) -> usize {
        self.space.slot_width()
    }

    pub fn total_width(&self) -> usize {
        self.n_agents * self.space.slot_width()
    }

    pub fn slot(&self, agent: usize) -> std::ops::Range<usize> {
        let w = self.slot_width();
        agent * w..(agent + 1) * w
    }

    pub fn noop<T: crate::Scalar>(&self) -> Vec<T> {
        self.space.noop_slot().into_iter().map(T::lit).collect()
    }
}

/// Joint action of all agents.
#[derive(Debug, Clone, PartialEq)]
pub enum JointAction {
    Continuous(Vec<Vec<f64>>),
    Discrete(Vec<usize>),
}

impl JointAction {
    pub fn n_agents(&self) -> usize {
        match self {
            JointAction::Continuous(a) => a.len(),
            JointAction::Discrete(a) => a.len(),
        }
    }

    /// Flat critic encoding: concatenated continuous vectors or one-hot slots.
    pub fn encode(&self, space: ActionSpace) -> Result<Vec<f64>> {
        let width = space.slot_width();
        let mut out = Vec::with_capacity(width * self.n_agents());
        match (self, space) {
            (JointAction::Continuous(acts), ActionSpace::Continuous { dim }) => {
                for (i, a) in acts.iter().enumerate() {
                    if a.len() != dim {
                        return Err(Error::InvalidAction(format!("agent {i}: {} dims, expected {dim}", a.len())));
                    }
                    out.extend(a.iter().copied());
                }
            }
            (JointAction::Discrete(acts), ActionSpace::Discrete { n }) => {
                for (i, &a) in acts.iter().enumerate() {
                    if a >= n {
                        return Err(Error::InvalidAction(format!("agent {i}: index {a} outside 0..{n}")));
                    }
                    let mut slot = vec![0.0; n];
                    slot[a] = 1.0;
                    out.extend(slot);
                }
            }
            _ => return Err(Error::InvalidAction("joint action kind does not match action space".into())),
        }
        Ok(out)
    }
}

/// True environment state: the global feature vector seen by the critic and the timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub features: Vec<f64>,
    pub t: usize,
}

/// Per-agent observation vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct JointObservation(pub Vec<Vec<f64>>);

impl JointObservation {
    pub fn n_agents(&self) -> usize {
        self.0.len()
    }

    pub fn agent(&self, i: usize) -> &[f64] {
        &self.0[i]
    }
}

/// Result of one environment step. The reward is a single team scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub observation: JointObservation,
    pub reward: f64,
    pub done: bool,
}

/// Common interface of the cooperative environments.
pub trait CooperativeEnv {
    fn name(&self) -> &'static str;
    fn n_agents(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn state_dim(&self) -> usize;
    fn action_space(&self) -> ActionSpace;
    fn horizon(&self) -> usize;
    fn groups(&self) -> &GroupSpec;
    fn reset(&self, seed: u64) -> (EnvState, JointObservation);
    fn step(&self, state: &EnvState, action: &JointAction) -> Result<StepOutcome>;

    /// Whether a step reward counts as success (used for success-fraction metrics).
    fn is_success_reward(&self, _reward: f64) -> Option<bool> {
        None
    }
}

/// The environments known to the harness.
#[derive(Debug, Clone)]
pub enum Environment {
    TeamReach(TeamReachHet),
    SignalLever(SignalLever),
}

impl Environment {
    pub fn by_name(name: &str) -> Result<Self> {
        Self::build(name, None)
    }

    /// Named environment with an optional episode-length override.
    pub fn build(name: &str, horizon: Option<usize>) -> Result<Self> {
        if horizon == Some(0) {
            return Err(Error::Config("horizon must be positive".into()));
        }
        match name {
            "team_reach_het" => {
                let mut cfg = TeamReachConfig::default();
                if let Some(h) = horizon {
                    cfg.horizon = h;
                }
                Ok(Environment::TeamReach(TeamReachHet::new(cfg)?))
            }
            "signal_lever" => Ok(Environment::SignalLever(SignalLever::with_horizon(horizon.unwrap_or(1)))),
            other => Err(Error::Config(format!(
                "unknown env {other:?}; expected \"team_reach_het\" or \"signal_lever\""
            ))),
        }
    }

    fn inner(&self) -> &dyn CooperativeEnv {
        match self {
            Environment::TeamReach(e) => e,
            Environment::SignalLever(e) => e,
        }
    }
}

impl CooperativeEnv for Environment {
    fn name(&self) -> &'static str {
        self.inner().name()
    }
    fn n_agents(&self) -> usize {
        self.inner().n_agents()
    }
    fn obs_dim(&self) -> usize {
        self.inner().obs_dim()
    }
    fn state_dim(&self) -> usize {
        self.inner().state_dim()
    }
    fn action_space(&self) -> ActionSpace {
        self.inner().action_space()
    }
    fn horizon(&self) -> usize {
        self.inner().horizon()
    }
    fn groups(&self) -> &GroupSpec {
        self.inner().groups()
    }
    fn reset(&self, seed: u64) -> (EnvState, JointObservation) {
        self.inner().reset(seed)
    }
    fn step(&self, state: &EnvState, action: &JointAction) -> Result<StepOutcome> {
        self.inner().step(state, action)
    }
    fn is_success_reward(&self, reward: f64) -> Option<bool> {
        self.inner().is_success_reward(reward)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_spec_validation() {
        assert!(GroupSpec::from_assignment(vec![0, 1, 0]).is_ok());
        assert!(GroupSpec::from_assignment(vec![0, 2, 0]).is_err());
        assert!(GroupSpec::new(vec![0, 1, 0], vec![0, 0, 2]).is_err());
        assert!(GroupSpec::new(vec![0, 1, 0], vec![2, 1]).is_err());
        let g = GroupSpec::new(vec![0, 1, 0], vec![2, 0, 1]).unwrap();
        assert_eq!(g.n_groups(), 2);
        assert_eq!(g.members(0), vec![0, 2]);
        assert_eq!(GroupSpec::no_sharing(4).n_groups(), 4);
        assert_eq!(GroupSpec::full_sharing(4).n_groups(), 1);
    }

    #[test]
    fn discrete_encoding_is_one_hot() {
        let a = JointAction::Discrete(vec![0, 2, 1]);
        let enc = a.encode(ActionSpace::Discrete { n: 3 }).unwrap();
        assert_eq!(enc, vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        assert!(JointAction::Discrete(vec![3]).encode(ActionSpace::Discrete { n: 3 }).is_err());
        assert_eq!(ActionSpace::Discrete { n: 3 }.noop_slot(), vec![1.0, 0.0, 0.0]);
        assert_eq!(ActionSpace::Continuous { dim: 2 }.noop_slot(), vec![0.0, 0.0]);
    }
}
