//! TeamReach-Het: four agents in two gear groups cover four landmarks.
//!
//! Agents follow damped double-integrator dynamics. A group's gear scales how
//! strongly its actions accelerate it, so fast "scouts" and slow "haulers" must
//! split the landmarks between them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ActionSpace, CooperativeEnv, EnvState, GroupSpec, JointAction, JointObservation, StepOutcome};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TeamReachConfig {
    /// Gear per group; agent groups come from `assignment`.
    pub gears: Vec<f64>,
    pub assignment: Vec<usize>,
    pub n_landmarks: usize,
    pub horizon: usize,
    pub dt: f64,
    pub damping: f64,
    pub accel: f64,
    pub agent_radius: f64,
    pub visibility: f64,
    pub collision_penalty: f64,
    pub arena: f64,
}

impl Default for TeamReachConfig {
    fn default() -> Self {
        Self {
            gears: vec![1.0, 0.4],
            assignment: vec![0, 0, 1, 1],
            n_landmarks: 4,
            horizon: 25,
            dt: 0.1,
            damping: 0.25,
            accel: 5.0,
            agent_radius: 0.05,
            visibility: 0.6,
            collision_penalty: 1.0,
            arena: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TeamReachHet {
    config: TeamReachConfig,
    groups: GroupSpec,
}

/// Decoded view of the state feature vector.
struct Layout {
    n: usize,
    l: usize,
}

impl Layout {
    fn pos(&self, i: usize) -> usize {
        2 * i
    }
    fn vel(&self, i: usize) -> usize {
        2 * self.n + 2 * i
    }
    fn landmark(&self, k: usize) -> usize {
        4 * self.n + 2 * k
    }
    fn time(&self) -> usize {
        4 * self.n + 2 * self.l
    }
    fn dim(&self) -> usize {
        4 * self.n + 2 * self.l + 1
    }
}

const CONTROLLER_KP: f64 = 60.0;
const CONTROLLER_KD: f64 = 6.0;

impl TeamReachHet {
    pub fn new(config: TeamReachConfig) -> Result<Self> {
        let groups = GroupSpec::from_assignment(config.assignment.clone())?;
        if config.gears.len() != groups.n_groups() {
            return Err(Error::Config(format!(
                "{} gears for {} groups",
                config.gears.len(),
                groups.n_groups()
            )));
        }
        if config.gears.iter().any(|g| !(*g > 0.0)) || !(config.damping >= 0.0 && config.damping < 1.0) {
            return Err(Error::Config("gears must be positive and damping in [0, 1)".into()));
        }
        if config.horizon == 0 || config.n_landmarks == 0 {
            return Err(Error::Config("horizon and landmark count must be positive".into()));
        }
        Ok(Self { config, groups })
    }

    pub fn config(&self) -> &TeamReachConfig {
        &self.config
    }

    /// Distance under which two agents collide.
    pub fn collision_distance(&self) -> f64 {
        2.0 * self.config.agent_radius
    }

    pub fn gear_of(&self, agent: usize) -> f64 {
        self.config.gears[self.groups.group_of(agent)]
    }

    fn layout(&self) -> Layout {
        Layout {
            n: self.groups.n_agents(),
            l: self.config.n_landmarks,
        }
    }

    pub fn positions(&self, state: &EnvState) -> Vec<[f64; 2]> {
        let lay = self.layout();
        (0..lay.n)
            .map(|i| [state.features[lay.pos(i)], state.features[lay.pos(i) + 1]])
            .collect()
    }

    pub fn velocities(&self, state: &EnvState) -> Vec<[f64; 2]> {
        let lay = self.layout();
        (0..lay.n)
            .map(|i| [state.features[lay.vel(i)], state.features[lay.vel(i) + 1]])
            .collect()
    }

    pub fn landmarks(&self, state: &EnvState) -> Vec<[f64; 2]> {
        let lay = self.layout();
        (0..lay.l)
            .map(|k| [state.features[lay.landmark(k)], state.features[lay.landmark(k) + 1]])
            .collect()
    }

    /// Builds a state from explicit positions, velocities and landmarks.
    pub fn compose_state(
        &self,
        positions: &[[f64; 2]],
        velocities: &[[f64; 2]],
        landmarks: &[[f64; 2]],
        t: usize,
    ) -> Result<EnvState> {
        let lay = self.layout();
        if positions.len() != lay.n || velocities.len() != lay.n || landmarks.len() != lay.l {
            return Err(Error::Shape("state component counts do not match the environment".into()));
        }
        let mut f = vec![0.0; lay.dim()];
        for i in 0..lay.n {
            f[lay.pos(i)..lay.pos(i) + 2].copy_from_slice(&positions[i]);
            f[lay.vel(i)..lay.vel(i) + 2].copy_from_slice(&velocities[i]);
        }
        for (k, l) in landmarks.iter().enumerate() {
            f[lay.landmark(k)..lay.landmark(k) + 2].copy_from_slice(l);
        }
        f[lay.time()] = t as f64 / self.config.horizon as f64;
        Ok(EnvState { features: f, t })
    }

    pub fn observe(&self, state: &EnvState) -> JointObservation {
        let pos = self.positions(state);
        let vel = self.velocities(state);
        let lms = self.landmarks(state);
        let n = pos.len();
        let obs = (0..n)
            .map(|i| {
                let mut o = Vec::with_capacity(self.obs_dim());
                o.extend_from_slice(&pos[i]);
                o.extend_from_slice(&vel[i]);
                for l in &lms {
                    o.push(l[0] - pos[i][0]);
                    o.push(l[1] - pos[i][1]);
                }
                for k in 1..n {
                    let j = (i + k) % n;
                    let (dx, dy) = (pos[j][0] - pos[i][0], pos[j][1] - pos[i][1]);
                    if (dx * dx + dy * dy).sqrt() <= self.config.visibility {
                        o.extend_from_slice(&[dx, dy, 1.0]);
                    } else {
                        o.extend_from_slice(&[0.0, 0.0, 0.0]);
                    }
                }
                o.push(self.gear_of(i));
                o
            })
            .collect();
        JointObservation(obs)
    }

    /// Team reward at a state: negative summed landmark coverage distance minus collision penalties.
    pub fn reward(&self, state: &EnvState) -> f64 {
        let pos = self.positions(state);
        let coverage: f64 = self
            .landmarks(state)
            .iter()
            .map(|l| pos.iter().map(|p| dist(p, l)).fold(f64::INFINITY, f64::min))
            .sum();
        let mut collisions = 0usize;
        for i in 0..pos.len() {
            for j in i + 1..pos.len() {
                if dist(&pos[i], &pos[j]) < self.collision_distance() {
                    collisions += 1;
                }
            }
        }
        -coverage - self.config.collision_penalty * collisions as f64
    }

    /// Landmark index per agent chosen greedily by travel cost `distance / gear`.
    pub fn greedy_assignment(&self, state: &EnvState) -> Vec<usize> {
        let pos = self.positions(state);
        let lms = self.landmarks(state);
        let n = pos.len();
        let mut target = vec![usize::MAX; n];
        let mut taken = vec![false; lms.len()];
        for _ in 0..n.min(lms.len()) {
            let mut best: Option<(f64, usize, usize)> = None;
            for i in (0..n).filter(|&i| target[i] == usize::MAX) {
                for k in (0..lms.len()).filter(|&k| !taken[k]) {
                    let c = dist(&pos[i], &lms[k]) / self.gear_of(i);
                    if best.is_none_or(|(b, _, _)| c < b) {
                        best = Some((c, i, k));
                    }
                }
            }
            let (_, i, k) = best.expect("unassigned pair exists");
            target[i] = k;
            taken[k] = true;
        }
        // Surplus agents head for the nearest landmark.
        for i in 0..n {
            if target[i] == usize::MAX {
                target[i] = (0..lms.len())
                    .min_by(|&a, &b| dist(&pos[i], &lms[a]).total_cmp(&dist(&pos[i], &lms[b])))
                    .expect("landmarks exist");
            }
        }
        target
    }

    /// Action of the scripted controller: saturated PD control toward the assigned landmark.
    pub fn scripted_action(&self, state: &EnvState, assignment: &[usize]) -> JointAction {
        let pos = self.positions(state);
        let vel = self.velocities(state);
        let lms = self.landmarks(state);
        let acts = (0..pos.len())
            .map(|i| {
                let l = lms[assignment[i]];
                let scale = self.config.accel * self.gear_of(i);
                (0..2)
                    .map(|d| {
                        let u = CONTROLLER_KP * (l[d] - pos[i][d]) - CONTROLLER_KD * vel[i][d];
                        (u / scale).clamp(-1.0, 1.0)
                    })
                    .collect()
            })
            .collect();
        JointAction::Continuous(acts)
    }

    /// Episodic return of the scripted greedy-assignment controller on the layout drawn by `seed`.
    pub fn scripted_oracle_return(&self, seed: u64) -> f64 {
        let (mut state, _) = self.reset(seed);
        let assignment = self.greedy_assignment(&state);
        let mut total = 0.0;
        loop {
            let action = self.scripted_action(&state, &assignment);
            let out = self.step(&state, &action).expect("scripted action is valid");
            total += out.reward;
            state = out.state;
            if out.done {
                return total;
            }
        }
    }
}

fn dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl CooperativeEnv for TeamReachHet {
    fn name(&self) -> &'static str {
        "team_reach_het"
    }

    fn n_agents(&self) -> usize {
        self.groups.n_agents()
    }

    fn obs_dim(&self) -> usize {
        let n = self.n_agents();
        4 + 2 * self.config.n_landmarks + 3 * (n - 1) + 1
    }

    fn state_dim(&self) -> usize {
        self.layout().dim()
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Continuous { dim: 2 }
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn groups(&self) -> &GroupSpec {
        &self.groups
    }

    /// Uniform spawn in the arena, rejecting layouts with overlapping agents.
    fn reset(&self, seed: u64) -> (EnvState, JointObservation) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.n_agents();
        let a = self.config.arena;
        let positions = loop {
            let cand: Vec<[f64; 2]> = (0..n)
                .map(|_| [rng.random_range(-a..a), rng.random_range(-a..a)])
                .collect();
            let clear = (0..n).all(|i| (i + 1..n).all(|j| dist(&cand[i], &cand[j]) > self.collision_distance()));
            if clear {
                break cand;
            }
        };
        let landmarks: Vec<[f64; 2]> = (0..self.config.n_landmarks)
            .map(|_| [rng.random_range(-a..a), rng.random_range(-a..a)])
            .collect();
        let state = self
            .compose_state(&positions, &vec![[0.0; 2]; n], &landmarks, 0)
            .expect("consistent layout");
        let obs = self.observe(&state);
        (state, obs)
    }

    fn step(&self, state: &EnvState, action: &JointAction) -> Result<StepOutcome> {
        if state.t >= self.config.horizon {
            return Err(Error::InvalidAction(format!("episode already finished at t = {}", state.t)));
        }
        let acts = match action {
            JointAction::Continuous(a) if a.len() == self.n_agents() => a,
            _ => return Err(Error::InvalidAction("expected one 2-D continuous action per agent".into())),
        };
        let mut pos = self.positions(state);
        let mut vel = self.velocities(state);
        let c = &self.config;
        for (i, a) in acts.iter().enumerate() {
            if a.len() != 2 || a.iter().any(|v| v.is_nan()) {
                return Err(Error::InvalidAction(format!("agent {i}: malformed action {a:?}")));
            }
            let push = c.accel * self.gear_of(i);
            for d in 0..2 {
                let u = a[d].clamp(-1.0, 1.0);
                vel[i][d] = (1.0 - c.damping) * vel[i][d] + push * u * c.dt;
                pos[i][d] += vel[i][d] * c.dt;
            }
        }
        let t = state.t + 1;
        let next = self.compose_state(&pos, &vel, &self.landmarks(state), t)?;
        let reward = self.reward(&next);
        let observation = self.observe(&next);
        Ok(StepOutcome {
            state: next,
            observation,
            reward,
            done: t == c.horizon,
        })
    }
}
