//! Grouped deterministic actors over a centralized critic.
//!
//! Agents in one group evaluate a single parameter set. The actor objective is
//! the optimal marginal Q-value: the change in the centralized Q when agent
//! `i`'s action replaces the no-op, with the agents after `i` filled in by
//! greedy policy actions.

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::envs::{ActionLayout, ActionSpace, GroupSpec, JointAction, JointObservation};
use crate::error::{Error, Result};
use crate::gqc::{critic_input, ensemble_q, CriticHeads, Which};
use crate::numkit::{Activation, AdamConfig, ForwardCache, MlpGrads, MlpParams, OptState};
use crate::Scalar;

/// Exploration (noisy / sampled) or greedy (deterministic) action selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Explore,
    Greedy,
}

/// How the sequential agent order is chosen at each update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderMode {
    Fixed,
    Shuffled,
}

/// Which quantity the actors ascend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActorObjective {
    /// `min_h Q_h(s, a)` with the agent's own slot re-evaluated and the rest taken from the buffer.
    Dpg,
    /// `min_h [Q_h(s, a_i, a^g) - Q_h(s, 0, a^g)]`.
    Omq,
}

/// Source of greedy per-agent actions in the flat slot encoding.
pub trait GreedyActor<T: Scalar> {
    fn layout(&self) -> ActionLayout;
    fn greedy_slot(&self, agent: usize, obs: &[T]) -> Result<Vec<T>>;
}

/// Greedy actions for the agents placed after a prefix of the ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion<T> {
    pub agents: Vec<usize>,
    pub slots: Vec<Vec<T>>,
}

impl<T: Scalar> Completion<T> {
    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    /// Writes the completion into a flat joint action.
    pub fn apply(&self, layout: &ActionLayout, joint: &mut [T]) {
        for (&j, slot) in self.agents.iter().zip(&self.slots) {
            joint[layout.slot(j)].copy_from_slice(slot);
        }
    }
}

/// Greedy completion after the first `prefix_len` agents of `ordering` (`1..=n`).
pub fn greedy_completion<T: Scalar, A: GreedyActor<T> + ?Sized>(
    actor: &A,
    obs: &[Vec<T>],
    ordering: &[usize],
    prefix_len: usize,
) -> Result<Completion<T>> {
    let n = actor.layout().n_agents;
    if prefix_len == 0 || prefix_len > n || ordering.len() != n || obs.len() != n {
        return Err(Error::Shape(format!(
            "completion after {prefix_len} of {n} agents ({} observations, ordering {ordering:?})",
            obs.len()
        )));
    }
    let agents = ordering[prefix_len..].to_vec();
    let slots = agents
        .iter()
        .map(|&j| actor.greedy_slot(j, &obs[j]))
        .collect::<Result<Vec<_>>>()?;
    Ok(Completion { agents, slots })
}

/// Per-head marginal value of one agent's action.
#[derive(Debug, Clone, PartialEq)]
pub struct OmqValue<T> {
    pub per_head: Vec<T>,
    pub agent: usize,
    pub completion: Completion<T>,
}

impl<T: Scalar> OmqValue<T> {
    pub fn min(&self) -> T {
        self.per_head.iter().copied().fold(T::infinity(), T::min)
    }
}

/// Marginal value of agent `agent`'s slot in `joint`, after overwriting the completion.
pub fn omq<T: Scalar, C: CriticHeads<T> + ?Sized>(
    critic: &C,
    layout: &ActionLayout,
    state: &[T],
    joint: &[T],
    agent: usize,
    completion: &Completion<T>,
) -> Result<OmqValue<T>> {
    if joint.len() != layout.total_width() || agent >= layout.n_agents {
        return Err(Error::Shape(format!(
            "joint action of width {} for agent {agent} (layout {layout:?})",
            joint.len()
        )));
    }
    let mut with = joint.to_vec();
    completion.apply(layout, &mut with);
    let mut without = with.clone();
    without[layout.slot(agent)].copy_from_slice(&layout.noop());
    let q1 = ensemble_q(critic, state, &with, Which::Online)?;
    let q0 = ensemble_q(critic, state, &without, Which::Online)?;
    Ok(OmqValue {
        per_head: q1.iter().zip(&q0).map(|(&a, &b)| a - b).collect(),
        agent,
        completion: completion.clone(),
    })
}

/// Fixed ordering from the group spec, or a fresh uniform permutation.
pub fn sequential_order<R: Rng + ?Sized>(groups: &GroupSpec, mode: OrderMode, rng: &mut R) -> Vec<usize> {
    match mode {
        OrderMode::Fixed => groups.ordering().to_vec(),
        OrderMode::Shuffled => {
            let mut p: Vec<usize> = (0..groups.n_agents()).collect();
            p.shuffle(rng);
            p
        }
    }
}

/// Replaces, per row, the agents after a uniformly drawn prefix of `ordering`
/// by the matching slots of `greedy`.
pub fn ood_completions<T: Scalar, R: Rng + ?Sized>(
    layout: &ActionLayout,
    actions: ArrayView2<T>,
    greedy: ArrayView2<T>,
    ordering: &[usize],
    rng: &mut R,
) -> Array2<T> {
    let n = layout.n_agents;
    let mut out = actions.to_owned();
    for r in 0..out.nrows() {
        let prefix = rng.random_range(1..=n);
        for &j in &ordering[prefix..] {
            let cols = layout.slot(j);
            let src = greedy.slice(s![r, cols.clone()]);
            out.slice_mut(s![r, cols]).assign(&src);
        }
    }
    out
}

fn one_hot_argmax<T: Scalar>(logits: ArrayView2<T>) -> Array2<T> {
    let mut out = Array2::zeros(logits.raw_dim());
    for (r, row) in logits.outer_iter().enumerate() {
        out[[r, argmax(row.iter().copied())]] = T::one();
    }
    out
}

/// Index of the first maximum.
pub(crate) fn argmax<T: Scalar>(values: impl IntoIterator<Item = T>) -> usize {
    let mut best = 0;
    let mut best_v = T::neg_infinity();
    for (k, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = k;
            best_v = v;
        }
    }
    best
}

fn gumbel<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    let u: f64 = rng.random::<f64>().max(1e-300);
    T::lit(-(-u.ln()).ln())
}

fn clipped_normal<T: Scalar, R: Rng + ?Sized>(rng: &mut R, sigma: T, clip: T) -> T {
    let z: f64 = StandardNormal.sample(rng);
    (sigma * T::lit(z)).max(-clip).min(clip)
}

/// Parameter-shared deterministic actors, one network (plus target and optimizer) per group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedActors<T> {
    online: Vec<MlpParams<T>>,
    target: Vec<MlpParams<T>>,
    opt: Vec<OptState<T>>,
    groups: GroupSpec,
    layout: ActionLayout,
    obs_dim: usize,
    sigma: T,
}

impl<T: Scalar> GroupedActors<T> {
    /// Tanh hidden layers; tanh output for continuous actions, linear logits for discrete.
    pub fn new<R: Rng + ?Sized>(
        groups: GroupSpec,
        obs_dim: usize,
        space: ActionSpace,
        hidden: &[usize],
        adam: AdamConfig<T>,
        sigma: T,
        rng: &mut R,
    ) -> Result<Self> {
        let layout = ActionLayout::new(groups.n_agents(), space);
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(layout.slot_width());
        let mut acts = vec![Activation::Tanh; hidden.len()];
        acts.push(if space.is_discrete() { Activation::Identity } else { Activation::Tanh });
        let online = (0..groups.n_groups())
            .map(|_| MlpParams::new(&sizes, &acts, rng))
            .collect::<Result<Vec<_>>>()?;
        let target = online.clone();
        let opt = online
            .iter()
            .map(|p| OptState::new(p, adam))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(online, target, opt, groups, space, obs_dim, sigma)
    }

    pub fn from_parts(
        online: Vec<MlpParams<T>>,
        target: Vec<MlpParams<T>>,
        opt: Vec<OptState<T>>,
        groups: GroupSpec,
        space: ActionSpace,
        obs_dim: usize,
        sigma: T,
    ) -> Result<Self> {
        let layout = ActionLayout::new(groups.n_agents(), space);
        if online.len() != groups.n_groups() || target.len() != online.len() || opt.len() != online.len() {
            return Err(Error::Shape(format!(
                "{} groups but {} online / {} target / {} optimizer entries",
                groups.n_groups(),
                online.len(),
                target.len(),
                opt.len()
            )));
        }
        for (g, (o, t)) in online.iter().zip(&target).enumerate() {
            if !o.same_shape(t) || o.in_dim() != obs_dim || o.out_dim() != layout.slot_width() {
                return Err(Error::Shape(format!("actor network of group {g} has the wrong shape")));
            }
        }
        if !(sigma.is_finite() && sigma >= T::zero()) {
            return Err(Error::Config(format!("exploration sigma {sigma} must be finite and >= 0")));
        }
        Ok(Self {
            online,
            target,
            opt,
            groups,
            layout,
            obs_dim,
            sigma,
        })
    }

    pub fn groups(&self) -> &GroupSpec {
        &self.groups
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn exploration_sigma(&self) -> T {
        self.sigma
    }

    pub fn n_groups(&self) -> usize {
        self.online.len()
    }

    /// Online network evaluated by `agent` (shared within its group).
    pub fn network(&self, agent: usize) -> &MlpParams<T> {
        &self.online[self.groups.group_of(agent)]
    }

    pub fn group_online(&self, group: usize) -> &MlpParams<T> {
        &self.online[group]
    }

    pub fn group_online_mut(&mut self, group: usize) -> &mut MlpParams<T> {
        &mut self.online[group]
    }

    pub fn group_target(&self, group: usize) -> &MlpParams<T> {
        &self.target[group]
    }

    pub fn group_opt(&self, group: usize) -> &OptState<T> {
        &self.opt[group]
    }

    fn net(&self, agent: usize, which: Which) -> &MlpParams<T> {
        let g = self.groups.group_of(agent);
        match which {
            Which::Online => &self.online[g],
            Which::Target => &self.target[g],
        }
    }

    /// Greedy encoded slots of `agent` for a batch of its observations.
    pub fn greedy_slots(&self, agent: usize, obs: ArrayView2<T>, which: Which) -> Result<Array2<T>> {
        let out = self.net(agent, which).predict_batch(obs)?;
        Ok(if self.layout.space.is_discrete() { one_hot_argmax(out.view()) } else { out })
    }

    /// Greedy flat joint actions for per-agent observation batches.
    pub fn greedy_joint(&self, obs: &[Array2<T>], which: Which) -> Result<Array2<T>> {
        self.check_batch(obs)?;
        let rows = obs[0].nrows();
        let mut out = Array2::zeros((rows, self.layout.total_width()));
        for (i, o) in obs.iter().enumerate() {
            let slots = self.greedy_slots(i, o.view(), which)?;
            out.slice_mut(s![.., self.layout.slot(i)]).assign(&slots);
        }
        Ok(out)
    }

    /// Target-policy joint actions with clipped Gaussian smoothing noise.
    ///
    /// Discrete agents take the argmax of noise-perturbed target logits.
    pub fn smoothed_target_joint<R: Rng + ?Sized>(
        &self,
        obs: &[Array2<T>],
        sigma: T,
        clip: T,
        rng: &mut R,
    ) -> Result<Array2<T>> {
        self.check_batch(obs)?;
        let rows = obs[0].nrows();
        let mut out = Array2::zeros((rows, self.layout.total_width()));
        for (i, o) in obs.iter().enumerate() {
            let mut raw = self.net(i, Which::Target).predict_batch(o.view())?;
            raw.mapv_inplace(|v| v + clipped_normal(rng, sigma, clip));
            let slots = if self.layout.space.is_discrete() {
                one_hot_argmax(raw.view())
            } else {
                raw.mapv(|v| v.max(-T::one()).min(T::one()))
            };
            out.slice_mut(s![.., self.layout.slot(i)]).assign(&slots);
        }
        Ok(out)
    }

    fn check_batch(&self, obs: &[Array2<T>]) -> Result<()> {
        if obs.len() != self.layout.n_agents || obs.is_empty() {
            return Err(Error::Shape(format!("{} observation batches for {} agents", obs.len(), self.layout.n_agents)));
        }
        let rows = obs[0].nrows();
        if obs.iter().any(|o| o.nrows() != rows || o.ncols() != self.obs_dim) {
            return Err(Error::Shape("observation batches disagree in shape".into()));
        }
        Ok(())
    }

    /// Environment action for every agent.
    ///
    /// Explore mode adds Gaussian noise truncated at two standard deviations
    /// (continuous) or samples the softmax of the logits via Gumbel-max, mixed
    /// with a uniform choice at rate `sigma` (discrete).
    pub fn act<R: Rng + ?Sized>(&self, obs: &JointObservation, mode: ActMode, rng: &mut R) -> Result<JointAction> {
        if obs.n_agents() != self.layout.n_agents {
            return Err(Error::Shape(format!("{} observations for {} agents", obs.n_agents(), self.layout.n_agents)));
        }
        let outs = (0..self.layout.n_agents)
            .map(|i| {
                let o: Vec<T> = obs.agent(i).iter().map(|&v| T::lit(v)).collect();
                self.network(i).predict(&o)
            })
            .collect::<Result<Vec<_>>>()?;
        match self.layout.space {
            ActionSpace::Continuous { .. } => {
                let acts = outs
                    .into_iter()
                    .map(|out| {
                        out.into_iter()
                            .map(|v| {
                                let v = match mode {
                                    ActMode::Greedy => v,
                                    ActMode::Explore => {
                                        v + clipped_normal(rng, self.sigma, self.sigma + self.sigma)
                                    }
                                };
                                v.max(-T::one()).min(T::one()).as_f64()
                            })
                            .collect()
                    })
                    .collect();
                Ok(JointAction::Continuous(acts))
            }
            ActionSpace::Discrete { n } => {
                let acts = outs
                    .into_iter()
                    .map(|logits| match mode {
                        ActMode::Greedy => argmax(logits),
                        ActMode::Explore => {
                            let uniform = rng.random::<f64>() < self.sigma.as_f64();
                            let pick = rng.random_range(0..n);
                            let sampled = argmax(logits.into_iter().map(|z| z + gumbel::<T, R>(rng)));
                            if uniform {
                                pick
                            } else {
                                sampled
                            }
                        }
                    })
                    .collect();
                Ok(JointAction::Discrete(acts))
            }
        }
    }

    /// One optimizer step per group.
    pub fn apply_grads(&mut self, grads: &[MlpGrads<T>]) -> Result<()> {
        if grads.len() != self.online.len() {
            return Err(Error::Shape(format!("{} gradients for {} groups", grads.len(), self.online.len())));
        }
        for ((p, o), g) in self.online.iter_mut().zip(&mut self.opt).zip(grads) {
            o.step(p, g)?;
        }
        Ok(())
    }

    pub fn update_targets(&mut self, tau: T) -> Result<()> {
        for (t, o) in self.target.iter_mut().zip(&self.online) {
            t.soft_update_from(o, tau)?;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.online.iter().chain(&self.target).all(|p| p.is_finite())
    }
}

impl<T: Scalar> GreedyActor<T> for GroupedActors<T> {
    fn layout(&self) -> ActionLayout {
        self.layout
    }

    fn greedy_slot(&self, agent: usize, obs: &[T]) -> Result<Vec<T>> {
        let out = self.network(agent).predict(obs)?;
        if self.layout.space.is_discrete() {
            let mut slot = vec![T::zero(); out.len()];
            slot[argmax(out)] = T::one();
            Ok(slot)
        } else {
            Ok(out)
        }
    }
}

/// Actor objective value, per-agent terms and accumulated per-group gradients.
#[derive(Debug, Clone)]
pub struct ActorLoss<T> {
    pub loss: T,
    pub per_agent: Vec<T>,
    pub grads: Vec<MlpGrads<T>>,
}

/// Loss `-(1/n) sum_i mean_rows min_h phi_h` for candidate slots `candidates[i]`
/// substituted into `base`, and its gradient with respect to each candidate.
///
/// With [`ActorObjective::Omq`], `phi_h` is the difference between the head
/// value at the substituted input and at the input with the no-op in slot
/// `i`; with [`ActorObjective::Dpg`] it is the head value itself.
pub fn marginal_objective<T: Scalar, C: CriticHeads<T> + ?Sized>(
    critic: &C,
    layout: &ActionLayout,
    states: ArrayView2<T>,
    base: ArrayView2<T>,
    candidates: &[Array2<T>],
    objective: ActorObjective,
) -> Result<(T, Vec<T>, Vec<Array2<T>>)> {
    let n = layout.n_agents;
    let rows = states.nrows();
    if candidates.len() != n || base.nrows() != rows || base.ncols() != layout.total_width() || rows == 0 {
        return Err(Error::Shape("actor objective inputs disagree in shape".into()));
    }
    let scale = T::one() / T::lit((rows * n) as f64);
    let mut per_agent = Vec::with_capacity(n);
    let mut slot_grads = Vec::with_capacity(n);
    let noop = Array1::from(layout.noop::<T>());
    for (i, cand) in candidates.iter().enumerate() {
        let cols = layout.slot(i);
        let mut with = base.to_owned();
        with.slice_mut(s![.., cols.clone()]).assign(cand);
        let x_with = critic_input(states, with.view())?;
        let x_without = match objective {
            ActorObjective::Omq => {
                let mut without = with;
                for mut row in without.rows_mut() {
                    row.slice_mut(s![cols.clone()]).assign(&noop);
                }
                Some(critic_input(states, without.view())?)
            }
            ActorObjective::Dpg => None,
        };
        let mut best = Array1::from_elem(rows, T::infinity());
        let mut best_head = vec![0usize; rows];
        for h in 0..critic.n_heads() {
            let mut phi = critic.values(h, Which::Online, x_with.view())?;
            if let Some(x0) = &x_without {
                phi -= &critic.values(h, Which::Online, x0.view())?;
            }
            for r in 0..rows {
                if phi[r] < best[r] {
                    best[r] = phi[r];
                    best_head[r] = h;
                }
            }
        }
        let total = best.sum();
        if !total.is_finite() {
            return Err(Error::NonFinite(format!("actor objective for agent {i}: {total}")));
        }
        per_agent.push(-total / T::lit(rows as f64));
        let mut g = Array2::zeros((rows, layout.slot_width()));
        for h in 0..critic.n_heads() {
            let sel: Vec<usize> = (0..rows).filter(|&r| best_head[r] == h).collect();
            if sel.is_empty() {
                continue;
            }
            let xs = x_with.select(ndarray::Axis(0), &sel);
            let (_, gin) = critic.values_and_input_grad(h, xs.view())?;
            let offset = states.ncols() + cols.start;
            for (k, &r) in sel.iter().enumerate() {
                for c in 0..layout.slot_width() {
                    g[[r, c]] = -scale * gin[[k, offset + c]];
                }
            }
        }
        slot_grads.push(g);
    }
    let loss = per_agent.iter().copied().sum::<T>() / T::lit(n as f64);
    Ok((loss, per_agent, slot_grads))
}

/// Candidate actions produced by the online actors with their backward data.
pub(crate) struct Candidates<T> {
    slots: Vec<Array2<T>>,
    caches: Vec<ForwardCache<T>>,
    /// Relaxed probabilities for discrete straight-through backward.
    relaxed: Vec<Option<Array2<T>>>,
    greedy: Vec<Array2<T>>,
}

pub(crate) fn candidates<T: Scalar, R: Rng + ?Sized>(
    actors: &GroupedActors<T>,
    obs: &[Array2<T>],
    temperature: T,
    rng: &mut R,
) -> Result<Candidates<T>> {
    actors.check_batch(obs)?;
    let mut c = Candidates {
        slots: Vec::new(),
        caches: Vec::new(),
        relaxed: Vec::new(),
        greedy: Vec::new(),
    };
    for (i, o) in obs.iter().enumerate() {
        let (out, cache) = actors.network(i).forward_batch(o.view())?;
        if actors.layout.space.is_discrete() {
            let mut y = out.mapv(|z| z);
            y.mapv_inplace(|z| (z + gumbel::<T, R>(rng)) / temperature);
            for mut row in y.rows_mut() {
                let m = row.iter().copied().fold(T::neg_infinity(), T::max);
                row.mapv_inplace(|v| (v - m).exp());
                let sum = row.sum();
                row.mapv_inplace(|v| v / sum);
            }
            c.slots.push(one_hot_argmax(y.view()));
            c.greedy.push(one_hot_argmax(out.view()));
            c.relaxed.push(Some(y));
        } else {
            c.greedy.push(out.clone());
            c.slots.push(out);
            c.relaxed.push(None);
        }
        c.caches.push(cache);
    }
    Ok(c)
}

/// Actor loss for a minibatch; gradients are summed into each agent's group.
///
/// Under [`ActorObjective::Omq`] every slot other than `i` holds the online
/// greedy action (constants), so the prefix and the completion are both
/// policy-greedy. Under [`ActorObjective::Dpg`] the other slots come from
/// `buffer_actions`. Discrete agents use a straight-through relaxed one-hot
/// at `temperature`.
#[allow(clippy::too_many_arguments)]
pub fn actor_loss<T: Scalar, C: CriticHeads<T> + ?Sized, R: Rng + ?Sized>(
    actors: &GroupedActors<T>,
    critic: &C,
    states: ArrayView2<T>,
    obs: &[Array2<T>],
    buffer_actions: ArrayView2<T>,
    objective: ActorObjective,
    temperature: T,
    rng: &mut R,
) -> Result<ActorLoss<T>> {
    if !(temperature > T::zero()) {
        return Err(Error::Config(format!("relaxation temperature {temperature} must be positive")));
    }
    let cand = candidates(actors, obs, temperature, rng)?;
    let base = match objective {
        ActorObjective::Dpg => buffer_actions.to_owned(),
        ActorObjective::Omq => {
            let mut b = Array2::zeros((states.nrows(), actors.layout.total_width()));
            for (i, g) in cand.greedy.iter().enumerate() {
                b.slice_mut(s![.., actors.layout.slot(i)]).assign(g);
            }
            b
        }
    };
    actor_loss_with_base(actors, critic, states, base.view(), &cand, objective, temperature)
}

pub(crate) fn actor_loss_with_base<T: Scalar, C: CriticHeads<T> + ?Sized>(
    actors: &GroupedActors<T>,
    critic: &C,
    states: ArrayView2<T>,
    base: ArrayView2<T>,
    cand: &Candidates<T>,
    objective: ActorObjective,
    temperature: T,
) -> Result<ActorLoss<T>> {
    let (loss, per_agent, slot_grads) =
        marginal_objective(critic, &actors.layout, states, base, &cand.slots, objective)?;
    let mut grads: Vec<MlpGrads<T>> = actors.online.iter().map(MlpGrads::zeros_like).collect();
    for (i, g_slot) in slot_grads.into_iter().enumerate() {
        let g_out = match &cand.relaxed[i] {
            None => g_slot,
            Some(y) => {
                let mut g = Array2::zeros(y.raw_dim());
                for r in 0..y.nrows() {
                    let yr = y.row(r);
                    let dot: T = yr.iter().zip(g_slot.row(r)).map(|(&a, &b)| a * b).sum();
                    for k in 0..y.ncols() {
                        g[[r, k]] = yr[k] * (g_slot[[r, k]] - dot) / temperature;
                    }
                }
                g
            }
        };
        let (gi, _) = actors.network(i).backward(&cand.caches[i], g_out.view())?;
        grads[actors.groups.group_of(i)].add_assign(&gi);
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("actor gradient".into()));
    }
    Ok(ActorLoss { loss, per_agent, grads })
}
