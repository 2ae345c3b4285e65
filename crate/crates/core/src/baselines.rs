//! MATD3-style update rules assembled from the same critic and actor parts.
//!
//! An update rule is a choice of parameter sharing, critic loss and actor
//! objective. OMDPG is the rule with grouped sharing, the ensemble critic with
//! pessimistic OOD targets and the marginal-Q actor objective.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ccga::{actor_loss, ood_completions, sequential_order, ActorObjective, GroupedActors, OrderMode};
use crate::envs::GroupSpec;
use crate::error::{Error, Result};
use crate::gqc::{critic_input, gqc_loss, min_head_target, pu_target, true_target, CriticEnsemble, PuConfig, Which};
use crate::replay::{Batch, Buffer};
use crate::Scalar;

/// Algorithm selected by the `algo` config key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    Omdpg,
    Matd3Nops,
    Matd3Parps,
    Matd3Fups,
    Matd3ParpsOmq,
    Matd3ParpsGqc,
}

/// How actor parameters are shared across agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sharing {
    NoPs,
    ParPs,
    FuPs,
}

impl Sharing {
    /// Group layout for this regime, keeping the environment's agent ordering.
    pub fn groups(&self, env_groups: &GroupSpec) -> GroupSpec {
        let n = env_groups.n_agents();
        let assignment = match self {
            Sharing::NoPs => (0..n).collect(),
            Sharing::ParPs => env_groups.assignment().to_vec(),
            Sharing::FuPs => vec![0; n],
        };
        GroupSpec::new(assignment, env_groups.ordering().to_vec()).expect("derived from a valid spec")
    }
}

/// Critic regression used by a rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticKind {
    /// All heads regress on one shared batch towards the minimum target head.
    TwinMin,
    /// Each head regresses on its own batch plus the pessimistic OOD term.
    Gqc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpdateRule {
    pub sharing: Sharing,
    pub critic: CriticKind,
    pub actor: ActorObjective,
}

/// Heads used by the plain and OMQ-only variants.
pub const TWIN_HEADS: usize = 2;

impl Algo {
    pub const ALL: [Algo; 6] = [
        Algo::Omdpg,
        Algo::Matd3Nops,
        Algo::Matd3Parps,
        Algo::Matd3Fups,
        Algo::Matd3ParpsOmq,
        Algo::Matd3ParpsGqc,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algo::Omdpg => "omdpg",
            Algo::Matd3Nops => "matd3-nops",
            Algo::Matd3Parps => "matd3-parps",
            Algo::Matd3Fups => "matd3-fups",
            Algo::Matd3ParpsOmq => "matd3-parps-omq",
            Algo::Matd3ParpsGqc => "matd3-parps-gqc",
        }
    }

    pub fn rule(&self) -> UpdateRule {
        let (sharing, critic, actor) = match self {
            Algo::Omdpg => (Sharing::ParPs, CriticKind::Gqc, ActorObjective::Omq),
            Algo::Matd3Nops => (Sharing::NoPs, CriticKind::TwinMin, ActorObjective::Dpg),
            Algo::Matd3Parps => (Sharing::ParPs, CriticKind::TwinMin, ActorObjective::Dpg),
            Algo::Matd3Fups => (Sharing::FuPs, CriticKind::TwinMin, ActorObjective::Dpg),
            Algo::Matd3ParpsOmq => (Sharing::ParPs, CriticKind::TwinMin, ActorObjective::Omq),
            Algo::Matd3ParpsGqc => (Sharing::ParPs, CriticKind::Gqc, ActorObjective::Dpg),
        };
        UpdateRule { sharing, critic, actor }
    }

    /// Ensemble size: the configured `c_k` for GQC critics, two heads otherwise.
    pub fn n_heads(&self, c_k: usize) -> usize {
        match self.rule().critic {
            CriticKind::Gqc => c_k,
            CriticKind::TwinMin => TWIN_HEADS,
        }
    }
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Learner hyperparameters shared by every rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerConfig<T> {
    pub gamma: T,
    pub tau: T,
    pub pu: PuConfig<T>,
    pub batch_size: usize,
    /// Critic updates per actor (and target) update.
    pub policy_delay: u64,
    pub order_mode: OrderMode,
}

/// Losses and diagnostics of one learner update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats<T> {
    /// Mean over heads.
    pub critic_loss: T,
    pub actor_loss: Option<T>,
    /// Mean ensemble standard deviation at the OOD inputs (GQC critics only).
    pub uncertainty: Option<T>,
}

/// Critic step of `rule` on fixed minibatches.
///
/// `batches` holds one batch per head for [`CriticKind::Gqc`]; [`CriticKind::TwinMin`]
/// uses `batches[0]` for every head. `rngs[h]` drives head `h`'s smoothing noise
/// and OOD draws (only `rngs[0]` is used by the twin-min rule).
/// Returns the mean loss and, for GQC, the mean uncertainty.
pub fn critic_update<T: Scalar, R: Rng>(
    rule: &UpdateRule,
    cfg: &LearnerConfig<T>,
    critic: &mut CriticEnsemble<T>,
    actors: &GroupedActors<T>,
    batches: &[Batch<T>],
    ordering: &[usize],
    rngs: &mut [R],
) -> Result<(T, Option<T>)> {
    use crate::gqc::CriticHeads;
    let heads = critic.n_heads();
    let pu = &cfg.pu;
    match rule.critic {
        CriticKind::TwinMin => {
            let b = batches.first().ok_or_else(|| Error::Shape("no critic batch".into()))?;
            let next = actors.smoothed_target_joint(&b.next_obs, pu.sigma, pu.clip, &mut rngs[0])?;
            let y = min_head_target(
                critic,
                b.rewards.view(),
                b.dones.view(),
                b.next_states.view(),
                next.view(),
                cfg.gamma,
            )?;
            let x = critic_input(b.states.view(), b.actions.view())?;
            let mut total = T::zero();
            for h in 0..heads {
                let (loss, grads) = gqc_loss(critic.online(h), x.view(), y.view(), None, T::zero())
                    .map_err(|e| head_error(e, h))?;
                critic.apply_grads(h, &grads)?;
                total += loss;
            }
            Ok((total / T::lit(heads as f64), None))
        }
        CriticKind::Gqc => {
            if batches.len() != heads || rngs.len() < heads {
                return Err(Error::Shape(format!(
                    "{} batches and {} streams for {heads} heads",
                    batches.len(),
                    rngs.len()
                )));
            }
            let layout = crate::ccga::GreedyActor::layout(actors);
            let mut total = T::zero();
            let mut u_total = T::zero();
            for h in 0..heads {
                let b = &batches[h];
                let rng = &mut rngs[h];
                let next = actors.smoothed_target_joint(&b.next_obs, pu.sigma, pu.clip, rng)?;
                let y = true_target(
                    critic,
                    h,
                    b.rewards.view(),
                    b.dones.view(),
                    b.next_states.view(),
                    next.view(),
                    cfg.gamma,
                )?;
                let greedy = actors.greedy_joint(&b.obs, Which::Target)?;
                let ood = ood_completions(&layout, b.actions.view(), greedy.view(), ordering, rng);
                let x_ood = critic_input(b.states.view(), ood.view())?;
                let (y_pu, u) = pu_target(critic, h, x_ood.view(), pu.beta)?;
                let x = critic_input(b.states.view(), b.actions.view())?;
                let (loss, grads) = gqc_loss(
                    critic.online(h),
                    x.view(),
                    y.view(),
                    Some((x_ood.view(), y_pu.view())),
                    pu.lambda_pu,
                )
                .map_err(|e| head_error(e, h))?;
                critic.apply_grads(h, &grads)?;
                total += loss;
                u_total += u.mean().unwrap_or_else(T::zero);
            }
            let k = T::lit(heads as f64);
            Ok((total / k, Some(u_total / k)))
        }
    }
}

fn head_error(e: Error, head: usize) -> Error {
    match e {
        Error::NonFinite(m) => Error::NonFinite(format!("critic head {head}: {m}")),
        other => other,
    }
}

/// Actor step of `rule` on a fixed minibatch; returns the actor loss.
pub fn actor_update<T: Scalar, R: Rng>(
    rule: &UpdateRule,
    critic: &CriticEnsemble<T>,
    actors: &mut GroupedActors<T>,
    batch: &Batch<T>,
    temperature: T,
    rng: &mut R,
) -> Result<T> {
    let out = actor_loss(
        actors,
        critic,
        batch.states.view(),
        &batch.obs,
        batch.actions.view(),
        rule.actor,
        temperature,
        rng,
    )?;
    actors.apply_grads(&out.grads)?;
    Ok(out.loss)
}

/// Random streams consumed by the learner.
#[derive(Debug, Clone)]
pub struct LearnerRngs<R> {
    /// One stream per critic head.
    pub replay: Vec<R>,
    pub actor: R,
    pub ordering: R,
}

/// Critic ensemble and grouped actors trained under one update rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Learner<T> {
    pub rule: UpdateRule,
    pub cfg: LearnerConfig<T>,
    pub critic: CriticEnsemble<T>,
    pub actors: GroupedActors<T>,
    pub updates: u64,
}

impl<T: Scalar> Learner<T> {
    pub fn new(rule: UpdateRule, cfg: LearnerConfig<T>, critic: CriticEnsemble<T>, actors: GroupedActors<T>) -> Result<Self> {
        cfg.pu.validate()?;
        if !(cfg.gamma >= T::zero() && cfg.gamma < T::one()) {
            return Err(Error::Config(format!("gamma {} outside [0, 1)", cfg.gamma)));
        }
        if cfg.batch_size == 0 || cfg.policy_delay == 0 {
            return Err(Error::Config("batch size and policy delay must be positive".into()));
        }
        Ok(Self {
            rule,
            cfg,
            critic,
            actors,
            updates: 0,
        })
    }

    fn non_finite_part(&self) -> Option<String> {
        use crate::gqc::CriticHeads;
        (0..self.critic.n_heads())
            .find(|&h| !(self.critic.online(h).is_finite() && self.critic.target(h).is_finite()))
            .map(|h| format!("critic head {h}"))
            .or_else(|| {
                (0..self.actors.n_groups())
                    .find(|&g| !(self.actors.group_online(g).is_finite() && self.actors.group_target(g).is_finite()))
                    .map(|g| format!("actor group {g}"))
            })
    }

    /// Samples minibatches and runs one critic step, plus the actor and target
    /// updates every `policy_delay` calls.
    pub fn update<R: Rng>(&mut self, buffer: &Buffer<T>, rngs: &mut LearnerRngs<R>, temperature: T) -> Result<UpdateStats<T>> {
        let ordering = sequential_order(self.actors.groups(), self.cfg.order_mode, &mut rngs.ordering);
        let n_batches = match self.rule.critic {
            CriticKind::TwinMin => 1,
            CriticKind::Gqc => rngs.replay.len(),
        };
        let batches = rngs.replay[..n_batches]
            .iter_mut()
            .map(|r| buffer.sample(self.cfg.batch_size, r))
            .collect::<Result<Vec<_>>>()?;
        let (critic_loss, uncertainty) = critic_update(
            &self.rule,
            &self.cfg,
            &mut self.critic,
            &self.actors,
            &batches,
            &ordering,
            &mut rngs.replay,
        )?;
        self.updates += 1;
        let mut actor = None;
        if self.updates.is_multiple_of(self.cfg.policy_delay) {
            let batch = buffer.sample(self.cfg.batch_size, &mut rngs.actor)?;
            actor = Some(actor_update(&self.rule, &self.critic, &mut self.actors, &batch, temperature, &mut rngs.actor)?);
            self.critic.update_targets(self.cfg.tau)?;
            self.actors.update_targets(self.cfg.tau)?;
        }
        if let Some(part) = self.non_finite_part() {
            return Err(Error::NonFinite(format!("{part} parameters after update {}", self.updates)));
        }
        Ok(UpdateStats {
            critic_loss,
            actor_loss: actor,
            uncertainty,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ccga::ActMode;
    use crate::envs::{CooperativeEnv, JointAction, SignalLever};
    use crate::numkit::AdamConfig;
    use crate::replay::{Transition, TransitionShape};
    use crate::rng::{substream, Stream, StreamRng};

    fn cfg() -> LearnerConfig<f64> {
        LearnerConfig {
            gamma: 0.9,
            tau: 0.01,
            pu: PuConfig {
                lambda_pu: 0.0,
                ..PuConfig::default()
            },
            batch_size: 16,
            policy_delay: 1,
            order_mode: OrderMode::Fixed,
        }
    }

    fn lever_learner(algo: Algo, seed: u64, heads: usize) -> Learner<f64> {
        let env = SignalLever::standard();
        let groups = algo.rule().sharing.groups(env.groups());
        let mut rng = substream(seed, Stream::Init);
        let critic = CriticEnsemble::new(algo.n_heads(heads), 1, 9, &[16], AdamConfig::critic(), &mut rng).unwrap();
        let actors = GroupedActors::new(groups, 3, env.action_space(), &[8], AdamConfig::actor(), 0.1, &mut rng).unwrap();
        Learner::new(algo.rule(), cfg(), critic, actors).unwrap()
    }

    fn lever_buffer(seed: u64) -> Buffer<f64> {
        let env = SignalLever::standard();
        let shape = TransitionShape {
            state_dim: 1,
            n_agents: 3,
            obs_dim: 3,
            action_dim: 9,
        };
        let mut buf = Buffer::new(256, shape).unwrap();
        let mut rng = substream(seed, Stream::Env);
        for _ in 0..100 {
            let (s, o) = env.reset(0);
            let a: Vec<usize> = (0..3).map(|_| rng.random_range(0..3)).collect();
            let ja = JointAction::Discrete(a);
            let out = env.step(&s, &ja).unwrap();
            buf.push(Transition {
                state: s.features.clone(),
                obs: o.0.clone(),
                action: ja.encode(env.action_space()).unwrap(),
                reward: out.reward,
                next_state: out.state.features.clone(),
                next_obs: out.observation.0.clone(),
                done: out.done,
            })
            .unwrap();
        }
        buf
    }

    fn rngs(seed: u64, heads: usize) -> LearnerRngs<StreamRng> {
        LearnerRngs {
            replay: (0..heads).map(|h| substream(seed, Stream::Replay(h))).collect(),
            actor: substream(seed, Stream::ActorBatch),
            ordering: substream(seed, Stream::Ordering),
        }
    }

    #[test]
    fn omq_variant_shares_the_critic_step_with_plain() {
        let buf = lever_buffer(1);
        let mut a = lever_learner(Algo::Matd3Parps, 3, 2);
        let mut b = lever_learner(Algo::Matd3ParpsOmq, 3, 2);
        assert_eq!(a.critic, b.critic);
        let batch = buf.sample(16, &mut substream(4, Stream::Replay(0))).unwrap();
        let ca = critic_update(&a.rule, &a.cfg, &mut a.critic, &a.actors, &[batch.clone()], &[0, 1, 2], &mut [substream(4, Stream::Replay(0))]).unwrap();
        let cb = critic_update(&b.rule, &b.cfg, &mut b.critic, &b.actors, &[batch.clone()], &[0, 1, 2], &mut [substream(4, Stream::Replay(0))]).unwrap();
        assert_eq!(ca.0.to_bits(), cb.0.to_bits());
        assert_eq!(a.critic, b.critic);
        let la = actor_update(&a.rule, &a.critic, &mut a.actors, &batch, 1.0, &mut substream(4, Stream::ActorBatch)).unwrap();
        let lb = actor_update(&b.rule, &b.critic, &mut b.actors, &batch, 1.0, &mut substream(4, Stream::ActorBatch)).unwrap();
        assert_ne!(la, lb);
    }

    #[test]
    fn fups_aliases_one_parameter_set() {
        let l = lever_learner(Algo::Matd3Fups, 5, 2);
        assert_eq!(l.actors.n_groups(), 1);
        let o = vec![0.0, 1.0, 0.0];
        let obs = crate::envs::JointObservation(vec![o.clone(), o.clone(), o]);
        let a = l.actors.act(&obs, ActMode::Greedy, &mut substream(0, Stream::Exploration)).unwrap();
        let JointAction::Discrete(a) = a else { unreachable!() };
        assert!(a.iter().all(|&x| x == a[0]));
    }

    #[test]
    fn nops_agents_are_independent() {
        let mut l = lever_learner(Algo::Matd3Nops, 6, 2);
        assert_eq!(l.actors.n_groups(), 3);
        let obs = crate::envs::JointObservation(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let before = l.actors.act(&obs, ActMode::Greedy, &mut substream(0, Stream::Exploration)).unwrap();
        for layer in l.actors.group_online_mut(0).layers_mut() {
            layer.weight.mapv_inplace(|w| -3.0 * w + 0.5);
            layer.bias.mapv_inplace(|b| b + 1.0);
        }
        let after = l.actors.act(&obs, ActMode::Greedy, &mut substream(0, Stream::Exploration)).unwrap();
        let (JointAction::Discrete(x), JointAction::Discrete(y)) = (before, after) else { unreachable!() };
        assert_eq!(x[1], y[1]);
        assert_eq!(x[2], y[2]);
    }

    #[test]
    fn omdpg_equals_fully_enabled_parps() {
        let buf = lever_buffer(2);
        let mut a = lever_learner(Algo::Omdpg, 7, 3);
        let mut b = lever_learner(Algo::Matd3Parps, 7, 3);
        // Enable both pieces on the plain ParPS learner with the same heads.
        b.rule.critic = CriticKind::Gqc;
        b.rule.actor = ActorObjective::Omq;
        b.critic = a.critic.clone();
        b.actors = a.actors.clone();
        a.cfg.pu.lambda_pu = 0.1;
        b.cfg.pu.lambda_pu = 0.1;
        let mut ra = rngs(9, 3);
        let mut rb = rngs(9, 3);
        for _ in 0..20 {
            let sa = a.update(&buf, &mut ra, 1.0).unwrap();
            let sb = b.update(&buf, &mut rb, 1.0).unwrap();
            assert_eq!(sa, sb);
        }
        assert_eq!(a, b);
    }

    #[test]
    fn gqc_rule_reports_uncertainty_and_learns() {
        let buf = lever_buffer(3);
        let mut l = lever_learner(Algo::Omdpg, 8, 3);
        l.cfg.pu.lambda_pu = 0.1;
        let mut r = rngs(8, 3);
        let first = l.update(&buf, &mut r, 1.0).unwrap();
        assert!(first.uncertainty.unwrap() >= 0.0);
        let mut last = first;
        for _ in 0..300 {
            last = l.update(&buf, &mut r, 1.0).unwrap();
        }
        assert!(last.critic_loss < first.critic_loss);
    }

    #[test]
    fn algo_names_round_trip() {
        for algo in Algo::ALL {
            let json = serde_json::to_string(&algo).unwrap();
            assert_eq!(json, format!("\"{}\"", algo.name()));
            assert_eq!(serde_json::from_str::<Algo>(&json).unwrap(), algo);
        }
        assert_eq!(Algo::Matd3ParpsOmq.n_heads(5), 2);
        assert_eq!(Algo::Matd3ParpsGqc.n_heads(5), 5);
    }
}
