//! The rollout/update loop of a single seeded run.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;

use super::config::{Precision, RunConfig};
use super::metrics::{MetricsHeader, MetricsRecord, TimingRecord};
use crate::baselines::{Learner, LearnerConfig, LearnerRngs};
use crate::ccga::{ActMode, GroupedActors};
use crate::checkpoint::write_checkpoint;
use crate::envs::{ActionSpace, CooperativeEnv, Environment, JointAction, JointObservation};
use crate::error::{Error, Result};
use crate::Scalar;
use crate::gqc::{CriticEnsemble, CriticHeads, PuConfig};
use crate::numkit::AdamConfig;
use crate::replay::{Buffer, Transition, TransitionShape};
use crate::rng::{substream, Stream, StreamRng};

/// Evaluation episodes use layouts `EVAL_SEED_BASE + k`, shared by every run.
pub const EVAL_SEED_BASE: u64 = 1_000_000;

/// Files produced by one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub metrics: PathBuf,
    pub timing: PathBuf,
    pub checkpoint: PathBuf,
}

/// File stem of a run: `<label>_seed<seed>`.
pub fn run_stem(cfg: &RunConfig, seed: u64) -> String {
    format!("{}_seed{seed}", cfg.label())
}

pub fn metrics_path(out_dir: &Path, cfg: &RunConfig, seed: u64) -> PathBuf {
    out_dir.join(format!("{}.metrics.jsonl", run_stem(cfg, seed)))
}

/// Builds the learner for `cfg` from the run's init stream.
pub fn build_learner<T: Scalar>(cfg: &RunConfig, env: &Environment, seed: u64) -> Result<Learner<T>> {
    let rule = cfg.algo.rule();
    let groups = rule.sharing.groups(&cfg.env_groups(env)?);
    let space = env.action_space();
    let action_dim = space.slot_width() * env.n_agents();
    let mut rng = substream(seed, Stream::Init);
    let critic = CriticEnsemble::new(
        cfg.algo.n_heads(cfg.c_k),
        env.state_dim(),
        action_dim,
        &cfg.critic_hidden,
        AdamConfig::with_lr(cfg.critic_lr),
        &mut rng,
    )?;
    let actors = GroupedActors::new(
        groups,
        env.obs_dim(),
        space,
        &cfg.actor_hidden,
        AdamConfig::with_lr(cfg.actor_lr),
        T::lit(cfg.exploration_sigma),
        &mut rng,
    )?;
    let lcfg = LearnerConfig {
        gamma: T::lit(cfg.gamma),
        tau: T::lit(cfg.tau),
        pu: PuConfig {
            beta: T::lit(cfg.beta),
            lambda_pu: T::lit(cfg.lambda_pu),
            sigma: T::lit(cfg.target_noise),
            clip: T::lit(cfg.target_noise_clip),
        },
        batch_size: cfg.batch_size,
        policy_delay: cfg.policy_delay,
        order_mode: cfg.order_mode,
    };
    Learner::new(rule, lcfg, critic, actors)
}

fn random_action<R: Rng>(space: ActionSpace, n_agents: usize, rng: &mut R) -> JointAction {
    match space {
        ActionSpace::Continuous { dim } => JointAction::Continuous(
            (0..n_agents)
                .map(|_| (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect())
                .collect(),
        ),
        ActionSpace::Discrete { n } => JointAction::Discrete((0..n_agents).map(|_| rng.random_range(0..n)).collect()),
    }
}

/// Greedy-mode evaluation on the fixed evaluation layouts.
/// Returns the mean return and, where the environment defines it, the fraction
/// of episodes whose every step counted as a success.
pub fn evaluate<T: Scalar>(env: &Environment, actors: &GroupedActors<T>, episodes: usize) -> Result<(f64, Option<f64>)> {
    let mut rng = substream(0, Stream::Eval);
    let mut total = 0.0;
    let mut successes = 0usize;
    let mut has_success = false;
    for k in 0..episodes {
        let (mut state, mut obs) = env.reset(EVAL_SEED_BASE + k as u64);
        let mut ret = 0.0;
        let mut success = true;
        loop {
            let action = actors.act(&obs, ActMode::Greedy, &mut rng)?;
            let out = env.step(&state, &action)?;
            ret += out.reward;
            match env.is_success_reward(out.reward) {
                Some(s) => {
                    has_success = true;
                    success &= s;
                }
                None => success = false,
            }
            state = out.state;
            obs = out.observation;
            if out.done {
                break;
            }
        }
        total += ret;
        successes += success as usize;
    }
    let n = episodes as f64;
    Ok((total / n, has_success.then(|| successes as f64 / n)))
}

#[derive(Default)]
struct Window {
    critic: Vec<f64>,
    actor: Vec<f64>,
    uncertainty: Vec<f64>,
    train_returns: Vec<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl Window {
    fn drain(&mut self) -> (Option<f64>, Option<f64>, Option<f64>, Option<f64>) {
        let out = (mean(&self.train_returns), mean(&self.critic), mean(&self.actor), mean(&self.uncertainty));
        *self = Window::default();
        out
    }
}

fn cast<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::lit(x)).collect()
}

fn obs_matrix<T: Scalar>(obs: &JointObservation) -> Vec<Vec<T>> {
    obs.0.iter().map(|o| cast(o)).collect()
}

/// Trains one seed and writes `<stem>.metrics.jsonl`, `<stem>.timing.jsonl`
/// and `<stem>.ckpt` into `out_dir`.
///
/// The metrics file only appears once the run has finished; a numerical abort
/// leaves `<stem>.nan-dump.txt` instead and returns [`Error::NonFinite`].
pub fn run_training(cfg: &RunConfig, seed: u64, out_dir: &Path) -> Result<RunOutput> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let stem = run_stem(cfg, seed);
    let final_path = out_dir.join(format!("{stem}.metrics.jsonl"));
    let tmp_path = out_dir.join(format!("{stem}.metrics.jsonl.tmp"));
    let timing_path = out_dir.join(format!("{stem}.timing.jsonl"));
    let ckpt_path = out_dir.join(format!("{stem}.ckpt"));
    let dump_path = out_dir.join(format!("{stem}.nan-dump.txt"));

    let mut metrics = BufWriter::new(fs::File::create(&tmp_path)?);
    let mut timing = BufWriter::new(fs::File::create(&timing_path)?);
    let header = MetricsHeader::new(cfg, seed);
    serde_json::to_writer(&mut metrics, &header)?;
    metrics.write_all(b"\n")?;

    let mut last_step = 0;
    let emit = |rec: &MetricsRecord, elapsed: f64| -> Result<()> {
        last_step = rec.step;
        serde_json::to_writer(&mut metrics, rec)?;
        metrics.write_all(b"\n")?;
        serde_json::to_writer(&mut timing, &TimingRecord { step: rec.step, wall_clock_s: elapsed })?;
        timing.write_all(b"\n")?;
        metrics.flush()?;
        timing.flush()?;
        Ok(())
    };
    let result = match cfg.precision {
        Precision::F32 => train_loop::<f32, _>(cfg, seed, emit).and_then(|l| finish(&l, &ckpt_path)),
        Precision::F64 => train_loop::<f64, _>(cfg, seed, emit).and_then(|l| finish(&l, &ckpt_path)),
    };
    match result {
        Ok(()) => {
            fs::rename(&tmp_path, &final_path)?;
            Ok(RunOutput {
                metrics: final_path,
                timing: timing_path,
                checkpoint: ckpt_path,
            })
        }
        Err(e) => {
            drop(metrics);
            let _ = fs::remove_file(&tmp_path);
            if let Error::NonFinite(msg) = &e {
                let dump = format!(
                    "numerical abort\nrun: {stem}\nenv: {}\nalgo: {}\nlast recorded step: {last_step}\ncause: {msg}\nconfig: {}\n",
                    cfg.env,
                    cfg.algo,
                    serde_json::to_string(cfg)?,
                );
                fs::write(&dump_path, dump)?;
            }
            Err(e)
        }
    }
}

fn finish<T: Scalar>(learner: &Learner<T>, ckpt_path: &Path) -> Result<()> {
    let mut ck = BufWriter::new(fs::File::create(ckpt_path)?);
    write_checkpoint(&mut ck, &learner.critic, &learner.actors, learner.updates)?;
    ck.flush()?;
    Ok(())
}

/// The loop itself; `emit` receives each evaluation record and the elapsed seconds.
pub fn train_loop<T: Scalar, F>(cfg: &RunConfig, seed: u64, mut emit: F) -> Result<Learner<T>>
where
    F: FnMut(&MetricsRecord, f64) -> Result<()>,
{
    let started = Instant::now();
    let env = cfg.environment()?;
    let mut learner = build_learner::<T>(cfg, &env, seed)?;
    let space = env.action_space();
    let n_agents = env.n_agents();
    let shape = TransitionShape {
        state_dim: env.state_dim(),
        n_agents,
        obs_dim: env.obs_dim(),
        action_dim: space.slot_width() * n_agents,
    };
    let mut buffer = Buffer::new(cfg.buffer_capacity, shape)?;
    let mut env_rng = substream(seed, Stream::Env);
    let mut explore_rng = substream(seed, Stream::Exploration);
    let mut rngs: LearnerRngs<StreamRng> = LearnerRngs {
        replay: (0..learner.critic.n_heads()).map(|h| substream(seed, Stream::Replay(h))).collect(),
        actor: substream(seed, Stream::ActorBatch),
        ordering: substream(seed, Stream::Ordering),
    };

    let (mut state, mut obs) = env.reset(env_rng.random());
    let mut episode_return = 0.0;
    let mut episodes = 0u64;
    let mut window = Window::default();

    for step in 1..=cfg.total_steps {
        if cfg.fault_nan_step == Some(step) {
            learner.critic.online_mut(0).layers_mut()[0].weight[[0, 0]] = T::nan();
        }
        let action = if step <= cfg.warmup_steps {
            random_action(space, n_agents, &mut explore_rng)
        } else {
            learner.actors.act(&obs, ActMode::Explore, &mut explore_rng)?
        };
        let out = env.step(&state, &action)?;
        buffer.push(Transition {
            state: cast(&state.features),
            obs: obs_matrix(&obs),
            action: cast(&action.encode(space)?),
            reward: T::lit(out.reward),
            next_state: cast(&out.state.features),
            next_obs: obs_matrix(&out.observation),
            done: out.done,
        })?;
        episode_return += out.reward;
        if out.done {
            window.train_returns.push(episode_return);
            episodes += 1;
            episode_return = 0.0;
            (state, obs) = env.reset(env_rng.random());
        } else {
            state = out.state;
            obs = out.observation;
        }

        if step > cfg.warmup_steps && buffer.len() >= cfg.batch_size && step % cfg.update_every == 0 {
            let stats = learner.update(&buffer, &mut rngs, T::lit(cfg.temperature(step)))?;
            window.critic.push(stats.critic_loss.as_f64());
            window.actor.extend(stats.actor_loss.map(T::as_f64));
            window.uncertainty.extend(stats.uncertainty.map(T::as_f64));
        }

        if step % cfg.eval_interval == 0 || step == cfg.total_steps {
            if !learner.critic.is_finite() || !learner.actors.is_finite() {
                return Err(Error::NonFinite(format!("parameters at step {step}")));
            }
            let (eval_return, success_fraction) = evaluate(&env, &learner.actors, cfg.eval_episodes)?;
            let (train_return, critic_loss, actor_loss, uncertainty) = window.drain();
            let rec = MetricsRecord {
                step,
                episodes,
                updates: learner.updates,
                eval_return,
                success_fraction,
                train_return,
                critic_loss,
                actor_loss,
                uncertainty,
            };
            emit(&rec, started.elapsed().as_secs_f64())?;
        }
    }
    Ok(learner)
}
