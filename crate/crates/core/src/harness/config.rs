//! Run configuration: a flat JSON object whose unknown keys are rejected.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::Algo;
use crate::ccga::OrderMode;
use crate::envs::{CooperativeEnv, Environment, GroupSpec};
use crate::error::{Error, Result};

/// Floating-point type the networks are trained in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

/// Every hyperparameter of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `"team_reach_het"` or `"signal_lever"`.
    pub env: String,
    /// Episode length override.
    pub horizon: Option<usize>,
    pub algo: Algo,
    /// Label used in file names and plot legends; defaults to the algorithm name.
    pub label: Option<String>,
    /// Group assignment override (one zero-based group id per agent).
    pub groups: Option<Vec<usize>>,
    /// Sequential agent order override.
    pub ordering: Option<Vec<usize>>,
    pub order_mode: OrderMode,
    pub c_k: usize,
    pub beta: f64,
    pub lambda_pu: f64,
    pub target_noise: f64,
    pub target_noise_clip: f64,
    pub tau: f64,
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub exploration_sigma: f64,
    pub total_steps: u64,
    /// Steps of uniformly random actions before learning starts.
    pub warmup_steps: u64,
    /// Environment steps between learner updates.
    pub update_every: u64,
    /// Critic updates per actor and target update.
    pub policy_delay: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub precision: Precision,
    /// Straight-through relaxation temperature, annealed linearly over the run.
    pub temperature_start: f64,
    pub temperature_end: f64,
    pub seeds: Vec<u64>,
    pub out_dir: Option<PathBuf>,
    /// Fault injection: poison critic head 0 with NaN at this environment step.
    pub fault_nan_step: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: "team_reach_het".into(),
            horizon: None,
            algo: Algo::Omdpg,
            label: None,
            groups: None,
            ordering: None,
            order_mode: OrderMode::Fixed,
            c_k: 5,
            beta: 0.5,
            lambda_pu: 0.1,
            target_noise: 0.2,
            target_noise_clip: 0.5,
            tau: 0.005,
            gamma: 0.95,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            buffer_capacity: 50_000,
            batch_size: 256,
            exploration_sigma: 0.1,
            total_steps: 150_000,
            warmup_steps: 2_000,
            update_every: 1,
            policy_delay: 2,
            eval_interval: 1_000,
            eval_episodes: 10,
            actor_hidden: vec![64, 64],
            critic_hidden: vec![128, 128],
            precision: Precision::F64,
            temperature_start: 1.0,
            temperature_end: 0.5,
            seeds: vec![0],
            out_dir: None,
            fault_nan_step: None,
        }
    }
}

impl RunConfig {
    /// Defaults adjusted to the named environment.
    pub fn for_env(env: &str) -> Self {
        let base = Self {
            env: env.into(),
            ..Self::default()
        };
        match env {
            "signal_lever" => Self {
                buffer_capacity: 10_000,
                batch_size: 64,
                total_steps: 50_000,
                warmup_steps: 500,
                ..base
            },
            _ => base,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.algo.name().to_string())
    }

    pub fn environment(&self) -> Result<Environment> {
        Environment::build(&self.env, self.horizon)
    }

    /// Environment groups with the configured overrides applied.
    pub fn env_groups(&self, env: &Environment) -> Result<GroupSpec> {
        let base = env.groups();
        let assignment = self.groups.clone().unwrap_or_else(|| base.assignment().to_vec());
        if assignment.len() != env.n_agents() {
            return Err(Error::Config(format!(
                "groups has {} entries for {} agents",
                assignment.len(),
                env.n_agents()
            )));
        }
        let ordering = self.ordering.clone().unwrap_or_else(|| base.ordering().to_vec());
        GroupSpec::new(assignment, ordering)
    }

    pub fn validate(&self) -> Result<()> {
        let env = self.environment()?;
        self.env_groups(&env)?;
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma {} outside [0, 1)", self.gamma));
        }
        for (name, v) in [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("target_noise", self.target_noise),
            ("target_noise_clip", self.target_noise_clip),
            ("temperature_start", self.temperature_start),
            ("temperature_end", self.temperature_end),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("beta", self.beta),
            ("lambda_pu", self.lambda_pu),
            ("exploration_sigma", self.exploration_sigma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau {} outside (0, 1]", self.tau));
        }
        if self.c_k < 2 {
            return bad(format!("c_k must be at least 2, got {}", self.c_k));
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("need 0 < batch_size <= buffer_capacity".into());
        }
        for (name, v) in [
            ("update_every", self.update_every),
            ("policy_delay", self.policy_delay),
            ("eval_interval", self.eval_interval),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.eval_episodes == 0 {
            return bad("eval_episodes must be positive".into());
        }
        if self.actor_hidden.contains(&0) || self.critic_hidden.contains(&0) {
            return bad("hidden layer widths must be positive".into());
        }
        let unique: HashSet<_> = self.seeds.iter().collect();
        if unique.len() != self.seeds.len() {
            return bad(format!("seeds {:?} are not distinct", self.seeds));
        }
        if let Some(label) = &self.label {
            if label.is_empty() || !label.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
                return bad(format!("label {label:?} must be non-empty ASCII letters, digits, '-', '_' or '.'"));
            }
        }
        Ok(())
    }

    /// Relaxation temperature at `step`.
    pub fn temperature(&self, step: u64) -> f64 {
        if self.total_steps == 0 {
            return self.temperature_start;
        }
        let frac = (step as f64 / self.total_steps as f64).min(1.0);
        self.temperature_start + (self.temperature_end - self.temperature_start) * frac
    }
}

/// Parameters of the drift diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftConfig {
    pub lr: f64,
    /// One logit row per group; zeros (uniform policies) by default.
    pub init_logits: Option<Vec<Vec<f64>>>,
    /// Joint action at which ratios are evaluated; the payoff argmax by default.
    pub reference: Option<Vec<usize>>,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            lr: 0.1,
            init_logits: None,
            reference: None,
        }
    }
}

impl DriftConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        RunConfig::default().validate().unwrap();
        RunConfig::for_env("signal_lever").validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_json(r#"{"env": "signal_lever", "lamda_pu": 0.1}"#).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c = RunConfig::from_json(r#"{"env": "signal_lever", "algo": "matd3-parps", "c_k": 3}"#).unwrap();
        assert_eq!(c.algo, Algo::Matd3Parps);
        assert_eq!(c.c_k, 3);
        assert_eq!(c.lambda_pu, 0.1);
    }

    #[test]
    fn invalid_values_are_rejected() {
        for json in [
            r#"{"gamma": 1.0}"#,
            r#"{"actor_lr": 0.0}"#,
            r#"{"seeds": [1, 1]}"#,
            r#"{"c_k": 1}"#,
            r#"{"env": "nowhere"}"#,
            r#"{"groups": [0, 1]}"#,
            r#"{"tau": 0.0}"#,
            r#"{"label": "a b"}"#,
        ] {
            assert!(RunConfig::from_json(json).is_err(), "{json}");
        }
    }

    #[test]
    fn temperature_anneals_linearly() {
        let c = RunConfig {
            total_steps: 100,
            ..RunConfig::default()
        };
        assert_eq!(c.temperature(0), 1.0);
        assert_eq!(c.temperature(50), 0.75);
        assert_eq!(c.temperature(100), 0.5);
        assert_eq!(c.temperature(1000), 0.5);
    }
}
