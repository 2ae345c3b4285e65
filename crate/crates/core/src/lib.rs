//! Optimal-marginal deterministic policy gradient for heterogeneous cooperative
//! multi-agent reinforcement learning.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`). The aliases at
//! the bottom of this file name both instantiations; training runs pick one via
//! the `precision` config key.

pub mod baselines;
pub mod ccga;
pub mod checkpoint;
pub mod envs;
pub mod error;
pub mod gqc;
pub mod harness;
pub mod numkit;
pub mod oracle;
pub mod replay;
pub mod rng;
mod scalar;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Mlp = numkit::MlpParams<f64>;
pub type Mlp32 = numkit::MlpParams<f32>;
pub type Critic = gqc::CriticEnsemble<f64>;
pub type Critic32 = gqc::CriticEnsemble<f32>;
pub type Actors = ccga::GroupedActors<f64>;
pub type Actors32 = ccga::GroupedActors<f32>;
pub type DefaultLearner = baselines::Learner<f64>;
pub type ReplayBuffer = replay::Buffer<f64>;
