//! Dense-network numerics: forward/backward passes, Adam, soft target updates
//! and a finite-difference gradient checker.

pub mod gradcheck;
pub mod mlp;
pub mod optim;

pub use gradcheck::fd_gradcheck;
pub use mlp::{soft_update, Activation, Dense, ForwardCache, MlpGrads, MlpParams};
pub use optim::{AdamConfig, OptState};
