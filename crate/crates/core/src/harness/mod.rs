//! Training orchestration: configs, the seeded run loop, sweeps, metrics and plots.

pub mod config;
pub mod drift;
pub mod metrics;
pub mod plot;
pub mod reference;
pub mod sweep;
pub mod train;

pub use config::{DriftConfig, RunConfig};
pub use drift::drift_report;
pub use metrics::{MetricsFile, MetricsHeader, MetricsRecord};
pub use plot::emit_plot;
pub use sweep::{sweep, Aggregate, SweepReport};
pub use train::{run_training, RunOutput};
