//! JSONL metrics: a versioned header line followed by one record per evaluation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::{Error, Result};

pub const SCHEMA: &str = "omdpg.metrics";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsHeader {
    pub schema: String,
    pub version: u32,
    pub env: String,
    pub algo: String,
    pub label: String,
    pub seed: u64,
    pub config: RunConfig,
}

impl MetricsHeader {
    pub fn new(cfg: &RunConfig, seed: u64) -> Self {
        Self {
            schema: SCHEMA.into(),
            version: SCHEMA_VERSION,
            env: cfg.env.clone(),
            algo: cfg.algo.name().into(),
            label: cfg.label(),
            seed,
            config: RunConfig {
                seeds: vec![seed],
                ..cfg.clone()
            },
        }
    }
}

/// One evaluation point. Loss and uncertainty fields average the updates since
/// the previous record and are null when none happened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    pub episodes: u64,
    pub updates: u64,
    /// Mean greedy return over the evaluation layouts.
    pub eval_return: f64,
    /// Fraction of evaluation episodes hitting the payoff maximum (SignalLever only).
    pub success_fraction: Option<f64>,
    /// Mean return of training episodes finished since the previous record.
    pub train_return: Option<f64>,
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
    pub uncertainty: Option<f64>,
}

/// Wall-clock progress, kept out of the metrics file so that file stays reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub step: u64,
    pub wall_clock_s: f64,
}

/// A parsed metrics file.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsFile {
    pub header: MetricsHeader,
    pub records: Vec<MetricsRecord>,
}

impl MetricsFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let first = lines.next().ok_or_else(|| Error::Format("empty metrics file".into()))?;
        let header: MetricsHeader = serde_json::from_str(first)?;
        if header.schema != SCHEMA || header.version != SCHEMA_VERSION {
            return Err(Error::Format(format!("unsupported schema {} v{}", header.schema, header.version)));
        }
        let records = lines
            .map(|l| serde_json::from_str(l).map_err(Error::from))
            .collect::<Result<Vec<MetricsRecord>>>()?;
        if records.windows(2).any(|w| w[1].step <= w[0].step) {
            return Err(Error::Format("steps are not strictly increasing".into()));
        }
        Ok(Self { header, records })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Headline score of the last `window` records: success fraction when
    /// present, otherwise the evaluation return.
    pub fn final_score(&self, window: usize) -> Option<f64> {
        let tail = &self.records[self.records.len().saturating_sub(window.max(1))..];
        if tail.is_empty() {
            return None;
        }
        let vals: Vec<f64> = tail.iter().map(|r| r.success_fraction.unwrap_or(r.eval_return)).collect();
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}
