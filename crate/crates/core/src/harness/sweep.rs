//! Multi-seed sweeps and their order-independent aggregation.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::metrics::MetricsFile;
use super::train::run_training;
use crate::error::{Error, Result};

/// Number of trailing evaluation records averaged into a run's final score.
pub const FINAL_WINDOW: usize = 5;

/// Outcome of one run inside a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub metrics: Option<PathBuf>,
    pub final_score: Option<f64>,
    pub error: Option<String>,
    pub exit_code: i32,
}

/// Mean and population standard deviation of the successful runs' final scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

impl Aggregate {
    /// Sorts before summing so the result does not depend on completion order.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            n: v.len(),
            mean,
            std: var.sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub label: String,
    pub runs: Vec<RunResult>,
    pub aggregate: Option<Aggregate>,
}

impl SweepReport {
    pub fn failures(&self) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter(|r| r.error.is_some())
    }
}

fn one(cfg: &RunConfig, seed: u64, out_dir: &Path) -> RunResult {
    let outcome = run_training(cfg, seed, out_dir)
        .and_then(|out| MetricsFile::load(&out.metrics).map(|m| (out.metrics, m.final_score(FINAL_WINDOW))));
    match outcome {
        Ok((path, score)) => RunResult {
            seed,
            metrics: Some(path),
            final_score: score,
            error: None,
            exit_code: 0,
        },
        Err(e) => RunResult {
            seed,
            metrics: None,
            final_score: None,
            exit_code: e.exit_code(),
            error: Some(e.to_string()),
        },
    }
}

/// Runs every seed (concurrently when `parallel`), then writes
/// `<label>.summary.json`. Failed runs are reported and do not stop the others.
pub fn sweep(cfg: &RunConfig, seeds: &[u64], out_dir: &Path, parallel: bool) -> Result<SweepReport> {
    let mut cfg = cfg.clone();
    cfg.seeds = seeds.to_vec();
    cfg.validate()?;
    if seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one seed".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let runs: Vec<RunResult> = if parallel {
        seeds.par_iter().map(|&s| one(&cfg, s, out_dir)).collect()
    } else {
        seeds.iter().map(|&s| one(&cfg, s, out_dir)).collect()
    };
    let scores: Vec<f64> = runs.iter().filter_map(|r| r.final_score).collect();
    let report = SweepReport {
        label: cfg.label(),
        runs,
        aggregate: Aggregate::of(&scores),
    };
    let path = out_dir.join(format!("{}.summary.json", report.label));
    std::fs::write(path, serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn aggregate_matches_direct_formula() {
        let a = Aggregate::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(a.mean, 2.5);
        assert!((a.std - 1.25f64.sqrt()).abs() < 1e-15);
        assert!(Aggregate::of(&[]).is_none());
    }

    proptest! {
        #[test]
        fn aggregate_is_order_independent(mut v in prop::collection::vec(-1e3f64..1e3, 1..12), seed in any::<u64>()) {
            let a = Aggregate::of(&v).unwrap();
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            v.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let b = Aggregate::of(&v).unwrap();
            prop_assert_eq!(a.mean.to_bits(), b.mean.to_bits());
            prop_assert_eq!(a.std.to_bits(), b.std.to_bits());
        }
    }
}
