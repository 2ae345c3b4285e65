//! Writes the ratio diagnostic for the standard SignalLever game.

use std::path::{Path, PathBuf};

use super::config::DriftConfig;
use crate::envs::SignalLever;
use crate::error::Result;
use crate::oracle::{ratio_diagnostic, RatioReport};

/// Runs the diagnostic and writes `ratio_report.csv` and `ratio_summary.txt` into `out_dir`.
pub fn drift_report(cfg: &DriftConfig, out_dir: &Path) -> Result<(RatioReport, PathBuf, PathBuf)> {
    let env = SignalLever::standard();
    let game = env.game();
    let init = cfg
        .init_logits
        .clone()
        .unwrap_or_else(|| vec![vec![0.0; game.n_actions()]; game.groups().n_groups()]);
    let report = ratio_diagnostic(game, &init, cfg.lr, cfg.reference.as_deref())?;
    std::fs::create_dir_all(out_dir)?;
    let csv = out_dir.join("ratio_report.csv");
    let txt = out_dir.join("ratio_summary.txt");
    std::fs::write(&csv, report.to_csv())?;
    std::fs::write(&txt, report.summary())?;
    Ok((report, csv, txt))
}
