//! SVG learning curves: per-label mean with a shaded ±1 std band.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::metrics::MetricsFile;
use crate::error::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 170.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Mean curve of one label over the steps every one of its runs recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub runs: usize,
    pub steps: Vec<u64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

fn score(r: &super::metrics::MetricsRecord) -> f64 {
    r.success_fraction.unwrap_or(r.eval_return)
}

/// Groups files by label and averages them step by step.
pub fn curves(files: &[MetricsFile]) -> Result<Vec<Curve>> {
    if files.is_empty() {
        return Err(Error::Config("no metrics files to plot".into()));
    }
    let mut by_label: BTreeMap<&str, Vec<&MetricsFile>> = BTreeMap::new();
    for f in files {
        by_label.entry(&f.header.label).or_default().push(f);
    }
    let mut out = Vec::new();
    for (label, group) in by_label {
        let mut per_step: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for f in &group {
            for r in &f.records {
                per_step.entry(r.step).or_default().push(score(r));
            }
        }
        let mut curve = Curve {
            label: label.to_string(),
            runs: group.len(),
            steps: Vec::new(),
            mean: Vec::new(),
            std: Vec::new(),
        };
        for (step, mut vals) in per_step {
            if vals.len() != group.len() {
                continue;
            }
            vals.sort_by(f64::total_cmp);
            let n = vals.len() as f64;
            let m = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
            curve.steps.push(step);
            curve.mean.push(m);
            curve.std.push(var.sqrt());
        }
        out.push(curve);
    }
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    if v.abs() >= 1000.0 {
        format!("{:.0}k", v / 1000.0)
    } else if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

/// Renders the curves as a standalone SVG document.
pub fn render_svg(curves: &[Curve], y_label: &str) -> String {
    let points = curves.iter().flat_map(|c| {
        c.steps.iter().zip(c.mean.iter().zip(&c.std)).map(|(&s, (&m, &d))| (s as f64, m - d, m + d))
    });
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, lo, hi) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(lo);
        y1 = y1.max(hi);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| MARGIN_T + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sx(fx),
            HEIGHT - MARGIN_B + 18.0,
            tick_label(fx)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            MARGIN_L - 6.0,
            sy(fy) + 4.0,
            tick_label(fy)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">environment steps</text>"#,
        MARGIN_L + pw / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        MARGIN_T + ph / 2.0,
        MARGIN_T + ph / 2.0,
        escape(y_label)
    );
    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let label = escape(&c.label);
        let _ = writeln!(s, r#"<g class="curve" data-label="{label}">"#);
        if !c.steps.is_empty() {
            let upper = c.steps.iter().zip(c.mean.iter().zip(&c.std)).map(|(&x, (&m, &d))| (x, m + d));
            let lower = c.steps.iter().zip(c.mean.iter().zip(&c.std)).rev().map(|(&x, (&m, &d))| (x, m - d));
            let band: Vec<String> = upper
                .chain(lower)
                .map(|(x, y)| format!("{:.2},{:.2}", sx(x as f64), sy(y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                band.join(" ")
            );
            let line: Vec<String> = c
                .steps
                .iter()
                .zip(&c.mean)
                .map(|(&x, &m)| format!("{:.2},{:.2}", sx(x as f64), sy(m)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline class="mean" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                line.join(" ")
            );
        }
        let ly = MARGIN_T + 16.0 + 20.0 * i as f64;
        let lx = WIDTH - MARGIN_R + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="3"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{label} (n={})</text>"#,
            lx + 26.0,
            ly + 4.0,
            c.runs
        );
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

/// Metrics files directly inside `dir`, sorted by name.
pub fn metrics_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".metrics.jsonl"))
        .collect();
    paths.sort();
    Ok(paths)
}

/// Plots every metrics file in `in_dir` to `out`.
pub fn emit_plot(in_dir: &Path, out: &Path) -> Result<()> {
    let files = metrics_files(in_dir)?
        .iter()
        .map(|p| MetricsFile::load(p))
        .collect::<Result<Vec<_>>>()?;
    let cs = curves(&files)?;
    let y_label = if files.iter().any(|f| f.records.iter().any(|r| r.success_fraction.is_some())) {
        "success fraction"
    } else {
        "evaluation return"
    };
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(out, render_svg(&cs, y_label))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::RunConfig;
    use crate::harness::metrics::{MetricsHeader, MetricsRecord};

    fn file(label: &str, seed: u64, vals: &[f64]) -> MetricsFile {
        let cfg = RunConfig {
            label: Some(label.into()),
            ..RunConfig::default()
        };
        MetricsFile {
            header: MetricsHeader::new(&cfg, seed),
            records: vals
                .iter()
                .enumerate()
                .map(|(k, &v)| MetricsRecord {
                    step: 100 * (k as u64 + 1),
                    episodes: 0,
                    updates: 0,
                    eval_return: v,
                    success_fraction: None,
                    train_return: None,
                    critic_loss: None,
                    actor_loss: None,
                    uncertainty: None,
                })
                .collect(),
        }
    }

    #[test]
    fn constant_runs_give_flat_zero_width_band() {
        let cs = curves(&[file("a", 0, &[2.0, 2.0, 2.0]), file("a", 1, &[2.0, 2.0, 2.0])]).unwrap();
        assert_eq!(cs.len(), 1);
        assert!(cs[0].mean.iter().all(|&m| m == 2.0));
        assert!(cs[0].std.iter().all(|&d| d == 0.0));
        let svg = render_svg(&cs, "return");
        roxmltree::Document::parse(&svg).unwrap();
    }

    #[test]
    fn two_labels_give_two_labelled_curves() {
        let cs = curves(&[file("x", 0, &[1.0, 2.0]), file("y", 0, &[0.0, 4.0]), file("x", 1, &[3.0, 2.0])]).unwrap();
        assert_eq!(cs.len(), 2);
        assert_eq!(cs[0].mean, vec![2.0, 2.0]);
        assert_eq!(cs[0].std, vec![1.0, 0.0]);
        let svg = render_svg(&cs, "return");
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let labels: Vec<_> = doc
            .descendants()
            .filter(|n| n.attribute("class") == Some("curve"))
            .map(|n| n.attribute("data-label").unwrap().to_string())
            .collect();
        assert_eq!(labels, ["x", "y"]);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(curves(&[]).is_err());
    }
}
