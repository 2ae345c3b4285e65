use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use omdpg::checkpoint::read_checkpoint;
use omdpg::harness::{MetricsFile, RunConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_omdpg"))
}

fn small_config(extra: &str) -> String {
    format!(
        r#"{{"env": "signal_lever", "algo": "omdpg", "total_steps": 300, "warmup_steps": 100,
            "batch_size": 16, "buffer_capacity": 1000, "critic_hidden": [16, 16], "actor_hidden": [16],
            "eval_interval": 100, "eval_episodes": 2{extra}}}"#
    )
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    if !out.status.success() {
        eprintln!("stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn train(config: &Path, seed: u64, out: &Path) -> Output {
    run(bin()
        .args(["train", "--config"])
        .arg(config)
        .args(["--seed", &seed.to_string(), "--out"])
        .arg(out))
}

#[test]
fn train_writes_metrics_timing_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &small_config(""));
    let out = dir.path().join("run");
    assert!(train(&cfg, 3, &out).status.success());
    let m = MetricsFile::load(&out.join("omdpg_seed3.metrics.jsonl")).unwrap();
    assert_eq!(m.header.seed, 3);
    assert_eq!(m.records.iter().map(|r| r.step).collect::<Vec<_>>(), [100, 200, 300]);
    assert!(m.records.iter().all(|r| r.success_fraction.is_some()));
    assert!(m.records[2].critic_loss.is_some());
    let timing = fs::read_to_string(out.join("omdpg_seed3.timing.jsonl")).unwrap();
    assert_eq!(timing.lines().count(), 3);
    let ck = fs::File::open(out.join("omdpg_seed3.ckpt")).unwrap();
    let (_, _, updates) = read_checkpoint::<_, f64>(std::io::BufReader::new(ck)).unwrap();
    assert_eq!(updates, m.records[2].updates);
}

#[test]
fn zero_steps_gives_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let body = small_config("").replace(r#""total_steps": 300"#, r#""total_steps": 0"#);
    let cfg = write_config(dir.path(), "c.json", &body);
    assert!(train(&cfg, 0, dir.path()).status.success());
    let text = fs::read_to_string(dir.path().join("omdpg_seed0.metrics.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(MetricsFile::parse(&text).unwrap().records.is_empty());
}

#[test]
fn same_seed_reproduces_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &small_config(""));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(train(&cfg, 11, &a).status.success());
    assert!(train(&cfg, 11, &b).status.success());
    let name = "omdpg_seed11.metrics.jsonl";
    assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap());
    assert_eq!(
        fs::read(a.join("omdpg_seed11.ckpt")).unwrap(),
        fs::read(b.join("omdpg_seed11.ckpt")).unwrap()
    );
    let c = dir.path().join("c");
    assert!(train(&cfg, 12, &c).status.success());
    assert_ne!(fs::read(a.join(name)).unwrap(), fs::read(c.join("omdpg_seed12.metrics.jsonl")).unwrap());
}

#[test]
fn unknown_key_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &small_config(r#", "lamda_pu": 0.1"#));
    let out = train(&cfg, 0, dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lamda_pu"));
    let cfg = write_config(dir.path(), "g.json", &small_config(r#", "gamma": 1.5"#));
    assert_eq!(train(&cfg, 0, dir.path()).status.code(), Some(2));
}

#[test]
fn injected_nan_aborts_with_code_3_and_dump() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &small_config(r#", "fault_nan_step": 150"#));
    let out = train(&cfg, 0, dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(!dir.path().join("omdpg_seed0.metrics.jsonl").exists());
    assert!(!dir.path().join("omdpg_seed0.metrics.jsonl.tmp").exists());
    let dump = fs::read_to_string(dir.path().join("omdpg_seed0.nan-dump.txt")).unwrap();
    assert!(dump.contains("critic head 0"), "{dump}");
}

#[test]
fn sweep_concurrency_does_not_change_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &small_config(""));
    let (par, ser) = (dir.path().join("par"), dir.path().join("ser"));
    let o = run(bin().args(["sweep", "--config"]).arg(&cfg).args(["--seeds", "1,2,3", "--out"]).arg(&par));
    assert!(o.status.success());
    let o = run(bin()
        .args(["sweep", "--serial", "--config"])
        .arg(&cfg)
        .args(["--seeds", "3,1,2", "--out"])
        .arg(&ser));
    assert!(o.status.success());
    for s in 1..=3 {
        let name = format!("omdpg_seed{s}.metrics.jsonl");
        assert_eq!(fs::read(par.join(&name)).unwrap(), fs::read(ser.join(&name)).unwrap(), "{name}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(par.join("omdpg.summary.json")).unwrap()).unwrap();
    let scores: Vec<f64> = (1..=3)
        .map(|s| {
            let m = MetricsFile::load(&par.join(format!("omdpg_seed{s}.metrics.jsonl"))).unwrap();
            m.final_score(omdpg::harness::sweep::FINAL_WINDOW).unwrap()
        })
        .collect();
    let mean = scores.iter().sum::<f64>() / 3.0;
    let std = (scores.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
    assert!((summary["aggregate"]["mean"].as_f64().unwrap() - mean).abs() < 1e-12);
    assert!((summary["aggregate"]["std"].as_f64().unwrap() - std).abs() < 1e-12);
    assert_eq!(summary["aggregate"]["n"], 3);
}

#[test]
fn sweep_reports_partial_failures_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let cfg: RunConfig = serde_json::from_str(&small_config(r#", "fault_nan_step": 150"#)).unwrap();
    let ok_cfg = RunConfig {
        fault_nan_step: None,
        ..cfg.clone()
    };
    let bad = omdpg::harness::sweep(&cfg, &[5], dir.path(), true).unwrap();
    assert_eq!(bad.runs[0].exit_code, 3);
    assert!(bad.aggregate.is_none());
    let good = omdpg::harness::sweep(&ok_cfg, &[6, 7], dir.path(), true).unwrap();
    assert_eq!(good.failures().count(), 0);
    assert_eq!(good.aggregate.unwrap().n, 2);
}

#[test]
fn plot_renders_well_formed_svg() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.json", &small_config(""));
    let cfg2 = write_config(
        dir.path(),
        "b.json",
        &small_config("").replace(r#""algo": "omdpg""#, r#""algo": "matd3-parps""#),
    );
    let runs = dir.path().join("runs");
    for s in [1, 2] {
        assert!(train(&cfg, s, &runs).status.success());
        assert!(train(&cfg2, s, &runs).status.success());
    }
    let svg = dir.path().join("plot.svg");
    assert!(run(bin().args(["plot", "--in"]).arg(&runs).arg("--out").arg(&svg)).status.success());
    let text = fs::read_to_string(&svg).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    let labels: Vec<_> = doc
        .descendants()
        .filter_map(|n| n.attribute("data-label"))
        .collect();
    assert_eq!(labels, ["matd3-parps", "omdpg"]);
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let o = bin().args(["plot", "--in"]).arg(&empty).arg("--out").arg(&svg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn drift_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "d.json", r#"{"lr": 0.1}"#);
    let o = run(bin().args(["drift", "--config"]).arg(&cfg).arg("--out").arg(dir.path()));
    assert!(o.status.success());
    let csv = fs::read_to_string(dir.path().join("ratio_report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 3);
    assert!(dir.path().join("ratio_summary.txt").exists());
    let bad = write_config(dir.path(), "bad.json", r#"{"learning_rate": 0.1}"#);
    let o = bin().args(["drift", "--config"]).arg(&bad).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gradcheck_command_passes() {
    let o = run(bin().args(["gradcheck", "--seeds", "3"]));
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.lines().filter(|l| l.ends_with("ok")).count(), 4, "{text}");
}

#[test]
fn f32_runs_are_reproducible_and_checkpoint_as_f64() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &small_config(r#", "precision": "f32""#));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(train(&cfg, 4, &a).status.success());
    assert!(train(&cfg, 4, &b).status.success());
    let name = "omdpg_seed4.metrics.jsonl";
    assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap());
    let m = MetricsFile::load(&a.join(name)).unwrap();
    assert_eq!(m.header.config.precision, omdpg::harness::config::Precision::F32);
    let ck = fs::File::open(a.join("omdpg_seed4.ckpt")).unwrap();
    let (_, _, updates) = read_checkpoint::<_, f32>(std::io::BufReader::new(ck)).unwrap();
    assert_eq!(updates, m.records[2].updates);
}
