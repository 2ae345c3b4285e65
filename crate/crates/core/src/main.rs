use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use omdpg::harness::{self, DriftConfig, RunConfig};
use omdpg::{Error, Result};

#[derive(Parser)]
#[command(name = "omdpg", version, about = "Train and diagnose OMDPG and MATD3 baselines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one seed.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train several seeds concurrently and aggregate their final scores.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Run the seeds one after another.
        #[arg(long)]
        serial: bool,
    },
    /// Plot every metrics file in a directory as an SVG.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the sequential-ratio drift report.
    Drift {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the finite-difference gradient suite.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
}

const GRAD_TOLERANCE: f64 = 1e-4;

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, seed, out } => {
            let cfg = RunConfig::load(&config)?;
            let res = harness::run_training(&cfg, seed, &out)?;
            println!("{}", res.metrics.display());
        }
        Command::Sweep {
            config,
            seeds,
            out,
            serial,
        } => {
            let cfg = RunConfig::load(&config)?;
            let report = harness::sweep(&cfg, &seeds, &out, !serial)?;
            for r in &report.runs {
                match (&r.error, r.final_score) {
                    (Some(e), _) => eprintln!("seed {}: failed (exit {}): {e}", r.seed, r.exit_code),
                    (None, Some(s)) => println!("seed {}: final score {s:.4}", r.seed),
                    (None, None) => println!("seed {}: no evaluations", r.seed),
                }
            }
            if let Some(a) = &report.aggregate {
                println!("{}: mean {:.4} std {:.4} over {} runs", report.label, a.mean, a.std, a.n);
            }
            if let Some(worst) = report.failures().map(|r| r.exit_code).max() {
                return Err(if worst == 3 {
                    Error::NonFinite("one or more runs aborted".into())
                } else {
                    Error::Config("one or more runs failed".into())
                });
            }
        }
        Command::Plot { input, out } => {
            harness::emit_plot(&input, &out)?;
            println!("{}", out.display());
        }
        Command::Drift { config, out } => {
            let cfg = match config {
                Some(p) => DriftConfig::load(&p)?,
                None => DriftConfig::default(),
            };
            let (report, _, _) = harness::drift_report(&cfg, &out)?;
            print!("{}", report.summary());
        }
        Command::Gradcheck { seeds } => {
            let results = omdpg::verify::gradient_suite(0..seeds)?;
            let mut worst: std::collections::BTreeMap<&str, f64> = Default::default();
            for r in &results {
                let w = worst.entry(r.name).or_insert(0.0);
                *w = w.max(r.max_rel_err);
            }
            let mut ok = true;
            for (name, err) in worst {
                let pass = err < GRAD_TOLERANCE;
                ok &= pass;
                println!("{name:<10} max rel err {err:.3e} {}", if pass { "ok" } else { "FAIL" });
            }
            if !ok {
                return Err(Error::NonFinite(format!("gradient error above {GRAD_TOLERANCE}")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
