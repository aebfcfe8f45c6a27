//! Command-line front end: `run <config>`, `summarize <dir>`, `compare <dir>`.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::Result;
use crate::harness::compare::{compare_policies, ComparisonReport};
use crate::harness::config::{ExperimentConfig, Mode};
use crate::harness::runner::{load_runs, run_experiment, summarize_dir, write_json, ExperimentSummary};

#[derive(Debug, Parser)]
#[command(name = "e3cs", version, about = "Federated client-selection experiments with volatile clients")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Replace the configured seeds (comma-separated).
    #[arg(long, global = true, value_delimiter = ',')]
    pub seed_override: Option<Vec<u64>>,

    /// Replace the configured run mode.
    #[arg(long, global = true, value_enum)]
    pub mode: Option<Mode>,

    /// Output directory (for `run`) or where reports are written (otherwise).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every (policy, seed) pair of a TOML configuration.
    Run { config: PathBuf },
    /// Rebuild summary.json from the run files of a result directory.
    Summarize { dir: PathBuf },
    /// Paired sign-test comparison of every policy pair in a result directory.
    Compare { dir: PathBuf },
}

/// Executes the command, printing a report to stdout. Returns `false` when
/// some run failed.
pub fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { config } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seeds) = cli.seed_override {
                cfg.seeds = seeds;
            }
            if let Some(mode) = cli.mode {
                cfg.mode = mode;
            }
            if let Some(out) = cli.out {
                cfg.out_dir = out;
            }
            let report = run_experiment(&cfg)?;
            print!("{}", render_summary(&report.summary));
            for (policy, seed, err) in &report.failures {
                eprintln!("run {policy} seed {seed} failed: {err}");
            }
            println!("results in {}", cfg.out_dir.display());
            Ok(report.is_complete())
        }
        Command::Summarize { dir } => {
            let summary = summarize_dir(&dir)?;
            if let Some(out) = cli.out {
                std::fs::create_dir_all(&out).map_err(|e| crate::Error::io(&out, e))?;
                write_json(&out.join("summary.json"), &summary)?;
            }
            print!("{}", render_summary(&summary));
            Ok(true)
        }
        Command::Compare { dir } => {
            let report = compare_policies(&load_runs(&dir)?)?;
            let out = cli.out.unwrap_or(dir);
            std::fs::create_dir_all(&out).map_err(|e| crate::Error::io(&out, e))?;
            write_json(&out.join("comparison.json"), &report)?;
            print!("{}", render_comparison(&report));
            Ok(true)
        }
    }
}

pub fn render_summary(summary: &ExperimentSummary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<12} {:>6} {:>13} {:>10} {:>9}", "policy", "seeds", "success_ratio", "regret", "accuracy");
    for p in &summary.policies {
        let acc = p.mean_final_accuracy.map_or("-".to_string(), |a| format!("{a:.4}"));
        let _ = writeln!(
            s,
            "{:<12} {:>6} {:>13.4} {:>10.1} {:>9}",
            p.policy,
            p.seeds.len(),
            p.mean_success_ratio,
            p.mean_regret,
            acc
        );
    }
    s
}

pub fn render_comparison(report: &ComparisonReport) -> String {
    let mut s = String::new();
    for pair in &report.pairs {
        let _ = writeln!(s, "{} vs {} ({} seeds)", pair.a, pair.b, pair.seeds.len());
        for m in &pair.metrics {
            let mean = m.mean_difference.map_or("-".to_string(), |d| format!("{d:+.4}"));
            let _ = writeln!(
                s,
                "  {:<24} better {:>2}  worse {:>2}  tied {:>2}  p={:.4}  mean diff {}",
                m.metric, m.sign.wins, m.sign.losses, m.sign.ties, m.sign.p_value, mean
            );
        }
    }
    s
}
