//! Multi-seed orchestration and result files.
//!
//! Layout of an output directory:
//!
//! ```text
//! <out>/config.toml              resolved configuration
//! <out>/runs/<policy>_seed<s>.csv   one row per round
//! <out>/runs/<policy>_seed<s>.json  RunSummary of that run
//! <out>/summary.json             ExperimentSummary over all runs
//! ```
//!
//! Every file is written to a temporary name and renamed into place, so a run
//! that fails never leaves a truncated file over a completed one.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{gen_synthetic, partition};
use crate::error::{Error, Result};
use crate::flcore::{evaluate, local_update, ModelWeights, RoundRecord, Simulation, TrainingTask, UpdateConfig};
use crate::harness::config::{ExperimentConfig, Mode};
use crate::metrics::{bound_series, summarize, Quartiles};
use crate::rng::{stream, Domain};
use crate::selection::PolicyKind;
use crate::volatility::{gen_population, success_rates, ClientProfile};

/// Exact CSV header of the per-round files.
pub const CSV_COLUMNS: [&str; 10] = [
    "round",
    "policy",
    "seed",
    "effective_count",
    "cep",
    "success_ratio",
    "accuracy",
    "loss",
    "regret",
    "bound",
];

/// One CSV row. `accuracy`/`loss` are empty in numerical mode and `bound`
/// is empty for policies without a learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub round: usize,
    pub policy: String,
    pub seed: u64,
    pub effective_count: usize,
    /// Cumulative effective participation.
    pub cep: u64,
    /// `cep / (round * k)`.
    pub success_ratio: f64,
    pub accuracy: Option<f64>,
    pub loss: Option<f64>,
    pub regret: f64,
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub policy: String,
    pub seed: u64,
    pub mode: Mode,
    pub rounds: usize,
    pub k: usize,
    pub clients: usize,
    pub eta: Option<f64>,
    pub success_ratio: f64,
    pub cep: u64,
    pub regret: f64,
    pub bound: Option<f64>,
    pub final_accuracy: Option<f64>,
    pub final_loss: Option<f64>,
    pub thresholds: Vec<f64>,
    /// First round whose accuracy reaches each threshold.
    pub rounds_to_threshold: Vec<Option<usize>>,
    pub selection_counts: Vec<u64>,
    /// Selection-count quartiles per volatility class.
    pub class_quartiles: Vec<Quartiles>,
    pub exponent_violations: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyAggregate {
    pub policy: String,
    pub seeds: Vec<u64>,
    pub mean_success_ratio: f64,
    pub mean_regret: f64,
    pub mean_final_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub policies: Vec<PolicyAggregate>,
    pub runs: Vec<RunSummary>,
}

impl ExperimentSummary {
    /// Groups runs by policy in order of first appearance.
    pub fn from_runs(mut runs: Vec<RunSummary>) -> Self {
        let mut order: Vec<String> = Vec::new();
        for r in &runs {
            if !order.contains(&r.policy) {
                order.push(r.policy.clone());
            }
        }
        runs.sort_by_key(|r| (order.iter().position(|p| *p == r.policy), r.seed));
        let policies = order
            .into_iter()
            .map(|policy| {
                let group: Vec<&RunSummary> = runs.iter().filter(|r| r.policy == policy).collect();
                let n = group.len() as f64;
                let accuracies: Option<Vec<f64>> = group.iter().map(|r| r.final_accuracy).collect();
                PolicyAggregate {
                    seeds: group.iter().map(|r| r.seed).collect(),
                    mean_success_ratio: group.iter().map(|r| r.success_ratio).sum::<f64>() / n,
                    mean_regret: group.iter().map(|r| r.regret).sum::<f64>() / n,
                    mean_final_accuracy: accuracies.map(|a| a.iter().sum::<f64>() / n),
                    policy,
                }
            })
            .collect();
        ExperimentSummary { policies, runs }
    }
}

/// Everything a run needs that depends only on the seed, so that every
/// policy of one seed faces the same clients, data and dropouts.
#[derive(Debug, Clone)]
pub struct Environment {
    pub seed: u64,
    pub profiles: Vec<ClientProfile>,
    pub task: Option<TrainingTask>,
    pub thresholds: Vec<f64>,
}

pub fn build_environment(cfg: &ExperimentConfig, seed: u64) -> Result<Environment> {
    let profiles = gen_population(&cfg.population, &mut stream(seed, Domain::Population, 0, 0))?;
    let (task, thresholds) = match cfg.mode {
        Mode::Numerical => (None, Vec::new()),
        Mode::Training => {
            let d = &cfg.dataset;
            let data = gen_synthetic(d.classes, d.dim, d.size, d.separation, &mut stream(seed, Domain::Dataset, 0, 0))?;
            let shards = partition(&data, profiles.len(), &cfg.partition, &mut stream(seed, Domain::Partition, 0, 0))?;
            let initial = ModelWeights::gaussian(d.classes, d.dim, d.init_scale, &mut stream(seed, Domain::ModelInit, 0, 0));
            let task = TrainingTask::new(data, shards, cfg.update)?.with_initial(initial)?;
            let thresholds = match &cfg.thresholds.values {
                Some(v) => v.clone(),
                None => {
                    let reference = reference_accuracy(&task, &cfg.update, cfg.thresholds.reference_epochs, seed)?;
                    cfg.thresholds.fractions.iter().map(|f| f * reference).collect()
                }
            };
            (Some(task), thresholds)
        }
    };
    Ok(Environment {
        seed,
        profiles,
        task,
        thresholds,
    })
}

/// Test accuracy of a model trained centrally on every client's training
/// rows pooled together: the yardstick that rounds-to-accuracy thresholds
/// are expressed against.
pub fn reference_accuracy(task: &TrainingTask, update: &UpdateConfig, epochs: usize, seed: u64) -> Result<f64> {
    let pooled: Vec<usize> = task.shards().iter().flat_map(|s| s.train.iter().copied()).collect();
    let plain = UpdateConfig {
        proximal_gamma: 0.0,
        ..*update
    };
    let zero = ModelWeights::zeros(task.data().classes(), task.data().dim());
    let mut rng = stream(seed, Domain::Oracle, 0, 0);
    let model = local_update(&zero, task.data(), &pooled, &plain, epochs, &mut rng)?;
    Ok(evaluate(&model, task.data(), task.eval_rows())?.0)
}

/// Per-round rows and the summary of one run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<RoundRow>,
    pub summary: RunSummary,
    pub records: Vec<RoundRecord>,
}

pub fn run_single(cfg: &ExperimentConfig, label: &str, kind: &PolicyKind, env: &Environment) -> Result<RunOutput> {
    let (k, clients, rounds) = (cfg.k, cfg.clients(), cfg.rounds());
    let policy = kind.build(k, clients, cfg.sampler, &success_rates(&env.profiles))?;
    let mut sim = Simulation::new(env.seed, k, env.profiles.clone(), env.task.clone(), policy)?;
    let records = sim.run(rounds)?;

    let (eta, bounds) = match *kind {
        PolicyKind::E3cs { eta, schedule } => (Some(eta), Some(bound_series(rounds, clients, k, &schedule, eta)?)),
        _ => (None, None),
    };
    let regret = sim.ledger().regret_series();
    let mut cep = 0u64;
    let rows: Vec<RoundRow> = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            cep += r.effective_count as u64;
            RoundRow {
                round: r.round,
                policy: label.to_string(),
                seed: env.seed,
                effective_count: r.effective_count,
                cep,
                success_ratio: cep as f64 / (r.round * k) as f64,
                accuracy: r.accuracy,
                loss: r.loss,
                regret: regret[i],
                bound: bounds.as_ref().map(|b| b[i]),
            }
        })
        .collect();

    let classes: Vec<usize> = env.profiles.iter().map(|p| p.class).collect();
    let selection = summarize(&records, k, &classes)?;
    let last = records.last().expect("at least one round");
    let rounds_to_threshold = env
        .thresholds
        .iter()
        .map(|&th| records.iter().find(|r| r.accuracy.is_some_and(|a| a >= th)).map(|r| r.round))
        .collect();
    let summary = RunSummary {
        policy: label.to_string(),
        seed: env.seed,
        mode: cfg.mode,
        rounds,
        k,
        clients,
        eta,
        success_ratio: selection.success_ratio,
        cep: selection.cep,
        regret: sim.ledger().regret(),
        bound: bounds.as_ref().and_then(|b| b.last().copied()),
        final_accuracy: last.accuracy,
        final_loss: last.loss,
        thresholds: env.thresholds.clone(),
        rounds_to_threshold,
        selection_counts: selection.selection_counts,
        class_quartiles: selection.class_quartiles,
        exponent_violations: sim.policy().exponent_violations(),
    };
    Ok(RunOutput { rows, summary, records })
}

/// Summaries of the runs that completed, and the failures.
#[derive(Debug)]
pub struct ExperimentReport {
    pub summary: ExperimentSummary,
    pub failures: Vec<(String, u64, Error)>,
}

impl ExperimentReport {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn run_file_stem(policy: &str, seed: u64) -> String {
    format!("{policy}_seed{seed}")
}

/// Runs every (policy, seed) pair and writes the result files under
/// `cfg.out_dir`. An invalid configuration is rejected before anything runs
/// or is written. A failing run is reported in the result without stopping
/// the others.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let policies = cfg.resolved_policies()?;
    let runs_dir = cfg.out_dir.join("runs");
    fs::create_dir_all(&runs_dir).map_err(|e| Error::io(&runs_dir, e))?;
    write_atomic(&cfg.out_dir.join("config.toml"), cfg.emit()?.as_bytes())?;

    let envs: Vec<Result<Environment>> = cfg.seeds.par_iter().map(|&s| build_environment(cfg, s)).collect();
    let jobs: Vec<(usize, usize)> = (0..policies.len())
        .flat_map(|p| (0..cfg.seeds.len()).map(move |s| (p, s)))
        .collect();
    let outcomes: Vec<Result<RunSummary>> = jobs
        .par_iter()
        .map(|&(p, s)| {
            let (label, kind) = &policies[p];
            let env = envs[s].as_ref().map_err(|e| Error::InvalidConfig(format!("environment of seed {}: {e}", cfg.seeds[s])))?;
            let out = run_single(cfg, label, kind, env)?;
            let stem = run_file_stem(label, env.seed);
            write_rows(&runs_dir.join(format!("{stem}.csv")), &out.rows)?;
            write_json(&runs_dir.join(format!("{stem}.json")), &out.summary)?;
            Ok(out.summary)
        })
        .collect();

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (&(p, s), outcome) in jobs.iter().zip(outcomes) {
        match outcome {
            Ok(summary) => runs.push(summary),
            Err(e) => failures.push((policies[p].0.clone(), cfg.seeds[s], e)),
        }
    }
    let summary = ExperimentSummary::from_runs(runs);
    write_json(&cfg.out_dir.join("summary.json"), &summary)?;
    Ok(ExperimentReport { summary, failures })
}

/// Reads every run summary under `<dir>/runs`, sorted by file name.
pub fn load_runs(dir: &Path) -> Result<Vec<RunSummary>> {
    let runs_dir = dir.join("runs");
    let entries = fs::read_dir(&runs_dir).map_err(|e| Error::io(&runs_dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&runs_dir, e))?.path();
        if path.extension().is_some_and(|x| x == "json") {
            paths.push(path);
        }
    }
    paths.sort();
    paths
        .iter()
        .map(|path| {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text).map_err(|source| Error::Json {
                path: path.clone(),
                source,
            })
        })
        .collect()
}

/// Rebuilds `<dir>/summary.json` from the run files.
pub fn summarize_dir(dir: &Path) -> Result<ExperimentSummary> {
    let runs = load_runs(dir)?;
    if runs.is_empty() {
        return Err(Error::InvalidConfig(format!("no run summaries under {}", dir.join("runs").display())));
    }
    let summary = ExperimentSummary::from_runs(runs);
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

pub fn read_rows(path: &Path) -> Result<Vec<RoundRow>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    reader.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err)
}

fn write_rows(path: &Path, rows: &[RoundRow]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        writer.write_record(CSV_COLUMNS).map_err(csv_err)?;
    }
    for row in rows {
        writer.serialize(row).map_err(csv_err)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    write_atomic(path, &bytes)
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = PathBuf::from(path);
    tmp.as_mut_os_string().push(".partial");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
