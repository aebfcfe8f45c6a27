//! Declarative experiment configuration (TOML).
//!
//! Every field has a default, so an empty file is a valid configuration: the
//! numerical environment with 100 clients in four volatility classes, `k = 20`
//! and the E3CS-0, E3CS-0.5, E3CS-0.8, E3CS-inc, Random and FedCS policies.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::PartitionSpec;
use crate::error::{Error, Result};
use crate::flcore::UpdateConfig;
use crate::sampling::Sampler;
use crate::selection::{tuned_eta, FairnessSchedule, PolicyKind, DEFAULT_ETA};
use crate::volatility::PopulationSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Selection, dropouts and regret only.
    #[default]
    Numerical,
    /// Federated training of a softmax-regression model.
    Training,
}

impl Mode {
    pub fn default_rounds(self) -> usize {
        match self {
            Mode::Numerical => 2500,
            Mode::Training => 400,
        }
    }
}

/// Learning rate: a number in (0, 1) or `"tuned"`, the minimiser of the
/// regret bound for the run length and quota schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EtaSpec {
    Value(f64),
    Named(EtaName),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaName {
    Tuned,
}

impl Default for EtaSpec {
    fn default() -> Self {
        EtaSpec::Value(DEFAULT_ETA)
    }
}

/// Quota of an E3CS policy: a factor of `k/K` held constant, `"inc"` for
/// zero during the first quarter of the run and `k/K` afterwards, or an
/// explicit schedule table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FairnessSpec {
    Factor(f64),
    Named(FairnessName),
    Schedule(FairnessSchedule),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FairnessName {
    Inc,
}

impl Default for FairnessSpec {
    fn default() -> Self {
        FairnessSpec::Factor(0.0)
    }
}

impl FairnessSpec {
    pub fn schedule(&self, k: usize, clients: usize, rounds: usize) -> FairnessSchedule {
        match *self {
            FairnessSpec::Factor(f) => FairnessSchedule::scaled(f, k, clients),
            FairnessSpec::Named(FairnessName::Inc) => FairnessSchedule::increment(k, clients, rounds),
            FairnessSpec::Schedule(s) => s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    E3cs {
        #[serde(default)]
        fairness: FairnessSpec,
        /// Overrides the experiment-wide learning rate.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eta: Option<EtaSpec>,
    },
    Random,
    #[serde(rename = "fedcs")]
    FedCs,
    PowD {
        d: usize,
    },
}

impl PolicySpec {
    pub fn e3cs(factor: f64) -> Self {
        PolicySpec::E3cs {
            fairness: FairnessSpec::Factor(factor),
            eta: None,
        }
    }

    pub fn e3cs_inc() -> Self {
        PolicySpec::E3cs {
            fairness: FairnessSpec::Named(FairnessName::Inc),
            eta: None,
        }
    }

    /// Resolves schedules and learning rates into a runnable policy.
    pub fn resolve(&self, k: usize, clients: usize, rounds: usize, default_eta: EtaSpec) -> Result<PolicyKind> {
        let kind = match *self {
            PolicySpec::E3cs { fairness, eta } => {
                let schedule = fairness.schedule(k, clients, rounds);
                let eta = match eta.unwrap_or(default_eta) {
                    EtaSpec::Value(v) => v,
                    // With a zero residual budget the weights never matter.
                    EtaSpec::Named(EtaName::Tuned) => tuned_eta(k, clients, &schedule, rounds).unwrap_or(DEFAULT_ETA),
                };
                if !(eta > 0.0 && eta < 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "learning rate {eta} outside (0, 1); tuned rates reach 1 on very short runs, set eta explicitly"
                    )));
                }
                PolicyKind::E3cs { eta, schedule }
            }
            PolicySpec::Random => PolicyKind::Random,
            PolicySpec::FedCs => PolicyKind::FedCs,
            PolicySpec::PowD { d } => PolicyKind::PowD { d },
        };
        kind.validate(k, clients)?;
        Ok(kind)
    }
}

/// Synthetic classification task used in training mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub classes: usize,
    pub dim: usize,
    pub size: usize,
    pub separation: f64,
    /// Standard deviation of the Gaussian initial model; 0 starts from zeros.
    pub init_scale: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            classes: 10,
            dim: 32,
            size: 20_000,
            separation: 4.0,
            init_scale: 0.3,
        }
    }
}

/// How accuracy thresholds for rounds-to-accuracy are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdSpec {
    /// Absolute accuracies; when set, no calibration run happens.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    /// Fractions of the centralized reference accuracy.
    pub fractions: Vec<f64>,
    /// Passes over the pooled training data in the reference run.
    pub reference_epochs: usize,
}

impl Default for ThresholdSpec {
    fn default() -> Self {
        ThresholdSpec {
            values: None,
            fractions: vec![0.75, 0.85, 0.95],
            reference_epochs: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub k: usize,
    /// Defaults to 2500 in numerical mode and 400 in training mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub eta: EtaSpec,
    pub sampler: Sampler,
    pub population: PopulationSpec,
    pub dataset: DatasetSpec,
    pub partition: PartitionSpec,
    pub update: UpdateConfig,
    pub thresholds: ThresholdSpec,
    pub policies: Vec<PolicySpec>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::Numerical,
            k: 20,
            rounds: None,
            seeds: vec![1],
            out_dir: PathBuf::from("results"),
            eta: EtaSpec::default(),
            sampler: Sampler::default(),
            population: PopulationSpec::default(),
            dataset: DatasetSpec::default(),
            partition: PartitionSpec::default(),
            update: UpdateConfig::default(),
            thresholds: ThresholdSpec::default(),
            policies: vec![
                PolicySpec::e3cs(0.0),
                PolicySpec::e3cs(0.5),
                PolicySpec::e3cs(0.8),
                PolicySpec::e3cs_inc(),
                PolicySpec::Random,
                PolicySpec::FedCs,
            ],
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn emit(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn rounds(&self) -> usize {
        self.rounds.unwrap_or(self.mode.default_rounds())
    }

    pub fn clients(&self) -> usize {
        self.population.clients
    }

    /// Runnable policies with their conventional labels, in config order.
    pub fn resolved_policies(&self) -> Result<Vec<(String, PolicyKind)>> {
        let (k, clients, rounds) = (self.k, self.clients(), self.rounds());
        self.policies
            .iter()
            .map(|p| {
                let kind = p.resolve(k, clients, rounds, self.eta)?;
                Ok((kind.label(k, clients), kind))
            })
            .collect()
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        self.population.class_sizes()?;
        if self.k == 0 || self.k > self.clients() {
            return Err(Error::InvalidCardinality {
                k: self.k,
                clients: self.clients(),
            });
        }
        if self.rounds() == 0 {
            return bad("rounds must be positive".into());
        }
        if self.seeds.is_empty() {
            return bad("no seeds".into());
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return bad(format!("duplicate seeds in {:?}", self.seeds));
        }
        if self.policies.is_empty() {
            return bad("no policies".into());
        }
        let resolved = self.resolved_policies()?;
        let mut labels: Vec<&str> = resolved.iter().map(|(l, _)| l.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return bad("two policies share a label".into());
        }
        match self.mode {
            Mode::Numerical => {
                if resolved.iter().any(|(_, k)| matches!(k, PolicyKind::PowD { .. })) {
                    return bad("pow-d ranks clients by local loss and needs training mode".into());
                }
            }
            Mode::Training => {
                let d = &self.dataset;
                if d.classes < 2 || d.dim == 0 || d.size < d.classes || !(d.separation >= 0.0) || !(d.init_scale >= 0.0) {
                    return bad(format!("dataset {d:?}"));
                }
                self.partition.validate()?;
                self.update.validate()?;
                if self.partition.per_client_size != self.population.data_size {
                    return bad(format!(
                        "partition.per_client_size {} differs from population.data_size {}",
                        self.partition.per_client_size, self.population.data_size
                    ));
                }
                let t = &self.thresholds;
                let all = t.values.iter().flatten().chain(&t.fractions);
                if all.clone().any(|v| !(*v > 0.0 && *v <= 1.0)) {
                    return bad("accuracy thresholds must lie in (0, 1]".into());
                }
                if t.values.is_none() && (t.fractions.is_empty() || t.reference_epochs == 0) {
                    return bad("threshold calibration needs fractions and reference epochs".into());
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(ExperimentConfig::parse("").unwrap(), ExperimentConfig::default());
        ExperimentConfig::default().validate().unwrap();
        assert_eq!(ExperimentConfig::default().rounds(), 2500);
    }

    #[test]
    fn default_round_trips() {
        let cfg = ExperimentConfig::default();
        let text = cfg.emit().unwrap();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn policy_forms() {
        let cfg = ExperimentConfig::parse(
            r#"
            mode = "training"
            eta = "tuned"
            policies = [
                { kind = "e3cs", fairness = 0.5 },
                { kind = "e3cs", fairness = "inc", eta = 0.3 },
                { kind = "e3cs", fairness = { kind = "step", before = 0.05, after = 0.1, switch_round = 7 } },
                { kind = "fedcs" },
                { kind = "pow_d", d = 40 },
            ]
            "#,
        )
        .unwrap();
        cfg.validate().unwrap();
        let labels: Vec<String> = cfg.resolved_policies().unwrap().into_iter().map(|(l, _)| l).collect();
        assert_eq!(labels, ["E3CS-0.5", "E3CS-inc", "E3CS-step", "FedCS", "pow-d"]);
        match cfg.resolved_policies().unwrap()[1].1 {
            PolicyKind::E3cs { eta, schedule } => {
                assert_eq!(eta, 0.3);
                assert_eq!(schedule.sigma_at(101), 0.2);
            }
            _ => unreachable!(),
        }
        assert_eq!(ExperimentConfig::parse(&cfg.emit().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn rejects_invalid() {
        let cases = [
            "k = 0",
            "k = 101",
            "seeds = []",
            "seeds = [1, 1]",
            "policies = []",
            "policies = [{ kind = \"pow_d\", d = 30 }]",
            "eta = 1.5",
            "policies = [{ kind = \"e3cs\", fairness = 1.5 }]",
            "policies = [{ kind = \"random\" }, { kind = \"random\" }]",
            "rounds = 10\neta = \"tuned\"",
        ];
        for text in cases {
            let cfg = ExperimentConfig::parse(text).unwrap();
            assert!(cfg.validate().is_err(), "{text}");
        }
        assert!(ExperimentConfig::parse("mode = \"sideways\"").is_err());
        assert!(ExperimentConfig::parse("k = \"twenty\"").is_err());
    }
}
