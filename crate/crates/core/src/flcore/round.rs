//! Deadline-based round loop.
//!
//! Each round runs the server's stages in order: allocate probabilities and
//! draw the participants, distribute the model, collect whatever returns before
//! the deadline, aggregate, then feed the outcomes of the participants back to
//! the policy. A client misses the deadline exactly when its Bernoulli status
//! bit is 0; its local model is then never produced.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{ClientShard, LabeledDataset};
use crate::error::{Error, Result};
use crate::flcore::model::{evaluate, ModelWeights};
use crate::flcore::update::{aggregate, local_update, UpdateConfig};
use crate::metrics::RegretLedger;
use crate::rng::{stream, Domain};
use crate::sampling::SelectionSet;
use crate::selection::alloc::ProbAllocation;
use crate::selection::policy::{RoundContext, SelectionPolicy};
use crate::volatility::{draw_status, ClientProfile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based round index.
    pub round: usize,
    pub allocation: ProbAllocation,
    pub selected: SelectionSet,
    /// Outcome of each selected client, aligned with `selected.members()`.
    pub successes: Vec<bool>,
    /// Number of selected clients whose model arrived.
    pub effective_count: usize,
    /// Test accuracy and loss of the aggregated model (training runs only).
    pub accuracy: Option<f64>,
    pub loss: Option<f64>,
    /// Expected participation of the hindsight optimum and of the policy.
    pub optimal_increment: f64,
    pub achieved_increment: f64,
}

/// Data and optimizer settings for runs that train a model.
#[derive(Debug, Clone)]
pub struct TrainingTask {
    data: LabeledDataset,
    shards: Vec<ClientShard>,
    update: UpdateConfig,
    eval_rows: Vec<usize>,
    initial: ModelWeights,
}

impl TrainingTask {
    /// Test accuracy is measured on the concatenation of every client's test shard.
    pub fn new(data: LabeledDataset, shards: Vec<ClientShard>, update: UpdateConfig) -> Result<Self> {
        update.validate()?;
        if shards.iter().any(|s| s.train.is_empty()) {
            return Err(Error::InvalidDataset("a client has no training data".into()));
        }
        let eval_rows: Vec<usize> = shards.iter().flat_map(|s| s.test.iter().copied()).collect();
        if eval_rows.is_empty() {
            return Err(Error::InvalidDataset("no test data".into()));
        }
        let initial = ModelWeights::zeros(data.classes(), data.dim());
        Ok(TrainingTask {
            data,
            shards,
            update,
            eval_rows,
            initial,
        })
    }

    /// Starts training from `initial` instead of the zero model.
    pub fn with_initial(mut self, initial: ModelWeights) -> Result<Self> {
        if initial.classes() != self.data.classes() || initial.dim() != self.data.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.initial.len(),
                found: initial.len(),
            });
        }
        self.initial = initial;
        Ok(self)
    }

    pub fn initial(&self) -> &ModelWeights {
        &self.initial
    }

    pub fn data(&self) -> &LabeledDataset {
        &self.data
    }

    pub fn shards(&self) -> &[ClientShard] {
        &self.shards
    }

    pub fn eval_rows(&self) -> &[usize] {
        &self.eval_rows
    }

    fn local_loss(&self, model: &ModelWeights, client: usize) -> f64 {
        evaluate(model, &self.data, &self.shards[client].train)
            .map(|(_, loss)| loss)
            .unwrap_or(f64::NAN)
    }
}

/// One federated run: environment, global model and selection policy.
pub struct Simulation {
    seed: u64,
    k: usize,
    profiles: Vec<ClientProfile>,
    task: Option<TrainingTask>,
    global: Option<ModelWeights>,
    policy: Box<dyn SelectionPolicy>,
    ledger: RegretLedger,
    next_round: usize,
}

impl Simulation {
    /// Without a task the run is purely numerical: selection, dropouts and
    /// participation accounting, no model.
    pub fn new(
        seed: u64,
        k: usize,
        profiles: Vec<ClientProfile>,
        task: Option<TrainingTask>,
        policy: Box<dyn SelectionPolicy>,
    ) -> Result<Self> {
        if k == 0 || k > profiles.len() {
            return Err(Error::InvalidCardinality {
                k,
                clients: profiles.len(),
            });
        }
        let global = match &task {
            Some(t) => {
                if t.shards.len() != profiles.len() {
                    return Err(Error::DimensionMismatch {
                        expected: profiles.len(),
                        found: t.shards.len(),
                    });
                }
                Some(t.initial.clone())
            }
            None => None,
        };
        Ok(Simulation {
            seed,
            k,
            profiles,
            task,
            global,
            policy,
            ledger: RegretLedger::new(),
            next_round: 1,
        })
    }

    pub fn profiles(&self) -> &[ClientProfile] {
        &self.profiles
    }

    pub fn global(&self) -> Option<&ModelWeights> {
        self.global.as_ref()
    }

    pub fn policy(&self) -> &dyn SelectionPolicy {
        self.policy.as_ref()
    }

    pub fn ledger(&self) -> &RegretLedger {
        &self.ledger
    }

    pub fn task(&self) -> Option<&TrainingTask> {
        self.task.as_ref()
    }

    /// Runs the next round.
    pub fn run_round(&mut self) -> Result<RoundRecord> {
        let t = self.next_round;
        let clients = self.profiles.len();

        // Selection. Loss reports (pow-d) always reach the server.
        let decision = {
            let mut rng = stream(self.seed, Domain::Selection, t as u64, 0);
            let probe = match (&self.task, &self.global) {
                (Some(task), Some(model)) => {
                    Some(move |ids: &[usize]| ids.iter().map(|&i| task.local_loss(model, i)).collect::<Vec<f64>>())
                }
                _ => None,
            };
            let losses = probe.as_ref().map(|p| p as &dyn Fn(&[usize]) -> Vec<f64>);
            self.policy.decide(RoundContext {
                round: t,
                rng: &mut rng,
                losses,
            })?
        };
        if decision.allocation.len() != clients || decision.selected.len() != self.k {
            return Err(Error::InvalidPolicy(format!(
                "{} returned {} probabilities and {} clients",
                self.policy.label(),
                decision.allocation.len(),
                decision.selected.len()
            )));
        }

        // Outcomes are drawn for everyone; only participants' outcomes matter
        // for training and feedback.
        let status = draw_status(&self.profiles, &mut stream(self.seed, Domain::Status, t as u64, 0));
        let members = decision.selected.members();
        let successes: Vec<bool> = members.iter().map(|&i| status[i]).collect();
        let returned_ids: Vec<usize> = members.iter().copied().filter(|&i| status[i]).collect();

        let (accuracy, loss) = match (&self.task, &mut self.global) {
            (Some(task), Some(global)) => {
                let seed = self.seed;
                let profiles = &self.profiles;
                let base: &ModelWeights = global;
                let returned = returned_ids
                    .par_iter()
                    .map(|&i| {
                        let mut rng = stream(seed, Domain::LocalUpdate, t as u64, i as u64);
                        local_update(base, &task.data, &task.shards[i].train, &task.update, profiles[i].epochs, &mut rng)
                            .map(|m| (i, m))
                    })
                    .collect::<Result<Vec<_>>>()?;
                *global = aggregate(global, &returned, &self.profiles)?;
                let (acc, loss) = evaluate(global, &task.data, &task.eval_rows)?;
                (Some(acc), Some(loss))
            }
            _ => (None, None),
        };

        self.policy.observe(&decision, &successes)?;
        let (optimal_increment, achieved_increment) = self.ledger.accumulate(&decision.allocation, &status, self.k)?;
        self.next_round += 1;

        Ok(RoundRecord {
            round: t,
            effective_count: returned_ids.len(),
            allocation: decision.allocation,
            selected: decision.selected,
            successes,
            accuracy,
            loss,
            optimal_increment,
            achieved_increment,
        })
    }

    /// Runs `rounds` rounds and returns their records.
    pub fn run(&mut self, rounds: usize) -> Result<Vec<RoundRecord>> {
        (0..rounds).map(|_| self.run_round()).collect()
    }
}
