//! The common interface every client-selection policy implements.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::sampling::{Sampler, SelectionSet};
use crate::selection::alloc::{prob_alloc, ProbAllocation};
use crate::selection::baselines::{fedcs_policy, powd_policy, random_policy};
use crate::selection::exp3::{
    check_eta, estimate, update_exponent, update_weights, ExpWeightState, FairnessSchedule,
};

/// Allocation and draw for one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub allocation: ProbAllocation,
    pub selected: SelectionSet,
}

/// Reports the local loss of each listed client on the current global model.
pub type LossProbe<'a> = &'a dyn Fn(&[usize]) -> Vec<f64>;

pub struct RoundContext<'a> {
    /// 1-based round index.
    pub round: usize,
    pub rng: &'a mut SimRng,
    /// Available only when a model is being trained.
    pub losses: Option<LossProbe<'a>>,
}

pub trait SelectionPolicy: Send {
    fn label(&self) -> String;

    fn decide(&mut self, ctx: RoundContext<'_>) -> Result<Decision>;

    /// Feedback after the deadline: `successes[j]` is the outcome of
    /// `decision.selected.members()[j]`. Outcomes of unselected clients are
    /// never revealed to a policy.
    fn observe(&mut self, decision: &Decision, successes: &[bool]) -> Result<()>;

    /// Learning rate, for policies that learn.
    fn eta(&self) -> Option<f64> {
        None
    }

    /// Quota the policy guarantees in round `t`.
    fn quota(&self, _t: usize) -> f64 {
        0.0
    }

    /// For exponential-weight policies, how many updates had an exponent
    /// above 1 (see [`E3cs::exponent_violations`]).
    fn exponent_violations(&self) -> Option<u64> {
        None
    }
}

/// Which policy to run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PolicyKind {
    E3cs { eta: f64, schedule: FairnessSchedule },
    Random,
    FedCs,
    PowD { d: usize },
}

impl PolicyKind {
    pub fn validate(&self, k: usize, clients: usize) -> Result<()> {
        if k == 0 || k > clients {
            return Err(Error::InvalidCardinality { k, clients });
        }
        match self {
            PolicyKind::E3cs { eta, schedule } => {
                check_eta(*eta)?;
                schedule.validate(k, clients)
            }
            PolicyKind::PowD { d } if *d < k || *d > clients => Err(Error::InvalidPolicy(format!(
                "pow-d needs k <= d <= K (k={k}, d={d}, K={clients})"
            ))),
            _ => Ok(()),
        }
    }

    /// Conventional name: `E3CS-0`, `E3CS-0.5`, `E3CS-inc`, `Random`, `FedCS`, `pow-d`.
    pub fn label(&self, k: usize, clients: usize) -> String {
        match self {
            PolicyKind::E3cs { schedule, .. } => {
                let uniform = k as f64 / clients as f64;
                match *schedule {
                    FairnessSchedule::Constant { value } => {
                        let factor = (value / uniform * 1e6).round() / 1e6;
                        format!("E3CS-{factor}")
                    }
                    FairnessSchedule::Step { before, after, .. } if before == 0.0 && after == uniform => {
                        "E3CS-inc".to_string()
                    }
                    FairnessSchedule::Step { .. } => "E3CS-step".to_string(),
                }
            }
            PolicyKind::Random => "Random".to_string(),
            PolicyKind::FedCs => "FedCS".to_string(),
            PolicyKind::PowD { .. } => "pow-d".to_string(),
        }
    }

    /// Instantiates the policy. `success_rates` is read by FedCS only.
    pub fn build(
        &self,
        k: usize,
        clients: usize,
        sampler: Sampler,
        success_rates: &[f64],
    ) -> Result<Box<dyn SelectionPolicy>> {
        self.validate(k, clients)?;
        let label = self.label(k, clients);
        Ok(match *self {
            PolicyKind::E3cs { eta, schedule } => Box::new(E3cs::new(k, clients, eta, schedule, sampler)?.with_label(label)),
            PolicyKind::Random => Box::new(RandomSelection { k, clients, sampler }),
            PolicyKind::FedCs => {
                if success_rates.len() != clients {
                    return Err(Error::DimensionMismatch {
                        expected: clients,
                        found: success_rates.len(),
                    });
                }
                Box::new(FedCs {
                    selected: fedcs_policy(success_rates, k)?,
                    clients,
                })
            }
            PolicyKind::PowD { d } => Box::new(PowD { d, k, clients }),
        })
    }
}

/// Exp3 with multiple plays and a per-client fairness quota.
#[derive(Debug, Clone)]
pub struct E3cs {
    k: usize,
    clients: usize,
    eta: f64,
    schedule: FairnessSchedule,
    sampler: Sampler,
    state: ExpWeightState,
    label: String,
    max_exponent: f64,
    exponent_violations: u64,
}

impl E3cs {
    pub fn new(k: usize, clients: usize, eta: f64, schedule: FairnessSchedule, sampler: Sampler) -> Result<Self> {
        check_eta(eta)?;
        schedule.validate(k, clients)?;
        Ok(E3cs {
            k,
            clients,
            eta,
            schedule,
            sampler,
            state: ExpWeightState::uniform(clients),
            label: "E3CS".to_string(),
            max_exponent: 0.0,
            exponent_violations: 0,
        })
    }

    fn with_label(mut self, label: String) -> Self {
        self.label = label;
        self
    }

    pub fn weights(&self) -> &ExpWeightState {
        &self.state
    }

    /// Largest update exponent applied to a non-capped client so far.
    pub fn max_exponent(&self) -> f64 {
        self.max_exponent
    }

    /// Number of non-capped updates whose exponent exceeded 1. The quadratic
    /// bound on `exp(x)` used by the regret analysis requires exponents <= 1.
    pub fn exponent_violations(&self) -> u64 {
        self.exponent_violations
    }
}

impl SelectionPolicy for E3cs {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn decide(&mut self, ctx: RoundContext<'_>) -> Result<Decision> {
        let sigma = self.schedule.sigma_at(ctx.round);
        let allocation = prob_alloc(self.k, sigma, &self.state)?;
        let selected = self.sampler.sample(&allocation.probs, self.k, ctx.rng)?;
        Ok(Decision { allocation, selected })
    }

    fn observe(&mut self, decision: &Decision, successes: &[bool]) -> Result<()> {
        let members = decision.selected.members();
        if successes.len() != members.len() {
            return Err(Error::DimensionMismatch {
                expected: members.len(),
                found: successes.len(),
            });
        }
        let alloc = &decision.allocation;
        let mut succeeded = vec![false; self.clients];
        for (&i, &x) in members.iter().zip(successes) {
            succeeded[i] = x;
        }
        let selected = decision.selected.mask(self.clients);
        let estimates = (0..self.clients)
            .map(|i| estimate(succeeded[i], alloc.probs[i], selected[i]))
            .collect::<Result<Vec<f64>>>()?;

        let mut capped = vec![false; self.clients];
        for &i in &alloc.overflow {
            capped[i] = true;
        }
        for (&x_hat, _) in estimates.iter().zip(&capped).filter(|(_, &c)| !c) {
            let e = update_exponent(x_hat, self.eta, self.k, self.clients, alloc.sigma);
            self.max_exponent = self.max_exponent.max(e);
            if e > 1.0 {
                self.exponent_violations += 1;
            }
        }
        self.state = update_weights(&self.state, &estimates, &alloc.overflow, self.eta, self.k, alloc.sigma)?;
        Ok(())
    }

    fn eta(&self) -> Option<f64> {
        Some(self.eta)
    }

    fn quota(&self, t: usize) -> f64 {
        self.schedule.sigma_at(t)
    }

    fn exponent_violations(&self) -> Option<u64> {
        Some(self.exponent_violations)
    }
}

#[derive(Debug, Clone)]
pub struct RandomSelection {
    k: usize,
    clients: usize,
    sampler: Sampler,
}

impl SelectionPolicy for RandomSelection {
    fn label(&self) -> String {
        "Random".to_string()
    }

    fn decide(&mut self, ctx: RoundContext<'_>) -> Result<Decision> {
        let allocation = random_policy(self.k, self.clients)?;
        let selected = self.sampler.sample(&allocation.probs, self.k, ctx.rng)?;
        Ok(Decision { allocation, selected })
    }

    fn observe(&mut self, _: &Decision, _: &[bool]) -> Result<()> {
        Ok(())
    }
}

/// Always the same `k` clients with the highest known success rate.
#[derive(Debug, Clone)]
pub struct FedCs {
    selected: SelectionSet,
    clients: usize,
}

impl SelectionPolicy for FedCs {
    fn label(&self) -> String {
        "FedCS".to_string()
    }

    fn decide(&mut self, _: RoundContext<'_>) -> Result<Decision> {
        Ok(Decision {
            allocation: ProbAllocation::indicator(self.selected.members(), self.clients),
            selected: self.selected.clone(),
        })
    }

    fn observe(&mut self, _: &Decision, _: &[bool]) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PowD {
    d: usize,
    k: usize,
    clients: usize,
}

impl SelectionPolicy for PowD {
    fn label(&self) -> String {
        "pow-d".to_string()
    }

    fn decide(&mut self, ctx: RoundContext<'_>) -> Result<Decision> {
        let probe = ctx
            .losses
            .ok_or_else(|| Error::InvalidPolicy("pow-d needs local losses, which only a trained model provides".into()))?;
        let selected = powd_policy(self.d, self.k, self.clients, ctx.rng, probe)?;
        Ok(Decision {
            allocation: ProbAllocation::indicator(selected.members(), self.clients),
            selected,
        })
    }

    fn observe(&mut self, _: &Decision, _: &[bool]) -> Result<()> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};

    fn e3cs(factor: f64) -> PolicyKind {
        PolicyKind::E3cs {
            eta: 0.5,
            schedule: FairnessSchedule::scaled(factor, 20, 100),
        }
    }

    #[test]
    fn labels() {
        assert_eq!(e3cs(0.0).label(20, 100), "E3CS-0");
        assert_eq!(e3cs(0.5).label(20, 100), "E3CS-0.5");
        assert_eq!(e3cs(0.8).label(20, 100), "E3CS-0.8");
        let inc = PolicyKind::E3cs {
            eta: 0.5,
            schedule: FairnessSchedule::increment(20, 100, 400),
        };
        assert_eq!(inc.label(20, 100), "E3CS-inc");
        assert_eq!(PolicyKind::PowD { d: 40 }.label(20, 100), "pow-d");
    }

    #[test]
    fn validation() {
        assert!(PolicyKind::PowD { d: 10 }.validate(20, 100).is_err());
        assert!(PolicyKind::PowD { d: 101 }.validate(20, 100).is_err());
        assert!(PolicyKind::E3cs {
            eta: 1.0,
            schedule: FairnessSchedule::constant(0.0)
        }
        .validate(20, 100)
        .is_err());
        assert!(PolicyKind::FedCs.build(2, 4, Sampler::default(), &[0.5; 3]).is_err());
    }

    #[test]
    fn e3cs_learns_the_reliable_client() {
        let mut policy = E3cs::new(1, 3, 0.5, FairnessSchedule::constant(0.0), Sampler::ExactMarginal).unwrap();
        let reliable = [false, true, false];
        for t in 1..=300 {
            let mut rng = stream(11, Domain::Selection, t, 0);
            let d = policy
                .decide(RoundContext {
                    round: t as usize,
                    rng: &mut rng,
                    losses: None,
                })
                .unwrap();
            let outcomes: Vec<bool> = d.selected.members().iter().map(|&i| reliable[i]).collect();
            policy.observe(&d, &outcomes).unwrap();
        }
        let lw = policy.weights().log_weights();
        assert!(lw[1] > lw[0] && lw[1] > lw[2]);
        assert_eq!(policy.weights().round(), 301);
    }

    #[test]
    fn powd_requires_losses() {
        let mut p = PolicyKind::PowD { d: 3 }.build(2, 4, Sampler::default(), &[]).unwrap();
        let mut rng = stream(1, Domain::Selection, 1, 0);
        assert!(p
            .decide(RoundContext {
                round: 1,
                rng: &mut rng,
                losses: None
            })
            .is_err());
    }
}
