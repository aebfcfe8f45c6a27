//! Effective participation, regret accounting and run summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flcore::RoundRecord;
use crate::selection::alloc::{check_quota, ProbAllocation};
use crate::selection::exp3::{check_eta, FairnessSchedule};

/// Residual budgets below `k * BUDGET_EPS` count as zero.
const BUDGET_EPS: f64 = 1e-12;

/// Best allocation in hindsight for one round's realised outcomes.
///
/// Every client keeps the quota `sigma`; the residual `k - K sigma` raises
/// successful clients to 1 in index order, and whatever is left goes to the
/// remaining clients in index order so the probabilities still sum to `k`.
pub fn hindsight_optimal(successes: &[bool], k: usize, sigma: f64) -> Result<Vec<f64>> {
    let clients = successes.len();
    let sigma = check_quota(k, clients, sigma)?;
    let mut probs = vec![sigma; clients];
    let mut budget = k as f64 - clients as f64 * sigma;
    if budget <= k as f64 * BUDGET_EPS {
        return Ok(probs);
    }
    let room = 1.0 - sigma;
    let order = (0..clients).filter(|&i| successes[i]).chain((0..clients).filter(|&i| !successes[i]));
    for i in order {
        if budget <= 0.0 {
            break;
        }
        let add = room.min(budget);
        probs[i] += add;
        budget -= add;
    }
    Ok(probs)
}

/// Expected effective participation `sum_i p_i x_i`.
pub fn expected_increment(probs: &[f64], successes: &[bool]) -> f64 {
    probs
        .iter()
        .zip(successes)
        .filter(|(_, &x)| x)
        .map(|(p, _)| p)
        .sum()
}

/// Closed-form regret bound `eta * sum_t (k - K sigma_t) + (K / eta) ln K`.
///
/// Without `eta` the bound is evaluated at the minimising learning rate, where
/// it equals `2 sqrt(K ln K sum_t (k - K sigma_t))`; it is 0 when the quota
/// forces uniform selection in every round.
pub fn regret_bound(
    rounds: usize,
    clients: usize,
    k: usize,
    schedule: &FairnessSchedule,
    eta: Option<f64>,
) -> Result<f64> {
    schedule.validate(k, clients)?;
    let budget = schedule.residual_budget(k, clients, rounds);
    let kf = clients as f64;
    match eta {
        Some(eta) => {
            let eta = check_eta(eta)?;
            Ok(eta * budget + kf / eta * kf.ln())
        }
        None if budget <= 0.0 => Ok(0.0),
        None => Ok(2.0 * (kf * budget * kf.ln()).sqrt()),
    }
}

/// [`regret_bound`] with a fixed `eta` after each of the rounds `1..=rounds`.
pub fn bound_series(
    rounds: usize,
    clients: usize,
    k: usize,
    schedule: &FairnessSchedule,
    eta: f64,
) -> Result<Vec<f64>> {
    schedule.validate(k, clients)?;
    let eta = check_eta(eta)?;
    let kf = clients as f64;
    let fixed = kf / eta * kf.ln();
    let mut budget = 0.0;
    Ok((1..=rounds)
        .map(|t| {
            let r = k as f64 - kf * schedule.sigma_at(t);
            if r > k as f64 * BUDGET_EPS {
                budget += r;
            }
            eta * budget + fixed
        })
        .collect())
}

/// Per-round expected participation of the policy against the hindsight optimum.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegretLedger {
    pub optimal: Vec<f64>,
    pub achieved: Vec<f64>,
    cumulative_optimal: f64,
    cumulative_achieved: f64,
}

impl RegretLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds round `t` and returns its `(optimal, achieved)` increments.
    pub fn accumulate(&mut self, allocation: &ProbAllocation, successes: &[bool], k: usize) -> Result<(f64, f64)> {
        if allocation.len() != successes.len() {
            return Err(Error::DimensionMismatch {
                expected: allocation.len(),
                found: successes.len(),
            });
        }
        let oracle = hindsight_optimal(successes, k, allocation.sigma)?;
        let optimal = expected_increment(&oracle, successes);
        let achieved = expected_increment(&allocation.probs, successes);
        debug_assert!(optimal + 1e-9 >= achieved, "oracle {optimal} below policy {achieved}");
        self.optimal.push(optimal);
        self.achieved.push(achieved);
        self.cumulative_optimal += optimal;
        self.cumulative_achieved += achieved;
        Ok((optimal, achieved))
    }

    pub fn rounds(&self) -> usize {
        self.optimal.len()
    }

    /// Cumulative regret after all recorded rounds.
    pub fn regret(&self) -> f64 {
        self.cumulative_optimal - self.cumulative_achieved
    }

    /// Cumulative regret after each round.
    pub fn regret_series(&self) -> Vec<f64> {
        let mut opt = 0.0;
        let mut got = 0.0;
        self.optimal
            .iter()
            .zip(&self.achieved)
            .map(|(o, a)| {
                opt += o;
                got += a;
                opt - got
            })
            .collect()
    }
}

/// Five-number summary with linearly interpolated quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let at = |q: f64| {
            let pos = q * (sorted.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        };
        Some(Quartiles {
            min: sorted[0],
            q1: at(0.25),
            median: at(0.5),
            q3: at(0.75),
            max: sorted[sorted.len() - 1],
        })
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub rounds: usize,
    /// `sum_t sum_{i in A_t} x_{i,t} / (T k)`.
    pub success_ratio: f64,
    /// Total number of models returned.
    pub cep: u64,
    pub selection_counts: Vec<u64>,
    /// Selection-count quartiles of each volatility class.
    pub class_quartiles: Vec<Quartiles>,
}

/// Aggregates a run. `classes[i]` is the volatility class of client `i`.
pub fn summarize(records: &[RoundRecord], k: usize, classes: &[usize]) -> Result<SelectionSummary> {
    if records.is_empty() {
        return Err(Error::InvalidConfig("no rounds to summarize".into()));
    }
    let mut counts = vec![0u64; classes.len()];
    let mut cep = 0u64;
    for r in records {
        for &i in r.selected.members() {
            counts[i] += 1;
        }
        cep += r.effective_count as u64;
    }
    let n_classes = classes.iter().copied().max().map_or(0, |c| c + 1);
    let class_quartiles = (0..n_classes)
        .map(|c| {
            let members: Vec<f64> = counts
                .iter()
                .zip(classes)
                .filter(|(_, &cl)| cl == c)
                .map(|(&n, _)| n as f64)
                .collect();
            Quartiles::of(&members).unwrap_or(Quartiles {
                min: 0.0,
                q1: 0.0,
                median: 0.0,
                q3: 0.0,
                max: 0.0,
            })
        })
        .collect();
    Ok(SelectionSummary {
        rounds: records.len(),
        success_ratio: cep as f64 / (records.len() * k) as f64,
        cep,
        selection_counts: counts,
        class_quartiles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn oracle_examples() {
        let p = hindsight_optimal(&[true, false, true], 2, 0.0).unwrap();
        assert_eq!(p, vec![1.0, 0.0, 1.0]);
        assert_eq!(expected_increment(&p, &[true, false, true]), 2.0);

        let p = hindsight_optimal(&[true, true, true], 2, 0.2).unwrap();
        assert!(close(&p, &[1.0, 0.8, 0.2]));
        assert!((expected_increment(&p, &[true; 3]) - 2.0).abs() < 1e-12);

        let p = hindsight_optimal(&[true, false, false], 2, 0.2).unwrap();
        assert!(close(&p, &[1.0, 0.8, 0.2]));
        assert!((expected_increment(&p, &[true, false, false]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bound_examples() {
        let zero = FairnessSchedule::constant(0.0);
        let tuned = regret_bound(2500, 100, 20, &zero, None).unwrap();
        assert!((tuned - 2.0 * (2500.0 * 100.0 * 20.0 * 100f64.ln()).sqrt()).abs() < 1e-9);
        assert!((tuned - 9597.1).abs() < 0.05, "{tuned}");

        let full = FairnessSchedule::constant(0.2);
        assert_eq!(regret_bound(2500, 100, 20, &full, None).unwrap(), 0.0);

        let small = regret_bound(1, 2, 1, &zero, Some(0.5)).unwrap();
        assert!((small - (0.5 + 4.0 * 2f64.ln())).abs() < 1e-12);
        assert!((small - 3.2726).abs() < 1e-4);

        assert!(regret_bound(10, 2, 1, &zero, Some(1.5)).is_err());
    }

    #[test]
    fn bound_series_matches_closed_form() {
        let inc = FairnessSchedule::increment(20, 100, 400);
        let series = bound_series(400, 100, 20, &inc, 0.5).unwrap();
        for t in [1, 99, 100, 101, 400] {
            let direct = regret_bound(t, 100, 20, &inc, Some(0.5)).unwrap();
            assert!((series[t - 1] - direct).abs() < 1e-9, "{t}");
        }
    }

    #[test]
    fn ledger_self_comparison_is_zero() {
        let x = [true, false, true, true];
        let oracle = hindsight_optimal(&x, 2, 0.1).unwrap();
        let alloc = ProbAllocation {
            probs: oracle,
            overflow: vec![],
            log_alpha: None,
            sigma: 0.1,
        };
        let mut ledger = RegretLedger::new();
        let (o, a) = ledger.accumulate(&alloc, &x, 2).unwrap();
        assert_eq!(o, a);
        let (o, a) = ledger.accumulate(&alloc, &[false; 4], 2).unwrap();
        assert_eq!((o, a), (0.0, 0.0));
        assert_eq!(ledger.regret(), 0.0);
        assert_eq!(ledger.regret_series(), vec![0.0, 0.0]);
    }

    #[test]
    fn quartiles_interpolate() {
        let q = Quartiles::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((q.min, q.q1, q.median, q.q3, q.max), (1.0, 1.75, 2.5, 3.25, 4.0));
        let q = Quartiles::of(&[0.0, 0.0, 0.0, 2500.0, 2500.0]).unwrap();
        assert_eq!(q.median, 0.0);
        assert_eq!(q.q3, 2500.0);
        assert!(Quartiles::of(&[]).is_none());
    }
}
