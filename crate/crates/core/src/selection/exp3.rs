//! Exponential weights, the importance-weighted estimator and the fairness
//! quota schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selection::alloc::check_quota;

/// Default learning rate of the weight update.
pub const DEFAULT_ETA: f64 = 0.5;

/// Per-client exponential weights, stored as natural logarithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpWeightState {
    log_weights: Vec<f64>,
    round: usize,
}

impl ExpWeightState {
    /// All weights 1, round 1.
    pub fn uniform(clients: usize) -> Self {
        ExpWeightState {
            log_weights: vec![0.0; clients],
            round: 1,
        }
    }

    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let log_weights = weights
            .iter()
            .enumerate()
            .map(|(index, &value)| {
                if value > 0.0 && value.is_finite() {
                    Ok(value.ln())
                } else {
                    Err(Error::InvalidWeight { index, value })
                }
            })
            .collect::<Result<_>>()?;
        Ok(ExpWeightState {
            log_weights,
            round: 1,
        })
    }

    pub fn from_log_weights(log_weights: Vec<f64>) -> Result<Self> {
        if let Some(index) = log_weights.iter().position(|lw| !lw.is_finite()) {
            return Err(Error::InvalidWeight {
                index,
                value: log_weights[index].exp(),
            });
        }
        Ok(ExpWeightState {
            log_weights,
            round: 1,
        })
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// Weights on the linear scale. Entries overflow to `inf` once the log
    /// exceeds ~709; prefer [`log_weights`](Self::log_weights).
    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|lw| lw.exp()).collect()
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    /// Multiplies every weight by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let shift = factor.ln();
        ExpWeightState {
            log_weights: self.log_weights.iter().map(|lw| lw + shift).collect(),
            round: self.round,
        }
    }
}

/// Importance-weighted success estimate `1{selected} * x / p`.
///
/// An unselected client contributes zero whatever its probability; a selected
/// one must have `p > 0`.
pub fn estimate(success: bool, p: f64, selected: bool) -> Result<f64> {
    if !p.is_finite() || p < 0.0 || (selected && p == 0.0) {
        return Err(Error::NonPositiveProbability(p));
    }
    Ok(if selected && success { 1.0 / p } else { 0.0 })
}

/// Exponent `(k - K sigma) * eta * x_hat / K` applied to a non-capped weight.
pub fn update_exponent(estimate: f64, eta: f64, k: usize, clients: usize, sigma: f64) -> f64 {
    let residual = k as f64 - clients as f64 * sigma;
    residual * eta * estimate / clients as f64
}

pub fn check_eta(eta: f64) -> Result<f64> {
    if eta > 0.0 && eta < 1.0 {
        Ok(eta)
    } else {
        Err(Error::InvalidEta(eta))
    }
}

/// One step of the multiplicative update. Capped clients keep their weight.
pub fn update_weights(
    state: &ExpWeightState,
    estimates: &[f64],
    overflow: &[usize],
    eta: f64,
    k: usize,
    sigma: f64,
) -> Result<ExpWeightState> {
    let eta = check_eta(eta)?;
    let clients = state.len();
    if estimates.len() != clients {
        return Err(Error::DimensionMismatch {
            expected: clients,
            found: estimates.len(),
        });
    }
    let sigma = check_quota(k, clients, sigma)?;
    let mut frozen = vec![false; clients];
    for &i in overflow {
        frozen[i] = true;
    }
    let mut log_weights = state.log_weights.clone();
    for (index, ((lw, &x_hat), &skip)) in log_weights.iter_mut().zip(estimates).zip(&frozen).enumerate() {
        if skip {
            continue;
        }
        if !x_hat.is_finite() || x_hat < 0.0 {
            return Err(Error::InvalidProbabilities(format!(
                "estimate {x_hat} of client {index} is not a finite non-negative number"
            )));
        }
        *lw += update_exponent(x_hat, eta, k, clients, sigma);
        if !lw.is_finite() {
            return Err(Error::NonFiniteWeight { index });
        }
    }
    Ok(ExpWeightState {
        log_weights,
        round: state.round + 1,
    })
}

/// Per-round fairness quota.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FairnessSchedule {
    Constant { value: f64 },
    /// `before` for rounds `1..=switch_round`, `after` from then on.
    Step {
        before: f64,
        after: f64,
        switch_round: usize,
    },
}

impl FairnessSchedule {
    pub fn constant(value: f64) -> Self {
        FairnessSchedule::Constant { value }
    }

    /// `factor * k / K` in every round.
    pub fn scaled(factor: f64, k: usize, clients: usize) -> Self {
        FairnessSchedule::Constant {
            value: factor * k as f64 / clients as f64,
        }
    }

    /// Zero quota for the first quarter of `rounds`, full `k/K` afterwards.
    pub fn increment(k: usize, clients: usize, rounds: usize) -> Self {
        FairnessSchedule::Step {
            before: 0.0,
            after: k as f64 / clients as f64,
            switch_round: rounds / 4,
        }
    }

    /// Quota of 1-based round `t`.
    pub fn sigma_at(&self, t: usize) -> f64 {
        match *self {
            FairnessSchedule::Constant { value } => value,
            FairnessSchedule::Step {
                before,
                after,
                switch_round,
            } => {
                if t <= switch_round {
                    before
                } else {
                    after
                }
            }
        }
    }

    pub fn validate(&self, k: usize, clients: usize) -> Result<()> {
        match *self {
            FairnessSchedule::Constant { value } => check_quota(k, clients, value).map(drop),
            FairnessSchedule::Step { before, after, .. } => {
                check_quota(k, clients, before)?;
                check_quota(k, clients, after).map(drop)
            }
        }
    }

    /// `sum_{t=1}^{rounds} (k - K sigma_t)`. Rounds whose residual is within
    /// rounding of zero contribute exactly zero.
    pub fn residual_budget(&self, k: usize, clients: usize, rounds: usize) -> f64 {
        let kf = k as f64;
        (1..=rounds)
            .map(|t| kf - clients as f64 * self.sigma_at(t))
            .map(|r| if r <= kf * 1e-12 { 0.0 } else { r })
            .sum()
    }
}

/// Learning rate minimising the closed-form regret bound over `rounds`,
/// `sqrt(K ln K / sum_t (k - K sigma_t))`. `None` when the residual budget is
/// zero (the quota forces uniform selection, so there is nothing to learn).
pub fn tuned_eta(k: usize, clients: usize, schedule: &FairnessSchedule, rounds: usize) -> Option<f64> {
    let budget = schedule.residual_budget(k, clients, rounds);
    if budget <= 0.0 {
        return None;
    }
    let kf = clients as f64;
    Some((kf * kf.ln() / budget).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimator_cases() {
        assert_eq!(estimate(true, 0.2, true).unwrap(), 5.0);
        assert_eq!(estimate(true, 0.7, false).unwrap(), 0.0);
        assert_eq!(estimate(false, 0.7, false).unwrap(), 0.0);
        assert_eq!(estimate(false, 0.5, true).unwrap(), 0.0);
        assert!(estimate(true, 0.0, true).is_err());
        assert!(estimate(true, -0.1, false).is_err());
        assert_eq!(estimate(true, 0.0, false).unwrap(), 0.0);
    }

    #[test]
    fn weight_update_examples() {
        let state = ExpWeightState::from_weights(&[1.0, 7.3, 2.5]).unwrap();
        // 100 clients are needed for k=20, K=100; pad with unit weights.
        let mut weights = vec![1.0; 100];
        weights[..3].copy_from_slice(&[1.0, 7.3, 2.5]);
        let state100 = ExpWeightState::from_weights(&weights).unwrap();
        let mut estimates = vec![0.0; 100];
        estimates[0] = 5.0;
        estimates[1] = 5.0;
        let next = update_weights(&state100, &estimates, &[1], 0.5, 20, 0.0).unwrap();
        let w = next.weights();
        assert!((w[0] - 0.5f64.exp()).abs() < 1e-12);
        assert!((w[0] - 1.648721).abs() < 1e-6);
        assert!((w[1] - 7.3).abs() < 1e-12);
        assert!((w[2] - 2.5).abs() < 1e-12);
        assert_eq!(next.round(), 2);
        assert_eq!(state.round(), 1);
    }

    #[test]
    fn update_rejects_bad_eta() {
        let state = ExpWeightState::uniform(3);
        for eta in [0.0, 1.0, -0.5, f64::NAN] {
            assert!(matches!(
                update_weights(&state, &[0.0; 3], &[], eta, 1, 0.0),
                Err(Error::InvalidEta(_))
            ));
        }
    }

    #[test]
    fn update_overflow_is_reported() {
        let state = ExpWeightState::from_log_weights(vec![1.7e308, 0.0]).unwrap();
        let err = update_weights(&state, &[1e308, 0.0], &[], 0.9, 1, 0.0).unwrap_err();
        assert!(matches!(err, Error::NonFiniteWeight { index: 0 }));
    }

    #[test]
    fn schedules() {
        let inc = FairnessSchedule::increment(20, 100, 2500);
        assert_eq!(inc.sigma_at(1), 0.0);
        assert_eq!(inc.sigma_at(625), 0.0);
        assert_eq!(inc.sigma_at(626), 0.2);
        assert_eq!(inc.sigma_at(2500), 0.2);
        inc.validate(20, 100).unwrap();
        assert!(FairnessSchedule::constant(0.3).validate(20, 100).is_err());
        assert!(FairnessSchedule::constant(-0.01).validate(20, 100).is_err());
        FairnessSchedule::scaled(0.8, 20, 100).validate(20, 100).unwrap();
        assert_eq!(inc.residual_budget(20, 100, 2500), 625.0 * 20.0);
    }

    #[test]
    fn tuned_learning_rate() {
        let eta = tuned_eta(20, 100, &FairnessSchedule::constant(0.0), 2500).unwrap();
        assert!((eta - (100.0 * 100f64.ln() / 50_000.0).sqrt()).abs() < 1e-15);
        assert_eq!(tuned_eta(20, 100, &FairnessSchedule::constant(0.2), 2500), None);
    }
}
