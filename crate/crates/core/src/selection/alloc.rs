//! Fairness-constrained probability allocation with capping.
//!
//! Every client first receives the quota `sigma`; the residual budget
//! `k - K*sigma` is then split in proportion to the exponential weights. When
//! that would push a client above probability 1, the largest weights are capped
//! at `(1 - sigma) * alpha` where `alpha` is the largest value that keeps every
//! probability at or below 1.
//!
//! All arithmetic runs on log-weights with max-shifted exponentials, so the
//! weights themselves may be far outside the range of `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selection::exp3::ExpWeightState;

/// Relative slack accepted on the quota bound `sigma <= k/K`.
const QUOTA_SLACK: f64 = 1e-12;
/// Residual budgets below `k * UNIFORM_EPS` are treated as zero.
const UNIFORM_EPS: f64 = 1e-12;
/// Largest case-premise violation (in log space) tolerated from rounding.
const PREMISE_SLACK: f64 = 1e-9;

/// Selection probabilities of one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbAllocation {
    pub probs: Vec<f64>,
    /// Clients whose probability was capped at exactly 1 (ascending).
    pub overflow: Vec<usize>,
    /// `ln(alpha)` on the same scale as the log-weights; `None` without overflow.
    pub log_alpha: Option<f64>,
    /// Fairness quota the allocation was built under.
    pub sigma: f64,
}

impl ProbAllocation {
    pub fn uniform(k: usize, clients: usize) -> Self {
        let p = k as f64 / clients as f64;
        ProbAllocation {
            probs: vec![p; clients],
            overflow: Vec::new(),
            log_alpha: None,
            sigma: p,
        }
    }

    /// Deterministic allocation: probability 1 on `members`, 0 elsewhere.
    pub fn indicator(members: &[usize], clients: usize) -> Self {
        let mut probs = vec![0.0; clients];
        for &i in members {
            probs[i] = 1.0;
        }
        ProbAllocation {
            probs,
            overflow: Vec::new(),
            log_alpha: None,
            sigma: 0.0,
        }
    }

    /// The cap value `alpha`, when overflow occurred. May be `inf` when the
    /// underlying weights exceed the range of `f64`.
    pub fn alpha(&self) -> Option<f64> {
        self.log_alpha.map(f64::exp)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Validates `1 <= k <= K` and `0 <= sigma <= k/K`, returning `sigma` with
/// rounding noise above `k/K` snapped back onto the bound.
pub fn check_quota(k: usize, clients: usize, sigma: f64) -> Result<f64> {
    if k == 0 || k > clients {
        return Err(Error::InvalidCardinality { k, clients });
    }
    let max = k as f64 / clients as f64;
    if !sigma.is_finite() || sigma < 0.0 || sigma > max * (1.0 + QUOTA_SLACK) {
        return Err(Error::InvalidQuota { sigma, max });
    }
    Ok(sigma.min(max))
}

fn log_sum_exp<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Allocates selection probabilities from exponential weights.
pub fn prob_alloc(k: usize, sigma: f64, weights: &ExpWeightState) -> Result<ProbAllocation> {
    prob_alloc_log(k, sigma, weights.log_weights())
}

/// [`prob_alloc`] on raw log-weights.
pub fn prob_alloc_log(k: usize, sigma: f64, log_weights: &[f64]) -> Result<ProbAllocation> {
    let clients = log_weights.len();
    let sigma = check_quota(k, clients, sigma)?;
    check_log_weights(log_weights)?;

    let kf = k as f64;
    let residual = kf - clients as f64 * sigma;
    if residual <= kf * UNIFORM_EPS {
        return Ok(ProbAllocation::uniform(k, clients));
    }

    let lse = log_sum_exp(log_weights.iter().copied());
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if sigma + residual * (max - lse).exp() <= 1.0 {
        let probs = log_weights
            .iter()
            .map(|&lw| (sigma + residual * (lw - lse).exp()).min(1.0))
            .collect();
        return Ok(ProbAllocation {
            probs,
            overflow: Vec::new(),
            log_alpha: None,
            sigma,
        });
    }

    let case = solve_case(log_weights, k, sigma)?;
    let mut capped = vec![false; clients];
    for &i in &case.capped {
        capped[i] = true;
    }
    // Uncapped clients share `residual - |S|(1 - sigma)` in proportion to weight,
    // which equals `sigma + w_i / alpha`.
    let budget = residual - case.capped.len() as f64 * (1.0 - sigma);
    let lse_free = log_sum_exp(
        log_weights
            .iter()
            .zip(&capped)
            .filter(|(_, &c)| !c)
            .map(|(&lw, _)| lw),
    );
    let probs = log_weights
        .iter()
        .zip(&capped)
        .map(|(&lw, &c)| {
            if c {
                1.0
            } else {
                (sigma + budget * (lw - lse_free).exp()).min(1.0)
            }
        })
        .collect();
    let mut overflow = case.capped;
    overflow.sort_unstable();
    Ok(ProbAllocation {
        probs,
        overflow,
        log_alpha: Some(case.log_alpha),
        sigma,
    })
}

fn check_log_weights(log_weights: &[f64]) -> Result<()> {
    match log_weights.iter().position(|lw| !lw.is_finite()) {
        Some(index) => Err(Error::InvalidWeight {
            index,
            value: log_weights[index].exp(),
        }),
        None => Ok(()),
    }
}

/// Solution of the cap equation together with the clients it caps.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct AlphaCase {
    pub log_alpha: f64,
    pub capped: Vec<usize>,
}

/// Finds the cap `alpha` with `alpha / sum_j min(w_j, (1-sigma) alpha) = 1/(k - K sigma)`.
///
/// Only meaningful when the uncapped allocation overflows; callers that do not
/// know this should go through [`prob_alloc`].
pub fn solve_alpha(weights: &[f64], k: usize, sigma: f64) -> Result<f64> {
    let log_weights = weights
        .iter()
        .enumerate()
        .map(|(index, &w)| {
            if w > 0.0 && w.is_finite() {
                Ok(w.ln())
            } else {
                Err(Error::InvalidWeight { index, value: w })
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let sigma = check_quota(k, weights.len(), sigma)?;
    Ok(solve_case(&log_weights, k, sigma)?.log_alpha.exp())
}

/// Case enumeration over the sorted thresholds `Psi_i = w_i / (1 - sigma)`.
///
/// Case `v` assumes `Psi_(v) <= alpha < Psi_(v+1)`: clients at or below the
/// threshold keep their weight, the rest are capped. Equal thresholds form a
/// single case. The first case whose computed alpha satisfies its premise wins.
pub(crate) fn solve_case(log_weights: &[f64], k: usize, sigma: f64) -> Result<AlphaCase> {
    let clients = log_weights.len();
    let residual = k as f64 - clients as f64 * sigma;
    let log_slack = (1.0 - sigma).ln();

    let mut order: Vec<usize> = (0..clients).collect();
    order.sort_by(|&a, &b| log_weights[a].total_cmp(&log_weights[b]).then(a.cmp(&b)));

    // Group boundaries: order[starts[g]..starts[g+1]] share one threshold.
    let mut starts = vec![0];
    for pos in 1..clients {
        if log_weights[order[pos]] != log_weights[order[pos - 1]] {
            starts.push(pos);
        }
    }
    starts.push(clients);
    let groups = starts.len() - 1;

    // (group, log_alpha, premise violation)
    let mut nearest: Option<(usize, f64, f64)> = None;
    // Running log-sum-exp of the uncapped prefix; the prefix maximum is the
    // current group's log-weight because thresholds ascend.
    let mut shift = f64::NEG_INFINITY;
    let mut scaled_sum = 0.0;
    for g in 0..groups {
        let lw = log_weights[order[starts[g]]];
        let count = (starts[g + 1] - starts[g]) as f64;
        scaled_sum = scaled_sum * (shift - lw).exp() + count;
        shift = lw;
        let log_kept = shift + scaled_sum.ln();

        let n_capped = (clients - starts[g + 1]) as f64;
        let denom = residual - n_capped * (1.0 - sigma);
        if denom <= 0.0 {
            continue;
        }
        let log_alpha = log_kept - denom.ln();
        let lower = lw - log_slack;
        let upper = if g + 1 < groups {
            log_weights[order[starts[g + 1]]] - log_slack
        } else {
            f64::INFINITY
        };
        if lower <= log_alpha && log_alpha < upper {
            return Ok(AlphaCase {
                log_alpha,
                capped: order[starts[g + 1]..].to_vec(),
            });
        }
        let violation = (lower - log_alpha).max(log_alpha - upper).max(0.0);
        if nearest.is_none_or(|(_, _, v)| violation < v) {
            nearest = Some((g, log_alpha, violation));
        }
    }

    match nearest {
        Some((g, log_alpha, violation)) if violation <= PREMISE_SLACK => Ok(AlphaCase {
            log_alpha,
            capped: order[starts[g + 1]..].to_vec(),
        }),
        _ => Err(Error::NoValidAlpha {
            weights: log_weights.iter().map(|lw| lw.exp()).collect(),
            k,
            sigma,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alloc(weights: &[f64], k: usize, sigma: f64) -> ProbAllocation {
        prob_alloc(k, sigma, &ExpWeightState::from_weights(weights).unwrap()).unwrap()
    }

    fn assert_close(a: &[f64], b: &[f64]) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-12, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn full_quota_forces_uniform() {
        let a = alloc(&[3.0, 1.0, 1.0, 1.0], 2, 0.5);
        assert_eq!(a.probs, vec![0.5; 4]);
        assert!(a.overflow.is_empty());
        assert_eq!(a.log_alpha, None);
    }

    #[test]
    fn equal_weights_share_equally() {
        let a = alloc(&[1.0; 4], 2, 0.0);
        assert_close(&a.probs, &[0.5; 4]);
        assert!(a.overflow.is_empty());
    }

    #[test]
    fn one_dominant_client_is_capped() {
        let a = alloc(&[10.0, 1.0, 1.0], 2, 0.0);
        assert_eq!(a.overflow, vec![0]);
        assert_eq!(a.probs[0], 1.0);
        assert_close(&a.probs, &[1.0, 0.5, 0.5]);
        assert!((a.alpha().unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn capping_with_positive_quota() {
        let a = alloc(&[10.0, 1.0, 1.0], 2, 0.2);
        assert_eq!(a.overflow, vec![0]);
        assert_close(&a.probs, &[1.0, 0.5, 0.5]);
        assert!((a.alpha().unwrap() - 10.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn solve_alpha_examples() {
        assert!((solve_alpha(&[10.0, 1.0, 1.0], 2, 0.0).unwrap() - 2.0).abs() < 1e-12);
        assert!((solve_alpha(&[10.0, 1.0, 1.0], 2, 0.2).unwrap() - 10.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_weights_never_overflow() {
        for k in 1..5 {
            let a = alloc(&[2.5; 5], k, 0.0);
            assert!(a.overflow.is_empty());
            assert_close(&a.probs, &[k as f64 / 5.0; 5]);
        }
    }

    #[test]
    fn all_clients_selected_gives_ones() {
        let a = alloc(&[5.0, 1.0, 2.0, 1.0], 4, 0.3);
        assert_close(&a.probs, &[1.0; 4]);
    }

    #[test]
    fn several_clients_capped() {
        // Two huge weights, k=3 of 5: both capped, the rest split the remainder.
        let a = alloc(&[1e6, 1e6, 1.0, 2.0, 1.0], 3, 0.0);
        assert_eq!(a.overflow, vec![0, 1]);
        assert_close(&a.probs, &[1.0, 1.0, 0.25, 0.5, 0.25]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let state = ExpWeightState::uniform(4);
        assert!(matches!(prob_alloc(2, 0.6, &state), Err(Error::InvalidQuota { .. })));
        assert!(matches!(prob_alloc(2, -0.1, &state), Err(Error::InvalidQuota { .. })));
        assert!(matches!(prob_alloc(5, 0.0, &state), Err(Error::InvalidCardinality { .. })));
        assert!(ExpWeightState::from_weights(&[1.0, 0.0]).is_err());
        assert!(ExpWeightState::from_weights(&[1.0, -2.0]).is_err());
        assert!(solve_alpha(&[1.0, 0.0], 1, 0.0).is_err());
    }

    #[test]
    fn astronomically_large_log_weights() {
        // Client 1 sits exactly on the cap: alpha = w_1, so only client 0 is in
        // the overflow set while both reach probability 1.
        let a = prob_alloc_log(2, 0.0, &[5000.0, 4000.0, 0.0, -3000.0]).unwrap();
        assert_eq!(a.overflow, vec![0]);
        assert_eq!(a.log_alpha, Some(4000.0));
        assert_close(&a.probs, &[1.0, 1.0, 0.0, 0.0]);
        assert!((a.probs.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        assert!(a.probs.iter().all(|p| p.is_finite()));
    }
}
