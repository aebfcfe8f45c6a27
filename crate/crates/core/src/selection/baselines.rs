use rand::Rng;

use crate::error::{Error, Result};
use crate::sampling::SelectionSet;
use crate::selection::alloc::ProbAllocation;

/// Uniform allocation `k/K`.
pub fn random_policy(k: usize, clients: usize) -> Result<ProbAllocation> {
    if k == 0 || k > clients {
        return Err(Error::InvalidCardinality { k, clients });
    }
    Ok(ProbAllocation::uniform(k, clients))
}

/// Indices of the `k` largest scores; ties go to the lower index.
fn top_k(scores: &[(usize, f64)], k: usize) -> Vec<usize> {
    let mut ranked = scores.to_vec();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked.into_iter().map(|(i, _)| i).collect()
}

/// Prophetic top-`k` selection by known success rate.
pub fn fedcs_policy(success_rates: &[f64], k: usize) -> Result<SelectionSet> {
    if k == 0 || k > success_rates.len() {
        return Err(Error::InvalidCardinality {
            k,
            clients: success_rates.len(),
        });
    }
    if let Some(r) = success_rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::InvalidPolicy(format!("success rate {r} outside [0, 1]")));
    }
    let scores: Vec<(usize, f64)> = success_rates.iter().copied().enumerate().collect();
    SelectionSet::new(top_k(&scores, k), k, success_rates.len())
}

/// The `k` candidates with the highest reported loss.
pub fn powd_select(candidates: &[usize], losses: &[f64], k: usize, clients: usize) -> Result<SelectionSet> {
    if candidates.len() != losses.len() {
        return Err(Error::DimensionMismatch {
            expected: candidates.len(),
            found: losses.len(),
        });
    }
    if k > candidates.len() {
        return Err(Error::InvalidPolicy(format!(
            "pow-d needs d >= k (d={}, k={k})",
            candidates.len()
        )));
    }
    if let Some(l) = losses.iter().find(|l| l.is_nan()) {
        return Err(Error::InvalidPolicy(format!("reported loss {l}")));
    }
    let scores: Vec<(usize, f64)> = candidates.iter().copied().zip(losses.iter().copied()).collect();
    SelectionSet::new(top_k(&scores, k), k, clients)
}

/// Power-of-choice: draw `d` distinct candidates uniformly, query their local
/// losses through `probe`, keep the `k` with the highest loss.
pub fn powd_policy<R, F>(d: usize, k: usize, clients: usize, rng: &mut R, probe: F) -> Result<SelectionSet>
where
    R: Rng + ?Sized,
    F: FnOnce(&[usize]) -> Vec<f64>,
{
    if d < k || d > clients || k == 0 {
        return Err(Error::InvalidPolicy(format!(
            "pow-d needs 1 <= k <= d <= K (k={k}, d={d}, K={clients})"
        )));
    }
    let mut candidates = rand::seq::index::sample(rng, clients, d).into_vec();
    candidates.sort_unstable();
    let losses = probe(&candidates);
    powd_select(&candidates, &losses, k, clients)
}
