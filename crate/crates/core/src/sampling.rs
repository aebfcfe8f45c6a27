//! Drawing the per-round selected set from an allocation.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `sum(p) = k`.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Exactly `k` distinct client indices, kept in ascending order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SelectionSet(Vec<usize>);

impl SelectionSet {
    pub fn new(mut members: Vec<usize>, k: usize, clients: usize) -> Result<Self> {
        members.sort_unstable();
        members.dedup();
        if members.len() != k {
            return Err(Error::InvalidProbabilities(format!(
                "selection holds {} distinct clients, expected {k}",
                members.len()
            )));
        }
        if let Some(&bad) = members.iter().find(|&&i| i >= clients) {
            return Err(Error::InvalidProbabilities(format!(
                "client {bad} outside population of {clients}"
            )));
        }
        Ok(SelectionSet(members))
    }

    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, client: usize) -> bool {
        self.0.binary_search(&client).is_ok()
    }

    /// Membership mask over `clients` indices.
    pub fn mask(&self, clients: usize) -> Vec<bool> {
        let mut mask = vec![false; clients];
        for &i in &self.0 {
            mask[i] = true;
        }
        mask
    }
}

/// How the selected set is drawn from an allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    /// Systematic sampling: inclusion probability of client `i` is exactly `p_i`.
    #[default]
    ExactMarginal,
    /// Successive draws proportional to the remaining probabilities. Marginals
    /// only approximate `p_i`.
    Sequential,
}

impl Sampler {
    pub fn sample<R: Rng + ?Sized>(self, probs: &[f64], k: usize, rng: &mut R) -> Result<SelectionSet> {
        match self {
            Sampler::ExactMarginal => sample_exact_marginal(probs, k, rng),
            Sampler::Sequential => sample_sequential(probs, k, rng),
        }
    }
}

fn check_probs(probs: &[f64], k: usize) -> Result<()> {
    if k == 0 || k > probs.len() {
        return Err(Error::InvalidCardinality {
            k,
            clients: probs.len(),
        });
    }
    if let Some((i, p)) = probs
        .iter()
        .enumerate()
        .find(|(_, p)| !(0.0..=1.0).contains(*p))
    {
        return Err(Error::InvalidProbabilities(format!(
            "p[{i}] = {p} outside [0, 1]"
        )));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - k as f64).abs() > SUM_TOLERANCE {
        return Err(Error::InvalidProbabilities(format!(
            "probabilities sum to {sum}, expected {k}"
        )));
    }
    Ok(())
}

/// Systematic proportional-to-size sampling over a random permutation.
///
/// The permuted probabilities are laid end to end on `[0, k)`; one uniform
/// offset `u` selects the clients covering `u, u+1, ..., u+k-1`. An interval
/// of length at most 1 holds at most one of those points, so the `k` clients
/// are distinct and each is hit with probability exactly `p_i`.
pub fn sample_exact_marginal<R: Rng + ?Sized>(probs: &[f64], k: usize, rng: &mut R) -> Result<SelectionSet> {
    check_probs(probs, k)?;
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.shuffle(rng);
    let total: f64 = probs.iter().sum();
    // Rescale so the intervals end exactly at k.
    let scale = k as f64 / total;
    let u: f64 = rng.random();

    let mut members = Vec::with_capacity(k);
    let mut pos = 0;
    let mut upper = probs[order[0]] * scale;
    for j in 0..k {
        let point = u + j as f64;
        while upper <= point && pos + 1 < order.len() {
            pos += 1;
            upper += probs[order[pos]] * scale;
        }
        let mut pick = pos;
        // Rounding at the far end can strand the last points past `upper` or
        // on an already chosen client; fall forward to the next free one.
        if members.last() == Some(&order[pick]) || probs[order[pick]] == 0.0 {
            pick = (pick + 1..order.len())
                .chain(0..pick)
                .find(|&q| probs[order[q]] > 0.0 && !members.contains(&order[q]))
                .ok_or_else(|| Error::InvalidProbabilities("too few positive probabilities".into()))?;
            pos = pick.max(pos);
        }
        members.push(order[pick]);
    }
    SelectionSet::new(members, k, probs.len())
}

/// `k` successive draws without replacement, each proportional to the
/// probabilities of the clients not yet drawn.
pub fn sample_sequential<R: Rng + ?Sized>(probs: &[f64], k: usize, rng: &mut R) -> Result<SelectionSet> {
    check_probs(probs, k)?;
    if probs.iter().filter(|&&p| p > 0.0).count() < k {
        return Err(Error::InvalidProbabilities("too few positive probabilities".into()));
    }
    let mut remaining = probs.to_vec();
    let mut members = Vec::with_capacity(k);
    for _ in 0..k {
        let total: f64 = remaining.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &p) in remaining.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            acc += p;
            pick = Some(i);
            if target < acc {
                break;
            }
        }
        // `pick` is the last positive entry when rounding leaves `target >= acc`.
        let i = pick.expect("a positive probability remains");
        members.push(i);
        remaining[i] = 0.0;
    }
    SelectionSet::new(members, k, probs.len())
}
