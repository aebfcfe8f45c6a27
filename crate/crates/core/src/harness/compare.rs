//! Paired policy comparisons across environment seeds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::runner::RunSummary;

/// Counts of seeds on which the first policy did better, worse or the same,
/// with the two-sided exact sign-test p-value (ties dropped).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    pub p_value: f64,
}

impl SignTest {
    pub fn from_counts(wins: usize, losses: usize, ties: usize) -> Self {
        let n = wins + losses;
        let tail = wins.min(losses);
        // P(X <= tail) for X ~ Binomial(n, 1/2), accumulated in log space.
        let ln_half_n = -(n as f64) * std::f64::consts::LN_2;
        let mut ln_choose = 0.0;
        let mut cdf = 0.0;
        for i in 0..=tail {
            if i > 0 {
                ln_choose += ((n - i + 1) as f64).ln() - (i as f64).ln();
            }
            cdf += (ln_choose + ln_half_n).exp();
        }
        SignTest {
            wins,
            losses,
            ties,
            p_value: (2.0 * cdf).min(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub metric: String,
    pub higher_is_better: bool,
    /// Per seed, `a - b`; `None` where either side has no value.
    pub differences: Vec<Option<f64>>,
    pub mean_difference: Option<f64>,
    pub sign: SignTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub a: String,
    pub b: String,
    pub seeds: Vec<u64>,
    pub metrics: Vec<MetricComparison>,
}

impl PairComparison {
    pub fn metric(&self, name: &str) -> Option<&MetricComparison> {
        self.metrics.iter().find(|m| m.metric == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub policies: Vec<String>,
    pub pairs: Vec<PairComparison>,
}

impl ComparisonReport {
    pub fn pair(&self, a: &str, b: &str) -> Option<&PairComparison> {
        self.pairs.iter().find(|p| p.a == a && p.b == b)
    }
}

/// How one metric is read off a run.
struct Metric {
    name: String,
    higher_is_better: bool,
    /// Missing values of threshold metrics mean "never reached", which ranks
    /// below any reached value.
    missing_is_worst: bool,
    get: Box<dyn Fn(&RunSummary) -> Option<f64>>,
}

fn metrics_for(runs: &[&RunSummary]) -> Vec<Metric> {
    let mut out = vec![
        Metric {
            name: "success_ratio".into(),
            higher_is_better: true,
            missing_is_worst: false,
            get: Box::new(|r| Some(r.success_ratio)),
        },
        Metric {
            name: "regret".into(),
            higher_is_better: false,
            missing_is_worst: false,
            get: Box::new(|r| Some(r.regret)),
        },
    ];
    if runs.iter().all(|r| r.final_accuracy.is_some()) {
        out.push(Metric {
            name: "final_accuracy".into(),
            higher_is_better: true,
            missing_is_worst: false,
            get: Box::new(|r| r.final_accuracy),
        });
        let thresholds = runs.iter().map(|r| r.rounds_to_threshold.len()).min().unwrap_or(0);
        for i in 0..thresholds {
            out.push(Metric {
                name: format!("rounds_to_threshold_{i}"),
                higher_is_better: false,
                missing_is_worst: true,
                get: Box::new(move |r| r.rounds_to_threshold[i].map(|n| n as f64)),
            });
        }
    }
    out
}

fn find_seed(runs: &[RunSummary], seed: u64) -> &RunSummary {
    runs.iter().find(|r| r.seed == seed).expect("seed present")
}

/// Compares two sets of runs seed by seed. Both must cover exactly the same
/// seeds; runs are matched on seed, so their order does not matter.
pub fn compare_pair(a: &[RunSummary], b: &[RunSummary]) -> Result<PairComparison> {
    let label = |runs: &[RunSummary]| runs.first().map(|r| r.policy.clone()).unwrap_or_default();
    let mut seeds: Vec<u64> = a.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    let mut other: Vec<u64> = b.iter().map(|r| r.seed).collect();
    other.sort_unstable();
    if seeds.is_empty() || seeds != other || seeds.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::MismatchedRuns(format!(
            "{} has seeds {seeds:?}, {} has {other:?}",
            label(a),
            label(b)
        )));
    }
    let pairs: Vec<(&RunSummary, &RunSummary)> = seeds
        .iter()
        .map(|&s| (find_seed(a, s), find_seed(b, s)))
        .collect();
    for (x, y) in &pairs {
        if (x.mode, x.rounds, x.k, x.clients) != (y.mode, y.rounds, y.k, y.clients) {
            return Err(Error::MismatchedRuns(format!(
                "seed {} of {} and {} ran in different environments",
                x.seed, x.policy, y.policy
            )));
        }
    }
    let all: Vec<&RunSummary> = pairs.iter().flat_map(|(x, y)| [*x, *y]).collect();
    let metrics = metrics_for(&all)
        .into_iter()
        .map(|m| {
            let (mut wins, mut losses, mut ties) = (0, 0, 0);
            let mut differences = Vec::with_capacity(pairs.len());
            for (x, y) in &pairs {
                let (u, v) = ((m.get)(x), (m.get)(y));
                differences.push(u.zip(v).map(|(u, v)| u - v));
                let better = match (u, v) {
                    (Some(u), Some(v)) if u == v => None,
                    (Some(u), Some(v)) => Some((u > v) == m.higher_is_better),
                    (Some(_), None) if m.missing_is_worst => Some(true),
                    (None, Some(_)) if m.missing_is_worst => Some(false),
                    _ => None,
                };
                match better {
                    Some(true) => wins += 1,
                    Some(false) => losses += 1,
                    None => ties += 1,
                }
            }
            let known: Vec<f64> = differences.iter().flatten().copied().collect();
            MetricComparison {
                metric: m.name,
                higher_is_better: m.higher_is_better,
                mean_difference: (!known.is_empty()).then(|| known.iter().sum::<f64>() / known.len() as f64),
                differences,
                sign: SignTest::from_counts(wins, losses, ties),
            }
        })
        .collect();
    Ok(PairComparison {
        a: label(a),
        b: label(b),
        seeds,
        metrics,
    })
}

/// Every ordered pair of distinct policies found in `runs`.
pub fn compare_policies(runs: &[RunSummary]) -> Result<ComparisonReport> {
    let mut policies: Vec<String> = Vec::new();
    for r in runs {
        if !policies.contains(&r.policy) {
            policies.push(r.policy.clone());
        }
    }
    if policies.len() < 2 {
        return Err(Error::MismatchedRuns(format!("need at least two policies, found {policies:?}")));
    }
    let group = |p: &str| runs.iter().filter(|r| r.policy == p).cloned().collect::<Vec<_>>();
    let mut pairs = Vec::new();
    for a in &policies {
        for b in policies.iter().filter(|b| *b != a) {
            pairs.push(compare_pair(&group(a), &group(b))?);
        }
    }
    Ok(ComparisonReport { policies, pairs })
}
