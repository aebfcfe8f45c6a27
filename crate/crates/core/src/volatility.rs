//! Heterogeneous client population and per-round Bernoulli dropouts.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientProfile {
    pub id: usize,
    /// Index of the volatility class the client belongs to.
    pub class: usize,
    pub success_rate: f64,
    pub epochs: usize,
    pub data_size: usize,
    /// Share of the total data, `|D_i| / sum_j |D_j|`.
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolatilityClass {
    pub fraction: f64,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationSpec {
    pub clients: usize,
    pub classes: Vec<VolatilityClass>,
    pub epoch_choices: Vec<usize>,
    pub data_size: usize,
}

impl Default for PopulationSpec {
    /// 100 clients in four equal classes with success rates 0.1, 0.3, 0.6 and
    /// 0.9; epochs drawn from {1, 2, 3, 4}; 500 examples each.
    fn default() -> Self {
        PopulationSpec {
            clients: 100,
            classes: [0.1, 0.3, 0.6, 0.9]
                .into_iter()
                .map(|success_rate| VolatilityClass {
                    fraction: 0.25,
                    success_rate,
                })
                .collect(),
            epoch_choices: vec![1, 2, 3, 4],
            data_size: 500,
        }
    }
}

impl PopulationSpec {
    /// Number of clients in each class, in class order.
    pub fn class_sizes(&self) -> Result<Vec<usize>> {
        let invalid = |msg: String| Err(Error::InvalidPopulation(msg));
        if self.clients == 0 {
            return invalid("no clients".into());
        }
        if self.classes.is_empty() {
            return invalid("no volatility classes".into());
        }
        if self.epoch_choices.is_empty() || self.epoch_choices.contains(&0) {
            return invalid(format!("epoch choices {:?} must be non-empty and positive", self.epoch_choices));
        }
        if self.data_size == 0 {
            return invalid("data size must be positive".into());
        }
        let total: f64 = self.classes.iter().map(|c| c.fraction).sum();
        if (total - 1.0).abs() > 1e-9 {
            return invalid(format!("class fractions sum to {total}"));
        }
        let mut sizes = Vec::with_capacity(self.classes.len());
        for class in &self.classes {
            if !(0.0..=1.0).contains(&class.success_rate) {
                return invalid(format!("success rate {} outside [0, 1]", class.success_rate));
            }
            let exact = class.fraction * self.clients as f64;
            let n = exact.round();
            if class.fraction < 0.0 || (exact - n).abs() > 1e-6 {
                return invalid(format!(
                    "fraction {} does not divide {} clients evenly",
                    class.fraction, self.clients
                ));
            }
            sizes.push(n as usize);
        }
        Ok(sizes)
    }
}

/// Builds the population: class membership by contiguous index blocks, epochs
/// drawn independently and uniformly from the allowed choices.
pub fn gen_population<R: Rng + ?Sized>(spec: &PopulationSpec, rng: &mut R) -> Result<Vec<ClientProfile>> {
    let sizes = spec.class_sizes()?;
    let weight = 1.0 / spec.clients as f64;
    let mut profiles = Vec::with_capacity(spec.clients);
    for (class, (&size, vc)) in sizes.iter().zip(&spec.classes).enumerate() {
        for _ in 0..size {
            let epochs = *spec.epoch_choices.choose(rng).expect("non-empty");
            profiles.push(ClientProfile {
                id: profiles.len(),
                class,
                success_rate: vc.success_rate,
                epochs,
                data_size: spec.data_size,
                weight,
            });
        }
    }
    Ok(profiles)
}

/// Success rates in client order.
pub fn success_rates(profiles: &[ClientProfile]) -> Vec<f64> {
    profiles.iter().map(|p| p.success_rate).collect()
}

/// Independent Bernoulli outcome for every client in one round.
pub fn draw_status<R: Rng + ?Sized>(profiles: &[ClientProfile], rng: &mut R) -> Vec<bool> {
    profiles.iter().map(|p| rng.random::<f64>() < p.success_rate).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};

    fn classes(pairs: &[(f64, f64)]) -> Vec<VolatilityClass> {
        pairs
            .iter()
            .map(|&(fraction, success_rate)| VolatilityClass { fraction, success_rate })
            .collect()
    }

    #[test]
    fn default_population() {
        let profiles = gen_population(&PopulationSpec::default(), &mut stream(1, Domain::Population, 0, 0)).unwrap();
        assert_eq!(profiles.len(), 100);
        for (c, rate) in [0.1, 0.3, 0.6, 0.9].into_iter().enumerate() {
            let members: Vec<_> = profiles.iter().filter(|p| p.class == c).collect();
            assert_eq!(members.len(), 25);
            assert!(members.iter().all(|p| p.success_rate == rate));
        }
        assert!(profiles.iter().all(|p| p.weight == 0.01 && (1..=4).contains(&p.epochs)));
        assert!((profiles.iter().map(|p| p.weight).sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(profiles.iter().enumerate().all(|(i, p)| p.id == i));
    }

    #[test]
    fn degenerate_rates() {
        let spec = PopulationSpec {
            clients: 2,
            classes: classes(&[(0.5, 0.0), (0.5, 1.0)]),
            epoch_choices: vec![1],
            data_size: 10,
        };
        let profiles = gen_population(&spec, &mut stream(2, Domain::Population, 0, 0)).unwrap();
        for t in 0..100 {
            assert_eq!(draw_status(&profiles, &mut stream(2, Domain::Status, t, 0)), vec![false, true]);
        }
        let always = PopulationSpec {
            clients: 4,
            classes: classes(&[(1.0, 1.0)]),
            ..spec
        };
        let profiles = gen_population(&always, &mut stream(2, Domain::Population, 0, 0)).unwrap();
        assert_eq!(draw_status(&profiles, &mut stream(3, Domain::Status, 0, 0)), vec![true; 4]);
    }

    #[test]
    fn rejects_inconsistent_specs() {
        let base = PopulationSpec::default();
        let bad = [
            PopulationSpec { classes: classes(&[(0.5, 0.1), (0.4, 0.2)]), ..base.clone() },
            PopulationSpec { clients: 10, classes: classes(&[(0.25, 0.1), (0.75, 0.2)]), ..base.clone() },
            PopulationSpec { classes: classes(&[(1.0, 1.2)]), ..base.clone() },
            PopulationSpec { epoch_choices: vec![], ..base.clone() },
            PopulationSpec { clients: 0, ..base.clone() },
        ];
        for spec in bad {
            assert!(gen_population(&spec, &mut stream(0, Domain::Population, 0, 0)).is_err(), "{spec:?}");
        }
    }

    #[test]
    fn epochs_cover_all_choices() {
        let profiles = gen_population(&PopulationSpec::default(), &mut stream(5, Domain::Population, 0, 0)).unwrap();
        for e in 1..=4 {
            assert!(profiles.iter().any(|p| p.epochs == e));
        }
    }
}
