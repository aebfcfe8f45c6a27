//! Local training and volatile-context aggregation.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::LabeledDataset;
use crate::error::{Error, Result};
use crate::flcore::model::{loss_and_grad, ModelWeights, Proximal};
use crate::volatility::ClientProfile;

/// Local optimizer settings. The number of epochs is a property of each client.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UpdateConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Proximal coefficient; 0 gives plain FedAvg-style SGD.
    pub proximal_gamma: f64,
}

impl Default for UpdateConfig {
    fn default() -> Self {
        UpdateConfig {
            learning_rate: 1e-2,
            momentum: 0.9,
            batch_size: 40,
            proximal_gamma: 0.0,
        }
    }
}

impl UpdateConfig {
    /// FedProx coefficient used for the proximal variants.
    pub const FEDPROX_GAMMA: f64 = 0.5;

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if !(self.proximal_gamma >= 0.0 && self.proximal_gamma.is_finite()) {
            return bad(format!("proximal coefficient {}", self.proximal_gamma));
        }
        Ok(())
    }
}

/// `epochs` passes of mini-batch SGD with momentum over a freshly shuffled
/// shard, starting from the global model. With a positive proximal
/// coefficient the global model is the proximal centre. Momentum starts at
/// zero on every call.
pub fn local_update<R: Rng + ?Sized>(
    global: &ModelWeights,
    data: &LabeledDataset,
    shard: &[usize],
    cfg: &UpdateConfig,
    epochs: usize,
    rng: &mut R,
) -> Result<ModelWeights> {
    if shard.is_empty() {
        return Err(Error::InvalidDataset("empty client shard".into()));
    }
    let mut theta = global.clone();
    let mut velocity = vec![0.0; theta.len()];
    let mut order = shard.to_vec();
    let prox = (cfg.proximal_gamma > 0.0).then_some(Proximal {
        center: global,
        gamma: cfg.proximal_gamma,
    });
    for _ in 0..epochs {
        order.shuffle(rng);
        for batch in order.chunks(cfg.batch_size) {
            let (_, grad) = loss_and_grad(&theta, data, batch, prox)?;
            for ((t, v), g) in theta.values_mut().iter_mut().zip(&mut velocity).zip(&grad) {
                *v = cfg.momentum * *v + g;
                *t -= cfg.learning_rate * *v;
            }
        }
    }
    Ok(theta)
}

/// `Theta_{t+1} = sum_{returned} w_i Theta_i + sum_{others} w_i Theta_t`.
///
/// Clients absent from `returned` (unselected, or selected but failed)
/// contribute the current global model at their data share. Evaluated as
/// `Theta_t + sum_{returned} w_i (Theta_i - Theta_t)`, which is the same
/// combination because the shares sum to 1 and leaves `Theta_t` bit-for-bit
/// unchanged when nothing moved.
pub fn aggregate(
    global: &ModelWeights,
    returned: &[(usize, ModelWeights)],
    profiles: &[ClientProfile],
) -> Result<ModelWeights> {
    let total: f64 = profiles.iter().map(|p| p.weight).sum();
    if (total - 1.0).abs() > 1e-9 || profiles.iter().any(|p| p.weight < 0.0) {
        return Err(Error::WeightSum(total));
    }
    let mut seen = vec![false; profiles.len()];
    let mut next = global.clone();
    for (client, local) in returned {
        if *client >= profiles.len() || std::mem::replace(&mut seen[*client], true) {
            return Err(Error::InvalidConfig(format!("client {client} returned twice or does not exist")));
        }
        if local.len() != global.len() {
            return Err(Error::DimensionMismatch {
                expected: global.len(),
                found: local.len(),
            });
        }
        let w = profiles[*client].weight;
        for ((n, l), g) in next.values_mut().iter_mut().zip(local.values()).zip(global.values()) {
            *n += w * (l - g);
        }
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::gen_synthetic;
    use crate::flcore::model::evaluate;
    use crate::rng::{stream, Domain};

    fn profiles(weights: &[f64]) -> Vec<ClientProfile> {
        weights
            .iter()
            .enumerate()
            .map(|(id, &weight)| ClientProfile {
                id,
                class: 0,
                success_rate: 1.0,
                epochs: 1,
                data_size: 1,
                weight,
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_leaves_model() {
        let data = gen_synthetic(3, 5, 60, 2.0, &mut stream(1, Domain::Dataset, 0, 0)).unwrap();
        let global = ModelWeights::from_values(3, 5, (0..18).map(|i| i as f64 * 0.01).collect()).unwrap();
        let cfg = UpdateConfig { learning_rate: 0.0, ..Default::default() };
        let rows: Vec<usize> = (0..60).collect();
        let local = local_update(&global, &data, &rows, &cfg, 3, &mut stream(1, Domain::LocalUpdate, 0, 0)).unwrap();
        assert_eq!(local, global);
    }

    #[test]
    fn strong_proximal_term_keeps_update_close() {
        let data = gen_synthetic(4, 6, 200, 3.0, &mut stream(2, Domain::Dataset, 0, 0)).unwrap();
        let global = ModelWeights::zeros(4, 6);
        let rows: Vec<usize> = (0..200).collect();
        let run = |gamma: f64| {
            let cfg = UpdateConfig { proximal_gamma: gamma, learning_rate: 1e-7, momentum: 0.0, ..Default::default() };
            local_update(&global, &data, &rows, &cfg, 1, &mut stream(2, Domain::LocalUpdate, 0, 0)).unwrap()
        };
        let free = run(0.0).distance(&global);
        let held = run(1e6).distance(&global);
        assert!(free > 0.0);
        assert!(held < free, "{held} !< {free}");
    }

    #[test]
    fn single_example_loss_never_increases() {
        let data = LabeledDataset::new(vec![0.3, -1.2, 0.8], vec![2], 3, 4).unwrap();
        let cfg = UpdateConfig::default();
        let mut theta = ModelWeights::zeros(4, 3);
        let mut prev = evaluate(&theta, &data, &[0]).unwrap().1;
        for epoch in 0..200 {
            theta = local_update(&theta, &data, &[0], &cfg, 1, &mut stream(3, Domain::LocalUpdate, epoch, 0)).unwrap();
            let loss = evaluate(&theta, &data, &[0]).unwrap().1;
            assert!(loss <= prev + 1e-12, "epoch {epoch}: {loss} > {prev}");
            prev = loss;
        }
        assert!(prev < 4f64.ln());
    }

    #[test]
    fn aggregation_cases() {
        let global = ModelWeights::zeros(1, 2);
        let ones = ModelWeights::from_values(1, 2, vec![1.0; 3]).unwrap();
        let p = profiles(&[0.3, 0.7]);

        assert_eq!(aggregate(&global, &[], &p).unwrap(), global);

        let next = aggregate(&global, &[(0, ones.clone())], &p).unwrap();
        for v in next.values() {
            assert!((v - 0.3).abs() < 1e-15);
        }

        let a = ModelWeights::from_values(1, 2, vec![1.0, 2.0, 3.0]).unwrap();
        let b = ModelWeights::from_values(1, 2, vec![3.0, 0.0, -1.0]).unwrap();
        let mean = aggregate(&global, &[(0, a), (1, b)], &profiles(&[0.5, 0.5])).unwrap();
        assert_eq!(mean.values(), &[2.0, 1.0, 1.0]);
    }

    #[test]
    fn aggregation_rejects_bad_weights() {
        let global = ModelWeights::zeros(1, 2);
        assert!(matches!(aggregate(&global, &[], &profiles(&[0.3, 0.3])), Err(Error::WeightSum(_))));
        let ones = ModelWeights::from_values(1, 2, vec![1.0; 3]).unwrap();
        let twice = [(0, ones.clone()), (0, ones)];
        assert!(aggregate(&global, &twice, &profiles(&[0.5, 0.5])).is_err());
    }

    #[test]
    fn unchanged_locals_leave_model_bit_identical() {
        let global = ModelWeights::from_values(1, 2, vec![0.1, 0.7, 1.0 / 3.0]).unwrap();
        let p = profiles(&[0.3, 0.3, 0.4]);
        let returned: Vec<_> = (0..3).map(|i| (i, global.clone())).collect();
        assert_eq!(aggregate(&global, &returned, &p).unwrap(), global);
    }
}
