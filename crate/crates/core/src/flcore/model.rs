//! Multinomial logistic regression on a flat parameter vector.
//!
//! Layout: the `classes x dim` weight matrix row-major, then `classes` biases.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datagen::LabeledDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelWeights {
    classes: usize,
    dim: usize,
    values: Vec<f64>,
}

impl ModelWeights {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        ModelWeights {
            classes,
            dim,
            values: vec![0.0; classes * dim + classes],
        }
    }

    /// Independent `N(0, scale^2)` entries; `scale = 0` gives [`zeros`](Self::zeros).
    pub fn gaussian<R: Rng + ?Sized>(classes: usize, dim: usize, scale: f64, rng: &mut R) -> Self {
        let mut m = Self::zeros(classes, dim);
        if scale != 0.0 {
            for v in &mut m.values {
                *v = scale * rng.sample::<f64, _>(StandardNormal);
            }
        }
        m
    }

    pub fn from_values(classes: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        let expected = classes * dim + classes;
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: values.len(),
            });
        }
        Ok(ModelWeights { classes, dim, values })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn distance(&self, other: &ModelWeights) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn check_shape(&self, other: &ModelWeights) -> Result<()> {
        if self.classes != other.classes || self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: other.len(),
            });
        }
        Ok(())
    }

    fn check_data(&self, data: &LabeledDataset) -> Result<()> {
        if data.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: data.dim(),
            });
        }
        if data.classes() > self.classes {
            return Err(Error::DimensionMismatch {
                expected: self.classes,
                found: data.classes(),
            });
        }
        Ok(())
    }

    /// Class logits for one example.
    fn logits_into(&self, x: &[f64], out: &mut [f64]) {
        let (w, b) = self.values.split_at(self.classes * self.dim);
        for (c, z) in out.iter_mut().enumerate() {
            let row = &w[c * self.dim..(c + 1) * self.dim];
            *z = b[c] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

/// In-place softmax; returns `log(sum(exp(z)))`.
fn softmax_in_place(z: &mut [f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
    max + sum.ln()
}

/// `(gamma / 2) * ||theta - center||^2` added to the data loss.
#[derive(Debug, Clone, Copy)]
pub struct Proximal<'a> {
    pub center: &'a ModelWeights,
    pub gamma: f64,
}

/// Mean cross-entropy over `batch` (row indices into `data`), plus the
/// proximal term when given, and its gradient.
pub fn loss_and_grad(
    theta: &ModelWeights,
    data: &LabeledDataset,
    batch: &[usize],
    prox: Option<Proximal<'_>>,
) -> Result<(f64, Vec<f64>)> {
    theta.check_data(data)?;
    if batch.is_empty() {
        return Err(Error::InvalidDataset("empty batch".into()));
    }
    let (classes, dim) = (theta.classes, theta.dim);
    let mut grad = vec![0.0; theta.len()];
    let mut z = vec![0.0; classes];
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for &i in batch {
        let x = data.features(i);
        let y = data.label(i);
        theta.logits_into(x, &mut z);
        let y_logit = z[y];
        let lse = softmax_in_place(&mut z);
        loss += lse - y_logit;
        z[y] -= 1.0;
        let (gw, gb) = grad.split_at_mut(classes * dim);
        for c in 0..classes {
            let coef = z[c] * scale;
            gb[c] += coef;
            for (g, xj) in gw[c * dim..(c + 1) * dim].iter_mut().zip(x) {
                *g += coef * xj;
            }
        }
    }
    loss *= scale;
    if let Some(Proximal { center, gamma }) = prox {
        theta.check_shape(center)?;
        let mut sq = 0.0;
        for ((g, t), c) in grad.iter_mut().zip(&theta.values).zip(&center.values) {
            let diff = t - c;
            sq += diff * diff;
            *g += gamma * diff;
        }
        loss += 0.5 * gamma * sq;
    }
    Ok((loss, grad))
}

/// Accuracy and mean cross-entropy over `rows`.
pub fn evaluate(theta: &ModelWeights, data: &LabeledDataset, rows: &[usize]) -> Result<(f64, f64)> {
    theta.check_data(data)?;
    if rows.is_empty() {
        return Err(Error::InvalidDataset("no evaluation rows".into()));
    }
    let mut z = vec![0.0; theta.classes];
    let mut correct = 0usize;
    let mut loss = 0.0;
    for &i in rows {
        let y = data.label(i);
        theta.logits_into(data.features(i), &mut z);
        // Ties resolve to the lowest class index.
        let pred = z
            .iter()
            .enumerate()
            .fold(0, |best, (c, &v)| if v > z[best] { c } else { best });
        if pred == y {
            correct += 1;
        }
        let y_logit = z[y];
        loss += softmax_in_place(&mut z) - y_logit;
    }
    let n = rows.len() as f64;
    Ok((correct as f64 / n, loss / n))
}
