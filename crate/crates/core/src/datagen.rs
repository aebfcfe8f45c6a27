//! Synthetic classification data and iid / non-iid client partitioning.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major feature matrix with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    classes: usize,
}

impl LabeledDataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, dim: usize, classes: usize) -> Result<Self> {
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(Error::InvalidDataset(format!(
                "{} feature values do not form {} rows of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidDataset(format!("label {l} outside [0, {classes})")));
        }
        Ok(LabeledDataset {
            features,
            labels,
            dim,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Indices of every example carrying `label`.
    pub fn indices_of(&self, label: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == label).collect()
    }

    /// Writes the listed rows as CSV: `f0..f{m-1},label`, with a header row.
    pub fn write_csv(&self, rows: &[usize], path: &Path) -> Result<()> {
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
        let mut header: Vec<String> = (0..self.dim).map(|j| format!("f{j}")).collect();
        header.push("label".into());
        writer.write_record(&header).map_err(csv_err)?;
        for &i in rows {
            let mut record: Vec<String> = self.features(i).iter().map(|v| v.to_string()).collect();
            record.push(self.labels[i].to_string());
            writer.write_record(&record).map_err(csv_err)?;
        }
        writer.flush().map_err(|e| Error::io(path, e))
    }
}

/// Gaussian clusters with unit covariance. Class `c` is centred on
/// `separation / sqrt(2) * e_c`, so every pair of class means is exactly
/// `separation` apart. Labels are balanced to within one example.
pub fn gen_synthetic<R: Rng + ?Sized>(
    classes: usize,
    dim: usize,
    size: usize,
    separation: f64,
    rng: &mut R,
) -> Result<LabeledDataset> {
    if classes < 2 || size < classes {
        return Err(Error::InvalidDataset(format!(
            "need at least 2 classes and one example per class (C={classes}, n={size})"
        )));
    }
    if dim < classes {
        return Err(Error::InvalidDataset(format!(
            "feature dimension {dim} cannot hold {classes} equidistant class means"
        )));
    }
    if !separation.is_finite() || separation < 0.0 {
        return Err(Error::InvalidDataset(format!("separation {separation}")));
    }
    let offset = separation / std::f64::consts::SQRT_2;
    let mut labels: Vec<usize> = (0..size).map(|i| i % classes).collect();
    labels.shuffle(rng);
    let mut features = Vec::with_capacity(size * dim);
    for &label in &labels {
        for j in 0..dim {
            let noise: f64 = rng.sample(StandardNormal);
            features.push(noise + if j == label { offset } else { 0.0 });
        }
    }
    LabeledDataset::new(features, labels, dim, classes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PartitionMode {
    Iid,
    NonIid { primary_fraction: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartitionSpec {
    #[serde(flatten)]
    pub mode: PartitionMode,
    pub per_client_size: usize,
    pub test_fraction: f64,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        PartitionSpec {
            mode: PartitionMode::NonIid { primary_fraction: 0.8 },
            per_client_size: 500,
            test_fraction: 0.1,
        }
    }
}

impl PartitionSpec {
    pub fn validate(&self) -> Result<()> {
        if let PartitionMode::NonIid { primary_fraction } = self.mode {
            if !(primary_fraction > 0.0 && primary_fraction < 1.0) {
                return Err(Error::InvalidDataset(format!("primary fraction {primary_fraction} outside (0, 1)")));
            }
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidDataset(format!("test fraction {} outside (0, 1)", self.test_fraction)));
        }
        let test = (self.test_fraction * self.per_client_size as f64).round() as usize;
        if self.per_client_size == 0 || test >= self.per_client_size {
            return Err(Error::InvalidDataset(format!(
                "shard of {} examples leaves no training data",
                self.per_client_size
            )));
        }
        Ok(())
    }
}

/// One client's view of the shared dataset, as row indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientShard {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Dominant label in non-iid mode.
    pub primary_label: Option<usize>,
}

/// `count` rows from `pool`: distinct when the pool is large enough, with
/// replacement otherwise.
fn draw_from<R: Rng + ?Sized>(pool: &[usize], count: usize, rng: &mut R) -> Vec<usize> {
    if count <= pool.len() {
        rand::seq::index::sample(rng, pool.len(), count)
            .into_iter()
            .map(|j| pool[j])
            .collect()
    } else {
        (0..count).map(|_| pool[rng.random_range(0..pool.len())]).collect()
    }
}

/// Splits the dataset across `clients` shards. Clients sample independently,
/// so different clients may hold the same example.
pub fn partition<R: Rng + ?Sized>(
    dataset: &LabeledDataset,
    clients: usize,
    spec: &PartitionSpec,
    rng: &mut R,
) -> Result<Vec<ClientShard>> {
    spec.validate()?;
    if dataset.is_empty() || clients == 0 {
        return Err(Error::InvalidDataset("nothing to partition".into()));
    }
    let size = spec.per_client_size;
    let test_count = (spec.test_fraction * size as f64).round() as usize;
    let all: Vec<usize> = (0..dataset.len()).collect();
    let by_label: Vec<Vec<usize>> = (0..dataset.classes()).map(|c| dataset.indices_of(c)).collect();

    let mut shards = Vec::with_capacity(clients);
    for _ in 0..clients {
        let (mut rows, primary_label) = match spec.mode {
            PartitionMode::Iid => (draw_from(&all, size, rng), None),
            PartitionMode::NonIid { primary_fraction } => {
                let present: Vec<usize> = (0..dataset.classes()).filter(|&c| !by_label[c].is_empty()).collect();
                let primary = present[rng.random_range(0..present.len())];
                let others: Vec<usize> = all.iter().copied().filter(|&i| dataset.label(i) != primary).collect();
                let n_primary = if others.is_empty() {
                    size
                } else {
                    (primary_fraction * size as f64).round() as usize
                };
                let mut rows = draw_from(&by_label[primary], n_primary, rng);
                rows.extend(draw_from(&others, size - n_primary, rng));
                (rows, Some(primary))
            }
        };
        rows.shuffle(rng);
        let train = rows.split_off(test_count);
        shards.push(ClientShard {
            train,
            test: rows,
            primary_label,
        });
    }
    Ok(shards)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};

    fn data(classes: usize, size: usize) -> LabeledDataset {
        gen_synthetic(classes, 12.max(classes), size, 3.0, &mut stream(1, Domain::Dataset, 0, 0)).unwrap()
    }

    #[test]
    fn balanced_labels() {
        let d = data(10, 1003);
        for c in 0..10 {
            let n = d.indices_of(c).len();
            assert!(n == 100 || n == 101);
        }
        let tiny = data(5, 5);
        let mut labels = tiny.labels().to_vec();
        labels.sort_unstable();
        assert_eq!(labels, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn class_means_are_equidistant() {
        let d = gen_synthetic(3, 3, 30_000, 6.0, &mut stream(2, Domain::Dataset, 0, 0)).unwrap();
        let mut means = vec![vec![0.0; 3]; 3];
        for i in 0..d.len() {
            for (m, x) in means[d.label(i)].iter_mut().zip(d.features(i)) {
                *m += x / 10_000.0;
            }
        }
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            let dist: f64 = means[a].iter().zip(&means[b]).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            assert!((dist - 6.0).abs() < 0.1, "{dist}");
        }
    }

    #[test]
    fn rejects_bad_requests() {
        let mut rng = stream(3, Domain::Dataset, 0, 0);
        assert!(gen_synthetic(1, 4, 10, 1.0, &mut rng).is_err());
        assert!(gen_synthetic(4, 4, 3, 1.0, &mut rng).is_err());
        assert!(gen_synthetic(4, 3, 30, 1.0, &mut rng).is_err());
        let bad = PartitionSpec { test_fraction: 1.0, ..Default::default() };
        assert!(partition(&data(4, 100), 2, &bad, &mut rng).is_err());
        let bad = PartitionSpec { mode: PartitionMode::NonIid { primary_fraction: 1.0 }, ..Default::default() };
        assert!(partition(&data(4, 100), 2, &bad, &mut rng).is_err());
    }

    #[test]
    fn default_noniid_shard_sizes() {
        let d = data(10, 20_000);
        let shards = partition(&d, 20, &PartitionSpec::default(), &mut stream(4, Domain::Partition, 0, 0)).unwrap();
        for s in &shards {
            let primary = s.primary_label.unwrap();
            assert_eq!(s.train.len(), 450);
            assert_eq!(s.test.len(), 50);
            let n_primary = s.train.iter().chain(&s.test).filter(|&&i| d.label(i) == primary).count();
            assert_eq!(n_primary, 400);
            let mut rows: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
            rows.sort_unstable();
            rows.dedup();
            assert_eq!(rows.len(), 500, "train and test must be disjoint");
        }
    }

    #[test]
    fn iid_single_client() {
        let d = data(4, 2_000);
        let spec = PartitionSpec { mode: PartitionMode::Iid, per_client_size: 1_000, test_fraction: 0.1 };
        let shards = partition(&d, 1, &spec, &mut stream(5, Domain::Partition, 0, 0)).unwrap();
        assert_eq!(shards[0].train.len(), 900);
        assert_eq!(shards[0].primary_label, None);
        // A uniform sample of a balanced set stays roughly balanced.
        for c in 0..4 {
            let n = shards[0].train.iter().filter(|&&i| d.label(i) == c).count();
            assert!((150..300).contains(&n), "{n}");
        }
    }

    #[test]
    fn single_label_noniid() {
        let d = LabeledDataset::new(vec![0.5; 40], vec![0; 20], 2, 1).unwrap();
        let spec = PartitionSpec { per_client_size: 10, ..Default::default() };
        let shards = partition(&d, 3, &spec, &mut stream(6, Domain::Partition, 0, 0)).unwrap();
        for s in shards {
            assert_eq!(s.primary_label, Some(0));
            assert_eq!(s.train.len() + s.test.len(), 10);
        }
    }

    #[test]
    fn partition_is_deterministic() {
        let d = data(10, 5_000);
        let a = partition(&d, 5, &PartitionSpec::default(), &mut stream(7, Domain::Partition, 0, 0)).unwrap();
        let b = partition(&d, 5, &PartitionSpec::default(), &mut stream(7, Domain::Partition, 0, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_export() {
        let d = data(3, 9);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("shard.csv");
        d.write_csv(&[0, 4], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("f0,f1,"));
        assert!(lines[0].ends_with(",label"));
        assert_eq!(lines[1].split(',').count(), 13);
    }
}
