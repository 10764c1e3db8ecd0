//! Synthetic datasets, a CSV loader, and the IID/Dirichlet client
//! partitioner.
//!
//! The benchmark names from image-classification configs (cifar10,
//! cifar100, fashionmnist) are accepted but map to documented synthetic
//! Gaussian-blob stand-ins at desk scale.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Gamma, StandardNormal};
use thiserror::Error;

use super::config::{DatasetArgs, PartitionStrategy};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),
    #[error("too few samples: {samples} for {clients} clients")]
    TooFewSamples { samples: usize, clients: usize },
    #[error("csv load failed: {0}")]
    Csv(String),
}

/// Row-major feature matrix plus integer labels.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub features: Vec<f64>,
    pub labels: Vec<u32>,
    pub n_features: usize,
    pub n_classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    /// Gaussian blobs: one unit-variance cluster per class, centers drawn
    /// on a sphere of radius `separation`.
    pub fn blobs(
        classes: usize,
        features: usize,
        samples: usize,
        separation: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let centers: Vec<Vec<f64>> = (0..classes)
            .map(|_| {
                let v: Vec<f64> = (0..features).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                v.iter().map(|x| x / norm * separation).collect()
            })
            .collect();
        let mut data = Vec::with_capacity(samples * features);
        let mut labels = Vec::with_capacity(samples);
        for i in 0..samples {
            let class = i % classes;
            for j in 0..features {
                let noise: f64 = rng.sample(StandardNormal);
                data.push(centers[class][j] + noise);
            }
            labels.push(class as u32);
        }
        Dataset { features: data, labels, n_features: features, n_classes: classes }
    }

    /// Header row, comma-separated floats, last column = integer label.
    pub fn from_csv(path: &str) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::Csv(e.to_string()))?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| DataError::Csv("empty file".into()))?;
        let n_cols = header.split(',').count();
        if n_cols < 2 {
            return Err(DataError::Csv("need at least one feature and a label column".into()));
        }
        let n_features = n_cols - 1;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != n_cols {
                return Err(DataError::Csv(format!(
                    "line {}: expected {n_cols} columns, got {}",
                    lineno + 2,
                    fields.len()
                )));
            }
            for f in &fields[..n_features] {
                let v: f64 = f
                    .trim()
                    .parse()
                    .map_err(|_| DataError::Csv(format!("line {}: bad float `{f}`", lineno + 2)))?;
                features.push(v);
            }
            let label: u32 = fields[n_features]
                .trim()
                .parse()
                .map_err(|_| DataError::Csv(format!("line {}: bad label", lineno + 2)))?;
            labels.push(label);
        }
        if labels.is_empty() {
            return Err(DataError::Csv("no data rows".into()));
        }
        let n_classes = labels.iter().max().copied().unwrap_or(0) as usize + 1;
        Ok(Dataset { features, labels, n_features, n_classes })
    }

    /// Resolve a config dataset name. The image-benchmark names keep
    /// config compatibility but produce synthetic stand-ins.
    pub fn load(name: &str, args: &DatasetArgs, seed: u64) -> Result<Self, DataError> {
        match name {
            "blobs" | "synthetic" => Ok(Self::blobs(
                args.classes,
                args.features,
                args.samples,
                args.separation,
                seed,
            )),
            "cifar10" => Ok(Self::blobs(10, 32, 2000, args.separation, seed)),
            "cifar100" => Ok(Self::blobs(100, 64, 4000, args.separation, seed)),
            "fashionmnist" => Ok(Self::blobs(10, 28, 2000, args.separation, seed)),
            "csv" => {
                let path = args
                    .csv_path
                    .as_deref()
                    .ok_or_else(|| DataError::Csv("dataset_args.csv_path not set".into()))?;
                Self::from_csv(path)
            }
            other => Err(DataError::UnknownDataset(other.to_string())),
        }
    }
}

/// Disjoint, covering, non-empty per-client sample assignment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetPartition {
    pub assignments: Vec<Vec<usize>>,
}

impl DatasetPartition {
    pub fn client_size(&self, client: usize) -> usize {
        self.assignments[client].len()
    }
}

/// Split sample indices across clients.
///
/// IID: seeded shuffle, then near-equal contiguous chunks. Dirichlet: per
/// class, draw client proportions from Dirichlet(alpha) and assign that
/// class's samples multinomially; empty clients then steal one sample
/// from the largest client until all are non-empty.
pub fn split_dataset(
    labels: &[u32],
    n_clients: usize,
    strategy: PartitionStrategy,
    alpha: f64,
    seed: u64,
) -> Result<DatasetPartition, DataError> {
    if n_clients == 0 || labels.len() < n_clients {
        return Err(DataError::TooFewSamples { samples: labels.len(), clients: n_clients });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut assignments: Vec<Vec<usize>> = vec![Vec::new(); n_clients];
    match strategy {
        PartitionStrategy::Iid => {
            let mut indices: Vec<usize> = (0..labels.len()).collect();
            indices.shuffle(&mut rng);
            // chunk sizes differ by at most one
            let base = labels.len() / n_clients;
            let extra = labels.len() % n_clients;
            let mut start = 0;
            for (c, slot) in assignments.iter_mut().enumerate() {
                let size = base + usize::from(c < extra);
                slot.extend_from_slice(&indices[start..start + size]);
                start += size;
            }
        }
        PartitionStrategy::Dirichlet => {
            let n_classes = labels.iter().max().copied().unwrap_or(0) as usize + 1;
            for class in 0..n_classes {
                let class_indices: Vec<usize> = (0..labels.len())
                    .filter(|&i| labels[i] == class as u32)
                    .collect();
                if class_indices.is_empty() {
                    continue;
                }
                // Dirichlet(alpha·1_n) via normalized Gamma(alpha, 1) draws
                let proportions: Vec<f64> = if n_clients == 1 {
                    vec![1.0]
                } else {
                    let gamma = Gamma::new(alpha, 1.0)
                        .map_err(|e| DataError::Csv(format!("dirichlet alpha: {e}")))?;
                    let mut draws: Vec<f64> =
                        (0..n_clients).map(|_| rng.sample(&gamma)).collect();
                    let sum: f64 = draws.iter().sum();
                    if sum <= 0.0 {
                        // extreme small alpha can underflow every draw
                        let pick = rng.random_range(0..n_clients);
                        draws.iter_mut().for_each(|d| *d = 0.0);
                        draws[pick] = 1.0;
                    } else {
                        draws.iter_mut().for_each(|d| *d /= sum);
                    }
                    draws
                };
                let cumulative: Vec<f64> = proportions
                    .iter()
                    .scan(0.0, |acc, p| {
                        *acc += p;
                        Some(*acc)
                    })
                    .collect();
                for &sample in &class_indices {
                    let u: f64 = rng.random_range(0.0..1.0);
                    let client = cumulative.iter().position(|&c| u < c).unwrap_or(n_clients - 1);
                    assignments[client].push(sample);
                }
            }
            // repair empty clients by stealing from the largest
            loop {
                let Some(empty) = assignments.iter().position(|a| a.is_empty()) else {
                    break;
                };
                let largest = (0..n_clients)
                    .max_by_key(|&c| assignments[c].len())
                    .unwrap();
                let stolen = assignments[largest].pop().unwrap();
                assignments[empty].push(stolen);
            }
        }
    }
    Ok(DatasetPartition { assignments })
}
