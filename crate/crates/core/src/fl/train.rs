//! Local trainers and the shared aggregator. FedAvg and FedProx differ
//! only in the proximal term of the local objective; the aggregation rule
//! is the dataset-size-weighted mean either way.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::watermark::{self, WatermarkKey};

use super::config::{Algorithm, TrainArgs};
use super::data::Dataset;
use super::model::{ModelError, ModelParams, Network};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at epoch {epoch}, batch {batch} (lr too high?)")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("empty update set")]
    EmptyUpdateSet,
    #[error("shape mismatch between updates")]
    ShapeMismatch,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Watermark(#[from] watermark::WatermarkError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    /// Argmax-match fraction in [0, 1].
    pub accuracy: f64,
    /// Mean cross-entropy.
    pub loss: f64,
    pub dataset_size: usize,
}

#[derive(Clone, Debug)]
pub struct ModelUpdate {
    pub params: ModelParams,
    pub metrics: Metrics,
}

/// Watermark term of the local objective: lambda · hinge(slice).
pub struct WatermarkCtx<'a> {
    pub key: &'a WatermarkKey,
    pub target: &'a [i8],
    pub slice: std::ops::Range<usize>,
    pub gamma: f64,
    pub lambda: f64,
}

/// Mini-batch SGD on cross-entropy + weight_decay/2·‖w‖² + (fedprox)
/// mu/2·‖w − w_global‖² + (optional) lambda·hinge. Batches are drawn in
/// seeded shuffled order, so a run is a pure function of its inputs.
pub fn local_train(
    global_params: &ModelParams,
    data: &Dataset,
    indices: &[usize],
    train_args: &TrainArgs,
    algorithm: Algorithm,
    watermark_ctx: Option<&WatermarkCtx>,
    shuffle_seed: u64,
) -> Result<ModelUpdate, TrainError> {
    assert!(!indices.is_empty(), "client partition must be non-empty");
    let mut params = global_params.clone();
    let mu = match algorithm {
        Algorithm::FedAvg => 0.0,
        Algorithm::FedProx => train_args.mu,
    };
    let lr = train_args.learning_rate;
    let wd = train_args.weight_decay;
    let mut rng = ChaCha20Rng::seed_from_u64(shuffle_seed);
    let mut order: Vec<usize> = indices.to_vec();
    let mut grad = vec![0.0; params.len()];
    for epoch in 0..train_args.local_epochs {
        order.shuffle(&mut rng);
        for (batch_no, batch) in order.chunks(train_args.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let net = Network::new(&params, data)?;
            let ce = net.backward_batch(data, batch, &mut grad);
            if !ce.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: batch_no });
            }
            if wd > 0.0 {
                for (g, &w) in grad.iter_mut().zip(&params.values) {
                    *g += wd * w;
                }
            }
            if mu > 0.0 {
                for ((g, &w), &wg) in
                    grad.iter_mut().zip(&params.values).zip(&global_params.values)
                {
                    *g += mu * (w - wg);
                }
            }
            if let Some(ctx) = watermark_ctx {
                let slice = &params.values[ctx.slice.clone()];
                let (_, wm_grad) = watermark::regularizer(slice, ctx.key, ctx.target, ctx.gamma)?;
                for (g, wg) in grad[ctx.slice.clone()].iter_mut().zip(&wm_grad) {
                    *g += ctx.lambda * wg;
                }
            }
            for (w, g) in params.values.iter_mut().zip(&grad) {
                *w -= lr * g;
            }
        }
    }
    if !params.all_finite() {
        return Err(TrainError::NonFiniteLoss { epoch: train_args.local_epochs, batch: 0 });
    }
    let metrics = evaluate(&params, data, indices)?;
    Ok(ModelUpdate { params, metrics })
}

/// FedAvg rule: elementwise mean weighted by dataset size.
pub fn aggregate(updates: &[ModelUpdate]) -> Result<ModelParams, TrainError> {
    let first = updates.first().ok_or(TrainError::EmptyUpdateSet)?;
    if updates.iter().any(|u| !u.params.same_shape(&first.params)) {
        return Err(TrainError::ShapeMismatch);
    }
    let total: f64 = updates.iter().map(|u| u.metrics.dataset_size as f64).sum();
    let mut values = vec![0.0; first.params.len()];
    for update in updates {
        let weight = update.metrics.dataset_size as f64 / total;
        for (acc, &v) in values.iter_mut().zip(&update.params.values) {
            *acc += weight * v;
        }
    }
    Ok(ModelParams { values, shapes: first.params.shapes.clone() })
}

/// Accuracy (argmax-match fraction, first max wins ties) and mean
/// cross-entropy over the given sample indices.
pub fn evaluate(
    params: &ModelParams,
    data: &Dataset,
    indices: &[usize],
) -> Result<Metrics, TrainError> {
    let net = Network::new(params, data)?;
    let mut correct = 0usize;
    let mut loss = 0.0;
    for &i in indices {
        let fwd = net.forward(data.row(i));
        let label = data.labels[i] as usize;
        loss += super::model::cross_entropy(&fwd.logits, label);
        let pred = fwd
            .logits
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(c, _)| c)
            .unwrap();
        if pred == label {
            correct += 1;
        }
    }
    let n = indices.len() as f64;
    Ok(Metrics {
        accuracy: correct as f64 / n,
        loss: loss / n,
        dataset_size: indices.len(),
    })
}

/// Evaluate over the whole dataset.
pub fn evaluate_full(params: &ModelParams, data: &Dataset) -> Result<Metrics, TrainError> {
    let all: Vec<usize> = (0..data.len()).collect();
    evaluate(params, data, &all)
}
