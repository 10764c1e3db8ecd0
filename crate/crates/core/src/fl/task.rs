//! End-to-end task execution: bind clients, then for every communication
//! round train locally, record metrics on chain, settle incentives and
//! elect the next aggregator — one block per round — and finally embed
//! the watermark and mint the model token.

use serde::Serialize;
use thiserror::Error;

use crate::bridge::{BridgeError, BridgeSession};
use crate::codec::to_micro;

use super::config::{Algorithm, TaskConfig};
use super::data::{split_dataset, DataError, Dataset, DatasetPartition};
use super::model::{init_model, ModelError, ModelKind, ModelParams};
use super::train::{aggregate, local_train, ModelUpdate, TrainError};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Bridge(#[from] BridgeError),
}

#[derive(Clone, Debug, Serialize)]
pub struct RoundSummary {
    pub round: u64,
    /// Elected aggregator; aggregation runs in-process but is attributed
    /// to this address.
    pub aggregator: String,
    pub mean_accuracy: f64,
    pub mean_loss: f64,
    pub block_hash: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct FinalSummary {
    pub detection_rate: f64,
    pub token_id: u64,
    pub state_root: String,
    pub global_accuracy: f64,
    pub global_loss: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TaskReport {
    pub rounds: Vec<RoundSummary>,
    pub final_summary: FinalSummary,
}

pub struct TaskOutput {
    pub report: TaskReport,
    pub model: ModelParams,
}

/// Execute a full configured run against an open session. The session
/// must be freshly opened (contracts deployed, nothing else sealed).
pub fn run_task(config: &TaskConfig, session: &mut BridgeSession) -> Result<TaskOutput, TaskError> {
    let g = &config.global_args;
    let data = Dataset::load(&g.dataset, &config.dataset_args, g.seed)?;
    let partition = split_dataset(
        &data.labels,
        g.client_number,
        config.dataset_args.partition,
        config.dataset_args.alpha,
        g.seed,
    )?;
    let kind = ModelKind::parse(&g.model, g.hidden_size)?;
    let mut global = init_model(kind, data.n_features, data.n_classes, g.seed);

    let client_ids = config.client_ids();
    session.bind_clients(&client_ids)?;

    let mut rounds = Vec::new();
    for round in 1..=g.communication_rounds {
        let aggregator = session
            .aggregator_for_round(round)
            .expect("aggregator elected in the previous block");
        let updates = train_round(config, &data, &partition, &global, round)?;
        let metadata: Vec<(String, u64, u64, u64)> = client_ids
            .iter()
            .zip(&updates)
            .map(|(id, u)| {
                (
                    id.clone(),
                    to_micro(u.metrics.accuracy),
                    to_micro(u.metrics.loss),
                    u.metrics.dataset_size as u64,
                )
            })
            .collect();
        let (_next_election, block_hash) =
            session.submit_round(round, &metadata, g.round_budget)?;
        // functionally `aggregate`, attributed to the elected client
        global = aggregate(&updates)?;
        let n = updates.len() as f64;
        rounds.push(RoundSummary {
            round,
            aggregator: aggregator.to_hex(),
            mean_accuracy: updates.iter().map(|u| u.metrics.accuracy).sum::<f64>() / n,
            mean_loss: updates.iter().map(|u| u.metrics.loss).sum::<f64>() / n,
            block_hash: hex::encode(block_hash),
        });
    }

    let wm = &config.train_args.watermark;
    let (detection_rate, token_id) = if wm.enabled {
        let owner = wm.owner.clone().unwrap_or_else(|| client_ids[0].clone());
        let (token, rate) =
            session.finalize_model(&config.model_id(), &owner, &mut global, 0, wm.gamma)?;
        (rate, token.token_id)
    } else {
        (0.0, 0)
    };

    let final_metrics = super::train::evaluate_full(&global, &data)?;
    let report = TaskReport {
        rounds,
        final_summary: FinalSummary {
            detection_rate,
            token_id,
            state_root: hex::encode(session.state_root()),
            global_accuracy: final_metrics.accuracy,
            global_loss: final_metrics.loss,
        },
    };
    Ok(TaskOutput { report, model: global })
}

fn train_round(
    config: &TaskConfig,
    data: &Dataset,
    partition: &DatasetPartition,
    global: &ModelParams,
    round: u64,
) -> Result<Vec<ModelUpdate>, TaskError> {
    let mut updates = Vec::with_capacity(partition.assignments.len());
    for (client, indices) in partition.assignments.iter().enumerate() {
        // per-(seed, round, client) shuffle stream
        let shuffle_seed = config
            .global_args
            .seed
            .wrapping_mul(0x9e3779b97f4a7c15)
            .wrapping_add(round.wrapping_mul(0x100000001b3))
            .wrapping_add(client as u64);
        let update = local_train(
            global,
            data,
            indices,
            &config.train_args,
            config.algorithm,
            None,
            shuffle_seed,
        )?;
        updates.push(update);
    }
    Ok(updates)
}

impl TaskConfig {
    /// Session parameters implied by this config.
    pub fn session_config(&self) -> crate::bridge::SessionConfig {
        let wm = &self.train_args.watermark;
        crate::bridge::SessionConfig {
            watermark_k: wm.k as u64,
            watermark_d: wm.slice_len as u64,
            accounts: crate::ledger::GENESIS_ACCOUNTS.max(self.global_args.client_number + 1),
        }
    }
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::FedAvg => "fedavg",
            Algorithm::FedProx => "fedprox",
        }
    }
}
