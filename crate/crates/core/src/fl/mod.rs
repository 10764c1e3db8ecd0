//! Federated-learning engine: task configuration, dataset partitioning,
//! local trainers (FedAvg/FedProx with an optional watermark regularizer),
//! weighted aggregation and evaluation.

pub mod config;
pub mod data;
pub mod model;
pub mod task;
pub mod train;

pub use config::{Algorithm, PartitionStrategy, TaskConfig};
pub use data::{Dataset, DatasetPartition};
pub use model::{ModelParams, ModelError};
pub use task::{RoundSummary, TaskReport};
pub use train::{aggregate, evaluate, local_train, Metrics, ModelUpdate, TrainError};
