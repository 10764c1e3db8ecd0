//! Task configuration: `global_args`, `train_args` and the algorithm
//! selector, loaded from a TOML file with the same section names.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(String),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    FedAvg,
    FedProx,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionStrategy {
    Iid,
    Dirichlet,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalArgs {
    pub model: String,
    pub dataset: String,
    pub client_number: usize,
    pub communication_rounds: u64,
    pub seed: u64,
    /// Incentive budget settled per round, in token units.
    #[serde(default = "default_round_budget")]
    pub round_budget: u64,
    /// Hidden width for the one-hidden-layer MLP.
    #[serde(default = "default_hidden_size")]
    pub hidden_size: usize,
}

fn default_round_budget() -> u64 {
    1000
}

fn default_hidden_size() -> usize {
    256
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetArgs {
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default = "default_features")]
    pub features: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_separation")]
    pub separation: f64,
    /// Path to a CSV file (header row, last column = integer label); used
    /// when dataset = "csv".
    #[serde(default)]
    pub csv_path: Option<String>,
    #[serde(default = "default_partition")]
    pub partition: PartitionStrategy,
    /// Dirichlet concentration; small alpha = high label skew.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_classes() -> usize {
    2
}
fn default_features() -> usize {
    20
}
fn default_samples() -> usize {
    1000
}
fn default_separation() -> f64 {
    4.0
}
fn default_partition() -> PartitionStrategy {
    PartitionStrategy::Iid
}
fn default_alpha() -> f64 {
    0.5
}

impl Default for DatasetArgs {
    fn default() -> Self {
        DatasetArgs {
            classes: default_classes(),
            features: default_features(),
            samples: default_samples(),
            separation: default_separation(),
            csv_path: None,
            partition: default_partition(),
            alpha: default_alpha(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WatermarkArgs {
    #[serde(default = "default_true")]
    pub enabled: bool,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Watermarked slice length, taken from the start of the final
    /// linear layer.
    #[serde(default = "default_slice_len")]
    pub slice_len: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Model identifier minted on chain; defaults to "<model>-<seed>".
    #[serde(default)]
    pub model_id: Option<String>,
    /// client_id of the token owner; defaults to the first client.
    #[serde(default)]
    pub owner: Option<String>,
}

fn default_true() -> bool {
    true
}
fn default_k() -> usize {
    32
}
fn default_slice_len() -> usize {
    512
}
fn default_gamma() -> f64 {
    0.1
}
fn default_lambda() -> f64 {
    0.5
}

impl Default for WatermarkArgs {
    fn default() -> Self {
        WatermarkArgs {
            enabled: true,
            k: default_k(),
            slice_len: default_slice_len(),
            gamma: default_gamma(),
            lambda: default_lambda(),
            model_id: None,
            owner: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainArgs {
    pub learning_rate: f64,
    #[serde(default = "default_optimizer")]
    pub optimizer: String,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_local_epochs")]
    pub local_epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// FedProx proximal coefficient; only meaningful under fedprox.
    #[serde(default)]
    pub mu: f64,
    #[serde(default)]
    pub watermark: WatermarkArgs,
}

fn default_optimizer() -> String {
    "sgd".to_string()
}
fn default_local_epochs() -> usize {
    1
}
fn default_batch_size() -> usize {
    32
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub global_args: GlobalArgs,
    #[serde(default)]
    pub dataset_args: DatasetArgs,
    pub train_args: TrainArgs,
    pub algorithm: Algorithm,
}

impl TaskConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: TaskConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(e.to_string()))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = &self.global_args;
        if g.client_number == 0 {
            return Err(ConfigError::Invalid {
                field: "global_args.client_number",
                reason: "must be at least 1".into(),
            });
        }
        if g.communication_rounds == 0 {
            return Err(ConfigError::Invalid {
                field: "global_args.communication_rounds",
                reason: "must be at least 1".into(),
            });
        }
        let t = &self.train_args;
        if t.learning_rate <= 0.0 {
            return Err(ConfigError::Invalid {
                field: "train_args.learning_rate",
                reason: "must be positive".into(),
            });
        }
        if t.optimizer != "sgd" {
            return Err(ConfigError::Invalid {
                field: "train_args.optimizer",
                reason: format!("unsupported optimizer `{}`, only `sgd`", t.optimizer),
            });
        }
        if t.weight_decay < 0.0 {
            return Err(ConfigError::Invalid {
                field: "train_args.weight_decay",
                reason: "must be non-negative".into(),
            });
        }
        if t.local_epochs == 0 {
            return Err(ConfigError::Invalid {
                field: "train_args.local_epochs",
                reason: "must be at least 1".into(),
            });
        }
        if t.batch_size == 0 {
            return Err(ConfigError::Invalid {
                field: "train_args.batch_size",
                reason: "must be at least 1".into(),
            });
        }
        if t.mu < 0.0 {
            return Err(ConfigError::Invalid {
                field: "train_args.mu",
                reason: "must be non-negative".into(),
            });
        }
        if t.watermark.enabled {
            let wm = &t.watermark;
            if wm.k == 0 || wm.k > wm.slice_len {
                return Err(ConfigError::Invalid {
                    field: "train_args.watermark.k",
                    reason: format!("need 1 <= k <= slice_len, got k={} slice_len={}", wm.k, wm.slice_len),
                });
            }
            if wm.gamma <= 0.0 {
                return Err(ConfigError::Invalid {
                    field: "train_args.watermark.gamma",
                    reason: "must be positive".into(),
                });
            }
        }
        if self.dataset_args.alpha <= 0.0 {
            return Err(ConfigError::Invalid {
                field: "dataset_args.alpha",
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }

    pub fn model_id(&self) -> String {
        self.train_args
            .watermark
            .model_id
            .clone()
            .unwrap_or_else(|| format!("{}-{}", self.global_args.model, self.global_args.seed))
    }

    /// "client_000", "client_001", ... — zero-padded so lexicographic
    /// order matches client index order.
    pub fn client_ids(&self) -> Vec<String> {
        (0..self.global_args.client_number).map(|i| format!("client_{i:03}")).collect()
    }
}

/// The default desk-scale benchmark: 10 clients, 5 rounds, synthetic
/// 2-class blobs, fedavg, watermark enabled.
pub fn default_benchmark_toml() -> &'static str {
    r#"algorithm = "fedavg"

[global_args]
model = "mlp_1hidden"
dataset = "blobs"
client_number = 10
communication_rounds = 5
seed = 42

[dataset_args]
classes = 2
features = 20
samples = 1000
separation = 4.0
partition = "iid"

[train_args]
learning_rate = 0.1
optimizer = "sgd"
weight_decay = 0.0
local_epochs = 2
batch_size = 32
mu = 0.0

[train_args.watermark]
enabled = true
k = 32
slice_len = 512
gamma = 0.1
lambda = 0.5
"#
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_benchmark_parses() {
        let config = TaskConfig::from_toml_str(default_benchmark_toml()).unwrap();
        assert_eq!(config.global_args.client_number, 10);
        assert_eq!(config.global_args.communication_rounds, 5);
        assert_eq!(config.algorithm, Algorithm::FedAvg);
        assert!(config.train_args.watermark.enabled);
        assert_eq!(config.model_id(), "mlp_1hidden-42");
    }

    #[test]
    fn missing_client_number_names_the_field() {
        let text = default_benchmark_toml().replace("client_number = 10\n", "");
        let err = TaskConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("client_number"), "{err}");
    }

    #[test]
    fn bad_optimizer_rejected() {
        let text = default_benchmark_toml().replace("\"sgd\"", "\"adam\"");
        let err = TaskConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("optimizer"), "{err}");
    }

    #[test]
    fn client_ids_sort_in_index_order() {
        let config = TaskConfig::from_toml_str(default_benchmark_toml()).unwrap();
        let ids = config.client_ids();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
    }
}
