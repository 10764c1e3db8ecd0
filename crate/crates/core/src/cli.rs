//! Batch command implementations behind the `fedchain` binary: run an
//! experiment from a config file, inspect a block log, and verify model
//! ownership offline. Exit codes are fixed so CI harnesses can assert on
//! them: 0 success/OWNED, 1 runtime or replay failure, 2 config error,
//! 3 NOT-OWNED.

use std::path::Path;

use crate::bridge::BridgeSession;
use crate::contracts;
use crate::fl::config::TaskConfig;
use crate::fl::model::ModelParams;
use crate::fl::task::run_task;
use crate::ledger::{LedgerError, LedgerState};
use crate::watermark;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NOT_OWNED: i32 = 3;

/// `fedchain run --config PATH --out DIR`
pub fn cmd_run(config_path: &Path, out_dir: &Path) -> i32 {
    let config = match TaskConfig::from_file(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Err(e) = std::fs::create_dir_all(out_dir) {
        eprintln!("cannot create output directory: {e}");
        return EXIT_RUNTIME;
    }
    let mut session = match BridgeSession::open(config.global_args.seed, config.session_config()) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("session open failed: {e}");
            return EXIT_RUNTIME;
        }
    };
    let output = match run_task(&config, &mut session) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("run failed: {e}");
            return EXIT_RUNTIME;
        }
    };
    for round in &output.report.rounds {
        println!(
            "round {} aggregator={} mean_accuracy={:.6} mean_loss={:.6} block={}",
            round.round,
            &round.aggregator[..8],
            round.mean_accuracy,
            round.mean_loss,
            &round.block_hash[..8],
        );
    }
    let fin = &output.report.final_summary;
    println!(
        "final detection_rate={:.4} token_id={} global_accuracy={:.6} state_root={}",
        fin.detection_rate, fin.token_id, fin.global_accuracy, fin.state_root
    );

    let report_json = serde_json::to_string_pretty(&output.report).unwrap();
    let writes = [
        std::fs::write(out_dir.join("report.json"), report_json),
        std::fs::write(out_dir.join("manifest.json"), contracts::manifest_json()),
    ];
    if let Some(e) = writes.into_iter().find_map(|r| r.err()) {
        eprintln!("cannot write artifacts: {e}");
        return EXIT_RUNTIME;
    }
    if let Err(e) = session.write_log(&out_dir.join("blocks.log")) {
        eprintln!("cannot write block log: {e}");
        return EXIT_RUNTIME;
    }
    if let Err(e) = output.model.write_file(&out_dir.join("model.bin")) {
        eprintln!("cannot write model file: {e}");
        return EXIT_RUNTIME;
    }
    EXIT_OK
}

pub enum LedgerView {
    Summary,
    Block(u64),
    Records(u64),
    Balances,
    Tokens,
}

fn replay_from(path: &Path) -> Result<LedgerState, LedgerError> {
    let log = LedgerState::read_log(path)?;
    LedgerState::replay_log(&log)
}

/// `fedchain ledger --log PATH [--block N | --records ROUND | --balances | --tokens]`
pub fn cmd_ledger(log_path: &Path, view: LedgerView) -> i32 {
    let state = match replay_from(log_path) {
        Ok(s) => s,
        Err(e @ (LedgerError::BrokenHashChain(_) | LedgerError::StateRootMismatch(_))) => {
            eprintln!("replay failed: {e}");
            return EXIT_RUNTIME;
        }
        Err(e) => {
            eprintln!("cannot read block log: {e}");
            return EXIT_RUNTIME;
        }
    };
    match view {
        LedgerView::Summary => {
            println!("height {}", state.height());
            println!("state_root {}", hex::encode(state.last_block().state_root));
            println!("accounts {}", state.accounts.len());
        }
        LedgerView::Block(index) => {
            let block = match state.get_block(index) {
                Ok(b) => b,
                Err(e) => {
                    eprintln!("{e}");
                    return EXIT_RUNTIME;
                }
            };
            println!("block {}", block.index);
            println!("prev_hash {}", hex::encode(block.prev_hash));
            println!("state_root {}", hex::encode(block.state_root));
            println!("block_hash {}", hex::encode(block.block_hash));
            println!("txs {}", block.txs.len());
            for tx in &block.txs {
                println!(
                    "  {}.{} sender={} nonce={} round={}{}",
                    tx.tx.contract,
                    tx.tx.method,
                    &tx.tx.sender.to_hex()[..8],
                    tx.tx.nonce,
                    tx.tx.round_tag,
                    if tx.failed { format!(" FAILED={}", tx.error) } else { String::new() },
                );
            }
        }
        LedgerView::Records(round) => {
            for record in state.contracts.round_records(round) {
                let client_id = state
                    .contracts
                    .client_record(&record.client)
                    .map(|r| r.client_id.clone())
                    .unwrap_or_default();
                println!(
                    "client={} id={} accuracy={} loss={} dataset_size={}",
                    record.client.to_hex(),
                    client_id,
                    record.accuracy,
                    record.loss,
                    record.dataset_size,
                );
            }
        }
        LedgerView::Balances => {
            for (address, balance) in state.contracts.balances() {
                println!("{} {}", address.to_hex(), balance);
            }
            println!("total_minted {}", state.contracts.total_minted());
        }
        LedgerView::Tokens => {
            for token in state.contracts.tokens() {
                println!(
                    "token {} model={} owner={} commitment={} transfers={}",
                    token.token_id,
                    token.model_id,
                    token.owner.to_hex(),
                    hex::encode(token.commitment),
                    token.history.len(),
                );
            }
        }
    }
    EXIT_OK
}

/// `fedchain verify --model PATH --log PATH --token ID --seed S`
///
/// Derives the key from the claimed seed, extracts bits from the model's
/// watermark slice, and checks the commitment against the on-chain token.
pub fn cmd_verify(model_path: &Path, log_path: &Path, token_id: u64, seed: u64) -> i32 {
    let model = match ModelParams::read_file(model_path) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("cannot read model file: {e}");
            return EXIT_RUNTIME;
        }
    };
    let state = match replay_from(log_path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("replay failed: {e}");
            return EXIT_RUNTIME;
        }
    };
    let Some(token) = state.contracts.token(token_id) else {
        eprintln!("unknown token {token_id}");
        return EXIT_RUNTIME;
    };
    let Some(config) = state.contracts.config() else {
        eprintln!("contracts not deployed in this log");
        return EXIT_RUNTIME;
    };
    let k = config.watermark_k as usize;
    let d = config.watermark_d as usize;
    let key = match watermark::WatermarkKey::derive(seed, k, d) {
        Ok(key) => key,
        Err(e) => {
            eprintln!("cannot derive key: {e}");
            return EXIT_RUNTIME;
        }
    };
    let range = match model.watermark_slice_range(0, d) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("model has no watermark slice: {e}");
            return EXIT_RUNTIME;
        }
    };
    let extracted = watermark::extract(&model.values[range], &key).unwrap();
    // detection rate against the on-chain spec for this model
    if let Some(spec) = state.contracts.watermark_spec(&token.model_id) {
        let rate = watermark::detection_rate(&extracted, &spec.bits).unwrap_or(0.0);
        println!("detection_rate {rate:.4}");
    }
    let owned = watermark::commitment(&extracted, seed) == token.commitment;
    if owned {
        println!("verdict OWNED");
        EXIT_OK
    } else {
        println!("verdict NOT-OWNED");
        EXIT_NOT_OWNED
    }
}
