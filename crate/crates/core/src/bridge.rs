//! The single bridge between the FL engine and the ledger. Wraps every
//! contract method as a typed call, owns transaction nonces and ordering,
//! and enforces the one-block-per-round convention.
//!
//! The session is the serialization point: exactly one in-flight mutating
//! call at a time. Training workers may run in parallel, but their results
//! are funnelled through [`BridgeSession::submit_round`] in ascending
//! client_id order, so the ledger sees a deterministic sequence.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::contracts::{ContractError, ElectionResult, ModelToken, PayloadBuilder, WatermarkSpec};
use crate::contracts;
use crate::fl::model::ModelParams;
use crate::ledger::{Address, LedgerError, LedgerState, Transaction};
use crate::watermark::{self, WatermarkError, WatermarkKey};

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("contract call {contract}.{method} failed: {code}")]
    ContractRejected { contract: String, method: String, code: String },
    #[error("too many clients: {clients} clients need {clients} + 1 accounts, have {accounts}")]
    TooManyClients { clients: usize, accounts: usize },
    #[error("duplicate client id `{0}`")]
    DuplicateClientId(String),
    #[error("unknown client id `{0}`")]
    UnknownClient(String),
    #[error("out of order round: expected {expected}, got {got}")]
    OutOfOrderRound { expected: u64, got: u64 },
    #[error(transparent)]
    Watermark(#[from] WatermarkError),
    #[error("watermark embedding failed: {0}")]
    WatermarkEmbeddingFailed(WatermarkError),
    #[error(transparent)]
    Model(#[from] crate::fl::model::ModelError),
}

/// Deployment parameters for [`BridgeSession::open`].
#[derive(Clone, Debug)]
pub struct SessionConfig {
    pub watermark_k: u64,
    pub watermark_d: u64,
    /// Genesis account count; at least clients + 1 (accounts[0] is the
    /// server and never signs FL-client transactions).
    pub accounts: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig { watermark_k: 32, watermark_d: 512, accounts: crate::ledger::GENESIS_ACCOUNTS }
    }
}

/// Embedding fine-tune budget used by [`BridgeSession::finalize_model`].
const EMBED_LEARNING_RATE: f64 = 0.01;
const EMBED_MAX_STEPS: usize = 1000;

pub struct BridgeSession {
    ledger: LedgerState,
    bindings: BTreeMap<String, Address>,
    current_round: u64,
}

impl BridgeSession {
    /// Start the chain, deploy contracts from accounts[0], and seal the
    /// setup block. Leaves the chain at height 2 (genesis + setup).
    pub fn open(chain_seed: u64, config: SessionConfig) -> Result<Self, BridgeError> {
        let ledger = LedgerState::init_chain_with(chain_seed, config.accounts)?;
        let server = ledger.server_account();
        let payload = PayloadBuilder::new()
            .u64(config.watermark_k)
            .u64(config.watermark_d)
            .build();
        let mut session =
            BridgeSession { ledger, bindings: BTreeMap::new(), current_round: 0 };
        session.call(server, "system", "deploy", payload, 0)?;
        session.seal_checked()?;
        Ok(session)
    }

    fn call(
        &mut self,
        sender: Address,
        contract: &str,
        method: &str,
        payload: Vec<u8>,
        round_tag: u64,
    ) -> Result<(), BridgeError> {
        let tx = Transaction {
            nonce: self.ledger.next_nonce(&sender),
            sender,
            contract: contract.to_string(),
            method: method.to_string(),
            payload,
            round_tag,
        };
        self.ledger.submit_transaction(tx)?;
        Ok(())
    }

    /// Seal and surface the first failed tx, if any, as a bridge error.
    /// Correctly sequenced bridge calls never fail at seal time; this is
    /// the fail-fast guard for caller bugs.
    fn seal_checked(&mut self) -> Result<[u8; 32], BridgeError> {
        let block = self.ledger.seal_block();
        let hash = block.block_hash;
        if let Some(failed) = block.txs.iter().find(|tx| tx.failed) {
            return Err(BridgeError::ContractRejected {
                contract: failed.tx.contract.clone(),
                method: failed.tx.method.clone(),
                code: failed.error.clone(),
            });
        }
        Ok(hash)
    }

    /// Bind client i to accounts[i+1], submit all registrations plus the
    /// round-1 election, and seal them in one block.
    pub fn bind_clients(
        &mut self,
        client_ids: &[String],
    ) -> Result<BTreeMap<String, Address>, BridgeError> {
        let available = self.ledger.accounts.len().saturating_sub(1);
        if client_ids.len() > available {
            return Err(BridgeError::TooManyClients {
                clients: client_ids.len(),
                accounts: self.ledger.accounts.len(),
            });
        }
        for (i, id) in client_ids.iter().enumerate() {
            if self.bindings.contains_key(id) {
                return Err(BridgeError::DuplicateClientId(id.clone()));
            }
            let address = self.ledger.accounts[i + 1];
            self.bindings.insert(id.clone(), address);
            let payload = PayloadBuilder::new().str(id).build();
            self.call(address, "client_registry", "register", payload, 0)?;
        }
        let server = self.ledger.server_account();
        self.call(server, "election", "elect", PayloadBuilder::new().u64(1).build(), 0)?;
        self.seal_checked()?;
        Ok(self.bindings.clone())
    }

    pub fn client_address(&self, client_id: &str) -> Result<Address, BridgeError> {
        self.bindings
            .get(client_id)
            .copied()
            .ok_or_else(|| BridgeError::UnknownClient(client_id.to_string()))
    }

    /// One block per round: record_training for every client in ascending
    /// client_id order, settle incentives, elect the next round's
    /// aggregator, seal. Returns the election result for round + 1 and
    /// the sealed block hash.
    pub fn submit_round(
        &mut self,
        round: u64,
        metadata: &[(String, u64, u64, u64)],
        budget: u64,
    ) -> Result<(ElectionResult, [u8; 32]), BridgeError> {
        if round != self.current_round + 1 {
            return Err(BridgeError::OutOfOrderRound {
                expected: self.current_round + 1,
                got: round,
            });
        }
        let mut ordered: Vec<&(String, u64, u64, u64)> = metadata.iter().collect();
        ordered.sort_by(|a, b| a.0.cmp(&b.0));
        for (client_id, accuracy, loss, dataset_size) in ordered {
            let address = self.client_address(client_id)?;
            let payload = PayloadBuilder::new()
                .u64(round)
                .u64(*accuracy)
                .u64(*loss)
                .u64(*dataset_size)
                .build();
            self.call(address, "training_records", "record", payload, round)?;
        }
        let server = self.ledger.server_account();
        let settle = PayloadBuilder::new().u64(round).u64(budget).build();
        self.call(server, "incentive", "settle", settle, round)?;
        let elect = PayloadBuilder::new().u64(round + 1).build();
        self.call(server, "election", "elect", elect, round)?;
        let hash = self.seal_checked()?;
        self.current_round = round;
        let result = self
            .ledger
            .contracts
            .election_result(round + 1)
            .expect("election sealed in this block")
            .clone();
        Ok((result, hash))
    }

    /// Issue the model's watermark, fine-tune the final model until every
    /// bit extracts, then mint the ownership token. Watermark issuance and
    /// mint are sealed together in the finalization block; the bits are
    /// precomputed from the same prev-block hash the contract will use.
    pub fn finalize_model(
        &mut self,
        model_id: &str,
        owner_client_id: &str,
        params: &mut ModelParams,
        slice_offset: usize,
        gamma: f64,
    ) -> Result<(ModelToken, f64), BridgeError> {
        let owner = self.client_address(owner_client_id)?;
        if self.ledger.contracts.watermark_spec(model_id).is_some() {
            return Err(BridgeError::ContractRejected {
                contract: "model_registry".into(),
                method: "issue_watermark".into(),
                code: ContractError::DuplicateModelId.code().into(),
            });
        }
        let config = self.ledger.contracts.config().expect("contracts deployed").clone();
        let k = config.watermark_k as usize;
        let d = config.watermark_d as usize;
        // Both txs land in the same block, so the contract's issuance will
        // see the same prev hash we use here.
        let prev_hash = self.ledger.last_block().block_hash;
        let bits = contracts::watermark_bits(model_id, &prev_hash, k as u64);
        let key_seed = contracts::watermark_seed(model_id, &prev_hash);
        let key = WatermarkKey::derive(key_seed, k, d)?;

        let range = params.watermark_slice_range(slice_offset, d)?;
        let slice = params.values[range.clone()].to_vec();
        let (embedded, _steps) =
            watermark::embed(&slice, &key, &bits, gamma, EMBED_LEARNING_RATE, EMBED_MAX_STEPS)
                .map_err(BridgeError::WatermarkEmbeddingFailed)?;
        params.values[range.clone()].copy_from_slice(&embedded);

        let extracted = watermark::extract(&params.values[range], &key)?;
        let rate = watermark::detection_rate(&extracted, &bits)?;
        let commitment = watermark::commitment(&bits, key_seed);

        let server = self.ledger.server_account();
        let issue = PayloadBuilder::new().str(model_id).build();
        self.call(server, "model_registry", "issue_watermark", issue, self.current_round)?;
        let mint = PayloadBuilder::new().str(model_id).bytes32(&commitment).build();
        self.call(owner, "model_registry", "mint", mint, self.current_round)?;
        self.seal_checked()?;

        let spec = self.ledger.contracts.watermark_spec(model_id).unwrap();
        debug_assert_eq!(spec.bits, bits);
        let token = self
            .ledger
            .contracts
            .tokens()
            .into_iter()
            .find(|t| t.model_id == model_id)
            .expect("token minted in this block")
            .clone();
        Ok((token, rate))
    }

    pub fn ledger(&self) -> &LedgerState {
        &self.ledger
    }

    pub fn watermark_spec(&self, model_id: &str) -> Option<&WatermarkSpec> {
        self.ledger.contracts.watermark_spec(model_id)
    }

    pub fn height(&self) -> u64 {
        self.ledger.height()
    }

    pub fn state_root(&self) -> [u8; 32] {
        self.ledger.last_block().state_root
    }

    pub fn aggregator_for_round(&self, round: u64) -> Option<Address> {
        self.ledger.contracts.election_result(round).map(|r| r.aggregator)
    }

    pub fn write_log(&self, path: &std::path::Path) -> Result<(), BridgeError> {
        Ok(self.ledger.write_log(path)?)
    }
}
