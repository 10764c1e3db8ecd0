//! Native contract state machines: client registration, training-record
//! logging, aggregator election, incentive distribution, and the
//! watermark/model-token registry.
//!
//! Every method is a total function of (current state, tx payload, block
//! context) — no timestamps, no hidden globals — so replay is exact. The
//! ledger's sealer is the only caller of [`ContractSet::dispatch`].

mod abi;
mod state;

pub use abi::{
    manifest, manifest_json, validate_payload, ArgType, ArgValue, MethodSpec, PayloadBuilder,
};
pub use state::{
    ClientRecord, ContractConfig, ElectionResult, IncentiveState, ModelToken, RoundRecord,
    WatermarkSpec,
};

use std::collections::BTreeMap;

use thiserror::Error;

use crate::codec::{sha256, Writer};
use crate::ledger::{Address, Transaction};

use state::{ClientRegistry, ElectionBook, ModelRegistry, TrainingRecords};

/// Context the sealer hands to every dispatched transaction.
pub struct BlockContext {
    /// Index of the block being sealed.
    pub height: u64,
    /// Hash of the last sealed block. Source of on-chain randomness.
    pub prev_hash: [u8; 32],
    /// accounts[0], the deployer/server account.
    pub server: Address,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContractError {
    #[error("NotServerAccount")]
    NotServerAccount,
    #[error("AlreadyDeployed")]
    AlreadyDeployed,
    #[error("NotDeployed")]
    NotDeployed,
    #[error("BadDimensions")]
    BadDimensions,
    #[error("UnknownContract")]
    UnknownContract,
    #[error("UnknownMethod")]
    UnknownMethod,
    #[error("BadPayload: {0}")]
    BadPayload(String),
    #[error("DuplicateAddress")]
    DuplicateAddress,
    #[error("DuplicateClientId")]
    DuplicateClientId,
    #[error("UnregisteredClient")]
    UnregisteredClient,
    #[error("DuplicateRecord")]
    DuplicateRecord,
    #[error("InvalidMetric")]
    InvalidMetric,
    #[error("NoRegisteredClients")]
    NoRegisteredClients,
    #[error("AlreadyElected")]
    AlreadyElected,
    #[error("RoundNotRecorded")]
    RoundNotRecorded,
    #[error("AlreadySettled")]
    AlreadySettled,
    #[error("DuplicateModelId")]
    DuplicateModelId,
    #[error("NoWatermarkIssued")]
    NoWatermarkIssued,
    #[error("CommitmentMismatch")]
    CommitmentMismatch,
    #[error("AlreadyTokenized")]
    AlreadyTokenized,
    #[error("UnregisteredOwner")]
    UnregisteredOwner,
    #[error("NotOwner")]
    NotOwner,
    #[error("UnknownToken")]
    UnknownToken,
    #[error("UnregisteredRecipient")]
    UnregisteredRecipient,
}

impl ContractError {
    /// Stable error code recorded in failed sealed transactions.
    pub fn code(&self) -> &'static str {
        match self {
            ContractError::NotServerAccount => "NotServerAccount",
            ContractError::AlreadyDeployed => "AlreadyDeployed",
            ContractError::NotDeployed => "NotDeployed",
            ContractError::BadDimensions => "BadDimensions",
            ContractError::UnknownContract => "UnknownContract",
            ContractError::UnknownMethod => "UnknownMethod",
            ContractError::BadPayload(_) => "BadPayload",
            ContractError::DuplicateAddress => "DuplicateAddress",
            ContractError::DuplicateClientId => "DuplicateClientId",
            ContractError::UnregisteredClient => "UnregisteredClient",
            ContractError::DuplicateRecord => "DuplicateRecord",
            ContractError::InvalidMetric => "InvalidMetric",
            ContractError::NoRegisteredClients => "NoRegisteredClients",
            ContractError::AlreadyElected => "AlreadyElected",
            ContractError::RoundNotRecorded => "RoundNotRecorded",
            ContractError::AlreadySettled => "AlreadySettled",
            ContractError::DuplicateModelId => "DuplicateModelId",
            ContractError::NoWatermarkIssued => "NoWatermarkIssued",
            ContractError::CommitmentMismatch => "CommitmentMismatch",
            ContractError::AlreadyTokenized => "AlreadyTokenized",
            ContractError::UnregisteredOwner => "UnregisteredOwner",
            ContractError::NotOwner => "NotOwner",
            ContractError::UnknownToken => "UnknownToken",
            ContractError::UnregisteredRecipient => "UnregisteredRecipient",
        }
    }
}

/// All contract state machines plus the deployment config. Undeployed
/// until a `system.deploy` transaction from accounts[0] succeeds.
#[derive(Default)]
pub struct ContractSet {
    config: Option<ContractConfig>,
    registry: ClientRegistry,
    records: TrainingRecords,
    election: ElectionBook,
    incentive: IncentiveState,
    model: ModelRegistry,
}

impl ContractSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_deployed(&self) -> bool {
        self.config.is_some()
    }

    pub fn config(&self) -> Option<&ContractConfig> {
        self.config.as_ref()
    }

    /// SHA-256 over the canonical serialization of all contract states,
    /// contracts ordered lexicographically by name.
    pub fn state_root(&self) -> [u8; 32] {
        let mut w = Writer::new();
        if self.config.is_some() {
            for name in CONTRACT_NAMES {
                w.put_str(name);
                w.put_bytes(&self.contract_state_bytes(name).unwrap());
            }
        }
        sha256(w.as_slice())
    }

    /// Canonical state bytes for one contract; None before deployment or
    /// for an unknown name.
    pub fn contract_state_bytes(&self, name: &str) -> Option<Vec<u8>> {
        let config = self.config.as_ref()?;
        let mut w = Writer::new();
        match name {
            "client_registry" => self.registry.encode(&mut w),
            "election" => self.election.encode(&mut w),
            "incentive" => self.incentive.encode(&mut w),
            "model_registry" => self.model.encode(&mut w),
            "system" => config.encode(&mut w),
            "training_records" => self.records.encode(&mut w),
            _ => return None,
        }
        Some(w.into_bytes())
    }

    pub fn dispatch(&mut self, tx: &Transaction, ctx: &BlockContext) -> Result<(), ContractError> {
        let args = abi::decode_payload(&tx.contract, &tx.method, &tx.payload)?;
        match (tx.contract.as_str(), tx.method.as_str()) {
            ("system", "deploy") => {
                self.deploy(tx.sender, ContractConfig::from_args(&args)?, ctx)
            }
            _ => {
                if self.config.is_none() {
                    return Err(ContractError::NotDeployed);
                }
                match (tx.contract.as_str(), tx.method.as_str()) {
                    ("client_registry", "register") => {
                        self.register_client(tx.sender, args[0].as_str(), ctx.height).map(|_| ())
                    }
                    ("training_records", "record") => self.record_training(
                        args[0].as_u64(),
                        tx.sender,
                        args[1].as_u64(),
                        args[2].as_u64(),
                        args[3].as_u64(),
                    ),
                    ("election", "elect") => {
                        self.elect_aggregator(args[0].as_u64(), &ctx.prev_hash).map(|_| ())
                    }
                    ("incentive", "settle") => {
                        self.distribute_incentives(args[0].as_u64(), args[1].as_u64()).map(|_| ())
                    }
                    ("model_registry", "issue_watermark") => self
                        .issue_watermark(args[0].as_str(), &ctx.prev_hash, ctx.height)
                        .map(|_| ()),
                    ("model_registry", "mint") => self
                        .mint_model_token(tx.sender, args[0].as_str(), args[1].as_bytes32())
                        .map(|_| ()),
                    ("model_registry", "transfer") => self
                        .transfer_token(args[0].as_u64(), tx.sender, args[1].as_addr())
                        .map(|_| ()),
                    _ => Err(ContractError::UnknownMethod),
                }
            }
        }
    }

    fn deploy(
        &mut self,
        sender: Address,
        config: ContractConfig,
        ctx: &BlockContext,
    ) -> Result<(), ContractError> {
        if sender != ctx.server {
            return Err(ContractError::NotServerAccount);
        }
        if self.config.is_some() {
            return Err(ContractError::AlreadyDeployed);
        }
        if config.watermark_k == 0 || config.watermark_k > config.watermark_d {
            return Err(ContractError::BadDimensions);
        }
        self.config = Some(config);
        Ok(())
    }

    fn register_client(
        &mut self,
        address: Address,
        client_id: &str,
        height: u64,
    ) -> Result<&ClientRecord, ContractError> {
        self.registry.register(address, client_id, height)
    }

    fn record_training(
        &mut self,
        round: u64,
        client: Address,
        accuracy: u64,
        loss: u64,
        dataset_size: u64,
    ) -> Result<(), ContractError> {
        if round == 0 || dataset_size == 0 || accuracy > 1_000_000 {
            return Err(ContractError::InvalidMetric);
        }
        if !self.registry.is_registered(&client) {
            return Err(ContractError::UnregisteredClient);
        }
        self.records.insert(RoundRecord { round, client, accuracy, loss, dataset_size })
    }

    fn elect_aggregator(
        &mut self,
        round: u64,
        prev_hash: &[u8; 32],
    ) -> Result<&ElectionResult, ContractError> {
        if round == 0 {
            return Err(ContractError::InvalidMetric);
        }
        if self.registry.is_empty() {
            return Err(ContractError::NoRegisteredClients);
        }
        if self.election.get(round).is_some() {
            return Err(ContractError::AlreadyElected);
        }
        // candidates ordered by client_id so the draw is auditable
        let candidates: Vec<Address> = self.registry.addresses_by_client_id();
        let mut weights: Vec<u64> = candidates
            .iter()
            .map(|a| self.records.dataset_size(round.wrapping_sub(1), a).unwrap_or(0))
            .collect();
        if weights.iter().all(|&w| w == 0) {
            // round 1, or no usable prior records: uniform draw
            weights.iter_mut().for_each(|w| *w = 1);
        }
        let seed_digest = election_seed(prev_hash, round);
        let winner = weighted_draw(&seed_digest, &weights);
        let result = ElectionResult { round, aggregator: candidates[winner], seed_digest };
        Ok(self.election.insert(result))
    }

    fn distribute_incentives(
        &mut self,
        round: u64,
        budget: u64,
    ) -> Result<BTreeMap<Address, u64>, ContractError> {
        if budget == 0 {
            return Err(ContractError::InvalidMetric);
        }
        let participants = self.records.round_records(round);
        if participants.is_empty() {
            return Err(ContractError::RoundNotRecorded);
        }
        if self.incentive.is_settled(round) {
            return Err(ContractError::AlreadySettled);
        }
        let shares: Vec<(String, Address, u64)> = participants
            .iter()
            .map(|r| {
                let id = self.registry.client_id(&r.client).unwrap_or_default().to_string();
                (id, r.client, r.dataset_size)
            })
            .collect();
        let rewards = largest_remainder_split(budget, &shares);
        self.incentive.credit_all(round, &rewards, budget);
        Ok(rewards)
    }

    fn issue_watermark(
        &mut self,
        model_id: &str,
        prev_hash: &[u8; 32],
        height: u64,
    ) -> Result<&WatermarkSpec, ContractError> {
        if self.model.spec(model_id).is_some() {
            return Err(ContractError::DuplicateModelId);
        }
        let k = self.config.as_ref().unwrap().watermark_k;
        let spec = WatermarkSpec {
            model_id: model_id.to_string(),
            k,
            bits: watermark_bits(model_id, prev_hash, k),
            key_seed: watermark_seed(model_id, prev_hash),
            issued_at: height,
        };
        Ok(self.model.insert_spec(spec))
    }

    fn mint_model_token(
        &mut self,
        owner: Address,
        model_id: &str,
        commitment: [u8; 32],
    ) -> Result<&ModelToken, ContractError> {
        if !self.registry.is_registered(&owner) {
            return Err(ContractError::UnregisteredOwner);
        }
        let spec = self.model.spec(model_id).ok_or(ContractError::NoWatermarkIssued)?;
        if commitment != commitment_digest(&spec.bits, spec.key_seed) {
            return Err(ContractError::CommitmentMismatch);
        }
        self.model.mint(owner, model_id, commitment)
    }

    fn transfer_token(
        &mut self,
        token_id: u64,
        from: Address,
        to: Address,
    ) -> Result<&ModelToken, ContractError> {
        let token = self.model.token(token_id).ok_or(ContractError::UnknownToken)?;
        if token.owner != from {
            return Err(ContractError::NotOwner);
        }
        if !self.registry.is_registered(&to) {
            return Err(ContractError::UnregisteredRecipient);
        }
        Ok(self.model.transfer(token_id, to))
    }

    /// True iff the claimed (bits, seed) hash to the token's commitment.
    /// Pure read; does not reveal the stored spec.
    pub fn verify_ownership(
        &self,
        token_id: u64,
        claimed_bits: &[i8],
        claimed_seed: u64,
    ) -> Result<bool, ContractError> {
        let token = self.model.token(token_id).ok_or(ContractError::UnknownToken)?;
        Ok(commitment_digest(claimed_bits, claimed_seed) == token.commitment)
    }

    // read surface for the bridge, CLI and tests

    pub fn clients(&self) -> Vec<&ClientRecord> {
        self.registry.all()
    }

    pub fn client_record(&self, address: &Address) -> Option<&ClientRecord> {
        self.registry.get(address)
    }

    pub fn round_records(&self, round: u64) -> Vec<&RoundRecord> {
        self.records.round_records(round)
    }

    pub fn election_result(&self, round: u64) -> Option<&ElectionResult> {
        self.election.get(round)
    }

    pub fn balances(&self) -> &BTreeMap<Address, u64> {
        self.incentive.balances()
    }

    pub fn total_minted(&self) -> u64 {
        self.incentive.total_minted()
    }

    pub fn token(&self, token_id: u64) -> Option<&ModelToken> {
        self.model.token(token_id)
    }

    pub fn tokens(&self) -> Vec<&ModelToken> {
        self.model.all_tokens()
    }

    pub fn watermark_spec(&self, model_id: &str) -> Option<&WatermarkSpec> {
        self.model.spec(model_id)
    }
}

/// Lexicographic order; this order is baked into the state root.
pub const CONTRACT_NAMES: [&str; 6] = [
    "client_registry",
    "election",
    "incentive",
    "model_registry",
    "system",
    "training_records",
];

/// Election randomness: SHA-256(prev block hash ‖ round).
pub fn election_seed(prev_hash: &[u8; 32], round: u64) -> [u8; 32] {
    let mut w = Writer::new();
    w.put_digest(prev_hash);
    w.put_u64(round);
    sha256(w.as_slice())
}

/// Map the seed digest to an index in `weights`, sampling proportionally
/// by rejection on 64-bit draws. `weights` must have a positive sum.
pub fn weighted_draw(seed_digest: &[u8; 32], weights: &[u64]) -> usize {
    let sum: u128 = weights.iter().map(|&w| w as u128).sum();
    assert!(sum > 0, "weighted_draw needs a positive weight sum");
    let limit = ((1u128 << 64) / sum) * sum;
    let mut counter = 0u64;
    let point = loop {
        let mut w = Writer::new();
        w.put_digest(seed_digest);
        w.put_u64(counter);
        let digest = sha256(w.as_slice());
        let draw = u64::from_be_bytes(digest[..8].try_into().unwrap()) as u128;
        if draw < limit {
            break draw % sum;
        }
        counter += 1;
    };
    let mut acc = 0u128;
    for (i, &w) in weights.iter().enumerate() {
        acc += w as u128;
        if point < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Exact proportional split: floor shares first, then the leftover units
/// go to the largest remainders, ties broken by ascending client_id.
/// The returned rewards always sum to `budget`.
pub fn largest_remainder_split(
    budget: u64,
    shares: &[(String, Address, u64)],
) -> BTreeMap<Address, u64> {
    let total: u128 = shares.iter().map(|(_, _, s)| *s as u128).sum();
    let mut rewards: BTreeMap<Address, u64> = BTreeMap::new();
    let mut remainders: Vec<(u128, &String, Address)> = Vec::with_capacity(shares.len());
    let mut assigned = 0u64;
    for (id, addr, size) in shares {
        let exact = budget as u128 * *size as u128;
        let floor = (exact / total) as u64;
        rewards.insert(*addr, floor);
        assigned += floor;
        remainders.push((exact % total, id, *addr));
    }
    // largest remainder first, then ascending client_id
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    let mut leftover = budget - assigned;
    for (_, _, addr) in remainders {
        if leftover == 0 {
            break;
        }
        *rewards.get_mut(&addr).unwrap() += 1;
        leftover -= 1;
    }
    rewards
}

/// Deterministic watermark bits for a model: bit i comes from bit (i mod
/// 256) of SHA-256(model_id ‖ prev block hash ‖ "bits" ‖ chunk), chunk
/// numbering from 1. +1 where the digest bit is set, −1 otherwise.
pub fn watermark_bits(model_id: &str, prev_hash: &[u8; 32], k: u64) -> Vec<i8> {
    let mut bits = Vec::with_capacity(k as usize);
    for i in 0..k {
        let chunk = i / 256 + 1;
        let mut w = Writer::new();
        w.put_str(model_id);
        w.put_digest(prev_hash);
        w.put_bytes(b"bits");
        w.put_u64(chunk);
        let digest = sha256(w.as_slice());
        let j = (i % 256) as usize;
        let bit = (digest[j / 8] >> (7 - j % 8)) & 1;
        bits.push(if bit == 1 { 1 } else { -1 });
    }
    bits
}

/// Deterministic key seed: first 8 bytes (big-endian) of
/// SHA-256(model_id ‖ prev block hash ‖ "seed").
pub fn watermark_seed(model_id: &str, prev_hash: &[u8; 32]) -> u64 {
    let mut w = Writer::new();
    w.put_str(model_id);
    w.put_digest(prev_hash);
    w.put_bytes(b"seed");
    let digest = sha256(w.as_slice());
    u64::from_be_bytes(digest[..8].try_into().unwrap())
}

/// Commitment binding watermark bits and key seed: SHA-256 over one byte
/// per bit (0x01 for +1, 0x00 for −1) followed by the big-endian seed.
pub fn commitment_digest(bits: &[i8], key_seed: u64) -> [u8; 32] {
    let mut buf = Vec::with_capacity(bits.len() + 8);
    for &b in bits {
        buf.push(if b > 0 { 0x01 } else { 0x00 });
    }
    buf.extend_from_slice(&key_seed.to_be_bytes());
    sha256(&buf)
}

#[cfg(test)]
mod tests;
