//! Contract-side records and their canonical serialization. Everything
//! lives in BTree maps so iteration order (and therefore the state root)
//! is deterministic.

use std::collections::{BTreeMap, BTreeSet};

use crate::codec::Writer;
use crate::ledger::Address;

use super::{ArgValue, ContractError};

/// Deployment-time parameters shared by all contracts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContractConfig {
    /// Watermark bit count issued per model.
    pub watermark_k: u64,
    /// Length of the watermarked parameter slice.
    pub watermark_d: u64,
}

impl ContractConfig {
    pub fn from_args(args: &[ArgValue]) -> Result<Self, ContractError> {
        Ok(ContractConfig { watermark_k: args[0].as_u64(), watermark_d: args[1].as_u64() })
    }

    pub fn encode(&self, w: &mut Writer) {
        w.put_u64(self.watermark_k);
        w.put_u64(self.watermark_d);
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClientRecord {
    pub address: Address,
    pub client_id: String,
    pub registered_at: u64,
}

#[derive(Default)]
pub struct ClientRegistry {
    by_address: BTreeMap<Address, ClientRecord>,
    by_id: BTreeMap<String, Address>,
}

impl ClientRegistry {
    pub fn register(
        &mut self,
        address: Address,
        client_id: &str,
        height: u64,
    ) -> Result<&ClientRecord, ContractError> {
        if self.by_address.contains_key(&address) {
            return Err(ContractError::DuplicateAddress);
        }
        if self.by_id.contains_key(client_id) {
            return Err(ContractError::DuplicateClientId);
        }
        self.by_id.insert(client_id.to_string(), address);
        let record =
            ClientRecord { address, client_id: client_id.to_string(), registered_at: height };
        Ok(self.by_address.entry(address).or_insert(record))
    }

    pub fn is_registered(&self, address: &Address) -> bool {
        self.by_address.contains_key(address)
    }

    pub fn is_empty(&self) -> bool {
        self.by_address.is_empty()
    }

    pub fn get(&self, address: &Address) -> Option<&ClientRecord> {
        self.by_address.get(address)
    }

    pub fn client_id(&self, address: &Address) -> Option<&str> {
        self.by_address.get(address).map(|r| r.client_id.as_str())
    }

    pub fn all(&self) -> Vec<&ClientRecord> {
        self.by_address.values().collect()
    }

    pub fn addresses_by_client_id(&self) -> Vec<Address> {
        self.by_id.values().copied().collect()
    }

    pub fn encode(&self, w: &mut Writer) {
        w.put_u32(self.by_address.len() as u32);
        for record in self.by_address.values() {
            w.put_digest(&record.address.0);
            w.put_str(&record.client_id);
            w.put_u64(record.registered_at);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundRecord {
    pub round: u64,
    pub client: Address,
    /// Fixed-point micro-units in [0, 10⁶].
    pub accuracy: u64,
    /// Non-negative fixed-point micro-units.
    pub loss: u64,
    pub dataset_size: u64,
}

#[derive(Default)]
pub struct TrainingRecords {
    by_round: BTreeMap<u64, BTreeMap<Address, RoundRecord>>,
}

impl TrainingRecords {
    pub fn insert(&mut self, record: RoundRecord) -> Result<(), ContractError> {
        let slot = self.by_round.entry(record.round).or_default();
        if slot.contains_key(&record.client) {
            return Err(ContractError::DuplicateRecord);
        }
        slot.insert(record.client, record);
        Ok(())
    }

    pub fn round_records(&self, round: u64) -> Vec<&RoundRecord> {
        self.by_round.get(&round).map(|m| m.values().collect()).unwrap_or_default()
    }

    pub fn dataset_size(&self, round: u64, client: &Address) -> Option<u64> {
        self.by_round.get(&round).and_then(|m| m.get(client)).map(|r| r.dataset_size)
    }

    pub fn encode(&self, w: &mut Writer) {
        w.put_u32(self.by_round.len() as u32);
        for (round, records) in &self.by_round {
            w.put_u64(*round);
            w.put_u32(records.len() as u32);
            for r in records.values() {
                w.put_digest(&r.client.0);
                w.put_u64(r.accuracy);
                w.put_u64(r.loss);
                w.put_u64(r.dataset_size);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ElectionResult {
    pub round: u64,
    pub aggregator: Address,
    /// Digest the draw was taken from; the winner is recomputable from
    /// this plus the registry and round−1 records.
    pub seed_digest: [u8; 32],
}

#[derive(Default)]
pub struct ElectionBook {
    results: BTreeMap<u64, ElectionResult>,
}

impl ElectionBook {
    pub fn insert(&mut self, result: ElectionResult) -> &ElectionResult {
        self.results.entry(result.round).or_insert(result)
    }

    pub fn get(&self, round: u64) -> Option<&ElectionResult> {
        self.results.get(&round)
    }

    pub fn encode(&self, w: &mut Writer) {
        w.put_u32(self.results.len() as u32);
        for r in self.results.values() {
            w.put_u64(r.round);
            w.put_digest(&r.aggregator.0);
            w.put_digest(&r.seed_digest);
        }
    }
}

/// Token balances. Invariant: Σ balances == total_minted at all times.
#[derive(Default)]
pub struct IncentiveState {
    balances: BTreeMap<Address, u64>,
    total_minted: u64,
    settled: BTreeSet<u64>,
}

impl IncentiveState {
    pub fn is_settled(&self, round: u64) -> bool {
        self.settled.contains(&round)
    }

    pub fn credit_all(&mut self, round: u64, rewards: &BTreeMap<Address, u64>, budget: u64) {
        for (addr, reward) in rewards {
            *self.balances.entry(*addr).or_insert(0) += reward;
        }
        self.total_minted += budget;
        self.settled.insert(round);
    }

    pub fn balances(&self) -> &BTreeMap<Address, u64> {
        &self.balances
    }

    pub fn total_minted(&self) -> u64 {
        self.total_minted
    }

    pub fn encode(&self, w: &mut Writer) {
        w.put_u32(self.balances.len() as u32);
        for (addr, balance) in &self.balances {
            w.put_digest(&addr.0);
            w.put_u64(*balance);
        }
        w.put_u64(self.total_minted);
        w.put_u32(self.settled.len() as u32);
        for round in &self.settled {
            w.put_u64(*round);
        }
    }
}

/// On-chain watermark assignment for one model. Bits and seed are stored
/// in cleartext contract state; only the commitment goes into the token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WatermarkSpec {
    pub model_id: String,
    pub k: u64,
    /// k values in {+1, −1}.
    pub bits: Vec<i8>,
    pub key_seed: u64,
    pub issued_at: u64,
}

/// NFT-like model ownership token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelToken {
    pub token_id: u64,
    pub owner: Address,
    pub model_id: String,
    /// SHA-256 of (watermark bits, key seed); immutable after mint.
    pub commitment: [u8; 32],
    /// Successive owners after each transfer; length == transfer count.
    pub history: Vec<Address>,
}

#[derive(Default)]
pub struct ModelRegistry {
    specs: BTreeMap<String, WatermarkSpec>,
    tokens: BTreeMap<u64, ModelToken>,
    by_model: BTreeMap<String, u64>,
    next_token: u64,
}

impl ModelRegistry {
    pub fn spec(&self, model_id: &str) -> Option<&WatermarkSpec> {
        self.specs.get(model_id)
    }

    pub fn insert_spec(&mut self, spec: WatermarkSpec) -> &WatermarkSpec {
        self.specs.entry(spec.model_id.clone()).or_insert(spec)
    }

    pub fn mint(
        &mut self,
        owner: Address,
        model_id: &str,
        commitment: [u8; 32],
    ) -> Result<&ModelToken, ContractError> {
        if self.by_model.contains_key(model_id) {
            return Err(ContractError::AlreadyTokenized);
        }
        self.next_token += 1;
        let token_id = self.next_token;
        self.by_model.insert(model_id.to_string(), token_id);
        let token = ModelToken {
            token_id,
            owner,
            model_id: model_id.to_string(),
            commitment,
            history: Vec::new(),
        };
        Ok(self.tokens.entry(token_id).or_insert(token))
    }

    pub fn transfer(&mut self, token_id: u64, to: Address) -> &ModelToken {
        let token = self.tokens.get_mut(&token_id).unwrap();
        token.owner = to;
        token.history.push(to);
        token
    }

    pub fn token(&self, token_id: u64) -> Option<&ModelToken> {
        self.tokens.get(&token_id)
    }

    pub fn all_tokens(&self) -> Vec<&ModelToken> {
        self.tokens.values().collect()
    }

    pub fn encode(&self, w: &mut Writer) {
        w.put_u32(self.specs.len() as u32);
        for spec in self.specs.values() {
            w.put_str(&spec.model_id);
            w.put_u64(spec.k);
            let bit_bytes: Vec<u8> =
                spec.bits.iter().map(|&b| if b > 0 { 0x01 } else { 0x00 }).collect();
            w.put_bytes(&bit_bytes);
            w.put_u64(spec.key_seed);
            w.put_u64(spec.issued_at);
        }
        w.put_u32(self.tokens.len() as u32);
        for token in self.tokens.values() {
            w.put_u64(token.token_id);
            w.put_digest(&token.owner.0);
            w.put_str(&token.model_id);
            w.put_digest(&token.commitment);
            w.put_u32(token.history.len() as u32);
            for addr in &token.history {
                w.put_digest(&addr.0);
            }
        }
        w.put_u64(self.next_token);
    }
}
