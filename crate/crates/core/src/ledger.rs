//! Deterministic in-process blockchain: accounts, a serialized transaction
//! queue, hash-chained blocks, and bit-exact state replay.
//!
//! There is no mining and no consensus. A single sealer drains the pending
//! FIFO into one block at a time; every contract transition is a pure
//! function of (state, tx, block context), so replaying the block log from
//! genesis reproduces every state root exactly.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::io::{Read as _, Write as _};
use std::path::Path;

use thiserror::Error;

use crate::codec::{sha256, DecodeError, Reader, Writer};
use crate::contracts::{self, ContractSet};

pub const GENESIS_ACCOUNTS: usize = 10;

const LOG_MAGIC: &[u8; 4] = b"FCL1";

/// 32-byte account identifier, derived from (chain seed, account index).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address(pub [u8; 32]);

impl Address {
    pub fn derive(chain_seed: u64, index: u32) -> Self {
        let mut w = Writer::new();
        w.put_bytes(b"account");
        w.put_u64(chain_seed);
        w.put_u32(index);
        Address(sha256(w.as_slice()))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({}..)", &self.to_hex()[..8])
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transaction {
    pub nonce: u64,
    pub sender: Address,
    pub contract: String,
    pub method: String,
    pub payload: Vec<u8>,
    /// FL round the tx belongs to, 0 for setup.
    pub round_tag: u64,
}

impl Transaction {
    pub fn encode(&self, w: &mut Writer) {
        w.put_u64(self.nonce);
        w.put_digest(&self.sender.0);
        w.put_str(&self.contract);
        w.put_str(&self.method);
        w.put_bytes(&self.payload);
        w.put_u64(self.round_tag);
    }

    pub fn decode(r: &mut Reader) -> Result<Self, DecodeError> {
        Ok(Transaction {
            nonce: r.get_u64()?,
            sender: Address(r.get_digest()?),
            contract: r.get_str()?,
            method: r.get_str()?,
            payload: r.get_bytes()?,
            round_tag: r.get_u64()?,
        })
    }
}

/// A transaction as included in a block. Rejected transactions stay in the
/// block with a failure flag and the error code, but leave state untouched.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SealedTx {
    pub tx: Transaction,
    pub failed: bool,
    pub error: String,
}

impl SealedTx {
    fn encode(&self, w: &mut Writer) {
        self.tx.encode(w);
        w.put_u8(self.failed as u8);
        w.put_str(&self.error);
    }

    fn decode(r: &mut Reader) -> Result<Self, DecodeError> {
        Ok(SealedTx {
            tx: Transaction::decode(r)?,
            failed: r.get_u8()? != 0,
            error: r.get_str()?,
        })
    }

    pub fn digest(&self) -> [u8; 32] {
        let mut w = Writer::new();
        self.encode(&mut w);
        sha256(w.as_slice())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub index: u64,
    pub prev_hash: [u8; 32],
    pub txs: Vec<SealedTx>,
    pub state_root: [u8; 32],
    pub block_hash: [u8; 32],
}

impl Block {
    /// Hash over (index, prev_hash, tx digests, state_root).
    pub fn compute_hash(
        index: u64,
        prev_hash: &[u8; 32],
        txs: &[SealedTx],
        state_root: &[u8; 32],
    ) -> [u8; 32] {
        let mut w = Writer::new();
        w.put_u64(index);
        w.put_digest(prev_hash);
        w.put_u32(txs.len() as u32);
        for tx in txs {
            w.put_digest(&tx.digest());
        }
        w.put_digest(state_root);
        sha256(w.as_slice())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u64(self.index);
        w.put_digest(&self.prev_hash);
        w.put_u32(self.txs.len() as u32);
        for tx in &self.txs {
            tx.encode(&mut w);
        }
        w.put_digest(&self.state_root);
        w.put_digest(&self.block_hash);
        w.into_bytes()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let index = r.get_u64()?;
        let prev_hash = r.get_digest()?;
        let n = r.get_u32()? as usize;
        let mut txs = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            txs.push(SealedTx::decode(&mut r)?);
        }
        let state_root = r.get_digest()?;
        let block_hash = r.get_digest()?;
        r.finish()?;
        Ok(Block { index, prev_hash, txs, state_root, block_hash })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LedgerError {
    #[error("unknown sender")]
    UnknownSender,
    #[error("bad nonce: expected {expected}, got {got}")]
    BadNonce { expected: u64, got: u64 },
    #[error("payload schema violation: {0}")]
    SchemaViolation(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("broken hash chain at height {0}")]
    BrokenHashChain(u64),
    #[error("state root mismatch at height {0}")]
    StateRootMismatch(u64),
    #[error("block log io: {0}")]
    LogIo(String),
    #[error("account count {0} below minimum of {1}")]
    TooFewAccounts(usize, usize),
}

/// Full chain state. Single-writer: `submit_transaction` and `seal_block`
/// must be externally serialized; the bridge owns that serialization.
pub struct LedgerState {
    pub chain_seed: u64,
    pub accounts: Vec<Address>,
    pub contracts: ContractSet,
    pending: VecDeque<Transaction>,
    pub chain: Vec<Block>,
    next_nonce: BTreeMap<Address, u64>,
}

impl LedgerState {
    /// Start a chain with the default ten genesis accounts. accounts[0] is
    /// the designated deployer/server account.
    pub fn init_chain(chain_seed: u64) -> Self {
        Self::init_chain_with(chain_seed, GENESIS_ACCOUNTS).unwrap()
    }

    /// Start a chain with `n_accounts >= 10` genesis accounts.
    pub fn init_chain_with(chain_seed: u64, n_accounts: usize) -> Result<Self, LedgerError> {
        if n_accounts < GENESIS_ACCOUNTS {
            return Err(LedgerError::TooFewAccounts(n_accounts, GENESIS_ACCOUNTS));
        }
        let accounts: Vec<Address> = (0..n_accounts as u32)
            .map(|i| Address::derive(chain_seed, i))
            .collect();
        let contracts = ContractSet::new();
        let state_root = contracts.state_root();
        let genesis_hash = Block::compute_hash(0, &[0u8; 32], &[], &state_root);
        let genesis = Block {
            index: 0,
            prev_hash: [0u8; 32],
            txs: Vec::new(),
            state_root,
            block_hash: genesis_hash,
        };
        Ok(LedgerState {
            chain_seed,
            accounts,
            contracts,
            pending: VecDeque::new(),
            chain: vec![genesis],
            next_nonce: BTreeMap::new(),
        })
    }

    pub fn server_account(&self) -> Address {
        self.accounts[0]
    }

    pub fn height(&self) -> u64 {
        self.chain.len() as u64
    }

    pub fn last_block(&self) -> &Block {
        self.chain.last().unwrap()
    }

    pub fn next_nonce(&self, sender: &Address) -> u64 {
        self.next_nonce.get(sender).copied().unwrap_or(0)
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Queue a transaction. Rejects without mutating state unless the
    /// sender exists, the nonce is the sender's next expected one, and the
    /// payload decodes under the named method's schema.
    pub fn submit_transaction(&mut self, tx: Transaction) -> Result<usize, LedgerError> {
        if !self.accounts.contains(&tx.sender) {
            return Err(LedgerError::UnknownSender);
        }
        let expected = self.next_nonce(&tx.sender);
        if tx.nonce != expected {
            return Err(LedgerError::BadNonce { expected, got: tx.nonce });
        }
        contracts::validate_payload(&tx.contract, &tx.method, &tx.payload)
            .map_err(|e| LedgerError::SchemaViolation(e.to_string()))?;
        self.next_nonce.insert(tx.sender, expected + 1);
        self.pending.push_back(tx);
        Ok(self.pending.len() - 1)
    }

    /// Drain the pending FIFO into a new block, dispatching each tx to its
    /// contract state machine. Per-tx failures are recorded, not thrown.
    pub fn seal_block(&mut self) -> &Block {
        let index = self.chain.len() as u64;
        let prev_hash = self.last_block().block_hash;
        let ctx = contracts::BlockContext {
            height: index,
            prev_hash,
            server: self.server_account(),
        };
        let mut sealed = Vec::with_capacity(self.pending.len());
        while let Some(tx) = self.pending.pop_front() {
            let result = self.contracts.dispatch(&tx, &ctx);
            let (failed, error) = match result {
                Ok(()) => (false, String::new()),
                Err(e) => (true, e.code().to_string()),
            };
            sealed.push(SealedTx { tx, failed, error });
        }
        let state_root = self.contracts.state_root();
        let block_hash = Block::compute_hash(index, &prev_hash, &sealed, &state_root);
        self.chain.push(Block {
            index,
            prev_hash,
            txs: sealed,
            state_root,
            block_hash,
        });
        self.last_block()
    }

    pub fn get_block(&self, index: u64) -> Result<&Block, LedgerError> {
        self.chain
            .get(index as usize)
            .ok_or_else(|| LedgerError::NotFound(format!("block {index}")))
    }

    /// Canonical state bytes for one deployed contract.
    pub fn get_state(&self, contract: &str) -> Result<Vec<u8>, LedgerError> {
        self.contracts
            .contract_state_bytes(contract)
            .ok_or_else(|| LedgerError::NotFound(format!("contract {contract}")))
    }

    /// Rebuild state from a block list, verifying the hash chain and every
    /// stored state root. Fails loudly at the first mismatched height.
    pub fn replay(
        blocks: &[Block],
        chain_seed: u64,
        n_accounts: usize,
    ) -> Result<Self, LedgerError> {
        let mut state = Self::init_chain_with(chain_seed, n_accounts)?;
        let Some(genesis) = blocks.first() else {
            return Err(LedgerError::BrokenHashChain(0));
        };
        if genesis.prev_hash != [0u8; 32] || genesis.index != 0 {
            return Err(LedgerError::BrokenHashChain(0));
        }
        if genesis.block_hash != state.chain[0].block_hash {
            return Err(LedgerError::BrokenHashChain(0));
        }
        if genesis.state_root != state.chain[0].state_root {
            return Err(LedgerError::StateRootMismatch(0));
        }
        for block in &blocks[1..] {
            let h = block.index;
            if block.index != state.height() {
                return Err(LedgerError::BrokenHashChain(h));
            }
            if block.prev_hash != state.last_block().block_hash {
                return Err(LedgerError::BrokenHashChain(h));
            }
            let recomputed =
                Block::compute_hash(block.index, &block.prev_hash, &block.txs, &block.state_root);
            if recomputed != block.block_hash {
                return Err(LedgerError::BrokenHashChain(h));
            }
            for sealed in &block.txs {
                state
                    .submit_transaction(sealed.tx.clone())
                    .map_err(|_| LedgerError::StateRootMismatch(h))?;
            }
            let resealed = state.seal_block();
            if resealed.state_root != block.state_root {
                // pop so callers never observe the divergent block
                let _ = resealed;
                state.chain.pop();
                return Err(LedgerError::StateRootMismatch(h));
            }
            if resealed.block_hash != block.block_hash {
                state.chain.pop();
                return Err(LedgerError::BrokenHashChain(h));
            }
        }
        Ok(state)
    }

    /// Append-only block log: magic, chain seed, account count, then one
    /// length-prefixed canonical block encoding per block.
    pub fn write_log(&self, path: &Path) -> Result<(), LedgerError> {
        let mut buf = Vec::new();
        buf.extend_from_slice(LOG_MAGIC);
        buf.extend_from_slice(&self.chain_seed.to_be_bytes());
        buf.extend_from_slice(&(self.accounts.len() as u32).to_be_bytes());
        for block in &self.chain {
            let enc = block.encode();
            buf.extend_from_slice(&(enc.len() as u32).to_be_bytes());
            buf.extend_from_slice(&enc);
        }
        let mut f = std::fs::File::create(path).map_err(|e| LedgerError::LogIo(e.to_string()))?;
        f.write_all(&buf).map_err(|e| LedgerError::LogIo(e.to_string()))?;
        Ok(())
    }

    pub fn read_log(path: &Path) -> Result<BlockLog, LedgerError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| LedgerError::LogIo(e.to_string()))?;
        BlockLog::decode(&bytes)
    }

    /// Replay a block log file read back with [`LedgerState::read_log`].
    pub fn replay_log(log: &BlockLog) -> Result<Self, LedgerError> {
        Self::replay(&log.blocks, log.chain_seed, log.n_accounts)
    }
}

/// Decoded block-log file.
pub struct BlockLog {
    pub chain_seed: u64,
    pub n_accounts: usize,
    pub blocks: Vec<Block>,
}

impl BlockLog {
    pub fn decode(bytes: &[u8]) -> Result<Self, LedgerError> {
        if bytes.len() < 16 || &bytes[..4] != LOG_MAGIC {
            return Err(LedgerError::BrokenHashChain(0));
        }
        let chain_seed = u64::from_be_bytes(bytes[4..12].try_into().unwrap());
        let n_accounts = u32::from_be_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let mut blocks = Vec::new();
        let mut pos = 16usize;
        while pos < bytes.len() {
            let height = blocks.len() as u64;
            if pos + 4 > bytes.len() {
                return Err(LedgerError::BrokenHashChain(height));
            }
            let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
            pos += 4;
            if pos + len > bytes.len() {
                return Err(LedgerError::BrokenHashChain(height));
            }
            let block = Block::decode(&bytes[pos..pos + len])
                .map_err(|_| LedgerError::BrokenHashChain(height))?;
            blocks.push(block);
            pos += len;
        }
        Ok(BlockLog { chain_seed, n_accounts, blocks })
    }
}
