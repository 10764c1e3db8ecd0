//! Federated learning on a deterministic, replayable in-process ledger.
//!
//! Every training round is executed against an append-only hash-chained
//! block log: client registration, aggregator election, metric recording,
//! incentive payout and model-watermark tokenization are all contract
//! state transitions that can be replayed bit-exactly from genesis.

pub mod bridge;
pub mod cli;
pub mod codec;
pub mod contracts;
pub mod fl;
pub mod ledger;
pub mod watermark;

pub use ledger::{Address, Block, LedgerState, Transaction};
