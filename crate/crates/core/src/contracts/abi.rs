//! Method catalog and payload schemas. The manifest is the single schema
//! source shared by the ledger's pre-inclusion validation, the bridge's
//! payload builders and the CLI (which writes it out as JSON).

use serde::Serialize;

use crate::codec::{Reader, Writer};
use crate::ledger::Address;

use super::ContractError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgType {
    /// Big-endian u64.
    U64,
    /// Length-prefixed UTF-8 string.
    Str,
    /// 32-byte account address.
    Addr,
    /// 32-byte digest.
    Bytes32,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ArgValue {
    U64(u64),
    Str(String),
    Addr(Address),
    Bytes32([u8; 32]),
}

impl ArgValue {
    pub fn as_u64(&self) -> u64 {
        match self {
            ArgValue::U64(v) => *v,
            other => panic!("expected u64 arg, got {other:?}"),
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            ArgValue::Str(s) => s,
            other => panic!("expected string arg, got {other:?}"),
        }
    }

    pub fn as_addr(&self) -> Address {
        match self {
            ArgValue::Addr(a) => *a,
            other => panic!("expected address arg, got {other:?}"),
        }
    }

    pub fn as_bytes32(&self) -> [u8; 32] {
        match self {
            ArgValue::Bytes32(b) => *b,
            other => panic!("expected 32-byte arg, got {other:?}"),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MethodSpec {
    pub contract: &'static str,
    pub method: &'static str,
    pub args: Vec<(&'static str, ArgType)>,
    pub errors: Vec<&'static str>,
}

/// The full method catalog.
pub fn manifest() -> Vec<MethodSpec> {
    vec![
        MethodSpec {
            contract: "system",
            method: "deploy",
            args: vec![("watermark_k", ArgType::U64), ("watermark_d", ArgType::U64)],
            errors: vec!["NotServerAccount", "AlreadyDeployed", "BadDimensions"],
        },
        MethodSpec {
            contract: "client_registry",
            method: "register",
            args: vec![("client_id", ArgType::Str)],
            errors: vec!["DuplicateAddress", "DuplicateClientId"],
        },
        MethodSpec {
            contract: "training_records",
            method: "record",
            args: vec![
                ("round", ArgType::U64),
                ("accuracy", ArgType::U64),
                ("loss", ArgType::U64),
                ("dataset_size", ArgType::U64),
            ],
            errors: vec!["UnregisteredClient", "DuplicateRecord", "InvalidMetric"],
        },
        MethodSpec {
            contract: "election",
            method: "elect",
            args: vec![("round", ArgType::U64)],
            errors: vec!["NoRegisteredClients", "AlreadyElected"],
        },
        MethodSpec {
            contract: "incentive",
            method: "settle",
            args: vec![("round", ArgType::U64), ("budget", ArgType::U64)],
            errors: vec!["RoundNotRecorded", "AlreadySettled", "InvalidMetric"],
        },
        MethodSpec {
            contract: "model_registry",
            method: "issue_watermark",
            args: vec![("model_id", ArgType::Str)],
            errors: vec!["DuplicateModelId"],
        },
        MethodSpec {
            contract: "model_registry",
            method: "mint",
            args: vec![("model_id", ArgType::Str), ("commitment", ArgType::Bytes32)],
            errors: vec![
                "NoWatermarkIssued",
                "CommitmentMismatch",
                "AlreadyTokenized",
                "UnregisteredOwner",
            ],
        },
        MethodSpec {
            contract: "model_registry",
            method: "transfer",
            args: vec![("token_id", ArgType::U64), ("to", ArgType::Addr)],
            errors: vec!["NotOwner", "UnknownToken", "UnregisteredRecipient"],
        },
    ]
}

pub fn manifest_json() -> String {
    serde_json::to_string_pretty(&manifest()).unwrap()
}

fn method_spec(contract: &str, method: &str) -> Result<MethodSpec, ContractError> {
    let catalog = manifest();
    if !catalog.iter().any(|m| m.contract == contract) {
        return Err(ContractError::UnknownContract);
    }
    catalog
        .into_iter()
        .find(|m| m.contract == contract && m.method == method)
        .ok_or(ContractError::UnknownMethod)
}

/// Decode a payload under the named method's schema.
pub fn decode_payload(
    contract: &str,
    method: &str,
    payload: &[u8],
) -> Result<Vec<ArgValue>, ContractError> {
    let spec = method_spec(contract, method)?;
    let mut r = Reader::new(payload);
    let mut args = Vec::with_capacity(spec.args.len());
    for (name, ty) in &spec.args {
        let value = match ty {
            ArgType::U64 => r.get_u64().map(ArgValue::U64),
            ArgType::Str => r.get_str().map(ArgValue::Str),
            ArgType::Addr => r.get_digest().map(|d| ArgValue::Addr(Address(d))),
            ArgType::Bytes32 => r.get_digest().map(ArgValue::Bytes32),
        }
        .map_err(|e| ContractError::BadPayload(format!("arg {name}: {e}")))?;
        args.push(value);
    }
    r.finish().map_err(|e| ContractError::BadPayload(e.to_string()))?;
    Ok(args)
}

/// Schema check used before a transaction is accepted into the queue.
pub fn validate_payload(contract: &str, method: &str, payload: &[u8]) -> Result<(), ContractError> {
    decode_payload(contract, method, payload).map(|_| ())
}

/// Canonical payload encoding for the bridge and tests.
pub struct PayloadBuilder {
    w: Writer,
}

impl PayloadBuilder {
    pub fn new() -> Self {
        Self { w: Writer::new() }
    }

    pub fn u64(mut self, v: u64) -> Self {
        self.w.put_u64(v);
        self
    }

    pub fn str(mut self, s: &str) -> Self {
        self.w.put_str(s);
        self
    }

    pub fn addr(mut self, a: Address) -> Self {
        self.w.put_digest(&a.0);
        self
    }

    pub fn bytes32(mut self, b: &[u8; 32]) -> Self {
        self.w.put_digest(b);
        self
    }

    pub fn build(self) -> Vec<u8> {
        self.w.into_bytes()
    }
}

impl Default for PayloadBuilder {
    fn default() -> Self {
        Self::new()
    }
}
