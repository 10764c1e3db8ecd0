use std::collections::BTreeMap;

use super::*;
use crate::codec::sha256;
use crate::ledger::Transaction;

fn ctx(height: u64) -> BlockContext {
    BlockContext { height, prev_hash: [7u8; 32], server: Address::derive(1, 0) }
}

fn addr(i: u32) -> Address {
    Address::derive(1, i)
}

fn tx(sender: Address, contract: &str, method: &str, payload: Vec<u8>) -> Transaction {
    Transaction {
        nonce: 0,
        sender,
        contract: contract.to_string(),
        method: method.to_string(),
        payload,
        round_tag: 0,
    }
}

fn deployed() -> ContractSet {
    let mut set = ContractSet::new();
    let payload = PayloadBuilder::new().u64(32).u64(512).build();
    set.dispatch(&tx(addr(0), "system", "deploy", payload), &ctx(1)).unwrap();
    set
}

fn register(set: &mut ContractSet, account: u32, id: &str) {
    let payload = PayloadBuilder::new().str(id).build();
    set.dispatch(&tx(addr(account), "client_registry", "register", payload), &ctx(2)).unwrap();
}

fn record(set: &mut ContractSet, account: u32, round: u64, size: u64) {
    let payload = PayloadBuilder::new().u64(round).u64(500_000).u64(693_147).u64(size).build();
    set.dispatch(&tx(addr(account), "training_records", "record", payload), &ctx(3)).unwrap();
}

#[test]
fn deploy_rules() {
    let mut set = ContractSet::new();
    let payload = PayloadBuilder::new().u64(32).u64(512).build();
    let err = set.dispatch(&tx(addr(1), "system", "deploy", payload.clone()), &ctx(1));
    assert_eq!(err, Err(ContractError::NotServerAccount));
    set.dispatch(&tx(addr(0), "system", "deploy", payload.clone()), &ctx(1)).unwrap();
    let err = set.dispatch(&tx(addr(0), "system", "deploy", payload), &ctx(1));
    assert_eq!(err, Err(ContractError::AlreadyDeployed));

    let mut set = ContractSet::new();
    let zero_k = PayloadBuilder::new().u64(0).u64(512).build();
    let err = set.dispatch(&tx(addr(0), "system", "deploy", zero_k), &ctx(1));
    assert_eq!(err, Err(ContractError::BadDimensions));
}

#[test]
fn calls_before_deploy_rejected() {
    let mut set = ContractSet::new();
    let payload = PayloadBuilder::new().str("c1").build();
    let err = set.dispatch(&tx(addr(1), "client_registry", "register", payload), &ctx(1));
    assert_eq!(err, Err(ContractError::NotDeployed));
}

#[test]
fn registration_uniqueness() {
    let mut set = deployed();
    register(&mut set, 1, "c1");
    let payload = PayloadBuilder::new().str("c2").build();
    let err = set.dispatch(&tx(addr(1), "client_registry", "register", payload), &ctx(2));
    assert_eq!(err, Err(ContractError::DuplicateAddress));
    let payload = PayloadBuilder::new().str("c1").build();
    let err = set.dispatch(&tx(addr(2), "client_registry", "register", payload), &ctx(2));
    assert_eq!(err, Err(ContractError::DuplicateClientId));
    assert_eq!(set.clients().len(), 1);
    assert_eq!(set.client_record(&addr(1)).unwrap().registered_at, 2);
}

#[test]
fn ten_registrations() {
    let mut set = deployed();
    for i in 1..=10 {
        register(&mut set, i, &format!("c{i:02}"));
    }
    assert_eq!(set.clients().len(), 10);
}

#[test]
fn record_training_rules() {
    let mut set = deployed();
    register(&mut set, 1, "c1");
    record(&mut set, 1, 1, 120);
    let records = set.round_records(1);
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].accuracy, 500_000);
    assert_eq!(records[0].loss, 693_147);
    assert_eq!(records[0].dataset_size, 120);

    let dup = PayloadBuilder::new().u64(1).u64(1).u64(1).u64(1).build();
    let err = set.dispatch(&tx(addr(1), "training_records", "record", dup), &ctx(3));
    assert_eq!(err, Err(ContractError::DuplicateRecord));

    let unreg = PayloadBuilder::new().u64(1).u64(1).u64(1).u64(1).build();
    let err = set.dispatch(&tx(addr(2), "training_records", "record", unreg), &ctx(3));
    assert_eq!(err, Err(ContractError::UnregisteredClient));

    let bad_acc = PayloadBuilder::new().u64(2).u64(2_000_000).u64(1).u64(1).build();
    let err = set.dispatch(&tx(addr(1), "training_records", "record", bad_acc), &ctx(3));
    assert_eq!(err, Err(ContractError::InvalidMetric));
}

#[test]
fn election_single_candidate_and_determinism() {
    let mut set = deployed();
    register(&mut set, 1, "c1");
    let elect = PayloadBuilder::new().u64(1).build();
    set.dispatch(&tx(addr(0), "election", "elect", elect.clone()), &ctx(3)).unwrap();
    let result = set.election_result(1).unwrap().clone();
    assert_eq!(result.aggregator, addr(1));

    let err = set.dispatch(&tx(addr(0), "election", "elect", elect), &ctx(3));
    assert_eq!(err, Err(ContractError::AlreadyElected));

    // same chain state, same draw
    let mut set2 = deployed();
    register(&mut set2, 1, "c1");
    let elect = PayloadBuilder::new().u64(1).build();
    set2.dispatch(&tx(addr(0), "election", "elect", elect), &ctx(3)).unwrap();
    assert_eq!(set2.election_result(1).unwrap(), &result);
}

#[test]
fn election_requires_clients() {
    let mut set = deployed();
    let elect = PayloadBuilder::new().u64(1).build();
    let err = set.dispatch(&tx(addr(0), "election", "elect", elect), &ctx(3));
    assert_eq!(err, Err(ContractError::NoRegisteredClients));
}

#[test]
fn weighted_draw_monte_carlo_90_10() {
    // weights {90, 10}: heavy index frequency 0.9 ± 0.02 over 10k draws
    let weights = [90u64, 10u64];
    let mut heavy = 0usize;
    let n = 10_000;
    for i in 0..n {
        let seed = sha256(&(i as u64).to_be_bytes());
        if weighted_draw(&seed, &weights) == 0 {
            heavy += 1;
        }
    }
    let freq = heavy as f64 / n as f64;
    assert!((freq - 0.9).abs() < 0.02, "heavy client frequency {freq}");
}

#[test]
fn incentive_exact_proportional_split() {
    let shares = vec![
        ("c1".to_string(), addr(1), 50),
        ("c2".to_string(), addr(2), 30),
        ("c3".to_string(), addr(3), 20),
    ];
    let rewards = largest_remainder_split(100, &shares);
    assert_eq!(rewards[&addr(1)], 50);
    assert_eq!(rewards[&addr(2)], 30);
    assert_eq!(rewards[&addr(3)], 20);
}

#[test]
fn incentive_tie_break_by_client_id() {
    // budget 10, sizes {1,1,1}: {4, 3, 3} with the tie going to the
    // lowest client_id
    let shares = vec![
        ("c1".to_string(), addr(1), 1),
        ("c2".to_string(), addr(2), 1),
        ("c3".to_string(), addr(3), 1),
    ];
    let rewards = largest_remainder_split(10, &shares);
    assert_eq!(rewards[&addr(1)], 4);
    assert_eq!(rewards[&addr(2)], 3);
    assert_eq!(rewards[&addr(3)], 3);
}

#[test]
fn incentive_sole_participant_and_settlement_guards() {
    let mut set = deployed();
    register(&mut set, 1, "c1");
    record(&mut set, 1, 1, 77);
    let settle = PayloadBuilder::new().u64(1).u64(10).build();
    set.dispatch(&tx(addr(0), "incentive", "settle", settle.clone()), &ctx(4)).unwrap();
    assert_eq!(set.balances()[&addr(1)], 10);
    assert_eq!(set.total_minted(), 10);

    let err = set.dispatch(&tx(addr(0), "incentive", "settle", settle), &ctx(4));
    assert_eq!(err, Err(ContractError::AlreadySettled));

    let empty_round = PayloadBuilder::new().u64(9).u64(10).build();
    let err = set.dispatch(&tx(addr(0), "incentive", "settle", empty_round), &ctx(4));
    assert_eq!(err, Err(ContractError::RoundNotRecorded));
}

#[test]
fn incentive_conservation_under_random_settlements() {
    let mut expected_total = 0u64;
    let mut set = deployed();
    for i in 1..=8 {
        register(&mut set, i, &format!("c{i:02}"));
    }
    for round in 1..=50u64 {
        // pseudo-random but deterministic sizes/budget from a hash
        let h = sha256(&round.to_be_bytes());
        let budget = 1 + u64::from(h[0]) * 17;
        for i in 1..=8u32 {
            let size = 1 + u64::from(h[i as usize]);
            let payload =
                PayloadBuilder::new().u64(round).u64(0).u64(0).u64(size).build();
            set.dispatch(&tx(addr(i), "training_records", "record", payload), &ctx(3)).unwrap();
        }
        let settle = PayloadBuilder::new().u64(round).u64(budget).build();
        set.dispatch(&tx(addr(0), "incentive", "settle", settle), &ctx(4)).unwrap();
        expected_total += budget;
        let total: u64 = set.balances().values().sum();
        assert_eq!(total, set.total_minted());
        assert_eq!(total, expected_total);
    }
}

#[test]
fn watermark_issue_determinism_and_duplicates() {
    let mut set = deployed();
    let issue = PayloadBuilder::new().str("m1").build();
    set.dispatch(&tx(addr(0), "model_registry", "issue_watermark", issue.clone()), &ctx(5))
        .unwrap();
    let spec = set.watermark_spec("m1").unwrap().clone();
    assert_eq!(spec.bits.len(), 32);
    assert!(spec.bits.iter().all(|&b| b == 1 || b == -1));

    let err = set.dispatch(&tx(addr(0), "model_registry", "issue_watermark", issue), &ctx(5));
    assert_eq!(err, Err(ContractError::DuplicateModelId));

    // identical chain state gives identical bits and seed
    let mut set2 = deployed();
    let issue = PayloadBuilder::new().str("m1").build();
    set2.dispatch(&tx(addr(0), "model_registry", "issue_watermark", issue), &ctx(5)).unwrap();
    assert_eq!(set2.watermark_spec("m1").unwrap(), &spec);
}

#[test]
fn watermark_bits_are_balanced() {
    // 256 model ids at k=32: mean fraction of +1 bits 0.5 ± 0.05
    let prev = [9u8; 32];
    let mut plus = 0usize;
    let mut total = 0usize;
    for i in 0..256 {
        let bits = watermark_bits(&format!("model-{i}"), &prev, 32);
        plus += bits.iter().filter(|&&b| b == 1).count();
        total += bits.len();
    }
    let frac = plus as f64 / total as f64;
    assert!((frac - 0.5).abs() < 0.05, "fraction of +1 bits {frac}");
}

#[test]
fn mint_and_verify_roundtrip() {
    let mut set = deployed();
    register(&mut set, 1, "c1");
    let issue = PayloadBuilder::new().str("m1").build();
    set.dispatch(&tx(addr(0), "model_registry", "issue_watermark", issue), &ctx(5)).unwrap();
    let spec = set.watermark_spec("m1").unwrap().clone();
    let commitment = commitment_digest(&spec.bits, spec.key_seed);

    let mint = PayloadBuilder::new().str("m1").bytes32(&commitment).build();
    set.dispatch(&tx(addr(1), "model_registry", "mint", mint), &ctx(6)).unwrap();
    let token = set.token(1).unwrap();
    assert_eq!(token.token_id, 1);
    assert_eq!(token.owner, addr(1));

    assert_eq!(set.verify_ownership(1, &spec.bits, spec.key_seed), Ok(true));
    let mut flipped = spec.bits.clone();
    flipped[0] = -flipped[0];
    assert_eq!(set.verify_ownership(1, &flipped, spec.key_seed), Ok(false));
    assert_eq!(set.verify_ownership(1, &spec.bits, spec.key_seed ^ 1), Ok(false));
    assert_eq!(
        set.verify_ownership(2, &spec.bits, spec.key_seed),
        Err(ContractError::UnknownToken)
    );
}

#[test]
fn mint_guards() {
    let mut set = deployed();
    register(&mut set, 1, "c1");
    let no_wm = PayloadBuilder::new().str("mX").bytes32(&[0u8; 32]).build();
    let err = set.dispatch(&tx(addr(1), "model_registry", "mint", no_wm), &ctx(6));
    assert_eq!(err, Err(ContractError::NoWatermarkIssued));

    let issue = PayloadBuilder::new().str("m1").build();
    set.dispatch(&tx(addr(0), "model_registry", "issue_watermark", issue), &ctx(5)).unwrap();
    let spec = set.watermark_spec("m1").unwrap().clone();
    let mut commitment = commitment_digest(&spec.bits, spec.key_seed);
    commitment[0] ^= 1;
    let bad = PayloadBuilder::new().str("m1").bytes32(&commitment).build();
    let err = set.dispatch(&tx(addr(1), "model_registry", "mint", bad), &ctx(6));
    assert_eq!(err, Err(ContractError::CommitmentMismatch));

    commitment[0] ^= 1;
    let unreg = PayloadBuilder::new().str("m1").bytes32(&commitment).build();
    let err = set.dispatch(&tx(addr(2), "model_registry", "mint", unreg), &ctx(6));
    assert_eq!(err, Err(ContractError::UnregisteredOwner));
}

#[test]
fn transfer_rules() {
    let mut set = deployed();
    register(&mut set, 1, "c1");
    register(&mut set, 2, "c2");
    let issue = PayloadBuilder::new().str("m1").build();
    set.dispatch(&tx(addr(0), "model_registry", "issue_watermark", issue), &ctx(5)).unwrap();
    let spec = set.watermark_spec("m1").unwrap().clone();
    let commitment = commitment_digest(&spec.bits, spec.key_seed);
    let mint = PayloadBuilder::new().str("m1").bytes32(&commitment).build();
    set.dispatch(&tx(addr(1), "model_registry", "mint", mint), &ctx(6)).unwrap();

    let transfer = PayloadBuilder::new().u64(1).addr(addr(2)).build();
    let err = set.dispatch(&tx(addr(3), "model_registry", "transfer", transfer.clone()), &ctx(7));
    assert_eq!(err, Err(ContractError::NotOwner));
    set.dispatch(&tx(addr(1), "model_registry", "transfer", transfer), &ctx(7)).unwrap();
    assert_eq!(set.token(1).unwrap().owner, addr(2));

    let back = PayloadBuilder::new().u64(1).addr(addr(1)).build();
    set.dispatch(&tx(addr(2), "model_registry", "transfer", back), &ctx(7)).unwrap();
    let token = set.token(1).unwrap();
    assert_eq!(token.owner, addr(1));
    assert_eq!(token.history.len(), 2);
}

#[test]
fn two_models_get_distinct_token_ids() {
    let mut set = deployed();
    register(&mut set, 1, "c1");
    for model in ["m1", "m2"] {
        let issue = PayloadBuilder::new().str(model).build();
        set.dispatch(&tx(addr(0), "model_registry", "issue_watermark", issue), &ctx(5)).unwrap();
        let spec = set.watermark_spec(model).unwrap().clone();
        let commitment = commitment_digest(&spec.bits, spec.key_seed);
        let mint = PayloadBuilder::new().str(model).bytes32(&commitment).build();
        set.dispatch(&tx(addr(1), "model_registry", "mint", mint), &ctx(6)).unwrap();
    }
    let ids: Vec<u64> = set.tokens().iter().map(|t| t.token_id).collect();
    assert_eq!(ids, vec![1, 2]);
}

#[test]
fn payload_schema_validation() {
    assert!(validate_payload("election", "elect", &PayloadBuilder::new().u64(1).build()).is_ok());
    assert!(validate_payload("election", "elect", &[1, 2, 3]).is_err());
    assert!(matches!(
        validate_payload("nope", "elect", &[]),
        Err(ContractError::UnknownContract)
    ));
    assert!(matches!(
        validate_payload("election", "nope", &[]),
        Err(ContractError::UnknownMethod)
    ));
    // trailing bytes rejected
    let mut payload = PayloadBuilder::new().u64(1).build();
    payload.push(0);
    assert!(validate_payload("election", "elect", &payload).is_err());
}

#[test]
fn manifest_covers_every_dispatchable_method() {
    let catalog = manifest();
    assert_eq!(catalog.len(), 8);
    let json = manifest_json();
    assert!(json.contains("client_registry"));
    assert!(json.contains("issue_watermark"));
}

#[test]
fn state_root_ignores_rejected_mutations() {
    let mut set = deployed();
    register(&mut set, 1, "c1");
    let root = set.state_root();
    let payload = PayloadBuilder::new().str("c2").build();
    let err = set.dispatch(&tx(addr(1), "client_registry", "register", payload), &ctx(2));
    assert!(err.is_err());
    assert_eq!(set.state_root(), root);
}

#[test]
fn election_weight_uses_previous_round_sizes() {
    // with one dominant weight the draw must pick it for almost every
    // seed; check the stored result is recomputable
    let mut set = deployed();
    register(&mut set, 1, "heavy");
    register(&mut set, 2, "light");
    let rec = PayloadBuilder::new().u64(1).u64(0).u64(0).u64(1_000_000).build();
    set.dispatch(&tx(addr(1), "training_records", "record", rec), &ctx(3)).unwrap();
    let rec = PayloadBuilder::new().u64(1).u64(0).u64(0).u64(1).build();
    set.dispatch(&tx(addr(2), "training_records", "record", rec), &ctx(3)).unwrap();

    let elect = PayloadBuilder::new().u64(2).build();
    set.dispatch(&tx(addr(0), "election", "elect", elect), &ctx(4)).unwrap();
    let result = set.election_result(2).unwrap();

    // recompute the draw from on-chain data
    let mut weights: BTreeMap<String, (Address, u64)> = BTreeMap::new();
    for r in set.round_records(1) {
        let id = set.client_record(&r.client).unwrap().client_id.clone();
        weights.insert(id, (r.client, r.dataset_size));
    }
    let candidates: Vec<Address> = weights.values().map(|(a, _)| *a).collect();
    let ws: Vec<u64> = weights.values().map(|(_, w)| *w).collect();
    let winner = candidates[weighted_draw(&result.seed_digest, &ws)];
    assert_eq!(winner, result.aggregator);
}
