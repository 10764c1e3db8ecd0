//! Acceptance suite: one test per release criterion, each printing a
//! single pass/fail line. Tolerances are part of the contract and must
//! not be loosened.

use std::panic::catch_unwind;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use fedchain_core::bridge::BridgeSession;
use fedchain_core::cli;
use fedchain_core::contracts;
use fedchain_core::fl::config::{default_benchmark_toml, TaskConfig, TrainArgs, WatermarkArgs};
use fedchain_core::fl::data::split_dataset;
use fedchain_core::fl::model::{init_model, ModelKind};
use fedchain_core::fl::task::{run_task, TaskOutput};
use fedchain_core::fl::train::{aggregate, local_train};
use fedchain_core::fl::{Algorithm, Dataset, PartitionStrategy};
use fedchain_core::ledger::{LedgerError, LedgerState};
use fedchain_core::watermark;
use fedchain_core::Address;

fn check(criterion: &str, f: impl FnOnce() + std::panic::UnwindSafe) {
    match catch_unwind(f) {
        Ok(()) => println!("[PASS] {criterion}"),
        Err(e) => {
            println!("[FAIL] {criterion}");
            std::panic::resume_unwind(e);
        }
    }
}

fn default_config() -> TaskConfig {
    TaskConfig::from_toml_str(default_benchmark_toml()).unwrap()
}

fn run_default() -> (TaskConfig, TaskOutput, BridgeSession) {
    let config = default_config();
    let mut session =
        BridgeSession::open(config.global_args.seed, config.session_config()).unwrap();
    let output = run_task(&config, &mut session).unwrap();
    (config, output, session)
}

fn plain_train_args(learning_rate: f64, local_epochs: usize, batch_size: usize) -> TrainArgs {
    TrainArgs {
        learning_rate,
        optimizer: "sgd".to_string(),
        weight_decay: 0.0,
        local_epochs,
        batch_size,
        mu: 0.0,
        watermark: WatermarkArgs::default(),
    }
}

#[test]
fn acceptance_01_end_to_end_determinism() {
    check("end-to-end determinism and replay", || {
        let dir = tempfile::tempdir().unwrap();
        let (_, out_a, session_a) = run_default();
        let (_, out_b, session_b) = run_default();
        assert_eq!(out_a.report.final_summary.state_root, out_b.report.final_summary.state_root);
        assert_eq!(out_a.model.values, out_b.model.values);

        let log_a = dir.path().join("a.log");
        let log_b = dir.path().join("b.log");
        session_a.write_log(&log_a).unwrap();
        session_b.write_log(&log_b).unwrap();
        let bytes_a = std::fs::read(&log_a).unwrap();
        let bytes_b = std::fs::read(&log_b).unwrap();
        assert_eq!(bytes_a, bytes_b, "block logs must be byte-identical");

        let replayed = LedgerState::replay_log(&LedgerState::read_log(&log_a).unwrap()).unwrap();
        assert_eq!(replayed.last_block().state_root, session_a.state_root());
        assert_eq!(replayed.height(), session_a.height());
    });
}

#[test]
fn acceptance_02_fedavg_equals_pooled_step() {
    check("fedavg of one-step clients equals the pooled centralized step", || {
        let data = Dataset::blobs(2, 20, 300, 4.0, 7);
        let global = init_model(ModelKind::Linear, data.n_features, data.n_classes, 7);
        // full-batch single epoch: one exact gradient step per client
        let args = plain_train_args(0.05, 1, data.len());
        // deliberately uneven client sizes
        let splits: [std::ops::Range<usize>; 3] = [0..50, 50..180, 180..300];
        let updates: Vec<_> = splits
            .iter()
            .enumerate()
            .map(|(c, r)| {
                let indices: Vec<usize> = r.clone().collect();
                local_train(&global, &data, &indices, &args, Algorithm::FedAvg, None, c as u64)
                    .unwrap()
            })
            .collect();
        let averaged = aggregate(&updates).unwrap();

        let all: Vec<usize> = (0..data.len()).collect();
        let pooled =
            local_train(&global, &data, &all, &args, Algorithm::FedAvg, None, 99).unwrap();

        for (a, p) in averaged.values.iter().zip(&pooled.params.values) {
            assert!(
                (a - p).abs() <= 1e-9 * (1.0 + p.abs()),
                "fedavg diverges from pooled step: {a} vs {p}"
            );
        }
    });
}

#[test]
fn acceptance_03_watermark_embed_extract_gradient() {
    check("watermark embeds to full detection, resists foreign keys, gradient checks", || {
        let (k, d) = (32usize, 512usize);
        let key = watermark::WatermarkKey::derive(123, k, d).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let slice: Vec<f64> = (0..d).map(|_| rng.random_range(-0.1..0.1)).collect();
        let target: Vec<i8> =
            (0..k).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();

        let (embedded, _) = watermark::embed(&slice, &key, &target, 0.1, 0.01, 1000).unwrap();
        let extracted = watermark::extract(&embedded, &key).unwrap();
        assert_eq!(watermark::detection_rate(&extracted, &target).unwrap(), 1.0);

        // a key the embedder never saw should extract at chance level
        let foreign = watermark::WatermarkKey::derive(456, k, d).unwrap();
        let foreign_bits = watermark::extract(&embedded, &foreign).unwrap();
        let rate = watermark::detection_rate(&foreign_bits, &target).unwrap();
        assert!((0.2..=0.8).contains(&rate), "foreign-key rate {rate} outside [0.2, 0.8]");

        // central finite differences against the analytic hinge gradient
        let margin = 0.5;
        let h = 1e-5;
        let (_, grad) = watermark::regularizer(&slice, &key, &target, margin).unwrap();
        let kink_free = |w: &[f64]| {
            let proj = key.project(w).unwrap();
            proj.iter()
                .zip(&target)
                .all(|(p, &b)| (margin - b as f64 * p).abs() > 1e-3)
        };
        assert!(kink_free(&slice), "test point sits on a hinge kink");
        let mut checked = 0;
        for j in (0..d).step_by(7) {
            let mut plus = slice.clone();
            plus[j] += h;
            let mut minus = slice.clone();
            minus[j] -= h;
            if !kink_free(&plus) || !kink_free(&minus) {
                continue;
            }
            let (lp, _) = watermark::regularizer(&plus, &key, &target, margin).unwrap();
            let (lm, _) = watermark::regularizer(&minus, &key, &target, margin).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            let denom = grad[j].abs().max(fd.abs()).max(1.0);
            assert!(
                (grad[j] - fd).abs() / denom <= 1e-4,
                "coordinate {j}: analytic {} vs fd {fd}",
                grad[j]
            );
            checked += 1;
        }
        assert!(checked >= 50, "too few kink-free coordinates checked: {checked}");
    });
}

#[test]
fn acceptance_04_run_then_verify_owned() {
    check("run artifacts verify as OWNED; a flipped bit breaks ownership", || {
        let dir = tempfile::tempdir().unwrap();
        let config_path = dir.path().join("task.toml");
        let out_dir = dir.path().join("out");
        std::fs::write(&config_path, default_benchmark_toml()).unwrap();
        assert_eq!(cli::cmd_run(&config_path, &out_dir), cli::EXIT_OK);

        let log_path = out_dir.join("blocks.log");
        let model_path = out_dir.join("model.bin");
        let state = LedgerState::replay_log(&LedgerState::read_log(&log_path).unwrap()).unwrap();
        let token = state.contracts.tokens()[0];
        let spec = state.contracts.watermark_spec(&token.model_id).unwrap();

        let code = cli::cmd_verify(&model_path, &log_path, token.token_id, spec.key_seed);
        assert_eq!(code, cli::EXIT_OK, "honest claim must verify as OWNED");

        // wrong seed: NOT-OWNED, exit 3
        let bad =
            cli::cmd_verify(&model_path, &log_path, token.token_id, spec.key_seed.wrapping_add(1));
        assert_eq!(bad, cli::EXIT_NOT_OWNED);

        // flipping a single claimed bit must break the commitment
        let mut flipped = spec.bits.clone();
        flipped[0] = -flipped[0];
        assert!(state
            .contracts
            .verify_ownership(token.token_id, &spec.bits, spec.key_seed)
            .unwrap());
        assert!(!state
            .contracts
            .verify_ownership(token.token_id, &flipped, spec.key_seed)
            .unwrap());
    });
}

#[test]
fn acceptance_05_settlement_conservation() {
    check("100 randomized settlements conserve the budget exactly", || {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for case in 0..100 {
            let n = rng.random_range(1..=20usize);
            let budget = rng.random_range(1..=1_000_000u64);
            let shares: Vec<(String, Address, u64)> = (0..n)
                .map(|i| {
                    let id = format!("client_{i:03}");
                    let addr = Address::derive(case, i as u32 + 1);
                    (id, addr, rng.random_range(1..=10_000u64))
                })
                .collect();
            let rewards = contracts::largest_remainder_split(budget, &shares);
            let paid: u64 = rewards.values().sum();
            assert_eq!(paid, budget, "case {case}: rewards must sum to the budget");

            let total: u128 = shares.iter().map(|(_, _, s)| *s as u128).sum();
            for (_, addr, size) in &shares {
                let exact = budget as f64 * *size as f64 / total as f64;
                let got = rewards[addr] as f64;
                assert!(
                    (got - exact).abs() < 1.0,
                    "case {case}: reward {got} more than one unit from exact share {exact}"
                );
            }
        }
    });
}

#[test]
fn acceptance_06_election_validity_and_fairness() {
    check("election is valid and proportional to weights", || {
        // ten equal clients: each should win roughly a tenth of the draws
        let equal = vec![1u64; 10];
        let mut counts = [0usize; 10];
        for i in 0..1000u64 {
            let hash = fedchain_core::codec::sha256(&i.to_be_bytes());
            let seed = contracts::election_seed(&hash, 1);
            let winner = contracts::weighted_draw(&seed, &equal);
            assert!(winner < 10);
            counts[winner] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            let freq = c as f64 / 1000.0;
            assert!(
                (0.05..=0.15).contains(&freq),
                "client {i} won {freq:.3} of equal-weight draws"
            );
        }

        // 90/10 weights: heavy client should take 0.9 +/- 0.02
        let skewed = vec![90u64, 10];
        let mut heavy = 0usize;
        for i in 0..10_000u64 {
            let hash = fedchain_core::codec::sha256(&(i ^ 0xdead_beef).to_be_bytes());
            let seed = contracts::election_seed(&hash, 2);
            if contracts::weighted_draw(&seed, &skewed) == 0 {
                heavy += 1;
            }
        }
        let freq = heavy as f64 / 10_000.0;
        assert!((freq - 0.9).abs() <= 0.02, "heavy client frequency {freq} outside 0.9 +/- 0.02");
    });
}

#[test]
fn acceptance_07_partition_invariants() {
    check("200 randomized partitions are disjoint, covering and non-empty", || {
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        for case in 0..200u64 {
            let n_clients = rng.random_range(1..=20usize);
            let n_samples = rng.random_range(n_clients..=2000);
            let n_classes = rng.random_range(2..=10usize);
            let labels: Vec<u32> =
                (0..n_samples).map(|_| rng.random_range(0..n_classes as u32)).collect();
            let (strategy, alpha) = if case % 2 == 0 {
                (PartitionStrategy::Iid, 0.0)
            } else {
                (PartitionStrategy::Dirichlet, [0.1, 0.5, 1.0, 10.0][case as usize % 4])
            };
            let partition =
                split_dataset(&labels, n_clients, strategy, alpha, case).unwrap();
            assert_eq!(partition.assignments.len(), n_clients);
            let mut seen = vec![false; n_samples];
            for (client, indices) in partition.assignments.iter().enumerate() {
                assert!(!indices.is_empty(), "case {case}: client {client} is empty");
                for &i in indices {
                    assert!(!seen[i], "case {case}: sample {i} assigned twice");
                    seen[i] = true;
                }
            }
            assert!(seen.iter().all(|&s| s), "case {case}: not covering");
        }

        // huge concentration: dirichlet(1e4) is near-uniform
        let labels: Vec<u32> = (0..10_000).map(|i| (i % 4) as u32).collect();
        let partition =
            split_dataset(&labels, 10, PartitionStrategy::Dirichlet, 1e4, 3).unwrap();
        for (client, indices) in partition.assignments.iter().enumerate() {
            let share = indices.len() as f64 / 10_000.0;
            assert!(
                (share - 0.1).abs() <= 0.05,
                "client {client} share {share} off uniform by more than 5 points"
            );
        }
    });
}

#[test]
fn acceptance_08_fedprox_contraction() {
    check("fedprox pulls toward the global model monotonically in mu", || {
        let data = Dataset::blobs(2, 20, 400, 4.0, 21);
        let global = init_model(ModelKind::Linear, data.n_features, data.n_classes, 21);
        let indices: Vec<usize> = (0..data.len()).collect();

        let dist = |mu: f64| {
            let mut args = plain_train_args(0.1, 5, 32);
            args.mu = mu;
            let update =
                local_train(&global, &data, &indices, &args, Algorithm::FedProx, None, 4).unwrap();
            update
                .params
                .values
                .iter()
                .zip(&global.values)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let distances: Vec<f64> = [0.0, 0.1, 1.0, 10.0].iter().map(|&mu| dist(mu)).collect();
        for pair in distances.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-12,
                "distance grew with mu: {:?}",
                distances
            );
        }
        assert!(distances[0] > distances[3], "mu=10 should contract strictly");

        // mu = 0 fedprox is bit-for-bit fedavg
        let args = plain_train_args(0.1, 5, 32);
        let prox =
            local_train(&global, &data, &indices, &args, Algorithm::FedProx, None, 4).unwrap();
        let avg =
            local_train(&global, &data, &indices, &args, Algorithm::FedAvg, None, 4).unwrap();
        assert_eq!(prox.params.values, avg.params.values);
    });
}

#[test]
fn acceptance_09_training_smoke() {
    check("benchmark run learns: loss falls and final accuracy >= 0.9", || {
        let (_, output, _) = run_default();
        let rounds = &output.report.rounds;
        let first = rounds.first().unwrap();
        let last = rounds.last().unwrap();
        assert!(
            last.mean_loss < first.mean_loss,
            "round {} mean loss {} not below round {} mean loss {}",
            last.round,
            last.mean_loss,
            first.round,
            first.mean_loss
        );
        assert!(
            output.report.final_summary.global_accuracy >= 0.9,
            "final accuracy {} below 0.9",
            output.report.final_summary.global_accuracy
        );
        assert_eq!(output.report.final_summary.detection_rate, 1.0);
    });
}

#[test]
fn acceptance_10_tamper_evidence() {
    check("a flipped byte in the log is detected at or before its block", || {
        let dir = tempfile::tempdir().unwrap();
        let (_, _, session) = run_default();
        let log_path = dir.path().join("blocks.log");
        session.write_log(&log_path).unwrap();

        let clean = std::fs::read(&log_path).unwrap();
        // walk the length prefixes to find the byte range of one interior
        // block, then corrupt a byte in the middle of it
        let target_block = 3u64;
        let mut pos = 16usize; // magic + seed + account count
        let mut block_index = 0u64;
        let tamper_at = loop {
            let len =
                u32::from_be_bytes(clean[pos..pos + 4].try_into().unwrap()) as usize;
            if block_index == target_block {
                break pos + 4 + len / 2;
            }
            pos += 4 + len;
            block_index += 1;
        };
        let mut tampered = clean.clone();
        tampered[tamper_at] ^= 0x01;
        let tampered_path = dir.path().join("tampered.log");
        std::fs::write(&tampered_path, &tampered).unwrap();

        assert_eq!(cli::cmd_ledger(&log_path, cli::LedgerView::Summary), cli::EXIT_OK);
        assert_eq!(
            cli::cmd_ledger(&tampered_path, cli::LedgerView::Summary),
            cli::EXIT_RUNTIME
        );

        let reported = match LedgerState::read_log(&tampered_path)
            .and_then(|log| LedgerState::replay_log(&log))
        {
            Err(LedgerError::BrokenHashChain(h)) | Err(LedgerError::StateRootMismatch(h)) => h,
            other => panic!("tampering not detected: {:?}", other.map(|s| s.height())),
        };
        assert!(
            reported <= target_block,
            "reported height {reported} past the tampered block {target_block}"
        );
    });
}
