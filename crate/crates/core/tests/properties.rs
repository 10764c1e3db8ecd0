//! Randomized invariants that complement the hand-valued unit tests.

use proptest::prelude::*;

use fedchain_core::codec::{from_micro, to_micro};
use fedchain_core::contracts;
use fedchain_core::fl::data::split_dataset;
use fedchain_core::fl::PartitionStrategy;
use fedchain_core::watermark;
use fedchain_core::Address;

proptest! {
    #[test]
    // to_micro clamps below zero, so only the non-negative range roundtrips
    fn micro_roundtrip_is_close(x in 0.0f64..1.0e6) {
        let micro = to_micro(x);
        let back = from_micro(micro);
        prop_assert!((back - x).abs() <= 5e-7, "{x} -> {micro} -> {back}");
    }

    #[test]
    fn commitments_agree_across_modules(
        bits in proptest::collection::vec(prop_oneof![Just(1i8), Just(-1i8)], 1..256),
        seed in any::<u64>(),
    ) {
        prop_assert_eq!(
            watermark::commitment(&bits, seed),
            contracts::commitment_digest(&bits, seed)
        );
    }

    #[test]
    fn settlement_conserves_any_budget(
        budget in 0u64..10_000_000,
        sizes in proptest::collection::vec(1u64..100_000, 1..30),
    ) {
        let shares: Vec<(String, Address, u64)> = sizes
            .iter()
            .enumerate()
            .map(|(i, &s)| (format!("client_{i:03}"), Address::derive(1, i as u32), s))
            .collect();
        let rewards = contracts::largest_remainder_split(budget, &shares);
        prop_assert_eq!(rewards.values().sum::<u64>(), budget);
    }

    #[test]
    fn partitions_stay_disjoint_and_covering(
        n_clients in 1usize..12,
        extra in 0usize..500,
        dirichlet in any::<bool>(),
        alpha in 0.05f64..20.0,
        seed in any::<u64>(),
    ) {
        let n_samples = n_clients + extra;
        let labels: Vec<u32> = (0..n_samples).map(|i| (i % 3) as u32).collect();
        let strategy = if dirichlet { PartitionStrategy::Dirichlet } else { PartitionStrategy::Iid };
        let partition = split_dataset(&labels, n_clients, strategy, alpha, seed).unwrap();
        let mut seen = vec![false; n_samples];
        for indices in &partition.assignments {
            prop_assert!(!indices.is_empty());
            for &i in indices {
                prop_assert!(!seen[i]);
                seen[i] = true;
            }
        }
        prop_assert!(seen.into_iter().all(|s| s));
    }
}
