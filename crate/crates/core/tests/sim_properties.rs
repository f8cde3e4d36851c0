use std::collections::HashMap;

use proptest::prelude::*;

use dhp::netsim::{
    check_theta_liveness, run_simulation, DelayModel, PartitionInterval, SimConfig, Simulation,
};

/// Isolating the authority scheduled at round `start` for `k` rounds delays
/// its block, and everything queued behind it, by exactly `k` rounds.
#[test]
fn isolating_the_scheduled_authority_costs_k_rounds() {
    let n = 3u8;
    let theta = 3 + n as u32;
    let start = 10u32;
    for k in 1..=8u32 {
        let scheduled = (start + 1) % n as u32;
        let cfg = SimConfig::new(99, n, 2, 30).with_delay(DelayModel::Partition {
            intervals: vec![PartitionInterval {
                start,
                end: start + k,
                isolated: vec![scheduled],
            }],
        });
        let report = run_simulation(&cfg).unwrap();
        assert!(report.consistent);
        assert_eq!(report.max_inclusion_delay, k + 1, "k = {k}");
        assert_eq!(check_theta_liveness(&report, theta).is_err(), k >= theta, "k = {k}");
    }
}

#[test]
fn isolating_a_member_only_delays_that_member() {
    let cfg = SimConfig::new(4, 3, 2, 30).with_delay(DelayModel::Partition {
        intervals: vec![PartitionInterval { start: 5, end: 15, isolated: vec![4] }],
    });
    let report = run_simulation(&cfg).unwrap();
    let worst_elsewhere = report
        .inclusion
        .iter()
        .filter(|d| d.node != 4)
        .map(|d| d.delay_rounds)
        .max()
        .unwrap();
    assert_eq!(worst_elsewhere, 1);
    assert_eq!(report.max_inclusion_delay, 11);
    assert!(report.consistent);
}

#[test]
fn unbounded_isolation_still_converges_after_heal() {
    let cfg = SimConfig::new(8, 2, 1, 20).with_delay(DelayModel::Partition {
        intervals: vec![PartitionInterval { start: 0, end: 200, isolated: vec![1] }],
    });
    let run = Simulation::new(cfg).unwrap().run().unwrap();
    assert!(run.report.rounds_run >= 200);
    assert!(run.check_consistency());
}

fn delay_model() -> impl Strategy<Value = DelayModel> {
    prop_oneof![
        Just(DelayModel::Zero),
        (0u32..4).prop_map(|max_rounds| DelayModel::UniformBounded { max_rounds }),
        proptest::collection::vec((0u32..20, 1u32..8, proptest::collection::vec(0u32..6, 1..3)), 0..3)
            .prop_map(|ivs| DelayModel::Partition {
                intervals: ivs
                    .into_iter()
                    .map(|(start, len, isolated)| PartitionInterval { start, end: start + len, isolated })
                    .collect(),
            }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_run_is_deterministic_lossless_and_consistent(
        seed: u64,
        hsa in 1u8..5,
        rate in 1u32..3,
        model in delay_model(),
    ) {
        let mut cfg = SimConfig::new(seed, hsa, 2, 20).with_rate(rate).with_delay(model);
        if let DelayModel::Partition { intervals } = &mut cfg.delay_model {
            for iv in intervals {
                iv.isolated.retain(|&n| n < cfg.num_hsa as u32 + 2);
            }
        }
        let run = Simulation::new(cfg.clone()).unwrap().run().unwrap();
        prop_assert_eq!(&run.report, &run_simulation(&cfg).unwrap());
        prop_assert!(run.check_consistency());
        for chain in &run.nodes {
            let mut seen: HashMap<_, usize> = HashMap::new();
            for (_, r) in chain.records() {
                *seen.entry(r.commitment).or_default() += 1;
            }
            prop_assert_eq!(seen.len(), run.issued.len());
            prop_assert!(seen.values().all(|&n| n == 1));
            prop_assert!(run.issued.iter().all(|d| seen.contains_key(&d.commitment)));
        }
    }
}
