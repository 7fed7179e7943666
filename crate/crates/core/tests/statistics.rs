mod common;

use proptest::prelude::*;
use trace_core::dynamics::DynamicsConfig;
use trace_core::statistics::{self, StatNote, StatisticId, DEFAULT_WINDOW};
use trace_core::synth::SplitMix64;
use trace_core::{DynamicsBundle, EmbeddingSequence, TraceError};

fn bundle_from_f1(f1: Vec<f64>) -> DynamicsBundle {
    let n = f1.len();
    let f2 = common::diff(&f1);
    DynamicsBundle {
        n_frames: n + 1,
        f1,
        f2,
        angles: vec![0.5; n.saturating_sub(1)],
        angle_valid: vec![true; n.saturating_sub(1)],
    }
}

fn all(b: &DynamicsBundle, w: usize) -> statistics::StatisticVector {
    statistics::compute("u", StatisticId::ALL, b, w).unwrap()
}

fn get(v: &statistics::StatisticVector, id: &str) -> f64 {
    v.get(id.parse().unwrap()).unwrap()
}

#[test]
fn catalog_is_closed() {
    assert_eq!(StatisticId::ALL.len(), 24);
    for id in StatisticId::ALL {
        assert_eq!(id.as_str().parse::<StatisticId>().unwrap(), *id);
    }
    assert!(matches!(
        "f1_dt6_rms".parse::<StatisticId>(),
        Err(TraceError::UnknownStatistic(_))
    ));
    assert!(statistics::parse_id_list("f1_rms,f1_rms").is_err());
}

#[test]
fn worked_examples() {
    let v = statistics::compute(
        "u",
        &[StatisticId::F1Dt1Rms],
        &bundle_from_f1(vec![0.1, 0.4, 0.2]),
        DEFAULT_WINDOW,
    )
    .unwrap();
    assert!((get(&v, "f1_dt1_rms") - 0.065f64.sqrt()).abs() < 1e-12);

    let v = all(&bundle_from_f1(vec![0.3; 40]), DEFAULT_WINDOW);
    for id in ["f1_rms", "f1_mean", "f1_maxw_rms"] {
        assert!((get(&v, id) - 0.3).abs() < 1e-12, "{id}");
    }
    assert_eq!(get(&v, "f1_std"), 0.0);
    assert_eq!(get(&v, "f1_kurtosis"), 0.0);
    assert!(v
        .notes
        .contains(&StatNote::DegenerateKurtosis(StatisticId::F1Kurtosis)));

    let mut f1 = vec![0.1; 100];
    f1[40..50].fill(1.0);
    let v = statistics::compute("u", &[StatisticId::F1MaxwRms], &bundle_from_f1(f1), 5).unwrap();
    assert_eq!(get(&v, "f1_maxw_rms"), 1.0);
}

#[test]
fn window_wider_than_sequence_falls_back() {
    let ids = [
        StatisticId::F1Rms,
        StatisticId::F1MaxwRms,
        StatisticId::F1MinwRms,
        StatisticId::F1Spreadw,
    ];
    let v = statistics::compute("u", &ids, &bundle_from_f1(vec![0.1, 0.2, 0.3, 0.4]), 25).unwrap();
    let rms = get(&v, "f1_rms");
    assert_eq!(get(&v, "f1_maxw_rms"), rms);
    assert_eq!(get(&v, "f1_minw_rms"), rms);
    assert_eq!(get(&v, "f1_spreadw"), 0.0);
    assert!(v
        .notes
        .contains(&StatNote::WindowFallback { window: 25, len: 4 }));
}

#[test]
fn short_inputs_name_id_and_minimum() {
    let b = bundle_from_f1(vec![0.1, 0.2, 0.3]);
    match statistics::compute("u", &[StatisticId::F1Dt4Rms], &b, 25) {
        Err(TraceError::StatisticTooShort { id, required, .. }) => {
            assert_eq!(id, "f1_dt4_rms");
            assert_eq!(required, StatisticId::F1Dt4Rms.min_frames());
        }
        other => panic!("{other:?}"),
    }
    let mut no_angles = bundle_from_f1(vec![0.1, 0.2, 0.3]);
    no_angles.angle_valid.fill(false);
    assert!(statistics::compute("u", &[StatisticId::AngleMean], &no_angles, 25).is_err());
    assert!(statistics::compute("u", &[StatisticId::F1Rms], &b, 0).is_err());
}

#[test]
fn oracle_on_real_trajectories() {
    let mut rng = SplitMix64::new(99);
    for (t, w) in [
        (3usize, 25usize),
        (4, 2),
        (8, 25),
        (27, 25),
        (26, 25),
        (200, 25),
        (200, 1),
        (700, 60),
    ] {
        let rows = common::gaussian_rows(&mut rng, t, 6);
        let seq = EmbeddingSequence::from_rows("u", 50.0, &rows).unwrap();
        let b = DynamicsBundle::compute(&seq, &DynamicsConfig::default()).unwrap();
        let valid: Vec<f64> = b.valid_angles().collect();
        let oracle = common::naive_stats(&b.f1, &b.f2, &valid, w);
        for id in StatisticId::ALL {
            let got = statistics::compute("u", &[*id], &b, w);
            match oracle.get(id.as_str()) {
                Some(want) => {
                    let got = got.unwrap().get(*id).unwrap();
                    assert!((got - want).abs() <= 1e-9, "{id} T={t}: {got} vs {want}");
                }
                None => assert!(got.is_err(), "{id} T={t} should be too short"),
            }
        }
    }
}

fn f1_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..2.0, 2..400)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn matches_naive_oracle(f1 in f1_strategy(), w in 1usize..50) {
        let b = bundle_from_f1(f1);
        let valid: Vec<f64> = b.valid_angles().collect();
        let oracle = common::naive_stats(&b.f1, &b.f2, &valid, w);
        for id in StatisticId::ALL {
            if let Some(want) = oracle.get(id.as_str()) {
                let got = statistics::compute("u", &[*id], &b, w).unwrap().get(*id).unwrap();
                prop_assert!((got - want).abs() <= 1e-9, "{}: {} vs {}", id, got, want);
            }
        }
    }

    #[test]
    fn order_relations(f1 in prop::collection::vec(0.0f64..2.0, 30..300)) {
        let v = all(&bundle_from_f1(f1), DEFAULT_WINDOW);
        let g = |id: &str| get(&v, id);
        prop_assert_eq!(g("f1_mean_abs"), g("f1_mean"));
        prop_assert!(g("f1_rms") >= g("f1_mean") - 1e-15);
        prop_assert!((g("f1_rms").powi(2) - (g("f1_mean").powi(2) + g("f1_std").powi(2))).abs() <= 1e-9);
        prop_assert!(g("f1_top2_mean") >= g("f1_top5_mean"));
        prop_assert!(g("f1_top5_mean") >= g("f1_mean") - 1e-12);
        prop_assert!(g("f1_p99") >= g("f1_p95"));
        prop_assert!(v.values.values().all(|x| x.is_finite()));
    }

    #[test]
    fn window_extremes_bracket_rms_when_windows_tile(w in 1usize..40, k in 1usize..12, seed in any::<u64>()) {
        // the tiling windows are a subset of the stride-1 windows and their
        // mean squares average to the global one
        let mut rng = SplitMix64::new(seed);
        let f1: Vec<f64> = (0..w * k).map(|_| rng.next_f64() * if rng.next_u64() % 7 == 0 { 2.0 } else { 0.1 }).collect();
        let v = statistics::compute("u", &[StatisticId::F1MinwRms, StatisticId::F1Rms, StatisticId::F1MaxwRms], &bundle_from_f1(f1), w).unwrap();
        prop_assert!(get(&v, "f1_minw_rms") <= get(&v, "f1_rms") + 1e-12);
        prop_assert!(get(&v, "f1_rms") <= get(&v, "f1_maxw_rms") + 1e-12);
    }

    #[test]
    fn order_free_statistics_ignore_permutation(f1 in prop::collection::vec(0.0f64..2.0, 7..200), seed in any::<u64>()) {
        let mut shuffled = f1.clone();
        let mut rng = SplitMix64::new(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.next_below(i as u64 + 1) as usize);
        }
        let a = all(&bundle_from_f1(f1), DEFAULT_WINDOW);
        let b = all(&bundle_from_f1(shuffled), DEFAULT_WINDOW);
        for id in ["f1_mean", "f1_mean_abs", "f1_rms", "f1_std", "f1_kurtosis", "f1_p99", "f1_p95", "f1_top5_mean", "f1_top2_mean"] {
            prop_assert!((get(&a, id) - get(&b, id)).abs() <= 1e-12 * get(&a, id).abs().max(1.0), "{}", id);
        }
    }

    #[test]
    fn spike_raises_maxw(base in 0.01f64..0.1, n in 50usize..300, spike in 0.5f64..2.0) {
        let f1 = vec![base; n];
        let before = get(&all(&bundle_from_f1(f1.clone()), DEFAULT_WINDOW), "f1_maxw_rms");
        let mut spiked = f1;
        spiked.push(spike);
        let after = get(&all(&bundle_from_f1(spiked), DEFAULT_WINDOW), "f1_maxw_rms");
        prop_assert!(after > before);
    }
}

#[test]
fn overlapping_windows_need_not_bracket_rms() {
    // every stride-1 window of width 25 over 30 values holds the whole
    // middle block, so each window is louder than the sequence as a whole
    let mut f1 = vec![0.01; 30];
    f1[5..25].fill(1.0);
    let v = all(&bundle_from_f1(f1), 25);
    assert!(get(&v, "f1_minw_rms") > get(&v, "f1_rms"));

    let mut f1 = vec![0.01; 30];
    f1[..5].fill(1.0);
    f1[25..].fill(1.0);
    let v = all(&bundle_from_f1(f1), 25);
    assert!(get(&v, "f1_maxw_rms") < get(&v, "f1_rms"));
}

#[test]
fn permutation_changes_order_dependent_statistics() {
    let mut rng = SplitMix64::new(5);
    let f1: Vec<f64> = (0..200)
        .map(|t| 0.05 + 0.01 * (t as f64 / 10.0).sin() + 0.02 * rng.next_f64())
        .collect();
    let mut shuffled = f1.clone();
    for i in (1..shuffled.len()).rev() {
        shuffled.swap(i, rng.next_below(i as u64 + 1) as usize);
    }
    let a = all(&bundle_from_f1(f1), DEFAULT_WINDOW);
    let b = all(&bundle_from_f1(shuffled), DEFAULT_WINDOW);
    for id in [
        "f1_maxw_rms",
        "f1_minw_rms",
        "f1_dt1_rms",
        "f1_dt5_rms",
        "f2_rms",
    ] {
        assert_ne!(get(&a, id), get(&b, id), "{id}");
    }
}
