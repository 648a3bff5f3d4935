mod common;

use proptest::prelude::*;

use audit_repair::data::{generate_synthetic, AgeGroup, Dataset, SynthConfig};
use audit_repair::repair::{
    double_discrimination, equalize_base_rate, inject_selection_bias, repair_labels_ite, BiasTarget, FlipDirection,
    RepairError,
};
use common::{counts_dataset, replica_counts};

fn scaled(d: &Dataset) -> i128 {
    let c = d.group_counts();
    c.young_pos as i128 * c.older() as i128 - c.older_pos as i128 * c.young() as i128
}

fn arb_case() -> impl Strategy<Value = (Dataset, Vec<f64>)> {
    (1usize..40, 1usize..40, 1usize..40, 1usize..40).prop_flat_map(|(yp, yn, op, on)| {
        let n = yp + yn + op + on;
        (Just(counts_dataset(yp, yn, op, on)), prop::collection::vec(-1.0f64..1.0, n))
    })
}

proptest! {
    #[test]
    fn repair_conserves_groups_and_callbacks((data, tau) in arb_case()) {
        let before = data.clone();
        match repair_labels_ite(&data, &tau) {
            Ok((out, log)) => {
                prop_assert_eq!(&data, &before);
                let (a, b) = (data.group_counts(), out.group_counts());
                prop_assert_eq!(a.young(), b.young());
                prop_assert_eq!(a.older(), b.older());
                prop_assert_eq!(a.young_pos + a.older_pos, b.young_pos + b.older_pos);
                prop_assert_eq!(log.flips.len(), 2 * log.iterations);
                let c = out.group_counts();
                prop_assert!(scaled(&out).abs() <= (c.young() + c.older()) as i128);
                let mut idx = log.flipped_indices();
                idx.sort_unstable();
                idx.dedup();
                prop_assert_eq!(idx.len(), log.flips.len());
                for f in &log.flips {
                    prop_assert_ne!(data.records[f.index].callback, out.records[f.index].callback);
                }
            }
            // each pair moves the scaled gap by exactly the stopping band, so
            // the pools cannot run dry first
            Err(e) => prop_assert!(false, "unexpected {e}"),
        }
    }

    #[test]
    fn repair_picks_extreme_effects((data, tau) in arb_case()) {
        let Ok((_, log)) = repair_labels_ite(&data, &tau) else { return Ok(()) };
        let flipped: std::collections::HashSet<usize> = log.flipped_indices().into_iter().collect();
        for f in &log.flips {
            let r = &data.records[f.index];
            for (i, other) in data.records.iter().enumerate() {
                if flipped.contains(&i) || other.age_group != r.age_group || other.callback != r.callback {
                    continue;
                }
                match f.direction {
                    FlipDirection::PosToNegYoung | FlipDirection::NegToPosYoung => prop_assert!(f.tau >= tau[i]),
                    FlipDirection::NegToPosOlder | FlipDirection::PosToNegOlder => prop_assert!(f.tau <= tau[i]),
                }
            }
        }
    }

    #[test]
    fn repair_iterations_grow_with_gap(yp in 1usize..60, extra in 0usize..30, yn in 40usize..80, op in 1usize..30, on in 40usize..80) {
        // both datasets favour the young group
        prop_assume!(yp * (op + on) > op * (yp + yn + extra));
        let tau = vec![0.0; yp + extra + yn + op + on];
        let small = repair_labels_ite(&counts_dataset(yp, yn + extra, op, on), &tau).unwrap().1;
        let large = repair_labels_ite(&counts_dataset(yp + extra, yn, op, on), &tau).unwrap().1;
        prop_assert!(large.iterations >= small.iterations);
    }

    #[test]
    fn ebr_is_minimal(yp in 1usize..50, yn in 1usize..200, op in 1usize..50, on in 1usize..400, seed in any::<u64>()) {
        let data = counts_dataset(yp, yn, op, on);
        let r = equalize_base_rate(&data, seed);
        let c = r.data.group_counts();
        for &i in &r.removed {
            prop_assert_eq!(data.records[i].age_group, AgeGroup::Older);
            prop_assert!(!data.records[i].callback);
        }
        if r.warning.is_some() {
            prop_assert!(r.removed.is_empty());
            prop_assert!(data.group_counts().older_rate() > data.group_counts().young_rate());
        } else {
            let m = r.removed.len();
            prop_assert!(c.older_pos * c.young() >= c.young_pos * c.older());
            if m > 0 {
                // one fewer deletion would leave older below young
                prop_assert!(op * (yp + yn) < yp * (op + on - m + 1));
            }
        }
    }

    #[test]
    fn doubling_hits_target_minimally(op in 20usize..80, on in 200usize..400, seed in any::<u64>(), bump in 0.0f64..0.05) {
        let data = counts_dataset(60, 300, op, on);
        let target = data.group_counts().gap() + bump;
        let young_rate = data.group_counts().young_rate();
        if target > young_rate {
            // even deleting every older callback cannot get there
            prop_assert!(matches!(double_discrimination(&data, target, seed), Err(RepairError::InfeasibleTarget(_))));
            return Ok(());
        }
        let r = double_discrimination(&data, target, seed).unwrap();
        prop_assert!(r.data.group_counts().gap() >= target);
        for &i in &r.removed {
            prop_assert_eq!(data.records[i].age_group, AgeGroup::Older);
            prop_assert!(data.records[i].callback);
        }
        let m = r.removed.len();
        if m > 0 {
            let before = counts_dataset(60, 300, op - m + 1, on).group_counts().gap();
            prop_assert!(before < target);
        }
    }

    #[test]
    fn selection_bias_meets_constraints(x in 0.05f64..0.8, seed in any::<u64>()) {
        let data = spanish_mix();
        let target = BiasTarget::disparity(&data, x);
        let r = inject_selection_bias(&data, &target, seed).unwrap();
        let share = |d: &Dataset, g: AgeGroup| {
            let m: Vec<_> = d.records.iter().filter(|r| r.age_group == g).collect();
            m.iter().filter(|r| r.spanish).count() as f64 / m.len() as f64
        };
        let rate = |d: &Dataset, s: bool| {
            let m: Vec<_> = d.records.iter().filter(|r| r.spanish == s).collect();
            m.iter().filter(|r| r.callback).count() as f64 / m.len() as f64
        };
        prop_assert!((share(&r.data, AgeGroup::Young) - target.p_spanish_young).abs() <= 0.01);
        prop_assert!((share(&r.data, AgeGroup::Older) - target.p_spanish_old).abs() <= 0.01);
        for s in [false, true] {
            prop_assert!((rate(&r.data, s) - rate(&data, s)).abs() <= 0.01);
        }
    }
}

/// Small synthetic audit with the replica's rates.
fn spanish_mix() -> Dataset {
    let mut cfg = SynthConfig::table2_replica(3);
    cfg.n_records = 6000;
    generate_synthetic(&cfg).unwrap()
}

#[test]
fn zero_disparity_is_a_no_op() {
    let data = spanish_mix();
    let r = inject_selection_bias(&data, &BiasTarget::disparity(&data, 0.0), 9).unwrap();
    assert!(r.removed.is_empty());
    assert_eq!(r.data.records, data.records);
}

#[test]
fn impossible_disparity_is_reported() {
    let data = spanish_mix();
    let t = BiasTarget {
        p_spanish_young: 1.2,
        p_spanish_old: 0.1,
        preserve_spanish_callback_rate: true,
    };
    assert!(matches!(inject_selection_bias(&data, &t, 0), Err(RepairError::InfeasibleTarget(_))));
}

#[test]
fn older_favoured_repair_mirrors() {
    let data = counts_dataset(5, 45, 30, 70);
    let tau: Vec<f64> = (0..150).map(|i| i as f64 / 150.0).collect();
    let (out, log) = repair_labels_ite(&data, &tau).unwrap();
    assert!(log.iterations > 0);
    assert!(log.flips.iter().all(|f| matches!(f.direction, FlipDirection::PosToNegOlder | FlipDirection::NegToPosYoung)));
    let c = out.group_counts();
    assert!(scaled(&out).abs() <= (c.young() + c.older()) as i128);
}

#[test]
fn balanced_data_needs_no_flips() {
    let data = counts_dataset(10, 90, 20, 180);
    let (out, log) = repair_labels_ite(&data, &vec![0.3; 300]).unwrap();
    assert_eq!(log.iterations, 0);
    assert_eq!(out.records, data.records);
}

#[test]
fn length_mismatch_is_rejected() {
    let data = counts_dataset(2, 2, 2, 2);
    assert_eq!(
        repair_labels_ite(&data, &[0.0; 3]).unwrap_err(),
        RepairError::LengthMismatch { records: 8, scores: 3 }
    );
}

#[test]
fn doubling_below_current_gap_is_infeasible() {
    let data = replica_counts();
    let g = data.group_counts().gap();
    assert!(matches!(double_discrimination(&data, g - 0.01, 0), Err(RepairError::InfeasibleTarget(_))));
    let same = double_discrimination(&data, g, 0).unwrap();
    assert!(same.removed.is_empty());
}
