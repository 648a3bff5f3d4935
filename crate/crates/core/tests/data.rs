mod common;

use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use audit_repair::data::{
    generate_synthetic, kfold_split, load_csv, write_csv, AgeGroup, DataError, Dataset, FeatureEncoder, SchemaSpec,
    SynthConfig,
};
use common::{counts_dataset, replica_counts};

/// Pearson chi-square p-value for a 2 x k table given as two rows of counts.
fn chi_square_p(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    let n = na + nb;
    let mut stat = 0.0;
    let mut dof = 0;
    for (x, y) in a.iter().zip(b) {
        let col = x + y;
        if col == 0.0 {
            continue;
        }
        dof += 1;
        for (obs, row) in [(x, na), (y, nb)] {
            let e = row * col / n;
            stat += (obs - e).powi(2) / e;
        }
    }
    if dof < 2 {
        return 1.0;
    }
    1.0 - ChiSquared::new((dof - 1) as f64).unwrap().cdf(stat)
}

#[test]
fn covariates_are_independent_of_age() {
    let mut small_p = 0;
    let mut tests = 0;
    for seed in 0..6 {
        let mut cfg = SynthConfig::table2_replica(seed);
        cfg.n_records = 8000;
        let data = generate_synthetic(&cfg).unwrap();
        let enc = FeatureEncoder::fit(&data, false, FeatureEncoder::DEFAULT_MIN_CITY_SHARE).unwrap();
        let x = enc.encode(&data).unwrap();
        // every encoded column is binary or a 3-level wpm, so tabulate by value
        for j in 0..x.n_cols {
            let mut young = [0.0; 3];
            let mut older = [0.0; 3];
            for (i, r) in data.records.iter().enumerate() {
                let level = (x.get(i, j) * 2.0).round() as usize;
                match r.age_group {
                    AgeGroup::Young => young[level] += 1.0,
                    AgeGroup::Older => older[level] += 1.0,
                }
            }
            tests += 1;
            if chi_square_p(&young, &older) <= 0.01 {
                small_p += 1;
            }
        }
    }
    // about 1% of independent tests fall below 0.01 by chance
    assert!((small_p as f64) / (tests as f64) < 0.05, "{small_p} of {tests}");
}

#[test]
fn planted_gap_is_accurate() {
    for seed in 0..10 {
        let cfg = SynthConfig {
            n_records: 40_000,
            base_callback_rate: 0.16,
            discrimination_delta: 0.05,
            seed,
            ..SynthConfig::default()
        };
        let data = generate_synthetic(&cfg).unwrap();
        let gap = data.group_counts().gap();
        assert!((gap - 0.05).abs() <= 0.005, "seed {seed}: {gap}");
        let latent = data.latent_group_counts().unwrap();
        assert!((latent.young_rate() - latent.older_rate()).abs() < 0.01);
    }
}

#[test]
fn replica_folds_split_young_evenly() {
    let data = replica_counts();
    let folds = kfold_split(&data, 5, 11).unwrap();
    for f in 0..5 {
        let young = folds
            .test_indices(f)
            .iter()
            .filter(|&&i| data.records[i].age_group == AgeGroup::Young)
            .count();
        assert!(young == 2680 || young == 2681, "{young}");
    }
}

#[test]
fn fold_preconditions() {
    let data = counts_dataset(25, 25, 25, 25);
    assert_eq!(kfold_split(&data, 5, 0).unwrap().fold_sizes(), vec![20; 5]);
    assert!(matches!(kfold_split(&data, 0, 0), Err(DataError::TooFewRecords { .. })));
    assert!(matches!(kfold_split(&data, 101, 0), Err(DataError::TooFewRecords { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn folds_are_a_stratified_partition(yp in 0usize..30, yn in 0usize..30, op in 0usize..30, on in 0usize..30, k in 2usize..7, seed in any::<u64>()) {
        let data = counts_dataset(yp, yn, op, on);
        prop_assume!(data.len() >= k);
        let folds = kfold_split(&data, k, seed).unwrap();
        let sizes = folds.fold_sizes();
        prop_assert_eq!(sizes.iter().sum::<usize>(), data.len());
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let strata = |r: &audit_repair::data::ApplicantRecord| (r.age_group == AgeGroup::Young, r.callback);
        for want in [(true, true), (true, false), (false, true), (false, false)] {
            let per_fold: Vec<usize> = (0..k)
                .map(|f| folds.test_indices(f).iter().filter(|&&i| strata(&data.records[i]) == want).count())
                .collect();
            prop_assert!(per_fold.iter().max().unwrap() - per_fold.iter().min().unwrap() <= 1);
        }
        let mut seen = vec![0; data.len()];
        for f in 0..k {
            for i in folds.test_indices(f) {
                seen[i] += 1;
            }
            let train = folds.train_indices(f);
            prop_assert_eq!(train.len() + folds.test_indices(f).len(), data.len());
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }
}

#[test]
fn csv_file_round_trip_keeps_every_field() {
    let mut cfg = SynthConfig::table2_replica(4);
    cfg.n_records = 500;
    let data = generate_synthetic(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("audit.csv");
    write_csv(&data, std::fs::File::create(&path).unwrap()).unwrap();
    let back: Dataset = load_csv(&path, &SchemaSpec::default()).unwrap();
    assert_eq!(back.records, data.records);
    let mut again = Vec::new();
    write_csv(&back, &mut again).unwrap();
    assert_eq!(again, std::fs::read(&path).unwrap());
}
