use std::ffi::{CStr, CString};
use std::ptr;

use audit_repair_ffi::*;

fn last_error() -> String {
    let p = ar_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn generate(seed: u64, n: usize) -> *mut ArDataset {
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { ar_dataset_generate(seed, n, &mut d) }, ArStatus::Ok);
    d
}

#[test]
fn replica_counts_and_repair_through_the_abi() {
    let d = generate(1, 0);
    let n = unsafe { ar_dataset_len(d) };
    let mut c = ArGroupCounts::default();
    assert_eq!(unsafe { ar_dataset_counts(d, &mut c) }, ArStatus::Ok);
    assert_eq!((c.young_pos, c.young_pos + c.young_neg), (2505, 13401));
    assert_eq!((c.older_pos, c.older_pos + c.older_neg), (3587, 25532));

    let tau = vec![0.0; n];
    let (mut out, mut iters) = (ptr::null_mut(), 0usize);
    assert_eq!(unsafe { ar_repair_ite(d, tau.as_ptr(), n, &mut out, &mut iters) }, ArStatus::Ok);
    assert_eq!(iters, 408);
    assert_eq!(unsafe { ar_dataset_len(out) }, n);

    let (mut ebr, mut removed) = (ptr::null_mut(), 0usize);
    assert_eq!(unsafe { ar_equalize_base_rate(d, 0, &mut ebr, &mut removed) }, ArStatus::Ok);
    assert_eq!(removed, 6343);
    assert_eq!(unsafe { ar_dataset_len(ebr) }, n - 6343);

    unsafe {
        ar_dataset_free(ebr);
        ar_dataset_free(out);
        ar_dataset_free(d);
    }
}

#[test]
fn metrics_match_hand_computation() {
    let scores = [0.9, 0.8, 0.7, 0.1];
    let labels = [1u8, 0, 1, 0];
    let mut auc = 0.0;
    assert_eq!(unsafe { ar_auc(scores.as_ptr(), labels.as_ptr(), 4, &mut auc) }, ArStatus::Ok);
    assert_eq!(auc, 0.75);

    let mut pred = [9u8; 4];
    assert_eq!(unsafe { ar_threshold(scores.as_ptr(), 4, 0.5, pred.as_mut_ptr()) }, ArStatus::Ok);
    assert_eq!(pred, [1, 1, 0, 0]);

    // young: negatives at 0.8 (flagged) and 0.1; older: negative at 0.6
    let scores = [0.9, 0.8, 0.1, 0.6, 0.2];
    let labels = [1u8, 0, 0, 0, 1];
    let groups = [1u8, 1, 1, 0, 0];
    let mut r = ArEvalReport::default();
    assert_eq!(
        unsafe { ar_evaluate(scores.as_ptr(), labels.as_ptr(), groups.as_ptr(), 5, 0.4, &mut r) },
        ArStatus::Ok
    );
    assert_eq!((r.fpr_young, r.fpr_old, r.fprd), (0.5, 0.0, 0.5));
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut auc = 0.0;
    let labels = [1u8, 1];
    assert_eq!(unsafe { ar_auc([0.1, 0.2].as_ptr(), labels.as_ptr(), 2, &mut auc) }, ArStatus::Metrics);
    assert!(last_error().contains("both classes"));

    assert_eq!(unsafe { ar_auc(ptr::null(), labels.as_ptr(), 2, &mut auc) }, ArStatus::NullPointer);

    let mut d = ptr::null_mut();
    let missing = CString::new("/nonexistent/audit.csv").unwrap();
    let status = unsafe { ar_dataset_load_csv(missing.as_ptr(), &mut d) };
    assert!(matches!(status, ArStatus::Io | ArStatus::Data), "{status:?}");
    assert!(d.is_null());

    let data = generate(2, 400);
    let tau = [0.0; 3];
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { ar_repair_ite(data, tau.as_ptr(), 3, &mut out, ptr::null_mut()) }, ArStatus::Repair);
    assert!(out.is_null());
    unsafe { ar_dataset_free(data) };

    // freeing NULL is allowed
    unsafe {
        ar_dataset_free(ptr::null_mut());
        ar_forest_free(ptr::null_mut());
    }
}

#[test]
fn forest_fit_and_predict() {
    // y = 1 iff x0 > 0.5
    let n = 200;
    let x: Vec<f64> = (0..n).flat_map(|i| [i as f64 / n as f64, (i % 7) as f64]).collect();
    let y: Vec<u8> = (0..n).map(|i| u8::from(i as f64 / n as f64 > 0.5)).collect();
    let mut f = ptr::null_mut();
    assert_eq!(unsafe { ar_forest_fit(x.as_ptr(), y.as_ptr(), n, 2, 10, 3, &mut f) }, ArStatus::Ok);
    let mut p = vec![0.0; n];
    assert_eq!(unsafe { ar_forest_predict(f, x.as_ptr(), n, 2, p.as_mut_ptr()) }, ArStatus::Ok);
    let correct = p.iter().zip(&y).filter(|(p, &y)| (**p > 0.5) == (y == 1)).count();
    assert_eq!(correct, n);
    assert_eq!(unsafe { ar_forest_predict(f, x.as_ptr(), n / 2, 4, p.as_mut_ptr()) }, ArStatus::Forest);
    unsafe { ar_forest_free(f) };
}

#[test]
fn ite_and_csv_round_trip() {
    let d = generate(4, 3000);
    let n = unsafe { ar_dataset_len(d) };
    let mut tau = vec![f64::NAN; n];
    assert_eq!(unsafe { ar_ite(d, 10, 0, tau.as_mut_ptr(), n) }, ArStatus::Ok);
    assert!(tau.iter().all(|t| (-1.0..=1.0).contains(t)));

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("d.csv").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { ar_dataset_write_csv(d, path.as_ptr()) }, ArStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { ar_dataset_load_csv(path.as_ptr(), &mut back) }, ArStatus::Ok);
    let (mut a, mut b) = (vec![0u8; n], vec![0u8; n]);
    let (mut ga, mut gb) = (vec![0u8; n], vec![0u8; n]);
    unsafe {
        assert_eq!(ar_dataset_columns(d, a.as_mut_ptr(), ga.as_mut_ptr(), n), ArStatus::Ok);
        assert_eq!(ar_dataset_columns(back, b.as_mut_ptr(), gb.as_mut_ptr(), n), ArStatus::Ok);
        ar_dataset_free(back);
        ar_dataset_free(d);
    }
    assert_eq!((a, ga), (b, gb));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/audit_repair.h")).unwrap();
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .split("extern \"C\" fn ")
        .skip(1)
        .map(|s| s.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15);
    for f in exports {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/audit_repair.h");
    let status = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header])
        .status();
    match status {
        Ok(s) => assert!(s.success(), "cc rejected the header"),
        Err(e) => eprintln!("skipping: no C compiler ({e})"),
    }
}
