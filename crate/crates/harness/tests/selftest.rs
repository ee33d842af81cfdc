use fdirs_harness::selftest::{run_selftest, SelftestOptions};

#[test]
fn clean_build_passes_and_is_reproducible() {
    let a = run_selftest(&SelftestOptions::default());
    assert!(a.all_passed(), "{}", a.table());
    let b = run_selftest(&SelftestOptions::default());
    assert_eq!(a.table(), b.table());
}

#[test]
fn corrupted_gradient_is_caught() {
    let report = run_selftest(&SelftestOptions {
        corrupt_gradient: true,
        ..Default::default()
    });
    assert!(!report.all_passed());
    let failed: Vec<_> = report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    assert_eq!(failed, ["phase gradient vs finite differences"]);
}
