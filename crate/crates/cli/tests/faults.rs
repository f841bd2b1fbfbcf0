use std::time::Instant;

use dynregret_cli::verify::{verify_criterion, verify_suite, Fault, Scale};

#[test]
fn small_suite_passes_within_a_minute() {
    let start = Instant::now();
    let report = verify_suite(Scale::Small);
    let elapsed = start.elapsed().as_secs_f64();
    for o in &report.outcomes {
        assert!(o.passed, "{}", o.line());
    }
    assert!(elapsed < 60.0, "small suite took {elapsed:.1}s");
    let csv = report.to_csv();
    assert_eq!(csv.lines().count(), 11);
    assert!(csv.starts_with("criterion,name,passed,checks,failures,seconds,detail\n"));
}

#[test]
fn increasing_rate_fails_precondition() {
    for id in [1, 2, 4, 5] {
        let o = verify_criterion(id, Scale::Small, Some(Fault::EtaIncrease));
        assert!(!o.passed, "{}", o.line());
        assert!(o.detail.contains("precondition violated"), "{}", o.detail);
    }
}

#[test]
fn halved_bound_is_detected() {
    for id in [1, 2, 5] {
        let o = verify_criterion(id, Scale::Small, Some(Fault::HalvedBound));
        assert!(!o.passed, "{}", o.line());
        assert!(o.failures > 0);
        assert!(o.detail.contains("exceeds"), "{}", o.detail);
    }
}

#[test]
fn faults_leave_unrelated_criteria_alone() {
    let o = verify_criterion(3, Scale::Small, Some(Fault::HalvedBound));
    assert!(o.passed, "{}", o.line());
    let o = verify_criterion(6, Scale::Small, Some(Fault::EtaIncrease));
    assert!(o.passed, "{}", o.line());
}
