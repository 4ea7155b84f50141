//! Acceptance suite: one test per criterion, each printing its pass/fail line.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use ring_analyzer::validation::{self, CheckOutcome};

fn assert_check(outcome: CheckOutcome) {
    let status = if outcome.passed { "PASS" } else { "FAIL" };
    println!("[{status}] criterion {} - {}", outcome.id, outcome.details);
    assert!(
        outcome.passed,
        "criterion {} failed: {}",
        outcome.id, outcome.details
    );
}

#[test]
fn criterion_01_limit_mean() {
    assert_check(validation::check_limit_mean());
}

#[test]
fn criterion_02_limit_second_moment_variance() {
    assert_check(validation::check_limit_second_moment());
}

#[test]
fn criterion_03_correction_coefficients() {
    assert_check(validation::check_corrections());
}

#[test]
fn criterion_04_limit_distribution_values() {
    assert_check(validation::check_limit_distribution_values());
}

#[test]
fn criterion_05_tail_law() {
    assert_check(validation::check_tail_law());
}

#[test]
fn criterion_06_optimal_parameter() {
    assert_check(validation::check_t_star());
}

#[test]
fn criterion_07_segment_2_3() {
    assert_check(validation::check_segment_2_3());
}

#[test]
fn criterion_08_convexity() {
    assert_check(validation::check_convexity());
}

#[test]
fn criterion_09_simulation_oracle() {
    assert_check(validation::check_simulation_oracle());
}

#[test]
fn criterion_10_small_case_exactness() {
    assert_check(validation::check_small_cases());
}

#[test]
fn criterion_11_moment_identities() {
    assert_check(validation::check_moment_identities());
}

#[test]
fn criterion_12_bound_suite() {
    assert_check(validation::check_bound_suite());
}
