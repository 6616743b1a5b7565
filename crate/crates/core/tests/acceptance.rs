//! The acceptance suite: one test per criterion, each printing its pass/fail
//! line (visible with `cargo test -- --nocapture`). The same runners back the
//! CLI's `verify-all` command.

use cbt_krawtchouk::acceptance::{
    criterion_1, criterion_10, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
    criterion_7, criterion_8, criterion_9, AcceptanceOptions, CriterionResult,
};

fn assert_criterion(result: CriterionResult) {
    println!("{}", result.line());
    assert!(result.pass, "{}", result.line());
}

#[test]
fn criterion_01_one_variable_closed_forms() {
    assert_criterion(criterion_1(&AcceptanceOptions::default()));
}

#[test]
fn criterion_02_orthogonality_n2() {
    assert_criterion(criterion_2(&AcceptanceOptions::default()));
}

#[test]
fn criterion_03_orthogonality_n3() {
    assert_criterion(criterion_3(&AcceptanceOptions::default()));
}

#[test]
fn criterion_04_eigen_suite() {
    assert_criterion(criterion_4(&AcceptanceOptions::default()));
}

#[test]
fn criterion_05_detailed_balance() {
    assert_criterion(criterion_5(&AcceptanceOptions::default()));
}

#[test]
fn criterion_06_parameter_web() {
    assert_criterion(criterion_6(&AcceptanceOptions::default()));
}

#[test]
fn criterion_07_transformations() {
    assert_criterion(criterion_7(&AcceptanceOptions::default()));
}

#[test]
fn criterion_08_generating_function() {
    assert_criterion(criterion_8(&AcceptanceOptions::default()));
}

#[test]
fn criterion_09_norm_adjudication() {
    assert_criterion(criterion_9(&AcceptanceOptions::default()));
}

#[test]
fn criterion_10_simulation() {
    assert_criterion(criterion_10(&AcceptanceOptions::default()));
}
