//! Acceptance gate: one test per criterion, each printing its result line.

use jscc_latency::experiments::{run_criterion, AcceptanceOptions};

fn gate(id: u8) {
    let result = run_criterion(id, &AcceptanceOptions::default());
    println!("{}", result.line());
    assert!(result.passed, "{}", result.line());
}

#[test]
fn criterion_01_e1_accuracy() {
    gate(1);
}

#[test]
fn criterion_02_inverse_pairs() {
    gate(2);
}

#[test]
fn criterion_03_kkt_vs_oracle() {
    gate(3);
}

#[test]
fn criterion_04_tightness_and_budget() {
    gate(4);
}

#[test]
fn criterion_05_feasibility_monotone() {
    gate(5);
}

#[test]
fn criterion_06_toy_optimality() {
    gate(6);
}

#[test]
fn criterion_07_heuristic_quality() {
    gate(7);
}

#[test]
fn criterion_08_figure_trends() {
    gate(8);
}

#[test]
fn criterion_09_convexity() {
    gate(9);
}

#[test]
fn criterion_10_monte_carlo() {
    gate(10);
}

#[test]
fn criterion_11_fit_recovery() {
    gate(11);
}

#[test]
fn criterion_12_determinism() {
    gate(12);
}
