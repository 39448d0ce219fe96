//! Figure outputs, config files and fault injection into the acceptance suite.

use std::path::PathBuf;

use jscc_latency::experiments::{
    load_config, parse_suite, run_acceptance, run_criterion, run_figure, AcceptanceOptions, Figure, FigureJob, Hooks,
};
use jscc_latency::kkt::{solve_p4, P4Error, P4Instance, P4Solution};
use jscc_latency::model::{exp_integral_e1, ModelError};
use jscc_latency::planner::Strategy;

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn small_fig3() -> FigureJob {
    let mut job = FigureJob::new(Figure::Fig3);
    job.sweep = vec![2.0, 3.0, 4.0];
    job.trials = 3;
    job.seed = 42;
    job
}

/// Set `UPDATE_GOLDEN=1` to rewrite the reference files.
fn assert_golden(name: &str, actual: &str) {
    let path = golden(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap();
    assert_eq!(actual, expected, "{} differs", path.display());
}

#[test]
fn fig3_csv_matches_golden() {
    let out = run_figure(&small_fig3()).unwrap();
    assert!(out.passed(), "{:?}", out.checks);
    assert_golden("fig3_small.csv", &out.csv);
}

#[test]
fn fig5_csv_matches_golden() {
    let mut job = FigureJob::new(Figure::Fig5);
    job.sweep = vec![1.0, 2.5, 4.0];
    let out = run_figure(&job).unwrap();
    assert!(out.passed(), "{:?}", out.checks);
    assert_golden("fig5_small.csv", &out.csv);
}

#[test]
fn svg_is_reproducible_and_written() {
    let job = small_fig3();
    let a = run_figure(&job).unwrap();
    let b = run_figure(&job).unwrap();
    assert_eq!(a.svg, b.svg);
    let dir = tempfile::tempdir().unwrap();
    let (csv, svg) = a.write_to(dir.path()).unwrap();
    assert_eq!(std::fs::read_to_string(csv).unwrap(), a.csv);
    assert!(std::fs::read_to_string(svg).unwrap().starts_with("<svg"));
}

#[test]
fn strategies_subset_and_csv_order() {
    let mut job = small_fig3();
    job.strategies = vec![Strategy::Equ, Strategy::Opt];
    let out = run_figure(&job).unwrap();
    let strategies: Vec<&str> = out.csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(strategies, ["EQU", "OPT", "EQU", "OPT", "EQU", "OPT"]);
}

#[test]
fn config_file_drives_a_plan() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("deploy.json");
    std::fs::write(
        &path,
        r#"{"system": {"edge_cpu_percent": "300%", "noise_power_dbm": -80},
            "scenario": {"num_devices": 3, "seed": 5}}"#,
    )
    .unwrap();
    let loaded = load_config(&path).unwrap();
    let devices = loaded.devices().unwrap();
    let report = jscc_latency::planner::solve_optimal(loaded.system(), &devices, &Default::default()).unwrap();
    assert!(report.is_solved());
    assert!(load_config(&dir.path().join("missing.json")).is_err());
}

fn wrong_e1(x: f64) -> Result<f64, ModelError> {
    // Euler-Mascheroni constant off in the fourth digit
    exp_integral_e1(x).map(|v| if x < 1.0 { v + 1e-4 } else { v })
}

fn flipped_mu(instance: &P4Instance<'_>) -> Result<P4Solution, P4Error> {
    solve_p4(instance).map(|s| P4Solution { mu: -s.mu, ..s })
}

#[test]
fn wrong_e1_constant_fails_the_e1_criteria() {
    let opts = AcceptanceOptions { hooks: Hooks { e1: wrong_e1, ..Hooks::default() }, ..Default::default() };
    let r = run_criterion(1, &opts);
    assert!(!r.passed, "{}", r.line());
    assert!(run_criterion(1, &AcceptanceOptions::default()).passed);
}

#[test]
fn flipped_multiplier_fails_the_kkt_criterion() {
    let opts = AcceptanceOptions { hooks: Hooks { p4: flipped_mu, ..Hooks::default() }, ..Default::default() };
    let r = run_criterion(3, &opts);
    assert!(!r.passed, "{}", r.line());
    assert!(run_criterion(3, &AcceptanceOptions::default()).passed);
}

#[test]
fn report_lists_every_selected_criterion() {
    let report = run_acceptance(&parse_suite("e1,kkt,convexity").unwrap(), &AcceptanceOptions::default());
    assert!(report.passed);
    assert_eq!(report.lines().len(), 3);
    let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(json["criteria"][1]["id"], 3);
    assert_eq!(json["criteria"][0]["measurements"][0]["relation"], "<=");
}
