//! Sweeps behind the three delay figures.
//!
//! Every (sweep point, trial) cell is independent and runs on the rayon
//! pool. Trial `t` always draws its devices from `trial_seed(seed, t)`, so
//! all sweep points of a trial share the same devices.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::scenario::{generate_scenario, trial_seed, ScenarioSpec};
use super::svg::{line_chart, Series};
use crate::model::{DeviceProfile, ModelError, SystemConfig, CORE_HZ};
use crate::planner::{solve, verify_report, PlanReport, SolverOptions, Strategy};

/// Relative slack when comparing delays of different strategies.
pub const DOMINANCE_TOL: f64 = 1e-9;
/// Allowed mean gap of HEU over OPT.
pub const HEU_GAP: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    /// Delay against the number of devices.
    Fig3,
    /// Delay against the edge CPU budget.
    Fig4,
    /// Edge CPU shares against the first device's local CPU.
    Fig5,
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
        })
    }
}

impl FromStr for Figure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fig3" => Ok(Figure::Fig3),
            "fig4" => Ok(Figure::Fig4),
            "fig5" => Ok(Figure::Fig5),
            _ => Err(format!("unknown figure `{s}`")),
        }
    }
}

#[derive(Debug, Error)]
pub enum FigureError {
    #[error("invalid figure job: {0}")]
    InvalidJob(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Local CPU of the four peers in the shares sweep.
pub const FIG5_PEER_CPU_HZ: [f64; 4] = [1.5e9, 2.0e9, 2.5e9, 3.0e9];
/// Images per device in the shares sweep.
pub const FIG5_IMAGES: u32 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureJob {
    pub figure: Figure,
    /// Device counts, edge budgets in percent of a core, or first-device
    /// local CPU in GHz, depending on the figure.
    pub sweep: Vec<f64>,
    pub trials: usize,
    pub strategies: Vec<Strategy>,
    pub seed: u64,
    /// Device count where the sweep does not set it.
    pub num_devices: usize,
    pub scenario: ScenarioSpec,
    pub solver: SolverOptions,
}

impl FigureJob {
    pub fn new(figure: Figure) -> Self {
        let sweep = match figure {
            Figure::Fig3 => (2..=8).map(f64::from).collect(),
            Figure::Fig4 => vec![100.0, 200.0, 300.0, 400.0, 500.0],
            Figure::Fig5 => (0..=12).map(|i| 1.0 + 0.25 * f64::from(i)).collect(),
        };
        FigureJob {
            figure,
            sweep,
            trials: if figure == Figure::Fig5 { 1 } else { 20 },
            strategies: if figure == Figure::Fig5 { vec![Strategy::Opt] } else { Strategy::ALL.to_vec() },
            seed: 1,
            num_devices: 5,
            scenario: ScenarioSpec::default(),
            solver: SolverOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<(), FigureError> {
        let bad = |m: String| Err(FigureError::InvalidJob(m));
        if self.sweep.is_empty() {
            return bad("sweep must not be empty".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.strategies.is_empty() {
            return bad("at least one strategy is required".into());
        }
        if self.sweep.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad(format!("sweep values must be positive, got {:?}", self.sweep));
        }
        if self.figure == Figure::Fig3 && self.sweep.iter().any(|v| v.fract() != 0.0) {
            return bad("device counts must be integers".into());
        }
        if self.figure != Figure::Fig3 && self.num_devices == 0 {
            return bad("num_devices must be at least 1".into());
        }
        self.solver.validate().map_err(|e| FigureError::InvalidJob(e.to_string()))?;
        self.scenario.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendCheck {
    pub name: String,
    pub passed: bool,
    pub violations: usize,
    pub detail: String,
}

/// One curve point: a strategy's mean over trials at one sweep value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub strategy: Strategy,
    /// Device index for share curves.
    pub device: Option<usize>,
    pub mean: f64,
    pub stderr: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureOutput {
    pub figure: Figure,
    pub points: Vec<CurvePoint>,
    pub checks: Vec<TrendCheck>,
    pub csv: String,
    pub svg: String,
}

impl FigureOutput {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&TrendCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Mean curve of one strategy, in sweep order.
    pub fn curve(&self, strategy: Strategy, device: Option<usize>) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter(|p| p.strategy == strategy && p.device == device)
            .map(|p| (p.x, p.mean))
            .collect()
    }

    /// Writes `<figure>.csv` and `<figure>.svg` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(PathBuf, PathBuf), FigureError> {
        std::fs::create_dir_all(dir).map_err(|source| FigureError::Io { path: dir.into(), source })?;
        let csv = dir.join(format!("{}.csv", self.figure));
        let svg = dir.join(format!("{}.svg", self.figure));
        for (path, body) in [(&csv, &self.csv), (&svg, &self.svg)] {
            std::fs::write(path, body).map_err(|source| FigureError::Io { path: path.clone(), source })?;
        }
        Ok((csv, svg))
    }
}

/// Outcome of one strategy in one cell.
#[derive(Debug, Clone)]
struct Outcome {
    strategy: Strategy,
    report: Result<PlanReport, String>,
    verified: bool,
}

impl Outcome {
    fn delay(&self) -> Option<f64> {
        match &self.report {
            Ok(r) if r.is_solved() => Some(r.system_delay_s),
            _ => None,
        }
    }

    fn failure(&self) -> Option<String> {
        match &self.report {
            Ok(r) => match &r.status {
                crate::planner::PlanStatus::Solved => None,
                crate::planner::PlanStatus::Infeasible { reason } => Some(reason.clone()),
            },
            Err(e) => Some(e.clone()),
        }
    }
}

struct Cell {
    point: usize,
    outcomes: Vec<Outcome>,
}

fn cell_inputs(job: &FigureJob, point: usize, trial: usize) -> Result<(SystemConfig, Vec<DeviceProfile>), ModelError> {
    let x = job.sweep[point];
    let seed = trial_seed(job.seed, trial as u64);
    match job.figure {
        Figure::Fig3 => generate_scenario(&job.scenario.with_devices(x as usize).with_seed(seed)),
        Figure::Fig4 => {
            let (cfg, devs) = generate_scenario(&job.scenario.with_devices(job.num_devices).with_seed(seed))?;
            Ok((cfg.with_edge_cpu_hz(x / 100.0 * CORE_HZ), devs))
        }
        Figure::Fig5 => {
            let (cfg, mut devs) = generate_scenario(&job.scenario.with_devices(job.num_devices).with_seed(seed))?;
            for (k, d) in devs.iter_mut().enumerate() {
                d.image_count = FIG5_IMAGES;
                d.local_cpu_hz = if k == 0 { x * 1e9 } else { FIG5_PEER_CPU_HZ[(k - 1) % FIG5_PEER_CPU_HZ.len()] };
            }
            Ok((cfg, devs))
        }
    }
}

fn run_cell(job: &FigureJob, point: usize, trial: usize) -> Result<Cell, ModelError> {
    let (cfg, devs) = cell_inputs(job, point, trial)?;
    let outcomes = job
        .strategies
        .iter()
        .map(|&strategy| {
            let report = solve(strategy, &cfg, &devs, &job.solver).map_err(|e| e.to_string());
            let verified = match &report {
                Ok(r) if r.is_solved() => verify_report(&cfg, &devs, r).passed(),
                _ => true,
            };
            Outcome { strategy, report, verified }
        })
        .collect();
    Ok(Cell { point, outcomes })
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn status(ok: usize, total: usize, first_failure: Option<&String>) -> String {
    match (ok, first_failure) {
        (_, None) => "ok".into(),
        (0, Some(reason)) => format!("failed: {reason}"),
        (ok, Some(_)) => format!("partial {ok}/{total}"),
    }
}

fn check(name: &str, violations: Vec<String>) -> TrendCheck {
    TrendCheck { name: name.into(), passed: violations.is_empty(), violations: violations.len(), detail: violations.join("; ") }
}

fn monotone_violations(curve: &[(f64, f64)], nonincreasing: bool, strict: bool) -> Vec<String> {
    curve
        .windows(2)
        .filter(|w| {
            let (a, b) = (w[0].1, w[1].1);
            let ok = match (nonincreasing, strict) {
                (false, false) => b >= a,
                (false, true) => b > a,
                (true, false) => b <= a,
                (true, true) => b < a,
            };
            !ok
        })
        .map(|w| format!("{} at x={} then {} at x={}", w[0].1, w[0].0, w[1].1, w[1].0))
        .collect()
}

/// Runs a figure sweep and renders its CSV and SVG.
pub fn run_figure(job: &FigureJob) -> Result<FigureOutput, FigureError> {
    job.validate()?;
    let cells: Vec<(usize, usize)> = (0..job.sweep.len()).flat_map(|p| (0..job.trials).map(move |t| (p, t))).collect();
    let cells = cells
        .par_iter()
        .map(|&(p, t)| run_cell(job, p, t))
        .collect::<Result<Vec<_>, ModelError>>()?;

    let mut checks = Vec::new();
    let dominance: Vec<String> = cells
        .iter()
        .enumerate()
        .flat_map(|(i, cell)| {
            let opt = cell.outcomes.iter().find(|o| o.strategy == Strategy::Opt).and_then(Outcome::delay);
            cell.outcomes
                .iter()
                .filter_map(move |o| {
                    let (t_opt, t) = (opt?, o.delay()?);
                    (t < t_opt * (1.0 - DOMINANCE_TOL)).then(|| format!("cell {i}: {} {t} < OPT {t_opt}", o.strategy))
                })
                .collect::<Vec<_>>()
        })
        .collect();
    checks.push(check("opt_dominates", dominance));
    let unverified: Vec<String> = cells
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.outcomes.iter().filter(|o| !o.verified).map(move |o| format!("cell {i}: {}", o.strategy)))
        .collect();
    checks.push(check("reports_verified", unverified));

    let (points, svg) = match job.figure {
        Figure::Fig3 | Figure::Fig4 => delay_curves(job, &cells, &mut checks),
        Figure::Fig5 => share_curves(job, &cells, &mut checks),
    };
    let csv = render_csv(job.figure, &points)?;
    Ok(FigureOutput { figure: job.figure, points, checks, csv, svg })
}

fn delay_curves(job: &FigureJob, cells: &[Cell], checks: &mut Vec<TrendCheck>) -> (Vec<CurvePoint>, String) {
    let mut points = Vec::new();
    for (p, &x) in job.sweep.iter().enumerate() {
        for &strategy in &job.strategies {
            let outcomes: Vec<&Outcome> = cells
                .iter()
                .filter(|c| c.point == p)
                .flat_map(|c| c.outcomes.iter().filter(|o| o.strategy == strategy))
                .collect();
            let delays: Vec<f64> = outcomes.iter().filter_map(|o| o.delay()).collect();
            let failures: Vec<String> = outcomes.iter().filter_map(|o| o.failure()).collect();
            let (mean, stderr) = mean_stderr(&delays);
            points.push(CurvePoint {
                x,
                strategy,
                device: None,
                mean,
                stderr,
                status: status(delays.len(), outcomes.len(), failures.first()),
            });
        }
    }
    let curve = |s: Strategy| -> Vec<(f64, f64)> {
        let mut c: Vec<(f64, f64)> = points.iter().filter(|p| p.strategy == s).map(|p| (p.x, p.mean)).collect();
        c.sort_by(|a, b| a.0.total_cmp(&b.0));
        c
    };
    if job.strategies.contains(&Strategy::Opt) {
        let opt = curve(Strategy::Opt);
        let (name, decreasing) = match job.figure {
            Figure::Fig3 => ("opt_mean_nondecreasing", false),
            _ => ("opt_mean_nonincreasing", true),
        };
        checks.push(check(name, monotone_violations(&opt, decreasing, false)));
        if job.strategies.contains(&Strategy::Heu) {
            let heu = curve(Strategy::Heu);
            let gaps = opt
                .iter()
                .zip(&heu)
                .filter(|(o, h)| !(h.1 <= o.1 * (1.0 + HEU_GAP)))
                .map(|(o, h)| format!("x={}: HEU {} vs OPT {}", o.0, h.1, o.1))
                .collect();
            checks.push(check("heu_within_5_percent", gaps));
        }
    }
    let series: Vec<Series> = job.strategies.iter().map(|&s| Series { name: s.to_string(), points: curve(s) }).collect();
    let svg = match job.figure {
        Figure::Fig3 => line_chart("Delay vs. number of devices", "number of devices", "system delay (s)", &series),
        _ => line_chart("Delay vs. edge computation resource", "edge CPU (% of one 4.9 GHz core)", "system delay (s)", &series),
    };
    (points, svg)
}

fn share_curves(job: &FigureJob, cells: &[Cell], checks: &mut Vec<TrendCheck>) -> (Vec<CurvePoint>, String) {
    let mut points = Vec::new();
    let mut sum_violations = Vec::new();
    for (p, &x) in job.sweep.iter().enumerate() {
        for &strategy in &job.strategies {
            let reports: Vec<Result<&PlanReport, String>> = cells
                .iter()
                .filter(|c| c.point == p)
                .flat_map(|c| c.outcomes.iter().filter(|o| o.strategy == strategy))
                .map(|o| match (&o.report, o.failure()) {
                    (Ok(r), None) => Ok(r),
                    (_, Some(f)) => Err(f),
                    (Err(e), None) => Err(e.clone()),
                })
                .collect();
            let solved: Vec<&PlanReport> = reports.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
            let first_failure = reports.iter().find_map(|r| r.as_ref().err());
            for r in &solved {
                let total: f64 = r.allocation.rows.iter().map(|row| row.decision.edge_cpu_hz).sum::<f64>();
                let budget = cell_budget(job);
                if ((total - budget) / budget).abs() > 1e-9 {
                    sum_violations.push(format!("x={x} {strategy}: shares sum to {}", total / budget));
                }
            }
            for device in 0..job.num_devices {
                let shares: Vec<f64> = solved
                    .iter()
                    .map(|r| r.allocation.rows[device].decision.edge_cpu_hz / cell_budget(job))
                    .collect();
                let (mean, stderr) = mean_stderr(&shares);
                points.push(CurvePoint {
                    x,
                    strategy,
                    device: Some(device),
                    mean,
                    stderr,
                    status: status(solved.len(), reports.len(), first_failure),
                });
            }
        }
    }
    checks.push(check("shares_sum_to_one", sum_violations));
    if job.strategies.contains(&Strategy::Opt) {
        let curve = |d: usize| -> Vec<(f64, f64)> {
            let mut c: Vec<(f64, f64)> = points
                .iter()
                .filter(|p| p.strategy == Strategy::Opt && p.device == Some(d))
                .map(|p| (p.x, p.mean))
                .collect();
            c.sort_by(|a, b| a.0.total_cmp(&b.0));
            c
        };
        checks.push(check("device1_share_decreasing", monotone_violations(&curve(0), true, true)));
        let peers = (1..job.num_devices).flat_map(|d| {
            monotone_violations(&curve(d), false, false).into_iter().map(move |v| format!("device {}: {v}", d + 1))
        });
        checks.push(check("peer_shares_nondecreasing", peers.collect()));
    }
    let series: Vec<Series> = job
        .strategies
        .iter()
        .flat_map(|&s| {
            let pts = &points;
            (0..job.num_devices).map(move |d| Series {
                name: if job.strategies.len() == 1 { format!("device {}", d + 1) } else { format!("{s} device {}", d + 1) },
                points: pts.iter().filter(|p| p.strategy == s && p.device == Some(d)).map(|p| (p.x, p.mean)).collect(),
            })
        })
        .collect();
    let svg = line_chart("Edge CPU share vs. local CPU of device 1", "local CPU of device 1 (GHz)", "share of edge CPU", &series);
    (points, svg)
}

fn cell_budget(job: &FigureJob) -> f64 {
    job.scenario.system.edge_cpu_hz
}

fn render_csv(figure: Figure, points: &[CurvePoint]) -> Result<String, FigureError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| FigureError::Io { path: PathBuf::from("<csv>"), source: e.into() };
    match figure {
        Figure::Fig3 => w.write_record(["K", "strategy", "mean_delay_s", "stderr", "status"]),
        Figure::Fig4 => w.write_record(["edge_cpu_percent", "edge_cpu_hz", "strategy", "mean_delay_s", "stderr", "status"]),
        Figure::Fig5 => w.write_record(["f1_ghz", "strategy", "device", "edge_share", "stderr", "status"]),
    }
    .map_err(io)?;
    for p in points {
        let record: Vec<String> = match figure {
            Figure::Fig3 => vec![format!("{}", p.x as u64), p.strategy.to_string(), p.mean.to_string(), p.stderr.to_string(), p.status.clone()],
            Figure::Fig4 => vec![
                p.x.to_string(),
                (p.x / 100.0 * CORE_HZ).to_string(),
                p.strategy.to_string(),
                p.mean.to_string(),
                p.stderr.to_string(),
                p.status.clone(),
            ],
            Figure::Fig5 => vec![
                p.x.to_string(),
                p.strategy.to_string(),
                (p.device.unwrap_or(0) + 1).to_string(),
                p.mean.to_string(),
                p.stderr.to_string(),
                p.status.clone(),
            ],
        };
        w.write_record(&record).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| FigureError::Io { path: PathBuf::from("<csv>"), source: e.into_error() })?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn run_fig3(job: &FigureJob) -> Result<FigureOutput, FigureError> {
    expect(job, Figure::Fig3)?;
    run_figure(job)
}

pub fn run_fig4(job: &FigureJob) -> Result<FigureOutput, FigureError> {
    expect(job, Figure::Fig4)?;
    run_figure(job)
}

pub fn run_fig5(job: &FigureJob) -> Result<FigureOutput, FigureError> {
    expect(job, Figure::Fig5)?;
    run_figure(job)
}

fn expect(job: &FigureJob, figure: Figure) -> Result<(), FigureError> {
    if job.figure == figure {
        Ok(())
    } else {
        Err(FigureError::InvalidJob(format!("expected a {figure} job, got {}", job.figure)))
    }
}
