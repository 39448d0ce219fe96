//! Acceptance suite: twelve numbered criteria, each reduced to measured
//! values against fixed bounds.
//!
//! The E1 evaluator and the subproblem solver under test are taken from
//! [`Hooks`], so a deliberately broken implementation can be checked to
//! fail the suite.

use std::fmt;
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use super::figures::{run_figure, Figure, FigureJob};
use super::scenario::{generate_scenario, trial_seed, ScenarioSpec};
use crate::channel_sim::{validate_allocation, SimOptions, DELAY_CHECK_SLOTS};
use crate::kkt::{device_threshold, solve_p4, DeviceLoad, P4Error, P4Instance, P4Solution};
use crate::model::{
    exp_integral_e1, fit_logistic, min_threshold, required_snr_db, DeviceProfile, LogisticParams, ModelError,
    SystemConfig,
};
use crate::oracle::{
    check_constraint_convexity, interior_samples, kkt_residuals, oracle_min_delay, oracle_solve_p4, quadrature_e1,
    LatencyConstraint, OracleOptions,
};
use crate::planner::{
    init_bounds, probe_optimal, solve_heuristic, solve_optimal, LoadTable, SolverOptions, Strategy,
};

pub type E1Fn = fn(f64) -> Result<f64, ModelError>;
pub type P4Fn = fn(&P4Instance<'_>) -> Result<P4Solution, P4Error>;

/// Implementations under test.
#[derive(Clone, Copy)]
pub struct Hooks {
    pub e1: E1Fn,
    pub p4: P4Fn,
}

impl Default for Hooks {
    fn default() -> Self {
        Hooks { e1: exp_integral_e1, p4: solve_p4 }
    }
}

impl fmt::Debug for Hooks {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Hooks").finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AcceptanceOptions {
    pub seed: u64,
    pub hooks: Hooks,
}

impl Default for AcceptanceOptions {
    fn default() -> Self {
        AcceptanceOptions { seed: DEFAULT_SEED, hooks: Hooks::default() }
    }
}

pub const DEFAULT_SEED: u64 = 1;

/// `(id, slug, title)` of every criterion.
pub const CRITERIA: [(u8, &str, &str); 12] = [
    (1, "e1", "E1 accuracy"),
    (2, "inverse", "inverse pairs"),
    (3, "kkt", "KKT solution vs numerical oracle"),
    (4, "tightness", "latency tightness and budget exhaustion"),
    (5, "monotone", "feasibility monotone in the delay"),
    (6, "optimality", "optimality on toy instances"),
    (7, "heuristic", "heuristic quality"),
    (8, "trends", "figure trends"),
    (9, "convexity", "latency constraint convexity"),
    (10, "monte-carlo", "Monte Carlo consistency"),
    (11, "fit", "logistic fit recovery"),
    (12, "determinism", "determinism"),
];

/// Parses `all` or a comma list of criterion ids and slugs.
pub fn parse_suite(text: &str) -> Result<Vec<u8>, String> {
    if text.trim() == "all" {
        return Ok(CRITERIA.iter().map(|c| c.0).collect());
    }
    let mut ids = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let id = CRITERIA
            .iter()
            .find(|c| c.1 == part || c.0.to_string() == part)
            .map(|c| c.0)
            .ok_or_else(|| format!("unknown criterion `{part}`"))?;
        if !ids.contains(&id) {
            ids.push(id);
        }
    }
    if ids.is_empty() {
        return Err("no criteria selected".into());
    }
    ids.sort_unstable();
    Ok(ids)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = ">")]
    Above,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::AtMost => "<=",
            Relation::AtLeast => ">=",
            Relation::Above => ">",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measurement {
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub bound: f64,
    pub passed: bool,
}

impl Measurement {
    pub fn new(name: &str, value: f64, relation: Relation, bound: f64) -> Self {
        let passed = match relation {
            Relation::AtMost => value <= bound,
            Relation::AtLeast => value >= bound,
            Relation::Above => value > bound,
        };
        Measurement { name: name.into(), value, relation, bound, passed }
    }

    fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self::new(name, value, Relation::AtMost, bound)
    }

    fn at_least(name: &str, value: f64, bound: f64) -> Self {
        Self::new(name, value, Relation::AtLeast, bound)
    }
}

impl fmt::Display for Measurement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={:.3e} {} {:.3e}", self.name, self.value, self.relation, self.bound)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub measurements: Vec<Measurement>,
    pub runtime_s: f64,
    pub runtime_limit_s: Option<f64>,
    /// Context, or the error that stopped the criterion.
    pub detail: String,
}

impl CriterionResult {
    /// One-line summary, starting with `PASS` or `FAIL`.
    pub fn line(&self) -> String {
        let mut parts: Vec<String> = self.measurements.iter().map(ToString::to_string).collect();
        match self.runtime_limit_s {
            Some(limit) => parts.push(format!("runtime={:.2}s < {limit}s", self.runtime_s)),
            None => parts.push(format!("runtime={:.2}s", self.runtime_s)),
        }
        let mut line = format!(
            "{} criterion {:>2} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            parts.join(", ")
        );
        if !self.detail.is_empty() {
            line.push_str(" | ");
            line.push_str(&self.detail);
        }
        line
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcceptanceReport {
    pub seed: u64,
    pub passed: bool,
    pub criteria: Vec<CriterionResult>,
}

impl AcceptanceReport {
    pub fn lines(&self) -> Vec<String> {
        self.criteria.iter().map(CriterionResult::line).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

struct Outcome {
    measurements: Vec<Measurement>,
    notes: Vec<String>,
}

impl Outcome {
    fn new(measurements: Vec<Measurement>) -> Self {
        Outcome { measurements, notes: Vec::new() }
    }

    fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }
}

type Criterion = fn(&AcceptanceOptions) -> Result<Outcome, String>;

fn criterion_fn(id: u8) -> Option<(Criterion, Option<f64>)> {
    Some(match id {
        1 => (e1_accuracy as Criterion, Some(1.0)),
        2 => (inverse_pairs, None),
        3 => (kkt_vs_oracle, Some(60.0)),
        4 => (tightness_and_budget, None),
        5 => (feasibility_monotone, None),
        6 => (toy_optimality, Some(120.0)),
        7 => (heuristic_quality, None),
        8 => (figure_trends, None),
        9 => (convexity, None),
        10 => (monte_carlo, Some(120.0)),
        11 => (fit_recovery, None),
        12 => (determinism, None),
        _ => return None,
    })
}

/// Runs one criterion. Errors inside the criterion become a failed result.
pub fn run_criterion(id: u8, opts: &AcceptanceOptions) -> CriterionResult {
    let name = CRITERIA.iter().find(|c| c.0 == id).map_or("unknown", |c| c.2).to_string();
    let Some((f, runtime_limit_s)) = criterion_fn(id) else {
        return CriterionResult {
            id,
            name,
            passed: false,
            measurements: Vec::new(),
            runtime_s: 0.0,
            runtime_limit_s: None,
            detail: format!("no criterion {id}"),
        };
    };
    let start = Instant::now();
    let outcome = f(opts);
    let runtime_s = start.elapsed().as_secs_f64();
    let in_time = runtime_limit_s.is_none_or(|limit| runtime_s < limit);
    match outcome {
        Ok(o) => CriterionResult {
            id,
            name,
            passed: in_time && !o.measurements.is_empty() && o.measurements.iter().all(|m| m.passed),
            measurements: o.measurements,
            runtime_s,
            runtime_limit_s,
            detail: o.notes.join("; "),
        },
        Err(e) => CriterionResult {
            id,
            name,
            passed: false,
            measurements: Vec::new(),
            runtime_s,
            runtime_limit_s,
            detail: format!("error: {e}"),
        },
    }
}

/// Runs the given criteria in order.
pub fn run_acceptance(ids: &[u8], opts: &AcceptanceOptions) -> AcceptanceReport {
    let criteria: Vec<CriterionResult> = ids.iter().map(|&id| run_criterion(id, opts)).collect();
    AcceptanceReport { seed: opts.seed, passed: criteria.iter().all(|c| c.passed), criteria }
}

fn rng(opts: &AcceptanceOptions, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(trial_seed(opts.seed, salt))
}

fn scenario(seed: u64, k: usize) -> Result<(SystemConfig, Vec<DeviceProfile>), String> {
    generate_scenario(&ScenarioSpec::default().with_devices(k).with_seed(seed)).map_err(|e| e.to_string())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn log_grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(move |i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
}

fn e1_accuracy(opts: &AcceptanceOptions) -> Result<Outcome, String> {
    let mut worst: f64 = 0.0;
    let mut at = 0.0;
    for g in log_grid(1e-6, 50.0, 200) {
        let value = (opts.hooks.e1)(g).map_err(|e| e.to_string())?;
        let err = rel(value, quadrature_e1(g));
        if !(err <= worst) {
            worst = err;
            at = g;
        }
    }
    Ok(Outcome::new(vec![Measurement::at_most("max_rel_error", worst, 1e-10)]).note(format!("worst at g={at:.4e}")))
}

fn inverse_pairs(opts: &AcceptanceOptions) -> Result<Outcome, String> {
    let mut rng = rng(opts, 2);
    let catalog = LogisticParams::default_catalog();
    let mut ssim_worst: f64 = 0.0;
    for _ in 0..1000 {
        let p = catalog[rng.random_range(0..catalog.len())].logistic;
        let eta = p.a1 + (p.a2 - p.a1) * rng.random_range(0.001..0.999);
        let snr = required_snr_db(&p, eta).map_err(|e| e.to_string())?;
        ssim_worst = ssim_worst.max(rel(p.ssim(snr), eta));
    }
    let e1 = opts.hooks.e1;
    let (c_lo, c_hi) = (e1(50.0).map_err(|e| e.to_string())?, e1(1e-6).map_err(|e| e.to_string())?);
    let mut e1_worst: f64 = 0.0;
    for _ in 0..1000 {
        let c = (c_lo.ln() + (c_hi.ln() - c_lo.ln()) * rng.random::<f64>()).exp();
        let d = min_threshold(c, 1e-12).map_err(|e| e.to_string())?;
        e1_worst = e1_worst.max(rel(e1(d).map_err(|e| e.to_string())?, c));
    }
    Ok(Outcome::new(vec![
        Measurement::at_most("ssim_roundtrip_rel", ssim_worst, 1e-9),
        Measurement::at_most("e1_threshold_roundtrip_rel", e1_worst, 1e-8),
    ]))
}

/// A subproblem instance with owned data.
struct OwnedInstance {
    cfg: SystemConfig,
    devices: Vec<DeviceProfile>,
    crs: Vec<f64>,
    system_delay: f64,
}

impl OwnedInstance {
    fn view(&self) -> Result<P4Instance<'_>, String> {
        P4Instance::new(&self.cfg, &self.devices, self.crs.clone(), self.system_delay).map_err(|e| e.to_string())
    }
}

/// Seeded subproblem instances with `K = 1..=4` devices, random satisfiable
/// ratios and a delay between the single-device floor and 1.5 times the
/// equal-split delay. `keep` decides which draws are retained.
fn p4_instances(
    rng: &mut ChaCha8Rng,
    count: usize,
    mut keep: impl FnMut(&OwnedInstance) -> Result<bool, String>,
) -> Result<Vec<OwnedInstance>, String> {
    let mut out = Vec::with_capacity(count);
    let mut draws = 0;
    while out.len() < count {
        draws += 1;
        if draws > 100 * count {
            return Err(format!("only {} of {count} instances after {draws} draws", out.len()));
        }
        let k = 1 + out.len() % 4;
        let (cfg, devices) = scenario(rng.next_u64(), k)?;
        let mut crs = Vec::with_capacity(k);
        let mut loads = Vec::with_capacity(k);
        for dev in &devices {
            let options: Vec<(f64, f64)> = cfg
                .ratios()
                .filter_map(|cr| match device_threshold(&cfg, dev, cr, 1e-10) {
                    Ok(Some(d)) => Some(Ok((cr, d))),
                    Ok(None) => None,
                    Err(e) => Some(Err(e.to_string())),
                })
                .collect::<Result<_, _>>()?;
            let (cr, d) = options[rng.random_range(0..options.len())];
            crs.push(cr);
            loads.push(DeviceLoad::new(&cfg, dev, cr, d));
        }
        let kf = k as f64;
        let f = cfg.edge_cpu_hz;
        let lo = loads.iter().map(|l| l.local_s + l.transmit_load + l.decode_load / f).fold(0.0, f64::max);
        let hi = loads.iter().map(|l| l.local_s + kf * (l.transmit_load + l.decode_load / f)).fold(0.0, f64::max);
        let system_delay = lo + (hi - lo) * rng.random_range(0.2..1.5);
        let inst = OwnedInstance { cfg, devices, crs, system_delay };
        if keep(&inst)? {
            out.push(inst);
        }
    }
    Ok(out)
}

fn kkt_vs_oracle(opts: &AcceptanceOptions) -> Result<Outcome, String> {
    let oracle = OracleOptions { seed: trial_seed(opts.seed, 30), ..OracleOptions::default() };
    let mut solutions = Vec::new();
    let instances = p4_instances(&mut rng(opts, 3), 50, |inst| match oracle_solve_p4(&inst.view()?, &oracle) {
        Ok(sol) => {
            solutions.push(sol);
            Ok(true)
        }
        Err(P4Error::Infeasible(_)) => Ok(false),
        Err(e) => Err(e.to_string()),
    })?;
    let (mut gap, mut alloc, mut stat, mut min_mult): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, f64::INFINITY);
    for (inst, reference) in instances.iter().zip(&solutions) {
        let sol = (opts.hooks.p4)(&inst.view()?).map_err(|e| e.to_string())?;
        gap = gap.max(rel(sol.sum_time_share, reference.sum_time_share));
        for (a, b) in sol.allocation.rows.iter().zip(&reference.allocation.rows) {
            let (a, b) = (a.decision, b.decision);
            alloc = alloc.max(rel(a.time_share, b.time_share)).max(rel(a.edge_cpu_hz, b.edge_cpu_hz));
        }
        let r = kkt_residuals(&inst.cfg, &inst.devices, &sol).map_err(|e| e.to_string())?;
        stat = stat.max(r.max_stationarity());
        min_mult = min_mult.min(r.min_multiplier);
    }
    Ok(Outcome::new(vec![
        Measurement::at_most("objective_rel_gap", gap, 1e-6),
        Measurement::at_most("allocation_rel_diff", alloc, 1e-5),
        Measurement::at_most("stationarity_residual", stat, 1e-7),
        Measurement::at_least("min_multiplier", min_mult, 0.0),
    ])
    .note(format!("{} instances", instances.len())))
}

fn tightness_and_budget(opts: &AcceptanceOptions) -> Result<Outcome, String> {
    let p4 = opts.hooks.p4;
    let mut solutions = Vec::new();
    let instances = p4_instances(&mut rng(opts, 4), 200, |inst| match p4(&inst.view()?) {
        Ok(sol) => {
            solutions.push(sol);
            Ok(true)
        }
        Err(P4Error::Infeasible(_)) => Ok(false),
        Err(e) => Err(e.to_string()),
    })?;
    let (mut tight, mut budget): (f64, f64) = (0.0, 0.0);
    for (inst, sol) in instances.iter().zip(&solutions) {
        let r = kkt_residuals(&inst.cfg, &inst.devices, sol).map_err(|e| e.to_string())?;
        tight = tight.max(r.max_tightness());
        budget = budget.max(r.budget);
    }
    Ok(Outcome::new(vec![
        Measurement::at_most("latency_vs_delay_rel", tight, 1e-9),
        Measurement::at_most("edge_budget_rel", budget, 1e-9),
    ])
    .note(format!("{} feasible solutions", instances.len())))
}

fn feasibility_monotone(opts: &AcceptanceOptions) -> Result<Outcome, String> {
    let solver = SolverOptions::default();
    let mut violations = 0usize;
    let mut mixed = 0usize;
    for i in 0..20u64 {
        let (cfg, devices) = scenario(trial_seed(opts.seed, 500 + i), 2 + (i as usize) % 4)?;
        let table = LoadTable::build(&cfg, &devices, solver.epsilon2).map_err(|e| e.to_string())?;
        let (lo, hi) = init_bounds(&cfg, &devices, &solver).map_err(|e| e.to_string())?;
        let grid: Vec<f64> = (0..50).map(|j| 0.9 * lo + (1.1 * hi - 0.9 * lo) * j as f64 / 49.0).collect();
        let feasible = grid
            .iter()
            .map(|&t| probe_optimal(&cfg, &table, t, true).map(|p| p.feasible()))
            .collect::<Result<Vec<bool>, _>>()
            .map_err(|e| e.to_string())?;
        violations += feasible.windows(2).filter(|w| w[0] && !w[1]).count();
        if feasible.contains(&true) && feasible.contains(&false) {
            mixed += 1;
        }
    }
    Ok(Outcome::new(vec![Measurement::at_most("violations", violations as f64, 0.0)])
        .note(format!("{mixed} of 20 grids cross the feasibility boundary")))
}

fn toy_optimality(opts: &AcceptanceOptions) -> Result<Outcome, String> {
    let solver = SolverOptions::default();
    let oracle = OracleOptions { seed: trial_seed(opts.seed, 60), ..OracleOptions::default() };
    let (mut above, mut below): (f64, f64) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..10u64 {
        let k = 1 + (i as usize) % 3;
        let n = 2 + (i as usize) % 2;
        let mut spec = ScenarioSpec::default().with_devices(k).with_seed(trial_seed(opts.seed, 600 + i));
        spec.system.catalog.truncate(n);
        let (cfg, devices) = generate_scenario(&spec).map_err(|e| e.to_string())?;
        let report = solve_optimal(&cfg, &devices, &solver).map_err(|e| e.to_string())?;
        let (t_oracle, _) = oracle_min_delay(&cfg, &devices, 1e-9, &oracle).map_err(|e| e.to_string())?;
        let gap = (report.system_delay_s - t_oracle) / report.system_delay_s;
        above = above.max(gap);
        below = below.min(gap);
    }
    Ok(Outcome::new(vec![
        Measurement::at_most("max_rel_excess_over_oracle", above, solver.epsilon + 1e-6),
        Measurement::at_least("min_rel_excess_over_oracle", below, -1e-6),
    ]))
}

fn heuristic_quality(opts: &AcceptanceOptions) -> Result<Outcome, String> {
    let solver = SolverOptions::default();
    let (mut opt_sum, mut heu_sum, mut violations) = (0.0, 0.0, 0usize);
    for i in 0..20u64 {
        let (cfg, devices) = scenario(trial_seed(opts.seed, 700 + i), 2 + (i as usize) % 4)?;
        let opt = solve_optimal(&cfg, &devices, &solver).map_err(|e| e.to_string())?.system_delay_s;
        let heu = solve_heuristic(&cfg, &devices, &solver).map_err(|e| e.to_string())?.system_delay_s;
        opt_sum += opt;
        heu_sum += heu;
        if opt > heu * (1.0 + super::figures::DOMINANCE_TOL) {
            violations += 1;
        }
    }
    Ok(Outcome::new(vec![
        Measurement::at_most("mean_heu_over_opt_minus_1", heu_sum / opt_sum - 1.0, super::figures::HEU_GAP),
        Measurement::at_most("opt_above_heu_count", violations as f64, 0.0),
    ]))
}

fn figure_trends(opts: &AcceptanceOptions) -> Result<Outcome, String> {
    let mut measurements = Vec::new();
    let mut notes = Vec::new();
    for (figure, check) in [
        (Figure::Fig3, "opt_mean_nondecreasing"),
        (Figure::Fig4, "opt_mean_nonincreasing"),
        (Figure::Fig5, "device1_share_decreasing"),
    ] {
        let mut job = FigureJob::new(figure);
        job.seed = opts.seed;
        job.strategies = vec![Strategy::Opt];
        if figure == Figure::Fig3 {
            job.sweep = (2..=6).map(f64::from).collect();
        }
        let out = run_figure(&job).map_err(|e| e.to_string())?;
        let c = out.check(check).ok_or_else(|| format!("{figure} has no {check} check"))?;
        measurements.push(Measurement::at_most(&format!("{figure}_{check}_violations"), c.violations as f64, 0.0));
        if !c.detail.is_empty() {
            notes.push(format!("{figure}: {}", c.detail));
        }
    }
    Ok(Outcome { measurements, notes })
}

fn convexity(opts: &AcceptanceOptions) -> Result<Outcome, String> {
    let oracle = OracleOptions::default();
    let mut rng = rng(opts, 9);
    let (mut checked, mut failures, mut min_minor) = (0usize, 0usize, f64::INFINITY);
    for i in 0..10u64 {
        let (cfg, devices) = scenario(rng.next_u64(), 1)?;
        let dev = &devices[0];
        let options: Vec<(f64, f64)> = cfg
            .ratios()
            .filter_map(|cr| device_threshold(&cfg, dev, cr, 1e-10).transpose().map(|d| d.map(|d| (cr, d))))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let (cr, d) = options[rng.random_range(0..options.len())];
        let constraint = LatencyConstraint::from_model(&cfg, dev, cr, d, 1.0);
        let points = interior_samples(&constraint, cfg.edge_cpu_hz, 100, trial_seed(opts.seed, 900 + i));
        let verdict = check_constraint_convexity(&constraint, &points, &oracle);
        checked += verdict.checked;
        failures += verdict.failures.len();
        min_minor = min_minor.min(verdict.min_minor);
    }
    Ok(Outcome::new(vec![
        Measurement::new("min_normalized_minor", min_minor, Relation::Above, -1e-8),
        Measurement::at_most("failed_points", failures as f64, 0.0),
        Measurement::at_least("checked_points", checked as f64, 1000.0),
    ]))
}

fn monte_carlo(opts: &AcceptanceOptions) -> Result<Outcome, String> {
    let (cfg, devices) = scenario(trial_seed(opts.seed, 1000), 5)?;
    let report = solve_optimal(&cfg, &devices, &SolverOptions::default()).map_err(|e| e.to_string())?;
    let sim = SimOptions { num_slots: DELAY_CHECK_SLOTS, seed: trial_seed(opts.seed, 1001), ..SimOptions::default() };
    let check = validate_allocation(&cfg, &devices, &report.allocation, &sim).map_err(|e| e.to_string())?;
    let (mut active_z, mut power_z, mut delay_rel): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for (dc, dev) in check.devices.iter().zip(&devices) {
        let g = report.allocation.rows[dc.device].decision.threshold;
        let s = &dc.stats;
        active_z = active_z.max((s.active_ratio.mean - (-g).exp()).abs() / s.active_ratio.stderr);
        let budget = dev.tx_power_w / f64::from(cfg.num_subcarriers);
        power_z = power_z.max((s.mean_tx_power_w.mean - budget).abs() / s.mean_tx_power_w.stderr);
        delay_rel = delay_rel.max(dc.rel_error);
    }
    Ok(Outcome::new(vec![
        Measurement::at_most("active_ratio_sigmas", active_z, 3.0),
        Measurement::at_most("tx_power_sigmas", power_z, 3.0),
        Measurement::at_most("tx_delay_rel_error", delay_rel, 0.02),
    ])
    .note(format!("{} devices x {} slots", devices.len(), sim.num_slots)))
}

/// Parameters used to generate the synthetic fit samples.
pub const FIT_TRUTH: [f64; 4] = [0.55, 0.93, 0.25, -0.5];
pub const FIT_NOISE_STD: f64 = 0.002;

fn params(p: &LogisticParams) -> [f64; 4] {
    [p.a1, p.a2, p.c1, p.c2]
}

fn fit_recovery(opts: &AcceptanceOptions) -> Result<Outcome, String> {
    let [a1, a2, c1, c2] = FIT_TRUTH;
    let truth = LogisticParams::new(a1, a2, c1, c2).map_err(|e| e.to_string())?;
    let clean = truth.anchor_samples();
    let fitted = fit_logistic(&clean).map_err(|e| e.to_string())?;
    let noiseless = params(&fitted).iter().zip(FIT_TRUTH).map(|(p, t)| (p - t).abs()).fold(0.0, f64::max);

    let noise = Normal::new(0.0, FIT_NOISE_STD).expect("positive std");
    let mut worst = [0.0f64; 4];
    let mut mean = [0.0f64; 4];
    let mut failed_fits = 0usize;
    for trial in 0..20u64 {
        let mut r = rng(opts, 1100 + trial);
        let noisy: Vec<(f64, f64)> = clean.iter().map(|&(g, s)| (g, s + noise.sample(&mut r))).collect();
        match fit_logistic(&noisy) {
            Ok(p) => {
                for (i, (v, t)) in params(&p).iter().zip(FIT_TRUTH).enumerate() {
                    worst[i] = worst[i].max(rel(*v, t));
                    mean[i] += v / 20.0;
                }
            }
            Err(_) => failed_fits += 1,
        }
    }
    let mean_err: Vec<String> = ["a1", "a2", "c1", "c2"]
        .iter()
        .zip(mean.iter().zip(FIT_TRUTH))
        .map(|(n, (m, t))| format!("{n} {:.2}%", 100.0 * rel(*m, t)))
        .collect();
    let per_param: Vec<String> =
        ["a1", "a2", "c1", "c2"].iter().zip(worst).map(|(n, w)| format!("{n} {:.2}%", 100.0 * w)).collect();
    Ok(Outcome::new(vec![
        Measurement::at_most("noiseless_abs_error", noiseless, 1e-6),
        Measurement::at_most("noisy_max_rel_error", worst.iter().copied().fold(0.0, f64::max), 0.01),
        Measurement::at_most("noisy_failed_fits", failed_fits as f64, 0.0),
    ])
    .note(format!("worst per parameter: {}", per_param.join(", ")))
    .note(format!("error of the 20-trial mean: {}", mean_err.join(", "))))
}

fn determinism(opts: &AcceptanceOptions) -> Result<Outcome, String> {
    let mut job = FigureJob::new(Figure::Fig3);
    job.seed = opts.seed;
    let run = |job: &FigureJob| run_figure(job).map(|o| (o.csv, o.svg)).map_err(|e| e.to_string());
    let pooled = |threads: usize, job: &FigureJob| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())
            .and_then(|pool| pool.install(|| run(job)))
    };
    let reference = run(&job)?;
    let mut serial = job.clone();
    serial.solver.parallel = false;
    let others = [("second run", run(&job)?), ("1 thread", pooled(1, &job)?), ("4 threads", pooled(4, &job)?), (
        "serial probes",
        pooled(1, &serial)?,
    )];
    let differing: Vec<&str> = others.iter().filter(|(_, o)| *o != reference).map(|(n, _)| *n).collect();
    let outcome = Outcome::new(vec![Measurement::at_most("differing_outputs", differing.len() as f64, 0.0)])
        .note(format!("{} CSV bytes compared against {} reruns", reference.0.len(), others.len()));
    Ok(if differing.is_empty() { outcome } else { outcome.note(format!("differs: {}", differing.join(", "))) })
}
