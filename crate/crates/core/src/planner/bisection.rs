use rayon::prelude::*;

use super::{bounds_from_table, prepare, LoadTable, PlanError, PlanReport, PlanStatus, SolverOptions, Strategy, TraceEntry, WorkCounters, MAX_TUPLES};
use crate::kkt::{closed_form_sum, solve_loads, DeviceLoad, P4Error, FRAME_TOL};
use crate::model::{DeviceProfile, SystemConfig};

/// Tuples handed to one rayon task.
const CHUNK: usize = 4096;

/// Result of one feasibility probe over every ratio tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOutcome {
    /// Catalog indices of the best tuple and its total time share.
    pub best: Option<(Vec<usize>, f64)>,
    pub tuples: u64,
    pub solves: u64,
}

impl ProbeOutcome {
    pub fn feasible(&self) -> bool {
        self.best.as_ref().is_some_and(|(_, sum)| *sum <= 1.0 + FRAME_TOL)
    }
}

fn tuple_count(table: &LoadTable) -> Result<u64, PlanError> {
    let n = table.loads[0].len() as u64;
    let mut total: u64 = 1;
    for _ in 0..table.num_devices() {
        total = total.saturating_mul(n);
    }
    if total > MAX_TUPLES {
        return Err(PlanError::SearchSpaceTooLarge { tuples: total });
    }
    Ok(total)
}

/// Catalog indices of tuple `idx`; device 0 is the most significant digit.
fn decode_tuple(mut idx: u64, n: u64, k: usize, out: &mut [usize]) {
    for slot in out[..k].iter_mut().rev() {
        *slot = (idx % n) as usize;
        idx /= n;
    }
}

fn better(a: Option<(f64, u64)>, b: Option<(f64, u64)>) -> Option<(f64, u64)> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(x), Some(y)) => {
            if x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).is_le() {
                Some(x)
            } else {
                Some(y)
            }
        }
    }
}

/// Minimum total time share over every ratio tuple at delay `system_delay`.
///
/// Ties go to the lexicographically smallest tuple of catalog indices, so the
/// result is the same with and without `parallel`.
pub fn probe_optimal(
    cfg: &SystemConfig,
    table: &LoadTable,
    system_delay: f64,
    parallel: bool,
) -> Result<ProbeOutcome, PlanError> {
    let total = tuple_count(table)?;
    let k = table.num_devices();
    let n = table.loads[0].len();
    let unreachable = ProbeOutcome { best: None, tuples: total, solves: 0 };

    // decode cycles do not depend on the ratio, so neither does the edge floor
    let mut decode_floor = 0.0;
    let mut terms: Vec<Vec<Option<(f64, f64)>>> = Vec::with_capacity(k);
    for dev_loads in &table.loads {
        let any = dev_loads.iter().flatten().next().expect("validated by prepare");
        let s = system_delay - any.local_s;
        if !(s > 0.0) {
            return Ok(unreachable);
        }
        decode_floor += any.decode_load / s;
        terms.push(
            dev_loads
                .iter()
                .map(|l| l.map(|l| (l.transmit_load / s, (l.transmit_load * l.decode_load).sqrt() / s)))
                .collect(),
        );
    }
    let spare = cfg.edge_cpu_hz - decode_floor;
    if !(spare > 0.0) {
        return Ok(unreachable);
    }

    let evaluate = |idx: u64, digits: &mut Vec<usize>| -> Option<(f64, u64)> {
        decode_tuple(idx, n as u64, k, digits);
        let mut direct = 0.0;
        let mut cross = 0.0;
        for (dev, &i) in digits.iter().enumerate() {
            let (x, a) = terms[dev][i]?;
            direct += x;
            cross += a;
        }
        Some((direct + cross * cross / spare, idx))
    };

    let satisfiable: u64 = table
        .loads
        .iter()
        .map(|l| l.iter().filter(|x| x.is_some()).count() as u64)
        .product();
    let best = if parallel && total > CHUNK as u64 {
        let chunks = total.div_ceil(CHUNK as u64);
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut digits = vec![0usize; k];
                let end = ((c + 1) * CHUNK as u64).min(total);
                (c * CHUNK as u64..end).map(|idx| evaluate(idx, &mut digits)).fold(None, better)
            })
            .reduce(|| None, better)
    } else {
        let mut digits = vec![0usize; k];
        (0..total).map(|idx| evaluate(idx, &mut digits)).fold(None, better)
    };
    Ok(ProbeOutcome {
        best: best.map(|(sum, idx)| {
            let mut digits = vec![0usize; k];
            decode_tuple(idx, n as u64, k, &mut digits);
            (digits, sum)
        }),
        tuples: total,
        solves: satisfiable,
    })
}

/// Algorithm-1 bisection. `probe` returns a witness when `T` is feasible.
fn bisect<W>(
    lower: f64,
    upper: f64,
    opts: &SolverOptions,
    mut probe: impl FnMut(f64) -> Result<Option<W>, PlanError>,
) -> Result<(W, f64, Vec<TraceEntry>), PlanError> {
    let mut trace = Vec::new();
    let mut witness = match probe(upper)? {
        Some(w) => w,
        None => return Err(PlanError::InfeasibleAtUpperBound { upper_s: upper }),
    };
    trace.push(TraceEntry { system_delay_s: upper, feasible: true });
    let (mut lo, mut hi) = (lower.min(upper), upper);
    let mut iterations = 0;
    while (hi - lo) / hi > opts.epsilon {
        if iterations == opts.max_outer_iters {
            return Err(PlanError::IterationCap { iterations, trace });
        }
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let found = probe(mid)?;
        trace.push(TraceEntry { system_delay_s: mid, feasible: found.is_some() });
        match found {
            Some(w) => {
                witness = w;
                hi = mid;
            }
            None => lo = mid,
        }
    }
    Ok((witness, hi, trace))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    strategy: Strategy,
    cfg: &SystemConfig,
    devices: &[DeviceProfile],
    table: &LoadTable,
    choice: &[usize],
    system_delay: f64,
    trace: Vec<TraceEntry>,
    counters: WorkCounters,
) -> Result<PlanReport, PlanError> {
    let loads: Vec<DeviceLoad> = choice
        .iter()
        .enumerate()
        .map(|(k, &i)| *table.load(k, i).expect("witness tuples are satisfiable"))
        .collect();
    let solution = solve_loads(cfg, devices, &loads, system_delay).map_err(|e| match e {
        P4Error::Model(m) => PlanError::Model(m),
        _ => PlanError::InfeasibleAtUpperBound { upper_s: system_delay },
    })?;
    Ok(PlanReport {
        strategy,
        status: PlanStatus::Solved,
        system_delay_s: solution.allocation.max_latency(),
        allocation: solution.allocation,
        trace,
        counters,
    })
}

/// Bisection with exhaustive search over compression-ratio tuples.
pub fn solve_optimal(
    cfg: &SystemConfig,
    devices: &[DeviceProfile],
    opts: &SolverOptions,
) -> Result<PlanReport, PlanError> {
    let table = prepare(cfg, devices, opts)?;
    tuple_count(&table)?;
    let (lower, upper) = bounds_from_table(cfg, &table);
    let mut counters = WorkCounters::default();
    let (choice, t, trace) = bisect(lower, upper, opts, |t| {
        let outcome = probe_optimal(cfg, &table, t, opts.parallel)?;
        counters.cr_tuples += outcome.tuples;
        counters.p4_solves += outcome.solves;
        Ok(if outcome.feasible() { outcome.best.map(|(c, _)| c) } else { None })
    })?;
    finish(Strategy::Opt, cfg, devices, &table, &choice, t, trace, counters)
}

/// Bisection where each device keeps the ratio minimizing `o·e^{d(o)}`.
pub fn solve_heuristic(
    cfg: &SystemConfig,
    devices: &[DeviceProfile],
    opts: &SolverOptions,
) -> Result<PlanReport, PlanError> {
    let table = prepare(cfg, devices, opts)?;
    let (lower, upper) = bounds_from_table(cfg, &table);
    let choice = table.best_indices()?;
    let loads: Vec<&DeviceLoad> = choice
        .iter()
        .enumerate()
        .map(|(k, &i)| table.load(k, i).expect("best index is satisfiable"))
        .collect();
    let mut counters = WorkCounters::default();
    let (_, t, trace) = bisect(lower, upper, opts, |t| {
        counters.cr_tuples += 1;
        counters.p4_solves += 1;
        Ok(closed_form_sum(&loads, cfg.edge_cpu_hz, t).filter(|&sum| sum <= 1.0 + FRAME_TOL))
    })?;
    finish(Strategy::Heu, cfg, devices, &table, &choice, t, trace, counters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kkt::{solve_p4, P4Instance};
    use crate::planner::tests::device;
    use crate::planner::{init_bounds, solve, solve_equ};

    fn scenario() -> (SystemConfig, Vec<DeviceProfile>) {
        let cfg = SystemConfig::default();
        let devs = vec![
            device(4, 1.3, 40.0, 0.88),
            device(9, 1.9, 90.0, 0.81),
            device(1, 1.0, 15.0, 0.92),
            device(6, 1.6, 70.0, 0.85),
        ];
        (cfg, devs)
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn tuple_digits() {
        let mut d = [0usize; 3];
        decode_tuple(0, 4, 3, &mut d);
        assert_eq!(d, [0, 0, 0]);
        decode_tuple(1, 4, 3, &mut d);
        assert_eq!(d, [0, 0, 1]);
        decode_tuple(4 * 4 * 2 + 3, 4, 3, &mut d);
        assert_eq!(d, [2, 0, 3]);
    }

    #[test]
    fn tie_break_prefers_smaller_index() {
        assert_eq!(better(Some((1.0, 5)), Some((1.0, 3))), Some((1.0, 3)));
        assert_eq!(better(Some((0.9, 5)), Some((1.0, 3))), Some((0.9, 5)));
        assert_eq!(better(None, Some((1.0, 3))), Some((1.0, 3)));
    }

    #[test]
    fn optimal_converges_and_is_tight() {
        let (cfg, devs) = scenario();
        let opts = SolverOptions::default();
        let report = solve_optimal(&cfg, &devs, &opts).unwrap();
        assert!(report.is_solved());
        assert!(report.trace_is_monotone());
        let (lo, hi) = init_bounds(&cfg, &devs, &opts).unwrap();
        assert!(report.system_delay_s >= lo * (1.0 - 1e-12) && report.system_delay_s <= hi * (1.0 + 1e-12));
        assert!(report.allocation.total_time_share() <= 1.0 + FRAME_TOL);
        for row in &report.allocation.rows {
            assert!(rel(row.latency.total_s, report.system_delay_s) < 1e-9);
        }
        let last_infeasible = report
            .trace
            .iter()
            .filter(|e| !e.feasible)
            .map(|e| e.system_delay_s)
            .fold(lo, f64::max);
        assert!((report.system_delay_s - last_infeasible) / report.system_delay_s <= opts.epsilon);
        assert!(report.counters.cr_tuples >= 256);
    }

    #[test]
    fn certificate_below_result_is_infeasible() {
        let (cfg, devs) = scenario();
        let opts = SolverOptions::default();
        let report = solve_optimal(&cfg, &devs, &opts).unwrap();
        let table = LoadTable::build(&cfg, &devs, opts.epsilon2).unwrap();
        let t = report.system_delay_s;
        assert!(probe_optimal(&cfg, &table, t * (1.0 + 1e-12), false).unwrap().feasible());
        assert!(!probe_optimal(&cfg, &table, t * (1.0 - 2.0 * opts.epsilon), false).unwrap().feasible());
    }

    #[test]
    fn parallel_and_serial_agree_bitwise() {
        let cfg = SystemConfig::default();
        let devs: Vec<_> = (0..8)
            .map(|i| device(1 + i % 10, 1.0 + 0.1 * i as f64, 10.0 + 11.0 * i as f64, 0.8 + 0.015 * i as f64))
            .collect();
        let par = solve_optimal(&cfg, &devs, &SolverOptions::default()).unwrap();
        let ser = solve_optimal(&cfg, &devs, &SolverOptions { parallel: false, ..Default::default() }).unwrap();
        assert_eq!(serde_json::to_string(&par).unwrap(), serde_json::to_string(&ser).unwrap());
    }

    #[test]
    fn heuristic_matches_optimal() {
        let (cfg, devs) = scenario();
        let opts = SolverOptions::default();
        let opt = solve_optimal(&cfg, &devs, &opts).unwrap();
        let heu = solve_heuristic(&cfg, &devs, &opts).unwrap();
        assert!(opt.system_delay_s <= heu.system_delay_s * (1.0 + 1e-9));
        assert!(heu.system_delay_s <= opt.system_delay_s * 1.05);
        assert!(heu.counters.p4_solves < opt.counters.p4_solves);
    }

    #[test]
    fn single_device_is_immediate() {
        let cfg = SystemConfig::default();
        let devs = [device(5, 1.2, 60.0, 0.86)];
        let opts = SolverOptions::default();
        let opt = solve_optimal(&cfg, &devs, &opts).unwrap();
        let heu = solve_heuristic(&cfg, &devs, &opts).unwrap();
        let equ = solve_equ(&cfg, &devs, &opts).unwrap();
        assert_eq!(opt.trace.len(), 1);
        assert_eq!(opt.allocation, heu.allocation);
        assert!(rel(opt.system_delay_s, equ.system_delay_s) < 1e-9);
    }

    #[test]
    fn dominates_baselines() {
        let (cfg, devs) = scenario();
        let opts = SolverOptions::default();
        let opt = solve_optimal(&cfg, &devs, &opts).unwrap();
        for s in [Strategy::Heu, Strategy::Equ, Strategy::FixO, Strategy::FixG] {
            let r = solve(s, &cfg, &devs, &opts).unwrap();
            if r.is_solved() {
                assert!(opt.system_delay_s <= r.system_delay_s * (1.0 + 1e-9), "{s}");
            }
        }
    }

    #[test]
    fn feasibility_is_monotone_in_delay() {
        let (cfg, devs) = scenario();
        let table = LoadTable::build(&cfg, &devs, 1e-10).unwrap();
        let (lo, hi) = bounds_from_table(&cfg, &table);
        let mut seen_feasible = false;
        for i in 0..60 {
            let t = lo * 0.8 + (hi * 1.2 - lo * 0.8) * i as f64 / 59.0;
            let f = probe_optimal(&cfg, &table, t, false).unwrap().feasible();
            assert!(!seen_feasible || f, "T = {t}");
            seen_feasible |= f;
        }
        assert!(seen_feasible);
    }

    #[test]
    fn probe_sum_matches_full_solve() {
        let (cfg, devs) = scenario();
        let table = LoadTable::build(&cfg, &devs, 1e-10).unwrap();
        let (_, hi) = bounds_from_table(&cfg, &table);
        let outcome = probe_optimal(&cfg, &table, hi, false).unwrap();
        let (choice, sum) = outcome.best.unwrap();
        let crs: Vec<f64> = choice.iter().map(|&i| cfg.catalog[i].ratio).collect();
        let sol = solve_p4(&P4Instance::new(&cfg, &devs, crs, hi).unwrap()).unwrap();
        assert!(rel(sum, sol.sum_time_share) < 1e-12);
    }

    #[test]
    fn doubling_image_counts_doubles_delay() {
        let (cfg, devs) = scenario();
        let doubled: Vec<_> = devs.iter().map(|d| DeviceProfile { image_count: 2 * d.image_count, ..*d }).collect();
        let opts = SolverOptions::default();
        let a = solve_optimal(&cfg, &devs, &opts).unwrap();
        let b = solve_optimal(&cfg, &doubled, &opts).unwrap();
        assert_eq!(b.system_delay_s, 2.0 * a.system_delay_s);
        for (x, y) in a.allocation.rows.iter().zip(&b.allocation.rows) {
            assert_eq!(x.decision.cr, y.decision.cr);
            assert_eq!(x.decision.threshold, y.decision.threshold);
        }
    }

    #[test]
    fn iteration_cap_reports_trace() {
        let (cfg, devs) = scenario();
        let opts = SolverOptions { epsilon: 1e-9, max_outer_iters: 3, ..Default::default() };
        match solve_optimal(&cfg, &devs, &opts) {
            Err(PlanError::IterationCap { iterations: 3, trace }) => assert_eq!(trace.len(), 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn refuses_huge_search() {
        let cfg = SystemConfig::default();
        let devs = vec![device(2, 1.5, 30.0, 0.82); 14];
        assert!(matches!(
            solve_optimal(&cfg, &devs, &SolverOptions::default()),
            Err(PlanError::SearchSpaceTooLarge { .. })
        ));
        assert!(solve_heuristic(&cfg, &devs, &SolverOptions::default()).is_ok());
    }
}
