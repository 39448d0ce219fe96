use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use jscc_latency::channel_sim::{validate_allocation, write_trace_csv, SimOptions, DELAY_CHECK_SLOTS};
use jscc_latency::experiments::{
    load_config, parse_suite, run_acceptance, run_figure, AcceptanceOptions, Figure, FigureJob, LoadedConfig,
    DEFAULT_SEED,
};
use jscc_latency::model::fit_logistic;
use jscc_latency::planner::{solve, verify_report, PlanReport, SolverOptions, Strategy};
use jscc_latency::DeviceProfile;
use serde::Deserialize;

/// Latency-minimizing compression, channel and compute allocation for
/// multi-device JSCC uplinks.
#[derive(Debug, Parser)]
#[command(name = "jscc-plan", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON deployment file; defaults to the reference deployment.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed of the device draw, overriding the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Relative tolerance of the delay bisection.
    #[arg(long, global = true, default_value_t = 1e-3)]
    epsilon: f64,
    /// Relative tolerance of the threshold search.
    #[arg(long, global = true, default_value_t = 1e-10)]
    epsilon2: f64,
    /// Worker threads; 1 also turns off parallel tuple enumeration.
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    /// Directory for figure and trace outputs.
    #[arg(long, global = true, default_value = "results")]
    out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one deployment and print the plan report as JSON.
    Plan {
        #[arg(long, default_value = "OPT")]
        strategy: Strategy,
        /// Device count, overriding the config file.
        #[arg(long)]
        k: Option<usize>,
        /// Write the report here instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Delay against the number of devices.
    Fig3(FigureArgs),
    /// Delay against the edge CPU budget.
    Fig4(FigureArgs),
    /// Edge CPU shares against the first device's local CPU.
    Fig5(FigureArgs),
    /// Check a saved plan against a Monte Carlo simulation of the uplink.
    Simulate {
        /// Plan report written by `plan`.
        #[arg(long)]
        report: PathBuf,
        /// Device count used when the plan was made.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = DELAY_CHECK_SLOTS)]
        slots: u64,
        /// Seed of the fading draws.
        #[arg(long, default_value_t = 0)]
        sim_seed: u64,
        /// Also write per-slot traces, one CSV per device, into the output directory.
        #[arg(long)]
        trace: bool,
    },
    /// Run the acceptance suite; exits nonzero when a criterion fails.
    Accept {
        /// `all` or a comma list of criterion ids or names.
        #[arg(long, default_value = "all")]
        suite: String,
        /// Also write the JSON report here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Fit logistic SSIM parameters to a CSV with columns `snr_db,ssim`.
    Fit {
        input: PathBuf,
    },
}

#[derive(Debug, Args)]
struct FigureArgs {
    /// Device counts for fig3 (`2..8` or `2,4,6`); device count for fig4 and fig5.
    #[arg(long)]
    k: Option<String>,
    /// Sweep values: edge CPU in percent of a core for fig4, GHz for fig5.
    #[arg(long, value_delimiter = ',')]
    sweep: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma list of strategies.
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<Strategy>>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let common = &cli.common;
    if let Some(n) = common.parallelism {
        if n == 0 {
            bail!("--parallelism must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("cannot size the thread pool")?;
    }
    match &cli.command {
        Command::Plan { strategy, k, output } => plan(common, *strategy, *k, output.as_deref()),
        Command::Fig3(args) => figure(common, Figure::Fig3, args),
        Command::Fig4(args) => figure(common, Figure::Fig4, args),
        Command::Fig5(args) => figure(common, Figure::Fig5, args),
        Command::Simulate { report, k, slots, sim_seed, trace } => {
            simulate(common, report, *k, *slots, *sim_seed, *trace)
        }
        Command::Accept { suite, json } => accept(common, suite, json.as_deref()),
        Command::Fit { input } => fit(input),
    }
}

fn solver(common: &Common) -> SolverOptions {
    SolverOptions {
        epsilon: common.epsilon,
        epsilon2: common.epsilon2,
        parallel: common.parallelism != Some(1),
        ..SolverOptions::default()
    }
}

fn loaded(common: &Common, k: Option<usize>) -> Result<LoadedConfig> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path).with_context(|| format!("invalid config {}", path.display()))?,
        None => LoadedConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.scenario.seed = seed;
    }
    if let Some(k) = k {
        if cfg.devices.is_some() {
            bail!("--k cannot be combined with explicit devices in the config file");
        }
        cfg.scenario.num_devices = k;
    }
    cfg.scenario.validate()?;
    Ok(cfg)
}

fn deployment(common: &Common, k: Option<usize>) -> Result<(LoadedConfig, Vec<DeviceProfile>)> {
    let cfg = loaded(common, k)?;
    let devices = cfg.devices()?;
    Ok((cfg, devices))
}

fn plan(common: &Common, strategy: Strategy, k: Option<usize>, output: Option<&Path>) -> Result<ExitCode> {
    let (cfg, devices) = deployment(common, k)?;
    let report = solve(strategy, cfg.system(), &devices, &solver(common))?;
    if report.is_solved() {
        let verdict = verify_report(cfg.system(), &devices, &report);
        if !verdict.passed() {
            bail!("plan failed verification: {:?}", verdict.failures().collect::<Vec<_>>());
        }
    }
    let json = serde_json::to_string_pretty(&report)?;
    match output {
        Some(path) => fs::write(path, json + "\n").with_context(|| format!("cannot write {}", path.display()))?,
        None => println!("{json}"),
    }
    Ok(if report.is_solved() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn parse_counts(text: &str) -> Result<Vec<f64>> {
    let text = text.trim();
    let values: Vec<usize> = if let Some((a, b)) = text.split_once("..") {
        let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().trim_start_matches('=').parse()?);
        if a > b {
            bail!("empty device range {text}");
        }
        (a..=b).collect()
    } else {
        text.split(',').map(|s| s.trim().parse()).collect::<Result<_, _>>()?
    };
    Ok(values.into_iter().map(|v| v as f64).collect())
}

fn figure(common: &Common, figure: Figure, args: &FigureArgs) -> Result<ExitCode> {
    let cfg = loaded(common, None)?;
    if cfg.devices.is_some() {
        bail!("figure sweeps draw their own devices; remove `devices` from the config");
    }
    let mut job = FigureJob::new(figure);
    job.scenario = cfg.scenario;
    job.seed = common.seed.unwrap_or(job.seed);
    job.solver = solver(common);
    if let Some(k) = &args.k {
        let counts = parse_counts(k).with_context(|| format!("invalid --k `{k}`"))?;
        match figure {
            Figure::Fig3 => job.sweep = counts,
            _ => match counts.as_slice() {
                [n] => job.num_devices = *n as usize,
                _ => bail!("--k takes a single device count for {figure}"),
            },
        }
    }
    if let Some(sweep) = &args.sweep {
        if figure == Figure::Fig3 {
            bail!("fig3 sweeps device counts; use --k");
        }
        job.sweep = sweep.clone();
    }
    if let Some(trials) = args.trials {
        job.trials = trials;
    }
    if let Some(strategies) = &args.strategies {
        job.strategies = strategies.clone();
    }
    let out = run_figure(&job)?;
    let (csv, svg) = out.write_to(&common.out_dir)?;
    println!("wrote {} and {}", csv.display(), svg.display());
    for c in &out.checks {
        println!("{} {}{}", if c.passed { "ok  " } else { "FAIL" }, c.name, detail(&c.detail));
    }
    Ok(if out.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn detail(text: &str) -> String {
    if text.is_empty() {
        String::new()
    } else {
        format!(": {text}")
    }
}

fn simulate(common: &Common, report: &Path, k: Option<usize>, slots: u64, seed: u64, trace: bool) -> Result<ExitCode> {
    let text = fs::read_to_string(report).with_context(|| format!("cannot read {}", report.display()))?;
    let report: PlanReport = serde_json::from_str(&text).context("not a plan report")?;
    if !report.is_solved() {
        bail!("the plan report has no allocation: {:?}", report.status);
    }
    // a drawn deployment defaults to the size of the saved plan
    let explicit = loaded(common, None)?.devices.is_some();
    let k = if explicit { k } else { k.or(Some(report.allocation.rows.len())) };
    let (cfg, devices) = deployment(common, k)?;
    let opts = SimOptions { num_slots: slots, seed, trace, ..SimOptions::default() };
    let check = validate_allocation(cfg.system(), &devices, &report.allocation, &opts)?;
    println!("{}", serde_json::to_string_pretty(&check.devices.iter().map(|d| {
        serde_json::json!({
            "device": d.device,
            "active_ratio": d.stats.active_ratio.mean,
            "tx_delay_s": d.stats.tx_delay_s.mean,
            "tx_delay_stderr_s": d.stats.tx_delay_s.stderr,
            "analytic_tx_delay_s": d.analytic_tx_delay_s,
            "rel_error": d.rel_error,
            "passed": d.passed,
        })
    }).collect::<Vec<_>>())?);
    if trace {
        fs::create_dir_all(&common.out_dir)?;
        for d in &check.devices {
            let path = common.out_dir.join(format!("trace_device{}.csv", d.device + 1));
            let file = fs::File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
            write_trace_csv(std::io::BufWriter::new(file), d.stats.trace.as_deref().unwrap_or_default())?;
        }
    }
    Ok(if check.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn accept(common: &Common, suite: &str, json: Option<&Path>) -> Result<ExitCode> {
    let ids = parse_suite(suite).map_err(|e| anyhow!(e))?;
    let opts = AcceptanceOptions { seed: common.seed.unwrap_or(DEFAULT_SEED), ..AcceptanceOptions::default() };
    let report = run_acceptance(&ids, &opts);
    let mut stdout = std::io::stdout().lock();
    for line in report.lines() {
        writeln!(stdout, "{line}")?;
    }
    if let Some(path) = json {
        fs::write(path, report.to_json() + "\n").with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

#[derive(Debug, Deserialize)]
struct Sample {
    snr_db: f64,
    ssim: f64,
}

fn fit(input: &Path) -> Result<ExitCode> {
    let mut reader = csv::Reader::from_path(input).with_context(|| format!("cannot read {}", input.display()))?;
    let samples = reader
        .deserialize::<Sample>()
        .enumerate()
        .map(|(i, row)| row.map(|s| (s.snr_db, s.ssim)).with_context(|| format!("row {}", i + 1)))
        .collect::<Result<Vec<_>>>()?;
    let params = fit_logistic(&samples)?;
    println!("{}", serde_json::to_string_pretty(&params)?);
    Ok(ExitCode::SUCCESS)
}
