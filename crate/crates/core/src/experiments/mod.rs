//! Scenario generation, config files, figure sweeps and the acceptance runner.

mod acceptance;
mod config_file;
mod figures;
mod scenario;
mod svg;

pub use acceptance::{
    parse_suite, run_acceptance, run_criterion, AcceptanceOptions, AcceptanceReport, CriterionResult, E1Fn, Hooks,
    Measurement, P4Fn, Relation, CRITERIA, DEFAULT_SEED, FIT_NOISE_STD, FIT_TRUTH,
};
pub use config_file::{load_config, parse_config, parse_edge_cpu_percent, ConfigError, LoadedConfig};
pub use figures::{
    run_fig3, run_fig4, run_fig5, run_figure, CurvePoint, Figure, FigureError, FigureJob, FigureOutput, TrendCheck,
    DOMINANCE_TOL, FIG5_IMAGES, FIG5_PEER_CPU_HZ, HEU_GAP,
};
pub use scenario::{generate_scenario, trial_seed, Range, ScenarioSpec};
pub use svg::{line_chart, Series};
