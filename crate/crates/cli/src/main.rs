//! `aoi`: analytic evaluation, simulation, exponent search, sweeps and 9-TDMA
//! validation. Results go out as CSV; diagnostics go to standard error.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 numeric failure.

mod config;

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aoi_core::analytic::{age_from_moments, phase_moments, AgeConvention, Phase};
use aoi_core::error::AoiError;
use aoi_core::geometry::{generate_network, validate_tdma_against_protocol, GridLevel, GridSpec, LinkPlacement};
use aoi_core::hierarchy::{
    alpha_f64, optimize_exponents, optimize_exponents_with, HierarchyConfig, LevelRates, OptimizeMode,
};
use aoi_core::sim::{run_experiment, trial_rng, ExperimentOptions, Variant, MIN_TRIALS};
use aoi_core::stats::fit_scaling_exponent;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use config::{RunArgs, Settings};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<AoiError> for CliError {
    fn from(e: AoiError) -> Self {
        match e {
            AoiError::Numeric(_) | AoiError::Moments { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "aoi", version, about = "Age of information under hierarchical cooperation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form average age and phase means per (n, h)
    Analytic(RunArgs),
    /// Monte Carlo age with analytic counterparts per (n, h)
    Simulate(RunArgs),
    /// Optimal exponent schedule per depth
    Optimize(OptimizeArgs),
    /// Fits ln(age / ln n) against ln n per depth
    Sweep(SweepArgs),
    /// Checks 9-TDMA slots against the protocol model
    ValidateTdma(TdmaArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Objective {
    /// Closed-form balance of innermost size against inter-cell MIMO
    Balance,
    /// Minimize the worst term over all levels
    MinMax,
}

#[derive(Debug, Args)]
struct OptimizeArgs {
    /// Hierarchy depths, comma separated
    #[arg(long, value_delimiter = ',', default_value = "1")]
    h: Vec<u32>,
    /// Network sizes for the predicted age (h <= 1)
    #[arg(long, value_delimiter = ',')]
    n: Vec<f64>,
    /// Objective for h >= 2; h <= 1 always uses a direct search
    #[arg(long, value_enum)]
    objective: Option<Objective>,
    #[arg(long, default_value_t = 1.0)]
    lambda0: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda1: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda2: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Source {
    Analytic,
    Simulate,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Where ages come from
    #[arg(long, value_enum, default_value = "analytic")]
    source: Source,
    /// Also write the per-point rows here
    #[arg(long)]
    points_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PlacementArg {
    WorstCase,
    Positions,
}

#[derive(Debug, Args)]
struct TdmaArgs {
    /// Cells per side
    #[arg(long)]
    grid: usize,
    /// Subcells per cell side
    #[arg(long, default_value_t = 1)]
    subcells: usize,
    #[arg(long, default_value_t = SQRT_2 - 1.0 - 1e-6)]
    gamma: f64,
    #[arg(long, value_enum, default_value = "worst-case")]
    placement: PlacementArg,
    /// Nodes placed for the positions mode (default: 4 per subcell)
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    area_side: f64,
    #[arg(long, env = "AOI_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write every violation here as CSV
    #[arg(long)]
    violations_out: Option<PathBuf>,
    /// Write the generated network here as CSV
    #[arg(long)]
    network_out: Option<PathBuf>,
}

fn open_out(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    match path {
        Some(p) => {
            let f = std::fs::File::create(p)
                .map_err(|e| CliError::Config(format!("cannot create {}: {e}", p.display())))?;
            Ok(Box::new(std::io::BufWriter::new(f)))
        }
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

/// Writes rows with a header; an empty table still gets its header.
fn write_rows<T: Serialize>(path: Option<&Path>, header: &[&str], rows: &[T]) -> CliResult<()> {
    let io_err = |e: csv::Error| CliError::Config(format!("write failed: {e}"));
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(open_out(path)?);
    w.write_record(header).map_err(io_err)?;
    for r in rows {
        w.serialize(r).map_err(io_err)?;
    }
    w.flush().map_err(|e| CliError::Config(format!("write failed: {e}")))
}

fn ensure_finite(values: &[f64], what: &str) -> CliResult<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(CliError::Numeric(format!("non-finite value in {what}")))
    }
}

#[derive(Debug, Clone, Serialize)]
struct AnalyticRow {
    n: f64,
    h: u32,
    a: Option<f64>,
    b: f64,
    age: f64,
    phase1_mean: f64,
    phase2_mean: f64,
    phase3_mean: f64,
    session_mean: f64,
    session_second_moment: f64,
}

const ANALYTIC_HEADER: &[&str] = &[
    "n",
    "h",
    "a",
    "b",
    "age",
    "phase1_mean",
    "phase2_mean",
    "phase3_mean",
    "session_mean",
    "session_second_moment",
];

fn analytic_row(cfg: &HierarchyConfig, settings: &Settings) -> CliResult<AnalyticRow> {
    let pm = phase_moments(cfg, settings.mode)?;
    let total = pm.total();
    let row = AnalyticRow {
        n: cfg.n(),
        h: cfg.h(),
        a: cfg.a(),
        b: cfg.b(),
        age: age_from_moments(&pm, AgeConvention::SessionEnd)?,
        phase1_mean: pm.phase(Phase::One).mean,
        phase2_mean: pm.phase(Phase::Two).mean,
        phase3_mean: pm.phase(Phase::Three).mean,
        session_mean: total.mean,
        session_second_moment: total.second_moment,
    };
    ensure_finite(
        &[
            row.age,
            row.phase1_mean,
            row.phase2_mean,
            row.phase3_mean,
            row.session_mean,
            row.session_second_moment,
        ],
        "analytic row",
    )?;
    Ok(row)
}

fn analytic_rows(settings: &Settings) -> CliResult<Vec<AnalyticRow>> {
    settings
        .points()?
        .par_iter()
        .map(|cfg| analytic_row(cfg, settings))
        .collect()
}

fn cmd_analytic(args: &RunArgs) -> CliResult<()> {
    let settings = Settings::resolve(args, &[1e6], MIN_TRIALS)?;
    let rows = analytic_rows(&settings)?;
    write_rows(settings.out.as_deref(), ANALYTIC_HEADER, &rows)
}

#[derive(Debug, Clone, Serialize)]
struct SimulateRow {
    n: f64,
    h: u32,
    a: Option<f64>,
    b: f64,
    variant: &'static str,
    trials: usize,
    seed: u64,
    cells: u64,
    nodes_per_cell: u64,
    nodes_per_subcell: Option<u64>,
    age: f64,
    age_ci_half_width: f64,
    phase1_mean: f64,
    phase1_std_err: f64,
    phase2_mean: f64,
    phase2_std_err: f64,
    phase3_mean: f64,
    phase3_std_err: f64,
    session_mean: f64,
    session_second_moment: f64,
    analytic_age: Option<f64>,
    analytic_phase1_mean: Option<f64>,
    analytic_phase2_mean: Option<f64>,
    analytic_phase3_mean: Option<f64>,
}

const SIMULATE_HEADER: &[&str] = &[
    "n",
    "h",
    "a",
    "b",
    "variant",
    "trials",
    "seed",
    "cells",
    "nodes_per_cell",
    "nodes_per_subcell",
    "age",
    "age_ci_half_width",
    "phase1_mean",
    "phase1_std_err",
    "phase2_mean",
    "phase2_std_err",
    "phase3_mean",
    "phase3_std_err",
    "session_mean",
    "session_second_moment",
    "analytic_age",
    "analytic_phase1_mean",
    "analytic_phase2_mean",
    "analytic_phase3_mean",
];

fn simulate_row(cfg: &HierarchyConfig, settings: &Settings) -> CliResult<SimulateRow> {
    let opts = ExperimentOptions::new(settings.trials, settings.seed).variant(settings.variant);
    let res = run_experiment(cfg, opts)?;
    // exact-mode closed forms on the same rounded counts
    let analytic = if cfg.h() <= 1 {
        Some(phase_moments(cfg, aoi_core::MomentMode::Exact)?)
    } else {
        None
    };
    let p = &res.phases;
    let row = SimulateRow {
        n: cfg.n(),
        h: cfg.h(),
        a: cfg.a(),
        b: cfg.b(),
        variant: match settings.variant {
            Variant::Exact => "exact",
            Variant::Bounded => "bounded",
        },
        trials: settings.trials,
        seed: settings.seed,
        cells: res.plan.cells(),
        nodes_per_cell: res.plan.nodes_per_cell(),
        nodes_per_subcell: (res.plan.depth() >= 1).then(|| res.plan.nodes_per_subcell()),
        age: res.age.mean_age,
        age_ci_half_width: res.age.half_width,
        phase1_mean: p.phase1.mean(),
        phase1_std_err: p.phase1.std_err(),
        phase2_mean: p.phase2.mean(),
        phase2_std_err: p.phase2.std_err(),
        phase3_mean: p.phase3.mean(),
        phase3_std_err: p.phase3.std_err(),
        session_mean: p.total.mean(),
        session_second_moment: p.total.second_moment(),
        analytic_age: analytic
            .as_ref()
            .map(|pm| age_from_moments(pm, AgeConvention::SessionEnd))
            .transpose()?,
        analytic_phase1_mean: analytic.as_ref().map(|pm| pm.phase(Phase::One).mean),
        analytic_phase2_mean: analytic.as_ref().map(|pm| pm.phase(Phase::Two).mean),
        analytic_phase3_mean: analytic.as_ref().map(|pm| pm.phase(Phase::Three).mean),
    };
    let mut values = vec![
        row.age,
        row.age_ci_half_width,
        row.session_mean,
        row.session_second_moment,
    ];
    values.extend([row.phase1_mean, row.phase2_mean, row.phase3_mean]);
    values.extend(row.analytic_age);
    ensure_finite(&values, "simulation row")?;
    Ok(row)
}

fn simulate_rows(settings: &Settings) -> CliResult<Vec<SimulateRow>> {
    if settings.trials < MIN_TRIALS {
        return Err(CliError::Config(format!(
            "need at least {MIN_TRIALS} trials, got {}",
            settings.trials
        )));
    }
    // trials inside each point already run on the pool
    settings
        .points()?
        .iter()
        .map(|cfg| simulate_row(cfg, settings))
        .collect()
}

fn cmd_simulate(args: &RunArgs) -> CliResult<()> {
    let settings = Settings::resolve(args, &[], 10_000)?;
    let rows = simulate_rows(&settings)?;
    write_rows(settings.out.as_deref(), SIMULATE_HEADER, &rows)
}

#[derive(Debug, Clone, Serialize)]
struct OptimizeRow {
    h: u32,
    objective: &'static str,
    a: Option<f64>,
    b: f64,
    schedule: String,
    exponent: f64,
    worst_term: f64,
    n: Option<f64>,
    predicted_age: Option<f64>,
}

const OPTIMIZE_HEADER: &[&str] = &[
    "h",
    "objective",
    "a",
    "b",
    "schedule",
    "exponent",
    "worst_term",
    "n",
    "predicted_age",
];

fn cmd_optimize(args: &OptimizeArgs) -> CliResult<()> {
    let rates = LevelRates::new(vec![args.lambda0, args.lambda1, args.lambda2])?;
    let ns: Vec<Option<f64>> = if args.n.is_empty() {
        vec![None]
    } else {
        args.n.iter().copied().map(Some).collect()
    };
    let mut rows = Vec::new();
    for &h in &args.h {
        for &n in &ns {
            let (opt, objective) = match (h, args.objective) {
                (0 | 1, _) | (_, None) => {
                    let name = if h <= 1 { "search" } else { "balance" };
                    (optimize_exponents(h, n, &rates)?, name)
                }
                (_, Some(Objective::Balance)) => {
                    (optimize_exponents_with(h, n, &rates, OptimizeMode::Balance)?, "balance")
                }
                (_, Some(Objective::MinMax)) => {
                    (optimize_exponents_with(h, n, &rates, OptimizeMode::MinMax)?, "min-max")
                }
            };
            let schedule = opt.schedule.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(";");
            ensure_finite(&opt.schedule, "exponent schedule")?;
            rows.push(OptimizeRow {
                h,
                objective,
                a: opt.a(),
                b: opt.b(),
                schedule,
                exponent: opt.exponent,
                worst_term: opt.worst_term,
                n,
                predicted_age: opt.predicted_age,
            });
        }
    }
    write_rows(args.out.as_deref(), OPTIMIZE_HEADER, &rows)
}

#[derive(Debug, Clone, Serialize)]
struct FitRow {
    h: u32,
    points: usize,
    n_min: f64,
    n_max: f64,
    slope: f64,
    intercept: f64,
    r_squared: f64,
    alpha: f64,
}

const FIT_HEADER: &[&str] = &[
    "h",
    "points",
    "n_min",
    "n_max",
    "slope",
    "intercept",
    "r_squared",
    "alpha",
];

fn fit_rows(points: impl Iterator<Item = (u32, f64, f64)>) -> CliResult<Vec<FitRow>> {
    let mut by_depth: BTreeMap<u32, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (h, n, age) in points {
        let e = by_depth.entry(h).or_default();
        e.0.push(n);
        e.1.push(age);
    }
    by_depth
        .into_iter()
        .map(|(h, (ns, ages))| {
            let fit = fit_scaling_exponent(&ns, &ages).map_err(|e| CliError::Config(format!("h = {h}: {e}")))?;
            Ok(FitRow {
                h,
                points: fit.points,
                n_min: ns.iter().copied().fold(f64::INFINITY, f64::min),
                n_max: ns.iter().copied().fold(0.0, f64::max),
                slope: fit.slope,
                intercept: fit.intercept,
                r_squared: fit.r_squared,
                alpha: alpha_f64(h)?,
            })
        })
        .collect()
}

const DECADES: [f64; 7] = [1e6, 1e7, 1e8, 1e9, 1e10, 1e11, 1e12];

fn cmd_sweep(args: &SweepArgs) -> CliResult<()> {
    let settings = Settings::resolve(&args.run, &DECADES, 1_000)?;
    let fits = match args.source {
        Source::Analytic => {
            let rows = analytic_rows(&settings)?;
            if let Some(p) = &args.points_out {
                write_rows(Some(p), ANALYTIC_HEADER, &rows)?;
            }
            fit_rows(rows.iter().map(|r| (r.h, r.n, r.age)))?
        }
        Source::Simulate => {
            let rows = simulate_rows(&settings)?;
            if let Some(p) = &args.points_out {
                write_rows(Some(p), SIMULATE_HEADER, &rows)?;
            }
            fit_rows(rows.iter().map(|r| (r.h, r.n, r.age)))?
        }
    };
    write_rows(settings.out.as_deref(), FIT_HEADER, &fits)
}

#[derive(Debug, Clone, Serialize)]
struct TdmaRow {
    grid: usize,
    subcells: usize,
    gamma: f64,
    placement: &'static str,
    links_checked: usize,
    cell_violations: usize,
    subcell_violations: usize,
    verdict: &'static str,
}

const TDMA_HEADER: &[&str] = &[
    "grid",
    "subcells",
    "gamma",
    "placement",
    "links_checked",
    "cell_violations",
    "subcell_violations",
    "verdict",
];

#[derive(Debug, Clone, Serialize)]
struct ViolationRow {
    level: &'static str,
    slot: usize,
    cell_row: usize,
    cell_col: usize,
    receiver_x: f64,
    receiver_y: f64,
    transmitter_x: f64,
    transmitter_y: f64,
    interferer_x: f64,
    interferer_y: f64,
    interferer_distance: f64,
    required: f64,
}

const VIOLATION_HEADER: &[&str] = &[
    "level",
    "slot",
    "cell_row",
    "cell_col",
    "receiver_x",
    "receiver_y",
    "transmitter_x",
    "transmitter_y",
    "interferer_x",
    "interferer_y",
    "interferer_distance",
    "required",
];

fn cmd_validate_tdma(args: &TdmaArgs) -> CliResult<()> {
    let grid = GridSpec::new(args.grid, args.subcells)?;
    let nodes = args.nodes.unwrap_or(4 * grid.fine_side() * grid.fine_side()).max(2);
    let net = generate_network(nodes, args.area_side, grid, &mut trial_rng(args.seed, 0))?;
    if let Some(p) = &args.network_out {
        let mut w = open_out(Some(p))?;
        net.write_csv(&mut w)
            .map_err(|e| CliError::Config(format!("write failed: {e}")))?;
    }
    let placement = match args.placement {
        PlacementArg::WorstCase => LinkPlacement::WorstCase,
        PlacementArg::Positions => LinkPlacement::Positions,
    };
    let verdict = validate_tdma_against_protocol(&net, args.gamma, placement)?;
    let level_name = |l: GridLevel| match l {
        GridLevel::Cell => "cell",
        GridLevel::Subcell => "subcell",
    };
    if !verdict.feasible() {
        eprintln!("{} protocol-model violations", verdict.violations.len());
        for v in verdict.violations.iter().take(5) {
            let vi = &v.violation;
            eprintln!(
                "  {} slot {} cell {:?}: interferer at {:.4} < required {:.4}",
                level_name(v.level),
                v.slot,
                v.cell,
                vi.interferer_distance,
                vi.required
            );
        }
    }
    if let Some(p) = &args.violations_out {
        let rows: Vec<ViolationRow> = verdict
            .violations
            .iter()
            .map(|v| {
                let vi = &v.violation;
                ViolationRow {
                    level: level_name(v.level),
                    slot: v.slot,
                    cell_row: v.cell.0,
                    cell_col: v.cell.1,
                    receiver_x: vi.link.receiver.x,
                    receiver_y: vi.link.receiver.y,
                    transmitter_x: vi.link.transmitter.x,
                    transmitter_y: vi.link.transmitter.y,
                    interferer_x: vi.interferer.x,
                    interferer_y: vi.interferer.y,
                    interferer_distance: vi.interferer_distance,
                    required: vi.required,
                }
            })
            .collect();
        write_rows(Some(p), VIOLATION_HEADER, &rows)?;
    }
    let row = TdmaRow {
        grid: args.grid,
        subcells: args.subcells,
        gamma: args.gamma,
        placement: match args.placement {
            PlacementArg::WorstCase => "worst-case",
            PlacementArg::Positions => "positions",
        },
        links_checked: verdict.links_checked,
        cell_violations: verdict.violations_at(GridLevel::Cell),
        subcell_violations: verdict.violations_at(GridLevel::Subcell),
        verdict: if verdict.feasible() { "PASS" } else { "FAIL" },
    };
    write_rows(args.out.as_deref(), TDMA_HEADER, &[row])
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Analytic(a) => cmd_analytic(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::ValidateTdma(a) => cmd_validate_tdma(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
