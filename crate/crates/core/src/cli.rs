//! Command-line front end. `run_cli` returns the process exit code: 0 on
//! success, 2 for usage errors, 1 for failures while running.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use crate::analysis::{
    check_crossing_bound, exit_probability_experiment, histogram_accumulate, l2_error, Histogram, SteadyStateOracle,
};
use crate::coeffs::CoefficientField;
use crate::engine::{run_ensemble, InitialDistribution, SimulationConfig, DEFAULT_MAX_SPLITS};
use crate::fvm::{fvm_run, fvm_stability_limit, fvm_steady_state, FvmGrid, FvmOptions, FvmRun, FvmState};
use crate::graph::{EdgeId, MetricGraph, VertexId, VertexKind};
use crate::grid::Grid;
use crate::io::{
    emit_bounce_csv, emit_crossing_report_csv, emit_density_csv, emit_exit_csv, emit_summary_csv, fmt_f64,
    parse_graph_file, Mode, RunManifest,
};

const DEFAULT_BINS: usize = 100;
const DEFAULT_CELLS: usize = 50;
const DEFAULT_TRUNCATION_TOL: f64 = 1e-8;
const STEADY_TOL: f64 = 1e-6;
const STEADY_MAX_STEPS: u64 = 100_000_000;

#[derive(Debug, Parser)]
#[command(
    name = "metgraph",
    version,
    about = "Diffusions on metric graphs: timestep-splitting Euler-Maruyama and a finite-volume baseline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Particle ensemble; writes density.csv, bounces.csv and summary.csv.
    Simulate(Flags),
    /// Finite-volume baseline; runs to steady state unless --steps is given.
    Fvm(Flags),
    /// Both methods on a star with an analytic steady state; bins = cells.
    Compare(Flags),
    /// Exit-edge frequencies after one step from a vertex, per dt.
    ExitProb(Flags),
    /// Crossing-count distribution against the tail bound.
    BounceStats(Flags),
    /// Parse and check a graph file.
    Validate(Flags),
    /// Dispatch on the `mode` field of --manifest.
    Run(Flags),
}

#[derive(Debug, Args, Clone, Default)]
struct Flags {
    /// Graph description file.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Timestep; a comma-separated list for exit-prob.
    #[arg(long, value_delimiter = ',')]
    dt: Option<Vec<f64>>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Histogram bins per edge.
    #[arg(long)]
    bins: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    /// Finite-volume cells per edge.
    #[arg(long)]
    cells: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run the finite-volume scheme past its stability limit.
    #[arg(long)]
    force: bool,
    /// TOML run manifest; flags override its fields.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Tail mass allowed beyond truncated semi-infinite edges.
    #[arg(long)]
    truncation_tol: Option<f64>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn settings(flags: &Flags) -> CliResult<RunManifest> {
    let mut base = RunManifest::default();
    if let Some(path) = &flags.manifest {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))
            .map_err(|e| usage(format!("{e:#}")))?;
        base = RunManifest::from_toml(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        // relative graph paths are relative to the manifest
        if let (Some(g), Some(dir)) = (&base.graph, path.parent()) {
            if g.is_relative() {
                base.graph = Some(dir.join(g));
            }
        }
    }
    let over = RunManifest {
        mode: None,
        graph: flags.graph.clone(),
        dt: flags.dt.clone(),
        steps: flags.steps,
        particles: flags.particles,
        seed: flags.seed,
        bins: flags.bins,
        workers: flags.workers,
        out: flags.out.clone(),
        cells: flags.cells,
        truncation_tol: flags.truncation_tol,
        force: flags.force.then_some(true),
    };
    let m = base.overlay(over);
    m.validate().map_err(|e| usage(e.to_string()))?;
    Ok(m)
}

fn need<T: Clone>(v: &Option<T>, name: &'static str) -> CliResult<T> {
    RunManifest::require(v, name).map_err(|e| usage(e.to_string()))
}

fn single_dt(m: &RunManifest) -> CliResult<Option<f64>> {
    m.single_dt().map_err(|e| usage(e.to_string()))
}

fn load_graph(m: &RunManifest) -> CliResult<(MetricGraph, CoefficientField)> {
    let path = need(&m.graph, "graph")?;
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    parse_graph_file(&text)
        .map_err(|e| anyhow!("{}: {e}", path.display()))
        .map_err(CliError::Runtime)
}

fn out_dir(m: &RunManifest) -> CliResult<PathBuf> {
    let dir = m.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn create(dir: &Path, name: &str) -> CliResult<BufWriter<File>> {
    let p = dir.join(name);
    Ok(BufWriter::new(
        File::create(&p).with_context(|| format!("creating {}", p.display()))?,
    ))
}

/// Star center, otherwise the first finite vertex of highest degree.
fn start_vertex(graph: &MetricGraph) -> VertexId {
    graph.star_center().unwrap_or_else(|| {
        graph
            .finite_vertices()
            .min_by_key(|&v| std::cmp::Reverse(graph.incidence(v).degree()))
            .expect("a built graph has a finite vertex with edges")
    })
}

fn oracle_for(graph: &MetricGraph, field: &CoefficientField) -> Option<SteadyStateOracle> {
    SteadyStateOracle::from_star(graph, field).ok()
}

fn simulate(m: &RunManifest, expect: Option<Mode>) -> CliResult<()> {
    let (graph, field) = load_graph(m)?;
    match expect {
        Some(Mode::EmStar) if !graph.is_star() => {
            return Err(anyhow!("mode em-star needs a star graph").into());
        }
        Some(Mode::EmGeneral) if !graph.all_edges_finite() => {
            return Err(anyhow!("mode em-general needs finite edges").into());
        }
        _ => {}
    }
    let dt = single_dt(m)?.ok_or_else(|| usage("missing required setting `dt`"))?;
    let steps = need(&m.steps, "steps")?;
    let particles = need(&m.particles, "particles")?;
    let seed = need(&m.seed, "seed")?;
    let bins = m.bins.unwrap_or(DEFAULT_BINS);
    let workers = m.workers.unwrap_or(0);
    let tol = m.truncation_tol.unwrap_or(DEFAULT_TRUNCATION_TOL);

    let config = SimulationConfig::new(dt, steps, particles, seed)
        .with_initial(InitialDistribution::AtVertex(start_vertex(&graph)))
        .with_workers(workers);
    let started = std::time::Instant::now();
    let result = run_ensemble(&graph, &field, &config).map_err(anyhow::Error::from)?;
    let elapsed = started.elapsed();

    let oracle = oracle_for(&graph, &field);
    let grid = Grid::for_graph(&graph, bins, |e| {
        Some(match &oracle {
            Some(o) => o.truncation_length(e, tol),
            None => result
                .states
                .iter()
                .filter(|s| s.edge == e)
                .map(|s| s.x)
                .fold(0.0, f64::max)
                .max(f64::MIN_POSITIVE * 1e10),
        })
    })
    .map_err(anyhow::Error::from)?;
    let hist = histogram_accumulate(&result.states, &grid).map_err(anyhow::Error::from)?;

    let dir = out_dir(m)?;
    emit_density_csv(&hist, Some(hist.total()), create(&dir, "density.csv")?).map_err(anyhow::Error::from)?;
    emit_bounce_csv(&result.stats, create(&dir, "bounces.csv")?).map_err(anyhow::Error::from)?;
    let mut summary = vec![
        ("dt", fmt_f64(dt)),
        ("steps", steps.to_string()),
        ("particles", particles.to_string()),
        ("seed", seed.to_string()),
        ("gamma", fmt_f64(result.stats.gamma)),
        ("vertex_steps", result.stats.vertex_steps().to_string()),
        ("total_crossings", result.stats.total_crossings().to_string()),
        ("truncations", result.stats.truncations.to_string()),
    ];
    if let Some(o) = &oracle {
        let err = l2_error(&hist, o).map_err(anyhow::Error::from)?;
        summary.push(("l2_error_vs_oracle", fmt_f64(err)));
        println!("L2 error vs steady state: {err:.6}");
    }
    emit_summary_csv(&summary, create(&dir, "summary.csv")?).map_err(anyhow::Error::from)?;
    println!(
        "simulated {particles} particles x {steps} steps in {:.2}s; {} truncated steps; wrote {}",
        elapsed.as_secs_f64(),
        result.stats.truncations,
        dir.display()
    );
    Ok(())
}

fn fvm_grid(graph: &MetricGraph, field: &CoefficientField, cells: usize, tol: f64) -> CliResult<FvmGrid> {
    let oracle = oracle_for(graph, field);
    if !graph.all_edges_finite() && oracle.is_none() {
        return Err(anyhow!(
            "semi-infinite edges can only be truncated for stars with a linear or quadratic potential"
        )
        .into());
    }
    Ok(
        FvmGrid::uniform(graph, cells, |e| oracle.as_ref().map(|o| o.truncation_length(e, tol)))
            .map_err(anyhow::Error::from)?,
    )
}

fn solve_fvm(
    graph: &MetricGraph,
    field: &CoefficientField,
    grid: &FvmGrid,
    dt: Option<f64>,
    steps: Option<u64>,
    force: bool,
) -> CliResult<(FvmRun, f64)> {
    let limit = fvm_stability_limit(graph, field, grid).map_err(anyhow::Error::from)?;
    let dt = dt.unwrap_or(0.9 * limit);
    let init = FvmState::uniform(grid);
    let run = match steps {
        Some(n) => fvm_run(graph, field, grid, dt, n, init, FvmOptions { force }),
        None if force => fvm_run(graph, field, grid, dt, STEADY_MAX_STEPS, init, FvmOptions { force }),
        None => fvm_steady_state(graph, field, grid, dt, STEADY_TOL, STEADY_MAX_STEPS, init),
    }
    .map_err(anyhow::Error::from)?;
    Ok((run, dt))
}

fn fvm(m: &RunManifest) -> CliResult<()> {
    let (graph, field) = load_graph(m)?;
    let cells = m.cells.unwrap_or(DEFAULT_CELLS);
    let grid = fvm_grid(
        &graph,
        &field,
        cells,
        m.truncation_tol.unwrap_or(DEFAULT_TRUNCATION_TOL),
    )?;
    let (run, dt) = solve_fvm(&graph, &field, &grid, single_dt(m)?, m.steps, m.force.unwrap_or(false))?;
    let dir = out_dir(m)?;
    emit_density_csv(&run.state, None, create(&dir, "density.csv")?).map_err(anyhow::Error::from)?;
    let mut summary = vec![
        ("dt", fmt_f64(dt)),
        ("cells", cells.to_string()),
        ("steps", run.steps.to_string()),
        ("t", fmt_f64(run.state.t)),
        ("max_cfl", fmt_f64(run.max_cfl)),
        ("mass", fmt_f64(run.state.mass())),
    ];
    if let Some(o) = oracle_for(&graph, &field) {
        let err = l2_error(&run.state, &o).map_err(anyhow::Error::from)?;
        summary.push(("l2_error_vs_oracle", fmt_f64(err)));
        println!("L2 error vs steady state: {err:.6}");
    }
    emit_summary_csv(&summary, create(&dir, "summary.csv")?).map_err(anyhow::Error::from)?;
    println!(
        "finite-volume run: {} steps, max CFL {:.4}; wrote {}",
        run.steps,
        run.max_cfl,
        dir.display()
    );
    Ok(())
}

fn compare(m: &RunManifest) -> CliResult<()> {
    let (graph, field) = load_graph(m)?;
    let oracle = oracle_for(&graph, &field)
        .ok_or_else(|| anyhow!("compare needs a star with a linear or quadratic potential"))?;
    let particles = need(&m.particles, "particles")?;
    let seed = need(&m.seed, "seed")?;
    let steps = need(&m.steps, "steps")?;
    let cells = m.cells.unwrap_or(DEFAULT_CELLS);
    let tol = m.truncation_tol.unwrap_or(DEFAULT_TRUNCATION_TOL);
    let grid = fvm_grid(&graph, &field, cells, tol)?;
    let (run, fvm_dt) = solve_fvm(&graph, &field, &grid, None, None, false)?;
    let em_dt = single_dt(m)?.unwrap_or(fvm_dt);

    let config = SimulationConfig::new(em_dt, steps, particles, seed)
        .with_initial(InitialDistribution::AtVertex(start_vertex(&graph)))
        .with_workers(m.workers.unwrap_or(0));
    let result = run_ensemble(&graph, &field, &config).map_err(anyhow::Error::from)?;
    let hist: Histogram = histogram_accumulate(&result.states, grid.grid()).map_err(anyhow::Error::from)?;

    let em_err = l2_error(&hist, &oracle).map_err(anyhow::Error::from)?;
    let fvm_err = l2_error(&run.state, &oracle).map_err(anyhow::Error::from)?;
    let dir = out_dir(m)?;
    emit_density_csv(&hist, Some(hist.total()), create(&dir, "density_em.csv")?).map_err(anyhow::Error::from)?;
    emit_density_csv(&run.state, None, create(&dir, "density_fvm.csv")?).map_err(anyhow::Error::from)?;
    let mut w = csv::Writer::from_writer(create(&dir, "error_table.csv")?);
    let table = (|| -> Result<(), csv::Error> {
        w.write_record(["method", "cells", "dt", "steps", "l2_error"])?;
        w.write_record([
            "em",
            &cells.to_string(),
            &fmt_f64(em_dt),
            &steps.to_string(),
            &fmt_f64(em_err),
        ])?;
        w.write_record([
            "fvm",
            &cells.to_string(),
            &fmt_f64(fvm_dt),
            &run.steps.to_string(),
            &fmt_f64(fvm_err),
        ])?;
        w.flush()?;
        Ok(())
    })();
    table.context("writing error_table.csv")?;
    println!(
        "L2 error: em {em_err:.6}, fvm {fvm_err:.6} ({cells} cells per edge); wrote {}",
        dir.display()
    );
    Ok(())
}

fn exit_prob(m: &RunManifest) -> CliResult<()> {
    let (graph, field) = load_graph(m)?;
    let dts = need(&m.dt, "dt")?;
    let trials = need(&m.particles, "particles")?;
    let seed = need(&m.seed, "seed")?;
    let v = start_vertex(&graph);
    let report = exit_probability_experiment(&graph, &field, v, &dts, trials, seed, m.workers.unwrap_or(0))
        .map_err(anyhow::Error::from)?;
    let dir = out_dir(m)?;
    emit_exit_csv(&report, create(&dir, "exit_prob.csv")?).map_err(anyhow::Error::from)?;
    for row in &report.rows {
        println!(
            "dt {:.3e}: max |freq - b| = {:.5}, max z = {:.2}",
            row.dt, row.max_deviation, row.max_z
        );
    }
    println!(
        "max deviation nonincreasing as dt shrinks: {}",
        report.deviation_nonincreasing()
    );
    Ok(())
}

fn bounce_stats(m: &RunManifest) -> CliResult<()> {
    let (graph, field) = load_graph(m)?;
    let dt = single_dt(m)?.ok_or_else(|| usage("missing required setting `dt`"))?;
    let particles = need(&m.particles, "particles")?;
    let seed = need(&m.seed, "seed")?;
    let steps = m.steps.unwrap_or(1);
    let v = start_vertex(&graph);
    let config = SimulationConfig::new(dt, steps, particles, seed)
        .with_initial(InitialDistribution::AtVertex(v))
        .with_workers(m.workers.unwrap_or(0));
    let result = run_ensemble(&graph, &field, &config).map_err(anyhow::Error::from)?;
    let gamma = result.stats.gamma;
    // exact χ² law needs the same μ²/σ² on every edge at the vertex
    let inc = graph.incidence(v);
    let ratios: Vec<f64> = inc
        .edges
        .iter()
        .zip(&inc.orientations)
        .map(|(&e, &o)| {
            let (mu, s) = field.at_end(&graph, e, o);
            (mu / s).powi(2)
        })
        .collect();
    let homogeneous = ratios
        .iter()
        .all(|r| (r - ratios[0]).abs() <= 1e-12 * ratios[0].max(1.0))
        && graph.finite_vertices().count() == 1;
    let k_max = ((2.0 * gamma.ceil()) as usize + 10).min(DEFAULT_MAX_SPLITS as usize);
    let report = check_crossing_bound(&result.stats, gamma, k_max, homogeneous).map_err(anyhow::Error::from)?;
    let dir = out_dir(m)?;
    emit_bounce_csv(&result.stats, create(&dir, "bounces.csv")?).map_err(anyhow::Error::from)?;
    emit_crossing_report_csv(&report, create(&dir, "bounce_report.csv")?).map_err(anyhow::Error::from)?;
    println!(
        "gamma {gamma:.4}: {} vertex steps, {} bound violations, {} chi-square mismatches; wrote {}",
        report.trials,
        report.violations().count(),
        report.chi2_mismatches().count(),
        dir.display()
    );
    Ok(())
}

fn validate(m: &RunManifest) -> CliResult<()> {
    let (graph, field) = load_graph(m)?;
    let finite = (0..graph.vertex_count())
        .filter(|&v| graph.vertex_kind(VertexId(v)) == VertexKind::Finite)
        .count();
    let semi_infinite = (0..graph.edge_count())
        .filter(|&e| !graph.edge(EdgeId(e)).is_finite())
        .count();
    println!(
        "ok: {} edges ({semi_infinite} semi-infinite), {finite} finite vertices, star: {}, analytic steady state: {}",
        graph.edge_count(),
        graph.is_star(),
        oracle_for(&graph, &field).is_some()
    );
    Ok(())
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Simulate(f) => simulate(&settings(&f)?, None),
        Command::Fvm(f) => fvm(&settings(&f)?),
        Command::Compare(f) => compare(&settings(&f)?),
        Command::ExitProb(f) => exit_prob(&settings(&f)?),
        Command::BounceStats(f) => bounce_stats(&settings(&f)?),
        Command::Validate(f) => validate(&settings(&f)?),
        Command::Run(f) => {
            if f.manifest.is_none() {
                return Err(usage("run needs --manifest"));
            }
            let m = settings(&f)?;
            match need(&m.mode, "mode")? {
                mode @ (Mode::EmStar | Mode::EmGeneral) => simulate(&m, Some(mode)),
                Mode::Fvm => fvm(&m),
                Mode::Compare => compare(&m),
                Mode::ExitProb => exit_prob(&m),
                Mode::BounceStats => bounce_stats(&m),
            }
        }
    }
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
