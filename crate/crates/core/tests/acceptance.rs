//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `METGRAPH_ACCEPTANCE=quick` shrinks the particle counts and horizons for
//! development; thresholds stay the same, so quick-mode failures on the
//! statistical criteria are expected. `METGRAPH_ACCEPTANCE_ONLY=5,6` selects
//! criteria. The process exits nonzero on a failure only when
//! `METGRAPH_ACCEPTANCE_STRICT=1`, so hardware-bound failures do not stop the
//! remaining test targets.

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use metgraph::analysis::{
    check_crossing_bound, exit_probability_experiment, histogram_accumulate, l2_error, l2_error_against, Histogram,
    SteadyStateOracle,
};
use metgraph::coeffs::{CoefficientField, DriftSpec};
use metgraph::engine::{run_ensemble, solve_alpha, EnsembleResult, InitialDistribution, SimulationConfig};
use metgraph::fvm::{fvm_run, fvm_stability_limit, fvm_steady_state, FvmError, FvmGrid, FvmOptions, FvmState};
use metgraph::graph::{MetricGraph, VertexId};
use metgraph::grid::Grid;
use metgraph::io::{emit_density_csv, parse_graph_file};

const STAR_LINEAR: &str = include_str!("../fixtures/star5_linear.graph");
const STAR_QUADRATIC: &str = include_str!("../fixtures/star5_quadratic.graph");
const CYCLE3: &str = include_str!("../fixtures/cycle3.graph");
const PATH3: &str = include_str!("../fixtures/path3.graph");
const SEGMENT: &str = include_str!("../fixtures/segment.graph");

const TRUNCATION_TOL: f64 = 1e-8;

struct Scale {
    quick: bool,
}

impl Scale {
    /// `full` normally, `quick` in development mode.
    fn pick<T>(&self, full: T, quick: T) -> T {
        if self.quick {
            quick
        } else {
            full
        }
    }
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn load(text: &str) -> (MetricGraph, CoefficientField) {
    parse_graph_file(text).expect("fixture parses")
}

fn center(g: &MetricGraph) -> VertexId {
    g.star_center().expect("star fixture")
}

fn ensemble(g: &MetricGraph, f: &CoefficientField, cfg: &SimulationConfig) -> EnsembleResult {
    run_ensemble(g, f, cfg).expect("ensemble runs")
}

/// First sign change of `a s² + b s + c` on `[0, 1]` by bisection on the
/// monotone pieces either side of the turning point.
fn bisect_first_root(a: f64, b: f64, c: f64) -> Option<f64> {
    let f = |s: f64| a * s * s + b * s + c;
    let mut knots = vec![0.0];
    if a != 0.0 {
        let turn = -b / (2.0 * a);
        if turn > 0.0 && turn < 1.0 {
            knots.push(turn);
        }
    }
    knots.push(1.0);
    for w in knots.windows(2) {
        let (mut lo, mut hi) = (w[0], w[1]);
        if f(lo) == 0.0 {
            return Some(lo);
        }
        if f(lo) > 0.0 && f(hi) <= 0.0 {
            while hi - lo > 1e-15 {
                let mid = 0.5 * (lo + hi);
                if f(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Some(0.5 * (lo + hi));
        }
    }
    None
}

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn c1_alpha(_s: &Scale) -> Outcome {
    const N: usize = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(0xa1fa);
    let mut triples = Vec::with_capacity(N);
    while triples.len() < N {
        // a mix of scales, with some exact zeros in drift and distance
        let mag = 10f64.powf(-3.0 + 5.0 * unit(&mut rng));
        let a = if rng.next_u32() % 16 == 0 {
            0.0
        } else {
            (2.0 * unit(&mut rng) - 1.0) * mag
        };
        let b = (2.0 * unit(&mut rng) - 1.0) * mag;
        let c = if rng.next_u32() % 64 == 0 {
            0.0
        } else {
            unit(&mut rng) * mag
        };
        if a + b + c < 0.0 {
            triples.push((a, b, c));
        }
    }
    let start = Instant::now();
    let alphas: Vec<_> = triples.iter().map(|&(a, b, c)| solve_alpha(a, b, c)).collect();
    let elapsed = start.elapsed();
    let (mut worst_ds, mut worst_res, mut errors) = (0.0f64, 0.0f64, 0usize);
    for (&(a, b, c), alpha) in triples.iter().zip(&alphas) {
        let Ok(alpha) = alpha else {
            errors += 1;
            continue;
        };
        let s = alpha.sqrt();
        let scale = a.abs().max(b.abs()).max(c).max(1.0);
        worst_res = worst_res.max((a * s * s + b * s + c).abs() / scale);
        match bisect_first_root(a, b, c) {
            Some(o) => worst_ds = worst_ds.max((s - o).abs()),
            None => errors += 1,
        }
    }
    outcome(
        errors == 0 && worst_ds < 1e-9 && worst_res < 1e-6 && elapsed < Duration::from_secs(5),
        format!(
            "{N} triples, max |Δs| {worst_ds:.2e}, max scaled residual {worst_res:.2e}, {errors} errors, solve time {:.3}s",
            elapsed.as_secs_f64()
        ),
    )
}

/// Homogeneous 5-edge star with drift `−μ`, `σ = 1`, started at the vertex
/// for a single step of `dt`.
fn crossing_run(mu: f64, dt: f64, trials: usize, seed: u64, workers: usize) -> EnsembleResult {
    let g = MetricGraph::star(5, None).expect("star");
    let f = CoefficientField::uniform(&g, DriftSpec::Constant(-mu), 1.0).expect("field");
    let cfg = SimulationConfig::new(dt, 1, trials, seed)
        .with_initial(InitialDistribution::AtVertex(center(&g)))
        .with_workers(workers);
    ensemble(&g, &f, &cfg)
}

fn c2_chi_square(s: &Scale) -> Outcome {
    let trials = s.pick(1_000_000, 200_000);
    let start = Instant::now();
    let run = crossing_run(50.0, 1e-3, trials, 2, 1);
    let elapsed = start.elapsed();
    let gamma = run.stats.gamma;
    let report = check_crossing_bound(&run.stats, gamma, 10, true).expect("stats");
    let worst = report
        .rows
        .iter()
        .map(|r| {
            let q = r.chi2_tail.expect("homogeneous");
            (r.empirical - q).abs() / (q * (1.0 - q) / report.trials as f64).sqrt()
        })
        .fold(0.0, f64::max);
    let mismatches = report.chi2_mismatches().count();
    outcome(
        (gamma - 2.5).abs() < 1e-12 && mismatches == 0 && elapsed < Duration::from_secs(120),
        format!(
            "γ = {gamma}, {} vertex steps, k = 1..10 worst deviation {worst:.2} SE, {mismatches} rows beyond 3 SE, {:.1}s on 1 worker",
            report.trials,
            elapsed.as_secs_f64()
        ),
    )
}

fn c3_bound(s: &Scale) -> Outcome {
    let trials = s.pick(1_000_000, 200_000);
    let mut pass = true;
    let mut parts = Vec::new();
    // μ = sqrt(γ / dt) at dt = 1e-3, σ = 1
    for (i, gamma) in [0.0, 0.5, 2.5, 10.0].into_iter().enumerate() {
        let mu = (gamma / 1e-3f64).sqrt();
        let run = crossing_run(mu, 1e-3, trials, 30 + i as u64, 0);
        let k_max = (3.0 * gamma) as usize + 20;
        let report = check_crossing_bound(&run.stats, run.stats.gamma, k_max, false).expect("stats");
        let tested = report.rows.iter().filter(|r| r.bound.is_some()).count();
        let violations = report.violations().count();
        // strict comparison, no standard-error slack
        let strict = report
            .rows
            .iter()
            .filter(|r| r.bound.is_some_and(|b| r.empirical < b))
            .count();
        pass &= violations == 0 && strict == 0 && tested > 0;
        parts.push(format!("γ={gamma}: {tested} k tested, {strict} below bound"));
    }
    outcome(pass, parts.join("; "))
}

fn c4_exit(s: &Scale) -> Outcome {
    let (g, f) = load(STAR_LINEAR);
    let trials = s.pick(1_000_000, 100_000);
    let report =
        exit_probability_experiment(&g, &f, center(&g), &[1e-2, 1e-3, 1e-4], trials, 4, 0).expect("experiment");
    let last = report.rows.iter().find(|r| r.dt == 1e-4).expect("dt 1e-4 row");
    let devs: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("dt {:.0e}: {:.5} ({:.1} SE)", r.dt, r.max_deviation, r.max_z))
        .collect();
    let mono = report.deviation_nonincreasing();
    outcome(
        mono && last.max_z < 4.0,
        format!("{trials} trials per dt; {}; nonincreasing: {mono}", devs.join(", ")),
    )
}

fn steady_state_accuracy(s: &Scale, text: &str, seed: u64, time_limit: Option<Duration>) -> Outcome {
    let (g, f) = load(text);
    let oracle = SteadyStateOracle::from_star(&g, &f).expect("analytic star");
    let particles = s.pick(1_000_000, 200_000);
    let horizon: f64 = s.pick(10.0, 0.5);
    let bins = s.pick(200, 50);
    let dt = 1e-4;
    let steps = (horizon / dt).round() as u64;
    let cfg = SimulationConfig::new(dt, steps, particles, seed)
        .with_initial(InitialDistribution::AtVertex(center(&g)))
        .with_workers(8);
    let start = Instant::now();
    let run = ensemble(&g, &f, &cfg);
    let elapsed = start.elapsed();
    let grid = Grid::for_graph(&g, bins, |e| Some(oracle.truncation_length(e, TRUNCATION_TOL))).expect("grid");
    let hist = histogram_accumulate(&run.states, &grid).expect("histogram");
    let err = l2_error(&hist, &oracle).expect("l2");
    let in_time = time_limit.is_none_or(|t| elapsed < t);
    outcome(
        err < 0.05 && in_time,
        format!(
            "{particles} particles, dt {dt}, T = {horizon}, {bins} bins: L2 {err:.4}, {:.0}s wall on 8 workers over {} core(s), {} truncated steps",
            elapsed.as_secs_f64(),
            cores(),
            run.stats.truncations
        ),
    )
}

fn cores() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn c5_linear(s: &Scale) -> Outcome {
    steady_state_accuracy(s, STAR_LINEAR, 5, Some(Duration::from_secs(600)))
}

fn c6_quadratic(s: &Scale) -> Outcome {
    steady_state_accuracy(s, STAR_QUADRATIC, 6, None)
}

/// EM and FVM on the same 25-cell grid at the FVM's own stable timestep.
fn matched_errors(text: &str, horizon: f64, particles: usize, seed: u64) -> (f64, f64, f64) {
    let (g, f) = load(text);
    let oracle = SteadyStateOracle::from_star(&g, &f).expect("analytic star");
    let grid = FvmGrid::uniform(&g, 25, |e| Some(oracle.truncation_length(e, TRUNCATION_TOL))).expect("grid");
    let dt = 0.9 * fvm_stability_limit(&g, &f, &grid).expect("limit");
    let fvm = fvm_steady_state(&g, &f, &grid, dt, 1e-7, 100_000_000, FvmState::uniform(&grid)).expect("fvm");
    let cfg = SimulationConfig::new(dt, (horizon / dt).ceil() as u64, particles, seed)
        .with_initial(InitialDistribution::AtVertex(center(&g)));
    let run = ensemble(&g, &f, &cfg);
    let hist = histogram_accumulate(&run.states, grid.grid()).expect("histogram");
    (
        dt,
        l2_error(&hist, &oracle).expect("l2"),
        l2_error(&fvm.state, &oracle).expect("l2"),
    )
}

fn c7_em_vs_fvm(s: &Scale) -> Outcome {
    let (dl, em_l, fvm_l) = matched_errors(STAR_LINEAR, 0.2, s.pick(50_000, 20_000), 71);
    let (dq, em_q, fvm_q) = matched_errors(STAR_QUADRATIC, 1.0, s.pick(100_000, 20_000), 72);
    outcome(
        em_l < fvm_l && em_q < fvm_q,
        format!(
            "25 cells = 25 bins; linear dt {dl:.2e}: EM {em_l:.4} vs FVM {fvm_l:.4}; quadratic dt {dq:.2e}: EM {em_q:.4} vs FVM {fvm_q:.4}"
        ),
    )
}

fn c8_fvm(_s: &Scale) -> Outcome {
    // conservation, one step at a time on closed graphs
    let mut worst_drift = 0.0f64;
    for text in [CYCLE3, PATH3] {
        let (g, f) = load(text);
        let grid = FvmGrid::uniform(&g, 40, |_| None).expect("grid");
        let dt = 0.9 * fvm_stability_limit(&g, &f, &grid).expect("limit");
        let mut state = FvmState::point_mass(&grid, metgraph::graph::EdgeId(0), 3);
        for _ in 0..2000 {
            let before = state.mass();
            state = fvm_run(&g, &f, &grid, dt, 1, state, FvmOptions::default())
                .expect("stable")
                .state;
            worst_drift = worst_drift.max((state.mass() - before).abs() / before);
        }
    }
    // refinement 100 → 200 cells per edge
    let mut ratios = Vec::new();
    for text in [STAR_LINEAR, STAR_QUADRATIC] {
        let (g, f) = load(text);
        let oracle = SteadyStateOracle::from_star(&g, &f).expect("analytic star");
        let err = |cells| {
            let grid =
                FvmGrid::uniform(&g, cells, |e| Some(oracle.truncation_length(e, TRUNCATION_TOL))).expect("grid");
            let dt = 0.9 * fvm_stability_limit(&g, &f, &grid).expect("limit");
            let run = fvm_steady_state(&g, &f, &grid, dt, 1e-7, 100_000_000, FvmState::uniform(&grid)).expect("fvm");
            l2_error(&run.state, &oracle).expect("l2")
        };
        ratios.push(err(100) / err(200));
    }
    let ratios_ok = ratios.iter().all(|r| (1.7..=2.3).contains(r));
    outcome(
        worst_drift <= 1e-12 && ratios_ok,
        format!(
            "max relative mass drift per step {worst_drift:.2e}; error ratio 100→200 cells: linear {:.3}, quadratic {:.3}",
            ratios[0], ratios[1]
        ),
    )
}

fn c9_stability(s: &Scale) -> Outcome {
    let (g, f) = load(CYCLE3);
    let grid = FvmGrid::uniform(&g, 50, |_| None).expect("grid");
    let limit = fvm_stability_limit(&g, &f, &grid).expect("limit");
    let dt = 10.0 * limit;
    let init = || FvmState::uniform(&grid);
    let plain = fvm_run(&g, &f, &grid, dt, 100, init(), FvmOptions::default());
    let forced = fvm_run(&g, &f, &grid, dt, 100, init(), FvmOptions { force: true });
    let fvm_fails = matches!(plain, Err(FvmError::UnstableTimestep { .. }))
        && matches!(forced, Err(FvmError::NegativeDensity { .. }));

    let particles = s.pick(200_000, 50_000);
    let steps = (5.0 / dt).ceil() as u64;
    let cfg = SimulationConfig::new(dt, steps, particles, 9).with_initial(InitialDistribution::AtVertex(VertexId(0)));
    let run = ensemble(&g, &f, &cfg);
    let hist: Histogram = histogram_accumulate(&run.states, grid.grid()).expect("histogram");
    // uniform 1/3 is stationary: equal weights, equal drift, continuous flux.
    // "Bounded" means within 20% of the stationary density's own L2 norm.
    let norm = (3.0f64 / 9.0).sqrt();
    let rel = l2_error_against(&hist, |_, _| 1.0 / 3.0) / norm;
    let em_ok = run.stats.truncations == 0 && rel < 0.2;
    outcome(
        fvm_fails && em_ok,
        format!(
            "dt {dt:.3e} = 10 × FVM limit: fvm {}, forced {}; EM {} steps, {} truncations, relative L2 vs uniform {rel:.4}",
            describe(&plain),
            describe(&forced),
            steps,
            run.stats.truncations
        ),
    )
}

fn describe<T>(r: &Result<T, FvmError>) -> String {
    match r {
        Ok(_) => "completed".into(),
        Err(FvmError::UnstableTimestep { .. }) => "UnstableTimestep".into(),
        Err(FvmError::NegativeDensity { step, .. }) => format!("NegativeDensity at step {step}"),
        Err(e) => e.to_string(),
    }
}

fn density_csv(g: &MetricGraph, run: &EnsembleResult, bins: usize, trunc: impl Fn(usize) -> f64) -> Vec<u8> {
    let grid = Grid::for_graph(g, bins, |e| Some(trunc(e.0))).expect("grid");
    let hist = histogram_accumulate(&run.states, &grid).expect("histogram");
    let mut buf = Vec::new();
    emit_density_csv(&hist, Some(hist.total()), &mut buf).expect("csv");
    buf
}

fn c10_determinism(s: &Scale) -> Outcome {
    let mut identical = true;
    let mut parts = Vec::new();
    for (name, text) in [("linear star", STAR_LINEAR), ("path", PATH3)] {
        let (g, f) = load(text);
        let start = g.star_center().unwrap_or(VertexId(1));
        let cfg = |workers| {
            SimulationConfig::new(1e-4, s.pick(500, 100), 20_000, 10)
                .with_initial(InitialDistribution::AtVertex(start))
                .with_workers(workers)
        };
        let one = ensemble(&g, &f, &cfg(1));
        let eight = ensemble(&g, &f, &cfg(8));
        let same = density_csv(&g, &one, 64, |_| 0.5) == density_csv(&g, &eight, 64, |_| 0.5)
            && one.stats == eight.stats
            && one
                .states
                .iter()
                .zip(&eight.states)
                .all(|(a, b)| a.edge == b.edge && a.x.to_bits() == b.x.to_bits());
        identical &= same;
        parts.push(format!("{name}: {}", if same { "bit-identical" } else { "DIFFERENT" }));
    }
    outcome(
        identical,
        format!("1 vs 8 workers, 20000 particles; {}", parts.join(", ")),
    )
}

fn c11_reflected(s: &Scale) -> Outcome {
    let (g, f) = load(SEGMENT);
    let particles = s.pick(1_000_000, 100_000);
    let dt = 1e-3;
    let steps = 2000;
    let cfg = SimulationConfig::new(dt, steps, particles, 11).with_initial(InitialDistribution::AtVertex(VertexId(0)));
    let run = ensemble(&g, &f, &cfg);
    let grid = Grid::for_graph(&g, 64, |_| None).expect("grid");
    let hist = histogram_accumulate(&run.states, &grid).expect("histogram");
    let err = l2_error_against(&hist, |_, _| 1.0);
    outcome(
        err < 0.02,
        format!(
            "{particles} particles from one end, T = {}, 64 bins: L2 vs uniform {err:.4}",
            dt * steps as f64
        ),
    )
}

fn c12_scaling(s: &Scale) -> Outcome {
    let (g, f) = load(STAR_LINEAR);
    let particles = 1_000_000;
    let steps = s.pick(100, 10);
    let rate = |workers| {
        let cfg = SimulationConfig::new(1e-4, steps, particles, 12)
            .with_initial(InitialDistribution::AtVertex(center(&g)))
            .with_workers(workers);
        let start = Instant::now();
        ensemble(&g, &f, &cfg);
        (particles as u64 * steps) as f64 / start.elapsed().as_secs_f64()
    };
    let r1 = rate(1);
    let r8 = rate(8);
    let speedup = r8 / r1;
    outcome(
        speedup >= 3.0,
        format!(
            "{:.3e} particle-steps/s on 1 worker, {:.3e} on 8; speedup {speedup:.2} with {} core(s) available",
            r1,
            r8,
            cores()
        ),
    )
}

type Criterion = (u32, &'static str, fn(&Scale) -> Outcome);

const CRITERIA: [Criterion; 12] = [
    (1, "alpha solver matches bisection", c1_alpha),
    (2, "chi-square law of vertex crossings", c2_chi_square),
    (3, "crossing tail bound holds", c3_bound),
    (4, "exit frequencies converge to jump weights", c4_exit),
    (5, "steady state, linear potential", c5_linear),
    (6, "steady state, quadratic potential", c6_quadratic),
    (7, "EM beats FVM at matched discretization", c7_em_vs_fvm),
    (8, "FVM conservation and first-order convergence", c8_fvm),
    (9, "EM stable beyond the FVM limit", c9_stability),
    (10, "determinism across worker counts", c10_determinism),
    (11, "reflected Brownian motion is uniform", c11_reflected),
    (12, "parallel scaling from 1 to 8 workers", c12_scaling),
];

fn main() {
    let quick = std::env::var("METGRAPH_ACCEPTANCE").is_ok_and(|v| v == "quick");
    let strict = std::env::var("METGRAPH_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let only: Option<Vec<u32>> = std::env::var("METGRAPH_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let scale = Scale { quick };
    println!(
        "acceptance ({} scale, {} core(s))",
        if quick { "quick" } else { "full" },
        cores()
    );
    let mut failed = 0;
    let mut ran = 0;
    for (id, title, run) in CRITERIA {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(|| run(&scale))).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.pass {
            failed += 1;
        }
        println!(
            "C{id:<2} {} {title}: {} [{:.1}s]",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {}/{ran} PASS", ran - failed);
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
