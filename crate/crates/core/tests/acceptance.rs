//! Acceptance criteria. Runs without the libtest harness so that every
//! criterion prints one PASS/FAIL line; exits nonzero if any fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use blockrisk::analytic::{AnalyticEngine, AnalyticOptions, TimeGrid};
use blockrisk::cli::{self, Command, EngineChoice, Overrides};
use blockrisk::dists::{gamma_sum_cdf, GammaSumSeriesParams};
use blockrisk::econ::{self, EconSpec, Engine, RateExpr};
use blockrisk::montecarlo;
use blockrisk::{AttackMode, BlockchainSpec, DistributionSpec};

type Check = std::result::Result<(), String>;

// Tolerances.
const RACE_P_TOL: f64 = 1e-9;
const RACE_ET_TOL: f64 = 1e-6;
const CONDITIONAL_MEAN_TOL: f64 = 1e-6;
const ERLANG_TOL: f64 = 1e-8;
const CONVOLUTION_TOL: f64 = 1e-6;
const SURVIVAL_ABS_TOL: f64 = 0.02;
const SIGMAS: f64 = 3.0;
const MONOTONE_SLACK: f64 = 1e-9;
const POISSON_REL_TOL: f64 = 1e-2;

const MC_REPS: u64 = 30_000;
const LARGE_REPS: u64 = 100_000;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: std::result::Result<T, E>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn exp(rate: f64) -> DistributionSpec {
    DistributionSpec::exponential(rate).unwrap()
}

fn gamma(shape: f64, rate: f64) -> DistributionSpec {
    DistributionSpec::gamma(shape, rate).unwrap()
}

fn weibull(scale: f64, shape: f64) -> DistributionSpec {
    DistributionSpec::weibull(scale, shape).unwrap()
}

fn canonical(m: u32, k: usize) -> BlockchainSpec {
    BlockchainSpec::homogeneous(m, k, exp(1.0), exp(1.0), exp(1.0)).unwrap()
}

fn engine(spec: &BlockchainSpec) -> std::result::Result<AnalyticEngine, String> {
    ok(AnalyticEngine::new(spec, AnalyticOptions::default()))
}

/// Five configurations covering exponential, gamma and Weibull-detect
/// families, both attack modes, and k > 1.
fn survey() -> Vec<(&'static str, BlockchainSpec)> {
    vec![
        ("exp race", canonical(1, 1)),
        ("exp m=3 k=2", BlockchainSpec::homogeneous(3, 2, exp(1.0), exp(0.5), exp(2.0)).unwrap()),
        ("gamma n=3", BlockchainSpec::from_nodes(3, AttackMode::Destructive, vec![gamma(2.0, 3.0); 3], gamma(2.0, 1.0), exp(1.0)).unwrap()),
        (
            "gamma+weibull mixed",
            BlockchainSpec::with_quorum(3, vec![gamma(1.5, 2.0), gamma(3.0, 4.0)], weibull(2.0, 1.5), gamma(2.0, 4.0)).unwrap(),
        ),
        (
            "ransom n=3",
            BlockchainSpec::from_nodes(3, AttackMode::Ransom, vec![gamma(0.8, 1.5); 2], weibull(1.0, 2.0), exp(3.0)).unwrap(),
        ),
    ]
}

fn erlang_cdf(k: u32, rate: f64, t: f64) -> f64 {
    let x = rate * t;
    let mut term = 1.0;
    let mut sum = 1.0;
    for j in 1..k {
        term *= x / j as f64;
        sum += term;
    }
    1.0 - (-x).exp() * sum
}

fn c1_closed_form_race() -> Check {
    let spec = canonical(1, 1);
    let a = engine(&spec)?;
    let et = ok(a.mean_functional_time())?;
    ensure!((a.p_mk() - 0.5).abs() <= RACE_P_TOL, "p_mk = {}", a.p_mk());
    ensure!((et - 2.0).abs() <= RACE_ET_TOL, "E[T] = {et}");
    let p = ok(montecarlo::estimate_cycle_hack_prob(&spec, MC_REPS, 0))?;
    let t = ok(montecarlo::estimate_mean_functional_time(&spec, MC_REPS, 0))?;
    ensure!(p.within_sigmas(0.5, SIGMAS), "MC p = {} ± {}", p.mean, p.stderr);
    ensure!(t.within_sigmas(2.0, SIGMAS), "MC E[T] = {} ± {}", t.mean, t.stderr);
    Ok(())
}

fn c2_multi_hacker() -> Check {
    let a = engine(&canonical(1, 3))?;
    let tail = ok(a.conditional_hack_mean())?;
    ensure!((a.p_mk() - 0.75).abs() <= RACE_P_TOL, "p_mk = {}", a.p_mk());
    ensure!((tail - 0.25).abs() <= CONDITIONAL_MEAN_TOL, "E[Z | Z < Y] = {tail}");
    Ok(())
}

/// ∫_0^t f₁(s) F₂(t − s) ds by the trapezoid rule, with f₁ the Gamma(5/2, 1)
/// density and F₂ the Erlang(3, 5/2) CDF.
fn convolution_oracle(t: f64) -> f64 {
    let f1 = |s: f64| s.powf(1.5) * (-s).exp() / (0.75 * PI.sqrt());
    let n = ((t / 1e-4).ceil() as usize).max(1);
    let h = t / n as f64;
    let g = |s: f64| f1(s) * erlang_cdf(3, 2.5, t - s);
    let inner: f64 = (1..n).map(|i| g(i as f64 * h)).sum();
    h * (inner + 0.5 * (g(0.0) + g(t)))
}

fn c3_gamma_sum_series() -> Check {
    let grid: Vec<f64> = (1..=50).map(|i| 0.2 * i as f64).collect();
    let equal = GammaSumSeriesParams::new(2.0, 1.5, 3.0, 1.5);
    for &t in &grid {
        let v = ok(gamma_sum_cdf(&equal, t))?;
        let want = erlang_cdf(5, 1.5, t);
        ensure!((v - want).abs() <= ERLANG_TOL, "equal rates at t={t}: {v} vs {want}");
    }
    let unequal = GammaSumSeriesParams::new(2.5, 1.0, 3.0, 2.5);
    for &t in &grid {
        let v = ok(gamma_sum_cdf(&unequal, t))?;
        let want = convolution_oracle(t);
        ensure!((v - want).abs() <= CONVOLUTION_TOL, "unequal rates at t={t}: {v} vs {want}");
    }
    Ok(())
}

fn c4_cross_engine_survival() -> Check {
    for (name, spec) in survey() {
        let a = engine(&spec)?;
        let horizon = 3.0 * ok(a.mean_functional_time())?;
        let ts: Vec<f64> = (1..=64).map(|i| horizon * i as f64 / 64.0).collect();
        let exact = ok(a.instantaneous_prob(&ts))?;
        let mc = ok(montecarlo::estimate_survival_curve(&spec, &ts, MC_REPS, 0))?;
        let mut worst = 0.0f64;
        for ((t, p), e) in ts.iter().zip(&exact).zip(&mc) {
            let gap = (p - e.mean).abs();
            ensure!(
                gap <= SURVIVAL_ABS_TOL.max(SIGMAS * e.stderr),
                "{name} at t={t}: analytic {p} vs MC {} ± {}",
                e.mean,
                e.stderr
            );
            worst = worst.max(gap);
        }
        println!("    {name}: sup gap {worst:.4}");
    }
    Ok(())
}

struct Point {
    mean_time: f64,
    probs: Vec<f64>,
}

fn evaluate(spec: &BlockchainSpec, ts: &[f64]) -> std::result::Result<Point, String> {
    let a = engine(spec)?;
    Ok(Point { mean_time: ok(a.mean_functional_time())?, probs: ok(a.instantaneous_prob(ts))? })
}

/// `direction` +1: E[T] strictly increasing and P nondecreasing; −1: the
/// reverse.
fn check_monotone(label: &str, points: &[Point], direction: f64) -> Check {
    for (i, w) in points.windows(2).enumerate() {
        let step = direction * (w[1].mean_time - w[0].mean_time);
        ensure!(step > 0.0, "{label}: E[T] not strictly monotone at index {}: {} then {}", i + 1, w[0].mean_time, w[1].mean_time);
        for (j, (p0, p1)) in w[0].probs.iter().zip(&w[1].probs).enumerate() {
            ensure!(direction * (p1 - p0) >= -MONOTONE_SLACK, "{label}: P at t #{j} not monotone at index {}: {p0} then {p1}", i + 1);
        }
    }
    Ok(())
}

fn families() -> Vec<(&'static str, DistributionSpec, DistributionSpec, DistributionSpec)> {
    vec![
        ("exponential", exp(1.0), exp(1.0), exp(1.0)),
        ("gamma/weibull", gamma(2.0, 1.5), weibull(2.0, 1.5), gamma(2.0, 2.0)),
    ]
}

fn c5_increasing_in_m() -> Check {
    let ts = [1.0, 3.0];
    for (family, h, y, w) in families() {
        for k in [1, 5] {
            let points = (1..=12)
                .map(|m| evaluate(&BlockchainSpec::homogeneous(m, k, h, y, w).unwrap(), &ts))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            check_monotone(&format!("{family} k={k}"), &points, 1.0)?;
        }
    }
    Ok(())
}

fn c6_decreasing_in_k() -> Check {
    let ts = [1.0, 3.0];
    for (family, h, y, w) in families() {
        for m in [2, 5] {
            let points = (1..=6)
                .map(|k| evaluate(&BlockchainSpec::homogeneous(m, k, h, y, w).unwrap(), &ts))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            check_monotone(&format!("{family} m={m}"), &points, -1.0)?;
        }
    }
    Ok(())
}

fn c7_large_quorum_trend() -> Check {
    let mut reached = None;
    for m in 1..=40 {
        let p = ok(engine(&canonical(m, 5))?.instantaneous_prob(&[3.0]))?[0];
        if p >= 0.99 {
            reached = Some((m, p));
            break;
        }
    }
    let (m, p) = reached.ok_or("P_m5(3) stays below 0.99 for m <= 40")?;
    let e1 = ok(engine(&canonical(1, 5))?.mean_functional_time())?;
    let e20 = ok(engine(&canonical(20, 5))?.mean_functional_time())?;
    ensure!(e20 >= 10.0 * e1, "E[T_20] / E[T_1] = {}", e20 / e1);
    println!("    P_m5(3) = {p:.4} first at m={m}; E[T_20] / E[T_1] = {:.3e}", e20 / e1);
    Ok(())
}

fn grid_value(grid: &TimeGrid, values: &[f64], t: f64) -> f64 {
    values[(t / grid.step).round() as usize]
}

fn c8_renewal_solver() -> Check {
    for (name, spec) in survey() {
        let a = engine(&spec)?;
        let grid = ok(a.grid_for(3.0 * ok(a.mean_functional_time())?))?;
        let r = ok(a.renewal_function(&grid))?;
        ensure!(r.residual() <= r.discretization_tolerance(), "{name}: residual {} > {}", r.residual(), r.discretization_tolerance());
    }

    // (Y | Y < Z) + W ~ Exp(2) + Exp(1) in the race, so G(t) = 2t/3 − 2(1 − e^{−3t})/9.
    let grid = TimeGrid::new(8.0 / 4096.0, 4096).unwrap();
    let race = engine(&canonical(1, 1))?;
    let r = ok(race.renewal_function(&grid))?;
    for (i, t) in grid.points().enumerate() {
        let want = 2.0 * t / 3.0 - 2.0 * (1.0 - (-3.0 * t).exp()) / 9.0;
        ensure!((r.g[i] - want).abs() <= r.discretization_tolerance(), "race G({t}) = {} vs {want}", r.g[i]);
    }

    let ts: Vec<f64> = (1..=8).map(f64::from).collect();
    for (name, spec) in [("exp race", canonical(1, 1)), survey().swap_remove(2)] {
        let r = ok(engine(&spec)?.renewal_function(&grid))?;
        let conditional = ok(montecarlo::estimate_conditional_renewal_counts(&spec, &ts, LARGE_REPS, 0))?;
        let completed = ok(montecarlo::estimate_completed_cycles(&spec, &ts, LARGE_REPS, 0))?;
        for ((&t, g), u) in ts.iter().zip(&conditional).zip(&completed) {
            let gv = grid_value(&grid, &r.g, t);
            let uv = grid_value(&grid, &r.killed, t);
            ensure!(g.within_sigmas(gv, SIGMAS), "{name}: G({t}) = {gv} vs MC {} ± {}", g.mean, g.stderr);
            ensure!(u.within_sigmas(uv, SIGMAS), "{name}: U({t}) = {uv} vs MC {} ± {}", u.mean, u.stderr);
        }
    }

    // Hackers essentially never win and re-setting is instantaneous: the
    // detections form a Poisson process of rate 2.
    let poisson = BlockchainSpec::homogeneous(1, 1, exp(1e-12), exp(2.0), exp(1e6)).unwrap();
    let r = ok(engine(&poisson)?.renewal_function(&grid))?;
    for &t in &ts {
        let g = grid_value(&grid, &r.g, t);
        ensure!((g / (2.0 * t) - 1.0).abs() <= POISSON_REL_TOL, "Poisson G({t}) = {g}");
    }
    Ok(())
}

fn c9_wald() -> Check {
    for (name, spec) in [("exp race", canonical(1, 1)), survey().swap_remove(3)] {
        let w = ok(montecarlo::wald_decomposition(&spec, LARGE_REPS, 0))?;
        ensure!(w.z_score().abs() <= SIGMAS, "{name}: lhs {} ± {} vs rhs {} ± {}", w.lhs.mean, w.lhs.stderr, w.rhs, w.rhs_stderr);
        println!("    {name}: z = {:.3}", w.z_score());
    }
    Ok(())
}

const ECON_CONFIG: &str = "\
[model]
m = 1
hackers = 5 x exp(1)
detect = exp(1)
reset = exp(1)

[econ]
revenue = 0.2, 1, 0
reset_cost = 2, 0.2, 0

[sweep]
m = 1..40
";

fn exported_argmax(table: &cli::Table) -> std::result::Result<(u32, u32), String> {
    let mut best: Option<(u32, f64)> = None;
    let mut flagged = None;
    for row in &table.rows {
        let m: u32 = ok(row[0].parse())?;
        let v: f64 = ok(row[1].parse())?;
        if best.map_or(true, |(_, b)| v > b) {
            best = Some((m, v));
        }
        if row.last().map(String::as_str) == Some("max") {
            flagged = Some(m);
        }
    }
    Ok((best.ok_or("empty curve")?.0, flagged.ok_or("no row flagged max")?))
}

fn c10_economics() -> Check {
    let cfg = ok(cli::parse_config(ECON_CONFIG))?;
    let out = ok(cli::evaluate(Command::Optimize, &cfg, EngineChoice::Analytic))?;
    let (argmax, flagged) = exported_argmax(&out.table)?;
    ensure!(argmax == flagged, "flagged m={flagged} but the exported curve peaks at m={argmax}");

    let econ_spec = cfg.econ.unwrap();
    let base = ok(cfg.spec())?;
    let ms: Vec<u32> = (1..=40).collect();
    let engine = Engine::Analytic(AnalyticOptions::default());
    let best = ok(econ::optimize_m(&base, &econ_spec, &ms, &engine))?;
    ensure!(best.m == argmax, "optimizer m*={} vs CLI m*={argmax}", best.m);
    for factor in [0.01, 7.5] {
        let scaled: EconSpec = econ_spec.scaled(factor);
        let s = ok(econ::optimize_m(&base, &scaled, &ms, &engine))?;
        ensure!(s.m == best.m, "scaling by {factor} moved m* from {} to {}", best.m, s.m);
    }
    let with_run_cost = EconSpec { run_cost: RateExpr::new(0.05, 1.0, 0.0), ..econ_spec };
    let (a, b) = (
        ok(econ::optimize_m(&base, &with_run_cost, &ms, &engine))?.m,
        ok(econ::optimize_m(&base, &with_run_cost.scaled(3.0), &ms, &engine))?.m,
    );
    ensure!(a == b, "scaling with a running cost moved m* from {a} to {b}");
    println!("    m* = {} with ENR {:.4}", best.m, best.value);
    Ok(())
}

const VALIDATE_CONFIG: &str = "\
[model]
m = 1
hacker = exp(1)
detect = exp(1)
reset = exp(1)
";

fn c11_determinism() -> Check {
    let dir = ok(tempfile::tempdir())?;
    let mut bodies = Vec::new();
    for (run, threads) in [1usize, 4, 4].into_iter().enumerate() {
        let pool = ok(rayon::ThreadPoolBuilder::new().num_threads(threads).build())?;
        let path = dir.path().join(format!("validate{run}.csv"));
        let result = pool.install(|| cli::run(Command::Validate, VALIDATE_CONFIG, Overrides::default(), EngineChoice::Both, &path));
        ensure!(cli::exit_code(&result) == 0, "validate exit code {}: {:?}", cli::exit_code(&result), result.err());
        bodies.push(ok(std::fs::read(&path))?);
    }
    ensure!(bodies.windows(2).all(|w| w[0] == w[1]), "CSV bodies differ between runs");
    Ok(())
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Check); 11] = [
        ("closed-form race", Duration::from_secs(5), c1_closed_form_race),
        ("multi-hacker closed form", Duration::from_secs(5), c2_multi_hacker),
        ("gamma-sum series equivalence", Duration::from_secs(10), c3_gamma_sum_series),
        ("cross-engine survival", Duration::from_secs(180), c4_cross_engine_survival),
        ("increasing in m", Duration::from_secs(120), c5_increasing_in_m),
        ("decreasing in k", Duration::from_secs(120), c6_decreasing_in_k),
        ("large-quorum trend", Duration::from_secs(120), c7_large_quorum_trend),
        ("renewal solver", Duration::from_secs(60), c8_renewal_solver),
        ("Wald decomposition", Duration::from_secs(30), c9_wald),
        ("economics optimizer", Duration::from_secs(60), c10_economics),
        ("determinism", Duration::from_secs(60), c11_determinism),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let verdict = match result {
            Ok(()) if elapsed <= *budget => Ok(()),
            Ok(()) => Err(format!("took {elapsed:.1?}, budget {budget:?}")),
            Err(e) => Err(e),
        };
        match verdict {
            Ok(()) => println!("criterion {:>2} PASS  {name} ({elapsed:.2?})", i + 1),
            Err(e) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} ({elapsed:.2?}): {e}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
