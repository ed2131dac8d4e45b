use std::path::Path;

use crate::analytic::AnalyticEngine;
use crate::econ::{self, Engine};
use crate::model::BlockchainSpec;
use crate::montecarlo::{self, EstimateWithError, ReplicationOutcome};
use crate::{Error, Result};

use super::config::RunConfig;
use super::EngineChoice;

/// Rows with |z| above this fail validation.
pub const VALIDATE_Z_LIMIT: f64 = 4.0;

/// Default prob-curve grid: this many cells up to a multiple of E[T].
const CURVE_POINTS: usize = 64;
const CURVE_SPAN: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn header(first: &str, stem: &str, engine: EngineChoice) -> Vec<String> {
    let mut h = vec![first.to_string()];
    if engine.analytic() {
        h.push(format!("analytic_{stem}"));
    }
    if engine.mc() {
        h.push(format!("mc_{stem}"));
        h.push("mc_stderr".to_string());
    }
    h
}

fn row(first: String, analytic: Option<f64>, mc: Option<&EstimateWithError>) -> Vec<String> {
    let mut r = vec![first];
    if let Some(a) = analytic {
        r.push(a.to_string());
    }
    if let Some(e) = mc {
        r.push(e.mean.to_string());
        r.push(e.stderr.to_string());
    }
    r
}

fn replicate(cfg: &RunConfig, spec: &BlockchainSpec, seed: u64) -> Result<Vec<ReplicationOutcome>> {
    if cfg.mc.reps < 2 {
        return Err(Error::Config("mc reps must be at least 2".into()));
    }
    montecarlo::replicate(spec, cfg.mc.reps, seed, cfg.mc.cycle_cap)
}

fn analytic(cfg: &RunConfig, spec: &BlockchainSpec) -> Result<AnalyticEngine> {
    AnalyticEngine::new(spec, cfg.analytic)
}

fn with_m(spec: &BlockchainSpec) -> impl Fn(Error) -> Error + '_ {
    move |e| Error::at(format!("m={}, k={}", spec.m(), spec.k()), e)
}

pub fn p_mk(cfg: &RunConfig, engine: EngineChoice) -> Result<Table> {
    let spec = cfg.spec()?;
    let mut t = Table::new(&["m", "k"]);
    t.header.extend(header("", "p", engine).into_iter().skip(1));
    let a = if engine.analytic() { Some(analytic(cfg, &spec).map_err(with_m(&spec))?.p_mk()) } else { None };
    let mc = if engine.mc() {
        Some(montecarlo::estimate_cycle_hack_prob(&spec, cfg.mc.reps, cfg.mc.seed).map_err(with_m(&spec))?)
    } else {
        None
    };
    let mut r = vec![spec.m().to_string()];
    r.extend(row(spec.k().to_string(), a, mc.as_ref()));
    t.rows.push(r);
    Ok(t)
}

fn mean_time_point(cfg: &RunConfig, spec: &BlockchainSpec, engine: EngineChoice, seed: u64) -> Result<(Option<f64>, Option<EstimateWithError>)> {
    let run = || -> Result<_> {
        let a = if engine.analytic() { Some(analytic(cfg, spec)?.mean_functional_time()?) } else { None };
        let mc = if engine.mc() {
            Some(montecarlo::mean_functional_time_from(&replicate(cfg, spec, seed)?, seed))
        } else {
            None
        };
        Ok((a, mc))
    };
    run().map_err(with_m(spec))
}

pub fn mean_time(cfg: &RunConfig, engine: EngineChoice) -> Result<Table> {
    let spec = cfg.spec()?;
    let (a, mc) = mean_time_point(cfg, &spec, engine, cfg.mc.seed)?;
    let mut t = Table::new(&["m"]);
    t.header.extend(header("k", "ET", engine));
    let mut r = vec![spec.m().to_string()];
    r.extend(row(spec.k().to_string(), a, mc.as_ref()));
    t.rows.push(r);
    Ok(t)
}

/// Requested times, or an evenly spaced grid over a few mean lifetimes.
fn curve_times(cfg: &RunConfig, spec: &BlockchainSpec) -> Result<Vec<f64>> {
    if let Some(ts) = &cfg.sweep.t {
        return Ok(ts.clone());
    }
    let end = match cfg.analytic.horizon {
        Some(h) => h,
        None => CURVE_SPAN * analytic(cfg, spec)?.mean_functional_time()?,
    };
    Ok((0..=CURVE_POINTS).map(|i| end * i as f64 / CURVE_POINTS as f64).collect())
}

pub fn prob_curve(cfg: &RunConfig, engine: EngineChoice) -> Result<Table> {
    let spec = cfg.spec()?;
    let ts = curve_times(cfg, &spec).map_err(with_m(&spec))?;
    let a = if engine.analytic() {
        Some(analytic(cfg, &spec).and_then(|e| e.instantaneous_prob(&ts)).map_err(with_m(&spec))?)
    } else {
        None
    };
    let mc = if engine.mc() {
        let outcomes = replicate(cfg, &spec, cfg.mc.seed).map_err(with_m(&spec))?;
        Some(montecarlo::survival_from(&outcomes, &ts, cfg.mc.seed))
    } else {
        None
    };
    let mut t = Table::new(&[]);
    t.header = header("t", "P", engine);
    for (i, &time) in ts.iter().enumerate() {
        t.rows.push(row(time.to_string(), a.as_ref().map(|v| v[i]), mc.as_ref().map(|v| &v[i])));
    }
    Ok(t)
}

fn sweep_arm(cfg: &RunConfig, arm: usize) -> u64 {
    montecarlo::arm_seed(cfg.mc.seed, arm as u64, cfg.mc.common_random_numbers)
}

pub fn sweep_m(cfg: &RunConfig, engine: EngineChoice) -> Result<Table> {
    let base = cfg.spec()?;
    let ms = cfg.sweep.m.as_ref().ok_or_else(|| Error::Config("sweep-m needs m in [sweep]".into()))?;
    let mut t = Table::new(&[]);
    t.header = header("m", "ET", engine);
    for (arm, &m) in ms.iter().enumerate() {
        let spec = base.at_quorum(m).map_err(|e| Error::at(format!("m={m}"), e))?;
        let (a, mc) = mean_time_point(cfg, &spec, engine, sweep_arm(cfg, arm))?;
        t.rows.push(row(m.to_string(), a, mc.as_ref()));
    }
    Ok(t)
}

pub fn sweep_k(cfg: &RunConfig, engine: EngineChoice) -> Result<Table> {
    let base = cfg.spec()?;
    let ks = cfg.sweep.k.as_ref().ok_or_else(|| Error::Config("sweep-k needs k in [sweep]".into()))?;
    let mut t = Table::new(&[]);
    t.header = header("k", "ET", engine);
    for (arm, &k) in ks.iter().enumerate() {
        let spec = base.with_hacker_count(k).map_err(|e| Error::at(format!("k={k}"), e))?;
        let (a, mc) = mean_time_point(cfg, &spec, engine, sweep_arm(cfg, arm))?;
        t.rows.push(row(k.to_string(), a, mc.as_ref()));
    }
    Ok(t)
}

/// Net revenue rate over the m sweep; `both` is answered analytically.
pub fn optimize(cfg: &RunConfig, engine: EngineChoice) -> Result<(Table, econ::Optimum)> {
    let base = cfg.spec()?;
    let econ_spec = cfg.econ.ok_or_else(|| Error::Config("optimize needs an [econ] section".into()))?;
    let ms = cfg.sweep.m.as_ref().ok_or_else(|| Error::Config("optimize needs m in [sweep]".into()))?;
    let (eng, mc) = match engine {
        EngineChoice::Mc => (
            Engine::MonteCarlo { reps: cfg.mc.reps, seed: cfg.mc.seed, common_random_numbers: cfg.mc.common_random_numbers },
            true,
        ),
        _ => (Engine::Analytic(cfg.analytic), false),
    };
    let best = econ::optimize_m(&base, &econ_spec, ms, &eng)?;
    let mut t = Table::new(if mc { &["m", "ENR", "stderr", "flag"] } else { &["m", "ENR", "flag"] });
    let top = best.curve.iter().position(|p| p.m == best.m).expect("optimum lies on the curve");
    for (i, p) in best.curve.iter().enumerate() {
        let tied = match (p.stderr, best.curve[top].stderr) {
            (Some(a), Some(b)) if i != top => best.value - p.value <= 2.0 * (a * a + b * b).sqrt(),
            _ => false,
        };
        let flag = if i == top { "max" } else if tied { "tied" } else { "" };
        let mut r = vec![p.m.to_string(), p.value.to_string()];
        if let Some(se) = p.stderr {
            r.push(se.to_string());
        }
        r.push(flag.to_string());
        t.rows.push(r);
    }
    Ok((t, best))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRow {
    pub quantity: String,
    pub analytic: f64,
    pub mc: EstimateWithError,
    pub z_score: f64,
    pub pass: bool,
}

/// Scores Monte Carlo estimates against analytic values. A zero standard
/// error is floored at 1/n so that exact agreement scores zero and a
/// degenerate estimate still fails when it is off.
pub fn validate_rows(items: Vec<(String, f64, EstimateWithError)>) -> Vec<ValidationRow> {
    items
        .into_iter()
        .map(|(quantity, analytic, mc)| {
            let se = mc.stderr.max(1.0 / mc.n.max(1) as f64);
            let z_score = (mc.mean - analytic) / se;
            let pass = z_score.abs() <= VALIDATE_Z_LIMIT;
            ValidationRow { quantity, analytic, mc, z_score, pass }
        })
        .collect()
}

pub fn validation_table(rows: &[ValidationRow]) -> Table {
    let mut t = Table::new(&["quantity", "analytic", "mc", "stderr", "z_score", "pass"]);
    for r in rows {
        t.rows.push(vec![
            r.quantity.clone(),
            r.analytic.to_string(),
            r.mc.mean.to_string(),
            r.mc.stderr.to_string(),
            r.z_score.to_string(),
            r.pass.to_string(),
        ]);
    }
    t
}

/// p_mk, E[N₁], E[T] and P_mk(t) from both engines. Without a t sweep the
/// curve is checked at half, one and two mean lifetimes.
pub fn validate(cfg: &RunConfig) -> Result<Vec<ValidationRow>> {
    let spec = cfg.spec()?;
    let run = || -> Result<_> {
        let engine = analytic(cfg, &spec)?;
        let seed = cfg.mc.seed;
        let outcomes = replicate(cfg, &spec, seed)?;
        let mean_t = engine.mean_functional_time()?;
        let ts = match &cfg.sweep.t {
            Some(ts) => ts.clone(),
            None => vec![0.5 * mean_t, mean_t, 2.0 * mean_t],
        };
        let curve = engine.instantaneous_prob(&ts)?;
        let mc_curve = montecarlo::survival_from(&outcomes, &ts, seed);
        let mut items = vec![
            ("p_mk".to_string(), engine.p_mk(), montecarlo::estimate_cycle_hack_prob(&spec, cfg.mc.reps, seed)?),
            (
                "expected_cycles".to_string(),
                engine.expected_cycles()?,
                EstimateWithError::from_values(outcomes.iter().map(|o| o.cycles as f64), seed),
            ),
            ("mean_time".to_string(), mean_t, montecarlo::mean_functional_time_from(&outcomes, seed)),
        ];
        for ((t, a), e) in ts.iter().zip(curve).zip(mc_curve) {
            items.push((format!("P(t={t})"), a, e));
        }
        Ok(validate_rows(items))
    };
    run().map_err(with_m(&spec))
}
