//! Net revenue of running the chain until it is hacked, and the search for
//! the node quorum that maximizes revenue per unit time.

use serde::Serialize;

use crate::analytic::{AnalyticEngine, AnalyticOptions};
use crate::model::BlockchainSpec;
use crate::montecarlo::{self, ReplicationOutcome};
use crate::{Error, Result};

/// a·m^b + c.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateExpr {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl RateExpr {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        RateExpr { a, b, c }
    }

    pub fn value(&self, m: u32) -> f64 {
        self.a * (m as f64).powf(self.b) + self.c
    }

    pub fn scaled(&self, factor: f64) -> Self {
        RateExpr { a: self.a * factor, b: self.b, c: self.c * factor }
    }
}

pub fn rate_value(e: &RateExpr, m: u32) -> f64 {
    e.value(m)
}

/// Revenue and cost rates, all per unit time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EconSpec {
    /// R(m), earned while the chain is functional.
    pub revenue: RateExpr,
    /// C₁(m), paid while re-setting.
    pub reset_cost: RateExpr,
    /// C₂(m), paid while the chain is functional.
    pub run_cost: RateExpr,
}

impl EconSpec {
    pub fn scaled(&self, factor: f64) -> Self {
        EconSpec {
            revenue: self.revenue.scaled(factor),
            reset_cost: self.reset_cost.scaled(factor),
            run_cost: self.run_cost.scaled(factor),
        }
    }
}

/// E_m[TNR] = (E[N₁] E[Y | Y < Z_m] + E[Z_m | Z_m < Y])(R − C₂) − E[N₁] E[W] C₁.
pub fn expected_total_net_revenue(engine: &AnalyticEngine, econ: &EconSpec) -> Result<f64> {
    let m = engine.spec().m();
    if engine.p_mk() <= 0.0 {
        return Err(Error::InfiniteMean);
    }
    let cycles = engine.expected_cycles()?;
    let hack = engine.conditional_hack_mean()?;
    let detect = if cycles > 0.0 { engine.conditional_detect_mean()? } else { 0.0 };
    let uptime = cycles * detect + hack;
    let margin = econ.revenue.value(m) - econ.run_cost.value(m);
    Ok(uptime * margin - cycles * engine.spec().reset().mean() * econ.reset_cost.value(m))
}

/// E_m[NR] = E_m[TNR] / E[T_m].
pub fn expected_net_revenue_rate(engine: &AnalyticEngine, econ: &EconSpec) -> Result<f64> {
    let total = expected_total_net_revenue(engine, econ)?;
    let time = engine.mean_functional_time()?;
    if !(time > 0.0) {
        return Err(Error::domain("mean functional time must be positive"));
    }
    Ok(total / time)
}

/// Ratio estimate of E[TNR] / E[T] from replications, with a delta-method
/// standard error.
pub fn net_revenue_rate_from(outcomes: &[ReplicationOutcome], econ: &EconSpec, m: u32) -> (f64, f64) {
    let margin = econ.revenue.value(m) - econ.run_cost.value(m);
    let c1 = econ.reset_cost.value(m);
    let n = outcomes.len() as f64;
    let tnr: Vec<f64> = outcomes
        .iter()
        .map(|o| (o.detect_total + o.final_hack_time) * margin - o.reset_total * c1)
        .collect();
    let mean_tnr = tnr.iter().sum::<f64>() / n;
    let mean_t = outcomes.iter().map(|o| o.functional_time).sum::<f64>() / n;
    let ratio = mean_tnr / mean_t;
    let var = tnr
        .iter()
        .zip(outcomes)
        .map(|(x, o)| (x - ratio * o.functional_time).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    (ratio, (var / n).sqrt() / mean_t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Engine {
    Analytic(AnalyticOptions),
    MonteCarlo { reps: u64, seed: u64, common_random_numbers: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub m: u32,
    pub value: f64,
    /// Monte Carlo standard error; `None` for the analytic engine.
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Optimum {
    pub m: u32,
    pub value: f64,
    /// A neighbor of the optimum lies within two standard errors.
    pub statistically_tied: bool,
    pub curve: Vec<CurvePoint>,
}

/// Smallest m attaining the maximum of the curve.
pub fn argmax(curve: &[CurvePoint]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, p) in curve.iter().enumerate() {
        match best {
            Some(b) if curve[b].value >= p.value => {}
            _ => best = Some(i),
        }
    }
    best
}

fn evaluate(template: &BlockchainSpec, econ: &EconSpec, m: u32, arm: u64, engine: &Engine) -> Result<CurvePoint> {
    let spec = template.at_quorum(m)?;
    match engine {
        Engine::Analytic(opts) => {
            let e = AnalyticEngine::new(&spec, *opts)?;
            Ok(CurvePoint { m, value: expected_net_revenue_rate(&e, econ)?, stderr: None })
        }
        Engine::MonteCarlo { reps, seed, common_random_numbers } => {
            if *reps < 2 {
                return Err(Error::domain("need at least 2 replications"));
            }
            let s = montecarlo::arm_seed(*seed, arm, *common_random_numbers);
            let outcomes = montecarlo::replicate(&spec, *reps, s, montecarlo::DEFAULT_CYCLE_CAP)?;
            let (value, stderr) = net_revenue_rate_from(&outcomes, econ, m);
            Ok(CurvePoint { m, value, stderr: Some(stderr) })
        }
    }
}

/// Evaluates E_m[NR] for every m in `ms` and returns the smallest maximizer.
pub fn optimize_m(template: &BlockchainSpec, econ: &EconSpec, ms: &[u32], engine: &Engine) -> Result<Optimum> {
    if ms.is_empty() {
        return Err(Error::domain("quorum range is empty"));
    }
    let curve = ms
        .iter()
        .enumerate()
        .map(|(arm, &m)| evaluate(template, econ, m, arm as u64, engine).map_err(|e| Error::at(format!("m={m}"), e)))
        .collect::<Result<Vec<_>>>()?;
    optimum_of(curve)
}

/// Picks the optimum of an already evaluated curve.
pub fn optimum_of(curve: Vec<CurvePoint>) -> Result<Optimum> {
    let best = argmax(&curve).ok_or_else(|| Error::domain("quorum range is empty"))?;
    let top = curve[best];
    let tied = top.stderr.is_some_and(|se| {
        [best.checked_sub(1), Some(best + 1)].into_iter().flatten().filter_map(|i| curve.get(i)).any(|n| {
            let joint = (se.powi(2) + n.stderr.unwrap_or(0.0).powi(2)).sqrt();
            top.value - n.value <= 2.0 * joint
        })
    });
    Ok(Optimum { m: top.m, value: top.value, statistically_tied: tied, curve })
}
