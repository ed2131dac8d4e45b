//! Sectioned `key = value` run configuration.
//!
//! ```text
//! [model]
//! n = 5                  # or: m = 3
//! mode = destructive     # or: ransom
//! hackers = 5 x gamma(2, 1)
//! detect = weibull(1.5, 2)
//! reset = exp(1)
//!
//! [mc]
//! reps = 30000
//! seed = 0
//!
//! [econ]
//! revenue = 0.2, 1, 0    # a, b, c in a·m^b + c
//!
//! [sweep]
//! m = 1..12
//! t = 0:0.25:10
//! ```

use std::collections::HashSet;

use serde::Serialize;

use crate::analytic::AnalyticOptions;
use crate::dists::{DistributionSpec, Law};
use crate::econ::{EconSpec, RateExpr};
use crate::model::{AttackMode, BlockchainSpec};
use crate::montecarlo::DEFAULT_CYCLE_CAP;
use crate::{Error, Result};

pub const DEFAULT_REPS: u64 = 30_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelConfig {
    pub nodes: Option<u32>,
    pub quorum: Option<u32>,
    pub mode: AttackMode,
    pub hackers: Vec<DistributionSpec>,
    pub detect: DistributionSpec,
    pub reset: DistributionSpec,
}

impl ModelConfig {
    pub fn spec(&self) -> Result<BlockchainSpec> {
        match (self.nodes, self.quorum) {
            (Some(n), None) => BlockchainSpec::from_nodes(n, self.mode, self.hackers.clone(), self.detect, self.reset),
            (None, Some(m)) => BlockchainSpec::with_quorum(m, self.hackers.clone(), self.detect, self.reset),
            _ => Err(Error::Config("exactly one of n and m must be given".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McConfig {
    pub reps: u64,
    pub seed: u64,
    pub common_random_numbers: bool,
    pub cycle_cap: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { reps: DEFAULT_REPS, seed: 0, common_random_numbers: true, cycle_cap: DEFAULT_CYCLE_CAP }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SweepConfig {
    pub m: Option<Vec<u32>>,
    pub k: Option<Vec<usize>>,
    pub t: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub mc: McConfig,
    pub analytic: AnalyticOptions,
    pub econ: Option<EconSpec>,
    pub sweep: SweepConfig,
}

impl RunConfig {
    pub fn spec(&self) -> Result<BlockchainSpec> {
        self.model.spec()
    }
}

fn err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn positive_f64(line: usize, key: &str, v: &str) -> Result<f64> {
    let x: f64 = v.parse().map_err(|_| err(line, format!("{key}: expected a number, got {v:?}")))?;
    if !(x.is_finite() && x > 0.0) {
        return Err(err(line, format!("{key} must be positive, got {v}")));
    }
    Ok(x)
}

fn finite_f64(line: usize, key: &str, v: &str) -> Result<f64> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(err(line, format!("{key}: expected a finite number, got {v:?}"))),
    }
}

fn positive_int<T: TryFrom<u64>>(line: usize, key: &str, v: &str) -> Result<T> {
    match v.parse::<u64>() {
        Ok(0) => Err(err(line, format!("{key} must be positive, got 0"))),
        Ok(x) => T::try_from(x).map_err(|_| err(line, format!("{key} is too large: {v}"))),
        Err(_) if v.starts_with('-') => Err(err(line, format!("{key} must be positive, got {v}"))),
        Err(_) => Err(err(line, format!("{key}: expected a positive integer, got {v:?}"))),
    }
}

/// `exp(rate)`, `gamma(shape, rate)` or `weibull(scale, shape)`.
pub fn parse_law(line: usize, key: &str, v: &str) -> Result<DistributionSpec> {
    let open = v.find('(').ok_or_else(|| err(line, format!("{key}: expected family(params), got {v:?}")))?;
    let args = v[open + 1..]
        .strip_suffix(')')
        .ok_or_else(|| err(line, format!("{key}: missing closing parenthesis")))?;
    let family = v[..open].trim().to_ascii_lowercase();
    let params = args
        .split(',')
        .map(|a| positive_f64(line, key, a.trim()))
        .collect::<Result<Vec<_>>>()?;
    let law = match (family.as_str(), params.as_slice()) {
        ("exp" | "exponential", &[rate]) => Law::Exponential { rate },
        ("gamma", &[shape, rate]) => Law::Gamma { shape, rate },
        ("weibull", &[scale, shape]) => Law::Weibull { scale, shape },
        ("exp" | "exponential" | "gamma" | "weibull", _) => {
            return Err(err(line, format!("{key}: wrong number of parameters for {family}")))
        }
        _ => return Err(err(line, format!("{key}: unknown family {family:?}"))),
    };
    DistributionSpec::new(law).map_err(|e| err(line, format!("{key}: {e}")))
}

fn parse_rate(line: usize, key: &str, v: &str) -> Result<RateExpr> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(err(line, format!("{key}: expected \"a, b, c\" for a·m^b + c")));
    }
    let a = finite_f64(line, key, parts[0])?;
    let b = finite_f64(line, key, parts[1])?;
    let c = finite_f64(line, key, parts[2])?;
    Ok(RateExpr::new(a, b, c))
}

/// `lo..hi` (inclusive) or a comma-separated list.
fn parse_int_list<T: TryFrom<u64> + Copy>(line: usize, key: &str, v: &str) -> Result<Vec<T>> {
    let out: Vec<T> = if let Some((lo, hi)) = v.split_once("..") {
        let lo: u64 = positive_int(line, key, lo.trim())?;
        let hi: u64 = positive_int(line, key, hi.trim())?;
        if hi < lo {
            return Err(err(line, format!("{key}: empty range {v}")));
        }
        (lo..=hi).map(|x| positive_int(line, key, &x.to_string())).collect::<Result<_>>()?
    } else {
        v.split(',').map(|x| positive_int(line, key, x.trim())).collect::<Result<_>>()?
    };
    Ok(out)
}

/// `start:step:end` (inclusive) or a comma-separated list.
fn parse_times(line: usize, key: &str, v: &str) -> Result<Vec<f64>> {
    let nonneg = |s: &str| -> Result<f64> {
        let x = finite_f64(line, key, s.trim())?;
        if x < 0.0 {
            return Err(err(line, format!("{key}: times must be nonnegative, got {s}")));
        }
        Ok(x)
    };
    let parts: Vec<&str> = v.split(':').collect();
    let ts = match parts.as_slice() {
        [start, step, end] => {
            let start = nonneg(start)?;
            let step = positive_f64(line, key, step.trim())?;
            let end = nonneg(end)?;
            if end < start {
                return Err(err(line, format!("{key}: end before start in {v}")));
            }
            let n = ((end - start) / step + 1e-9).floor() as usize;
            if n > 1_000_000 {
                return Err(err(line, format!("{key}: too many points in {v}")));
            }
            (0..=n).map(|i| start + i as f64 * step).collect()
        }
        [list] => list.split(',').map(nonneg).collect::<Result<Vec<_>>>()?,
        _ => return Err(err(line, format!("{key}: expected start:step:end or a list"))),
    };
    if ts.windows(2).any(|w| w[1] < w[0]) {
        return Err(err(line, format!("{key}: times must be ascending")));
    }
    Ok(ts)
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "on" => Ok(true),
        "false" | "no" | "off" => Ok(false),
        _ => Err(err(line, format!("{key}: expected true or false, got {v:?}"))),
    }
}

#[derive(Default)]
struct ModelDraft {
    header: usize,
    nodes: Option<(usize, u32)>,
    quorum: Option<(usize, u32)>,
    mode: Option<AttackMode>,
    hackers: Vec<DistributionSpec>,
    detect: Option<DistributionSpec>,
    reset: Option<DistributionSpec>,
}

#[derive(Default)]
struct EconDraft {
    header: usize,
    revenue: Option<RateExpr>,
    reset_cost: Option<RateExpr>,
    run_cost: Option<RateExpr>,
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut model: Option<ModelDraft> = None;
    let mut econ: Option<EconDraft> = None;
    let mut mc = McConfig::default();
    let mut analytic = AnalyticOptions::default();
    let mut sweep = SweepConfig::default();
    let mut section = String::new();
    let mut sections_seen = HashSet::new();
    let mut keys_seen = HashSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| err(line, "malformed section header"))?
                .trim()
                .to_string();
            if !sections_seen.insert(name.clone()) {
                return Err(err(line, format!("duplicate section [{name}]")));
            }
            match name.as_str() {
                "model" => model = Some(ModelDraft { header: line, ..Default::default() }),
                "econ" => econ = Some(EconDraft { header: line, ..Default::default() }),
                "mc" | "analytic" | "sweep" => {}
                _ => return Err(err(line, format!("unknown section [{name}]"))),
            }
            section = name;
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| err(line, format!("expected key = value, got {content:?}")))?;
        if section.is_empty() {
            return Err(err(line, format!("key {key} appears before any section")));
        }
        let repeatable = section == "model" && (key == "hacker" || key == "hackers");
        if !repeatable && !keys_seen.insert(format!("{section}.{key}")) {
            return Err(err(line, format!("duplicate key {key} in [{section}]")));
        }
        match (section.as_str(), key) {
            ("model", _) => {
                let d = model.as_mut().expect("model section opened");
                match key {
                    "n" => d.nodes = Some((line, positive_int(line, key, value)?)),
                    "m" => d.quorum = Some((line, positive_int(line, key, value)?)),
                    "mode" => d.mode = Some(value.parse().map_err(|e: Error| err(line, format!("mode: {e}")))?),
                    "hacker" => d.hackers.push(parse_law(line, key, value)?),
                    "hackers" => {
                        let (count, law) = value
                            .split_once(['x', '*'])
                            .ok_or_else(|| err(line, "hackers: expected \"K x law\""))?;
                        let count: usize = positive_int(line, key, count.trim())?;
                        let law = parse_law(line, key, law.trim())?;
                        d.hackers.extend(std::iter::repeat_n(law, count));
                    }
                    "detect" => d.detect = Some(parse_law(line, key, value)?),
                    "reset" => d.reset = Some(parse_law(line, key, value)?),
                    _ => return Err(err(line, format!("unknown key {key} in [model]"))),
                }
            }
            ("mc", "reps") => mc.reps = positive_int(line, key, value)?,
            ("mc", "seed") => {
                mc.seed = value.parse().map_err(|_| err(line, format!("seed: expected an unsigned integer, got {value:?}")))?
            }
            ("mc", "crn") => mc.common_random_numbers = parse_bool(line, key, value)?,
            ("mc", "cycle_cap") => mc.cycle_cap = positive_int(line, key, value)?,
            ("analytic", "quad_tol") => analytic.quad_tol = positive_f64(line, key, value)?,
            ("analytic", "cells") => analytic.cells = positive_int(line, key, value)?,
            ("analytic", "step") => analytic.step = Some(positive_f64(line, key, value)?),
            ("analytic", "horizon") => analytic.horizon = Some(positive_f64(line, key, value)?),
            ("econ", _) => {
                let d = econ.as_mut().expect("econ section opened");
                let r = parse_rate(line, key, value)?;
                match key {
                    "revenue" => d.revenue = Some(r),
                    "reset_cost" => d.reset_cost = Some(r),
                    "run_cost" => d.run_cost = Some(r),
                    _ => return Err(err(line, format!("unknown key {key} in [econ]"))),
                }
            }
            ("sweep", "m") => sweep.m = Some(parse_int_list(line, key, value)?),
            ("sweep", "k") => sweep.k = Some(parse_int_list(line, key, value)?),
            ("sweep", "t") => sweep.t = Some(parse_times(line, key, value)?),
            _ => return Err(err(line, format!("unknown key {key} in [{section}]"))),
        }
    }

    let d = model.ok_or_else(|| Error::Config("missing [model] section".into()))?;
    let (nodes, quorum) = match (d.nodes, d.quorum) {
        (Some((a, _)), Some((b, _))) => {
            return Err(err(a.max(b), "n and m conflict: give exactly one of them"));
        }
        (None, None) => return Err(err(d.header, "[model] needs n or m")),
        (n, m) => (n.map(|x| x.1), m.map(|x| x.1)),
    };
    if d.hackers.is_empty() {
        return Err(err(d.header, "[model] needs at least one hacker"));
    }
    let model = ModelConfig {
        nodes,
        quorum,
        mode: d.mode.unwrap_or(AttackMode::Destructive),
        hackers: d.hackers,
        detect: d.detect.ok_or_else(|| err(d.header, "[model] needs detect"))?,
        reset: d.reset.ok_or_else(|| err(d.header, "[model] needs reset"))?,
    };
    if let Some(n) = nodes {
        crate::model::quorum_m(n, model.mode).map_err(|e| err(d.header, format!("n: {e}")))?;
    }
    let zero = RateExpr::new(0.0, 0.0, 0.0);
    let econ = econ
        .map(|e| -> Result<EconSpec> {
            Ok(EconSpec {
                revenue: e.revenue.ok_or_else(|| err(e.header, "[econ] needs revenue"))?,
                reset_cost: e.reset_cost.unwrap_or(zero),
                run_cost: e.run_cost.unwrap_or(zero),
            })
        })
        .transpose()?;
    Ok(RunConfig { model, mc, analytic, econ, sweep })
}
