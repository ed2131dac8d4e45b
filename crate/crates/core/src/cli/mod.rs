//! Batch front end: reads a run configuration, evaluates one command and
//! writes a CSV plus a `<out>.meta.json` sidecar.

pub mod commands;
pub mod config;

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::ValueEnum;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::{Error, Result};
pub use commands::{Table, ValidationRow, VALIDATE_Z_LIMIT};
pub use config::{parse_config, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    PMk,
    MeanTime,
    ProbCurve,
    SweepM,
    SweepK,
    Optimize,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::PMk => "p-mk",
            Command::MeanTime => "mean-time",
            Command::ProbCurve => "prob-curve",
            Command::SweepM => "sweep-m",
            Command::SweepK => "sweep-k",
            Command::Optimize => "optimize",
            Command::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum EngineChoice {
    Mc,
    Analytic,
    #[default]
    Both,
}

impl EngineChoice {
    pub fn mc(self) -> bool {
        matches!(self, EngineChoice::Mc | EngineChoice::Both)
    }

    pub fn analytic(self) -> bool {
        matches!(self, EngineChoice::Analytic | EngineChoice::Both)
    }

    fn name(self) -> &'static str {
        match self {
            EngineChoice::Mc => "mc",
            EngineChoice::Analytic => "analytic",
            EngineChoice::Both => "both",
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub reps: Option<u64>,
    pub no_crn: bool,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = self.seed {
            cfg.mc.seed = s;
        }
        if let Some(r) = self.reps {
            cfg.mc.reps = r;
        }
        if self.no_crn {
            cfg.mc.common_random_numbers = false;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub table: Table,
    /// Some(false) when a validate row exceeded the z limit.
    pub validation_passed: Option<bool>,
}

/// Evaluates `command` without touching the filesystem.
pub fn evaluate(command: Command, cfg: &RunConfig, engine: EngineChoice) -> Result<Outcome> {
    let table = match command {
        Command::PMk => commands::p_mk(cfg, engine)?,
        Command::MeanTime => commands::mean_time(cfg, engine)?,
        Command::ProbCurve => commands::prob_curve(cfg, engine)?,
        Command::SweepM => commands::sweep_m(cfg, engine)?,
        Command::SweepK => commands::sweep_k(cfg, engine)?,
        Command::Optimize => commands::optimize(cfg, engine)?.0,
        Command::Validate => {
            let rows = commands::validate(cfg)?;
            let passed = rows.iter().all(|r| r.pass);
            return Ok(Outcome { table: commands::validation_table(&rows), validation_passed: Some(passed) });
        }
    };
    Ok(Outcome { table, validation_passed: None })
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Parses `config_text`, runs the command and writes `out` and its sidecar.
pub fn run(command: Command, config_text: &str, overrides: Overrides, engine: EngineChoice, out: &Path) -> Result<Outcome> {
    let mut cfg = parse_config(config_text)?;
    overrides.apply(&mut cfg);
    let outcome = evaluate(command, &cfg, engine)?;
    outcome.table.write_csv(out)?;

    let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let meta = json!({
        "command": command.name(),
        "engine": engine.name(),
        "config_sha256": format!("{:x}", Sha256::digest(config_text.as_bytes())),
        "seed": cfg.mc.seed,
        "n_reps": cfg.mc.reps,
        "common_random_numbers": cfg.mc.common_random_numbers,
        "tolerances": {
            "quad_tol": cfg.analytic.quad_tol,
            "validate_z_limit": VALIDATE_Z_LIMIT,
        },
        "config": cfg,
        "created_unix": created,
    });
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(sidecar_path(out), text + "\n")?;
    Ok(outcome)
}

/// 0 success, 1 usage or parse, 2 numerical failure, 3 validation failure.
pub fn exit_code(result: &Result<Outcome>) -> i32 {
    match result {
        Ok(Outcome { validation_passed: Some(false), .. }) => 3,
        Ok(_) => 0,
        Err(e) if e.is_usage() => 1,
        Err(_) => 2,
    }
}
