//! Seeded Monte Carlo replication of the attack process.
//!
//! Every replication draws from its own ChaCha8 stream, selected by
//! (seed, replication index). Results therefore do not depend on how
//! replications are scheduled across threads, and two specs run with the
//! same seed share random numbers replication by replication (common random
//! numbers across sweep arms).
//!
//! Within a cycle the draws are taken in a fixed order: hacker 1's m node
//! times, hacker 2's m node times, ..., then the detect time, then the
//! re-set time.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dists::UniformSource;
use crate::model::BlockchainSpec;
use crate::{Error, Result};

pub const DEFAULT_CYCLE_CAP: u64 = 10_000_000;

/// Stream for one replication.
pub fn replication_stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one arm of a sweep. With common random numbers every arm reuses
/// the base seed; otherwise arms get decorrelated seeds.
pub fn arm_seed(seed: u64, arm: u64, common_random_numbers: bool) -> u64 {
    if common_random_numbers {
        seed
    } else {
        splitmix64(seed ^ splitmix64(arm.wrapping_add(1)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleDraw {
    pub y: f64,
    pub w: f64,
    pub z: f64,
    pub hacked: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplicationOutcome {
    /// N₁: cycles that ended in detection before the hack.
    pub cycles: u64,
    pub functional_time: f64,
    pub final_hack_time: f64,
    /// Σ y_i over the detected cycles.
    pub detect_total: f64,
    /// Σ w_i over the detected cycles.
    pub reset_total: f64,
}

/// A full trajectory: detected cycles in order, then the hacked one.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub completed: Vec<CycleDraw>,
    pub terminal: CycleDraw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateWithError {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
    pub seed: u64,
}

impl EstimateWithError {
    /// Sample mean and standard error (sample sd / √n), accumulated in
    /// iteration order.
    pub fn from_values<I: IntoIterator<Item = f64>>(values: I, seed: u64) -> Self {
        let mut n = 0u64;
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for x in values {
            n += 1;
            let delta = x - mean;
            mean += delta / n as f64;
            m2 += delta * (x - mean);
        }
        let stderr = if n > 1 { (m2 / (n - 1) as f64 / n as f64).sqrt() } else { f64::NAN };
        EstimateWithError { mean, stderr, n, seed }
    }

    /// (estimate − value) / stderr.
    pub fn z_score(&self, value: f64) -> f64 {
        (self.mean - value) / self.stderr
    }

    pub fn within_sigmas(&self, value: f64, sigmas: f64) -> bool {
        (self.mean - value).abs() <= sigmas * self.stderr
    }
}

pub fn draw_cycle<U: UniformSource + ?Sized>(spec: &BlockchainSpec, src: &mut U) -> CycleDraw {
    let m = spec.m();
    let mut z = f64::INFINITY;
    for hacker in spec.hackers() {
        let total: f64 = (0..m).map(|_| hacker.sample(src)).sum();
        z = z.min(total);
    }
    let y = spec.detect().sample(src);
    let w = spec.reset().sample(src);
    CycleDraw { y, w, z, hacked: z < y }
}

fn run_replication<U, F>(spec: &BlockchainSpec, src: &mut U, cap: u64, mut on_detected: F) -> Result<ReplicationOutcome>
where
    U: UniformSource + ?Sized,
    F: FnMut(&CycleDraw),
{
    let mut cycles = 0u64;
    let mut elapsed = 0.0;
    let mut detect_total = 0.0;
    let mut reset_total = 0.0;
    loop {
        let d = draw_cycle(spec, src);
        if d.hacked {
            return Ok(ReplicationOutcome {
                cycles,
                functional_time: elapsed + d.z,
                final_hack_time: d.z,
                detect_total,
                reset_total,
            });
        }
        cycles += 1;
        if cycles > cap {
            return Err(Error::Runaway { cap });
        }
        elapsed += d.y + d.w;
        detect_total += d.y;
        reset_total += d.w;
        on_detected(&d);
    }
}

/// One replication of the functional time T_m = Σ (Y_i + W_i) + Z_m.
pub fn simulate_functional_time<U: UniformSource + ?Sized>(
    spec: &BlockchainSpec,
    src: &mut U,
) -> Result<ReplicationOutcome> {
    simulate_functional_time_capped(spec, src, DEFAULT_CYCLE_CAP)
}

pub fn simulate_functional_time_capped<U: UniformSource + ?Sized>(
    spec: &BlockchainSpec,
    src: &mut U,
    cap: u64,
) -> Result<ReplicationOutcome> {
    run_replication(spec, src, cap, |_| {})
}

pub fn simulate_history<U: UniformSource + ?Sized>(spec: &BlockchainSpec, src: &mut U, cap: u64) -> Result<History> {
    let mut completed = Vec::new();
    let outcome = run_replication(spec, src, cap, |d| completed.push(*d))?;
    let terminal = CycleDraw { y: f64::NAN, w: f64::NAN, z: outcome.final_hack_time, hacked: true };
    Ok(History { completed, terminal })
}

fn check_reps(n_reps: u64) -> Result<()> {
    if n_reps < 2 {
        return Err(Error::domain(format!("need at least 2 replications, got {n_reps}")));
    }
    Ok(())
}

/// `n_reps` replications, returned in replication-index order.
pub fn replicate(spec: &BlockchainSpec, n_reps: u64, seed: u64, cap: u64) -> Result<Vec<ReplicationOutcome>> {
    (0..n_reps)
        .into_par_iter()
        .map(|i| simulate_functional_time_capped(spec, &mut replication_stream(seed, i), cap))
        .collect()
}

pub fn estimate_mean_functional_time(spec: &BlockchainSpec, n_reps: u64, seed: u64) -> Result<EstimateWithError> {
    check_reps(n_reps)?;
    let outcomes = replicate(spec, n_reps, seed, DEFAULT_CYCLE_CAP)?;
    Ok(mean_functional_time_from(&outcomes, seed))
}

pub fn mean_functional_time_from(outcomes: &[ReplicationOutcome], seed: u64) -> EstimateWithError {
    EstimateWithError::from_values(outcomes.iter().map(|o| o.functional_time), seed)
}

fn check_ascending(t_grid: &[f64]) -> Result<()> {
    if t_grid.iter().any(|t| !t.is_finite() || *t < 0.0) || t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::domain("time grid must be finite, nonnegative and ascending"));
    }
    Ok(())
}

/// Fraction of replications not yet hacked at each t. Each replication is
/// simulated once and answers every grid point.
pub fn estimate_survival_curve(
    spec: &BlockchainSpec,
    t_grid: &[f64],
    n_reps: u64,
    seed: u64,
) -> Result<Vec<EstimateWithError>> {
    check_reps(n_reps)?;
    check_ascending(t_grid)?;
    let outcomes = replicate(spec, n_reps, seed, DEFAULT_CYCLE_CAP)?;
    Ok(survival_from(&outcomes, t_grid, seed))
}

pub fn survival_from(outcomes: &[ReplicationOutcome], t_grid: &[f64], seed: u64) -> Vec<EstimateWithError> {
    t_grid
        .iter()
        .map(|&t| {
            EstimateWithError::from_values(
                outcomes.iter().map(|o| if o.functional_time > t { 1.0 } else { 0.0 }),
                seed,
            )
        })
        .collect()
}

fn single_cycles(spec: &BlockchainSpec, n_reps: u64, seed: u64) -> Vec<CycleDraw> {
    (0..n_reps).into_par_iter().map(|i| draw_cycle(spec, &mut replication_stream(seed, i))).collect()
}

/// Fraction of independent cycles that end in a hack.
pub fn estimate_cycle_hack_prob(spec: &BlockchainSpec, n_reps: u64, seed: u64) -> Result<EstimateWithError> {
    check_reps(n_reps)?;
    let draws = single_cycles(spec, n_reps, seed);
    Ok(EstimateWithError::from_values(draws.iter().map(|d| if d.hacked { 1.0 } else { 0.0 }), seed))
}

/// Per-cycle statistics from `n_reps` independent single cycles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleStatistics {
    pub hack_prob: EstimateWithError,
    /// Mean of y over cycles that were detected.
    pub detect_given_escape: EstimateWithError,
    /// Mean of z over cycles that were hacked.
    pub hack_given_hack: EstimateWithError,
    /// Mean of w over all cycles.
    pub reset: EstimateWithError,
}

pub fn estimate_cycle_statistics(spec: &BlockchainSpec, n_reps: u64, seed: u64) -> Result<CycleStatistics> {
    check_reps(n_reps)?;
    let draws = single_cycles(spec, n_reps, seed);
    Ok(CycleStatistics {
        hack_prob: EstimateWithError::from_values(draws.iter().map(|d| if d.hacked { 1.0 } else { 0.0 }), seed),
        detect_given_escape: EstimateWithError::from_values(draws.iter().filter(|d| !d.hacked).map(|d| d.y), seed),
        hack_given_hack: EstimateWithError::from_values(draws.iter().filter(|d| d.hacked).map(|d| d.z), seed),
        reset: EstimateWithError::from_values(draws.iter().map(|d| d.w), seed),
    })
}

/// Where a trajectory is at time t.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum State {
    Functional,
    Resetting,
    Hacked,
}

impl History {
    pub fn state_at(&self, t: f64) -> State {
        let mut start = 0.0;
        for c in &self.completed {
            if t < start + c.y {
                return State::Functional;
            }
            if t < start + c.y + c.w {
                return State::Resetting;
            }
            start += c.y + c.w;
        }
        if t < start + self.terminal.z {
            State::Functional
        } else {
            State::Hacked
        }
    }

    /// Detect-and-reset pairs finished by time t.
    pub fn completed_by(&self, t: f64) -> usize {
        let mut end = 0.0;
        let mut count = 0;
        for c in &self.completed {
            end += c.y + c.w;
            if end > t {
                break;
            }
            count += 1;
        }
        count
    }
}

fn histories(spec: &BlockchainSpec, n_reps: u64, seed: u64) -> Result<Vec<History>> {
    check_reps(n_reps)?;
    (0..n_reps)
        .into_par_iter()
        .map(|i| simulate_history(spec, &mut replication_stream(seed, i), DEFAULT_CYCLE_CAP))
        .collect()
}

/// Probabilities of being functional, re-setting and hacked at time t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateOccupancy {
    pub functional: EstimateWithError,
    pub resetting: EstimateWithError,
    pub hacked: EstimateWithError,
}

pub fn estimate_state_at(spec: &BlockchainSpec, t: f64, n_reps: u64, seed: u64) -> Result<StateOccupancy> {
    let hs = histories(spec, n_reps, seed)?;
    let states: Vec<State> = hs.iter().map(|h| h.state_at(t)).collect();
    let freq = |s: State| EstimateWithError::from_values(states.iter().map(|&x| if x == s { 1.0 } else { 0.0 }), seed);
    Ok(StateOccupancy {
        functional: freq(State::Functional),
        resetting: freq(State::Resetting),
        hacked: freq(State::Hacked),
    })
}

/// State occupancy restricted to the first cycle: functional means t falls
/// before both the hack and the detection of cycle one, re-setting means
/// cycle one was detected and t falls inside its re-set.
pub fn estimate_first_cycle_state(spec: &BlockchainSpec, t: f64, n_reps: u64, seed: u64) -> Result<(EstimateWithError, EstimateWithError)> {
    check_reps(n_reps)?;
    let draws = single_cycles(spec, n_reps, seed);
    let functional = EstimateWithError::from_values(draws.iter().map(|d| if t < d.y.min(d.z) { 1.0 } else { 0.0 }), seed);
    let resetting = EstimateWithError::from_values(
        draws.iter().map(|d| if !d.hacked && d.y <= t && t < d.y + d.w { 1.0 } else { 0.0 }),
        seed,
    );
    Ok((functional, resetting))
}

/// Mean number of detect-and-reset pairs completed by each t before the
/// chain is hacked.
pub fn estimate_completed_cycles(spec: &BlockchainSpec, t_grid: &[f64], n_reps: u64, seed: u64) -> Result<Vec<EstimateWithError>> {
    check_ascending(t_grid)?;
    let hs = histories(spec, n_reps, seed)?;
    Ok(t_grid
        .iter()
        .map(|&t| EstimateWithError::from_values(hs.iter().map(|h| h.completed_by(t) as f64), seed))
        .collect())
}

/// Mean count N₂(t) of the renewal process whose increments are
/// (Y | Y < Z_m) + W, simulated by discarding hacked cycles.
pub fn estimate_conditional_renewal_counts(
    spec: &BlockchainSpec,
    t_grid: &[f64],
    n_reps: u64,
    seed: u64,
) -> Result<Vec<EstimateWithError>> {
    check_reps(n_reps)?;
    check_ascending(t_grid)?;
    let t_max = t_grid.last().copied().unwrap_or(0.0);
    let renewals: Vec<Vec<f64>> = (0..n_reps)
        .into_par_iter()
        .map(|i| {
            let mut src = replication_stream(seed, i);
            let mut epochs = Vec::new();
            let mut clock = 0.0;
            let mut draws = 0u64;
            while clock <= t_max {
                draws += 1;
                if draws > DEFAULT_CYCLE_CAP {
                    return Err(Error::Runaway { cap: DEFAULT_CYCLE_CAP });
                }
                let d = draw_cycle(spec, &mut src);
                if d.hacked {
                    continue;
                }
                clock += d.y + d.w;
                epochs.push(clock);
            }
            Ok(epochs)
        })
        .collect::<Result<_>>()?;
    Ok(t_grid
        .iter()
        .map(|&t| {
            EstimateWithError::from_values(renewals.iter().map(|e| e.iter().take_while(|&&x| x <= t).count() as f64), seed)
        })
        .collect())
}

/// The two sides of E[Σ(Y_i + W_i)] = E[N₁] (E[Y | Y < Z_m] + E[W]).
///
/// The left side and E[N₁] come from full replications; the per-cycle means
/// come from an independent batch of single cycles on a derived seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaldCheck {
    pub lhs: EstimateWithError,
    pub cycles: EstimateWithError,
    pub detect_given_escape: EstimateWithError,
    pub reset: EstimateWithError,
    pub rhs: f64,
    pub rhs_stderr: f64,
}

impl WaldCheck {
    pub fn z_score(&self) -> f64 {
        (self.lhs.mean - self.rhs) / (self.lhs.stderr.powi(2) + self.rhs_stderr.powi(2)).sqrt()
    }
}

pub fn wald_decomposition(spec: &BlockchainSpec, n_reps: u64, seed: u64) -> Result<WaldCheck> {
    check_reps(n_reps)?;
    let outcomes = replicate(spec, n_reps, seed, DEFAULT_CYCLE_CAP)?;
    let lhs = EstimateWithError::from_values(outcomes.iter().map(|o| o.detect_total + o.reset_total), seed);
    let cycles = EstimateWithError::from_values(outcomes.iter().map(|o| o.cycles as f64), seed);
    let stats = estimate_cycle_statistics(spec, n_reps, arm_seed(seed, 1, false))?;
    let per_cycle = stats.detect_given_escape.mean + stats.reset.mean;
    let per_cycle_se = (stats.detect_given_escape.stderr.powi(2) + stats.reset.stderr.powi(2)).sqrt();
    let rhs = cycles.mean * per_cycle;
    let rhs_stderr = ((cycles.stderr * per_cycle).powi(2) + (cycles.mean * per_cycle_se).powi(2)).sqrt();
    Ok(WaldCheck { lhs, cycles, detect_given_escape: stats.detect_given_escape, reset: stats.reset, rhs, rhs_stderr })
}
