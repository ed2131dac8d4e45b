//! Semi-analytic engine: conditional means, the mean functional time, and
//! the instantaneous functional probability P_mk(t) from a discretized
//! renewal equation.
//!
//! Conditioning on how the first cycle ends gives
//!
//! ```text
//! P(t) = V(t) + ∫_0^t V(t − s) dU(s),      V = A + B
//! A(t) = P(t < Z_m ∧ Y)                     (functional, first cycle)
//! B(t) = P(Y ≤ t < Y + W, Y ≤ Z_m)          (re-setting, first cycle)
//! U    = Σ_n K^{*n},  K(s) = P(Y + W ≤ s, Y < Z_m)
//! ```
//!
//! K is the defective law of a completed detect-and-reset pair, so U counts
//! pairs completed before the hack. [`RenewalGrid`] also carries the
//! renewal function G of the proper cycle law F = K / (1 − p_mk).

use serde::Serialize;

use crate::model::BlockchainSpec;
use crate::quad::{self, QuadOptions};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticOptions {
    /// Absolute tolerance of every quadrature.
    pub quad_tol: f64,
    /// Grid cells used when only a horizon is known.
    pub cells: usize,
    /// Fixed grid step; overrides `cells`.
    pub step: Option<f64>,
    /// Fixed grid horizon; otherwise the largest requested time.
    pub horizon: Option<f64>,
}

impl Default for AnalyticOptions {
    fn default() -> Self {
        AnalyticOptions { quad_tol: 1e-9, cells: 4096, step: None, horizon: None }
    }
}

/// Uniform grid 0, h, 2h, ..., cells·h.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    pub step: f64,
    pub cells: usize,
}

impl TimeGrid {
    pub fn new(step: f64, cells: usize) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) || cells == 0 {
            return Err(Error::domain(format!("grid needs a positive step and cell count, got {step} x {cells}")));
        }
        Ok(TimeGrid { step, cells })
    }

    /// Grid reaching at least `horizon` with steps no longer than `step`.
    pub fn covering(horizon: f64, step: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::domain(format!("grid horizon must be positive, got {horizon}")));
        }
        let cells = (horizon / step - 1e-9).ceil().max(1.0) as usize;
        Self::new(horizon / cells as f64, cells)
    }

    pub fn horizon(&self) -> f64 {
        self.step * self.cells as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        i as f64 * self.step
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.cells).map(move |i| self.point(i))
    }
}

/// Discretized cycle law and renewal functions on a grid.
#[derive(Debug, Clone, Serialize)]
pub struct RenewalGrid {
    pub grid: TimeGrid,
    /// F: CDF of one increment (Y | Y < Z_m) + W.
    pub cycle_cdf: Vec<f64>,
    /// G = Σ F^{*n}, the renewal function of F.
    pub g: Vec<f64>,
    /// K = (1 − p_mk) F, the defective law of a completed pair.
    pub defective_cycle_cdf: Vec<f64>,
    /// U = Σ K^{*n}: expected pairs completed before the hack.
    pub killed: Vec<f64>,
    /// P(Y ≤ t, Y < Z_m) at each gridpoint.
    pub detected_by: Vec<f64>,
}

impl RenewalGrid {
    /// Bound on the discretization error of G claimed by the solver.
    pub fn discretization_tolerance(&self) -> f64 {
        10.0 * self.grid.step
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }

    /// max_i |G_i − F_i − Σ_j ΔF_j G_{i−j}|: the residual of G = F + F∗G
    /// under a left-endpoint Stieltjes sum, which differs from the
    /// trapezoid rule used to solve it.
    pub fn residual(&self) -> f64 {
        let f = &self.cycle_cdf;
        let g = &self.g;
        let mut worst: f64 = 0.0;
        for i in 0..f.len() {
            let conv: f64 = (1..=i).map(|j| (f[j] - f[j - 1]) * g[i - j]).sum();
            worst = worst.max((g[i] - f[i] - conv).abs());
        }
        worst
    }
}

/// P_mk on a grid together with its two state components.
#[derive(Debug, Clone, Serialize)]
pub struct SurvivalCurve {
    pub grid: TimeGrid,
    /// P_mk(t), clamped to [0, 1].
    pub prob: Vec<f64>,
    /// P(functional at t) = A + A∗dU.
    pub functional: Vec<f64>,
    /// P(re-setting at t) = B + B∗dU.
    pub resetting: Vec<f64>,
}

impl SurvivalCurve {
    /// Linear interpolation of P_mk at t.
    pub fn at(&self, t: f64) -> Result<f64> {
        interpolate(&self.grid, &self.prob, t)
    }
}

fn interpolate(grid: &TimeGrid, values: &[f64], t: f64) -> Result<f64> {
    let horizon = grid.horizon();
    if !t.is_finite() || t < 0.0 {
        return Err(Error::domain(format!("time must be finite and nonnegative, got {t}")));
    }
    if t > horizon * (1.0 + 1e-12) {
        return Err(Error::HorizonExceeded { t, horizon });
    }
    let x = (t / grid.step).min(grid.cells as f64);
    let i = (x.floor() as usize).min(grid.cells - 1);
    let frac = x - i as f64;
    Ok(values[i] + frac * (values[i + 1] - values[i]))
}

/// Trapezoid Stieltjes convolution: out_i = Σ_{j=1}^i Δm_j (v_{i−j} + v_{i−j+1}) / 2.
fn stieltjes_convolve(v: &[f64], measure: &[f64]) -> Vec<f64> {
    let n = v.len();
    let dm: Vec<f64> = (0..n).map(|j| if j == 0 { 0.0 } else { measure[j] - measure[j - 1] }).collect();
    let mut out = vec![0.0; n];
    for i in 1..n {
        let mut s = 0.0;
        for j in 1..=i {
            s += dm[j] * (v[i - j] + v[i - j + 1]);
        }
        out[i] = 0.5 * s;
    }
    out
}

/// Solves R = C + C∗R forward on the grid with the trapezoid rule; the
/// j = 1 term involves R_i itself and is moved to the left-hand side.
fn solve_renewal(cdf: &[f64], step: f64) -> Result<Vec<f64>> {
    let n = cdf.len();
    let dc: Vec<f64> = (0..n).map(|j| if j == 0 { 0.0 } else { cdf[j] - cdf[j - 1] }).collect();
    if let Some(&jump) = dc.iter().find(|&&d| d > 0.5) {
        return Err(Error::Resolution { step, jump });
    }
    let mut r = vec![0.0; n];
    for i in 1..n {
        let mut s = cdf[i] + 0.5 * dc[1] * r[i - 1];
        for j in 2..=i {
            s += 0.5 * dc[j] * (r[i - j] + r[i - j + 1]);
        }
        r[i] = s / (1.0 - 0.5 * dc[1]);
    }
    Ok(r)
}

#[derive(Debug, Clone)]
pub struct AnalyticEngine {
    spec: BlockchainSpec,
    opts: AnalyticOptions,
    hack_prob: f64,
    escape_prob: f64,
}

impl AnalyticEngine {
    pub fn new(spec: &BlockchainSpec, opts: AnalyticOptions) -> Result<Self> {
        if !(opts.quad_tol > 0.0) {
            return Err(Error::domain("quadrature tolerance must be positive"));
        }
        let hack_prob = spec.hack_detect_prob(opts.quad_tol)?;
        let escape_prob = spec.escape_prob(opts.quad_tol)?;
        Ok(AnalyticEngine { spec: spec.clone(), opts, hack_prob, escape_prob })
    }

    pub fn spec(&self) -> &BlockchainSpec {
        &self.spec
    }

    pub fn options(&self) -> &AnalyticOptions {
        &self.opts
    }

    /// p_mk.
    pub fn p_mk(&self) -> f64 {
        self.hack_prob
    }

    /// 1 − p_mk, integrated directly.
    pub fn escape_prob(&self) -> f64 {
        self.escape_prob
    }

    fn quad(&self) -> QuadOptions {
        QuadOptions::with_tol(self.opts.quad_tol)
    }

    /// E[N₁] = (1 − p) / p, counting detected cycles before the hack.
    pub fn expected_cycles(&self) -> Result<f64> {
        if self.hack_prob <= 0.0 {
            return Err(Error::InfiniteMean);
        }
        Ok(self.escape_prob / self.hack_prob)
    }

    /// E[Y | Y < Z_m].
    pub fn conditional_detect_mean(&self) -> Result<f64> {
        if self.escape_prob <= 0.0 {
            return Err(Error::ConditioningOnNull("Y < Z_m has probability zero"));
        }
        let s = &self.spec;
        let num = quad::integrate_from_zero(
            |y| y * s.detect().density(y) * s.z_survival(y),
            s.detect_horizon(),
            1.0 + s.detect().origin_order(),
            self.quad(),
        )?;
        Ok(num / self.escape_prob)
    }

    /// E[Z_m | Z_m < Y].
    pub fn conditional_hack_mean(&self) -> Result<f64> {
        if self.hack_prob <= 0.0 {
            return Err(Error::ConditioningOnNull("Z_m < Y has probability zero"));
        }
        let s = &self.spec;
        let num = quad::integrate_from_zero(
            |z| {
                let f = s.z_density(z);
                if f == 0.0 {
                    0.0
                } else {
                    z * f * s.detect().cdf_sf(z).1
                }
            },
            s.detect_horizon_for(self.hack_prob),
            s.z_origin_order(),
            self.quad(),
        )?;
        Ok(num / self.hack_prob)
    }

    /// E[T_m] = E[N₁](E[Y | Y < Z_m] + E[W]) + E[Z_m | Z_m < Y].
    pub fn mean_functional_time(&self) -> Result<f64> {
        if self.hack_prob <= 0.0 {
            return Err(Error::InfiniteMean);
        }
        let tail = self.conditional_hack_mean()?;
        if self.escape_prob <= 0.0 {
            return Ok(tail);
        }
        Ok(self.expected_cycles()? * (self.conditional_detect_mean()? + self.spec.reset().mean()) + tail)
    }

    /// A(t) = P(t < Z_m ∧ Y) = (1 − F_Z(t))(1 − F_Y(t)).
    pub fn functional_survival_term(&self, t: f64) -> Result<f64> {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::domain(format!("time must be finite and nonnegative, got {t}")));
        }
        Ok(self.spec.z_survival(t) * self.spec.detect().cdf_sf(t).1)
    }

    /// B(t) = ∫_0^t (1 − F_W(t − y))(1 − F_Z(y)) f_Y(y) dy.
    pub fn resetting_term(&self, t: f64) -> Result<f64> {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::domain(format!("time must be finite and nonnegative, got {t}")));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        let s = &self.spec;
        let v = quad::integrate_from_zero(
            |y| s.reset().cdf_sf(t - y).1 * s.z_survival(y) * s.detect().density(y),
            t,
            s.detect().origin_order(),
            self.quad(),
        )?;
        Ok(v.clamp(0.0, 1.0))
    }

    /// Grid for answering times up to `t_max`, honoring configured step and
    /// horizon.
    pub fn grid_for(&self, t_max: f64) -> Result<TimeGrid> {
        let horizon = self.opts.horizon.unwrap_or(t_max);
        if t_max > horizon * (1.0 + 1e-12) {
            return Err(Error::HorizonExceeded { t: t_max, horizon });
        }
        let step = self.opts.step.unwrap_or(horizon / self.opts.cells.max(1) as f64);
        TimeGrid::covering(horizon, step)
    }

    /// P(Y ≤ t_i, Y < Z_m) for every gridpoint, from per-cell quadrature.
    fn detected_by(&self, grid: &TimeGrid) -> Result<Vec<f64>> {
        let s = &self.spec;
        let opts = QuadOptions {
            abs_tol: (self.opts.quad_tol / grid.cells as f64).max(1e-15),
            initial_panels: 1,
            ..QuadOptions::default()
        };
        let mut out = Vec::with_capacity(grid.cells + 1);
        out.push(0.0);
        let mut acc = 0.0;
        let integrand = |y: f64| s.detect().density(y) * s.z_survival(y);
        let (first, ub) = quad::origin_substitution(integrand, grid.point(1), s.detect().origin_order());
        for i in 1..=grid.cells {
            let cell = if i == 1 {
                quad::integrate(&first, 0.0, ub, opts)?
            } else {
                quad::integrate(integrand, grid.point(i - 1), grid.point(i), opts)?
            };
            acc += cell;
            out.push(acc);
        }
        Ok(out)
    }

    /// K(t_i) = P(Y + W ≤ t_i, Y < Z_m) by convolving the detected-cycle
    /// masses with F_W.
    fn defective_cycle(&self, grid: &TimeGrid, detected: &[f64]) -> Vec<f64> {
        let fw: Vec<f64> = grid.points().map(|t| self.spec.reset().cdf_sf(t).0).collect();
        stieltjes_convolve(&fw, detected)
    }

    /// CDF of (Y | Y < Z_m) + W at every gridpoint.
    pub fn cycle_length_cdf(&self, grid: &TimeGrid) -> Result<Vec<f64>> {
        if self.escape_prob <= 0.0 {
            return Err(Error::ConditioningOnNull("Y < Z_m has probability zero"));
        }
        let detected = self.detected_by(grid)?;
        let k = self.defective_cycle(grid, &detected);
        Ok(k.iter().map(|&v| (v / self.escape_prob).clamp(0.0, 1.0)).collect())
    }

    pub fn renewal_function(&self, grid: &TimeGrid) -> Result<RenewalGrid> {
        if self.escape_prob <= 0.0 {
            return Err(Error::ConditioningOnNull("Y < Z_m has probability zero"));
        }
        let detected = self.detected_by(grid)?;
        let defective = self.defective_cycle(grid, &detected);
        let cycle_cdf: Vec<f64> = defective.iter().map(|&v| (v / self.escape_prob).clamp(0.0, 1.0)).collect();
        let g = solve_renewal(&cycle_cdf, grid.step)?;
        let killed = solve_renewal(&defective, grid.step)?;
        Ok(RenewalGrid { grid: *grid, cycle_cdf, g, defective_cycle_cdf: defective, killed, detected_by: detected })
    }

    /// P_mk and its components on `grid`.
    pub fn survival_curve(&self, grid: &TimeGrid) -> Result<SurvivalCurve> {
        let renewal = self.renewal_function(grid)?;
        self.survival_from(&renewal)
    }

    pub fn survival_from(&self, renewal: &RenewalGrid) -> Result<SurvivalCurve> {
        let grid = renewal.grid;
        let a: Vec<f64> = grid.points().map(|t| self.spec.z_survival(t) * self.spec.detect().cdf_sf(t).1).collect();
        let b: Vec<f64> = renewal
            .detected_by
            .iter()
            .zip(&renewal.defective_cycle_cdf)
            .map(|(h, k)| (h - k).max(0.0))
            .collect();
        let a_conv = stieltjes_convolve(&a, &renewal.killed);
        let b_conv = stieltjes_convolve(&b, &renewal.killed);
        let functional: Vec<f64> = a.iter().zip(&a_conv).map(|(x, y)| x + y).collect();
        let resetting: Vec<f64> = b.iter().zip(&b_conv).map(|(x, y)| x + y).collect();
        let prob = functional.iter().zip(&resetting).map(|(x, y)| (x + y).clamp(0.0, 1.0)).collect();
        Ok(SurvivalCurve { grid, prob, functional, resetting })
    }

    /// P_mk(t) at each requested time.
    pub fn instantaneous_prob(&self, t_grid: &[f64]) -> Result<Vec<f64>> {
        if t_grid.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::domain("times must be finite and nonnegative"));
        }
        let t_max = t_grid.iter().copied().fold(0.0, f64::max);
        if t_max == 0.0 && self.opts.horizon.is_none() {
            return Ok(vec![1.0; t_grid.len()]);
        }
        let curve = self.survival_curve(&self.grid_for(t_max)?)?;
        t_grid.iter().map(|&t| curve.at(t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::DistributionSpec;

    fn exp(rate: f64) -> DistributionSpec {
        DistributionSpec::exponential(rate).unwrap()
    }

    fn engine(spec: &BlockchainSpec) -> AnalyticEngine {
        AnalyticEngine::new(spec, AnalyticOptions::default()).unwrap()
    }

    fn canonical(m: u32, k: usize) -> BlockchainSpec {
        BlockchainSpec::homogeneous(m, k, exp(1.0), exp(1.0), exp(1.0)).unwrap()
    }

    #[test]
    fn race_conditional_means() {
        let e = engine(&canonical(1, 1));
        assert!((e.conditional_detect_mean().unwrap() - 0.5).abs() < 1e-8);
        assert!((e.conditional_hack_mean().unwrap() - 0.5).abs() < 1e-8);
        assert!((e.mean_functional_time().unwrap() - 2.0).abs() < 1e-7);
        let e = engine(&canonical(1, 3));
        assert!((e.conditional_hack_mean().unwrap() - 0.25).abs() < 1e-8);
    }

    #[test]
    fn vacuous_conditioning_keeps_unconditional_mean() {
        let s = BlockchainSpec::homogeneous(1, 1, DistributionSpec::gamma(50.0, 1.0).unwrap(), exp(100.0), exp(1.0))
            .unwrap();
        let e = engine(&s);
        assert!((e.conditional_detect_mean().unwrap() - 0.01).abs() < 1e-4);
    }

    #[test]
    fn instant_reset_limit() {
        let s = BlockchainSpec::homogeneous(2, 2, exp(1.0), exp(1.0), exp(1e6)).unwrap();
        let e = engine(&s);
        let p = e.p_mk();
        let expected = (1.0 - p) / p * e.conditional_detect_mean().unwrap() + e.conditional_hack_mean().unwrap();
        assert!((e.mean_functional_time().unwrap() - expected).abs() < 1e-5);
    }

    #[test]
    fn functional_term() {
        let e = engine(&canonical(1, 1));
        assert_eq!(e.functional_survival_term(0.0).unwrap(), 1.0);
        assert!((e.functional_survival_term(0.5).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!(e.functional_survival_term(40.0).unwrap() < 1e-30);
    }

    #[test]
    fn resetting_term_edges() {
        let e = engine(&canonical(1, 1));
        assert_eq!(e.resetting_term(0.0).unwrap(), 0.0);
        // closed form for the race: ∫_0^t e^{-(t-y)} e^{-2y} dy = e^{-t}(1 - e^{-t})
        let t = 1.0f64;
        assert!((e.resetting_term(t).unwrap() - (-t).exp() * (1.0 - (-t).exp())).abs() < 1e-9);
        let fast = BlockchainSpec::homogeneous(1, 1, exp(1.0), exp(1.0), exp(1e6)).unwrap();
        assert!(engine(&fast).resetting_term(30.0).unwrap() < 1e-9);
    }

    #[test]
    fn cycle_cdf_shape() {
        let e = engine(&canonical(1, 1));
        let grid = TimeGrid::covering(40.0, 0.01).unwrap();
        let f = e.cycle_length_cdf(&grid).unwrap();
        assert_eq!(f[0], 0.0);
        assert!((f[grid.cells] - 1.0).abs() < 1e-6);
        assert!(f.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn cycle_cdf_matches_two_exponential_closed_form() {
        // hacking far slower than detection, so conditioning is vacuous
        let (d, eta) = (2.0, 0.5);
        let s = BlockchainSpec::homogeneous(1, 1, DistributionSpec::gamma(60.0, 1.0).unwrap(), exp(d), exp(eta))
            .unwrap();
        let e = engine(&s);
        let grid = TimeGrid::covering(20.0, 20.0 / 4096.0).unwrap();
        let f = e.cycle_length_cdf(&grid).unwrap();
        for (i, t) in grid.points().enumerate().step_by(97) {
            let closed = 1.0 - eta / (eta - d) * (-d * t).exp() + d / (eta - d) * (-eta * t).exp();
            assert!((f[i] - closed).abs() < 1e-3, "t={t}: {} vs {closed}", f[i]);
        }
    }

    #[test]
    fn renewal_grid_invariants() {
        let e = engine(&canonical(2, 2));
        let r = e.renewal_function(&TimeGrid::covering(10.0, 10.0 / 2048.0).unwrap()).unwrap();
        assert_eq!(r.g[0], 0.0);
        assert!(r.g.windows(2).all(|w| w[1] >= w[0]));
        assert!(r.cycle_cdf.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(r.residual() <= r.discretization_tolerance());
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let s = BlockchainSpec::homogeneous(3, 1, exp(1.0), exp(50.0), exp(50.0)).unwrap();
        let e = engine(&s);
        assert!(matches!(e.renewal_function(&TimeGrid::new(1.0, 10).unwrap()), Err(Error::Resolution { .. })));
    }

    #[test]
    fn survival_edges() {
        let e = engine(&canonical(1, 1));
        let p = e.instantaneous_prob(&[0.0, 40.0]).unwrap();
        assert_eq!(p[0], 1.0);
        assert!(p[1] < 0.01);
        let grid = TimeGrid::covering(5.0, 5.0 / 512.0).unwrap();
        let curve = e.survival_curve(&grid).unwrap();
        assert!(matches!(curve.at(6.0), Err(Error::HorizonExceeded { .. })));
    }

    #[test]
    fn survival_curve_matches_race_closed_form() {
        // m = k = 1 with all rates one: P(t) solves a linear ODE system with
        // states functional (leave at rate 2) and resetting (leave at rate 1).
        // P_F' = -2 P_F + P_R, P_R' = P_F - P_R, P_F(0) = 1, P_R(0) = 0.
        let e = engine(&canonical(1, 1));
        let ts: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5).collect();
        let got = e.instantaneous_prob(&ts).unwrap();
        let r1 = (-3.0 + 5f64.sqrt()) / 2.0;
        let r2 = (-3.0 - 5f64.sqrt()) / 2.0;
        for (t, g) in ts.iter().zip(&got) {
            // P_F = c1 e^{r1 t} + c2 e^{r2 t}, with c1 + c2 = 1, c1 r1 + c2 r2 = -2
            let c1 = (-2.0 - r2) / (r1 - r2);
            let c2 = 1.0 - c1;
            let pf = c1 * (r1 * t).exp() + c2 * (r2 * t).exp();
            // P_R = P_F' + 2 P_F
            let pr = c1 * (r1 + 2.0) * (r1 * t).exp() + c2 * (r2 + 2.0) * (r2 * t).exp();
            assert!((g - (pf + pr)).abs() < 1e-3, "t={t}: {g} vs {}", pf + pr);
        }
    }
}
