//! Distribution of a sum of independent gamma variates as a single-gamma
//! mixture (Moschopoulos series).
//!
//! For X_i ~ Gamma(α_i, β_i) with β* = max β_i and ρ = Σ α_i,
//!
//! ```text
//! F(t) = C Σ_k δ_k P(ρ + k, β* t)
//! C    = Π (β_i / β*)^{α_i}
//! γ_j  = Σ α_i (1 − β_i/β*)^j / j
//! δ_0  = 1,  δ_{k+1} = 1/(k+1) Σ_{i=1}^{k+1} i γ_i δ_{k+1−i}
//! ```
//!
//! The mixture weights C·δ_k are nonnegative and sum to one, so the mass not
//! yet summed bounds the truncation error.

use super::special;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaSumSeriesParams {
    pub shape1: f64,
    pub rate1: f64,
    pub shape2: f64,
    pub rate2: f64,
    pub tolerance: f64,
    pub max_terms: usize,
}

impl GammaSumSeriesParams {
    pub fn new(shape1: f64, rate1: f64, shape2: f64, rate2: f64) -> Self {
        GammaSumSeriesParams { shape1, rate1, shape2, rate2, tolerance: 1e-10, max_terms: 10_000 }
    }
}

/// Precomputed mixture weights for one set of parameters.
#[derive(Debug, Clone)]
pub struct GammaSumSeries {
    total_shape: f64,
    max_rate: f64,
    weights: Vec<f64>,
    tolerance: f64,
}

impl GammaSumSeries {
    pub fn new(p: &GammaSumSeriesParams) -> Result<Self> {
        for (name, v) in [("shape1", p.shape1), ("rate1", p.rate1), ("shape2", p.shape2), ("rate2", p.rate2)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !(p.tolerance > 0.0) || p.max_terms == 0 {
            return Err(Error::domain("series tolerance and term cap must be positive"));
        }
        let parts = [(p.shape1, p.rate1), (p.shape2, p.rate2)];
        let max_rate = p.rate1.max(p.rate2);
        let total_shape = p.shape1 + p.shape2;
        let ln_c: f64 = parts.iter().map(|&(a, b)| a * (b / max_rate).ln()).sum();
        let c = ln_c.exp();

        // ratios 1 − β_i/β*, one of which is zero
        let ratios: Vec<(f64, f64)> = parts.iter().map(|&(a, b)| (a, 1.0 - b / max_rate)).collect();
        let mut gammas = vec![0.0]; // 1-based
        let mut deltas = vec![1.0];
        let mut weights = vec![c];
        let mut mass = c;
        while 1.0 - mass > p.tolerance && weights.len() < p.max_terms {
            let j = gammas.len();
            let g: f64 = ratios.iter().map(|&(a, r)| a * r.powi(j as i32)).sum::<f64>() / j as f64;
            gammas.push(g);
            let k1 = deltas.len();
            let next: f64 = (1..=k1).map(|i| i as f64 * gammas[i] * deltas[k1 - i]).sum::<f64>() / k1 as f64;
            deltas.push(next);
            let w = c * next;
            weights.push(w);
            mass += w;
            if w == 0.0 && mass < 1.0 - p.tolerance {
                // weights underflowed: nothing more can be summed
                break;
            }
        }
        Ok(GammaSumSeries { total_shape, max_rate, weights, tolerance: p.tolerance })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// CDF at t ≥ 0, clamped to [0, 1].
    pub fn cdf(&self, t: f64) -> Result<f64> {
        if !t.is_finite() {
            return Err(Error::domain(format!("time must be finite, got {t}")));
        }
        if t <= 0.0 {
            return Ok(0.0);
        }
        let x = self.max_rate * t;
        let mut remaining = 1.0;
        let mut sum = 0.0;
        for (k, w) in self.weights.iter().enumerate() {
            let p = special::gamma_pq_unchecked(self.total_shape + k as f64, x).0;
            sum += w * p;
            remaining -= w;
            // P(ρ + k, x) decreases in k, so it bounds every later term
            if remaining.max(0.0) * p < self.tolerance {
                return Ok(sum.clamp(0.0, 1.0));
            }
        }
        Err(Error::Convergence { what: "gamma-sum series", terms: self.weights.len() })
    }
}

/// CDF of the sum of two independent gamma variates.
pub fn gamma_sum_cdf(p: &GammaSumSeriesParams, t: f64) -> Result<f64> {
    GammaSumSeries::new(p)?.cdf(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::gamma_density;

    /// Trapezoid convolution of the two densities, then trapezoid integration
    /// of the resulting density up to t.
    fn convolution_oracle(a1: f64, b1: f64, a2: f64, b2: f64, t: f64, h: f64) -> f64 {
        let n = (t / h).round() as usize;
        let f1: Vec<f64> = (0..=n).map(|i| gamma_density(a1, b1, i as f64 * h)).collect();
        let f2: Vec<f64> = (0..=n).map(|i| gamma_density(a2, b2, i as f64 * h)).collect();
        let mut conv = vec![0.0; n + 1];
        for i in 0..=n {
            let mut s = 0.0;
            for j in 0..=i {
                let w = if j == 0 || j == i { 0.5 } else { 1.0 };
                s += w * f1[j] * f2[i - j];
            }
            conv[i] = s * h;
        }
        let mut total = 0.0;
        for i in 1..=n {
            total += 0.5 * h * (conv[i - 1] + conv[i]);
        }
        total
    }

    #[test]
    fn equal_rates_collapse_to_a_single_gamma() {
        let p = GammaSumSeriesParams::new(1.0, 1.0, 1.0, 1.0);
        let s = GammaSumSeries::new(&p).unwrap();
        assert_eq!(s.weights(), &[1.0]);
        let v = s.cdf(1.0).unwrap();
        assert!((v - (1.0 - 2.0 * (-1.0f64).exp())).abs() < 1e-14);
    }

    #[test]
    fn total_mass_at_large_t() {
        let p = GammaSumSeriesParams::new(1.0, 1.0, 1.0, 2.0);
        assert!((gamma_sum_cdf(&p, 50.0).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn matches_convolution_oracle() {
        // frozen from the oracle at h = 1e-4 (see convolution_oracle)
        let oracle = convolution_oracle(2.0, 1.0, 3.0, 2.0, 2.0, 1e-4);
        let p = GammaSumSeriesParams::new(2.0, 1.0, 3.0, 2.0);
        let v = gamma_sum_cdf(&p, 2.0).unwrap();
        assert!((v - oracle).abs() < 1e-6, "{v} vs {oracle}");
    }

    #[test]
    fn exponential_pair_closed_form() {
        // P(Y + W <= t) = 1 − η/(η−δ) e^{−δt} + δ/(η−δ) e^{−ηt}
        let (d, e) = (0.7, 2.3);
        let p = GammaSumSeriesParams::new(1.0, d, 1.0, e);
        for &t in &[0.1, 0.5, 1.0, 3.0, 8.0] {
            let closed = 1.0 - e / (e - d) * (-d * t).exp() + d / (e - d) * (-e * t).exp();
            assert!((gamma_sum_cdf(&p, t).unwrap() - closed).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn weights_are_a_distribution() {
        let p = GammaSumSeriesParams::new(2.5, 0.3, 1.5, 4.0);
        let s = GammaSumSeries::new(&p).unwrap();
        assert!(s.weights().iter().all(|&w| w >= 0.0));
        let total: f64 = s.weights().iter().sum();
        assert!(total <= 1.0 + 1e-10 && total >= 1.0 - 1e-10);
    }

    #[test]
    fn term_cap_reports_convergence_error() {
        let mut p = GammaSumSeriesParams::new(5.0, 0.01, 5.0, 10.0);
        p.max_terms = 5;
        match gamma_sum_cdf(&p, 100.0) {
            Err(Error::Convergence { terms, .. }) => assert_eq!(terms, 5),
            other => panic!("expected convergence error, got {other:?}"),
        }
    }
}
