//! Parametric laws used by the model: exponential, gamma and Weibull.
//!
//! Gamma laws use the (shape, rate) convention. Weibull laws use
//! (scale, shape) with density (β/α)(y/α)^{β−1} exp(−(y/α)^β).

mod gamma_sum;
pub mod special;

pub use gamma_sum::{gamma_sum_cdf, GammaSumSeries, GammaSumSeriesParams};
pub use special::{regularized_lower_gamma, regularized_upper_gamma};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A source of uniform variates on the open interval (0, 1).
pub trait UniformSource {
    fn next_uniform(&mut self) -> f64;
}

impl<R: rand::RngCore + ?Sized> UniformSource for R {
    fn next_uniform(&mut self) -> f64 {
        // 53 random bits, shifted half a step off zero
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Law {
    Exponential { rate: f64 },
    Gamma { shape: f64, rate: f64 },
    Weibull { scale: f64, shape: f64 },
}

/// A validated law with strictly positive, finite parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct DistributionSpec {
    law: Law,
}

fn check_param(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be positive and finite, got {value}")))
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("time must be finite, got {t}")))
    }
}

impl DistributionSpec {
    pub fn new(law: Law) -> Result<Self> {
        match law {
            Law::Exponential { rate } => check_param("rate", rate)?,
            Law::Gamma { shape, rate } => {
                check_param("shape", shape)?;
                check_param("rate", rate)?;
            }
            Law::Weibull { scale, shape } => {
                check_param("scale", scale)?;
                check_param("shape", shape)?;
            }
        }
        Ok(DistributionSpec { law })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(Law::Exponential { rate })
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        Self::new(Law::Gamma { shape, rate })
    }

    pub fn weibull(scale: f64, shape: f64) -> Result<Self> {
        Self::new(Law::Weibull { scale, shape })
    }

    pub fn law(&self) -> Law {
        self.law
    }

    pub fn pdf(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.density(t))
    }

    pub fn cdf(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.cdf_sf(t).0)
    }

    /// Survival function 1 − F(t), evaluated without cancellation.
    pub fn sf(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.cdf_sf(t).1)
    }

    pub fn mean(&self) -> f64 {
        match self.law {
            Law::Exponential { rate } => 1.0 / rate,
            Law::Gamma { shape, rate } => shape / rate,
            Law::Weibull { scale, shape } => scale * special::gamma(1.0 + 1.0 / shape),
        }
    }

    /// Draw one variate.
    ///
    /// Exponential and Weibull laws invert the CDF and consume exactly one
    /// uniform. Gamma laws use Marsaglia–Tsang rejection: each attempt takes
    /// two uniforms for a Box–Muller normal and one for the acceptance test,
    /// and shapes below one take one more uniform for the power boost.
    pub fn sample<U: UniformSource + ?Sized>(&self, src: &mut U) -> f64 {
        match self.law {
            Law::Exponential { rate } => -(-src.next_uniform()).ln_1p() / rate,
            Law::Weibull { scale, shape } => scale * (-(-src.next_uniform()).ln_1p()).powf(1.0 / shape),
            Law::Gamma { shape, rate } => sample_standard_gamma(shape, src) / rate,
        }
    }

    /// Smallest t with 1 − F(t) ≤ eps.
    pub fn upper_quantile(&self, eps: f64) -> Result<f64> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::domain(format!("tail probability must lie in (0,1), got {eps}")));
        }
        Ok(match self.law {
            Law::Exponential { rate } => -eps.ln() / rate,
            Law::Weibull { scale, shape } => scale * (-eps.ln()).powf(1.0 / shape),
            Law::Gamma { shape, rate } => {
                let mut hi = (shape + 1.0).max(1.0);
                while special::gamma_pq_unchecked(shape, hi).1 > eps {
                    hi *= 2.0;
                }
                let mut lo = 0.0;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if special::gamma_pq_unchecked(shape, mid).1 > eps {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-14 * hi {
                        break;
                    }
                }
                hi / rate
            }
        })
    }

    /// Exponent a with density ~ t^a as t → 0.
    pub(crate) fn origin_order(&self) -> f64 {
        match self.law {
            Law::Exponential { .. } => 0.0,
            Law::Gamma { shape, .. } | Law::Weibull { shape, .. } => shape - 1.0,
        }
    }

    pub(crate) fn density(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match self.law {
            Law::Exponential { rate } => rate * (-rate * t).exp(),
            Law::Gamma { shape, rate } => gamma_density(shape, rate, t),
            Law::Weibull { scale, shape } => {
                if t == 0.0 {
                    return power_density_at_zero(shape, 1.0 / scale);
                }
                let z = t / scale;
                (shape / scale) * z.powf(shape - 1.0) * (-z.powf(shape)).exp()
            }
        }
    }

    /// (F(t), 1 − F(t)).
    pub(crate) fn cdf_sf(&self, t: f64) -> (f64, f64) {
        if t <= 0.0 {
            return (0.0, 1.0);
        }
        match self.law {
            Law::Exponential { rate } => (-(-rate * t).exp_m1(), (-rate * t).exp()),
            Law::Gamma { shape, rate } => {
                let (p, q, _) = special::gamma_pq_unchecked(shape, rate * t);
                (p, q)
            }
            Law::Weibull { scale, shape } => {
                let h = (t / scale).powf(shape);
                (-(-h).exp_m1(), (-h).exp())
            }
        }
    }
}

impl<'de> Deserialize<'de> for DistributionSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let law = Law::deserialize(d)?;
        DistributionSpec::new(law).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn gamma_density(shape: f64, rate: f64, t: f64) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    if t == 0.0 {
        return power_density_at_zero(shape, rate);
    }
    (shape * rate.ln() + (shape - 1.0) * t.ln() - rate * t - special::ln_gamma(shape)).exp()
}

/// Value at zero of a density behaving like c·t^{shape−1}.
fn power_density_at_zero(shape: f64, at_shape_one: f64) -> f64 {
    if shape < 1.0 {
        f64::INFINITY
    } else if shape == 1.0 {
        at_shape_one
    } else {
        0.0
    }
}

fn standard_normal<U: UniformSource + ?Sized>(src: &mut U) -> f64 {
    let u1 = src.next_uniform();
    let u2 = src.next_uniform();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Gamma(shape, 1) by Marsaglia and Tsang's squeeze method.
fn sample_standard_gamma<U: UniformSource + ?Sized>(shape: f64, src: &mut U) -> f64 {
    if shape < 1.0 {
        let g = sample_standard_gamma(shape + 1.0, src);
        return g * src.next_uniform().powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = standard_normal(src);
        let v = 1.0 + c * x;
        // the acceptance uniform is drawn even for v <= 0 so each attempt
        // consumes exactly three uniforms
        let u = src.next_uniform();
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}
