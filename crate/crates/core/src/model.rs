//! The attack model: quorum size, the earliest hack completion time Z_m,
//! the per-cycle hack probability p_mk and the embedded Markov chain.
//!
//! Z_m = min_j Σ_{i=1}^m X_i^j, where hacker j's per-node times are iid.
//! Only exponential and gamma hacker laws are accepted because their m-fold
//! sums stay in the gamma family.

use serde::{Deserialize, Serialize};

use crate::dists::{gamma_density, special, DistributionSpec, Law};
use crate::quad::{self, QuadOptions};
use crate::{Error, Result};

/// Upper-tail mass of the detect law ignored by the improper integrals.
pub const DETECT_TAIL_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackMode {
    /// Data alteration: a majority quorum.
    Destructive,
    /// Data lockout: every node.
    Ransom,
}

impl std::str::FromStr for AttackMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "destructive" => Ok(AttackMode::Destructive),
            "ransom" => Ok(AttackMode::Ransom),
            other => Err(Error::domain(format!("unknown attack mode '{other}'"))),
        }
    }
}

pub fn quorum_m(n: u32, mode: AttackMode) -> Result<u32> {
    if n < 2 {
        return Err(Error::domain(format!("a blockchain needs at least 2 nodes, got {n}")));
    }
    Ok(match mode {
        AttackMode::Destructive => n / 2 + 1,
        AttackMode::Ransom => n,
    })
}

/// Shape and rate of the m-fold sum of one hacker's per-node times.
fn sum_law(law: &DistributionSpec, m: u32) -> Result<(f64, f64)> {
    match law.law() {
        Law::Exponential { rate } => Ok((m as f64, rate)),
        Law::Gamma { shape, rate } => Ok((m as f64 * shape, rate)),
        Law::Weibull { .. } => Err(Error::UnsupportedFamily(
            "hacking times must be exponential or gamma so that their sums stay gamma".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockchainSpec {
    nodes: Option<u32>,
    mode: AttackMode,
    quorum: u32,
    hackers: Vec<DistributionSpec>,
    detect: DistributionSpec,
    reset: DistributionSpec,
    #[serde(skip)]
    sums: Vec<(f64, f64)>,
}

impl BlockchainSpec {
    /// Spec for an n-node chain; the quorum follows from the attack mode.
    pub fn from_nodes(
        n: u32,
        mode: AttackMode,
        hackers: Vec<DistributionSpec>,
        detect: DistributionSpec,
        reset: DistributionSpec,
    ) -> Result<Self> {
        let m = quorum_m(n, mode)?;
        let mut spec = Self::with_quorum(m, hackers, detect, reset)?;
        spec.nodes = Some(n);
        spec.mode = mode;
        Ok(spec)
    }

    /// Spec with the quorum m given directly (sweeps over m use this).
    pub fn with_quorum(
        m: u32,
        hackers: Vec<DistributionSpec>,
        detect: DistributionSpec,
        reset: DistributionSpec,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::domain("quorum m must be at least 1"));
        }
        if hackers.is_empty() {
            return Err(Error::domain("at least one hacker is required"));
        }
        let sums = hackers.iter().map(|h| sum_law(h, m)).collect::<Result<Vec<_>>>()?;
        Ok(BlockchainSpec { nodes: None, mode: AttackMode::Destructive, quorum: m, hackers, detect, reset, sums })
    }

    /// `k` hackers sharing one law.
    pub fn homogeneous(
        m: u32,
        k: usize,
        hacker: DistributionSpec,
        detect: DistributionSpec,
        reset: DistributionSpec,
    ) -> Result<Self> {
        Self::with_quorum(m, vec![hacker; k], detect, reset)
    }

    /// Same laws, different quorum.
    pub fn at_quorum(&self, m: u32) -> Result<Self> {
        Self::with_quorum(m, self.hackers.clone(), self.detect, self.reset)
    }

    /// The first hacker's law repeated `k` times.
    pub fn with_hacker_count(&self, k: usize) -> Result<Self> {
        Self::with_quorum(self.quorum, vec![self.hackers[0]; k], self.detect, self.reset)
    }

    pub fn nodes(&self) -> Option<u32> {
        self.nodes
    }

    pub fn mode(&self) -> AttackMode {
        self.mode
    }

    pub fn m(&self) -> u32 {
        self.quorum
    }

    pub fn k(&self) -> usize {
        self.hackers.len()
    }

    pub fn hackers(&self) -> &[DistributionSpec] {
        &self.hackers
    }

    pub fn detect(&self) -> &DistributionSpec {
        &self.detect
    }

    pub fn reset(&self) -> &DistributionSpec {
        &self.reset
    }

    fn check_hacker(&self, j: usize) -> Result<(f64, f64)> {
        self.sums
            .get(j)
            .copied()
            .ok_or_else(|| Error::domain(format!("hacker index {j} out of range (k = {})", self.k())))
    }

    /// CDF of Σ_{i=1}^m X_i^j. `j` is zero-based.
    pub fn hacker_sum_cdf(&self, j: usize, z: f64) -> Result<f64> {
        let (shape, rate) = self.check_hacker(j)?;
        if !z.is_finite() {
            return Err(Error::domain(format!("time must be finite, got {z}")));
        }
        if z <= 0.0 {
            return Ok(0.0);
        }
        special::regularized_lower_gamma(shape, rate * z)
    }

    pub fn z_m_cdf(&self, z: f64) -> Result<f64> {
        if !z.is_finite() {
            return Err(Error::domain(format!("time must be finite, got {z}")));
        }
        Ok(self.z_cdf_sf(z).0)
    }

    pub fn z_m_pdf(&self, z: f64) -> Result<f64> {
        if !z.is_finite() {
            return Err(Error::domain(format!("time must be finite, got {z}")));
        }
        Ok(self.z_density(z))
    }

    /// P(Z_m > z) = Π_j P(S_j > z).
    pub(crate) fn z_survival(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 1.0;
        }
        self.sums.iter().map(|&(a, b)| special::gamma_pq_unchecked(a, b * z).1).product()
    }

    /// (P(Z_m ≤ z), P(Z_m > z)), keeping the small one accurate on either
    /// side.
    pub(crate) fn z_cdf_sf(&self, z: f64) -> (f64, f64) {
        if z <= 0.0 {
            return (0.0, 1.0);
        }
        let mut ln_sf = 0.0;
        for &(a, b) in &self.sums {
            let (p, q, _) = special::gamma_pq_unchecked(a, b * z);
            ln_sf += if p < 0.5 { (-p).ln_1p() } else { q.ln() };
        }
        (-ln_sf.exp_m1(), ln_sf.exp())
    }

    /// Σ_j f_{S_j}(z) Π_{l≠j} P(S_l > z).
    pub(crate) fn z_density(&self, z: f64) -> f64 {
        if z < 0.0 {
            return 0.0;
        }
        let survivals: Vec<f64> = self.sums.iter().map(|&(a, b)| special::gamma_pq_unchecked(a, b * z).1).collect();
        let mut total = 0.0;
        for (j, &(a, b)) in self.sums.iter().enumerate() {
            let f = gamma_density(a, b, z);
            if f == 0.0 {
                continue;
            }
            let others: f64 = survivals.iter().enumerate().filter(|&(l, _)| l != j).map(|(_, s)| s).product();
            total += f * others;
        }
        total
    }

    /// Exponent a with P(Z_m ≤ z) ~ z^a as z → 0.
    pub(crate) fn z_origin_order(&self) -> f64 {
        self.sums.iter().map(|&(a, _)| a).fold(f64::INFINITY, f64::min)
    }

    /// Right end of the truncated integration range for the improper
    /// integrals weighted by the detect law.
    pub(crate) fn detect_horizon(&self) -> f64 {
        self.detect_horizon_for(1.0)
    }

    /// Horizon whose neglected detect mass is small next to `scale`, for
    /// integrals whose value is about that size.
    pub(crate) fn detect_horizon_for(&self, scale: f64) -> f64 {
        let eps = (DETECT_TAIL_EPS * scale.min(1.0)).max(1e-280);
        self.detect.upper_quantile(eps).expect("tail eps is in (0,1)")
    }

    /// p_mk = P(Z_m ≤ Y) = ∫ F_Z(s) dF_Y(s).
    pub fn hack_detect_prob(&self, tol: f64) -> Result<f64> {
        let integrand = |s: f64| {
            let fz = self.z_cdf_sf(s).0;
            if fz == 0.0 {
                0.0
            } else {
                fz * self.detect.density(s)
            }
        };
        let alpha = self.z_origin_order() + self.detect.origin_order();
        let rough = quad::integrate_from_zero(integrand, self.detect_horizon(), alpha, QuadOptions::with_tol(tol))?;
        let p = quad::integrate_from_zero(integrand, self.detect_horizon_for(rough), alpha, QuadOptions::with_tol(tol))?;
        Ok(p.clamp(0.0, 1.0))
    }

    /// 1 − p_mk = ∫ P(Z > s) f_Y(s) ds, computed directly rather than by
    /// subtraction.
    pub fn escape_prob(&self, tol: f64) -> Result<f64> {
        let integrand = |s: f64| self.z_survival(s) * self.detect.density(s);
        let q = quad::integrate_from_zero(integrand, self.detect_horizon(), self.detect.origin_order(), QuadOptions::with_tol(tol))?;
        Ok(q.clamp(0.0, 1.0))
    }

    /// P_mk(∞): zero unless cycles can never end in a hack.
    pub fn limiting_functional_prob(&self, tol: f64) -> Result<f64> {
        Ok(limiting_functional_prob_from(self.hack_detect_prob(tol)?))
    }
}

/// Conditioning on the first cycle gives P(∞) = (1 − p) P(∞), so P(∞) = 0
/// whenever p > 0.
pub fn limiting_functional_prob_from(p: f64) -> f64 {
    if p > 0.0 {
        0.0
    } else {
        1.0
    }
}

/// Transition matrix of the embedded chain over
/// {0: functional, 1: hacked (absorbing), 2: re-setting}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionMatrix(pub [[f64; 3]; 3]);

pub fn transition_matrix(p: f64) -> Result<TransitionMatrix> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("hack probability must lie in [0,1], got {p}")));
    }
    Ok(TransitionMatrix([[0.0, p, 1.0 - p], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]))
}

impl TransitionMatrix {
    pub fn rows(&self) -> &[[f64; 3]; 3] {
        &self.0
    }

    pub fn is_row_stochastic(&self, tol: f64) -> bool {
        self.0.iter().all(|row| {
            row.iter().all(|&x| x >= -tol && x <= 1.0 + tol) && (row.iter().sum::<f64>() - 1.0).abs() <= tol
        })
    }

    pub fn mul(&self, other: &TransitionMatrix) -> TransitionMatrix {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|l| self.0[i][l] * other.0[l][j]).sum();
            }
        }
        TransitionMatrix(out)
    }

    /// self^(2^e) by repeated squaring.
    pub fn power_of_two(&self, e: u32) -> TransitionMatrix {
        (0..e).fold(*self, |acc, _| acc.mul(&acc))
    }
}
