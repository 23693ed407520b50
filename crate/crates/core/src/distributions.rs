//! Per-dimension continuous action distributions and the uniform mean
//! perturbation.
//!
//! All three families are location-scale families described by a `(loc,
//! scale)` pair per action dimension, so the perturbation only touches
//! `loc` and every family shares one interface:
//!
//! | family   | density                                   | entropy          |
//! |----------|-------------------------------------------|------------------|
//! | Gaussian | `exp(-(x-μ)²/2σ²) / (σ√(2π))`             | `½ ln(2πeσ²)`    |
//! | Laplace  | `exp(-|x-μ|/b) / 2b`                      | `1 + ln 2b`      |
//! | Gumbel   | `exp(-z - e^-z) / β`, `z = (x-μ)/β`        | `ln β + γ + 1`   |

use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    #[default]
    Gaussian,
    Laplace,
    Gumbel,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Gaussian, Family::Laplace, Family::Gumbel];

    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Laplace => "laplace",
            Family::Gumbel => "gumbel",
        }
    }

    pub fn log_density(self, loc: f64, scale: f64, x: f64) -> f64 {
        match self {
            Family::Gaussian => {
                let z = (x - loc) / scale;
                -0.5 * z * z - scale.ln() - HALF_LN_2PI
            }
            Family::Laplace => -(x - loc).abs() / scale - (2.0 * scale).ln(),
            Family::Gumbel => {
                let z = (x - loc) / scale;
                -z - (-z).exp() - scale.ln()
            }
        }
    }

    /// Partial derivatives of [`Family::log_density`] with respect to
    /// `(loc, scale)`.
    pub fn log_density_grad(self, loc: f64, scale: f64, x: f64) -> (f64, f64) {
        let d = x - loc;
        match self {
            Family::Gaussian => {
                let s2 = scale * scale;
                (d / s2, (d * d - s2) / (s2 * scale))
            }
            Family::Laplace => {
                // Subgradient 0 at the kink.
                let sign = if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                (sign / scale, d.abs() / (scale * scale) - 1.0 / scale)
            }
            Family::Gumbel => {
                let z = d / scale;
                let t = 1.0 - (-z).exp();
                (t / scale, (z * t - 1.0) / scale)
            }
        }
    }

    pub fn entropy(self, scale: f64) -> f64 {
        match self {
            Family::Gaussian => 0.5 + HALF_LN_2PI + scale.ln(),
            Family::Laplace => 1.0 + LN_2 + scale.ln(),
            Family::Gumbel => scale.ln() + EULER_GAMMA + 1.0,
        }
    }

    /// Derivative of the entropy with respect to `ln scale`. Every family
    /// here is location-scale, so entropy is `const + ln scale`.
    pub fn entropy_grad_log_scale(self) -> f64 {
        1.0
    }

    pub fn sample<R: Rng + ?Sized>(self, loc: f64, scale: f64, rng: &mut R) -> f64 {
        match self {
            Family::Gaussian => loc + scale * rng.sample::<f64, _>(StandardNormal),
            Family::Laplace => {
                let u: f64 = rng.sample::<f64, _>(Open01) - 0.5;
                loc - scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            Family::Gumbel => {
                let u: f64 = rng.sample(Open01);
                loc - scale * (-u.ln()).ln()
            }
        }
    }

    /// Whether [`Family::kl`] is available for this family.
    pub fn has_closed_form_kl(self) -> bool {
        matches!(self, Family::Gaussian | Family::Laplace)
    }

    /// Closed-form `KL(p ‖ q)` for one dimension, `None` for Gumbel.
    pub fn kl(self, p_loc: f64, p_scale: f64, q_loc: f64, q_scale: f64) -> Option<f64> {
        let d = p_loc - q_loc;
        match self {
            Family::Gaussian => {
                Some((q_scale / p_scale).ln() + (p_scale * p_scale + d * d) / (2.0 * q_scale * q_scale) - 0.5)
            }
            Family::Laplace => {
                let ad = d.abs();
                Some((q_scale / p_scale).ln() + ad / q_scale + (p_scale / q_scale) * (-ad / p_scale).exp() - 1.0)
            }
            Family::Gumbel => None,
        }
    }

    /// Partials of [`Family::kl`] with respect to `(q_loc, q_scale)`.
    pub fn kl_grad_q(self, p_loc: f64, p_scale: f64, q_loc: f64, q_scale: f64) -> Option<(f64, f64)> {
        let d = p_loc - q_loc;
        match self {
            Family::Gaussian => {
                let q2 = q_scale * q_scale;
                Some((-d / q2, 1.0 / q_scale - (p_scale * p_scale + d * d) / (q2 * q_scale)))
            }
            Family::Laplace => {
                let ad = d.abs();
                let sign = if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                let q2 = q_scale * q_scale;
                let tail = (-ad / p_scale).exp();
                Some((
                    sign * (tail - 1.0) / q_scale,
                    1.0 / q_scale - ad / q2 - (p_scale / q2) * tail,
                ))
            }
            Family::Gumbel => None,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Family::Gaussian),
            "laplace" => Ok(Family::Laplace),
            "gumbel" => Ok(Family::Gumbel),
            other => Err(Error::Usage(format!(
                "unknown distribution {other:?} (expected gaussian, laplace or gumbel)"
            ))),
        }
    }
}

/// Factorized distribution over an action vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DistParams {
    family: Family,
    loc: Vec<f64>,
    scale: Vec<f64>,
}

/// Per-dimension log-densities and their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct LogProb {
    pub per_dim: Vec<f64>,
    pub total: f64,
}

/// Gradient of the summed log-density.
#[derive(Debug, Clone, PartialEq)]
pub struct LogProbGrad {
    pub loc: Vec<f64>,
    pub scale: Vec<f64>,
}

impl DistParams {
    pub fn new(family: Family, loc: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        if loc.len() != scale.len() {
            return Err(Error::Dimension {
                context: "distribution scale",
                expected: loc.len(),
                got: scale.len(),
            });
        }
        if let Some(bad) = loc.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("distribution loc {bad}")));
        }
        if let Some(bad) = scale.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::NonFinite(format!("distribution scale must be positive and finite, got {bad}")));
        }
        Ok(Self { family, loc, scale })
    }

    /// Builds the distribution from a network's `loc` output and a log-scale vector.
    pub fn from_log_scale(family: Family, loc: Vec<f64>, log_scale: &[f64]) -> Result<Self> {
        Self::new(family, loc, log_scale.iter().map(|s| s.exp()).collect())
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn loc(&self) -> &[f64] {
        &self.loc
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn dim(&self) -> usize {
        self.loc.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.loc
            .iter()
            .zip(&self.scale)
            .map(|(&m, &s)| self.family.sample(m, s, rng))
            .collect()
    }

    pub fn log_prob(&self, action: &[f64]) -> Result<LogProb> {
        self.check_action(action)?;
        let per_dim: Vec<f64> = self
            .loc
            .iter()
            .zip(&self.scale)
            .zip(action)
            .map(|((&m, &s), &a)| self.family.log_density(m, s, a))
            .collect();
        let total = per_dim.iter().sum();
        Ok(LogProb { per_dim, total })
    }

    pub fn log_prob_grad(&self, action: &[f64]) -> Result<LogProbGrad> {
        self.check_action(action)?;
        let (loc, scale) = self
            .loc
            .iter()
            .zip(&self.scale)
            .zip(action)
            .map(|((&m, &s), &a)| self.family.log_density_grad(m, s, a))
            .unzip();
        Ok(LogProbGrad { loc, scale })
    }

    /// Differential entropy summed over dimensions.
    pub fn entropy(&self) -> f64 {
        self.scale.iter().map(|&s| self.family.entropy(s)).sum()
    }

    fn check_action(&self, action: &[f64]) -> Result<()> {
        if action.len() != self.loc.len() {
            return Err(Error::Dimension {
                context: "action",
                expected: self.loc.len(),
                got: action.len(),
            });
        }
        Ok(())
    }
}

/// Half-width of the uniform noise added to the distribution location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbSpec {
    alpha: f64,
}

impl PerturbSpec {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::Config(format!("perturbation alpha must be finite and >= 0, got {alpha}")));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(self) -> f64 {
        self.alpha
    }

    pub fn is_disabled(self) -> bool {
        self.alpha == 0.0
    }

    /// One draw of `z ~ U(-alpha, alpha)`.
    pub fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        self.alpha * (2.0 * rng.random::<f64>() - 1.0)
    }
}

/// Returns `params` with every location shifted by an independent
/// `U(-alpha, alpha)` draw. Scale and family are untouched; `alpha = 0`
/// returns the input unchanged without consuming randomness.
pub fn perturb_loc<R: Rng + ?Sized>(params: &DistParams, spec: PerturbSpec, rng: &mut R) -> DistParams {
    if spec.is_disabled() {
        return params.clone();
    }
    DistParams {
        family: params.family,
        loc: params.loc.iter().map(|m| m + spec.draw(rng)).collect(),
        scale: params.scale.clone(),
    }
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Density of `a` under `N(mu, sigma)` convolved with `U(-alpha, alpha)`,
/// i.e. the marginal action density of the perturbed Gaussian.
pub fn effective_density_gaussian_uniform(mu: f64, sigma: f64, alpha: f64, a: f64) -> f64 {
    let hi = std_normal_cdf((a - mu + alpha) / sigma);
    let lo = std_normal_cdf((a - mu - alpha) / sigma);
    (hi - lo) / (2.0 * alpha)
}

/// Differential entropy of the perturbed-Gaussian marginal, by composite
/// Simpson quadrature over `±(alpha + 12 sigma)`.
///
/// This is the entropy of the action actually emitted once the uniform
/// noise is integrated out, as opposed to the conditional entropy
/// `½ ln(2πeσ²)` that [`DistParams::entropy`] reports.
pub fn gaussian_uniform_marginal_entropy(sigma: f64, alpha: f64) -> f64 {
    if alpha == 0.0 {
        return Family::Gaussian.entropy(sigma);
    }
    let half = alpha + 12.0 * sigma;
    simpson(-half, half, 20_000, |a| {
        let p = effective_density_gaussian_uniform(0.0, sigma, alpha, a);
        if p > 0.0 {
            -p * p.ln()
        } else {
            0.0
        }
    })
}

fn simpson(lo: f64, hi: f64, intervals: usize, f: impl Fn(f64) -> f64) -> f64 {
    let n = intervals + intervals % 2;
    let h = (hi - lo) / n as f64;
    let inner: f64 = (1..n)
        .map(|i| {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            w * f(lo + i as f64 * h)
        })
        .sum();
    (f(lo) + f(hi) + inner) * h / 3.0
}

/// Gaussian density, mostly useful for comparisons against the marginal.
pub fn gaussian_density(mu: f64, sigma: f64, a: f64) -> f64 {
    let z = (a - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
}

/// KL(p ‖ q) between diagonal Gaussians given as `(loc, scale)` per dimension.
pub fn gaussian_kl(p_loc: &[f64], p_scale: &[f64], q_loc: &[f64], q_scale: &[f64]) -> f64 {
    p_loc
        .iter()
        .zip(p_scale)
        .zip(q_loc.iter().zip(q_scale))
        .filter_map(|((&mp, &sp), (&mq, &sq))| Family::Gaussian.kl(mp, sp, mq, sq))
        .sum()
}
