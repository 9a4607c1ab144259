//! Noise models for the stochastic losses.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamVector;

/// Default truncation half-width (in standard deviations) for bounded noise.
pub const DEFAULT_TRUNCATION: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    /// `V ~ N(1, r)`.
    GaussianMultiplicative { r: f64 },
    /// `V ~ N(1, r)` conditioned on `|V - 1| <= c·sqrt(r)`, by rejection.
    TruncatedGaussianMultiplicative { r: f64, c: f64 },
    /// `V_k = 1 + X_k / (k + 1)^gamma` with `X_k` a truncated `N(0, r)`.
    Decaying { gamma: f64, r: f64, c: f64 },
    /// The pair `(Z, W)` with `Z ~ N(1, 1)` and `W | θ ~ N(θ², σ²θ²)`.
    SimpleExample { sigma: f64 },
    /// Additive gradient noise `ε ~ N(0, c·I)` entering as `Q = L(θ) + θᵀε`.
    /// Only used to validate the asymptotic-normality predictions; it is not
    /// one of the multiplicative models above.
    Additive { c: f64 },
}

/// One realization of a noise model.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseDraw {
    Multiplier(f64),
    Pair { z: f64, w: f64 },
    Additive(Vec<f64>),
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match *self {
            NoiseModel::GaussianMultiplicative { r } if !(r >= 0.0 && r.is_finite()) => {
                bad(format!("noise variance r must be >= 0, got {r}"))
            }
            NoiseModel::TruncatedGaussianMultiplicative { r, c }
            | NoiseModel::Decaying { r, c, .. }
                if !(r >= 0.0 && r.is_finite() && c > 0.0 && c.is_finite()) =>
            {
                bad(format!(
                    "truncated noise needs r >= 0 and c > 0, got r = {r}, c = {c}"
                ))
            }
            NoiseModel::Decaying { gamma, .. } if !(gamma >= 0.5 && gamma.is_finite()) => {
                bad(format!("decay exponent gamma must be >= 0.5, got {gamma}"))
            }
            NoiseModel::SimpleExample { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                bad(format!("sigma must be positive, got {sigma}"))
            }
            NoiseModel::Additive { c } if !(c >= 0.0 && c.is_finite()) => {
                bad(format!("additive noise variance c must be >= 0, got {c}"))
            }
            _ => Ok(()),
        }
    }

    pub fn is_multiplicative(&self) -> bool {
        matches!(
            self,
            NoiseModel::GaussianMultiplicative { .. }
                | NoiseModel::TruncatedGaussianMultiplicative { .. }
                | NoiseModel::Decaying { .. }
        )
    }

    /// Limiting variance of a multiplicative `V` as `k → ∞`, or `None` for
    /// non-multiplicative models.
    pub fn limit_multiplier_variance(&self) -> Option<f64> {
        match *self {
            NoiseModel::GaussianMultiplicative { r } => Some(r),
            NoiseModel::TruncatedGaussianMultiplicative { r, c } => {
                Some(r * truncated_unit_variance(c))
            }
            NoiseModel::Decaying { .. } => Some(0.0),
            _ => None,
        }
    }
}

/// Variance of a standard normal conditioned on `|x| <= c`.
pub fn truncated_unit_variance(c: f64) -> f64 {
    let mass = libm::erf(c / std::f64::consts::SQRT_2);
    let density = (-0.5 * c * c).exp() / (2.0 * std::f64::consts::PI).sqrt();
    1.0 - 2.0 * c * density / mass
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Mean-zero normal with variance `r`, rejected until `|x| <= c·sqrt(r)`.
fn truncated_centered<R: Rng + ?Sized>(r: f64, c: f64, rng: &mut R) -> f64 {
    let sd = r.sqrt();
    let bound = c * sd;
    loop {
        let x = sd * standard_normal(rng);
        if x.abs() <= bound {
            return x;
        }
    }
}

/// Draws one noise realization at iteration `k` and iterate `theta`.
pub fn sample_noise<R: Rng + ?Sized>(
    model: &NoiseModel,
    k: usize,
    theta: &ParamVector,
    rng: &mut R,
) -> Result<NoiseDraw> {
    match *model {
        NoiseModel::GaussianMultiplicative { r } => {
            Ok(NoiseDraw::Multiplier(1.0 + r.sqrt() * standard_normal(rng)))
        }
        NoiseModel::TruncatedGaussianMultiplicative { r, c } => {
            // Rejection on V itself so that |V − 1| <= c·sqrt(r) holds in
            // floating point, not only in exact arithmetic.
            let sd = r.sqrt();
            let bound = c * sd;
            loop {
                let v = 1.0 + sd * standard_normal(rng);
                if (v - 1.0).abs() <= bound {
                    return Ok(NoiseDraw::Multiplier(v));
                }
            }
        }
        NoiseModel::Decaying { gamma, r, c } => {
            let x = truncated_centered(r, c, rng);
            Ok(NoiseDraw::Multiplier(
                1.0 + x / ((k as f64) + 1.0).powf(gamma),
            ))
        }
        NoiseModel::SimpleExample { sigma } => {
            if theta.dim() != 1 {
                return Err(Error::DimensionMismatch {
                    expected: 1,
                    actual: theta.dim(),
                });
            }
            let t = theta[0];
            if t == 0.0 {
                return Err(Error::Degenerate(
                    "W ~ N(θ², σ²θ²) is undefined at θ = 0".into(),
                ));
            }
            let z = 1.0 + standard_normal(rng);
            let w = t * t + sigma * t.abs() * standard_normal(rng);
            Ok(NoiseDraw::Pair { z, w })
        }
        NoiseModel::Additive { c } => {
            let sd = c.sqrt();
            Ok(NoiseDraw::Additive(
                (0..theta.dim())
                    .map(|_| sd * standard_normal(rng))
                    .collect(),
            ))
        }
    }
}
