//! The three stochastic optimization problems: the one-dimensional example
//! with θ-dependent noise, the quadratic bowl, and the skewed quartic.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{sample_noise, NoiseDraw, NoiseModel};
use crate::params::ParamVector;

/// Which loss value weights the score term of the unbiased estimator on the
/// one-dimensional example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreWeight {
    /// `Q(θ, V) = (θ − 6)²Z + W`, the noisy loss itself.
    #[default]
    NoisyLoss,
    /// `θ²Z + W`, the weight as printed alongside the estimator definition.
    /// Same expectation (the score has mean zero), different variance.
    Printed,
}

/// `Q(θ, Z, W) = (θ − 6)²Z + W` with `Z ~ N(1, 1)`, `W ~ N(θ², σ²θ²)`.
/// The true loss is `(θ − 6)² + θ²`, minimized at θ* = 3 with L(θ*) = 18.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimpleExample1D {
    pub sigma: f64,
    pub score_weight: ScoreWeight,
}

impl SimpleExample1D {
    pub fn new(sigma: f64) -> Result<Self> {
        NoiseModel::SimpleExample { sigma }.validate()?;
        Ok(SimpleExample1D {
            sigma,
            score_weight: ScoreWeight::NoisyLoss,
        })
    }

    pub fn with_score_weight(mut self, weight: ScoreWeight) -> Self {
        self.score_weight = weight;
        self
    }

    pub fn loss(&self, theta: f64) -> f64 {
        (theta - 6.0).powi(2) + theta * theta
    }

    pub fn gradient(&self, theta: f64) -> f64 {
        4.0 * theta - 12.0
    }

    pub fn noisy_loss(&self, theta: f64, z: f64, w: f64) -> f64 {
        (theta - 6.0).powi(2) * z + w
    }

    /// ∂Q/∂θ at fixed (Z, W). `W` is held constant, so only `f(θ, Z)`
    /// contributes.
    pub fn pathwise(&self, theta: f64, z: f64) -> f64 {
        (2.0 * theta - 12.0) * z
    }

    /// ∂ log p_W(w | θ)/∂θ = −1/θ − (θ⁴ − w²)/(σ²θ³).
    pub fn score_log_pdf_gradient(&self, theta: f64, w: f64) -> Result<f64> {
        if theta == 0.0 {
            return Err(Error::Degenerate(
                "score of W | θ is singular at θ = 0".into(),
            ));
        }
        let t3 = theta * theta * theta;
        Ok(-1.0 / theta - (theta.powi(4) - w * w) / (self.sigma * self.sigma * t3))
    }

    /// ∂Q/∂θ + Q·∂ log p_V/∂θ, with `Q` chosen by `score_weight`.
    pub fn score_function_estimate(&self, theta: f64, z: f64, w: f64) -> Result<f64> {
        let weight = match self.score_weight {
            ScoreWeight::NoisyLoss => self.noisy_loss(theta, z, w),
            ScoreWeight::Printed => theta * theta * z + w,
        };
        Ok(self.pathwise(theta, z) + weight * self.score_log_pdf_gradient(theta, w)?)
    }
}

/// `L(θ) = (θ − a)ᵀ(θ − a)` with multiplicative noise `Q = L·V`, or the
/// additive surrogate `Q = L + θᵀε`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadraticProblem {
    pub center: ParamVector,
    pub noise: NoiseModel,
}

impl QuadraticProblem {
    pub fn new(center: ParamVector, noise: NoiseModel) -> Result<Self> {
        check_vector_noise(&noise)?;
        Ok(QuadraticProblem { center, noise })
    }

    pub fn loss(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .zip(self.center.iter())
            .map(|(t, c)| (t - c) * (t - c))
            .sum()
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(self.center.iter())
            .map(|(t, c)| 2.0 * (t - c))
            .collect()
    }
}

/// `L(θ) = Σ x_i² + 0.1 Σ x_i³ + 0.01 Σ x_i⁴` with `x = Bθ` and `p·B` the
/// upper-triangular matrix of ones (diagonal included).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkewedQuartic {
    pub p: usize,
    pub noise: NoiseModel,
    #[serde(skip)]
    b: Vec<f64>,
}

impl SkewedQuartic {
    pub fn new(p: usize, noise: NoiseModel) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidParameter("quartic dimension p must be >= 1".into()));
        }
        check_vector_noise(&noise)?;
        let mut b = vec![0.0; p * p];
        for i in 0..p {
            for j in i..p {
                b[i * p + j] = 1.0 / p as f64;
            }
        }
        Ok(SkewedQuartic { p, noise, b })
    }

    /// The p×p matrix `B`.
    pub fn b_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.p, self.p, &self.b)
    }

    fn transformed(&self, theta: &[f64]) -> Vec<f64> {
        let p = self.p;
        (0..p)
            .map(|i| (0..p).map(|j| self.b[i * p + j] * theta[j]).sum())
            .collect()
    }

    pub fn loss(&self, theta: &[f64]) -> f64 {
        let x = self.transformed(theta);
        let sq: f64 = x.iter().map(|v| v * v).sum();
        let cube: f64 = x.iter().map(|v| v * v * v).sum();
        let quart: f64 = x.iter().map(|v| v.powi(4)).sum();
        sq + 0.1 * cube + 0.01 * quart
    }

    /// `g_m = Σ_i B_im (2x_i + 0.3x_i² + 0.04x_i³)`.
    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let p = self.p;
        let x = self.transformed(theta);
        let inner: Vec<f64> = x
            .iter()
            .map(|v| 2.0 * v + 0.3 * v * v + 0.04 * v * v * v)
            .collect();
        (0..p)
            .map(|m| (0..p).map(|i| self.b[i * p + m] * inner[i]).sum())
            .collect()
    }

    /// `Bᵀ diag(2 + 0.6x + 0.12x²) B`.
    pub fn hessian(&self, theta: &[f64]) -> DMatrix<f64> {
        let b = self.b_matrix();
        let x = self.transformed(theta);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.p,
            x.iter().map(|v| 2.0 + 0.6 * v + 0.12 * v * v),
        ));
        b.transpose() * d * b
    }
}

fn check_vector_noise(noise: &NoiseModel) -> Result<()> {
    noise.validate()?;
    if matches!(noise, NoiseModel::SimpleExample { .. }) {
        return Err(Error::InvalidParameter(
            "the (Z, W) noise pair only applies to the one-dimensional example".into(),
        ));
    }
    Ok(())
}

/// A stochastic optimization problem `min_θ E[Q(θ, V)]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "problem", rename_all = "snake_case")]
pub enum Problem {
    Simple(SimpleExample1D),
    Quadratic(QuadraticProblem),
    Quartic(SkewedQuartic),
}

impl Problem {
    pub fn name(&self) -> &'static str {
        match self {
            Problem::Simple(_) => "simple",
            Problem::Quadratic(_) => "quadratic",
            Problem::Quartic(_) => "quartic",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Problem::Simple(_) => 1,
            Problem::Quadratic(q) => q.center.dim(),
            Problem::Quartic(q) => q.p,
        }
    }

    pub fn theta_star(&self) -> ParamVector {
        match self {
            Problem::Simple(_) => ParamVector::filled(1, 3.0),
            Problem::Quadratic(q) => q.center.clone(),
            Problem::Quartic(q) => ParamVector::zeros(q.p),
        }
    }

    pub fn noise(&self) -> NoiseModel {
        match self {
            Problem::Simple(s) => NoiseModel::SimpleExample { sigma: s.sigma },
            Problem::Quadratic(q) => q.noise,
            Problem::Quartic(q) => q.noise,
        }
    }

    /// The same loss under a different noise model.
    pub fn with_noise(&self, noise: NoiseModel) -> Result<Problem> {
        match self {
            Problem::Simple(s) => match noise {
                NoiseModel::SimpleExample { sigma } => Ok(Problem::Simple(SimpleExample1D {
                    sigma,
                    score_weight: s.score_weight,
                })),
                _ => Err(Error::InvalidParameter(
                    "the one-dimensional example only accepts its (Z, W) noise".into(),
                )),
            },
            Problem::Quadratic(q) => {
                Ok(Problem::Quadratic(QuadraticProblem::new(q.center.clone(), noise)?))
            }
            Problem::Quartic(q) => Ok(Problem::Quartic(SkewedQuartic::new(q.p, noise)?)),
        }
    }

    /// Whether the noise distribution depends on θ, so that a score term is
    /// needed for an unbiased gradient.
    pub fn has_score_term(&self) -> bool {
        matches!(self, Problem::Simple(_))
    }

    pub fn loss(&self, theta: &ParamVector) -> Result<f64> {
        theta.ensure_dim(self.dim())?;
        Ok(match self {
            Problem::Simple(s) => s.loss(theta[0]),
            Problem::Quadratic(q) => q.loss(theta.as_slice()),
            Problem::Quartic(q) => q.loss(theta.as_slice()),
        })
    }

    pub fn true_gradient(&self, theta: &ParamVector) -> Result<ParamVector> {
        theta.ensure_dim(self.dim())?;
        Ok(ParamVector::from_raw(match self {
            Problem::Simple(s) => vec![s.gradient(theta[0])],
            Problem::Quadratic(q) => q.gradient(theta.as_slice()),
            Problem::Quartic(q) => q.gradient(theta.as_slice()),
        }))
    }

    pub fn sample_noise<R: Rng + ?Sized>(
        &self,
        k: usize,
        theta: &ParamVector,
        rng: &mut R,
    ) -> Result<NoiseDraw> {
        theta.ensure_dim(self.dim())?;
        sample_noise(&self.noise(), k, theta, rng)
    }

    pub fn noisy_loss(&self, theta: &ParamVector, noise: &NoiseDraw) -> Result<f64> {
        let loss = self.loss(theta)?;
        match (self, noise) {
            (Problem::Simple(s), NoiseDraw::Pair { z, w }) => Ok(s.noisy_loss(theta[0], *z, *w)),
            (Problem::Quadratic(_) | Problem::Quartic(_), NoiseDraw::Multiplier(v)) => {
                Ok(loss * v)
            }
            (Problem::Quadratic(_) | Problem::Quartic(_), NoiseDraw::Additive(eps)) => {
                check_len(eps, self.dim())?;
                Ok(loss + theta.iter().zip(eps).map(|(t, e)| t * e).sum::<f64>())
            }
            _ => Err(mismatched_noise(self)),
        }
    }

    /// ∂Q/∂θ with the noise realization held fixed.
    pub fn pathwise_gradient(&self, theta: &ParamVector, noise: &NoiseDraw) -> Result<ParamVector> {
        theta.ensure_dim(self.dim())?;
        let out = match (self, noise) {
            (Problem::Simple(s), NoiseDraw::Pair { z, .. }) => vec![s.pathwise(theta[0], *z)],
            (Problem::Quadratic(_) | Problem::Quartic(_), NoiseDraw::Multiplier(v)) => {
                let mut g = self.true_gradient(theta)?.into_vec();
                g.iter_mut().for_each(|x| *x *= v);
                g
            }
            (Problem::Quadratic(_) | Problem::Quartic(_), NoiseDraw::Additive(eps)) => {
                check_len(eps, self.dim())?;
                let mut g = self.true_gradient(theta)?.into_vec();
                g.iter_mut().zip(eps).for_each(|(x, e)| *x += e);
                g
            }
            _ => return Err(mismatched_noise(self)),
        };
        Ok(ParamVector::from_raw(out))
    }

    pub fn hessian_at(&self, theta: &ParamVector) -> Result<DMatrix<f64>> {
        theta.ensure_dim(self.dim())?;
        Ok(match self {
            Problem::Simple(_) => DMatrix::from_element(1, 1, 4.0),
            Problem::Quadratic(q) => DMatrix::identity(q.center.dim(), q.center.dim()) * 2.0,
            Problem::Quartic(q) => q.hessian(theta.as_slice()),
        })
    }
}

fn check_len(v: &[f64], p: usize) -> Result<()> {
    if v.len() == p {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: p,
            actual: v.len(),
        })
    }
}

fn mismatched_noise(problem: &Problem) -> Error {
    Error::InvalidParameter(format!(
        "noise realization does not match the {} problem",
        problem.name()
    ))
}
