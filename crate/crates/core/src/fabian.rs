//! Asymptotic normality of the iterates.
//!
//! With `Γ = P Λ Pᵀ` the symmetric eigendecomposition of the limiting gain
//! matrix, the scaled error `k^{α/2}(θ̂_k − θ*)` tends to `N(μ, Σ)` where
//!
//! ```text
//! μ = (Γ − β₊/2·I) T
//! Σ = P M Pᵀ,   M_ij = (Pᵀ Φ C Φᵀ P)_ij / (Λ_ii + Λ_jj − β₊)
//! ```
//!
//! and `β₊ = β` when `α = 1`, zero otherwise. Both SGD and SW-SGD use
//! `Γ = a·H*`, `Φ = −a·I`, `T = 0`, `β = α`. The finite-k MSE follows as
//! `tr(Σ)/k^α + ‖μ‖²/k^α`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{raw_estimate, EstimatorKind};
use crate::linalg::{ensure_symmetric, min_eigenvalue, symmetric_eigen, symmetrize};
use crate::noise::NoiseModel;
use crate::params::ParamVector;
use crate::problems::Problem;

/// Minimum admissible `Λ_ii + Λ_jj − β₊`.
pub const STABILITY_MARGIN: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuForm {
    /// `(Γ − β₊/2·I)·T`.
    #[default]
    Literal,
    /// `(Γ − β₊/2·I)⁻¹·T`.
    Inverse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FabianInputs {
    pub gamma: DMatrix<f64>,
    pub phi: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub t: DVector<f64>,
    pub alpha: f64,
    pub beta: f64,
}

impl FabianInputs {
    pub fn dim(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.dim();
        for (rows, cols) in [
            self.gamma.shape(),
            self.phi.shape(),
            self.c.shape(),
            (self.t.len(), p),
        ] {
            if rows != p || cols != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    actual: if rows != p { rows } else { cols },
                });
            }
        }
        ensure_symmetric(&self.gamma, SYMMETRY_TOL)?;
        ensure_symmetric(&self.c, SYMMETRY_TOL)?;
        let floor = -SYMMETRY_TOL * self.c.trace().abs().max(1.0);
        if min_eigenvalue(&self.c) < floor {
            return Err(Error::InvalidParameter(
                "gradient-noise covariance C is not positive semidefinite".into(),
            ));
        }
        beta_plus(self.alpha)?;
        Ok(())
    }

    /// `β₊`: `β` when `α = 1`, zero otherwise.
    pub fn beta_plus(&self) -> Result<f64> {
        Ok(beta_plus(self.alpha)? * self.beta)
    }
}

/// `β₊` for the in-scope algorithms (`β = α`): 1 when `α = 1`, else 0.
pub fn beta_plus(alpha: f64) -> Result<f64> {
    if !(alpha > 0.5 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0.5, 1], got {alpha}"
        )));
    }
    Ok(if alpha == 1.0 { 1.0 } else { 0.0 })
}

pub fn asymptotic_sigma(inputs: &FabianInputs) -> Result<DMatrix<f64>> {
    inputs.validate()?;
    let bp = inputs.beta_plus()?;
    let (lambda, p) = symmetric_eigen(&inputs.gamma);
    let n = inputs.dim();
    for i in 0..n {
        for j in i..n {
            if lambda[i] + lambda[j] - bp <= STABILITY_MARGIN {
                return Err(Error::Unstable {
                    lambda_i: lambda[i],
                    lambda_j: lambda[j],
                    beta_plus: bp,
                });
            }
        }
    }
    let rotated = p.transpose() * &inputs.phi * &inputs.c * inputs.phi.transpose() * &p;
    let m = DMatrix::from_fn(n, n, |i, j| rotated[(i, j)] / (lambda[i] + lambda[j] - bp));
    Ok(symmetrize(&(&p * m * p.transpose())))
}

pub fn asymptotic_mu(inputs: &FabianInputs, form: MuForm) -> Result<DVector<f64>> {
    inputs.validate()?;
    let n = inputs.dim();
    let shifted = &inputs.gamma - DMatrix::identity(n, n) * (inputs.beta_plus()? / 2.0);
    match form {
        MuForm::Literal => Ok(shifted * &inputs.t),
        MuForm::Inverse => shifted.lu().solve(&inputs.t).ok_or(Error::Singular),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticDistribution {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub alpha: f64,
}

impl AsymptoticDistribution {
    pub fn from_inputs(inputs: &FabianInputs, form: MuForm) -> Result<Self> {
        Ok(AsymptoticDistribution {
            mu: asymptotic_mu(inputs, form)?,
            sigma: asymptotic_sigma(inputs)?,
            alpha: inputs.alpha,
        })
    }

    pub fn trace(&self) -> f64 {
        self.sigma.trace()
    }
}

/// Predicted `E‖θ̂_k − θ*‖² = tr(Σ)/k^α + ‖μ‖²/k^α`.
pub fn mse_at(dist: &AsymptoticDistribution, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("the MSE prediction needs k >= 1".into()));
    }
    let scale = (k as f64).powf(dist.alpha);
    Ok(dist.sigma.trace() / scale + dist.mu.norm_squared() / scale)
}

fn gain_inputs(problem: &Problem, a: f64, alpha: f64, c: DMatrix<f64>) -> Result<FabianInputs> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::InvalidParameter(format!("gain scale a must be positive, got {a}")));
    }
    let p = problem.dim();
    let h = problem.hessian_at(&problem.theta_star())?;
    let inputs = FabianInputs {
        gamma: h * a,
        phi: DMatrix::identity(p, p) * -a,
        c,
        t: DVector::zeros(p),
        alpha,
        beta: alpha,
    };
    inputs.validate()?;
    Ok(inputs)
}

/// `Γ = a·H(θ*)`, `Φ = −a·I`, `T = 0`, `β = α`.
pub fn sgd_inputs(problem: &Problem, a: f64, alpha: f64, c: DMatrix<f64>) -> Result<FabianInputs> {
    gain_inputs(problem, a, alpha, c)
}

/// Same assignments as SGD; the window changes only the noise covariance.
pub fn swsgd_inputs(
    problem: &Problem,
    a: f64,
    alpha: f64,
    c_window: DMatrix<f64>,
) -> Result<FabianInputs> {
    gain_inputs(problem, a, alpha, c_window)
}

/// Covariance of the gradient noise at `theta_ref`, in closed form.
///
/// Multiplicative noise with limiting variance `s` gives `s·g(θ)g(θ)ᵀ`;
/// additive noise gives `c·I`. A constant offset does not change it.
pub fn closed_form_c(problem: &Problem, theta_ref: &ParamVector) -> Result<DMatrix<f64>> {
    let p = problem.dim();
    theta_ref.ensure_dim(p)?;
    match problem.noise() {
        NoiseModel::Additive { c } => Ok(DMatrix::identity(p, p) * c),
        model => match model.limit_multiplier_variance() {
            Some(s) => {
                let g = problem.true_gradient(theta_ref)?.to_dvector();
                Ok(&g * g.transpose() * s)
            }
            None => Err(Error::InvalidParameter(format!(
                "no closed-form gradient covariance for the {} problem; use a sampled policy",
                problem.name()
            ))),
        },
    }
}

/// Empirical covariance (divisor n − 1) of `n` independent estimates at
/// `theta_ref`, drawn with noise index `k`. For a sliding window each sample
/// is the mean of `t` fresh raw draws at the same point.
pub fn estimate_c<R: Rng + ?Sized>(
    problem: &Problem,
    estimator: &EstimatorKind,
    theta_ref: &ParamVector,
    k: usize,
    n: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if n < 2 {
        return Err(Error::InvalidParameter("estimate_c needs at least 2 samples".into()));
    }
    estimator.validate_for(problem)?;
    let p = problem.dim();
    let t = estimator.window_size();
    let raw = estimator.raw_kind();

    let mut mean = DVector::<f64>::zeros(p);
    let mut m2 = DMatrix::<f64>::zeros(p, p);
    for i in 0..n {
        let mut x = DVector::<f64>::zeros(p);
        for _ in 0..t {
            x += raw_estimate(raw, problem, theta_ref, k, rng)?.to_dvector();
        }
        if t > 1 {
            x /= t as f64;
        }
        let delta = &x - &mean;
        mean += &delta / (i + 1) as f64;
        let delta_after = &x - &mean;
        m2 += &delta * delta_after.transpose();
    }
    Ok(symmetrize(&(m2 / (n - 1) as f64)))
}

/// Solves `tr(Σ)/k^α = wᵀw + tr(Σ′)/k^α` for k.
pub fn intersection_k(
    tr_sigma_unbiased: f64,
    tr_sigma_biased: f64,
    w: &[f64],
    alpha: f64,
) -> Result<f64> {
    let wtw: f64 = w.iter().map(|x| x * x).sum();
    if !(wtw > 0.0) {
        return Err(Error::InvalidParameter(
            "the bias offset w must be nonzero for an intersection".into(),
        ));
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    if tr_sigma_unbiased <= tr_sigma_biased {
        return Err(Error::NoIntersection {
            tr_unbiased: tr_sigma_unbiased,
            tr_biased: tr_sigma_biased,
        });
    }
    Ok(((tr_sigma_unbiased - tr_sigma_biased) / wtw).powf(1.0 / alpha))
}
