//! Gradient estimators: pathwise, score-function, constant-offset biased,
//! and the sliding-window average of past raw estimates.

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::noise::NoiseDraw;
use crate::params::ParamVector;
use crate::problems::Problem;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorKind {
    /// `∂Q/∂θ + Q·∂ log p_V(V | θ)/∂θ`; only meaningful where the noise law
    /// depends on θ.
    ScoreFunctionUnbiased,
    /// `∂Q/∂θ` at fixed noise.
    Pathwise,
    /// Pathwise plus a constant offset `b`.
    OffsetBiased { b: ParamVector },
    /// Uniform average of the last `t` raw estimates of `inner`.
    SlidingWindow { t: usize, inner: Box<EstimatorKind> },
}

impl EstimatorKind {
    pub fn sliding_window(t: usize, inner: EstimatorKind) -> Result<Self> {
        let kind = EstimatorKind::SlidingWindow {
            t,
            inner: Box::new(inner),
        };
        kind.check_shape()?;
        Ok(kind)
    }

    pub fn is_window(&self) -> bool {
        matches!(self, EstimatorKind::SlidingWindow { .. })
    }

    /// The raw (non-window) estimator that produces fresh draws.
    pub fn raw_kind(&self) -> &EstimatorKind {
        match self {
            EstimatorKind::SlidingWindow { inner, .. } => inner,
            other => other,
        }
    }

    pub fn window_size(&self) -> usize {
        match self {
            EstimatorKind::SlidingWindow { t, .. } => *t,
            _ => 1,
        }
    }

    fn check_shape(&self) -> Result<()> {
        if let EstimatorKind::SlidingWindow { t, inner } = self {
            if *t == 0 {
                return Err(Error::InvalidParameter("window size t must be >= 1".into()));
            }
            if inner.is_window() {
                return Err(Error::InvalidParameter(
                    "a sliding window cannot wrap another sliding window".into(),
                ));
            }
        }
        Ok(())
    }

    /// Checks window shape, offset dimension and score support for `problem`.
    pub fn validate_for(&self, problem: &Problem) -> Result<()> {
        self.check_shape()?;
        match self.raw_kind() {
            EstimatorKind::ScoreFunctionUnbiased if !problem.has_score_term() => {
                Err(Error::UnsupportedEstimator {
                    estimator: self.to_string(),
                    problem: problem.name().into(),
                })
            }
            EstimatorKind::OffsetBiased { b } => b.ensure_dim(problem.dim()),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorKind::ScoreFunctionUnbiased => write!(f, "score"),
            EstimatorKind::Pathwise => write!(f, "pathwise"),
            EstimatorKind::OffsetBiased { b } => write!(f, "offset{:?}", b),
            EstimatorKind::SlidingWindow { t, inner } => write!(f, "window(t={t}, {inner})"),
        }
    }
}

/// A raw estimate together with the noise realization it was built from.
#[derive(Debug, Clone)]
pub struct RawDraw {
    pub value: ParamVector,
    pub noise: NoiseDraw,
}

/// Evaluates a non-window estimator on an already drawn noise realization.
pub fn estimate_from_noise(
    kind: &EstimatorKind,
    problem: &Problem,
    theta: &ParamVector,
    noise: &NoiseDraw,
) -> Result<ParamVector> {
    match kind {
        EstimatorKind::Pathwise => problem.pathwise_gradient(theta, noise),
        EstimatorKind::OffsetBiased { b } => {
            b.ensure_dim(problem.dim())?;
            Ok(problem.pathwise_gradient(theta, noise)?.add(b))
        }
        EstimatorKind::ScoreFunctionUnbiased => match (problem, noise) {
            (Problem::Simple(s), NoiseDraw::Pair { z, w }) => Ok(ParamVector::from_raw(vec![
                s.score_function_estimate(theta[0], *z, *w)?,
            ])),
            _ => Err(Error::UnsupportedEstimator {
                estimator: kind.to_string(),
                problem: problem.name().into(),
            }),
        },
        EstimatorKind::SlidingWindow { .. } => Err(Error::InvalidParameter(
            "raw estimates come from non-window estimators only".into(),
        )),
    }
}

/// One fresh draw of a non-window estimator at `theta`, iteration `k`.
pub fn raw_draw<R: Rng + ?Sized>(
    kind: &EstimatorKind,
    problem: &Problem,
    theta: &ParamVector,
    k: usize,
    rng: &mut R,
) -> Result<RawDraw> {
    if kind.is_window() {
        return Err(Error::InvalidParameter(
            "raw estimates come from non-window estimators only".into(),
        ));
    }
    if matches!(kind, EstimatorKind::ScoreFunctionUnbiased) && !problem.has_score_term() {
        return Err(Error::UnsupportedEstimator {
            estimator: kind.to_string(),
            problem: problem.name().into(),
        });
    }
    let noise = problem.sample_noise(k, theta, rng)?;
    let value = estimate_from_noise(kind, problem, theta, &noise)?;
    Ok(RawDraw { value, noise })
}

pub fn raw_estimate<R: Rng + ?Sized>(
    kind: &EstimatorKind,
    problem: &Problem,
    theta: &ParamVector,
    k: usize,
    rng: &mut R,
) -> Result<ParamVector> {
    raw_draw(kind, problem, theta, k, rng).map(|d| d.value)
}

/// Ring of the most recent raw estimates, oldest first.
#[derive(Debug, Clone)]
pub struct WindowBuffer {
    capacity: usize,
    entries: VecDeque<ParamVector>,
}

impl WindowBuffer {
    pub fn new(t: usize) -> Result<Self> {
        if t == 0 {
            return Err(Error::InvalidParameter("window size t must be >= 1".into()));
        }
        Ok(WindowBuffer {
            capacity: t,
            entries: VecDeque::with_capacity(t),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &ParamVector> {
        self.entries.iter()
    }

    /// Most recently pushed estimate.
    pub fn newest(&self) -> Option<&ParamVector> {
        self.entries.back()
    }

    pub fn push(&mut self, fresh: ParamVector) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(fresh);
    }

    /// Arithmetic mean of the held entries, summed oldest to newest.
    pub fn mean(&self) -> Option<ParamVector> {
        let mut it = self.entries.iter();
        let mut acc = it.next()?.clone().into_vec();
        for e in it {
            acc.iter_mut().zip(e.iter()).for_each(|(a, x)| *a += x);
        }
        let n = self.entries.len();
        if n > 1 {
            acc.iter_mut().for_each(|a| *a /= n as f64);
        }
        Some(ParamVector::from_raw(acc))
    }
}

/// Pushes `fresh` and returns the mean over what the window now holds.
pub fn sw_estimate(buffer: &mut WindowBuffer, fresh: ParamVector) -> Result<ParamVector> {
    if let Some(prev) = buffer.newest() {
        fresh.ensure_dim(prev.dim())?;
    }
    buffer.push(fresh);
    Ok(buffer.mean().expect("buffer holds the pushed entry"))
}

/// Conditional bias of the t = 2 window given the history:
/// `(g(θ_{k−1}) − g(θ_k))/2 + (ĝ(θ_{k−1}) − g(θ_{k−1}))/2`,
/// where `raw_km1` is the stored raw estimate produced at `θ_{k−1}`.
pub fn sw_bias_t2(
    problem: &Problem,
    theta_k: &ParamVector,
    theta_km1: &ParamVector,
    raw_km1: &ParamVector,
) -> Result<ParamVector> {
    raw_km1.ensure_dim(problem.dim())?;
    let g_k = problem.true_gradient(theta_k)?;
    let g_km1 = problem.true_gradient(theta_km1)?;
    let out = (0..problem.dim())
        .map(|i| 0.5 * (g_km1[i] - g_k[i]) + 0.5 * (raw_km1[i] - g_km1[i]))
        .collect();
    Ok(ParamVector::from_raw(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseModel;
    use crate::problems::{QuadraticProblem, SimpleExample1D};
    use crate::stream::{derive_stream, RngStreamSpec};

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::from_slice(v).unwrap()
    }

    fn quad(r: f64) -> Problem {
        Problem::Quadratic(
            QuadraticProblem::new(pv(&[1.0, -1.0]), NoiseModel::GaussianMultiplicative { r }).unwrap(),
        )
    }

    #[test]
    fn pathwise_without_noise_is_exact() {
        let q = quad(0.0);
        let mut rng = derive_stream(RngStreamSpec::new(0, 0));
        let th = pv(&[3.0, 2.0]);
        let g = raw_estimate(&EstimatorKind::Pathwise, &q, &th, 0, &mut rng).unwrap();
        assert_eq!(g, q.true_gradient(&th).unwrap());
        let off = EstimatorKind::OffsetBiased { b: pv(&[1.0, 1.0]) };
        let g = raw_estimate(&off, &q, &pv(&[1.0, -1.0]), 0, &mut rng).unwrap();
        assert_eq!(g, pv(&[1.0, 1.0]));
    }

    #[test]
    fn score_on_quadratic_is_unsupported() {
        let q = quad(1.0);
        let mut rng = derive_stream(RngStreamSpec::new(0, 0));
        let err = raw_estimate(&EstimatorKind::ScoreFunctionUnbiased, &q, &pv(&[0.0, 0.0]), 0, &mut rng);
        assert!(matches!(err, Err(Error::UnsupportedEstimator { .. })));
        assert!(EstimatorKind::ScoreFunctionUnbiased.validate_for(&q).is_err());
        let s = Problem::Simple(SimpleExample1D::new(1.0).unwrap());
        assert!(EstimatorKind::ScoreFunctionUnbiased.validate_for(&s).is_ok());
    }

    #[test]
    fn window_shape_rules() {
        assert!(EstimatorKind::sliding_window(0, EstimatorKind::Pathwise).is_err());
        let w = EstimatorKind::sliding_window(2, EstimatorKind::Pathwise).unwrap();
        assert!(EstimatorKind::sliding_window(2, w).is_err());
        let off = EstimatorKind::OffsetBiased { b: pv(&[1.0]) };
        assert!(off.validate_for(&quad(1.0)).is_err());
    }

    #[test]
    fn window_mean_examples() {
        let mut one = WindowBuffer::new(1).unwrap();
        let v = pv(&[0.1, -0.7]);
        assert_eq!(sw_estimate(&mut one, v.clone()).unwrap(), v);

        let mut two = WindowBuffer::new(2).unwrap();
        sw_estimate(&mut two, v.clone()).unwrap();
        assert_eq!(sw_estimate(&mut two, v.clone()).unwrap(), v);

        let mut two = WindowBuffer::new(2).unwrap();
        sw_estimate(&mut two, pv(&[2.0, 0.0])).unwrap();
        assert_eq!(sw_estimate(&mut two, pv(&[0.0, 2.0])).unwrap(), pv(&[1.0, 1.0]));
        // the oldest entry is evicted
        assert_eq!(sw_estimate(&mut two, pv(&[4.0, 4.0])).unwrap(), pv(&[2.0, 3.0]));
        assert_eq!(two.len(), 2);
    }

    #[test]
    fn window_warm_up_averages_what_it_holds() {
        let mut buf = WindowBuffer::new(4).unwrap();
        assert_eq!(sw_estimate(&mut buf, pv(&[3.0])).unwrap(), pv(&[3.0]));
        assert_eq!(sw_estimate(&mut buf, pv(&[5.0])).unwrap(), pv(&[4.0]));
        assert_eq!(sw_estimate(&mut buf, pv(&[7.0])).unwrap(), pv(&[5.0]));
        assert_eq!(buf.len(), 3);
    }

    #[test]
    fn bias_examples() {
        let q = quad(1.0);
        let th = pv(&[2.0, 0.5]);
        let g = q.true_gradient(&th).unwrap();
        let zero = sw_bias_t2(&q, &th, &th, &g).unwrap();
        assert!(zero.iter().all(|x| *x == 0.0));
        let raw = pv(&[10.0, -3.0]);
        let b = sw_bias_t2(&q, &th, &th, &raw).unwrap();
        assert_eq!(b, raw.sub(&g).scale(0.5));
    }
}
