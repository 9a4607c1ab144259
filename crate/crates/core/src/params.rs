//! Parameter vectors and gain sequences.

use std::fmt;
use std::ops::Index;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the p-dimensional parameter space. Always non-empty with
/// finite entries.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidVector("dimension must be at least 1".into()));
        }
        if let Some(i) = entries.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidVector(format!(
                "entry {i} is not finite ({})",
                entries[i]
            )));
        }
        Ok(ParamVector(entries))
    }

    pub fn from_slice(entries: &[f64]) -> Result<Self> {
        Self::new(entries.to_vec())
    }

    pub fn zeros(p: usize) -> Self {
        assert!(p >= 1, "dimension must be at least 1");
        ParamVector(vec![0.0; p])
    }

    pub fn filled(p: usize, value: f64) -> Self {
        assert!(p >= 1 && value.is_finite());
        ParamVector(vec![value; p])
    }

    /// Wraps entries produced by arithmetic on valid vectors. Finiteness is
    /// the caller's responsibility (the optimizer loop checks it every step).
    pub(crate) fn from_raw(entries: Vec<f64>) -> Self {
        debug_assert!(!entries.is_empty());
        ParamVector(entries)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(x, y)| x * y).sum()
    }

    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// ‖self − other‖², accumulated coordinate by coordinate in index order.
    pub fn squared_distance(&self, other: &ParamVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(x, y)| (x - y) * (x - y))
            .sum()
    }

    pub fn sub(&self, other: &ParamVector) -> ParamVector {
        ParamVector(self.0.iter().zip(&other.0).map(|(x, y)| x - y).collect())
    }

    pub fn add(&self, other: &ParamVector) -> ParamVector {
        ParamVector(self.0.iter().zip(&other.0).map(|(x, y)| x + y).collect())
    }

    pub fn scale(&self, s: f64) -> ParamVector {
        ParamVector(self.0.iter().map(|x| x * s).collect())
    }

    pub fn ensure_dim(&self, expected: usize) -> Result<()> {
        if self.dim() == expected {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected,
                actual: self.dim(),
            })
        }
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }

    pub fn from_dvector(v: &DVector<f64>) -> Result<Self> {
        Self::from_slice(v.as_slice())
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl fmt::Debug for ParamVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.0).finish()
    }
}

impl TryFrom<Vec<f64>> for ParamVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        ParamVector::new(v)
    }
}

impl From<ParamVector> for Vec<f64> {
    fn from(v: ParamVector) -> Vec<f64> {
        v.0
    }
}

/// `true` iff `a > 0` and `alpha` lies in (0.5, 1].
pub fn gain_is_admissible(a: f64, alpha: f64) -> bool {
    a.is_finite() && a > 0.0 && alpha > 0.5 && alpha <= 1.0
}

/// Decaying step sizes `a_k = a / (k + 1)^alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainSequence {
    a: f64,
    alpha: f64,
}

impl GainSequence {
    pub fn new(a: f64, alpha: f64) -> Result<Self> {
        if gain_is_admissible(a, alpha) {
            Ok(GainSequence { a, alpha })
        } else {
            Err(Error::InvalidGain { a, alpha })
        }
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn at(&self, k: usize) -> f64 {
        gain_at(self, k)
    }
}

pub fn gain_at(gain: &GainSequence, k: usize) -> f64 {
    gain.a / ((k as f64) + 1.0).powf(gain.alpha)
}
