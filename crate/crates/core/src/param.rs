use std::fmt;
use std::ops::Index;

use serde::{Deserialize, Serialize};

/// A point in parameter space.
///
/// One-dimensional for the Galton board, four-dimensional (log rates) for the
/// Lotka-Volterra model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamPoint(Vec<f64>);

impl ParamPoint {
    pub fn new(values: Vec<f64>) -> Self {
        ParamPoint(values)
    }

    pub fn scalar(value: f64) -> Self {
        ParamPoint(vec![value])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    /// Component-wise `self - other`.
    pub fn sub(&self, other: &ParamPoint) -> Vec<f64> {
        self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()
    }
}

impl Index<usize> for ParamPoint {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<Vec<f64>> for ParamPoint {
    fn from(v: Vec<f64>) -> Self {
        ParamPoint(v)
    }
}

impl From<f64> for ParamPoint {
    fn from(v: f64) -> Self {
        ParamPoint(vec![v])
    }
}

impl fmt::Display for ParamPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}
