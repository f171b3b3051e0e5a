use serde::{Deserialize, Serialize};

use super::TensorError;

/// Flattened model parameters or gradients. Every privacy mechanism in the
/// crate acts on this type.
///
/// Entries are always finite and the vector is never empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Result<Self, TensorError> {
        if values.is_empty() {
            return Err(TensorError::Config(
                "parameter vector must be non-empty".into(),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NumericOverflow(format!(
                "non-finite entry {} at index {i}",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    /// All-zero vector. Panics when `dim == 0`.
    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "parameter vector must be non-empty");
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn check_dim(&self, other: &Self) -> Result<(), TensorError> {
        if self.dim() != other.dim() {
            return Err(TensorError::DimMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, TensorError> {
        self.check_dim(other)?;
        Self::new(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Self) -> Result<Self, TensorError> {
        self.check_dim(other)?;
        Self::new(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// `self += other`, in place.
    pub fn add_assign(&mut self, other: &Self) -> Result<(), TensorError> {
        self.check_dim(other)?;
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
        if self.0.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NumericOverflow("vector sum overflowed".into()));
        }
        Ok(())
    }

    pub fn scale(&self, factor: f64) -> Result<Self, TensorError> {
        Self::new(self.0.iter().map(|v| v * factor).collect())
    }

    /// Sum of a non-empty list of equal-dim vectors, accumulated in order.
    pub fn sum<'a, I>(vectors: I) -> Result<Self, TensorError>
    where
        I: IntoIterator<Item = &'a ParameterVector>,
    {
        let mut iter = vectors.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| TensorError::Config("cannot sum an empty list".into()))?;
        let mut acc = first.clone();
        for v in iter {
            acc.add_assign(v)?;
        }
        Ok(acc)
    }
}

impl TryFrom<Vec<f64>> for ParameterVector {
    type Error = TensorError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<ParameterVector> for Vec<f64> {
    fn from(v: ParameterVector) -> Self {
        v.0
    }
}

impl AsRef<[f64]> for ParameterVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}
