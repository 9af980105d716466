use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `| ‖v‖ − 1 |` for a vector to count as unit-norm.
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// A finite, non-empty real vector with its Euclidean norm cached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector {
    values: Vec<f64>,
    norm: f64,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("embedding dimension must be at least 1"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("at component {i}"),
            });
        }
        let norm = l2_norm(&values);
        Ok(Self { values, norm })
    }

    /// Rescales to unit length.
    pub fn normalized(&self) -> Result<Self> {
        if self.norm == 0.0 {
            return Err(Error::ZeroNorm {
                context: "cannot normalize".into(),
            });
        }
        let values: Vec<f64> = self.values.iter().map(|v| v / self.norm).collect();
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn is_unit(&self) -> bool {
        (self.norm - 1.0).abs() <= UNIT_TOLERANCE
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.values
    }
}

pub(crate) fn l2_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_dims(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<()> {
    if u.dim() != v.dim() {
        return Err(Error::dims(u.dim(), v.dim()));
    }
    Ok(())
}

/// Cosine similarity `u·v / (‖u‖‖v‖)`, clamped to `[-1, 1]` against rounding.
pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    check_dims(u, v)?;
    if u.norm == 0.0 || v.norm == 0.0 {
        return Err(Error::ZeroNorm {
            context: "in cosine similarity".into(),
        });
    }
    let c = dot(&u.values, &v.values) / (u.norm * v.norm);
    Ok(c.clamp(-1.0, 1.0))
}

/// Euclidean distance `‖u − v‖`.
pub fn embedding_distance(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    check_dims(u, v)?;
    Ok(u.values
        .iter()
        .zip(&v.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Component-wise sum of a non-empty list of same-dimension vectors.
pub fn vector_sum<'a, I>(vectors: I) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a EmbeddingVector>,
{
    let mut iter = vectors.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::invalid("cannot sum an empty list of vectors"))?;
    let mut acc = first.values.clone();
    for v in iter {
        if v.dim() != acc.len() {
            return Err(Error::dims(acc.len(), v.dim()));
        }
        for (a, x) in acc.iter_mut().zip(&v.values) {
            *a += x;
        }
    }
    Ok(acc)
}
