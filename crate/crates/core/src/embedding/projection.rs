use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::store::EmbeddingStore;
use super::vector::EmbeddingVector;
use crate::error::{Error, Result};

/// Dense Gaussian random projection with `N(0, 1/target_dim)` entries.
#[derive(Debug, Clone)]
pub struct JlProjection {
    source_dim: usize,
    target_dim: usize,
    // row-major, target_dim × source_dim
    matrix: Vec<f64>,
}

impl JlProjection {
    pub fn new(source_dim: usize, target_dim: usize, seed: u64) -> Result<Self> {
        if target_dim == 0 || target_dim >= source_dim {
            return Err(Error::invalid(format!(
                "target dimension must be in 1..{source_dim}, got {target_dim}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0 / (target_dim as f64).sqrt())
            .map_err(|e| Error::Numerical(e.to_string()))?;
        let matrix = (0..source_dim * target_dim)
            .map(|_| normal.sample(&mut rng))
            .collect();
        Ok(Self {
            source_dim,
            target_dim,
            matrix,
        })
    }

    pub fn source_dim(&self) -> usize {
        self.source_dim
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.source_dim {
            return Err(Error::dims(self.source_dim, v.len()));
        }
        Ok(self
            .matrix
            .chunks_exact(self.source_dim)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }
}

/// Projects every vector of a store through one shared random matrix.
///
/// With `renormalize`, non-zero outputs are rescaled to unit length; zero vectors stay zero.
pub fn jl_project(
    store: &EmbeddingStore,
    target_dim: usize,
    seed: u64,
    renormalize: bool,
) -> Result<EmbeddingStore> {
    let proj = JlProjection::new(store.dimension(), target_dim, seed)?;
    let mut out = EmbeddingStore::new(store.kind(), target_dim);
    let mut all_unit = true;
    for (key, v) in store.iter() {
        let mut p = EmbeddingVector::new(proj.project(v.values())?)?;
        if renormalize && p.norm() > 0.0 {
            p = p.normalized()?;
        }
        all_unit &= p.is_unit();
        out.insert(key, p)?;
    }
    out.with_unit(renormalize && all_unit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::StoreKind;

    fn store_300(n: usize, seed: u64) -> EmbeddingStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut s = EmbeddingStore::new(StoreKind::Prompt, 300);
        for i in 0..n {
            let v: Vec<f64> = (0..300).map(|_| normal.sample(&mut rng)).collect();
            s.insert(format!("w{i}"), EmbeddingVector::new(v).unwrap())
                .unwrap();
        }
        s
    }

    #[test]
    fn reduces_to_128() {
        let s = store_300(4, 1);
        let p = jl_project(&s, 128, 7, false).unwrap();
        assert_eq!(p.dimension(), 128);
        assert_eq!(p.len(), 4);
    }

    #[test]
    fn zero_vector_stays_zero() {
        let mut s = EmbeddingStore::new(StoreKind::Prompt, 10);
        s.insert("z", EmbeddingVector::new(vec![0.0; 10]).unwrap())
            .unwrap();
        for renorm in [false, true] {
            let p = jl_project(&s, 3, 0, renorm).unwrap();
            assert!(p.get("z").unwrap().values().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn bad_target_dims() {
        let s = store_300(1, 0);
        assert!(jl_project(&s, 0, 0, false).is_err());
        assert!(jl_project(&s, 300, 0, false).is_err());
        assert!(jl_project(&s, 301, 0, false).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let s = store_300(3, 2);
        let a = jl_project(&s, 128, 11, true).unwrap();
        let b = jl_project(&s, 128, 11, true).unwrap();
        for (k, v) in a.iter() {
            let w = b.get(k).unwrap();
            assert!(v
                .values()
                .iter()
                .zip(w.values())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert!(a.is_unit());
    }
}
