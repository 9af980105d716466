//! Builders for embedding sets with exactly planted geometry.
//!
//! Real CLIP or word2vec exports are large and licensed separately, so the shipped
//! fixtures are built here: vectors are realized from a target Gram matrix inside a
//! random orthonormal frame, which pins every cosine while the coordinates look generic.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::embedding::{EmbeddingStore, EmbeddingVector, PromptKey, StoreKind};
use crate::error::{Error, Result};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `count` orthonormal vectors in `R^dim`, drawn uniformly at random.
pub fn orthonormal_frame(dim: usize, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if count > dim {
        return Err(Error::invalid(format!(
            "cannot fit {count} orthonormal vectors in dimension {dim}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(count);
    while frame.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        // two passes of Gram–Schmidt keep the frame orthogonal to rounding
        for _ in 0..2 {
            for e in &frame {
                let p = dot(&v, e);
                v.iter_mut().zip(e).for_each(|(x, y)| *x -= p * y);
            }
        }
        let n = dot(&v, &v).sqrt();
        if n > 1e-8 {
            frame.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    Ok(frame)
}

/// Lower-triangular `L` with `L Lᵀ = gram`. Tiny negative pivots from rounding are clamped.
pub fn cholesky(gram: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = gram.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        if gram[i].len() != n {
            return Err(Error::invalid("Gram matrix must be square"));
        }
        for j in 0..=i {
            let s = gram[i][j] - dot(&l[i][..j], &l[j][..j]);
            if i == j {
                if s < -1e-12 {
                    return Err(Error::invalid(format!(
                        "Gram matrix is not positive semidefinite (pivot {s} at {i})"
                    )));
                }
                l[i][i] = s.max(0.0).sqrt();
            } else if l[j][j] > 0.0 {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Ok(l)
}

/// Vectors in `R^dim` whose pairwise inner products are `gram`.
pub fn realize_gram(gram: &[Vec<f64>], dim: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let l = cholesky(gram)?;
    let frame = orthonormal_frame(dim, gram.len(), seed)?;
    Ok(l.iter().map(|row| combine(row, &frame)).collect())
}

fn combine(coeffs: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; basis[0].len()];
    for (c, b) in coeffs.iter().zip(basis) {
        out.iter_mut().zip(b).for_each(|(o, x)| *o += c * x);
    }
    out
}

/// A unit vector with prescribed cosines to unit `anchors`, leaving the span of the
/// anchors along `fresh` (a unit vector orthogonal to all of them).
pub fn vector_with_cosines(anchors: &[Vec<f64>], cosines: &[f64], fresh: &[f64]) -> Result<Vec<f64>> {
    if anchors.len() != cosines.len() {
        return Err(Error::dims(anchors.len(), cosines.len()));
    }
    let gram: Vec<Vec<f64>> = anchors
        .iter()
        .map(|a| anchors.iter().map(|b| dot(a, b)).collect())
        .collect();
    let w = solve_spd(&gram, cosines)?;
    let residual = 1.0 - dot(cosines, &w);
    if residual < -1e-12 {
        return Err(Error::invalid(format!(
            "cosines {cosines:?} are not jointly achievable by a unit vector"
        )));
    }
    let mut v = combine(&w, anchors);
    let z = residual.max(0.0).sqrt();
    v.iter_mut().zip(fresh).for_each(|(o, f)| *o += z * f);
    Ok(v)
}

fn solve_spd(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let l = cholesky(a)?;
    let n = b.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        if l[i][i] == 0.0 {
            return Err(Error::invalid("anchor vectors are linearly dependent"));
        }
        y[i] = (b[i] - dot(&l[i][..i], &y[..i])) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k][i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i][i];
    }
    Ok(x)
}

/// Target row of a two-attribute bias table.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedBiasRow {
    pub base: String,
    pub first: f64,
    pub second: f64,
    /// Cosine of the base to the mean of the two composed prompts.
    pub average: f64,
}

impl PlantedBiasRow {
    pub fn new(base: &str, first: f64, second: f64, average: f64) -> Self {
        Self {
            base: base.to_string(),
            first,
            second,
            average,
        }
    }

    /// Cosine between the two composed prompts implied by the average column.
    pub fn composed_cosine(&self) -> f64 {
        let r = (self.first + self.second) / self.average;
        r * r / 2.0 - 1.0
    }
}

/// Unit prompt store reproducing each row exactly: keys `base`, `"a1 base"`, `"a2 base"`.
pub fn planted_bias_store(
    rows: &[PlantedBiasRow],
    attributes: (&str, &str),
    dim: usize,
    seed: u64,
) -> Result<EmbeddingStore> {
    let frame = orthonormal_frame(dim, 3 * rows.len(), seed)?;
    let mut store = EmbeddingStore::new(StoreKind::Prompt, dim);
    for (r, block) in rows.iter().zip(frame.chunks(3)) {
        let rho = r.composed_cosine();
        let gram = vec![
            vec![1.0, r.first, r.second],
            vec![r.first, 1.0, rho],
            vec![r.second, rho, 1.0],
        ];
        let l = cholesky(&gram)?;
        let keys = [
            r.base.clone(),
            PromptKey::composed(attributes.0, r.base.as_str()).render(),
            PromptKey::composed(attributes.1, r.base.as_str()).render(),
        ];
        for (key, row) in keys.into_iter().zip(&l) {
            store.insert(key, unit(combine(row, block))?)?;
        }
    }
    store.with_unit(true)
}

fn unit(v: Vec<f64>) -> Result<EmbeddingVector> {
    EmbeddingVector::new(v)?.normalized()
}

/// One image cluster: every image has the same cosine to the base prompt and to its own
/// composed prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec {
    pub attribute: String,
    /// Cosine of the composed prompt to the base prompt.
    pub prompt_cosine: f64,
    pub image_base_cosine: f64,
    pub image_own_cosine: f64,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct PlantedClusters {
    pub prompts: EmbeddingStore,
    pub images: EmbeddingStore,
    /// Image keys per cluster, in cluster order.
    pub members: Vec<(String, Vec<String>)>,
}

/// Prompt and image stores for a base with attribute clusters of planted cosines.
/// `composed_cosine` is the cosine between every pair of composed prompts.
pub fn planted_clusters(
    base: &str,
    clusters: &[ClusterSpec],
    composed_cosine: f64,
    dim: usize,
    seed: u64,
) -> Result<PlantedClusters> {
    let k = clusters.len();
    let total: usize = clusters.iter().map(|c| c.count).sum();
    let mut gram = vec![vec![0.0; k + 1]; k + 1];
    gram[0][0] = 1.0;
    for (i, c) in clusters.iter().enumerate() {
        gram[0][i + 1] = c.prompt_cosine;
        gram[i + 1][0] = c.prompt_cosine;
        for j in 0..k {
            gram[i + 1][j + 1] = if i == j { 1.0 } else { composed_cosine };
        }
    }
    let l = cholesky(&gram)?;
    let frame = orthonormal_frame(dim, k + 1 + total, seed)?;
    let (head, fresh) = frame.split_at(k + 1);
    let prompt_vecs: Vec<Vec<f64>> = l.iter().map(|row| combine(row, head)).collect();

    let mut prompts = EmbeddingStore::new(StoreKind::Prompt, dim);
    prompts.insert(base, unit(prompt_vecs[0].clone())?)?;
    for (c, v) in clusters.iter().zip(&prompt_vecs[1..]) {
        prompts.insert(
            PromptKey::composed(c.attribute.as_str(), base).render(),
            unit(v.clone())?,
        )?;
    }

    let mut images = EmbeddingStore::new(StoreKind::Image, dim);
    let mut members = Vec::with_capacity(k);
    let mut next = 0;
    for (i, c) in clusters.iter().enumerate() {
        let anchors = [prompt_vecs[0].clone(), prompt_vecs[i + 1].clone()];
        let mut keys = Vec::with_capacity(c.count);
        for n in 0..c.count {
            let v = vector_with_cosines(
                &anchors,
                &[c.image_base_cosine, c.image_own_cosine],
                &fresh[next],
            )?;
            next += 1;
            let key = format!("{}_{:03}", c.attribute, n);
            images.insert(key.as_str(), unit(v)?)?;
            keys.push(key);
        }
        members.push((c.attribute.clone(), keys));
    }
    Ok(PlantedClusters {
        prompts: prompts.with_unit(true)?,
        images: images.with_unit(true)?,
        members,
    })
}

/// `count` independent uniformly random unit vectors.
pub fn random_unit_vectors(count: usize, dim: usize, seed: u64) -> Result<Vec<EmbeddingVector>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            unit(v)
        })
        .collect()
}

/// `0, 1/n, …, 1`: `n + 1` evenly spaced scores with mean exactly `1/2` for dyadic `n`.
pub fn evenly_spaced_scores(n: usize) -> Vec<f64> {
    (0..=n).map(|j| j as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::cosine;

    #[test]
    fn frame_is_orthonormal() {
        let f = orthonormal_frame(20, 12, 3).unwrap();
        for (i, a) in f.iter().enumerate() {
            for (j, b) in f.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot(a, b) - want).abs() < 1e-13);
            }
        }
        assert!(orthonormal_frame(3, 4, 0).is_err());
    }

    #[test]
    fn gram_is_reproduced() {
        let g = vec![
            vec![1.0, 0.5, 0.2],
            vec![0.5, 2.0, -0.3],
            vec![0.2, -0.3, 0.7],
        ];
        let v = realize_gram(&g, 10, 1).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((dot(&v[i], &v[j]) - g[i][j]).abs() < 1e-13);
            }
        }
        assert!(cholesky(&[vec![1.0, 2.0], vec![2.0, 1.0]]).is_err());
    }

    #[test]
    fn planted_row_matches() {
        let row = PlantedBiasRow::new("firefighter", 0.971, 0.919, 0.959);
        let s = planted_bias_store(&[row], ("male", "female"), 32, 9).unwrap();
        let b = s.get("firefighter").unwrap();
        let m = s.get("male firefighter").unwrap();
        let f = s.get("female firefighter").unwrap();
        assert!((cosine(b, m).unwrap() - 0.971).abs() < 1e-12);
        assert!((cosine(b, f).unwrap() - 0.919).abs() < 1e-12);
        let sum = EmbeddingVector::new(crate::embedding::vector_sum([m, f]).unwrap()).unwrap();
        assert!((cosine(b, &sum).unwrap() - 0.959).abs() < 1e-12);
    }

    #[test]
    fn clusters_have_planted_cosines() {
        let spec = |a: &str, pc, ib| ClusterSpec {
            attribute: a.into(),
            prompt_cosine: pc,
            image_base_cosine: ib,
            image_own_cosine: 0.9,
            count: 4,
        };
        let p = planted_clusters(
            "doctor",
            &[spec("male", 0.962, 0.8), spec("female", 0.947, 0.76)],
            0.9567,
            16,
            2,
        )
        .unwrap();
        let b = p.prompts.get("doctor").unwrap();
        for (attr, keys) in &p.members {
            let own = p.prompts.get(&format!("{attr} doctor")).unwrap();
            for k in keys {
                let img = p.images.get(k).unwrap();
                assert!((cosine(own, img).unwrap() - 0.9).abs() < 1e-12);
            }
        }
        let first = p.images.get(&p.members[0].1[0]).unwrap();
        assert!((cosine(b, first).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn infeasible_cosines_are_rejected() {
        let f = orthonormal_frame(4, 3, 0).unwrap();
        assert!(vector_with_cosines(&f[..1], &[1.5], &f[2]).is_err());
    }

    #[test]
    fn evenly_spaced_mean_is_half() {
        let s = evenly_spaced_scores(256);
        assert_eq!(s.len(), 257);
        assert_eq!(s.iter().sum::<f64>() / s.len() as f64, 0.5);
    }
}
