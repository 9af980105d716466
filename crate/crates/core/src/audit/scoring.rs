use serde::{Deserialize, Serialize};

use super::{mean, ImageSubset, LabeledImage};
use crate::embedding::{cosine, vector_sum, EmbeddingVector};
use crate::error::{Error, Result};

/// How a cosine similarity is mapped onto an alignment score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreScale {
    /// `(cos + 1) / 2`, always in `[0, 1]`.
    #[default]
    Affine,
    /// `max(cos, 0)`, CLIPScore without its 2.5 multiplier.
    ClipCompat,
}

impl ScoreScale {
    pub fn apply(self, cos: f64) -> f64 {
        match self {
            ScoreScale::Affine => (cos + 1.0) / 2.0,
            ScoreScale::ClipCompat => cos.max(0.0),
        }
    }
}

pub fn align_score(prompt: &EmbeddingVector, image: &EmbeddingVector) -> Result<f64> {
    align_score_with(prompt, image, ScoreScale::Affine)
}

pub fn align_score_with(
    prompt: &EmbeddingVector,
    image: &EmbeddingVector,
    scale: ScoreScale,
) -> Result<f64> {
    Ok(scale.apply(cosine(prompt, image)?))
}

/// Mean per-image alignment score.
pub fn score_then_average(
    prompt: &EmbeddingVector,
    images: &[LabeledImage],
    scale: ScoreScale,
) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::invalid("score-then-average needs at least one image"));
    }
    let scores = images
        .iter()
        .map(|i| align_score_with(prompt, &i.embedding, scale))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean(scores))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageThenScore {
    pub score: f64,
    /// Mean squared distance of image embeddings from their centroid. Reported only;
    /// it does not enter `score`.
    pub variance: f64,
}

/// Scores the prompt against the summed image embedding.
pub fn average_then_score(
    prompt: &EmbeddingVector,
    images: &[LabeledImage],
    scale: ScoreScale,
) -> Result<AverageThenScore> {
    let sum = vector_sum(images.iter().map(|i| &i.embedding))?;
    let n = images.len() as f64;
    let centroid: Vec<f64> = sum.iter().map(|x| x / n).collect();
    let variance = mean(images.iter().map(|i| {
        i.embedding
            .values()
            .iter()
            .zip(&centroid)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
    }));
    let sum = EmbeddingVector::new(sum)?;
    if sum.norm() == 0.0 {
        return Err(Error::ZeroNorm {
            context: "image embeddings sum to zero".into(),
        });
    }
    Ok(AverageThenScore {
        score: align_score_with(prompt, &sum, scale)?,
        variance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubclassImageScore {
    pub id: String,
    pub score: f64,
    /// Attribute attaining the max; first in list order on ties.
    pub best_attribute: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubclassScore {
    pub score: f64,
    pub per_image: Vec<SubclassImageScore>,
}

/// Per image, the best score against any attribute-composed prompt; then the mean.
///
/// `composed` pairs each attribute with the embedding of `"<attribute> <base>"`.
pub fn subclass_score(
    composed: &[(String, &EmbeddingVector)],
    images: &[LabeledImage],
    scale: ScoreScale,
) -> Result<SubclassScore> {
    if composed.is_empty() {
        return Err(Error::invalid("subclass-score needs at least one attribute"));
    }
    if images.is_empty() {
        return Err(Error::invalid("subclass-score needs at least one image"));
    }
    let mut per_image = Vec::with_capacity(images.len());
    for img in images {
        let mut best: Option<(f64, &str)> = None;
        for (attr, prompt) in composed {
            let s = align_score_with(prompt, &img.embedding, scale)?;
            if best.is_none_or(|(b, _)| s > b) {
                best = Some((s, attr));
            }
        }
        let (score, attr) = best.expect("composed is non-empty");
        per_image.push(SubclassImageScore {
            id: img.id.clone(),
            score,
            best_attribute: attr.to_string(),
        });
    }
    Ok(SubclassScore {
        score: mean(per_image.iter().map(|p| p.score)),
        per_image,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSweepPoint {
    /// Probability of drawing from the first subset.
    pub proportion: f64,
    pub score_then_average: f64,
    pub average_then_score: f64,
    pub subclass_score: f64,
}

/// Expected model-level scores for a generator that draws from `first` with
/// probability `p` and from `second` otherwise, for each `p` in `proportions`.
pub fn score_sweep(
    prompt: &EmbeddingVector,
    composed: &[(String, &EmbeddingVector)],
    first: &ImageSubset,
    second: &ImageSubset,
    proportions: &[f64],
    scale: ScoreScale,
) -> Result<Vec<ScoreSweepPoint>> {
    let sta = [
        score_then_average(prompt, &first.images, scale)?,
        score_then_average(prompt, &second.images, scale)?,
    ];
    let sub = [
        subclass_score(composed, &first.images, scale)?.score,
        subclass_score(composed, &second.images, scale)?.score,
    ];
    let centroid = |s: &ImageSubset| -> Result<Vec<f64>> {
        let n = s.images.len() as f64;
        Ok(vector_sum(s.images.iter().map(|i| &i.embedding))?
            .into_iter()
            .map(|x| x / n)
            .collect())
    };
    let c1 = centroid(first)?;
    let c2 = centroid(second)?;

    proportions
        .iter()
        .map(|&p| {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("proportion {p} outside [0, 1]")));
            }
            let mixed: Vec<f64> = c1
                .iter()
                .zip(&c2)
                .map(|(a, b)| p * a + (1.0 - p) * b)
                .collect();
            let mixed = EmbeddingVector::new(mixed)?;
            if mixed.norm() == 0.0 {
                return Err(Error::ZeroNorm {
                    context: format!("mixed centroid at proportion {p}"),
                });
            }
            Ok(ScoreSweepPoint {
                proportion: p,
                score_then_average: p * sta[0] + (1.0 - p) * sta[1],
                average_then_score: align_score_with(prompt, &mixed, scale)?,
                subclass_score: p * sub[0] + (1.0 - p) * sub[1],
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(v: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(v.to_vec()).unwrap()
    }

    fn img(id: &str, v: &[f64]) -> LabeledImage {
        LabeledImage::new(id, ev(v), 0.5).unwrap()
    }

    fn at_cos(c: f64) -> Vec<f64> {
        vec![c, (1.0 - c * c).sqrt()]
    }

    #[test]
    fn align_score_extremes() {
        let u = ev(&[0.6, 0.8]);
        assert!((align_score(&u, &u).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(align_score(&u, &ev(&[-0.6, -0.8])).unwrap(), 0.0);
        let s = align_score(&ev(&[1.0, 0.0]), &ev(&at_cos(0.8))).unwrap();
        assert!((s - 0.9).abs() < 1e-12);
        assert!(align_score(&ev(&[0.0, 0.0]), &u).is_err());
    }

    #[test]
    fn clip_compat_scale() {
        assert_eq!(ScoreScale::ClipCompat.apply(-0.3), 0.0);
        assert_eq!(ScoreScale::ClipCompat.apply(0.3), 0.3);
    }

    #[test]
    fn score_then_average_cases() {
        let p = ev(&[1.0, 0.0]);
        let same = vec![img("a", &[1.0, 0.0]), img("b", &[2.0, 0.0])];
        assert!((score_then_average(&p, &same, ScoreScale::Affine).unwrap() - 1.0).abs() < 1e-15);
        let two = vec![img("a", &at_cos(0.8)), img("b", &at_cos(0.6))];
        let s = score_then_average(&p, &two, ScoreScale::Affine).unwrap();
        assert!((s - 0.85).abs() < 1e-12);
        assert!(score_then_average(&p, &[], ScoreScale::Affine).is_err());
    }

    #[test]
    fn average_then_score_cases() {
        let p = ev(&[1.0, 0.0]);
        let c = 0.7f64;
        let s = (1.0 - c * c).sqrt();
        let sym = vec![img("a", &[c, s]), img("b", &[c, -s])];
        let r = average_then_score(&p, &sym, ScoreScale::Affine).unwrap();
        assert!((r.score - 1.0).abs() < 1e-15);
        assert!((r.variance - s * s).abs() < 1e-12);

        let one = vec![img("a", &at_cos(0.3))];
        let r = average_then_score(&p, &one, ScoreScale::Affine).unwrap();
        let direct = align_score(&p, &one[0].embedding).unwrap();
        assert!((r.score - direct).abs() < 1e-15);
        assert_eq!(r.variance, 0.0);

        let cancel = vec![img("a", &[0.0, 1.0]), img("b", &[0.0, -1.0])];
        assert!(average_then_score(&p, &cancel, ScoreScale::Affine).is_err());
    }

    #[test]
    fn subclass_single_attribute_matches_score_then_average() {
        let p = ev(&[1.0, 0.0]);
        let imgs = vec![img("a", &at_cos(0.8)), img("b", &at_cos(0.1))];
        let s = subclass_score(&[("x".into(), &p)], &imgs, ScoreScale::Affine).unwrap();
        let sta = score_then_average(&p, &imgs, ScoreScale::Affine).unwrap();
        assert!((s.score - sta).abs() < 1e-15);
    }

    #[test]
    fn subclass_matches_second_prompt() {
        let a1 = ev(&[1.0, 0.0]);
        let a2 = ev(&[0.0, 1.0]);
        let imgs = vec![img("i", &[0.0, 1.0])];
        let s = subclass_score(
            &[("male".into(), &a1), ("female".into(), &a2)],
            &imgs,
            ScoreScale::Affine,
        )
        .unwrap();
        assert!((s.score - 1.0).abs() < 1e-15);
        assert_eq!(s.per_image[0].best_attribute, "female");
    }

    #[test]
    fn subclass_tie_breaks_by_list_order() {
        let a = ev(&[1.0, 0.0]);
        let imgs = vec![img("i", &[0.5, 0.5])];
        let s = subclass_score(
            &[("first".into(), &a), ("second".into(), &a)],
            &imgs,
            ScoreScale::Affine,
        )
        .unwrap();
        assert_eq!(s.per_image[0].best_attribute, "first");
        assert!(subclass_score(&[], &imgs, ScoreScale::Affine).is_err());
    }
}
