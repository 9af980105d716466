use serde::{Deserialize, Serialize};

use super::checks::TRUE_MEAN_TOLERANCE;
use super::{mean, AuditCollection};
use crate::embedding::{cosine, EmbeddingStore, EmbeddingVector, PromptKey};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairGap {
    pub first: String,
    pub second: String,
    pub first_mean_cosine: f64,
    pub second_mean_cosine: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPair {
    pub first: String,
    pub second: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextImageCondition {
    pub pairs: Vec<PairGap>,
    pub skipped: Vec<SkippedPair>,
    pub max_gap: f64,
    /// No auditor built from this embedding can be multiaccurate below this level.
    pub alpha_lower_bound: f64,
}

/// Compares mean prompt-image cosines between subsets with equal true means.
///
/// A multiaccurate auditor at level α keeps every such gap within 4α, so the largest
/// gap divided by four is a floor on any achievable α.
pub fn text_image_condition_check(
    collection: &AuditCollection,
    prompt: &EmbeddingVector,
) -> Result<TextImageCondition> {
    let stats = collection
        .subsets
        .iter()
        .map(|s| {
            let cosines = s
                .images
                .iter()
                .map(|i| cosine(prompt, &i.embedding))
                .collect::<Result<Vec<_>>>()?;
            Ok((s.attribute.as_str(), s.true_mean(), mean(cosines)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    for (i, a) in stats.iter().enumerate() {
        for b in &stats[i + 1..] {
            if (a.1 - b.1).abs() > TRUE_MEAN_TOLERANCE {
                skipped.push(SkippedPair {
                    first: a.0.to_string(),
                    second: b.0.to_string(),
                    reason: format!("true means differ ({} vs {})", a.1, b.1),
                });
                continue;
            }
            pairs.push(PairGap {
                first: a.0.to_string(),
                second: b.0.to_string(),
                first_mean_cosine: a.2,
                second_mean_cosine: b.2,
                gap: (a.2 - b.2).abs(),
            });
        }
    }
    if pairs.is_empty() {
        return Err(Error::invalid(
            "no pair of subsets with equal true means to compare",
        ));
    }
    let max_gap = pairs.iter().map(|p| p.gap).fold(0.0, f64::max);
    Ok(TextImageCondition {
        pairs,
        skipped,
        max_gap,
        alpha_lower_bound: max_gap / 4.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextTextPair {
    pub first: String,
    pub second: String,
    pub first_cosine: f64,
    pub second_cosine: f64,
    pub gap: f64,
    pub violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextTextCondition {
    pub base: String,
    pub alpha: f64,
    pub ball_radius: f64,
    /// `4α + 2ε`.
    pub threshold: f64,
    pub pairs: Vec<TextTextPair>,
    pub any_violation: bool,
}

/// `gap > 4α + 2ε`. Equality is not a violation.
pub fn exceeds_text_text_bound(gap: f64, alpha: f64, ball_radius: f64) -> bool {
    gap > 4.0 * alpha + 2.0 * ball_radius
}

/// Prompt-only necessary condition: if images of each attribute sit within
/// `ball_radius` of their composed prompt, a multiaccurate auditor at `alpha` forces
/// `|cos(b, a+b) − cos(b, a'+b)| ≤ 4α + 2ε` for every attribute pair.
///
/// The store must declare `unit=true`.
pub fn text_text_condition_check<S: AsRef<str>>(
    store: &EmbeddingStore,
    base: &str,
    attributes: &[S],
    ball_radius: f64,
    alpha: f64,
) -> Result<TextTextCondition> {
    if !store.is_unit() {
        return Err(Error::invalid(
            "the text-text condition needs a prompt store declared unit=true",
        ));
    }
    if !(ball_radius >= 0.0) || !(alpha >= 0.0) {
        return Err(Error::invalid("ball radius and alpha must be non-negative"));
    }
    let mut keys = vec![base.to_string()];
    keys.extend(
        attributes
            .iter()
            .map(|a| PromptKey::composed(a.as_ref(), base).render()),
    );
    let vs = store.get_many(&keys)?;
    let cosines = vs[1..]
        .iter()
        .map(|v| cosine(vs[0], v))
        .collect::<Result<Vec<_>>>()?;

    let mut pairs = Vec::new();
    for i in 0..attributes.len() {
        for j in i + 1..attributes.len() {
            let gap = (cosines[i] - cosines[j]).abs();
            pairs.push(TextTextPair {
                first: attributes[i].as_ref().to_string(),
                second: attributes[j].as_ref().to_string(),
                first_cosine: cosines[i],
                second_cosine: cosines[j],
                gap,
                violation: exceeds_text_text_bound(gap, alpha, ball_radius),
            });
        }
    }
    Ok(TextTextCondition {
        base: base.to_string(),
        alpha,
        ball_radius,
        threshold: 4.0 * alpha + 2.0 * ball_radius,
        any_violation: pairs.iter().any(|p| p.violation),
        pairs,
    })
}
