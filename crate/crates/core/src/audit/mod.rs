//! Alignment auditing: embedding-based scoring methods, multiaccuracy and
//! multicalibration checks, and the necessary-condition detectors that flag
//! embeddings which cannot support a fair auditor.

mod checks;
mod conditions;
mod scoring;

use std::collections::HashSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingVector, PromptKey};
use crate::error::{Error, Result};

pub use checks::{
    mixture_stability_check, multiaccuracy_audit, multicalibration_audit, within_level,
    CalibrationOptions, MixtureStability, DEVIATION_ROUNDING, TRUE_MEAN_TOLERANCE,
};
pub use conditions::{
    exceeds_text_text_bound, text_image_condition_check, text_text_condition_check, PairGap,
    SkippedPair, TextImageCondition, TextTextCondition, TextTextPair,
};
pub use scoring::{
    align_score, align_score_with, average_then_score, score_sweep, score_then_average,
    subclass_score, AverageThenScore, ScoreScale, ScoreSweepPoint, SubclassImageScore,
    SubclassScore,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledImage {
    pub id: String,
    pub embedding: EmbeddingVector,
    /// Ground-truth alignment with the base prompt, in `[0, 1]`.
    pub true_score: f64,
}

impl LabeledImage {
    pub fn new(id: impl Into<String>, embedding: EmbeddingVector, true_score: f64) -> Result<Self> {
        let id = id.into();
        if !(0.0..=1.0).contains(&true_score) {
            return Err(Error::invalid(format!(
                "true score of image \"{id}\" must lie in [0, 1], got {true_score}"
            )));
        }
        Ok(Self {
            id,
            embedding,
            true_score,
        })
    }
}

/// Images carrying one protected attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSubset {
    pub attribute: String,
    pub images: Vec<LabeledImage>,
}

impl ImageSubset {
    pub fn new(attribute: impl Into<String>, images: Vec<LabeledImage>) -> Result<Self> {
        let attribute = attribute.into();
        if images.is_empty() {
            return Err(Error::invalid(format!("subset \"{attribute}\" is empty")));
        }
        Ok(Self { attribute, images })
    }

    pub fn true_mean(&self) -> f64 {
        mean(self.images.iter().map(|i| i.true_score))
    }
}

/// The collection of subsets an auditor is held accountable on, for one base prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditCollection {
    pub base: PromptKey,
    pub subsets: Vec<ImageSubset>,
    pub alpha: f64,
}

impl AuditCollection {
    pub fn new(base: PromptKey, subsets: Vec<ImageSubset>, alpha: f64) -> Result<Self> {
        if subsets.is_empty() {
            return Err(Error::invalid("audit collection has no subsets"));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        let mut seen = HashSet::new();
        for s in &subsets {
            if s.images.is_empty() {
                return Err(Error::invalid(format!("subset \"{}\" is empty", s.attribute)));
            }
            if !seen.insert(s.attribute.as_str()) {
                return Err(Error::invalid(format!(
                    "attribute \"{}\" appears in more than one subset",
                    s.attribute
                )));
            }
        }
        Ok(Self {
            base,
            subsets,
            alpha,
        })
    }
}

/// An alignment scoring function under audit.
pub trait Auditor {
    fn score(&self, attribute: &str, image: &LabeledImage) -> Result<f64>;
}

impl<F> Auditor for F
where
    F: Fn(&str, &LabeledImage) -> f64,
{
    fn score(&self, attribute: &str, image: &LabeledImage) -> Result<f64> {
        Ok(self(attribute, image))
    }
}

/// Returns the ground-truth score; a perfectly accurate auditor.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrueScoreAuditor;

impl Auditor for TrueScoreAuditor {
    fn score(&self, _attribute: &str, image: &LabeledImage) -> Result<f64> {
        Ok(image.true_score)
    }
}

/// Scores images against a fixed prompt embedding.
#[derive(Debug, Clone)]
pub struct EmbeddingAuditor {
    pub prompt: EmbeddingVector,
    pub scale: ScoreScale,
}

impl Auditor for EmbeddingAuditor {
    fn score(&self, _attribute: &str, image: &LabeledImage) -> Result<f64> {
        align_score_with(&self.prompt, &image.embedding, self.scale)
    }
}

/// Precomputed auditor scores keyed by image id.
#[derive(Debug, Clone, Default)]
pub struct TableAuditor {
    pub scores: IndexMap<String, f64>,
}

impl Auditor for TableAuditor {
    fn score(&self, _attribute: &str, image: &LabeledImage) -> Result<f64> {
        self.scores
            .get(&image.id)
            .copied()
            .ok_or_else(|| Error::MissingKeys(vec![image.id.clone()]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuditMode {
    Multiaccuracy,
    Multicalibration,
}

/// One true-score bin within one subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinReport {
    pub attribute: String,
    pub bin: usize,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub deviation: f64,
    /// Whether the bin met `min_bin_count` and so counts toward pass/fail.
    pub counted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub mode: AuditMode,
    pub alpha: f64,
    pub per_subset_deviation: IndexMap<String, f64>,
    pub max_deviation: f64,
    pub passes: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bins: Vec<BinReport>,
}

impl AuditReport {
    /// `attribute,deviation,passes` summary lines.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("attribute,deviation,passes\n");
        for (a, d) in &self.per_subset_deviation {
            out.push_str(&format!(
                "{},{:.6},{}\n",
                crate::bias::csv_field(a),
                d,
                checks::within_level(*d, self.alpha)
            ));
        }
        out
    }
}

/// Arithmetic mean accumulated in iteration order.
pub(crate) fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        sum += v;
        n += 1;
    }
    sum / n as f64
}
