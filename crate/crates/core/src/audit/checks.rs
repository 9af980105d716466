use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{mean, AuditCollection, AuditMode, AuditReport, Auditor, BinReport, ImageSubset};
use crate::error::{Error, Result};

/// Subset true means closer than this are treated as equal.
pub const TRUE_MEAN_TOLERANCE: f64 = 1e-9;

/// Floating-point allowance when comparing a deviation with its level, so an auditor
/// planted exactly at α is not failed by the last bit of a mean.
pub const DEVIATION_ROUNDING: f64 = 1e-12;

pub fn within_level(deviation: f64, level: f64) -> bool {
    deviation <= level + DEVIATION_ROUNDING
}

fn subset_scores(subset: &ImageSubset, auditor: &dyn Auditor) -> Result<Vec<f64>> {
    subset
        .images
        .iter()
        .map(|img| auditor.score(&subset.attribute, img))
        .collect()
}

/// Per subset, `|mean(s*) − mean(s)|`; passes iff every deviation is within alpha.
pub fn multiaccuracy_audit(
    collection: &AuditCollection,
    auditor: &dyn Auditor,
) -> Result<AuditReport> {
    let mut per_subset = IndexMap::new();
    for subset in &collection.subsets {
        if subset.images.is_empty() {
            return Err(Error::invalid(format!("subset \"{}\" is empty", subset.attribute)));
        }
        let scores = subset_scores(subset, auditor)?;
        let deviation = (subset.true_mean() - mean(scores)).abs();
        per_subset.insert(subset.attribute.clone(), deviation);
    }
    let max_deviation = per_subset.values().copied().fold(0.0, f64::max);
    Ok(AuditReport {
        mode: AuditMode::Multiaccuracy,
        alpha: collection.alpha,
        per_subset_deviation: per_subset,
        max_deviation,
        passes: within_level(max_deviation, collection.alpha),
        bins: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    /// Width of the true-score bins.
    pub bin_width: f64,
    /// Bins with fewer images are reported but do not affect pass/fail.
    pub min_bin_count: usize,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            bin_width: 0.1,
            min_bin_count: 5,
        }
    }
}

impl CalibrationOptions {
    fn bin_count(&self) -> usize {
        ((1.0 / self.bin_width) - 1e-9).ceil().max(1.0) as usize
    }

    /// Bins are `[jλ, (j+1)λ)`, except that the top bin is closed so `s* = 1`
    /// lands in it rather than in a bin of its own.
    fn bin_of(&self, v: f64) -> usize {
        let j = (v / self.bin_width + 1e-9).floor().max(0.0) as usize;
        j.min(self.bin_count() - 1)
    }
}

/// Multiaccuracy over the true-score bins of every subset.
pub fn multicalibration_audit(
    collection: &AuditCollection,
    auditor: &dyn Auditor,
    options: CalibrationOptions,
) -> Result<AuditReport> {
    if !(options.bin_width > 0.0 && options.bin_width <= 1.0) {
        return Err(Error::invalid(format!(
            "bin width must lie in (0, 1], got {}",
            options.bin_width
        )));
    }
    let nbins = options.bin_count();
    let mut per_subset = IndexMap::new();
    let mut bins = Vec::new();
    for subset in &collection.subsets {
        if subset.images.is_empty() {
            return Err(Error::invalid(format!("subset \"{}\" is empty", subset.attribute)));
        }
        let scores = subset_scores(subset, auditor)?;
        // (Σ s*, Σ s, count) per bin, accumulated in image order
        let mut acc = vec![(0.0f64, 0.0f64, 0usize); nbins];
        for (img, s) in subset.images.iter().zip(&scores) {
            let b = &mut acc[options.bin_of(img.true_score)];
            b.0 += img.true_score;
            b.1 += s;
            b.2 += 1;
        }
        let mut worst = 0.0f64;
        for (j, (st, s, n)) in acc.into_iter().enumerate() {
            if n == 0 {
                continue;
            }
            let deviation = ((st - s) / n as f64).abs();
            let counted = n >= options.min_bin_count;
            if counted {
                worst = worst.max(deviation);
            }
            bins.push(BinReport {
                attribute: subset.attribute.clone(),
                bin: j,
                lower: j as f64 * options.bin_width,
                upper: ((j + 1) as f64 * options.bin_width).min(1.0),
                count: n,
                deviation,
                counted,
            });
        }
        per_subset.insert(subset.attribute.clone(), worst);
    }
    let max_deviation = per_subset.values().copied().fold(0.0, f64::max);
    Ok(AuditReport {
        mode: AuditMode::Multicalibration,
        alpha: collection.alpha,
        per_subset_deviation: per_subset,
        max_deviation,
        passes: within_level(max_deviation, collection.alpha),
        bins,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureStability {
    /// `Σ p_ℓ · mean_{I_ℓ}(s)`.
    pub expected_score: f64,
    /// Common true mean of the subsets.
    pub true_mean: f64,
    /// Multiaccuracy level of the auditor on this collection.
    pub alpha: f64,
    /// `alpha` plus any tolerated gap between subset true means.
    pub bound: f64,
    pub bound_holds: bool,
}

/// Expected auditor score of a generator that draws from subset `ℓ` with probability
/// `weights[ℓ]`, compared against the common true mean.
///
/// Requires the subset true means to agree within [`TRUE_MEAN_TOLERANCE`] plus
/// `tolerate_mean_gap`; the reported bound is widened by `tolerate_mean_gap`.
/// Sums are taken in attribute-name order so the result does not depend on subset order.
pub fn mixture_stability_check(
    collection: &AuditCollection,
    auditor: &dyn Auditor,
    weights: &[f64],
    tolerate_mean_gap: f64,
) -> Result<MixtureStability> {
    let k = collection.subsets.len();
    if weights.len() != k {
        return Err(Error::invalid(format!(
            "expected {k} mixture weights, got {}",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::invalid("mixture weights must be non-negative"));
    }
    if !(tolerate_mean_gap >= 0.0) {
        return Err(Error::invalid("tolerated mean gap must be non-negative"));
    }

    let mut terms: Vec<(&str, f64, f64, f64)> = Vec::with_capacity(k);
    for (subset, &w) in collection.subsets.iter().zip(weights) {
        let scores = subset_scores(subset, auditor)?;
        terms.push((&subset.attribute, w, subset.true_mean(), mean(scores)));
    }
    terms.sort_by(|a, b| a.0.cmp(b.0));

    let total: f64 = terms.iter().map(|t| t.1).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!(
            "mixture weights must sum to 1, got {total}"
        )));
    }
    let lo = terms.iter().map(|t| t.2).fold(f64::INFINITY, f64::min);
    let hi = terms.iter().map(|t| t.2).fold(f64::NEG_INFINITY, f64::max);
    if hi - lo > TRUE_MEAN_TOLERANCE + tolerate_mean_gap {
        return Err(Error::HypothesisViolated(format!(
            "subset true means differ by {} (tolerance {})",
            hi - lo,
            TRUE_MEAN_TOLERANCE + tolerate_mean_gap
        )));
    }
    let true_mean = mean(terms.iter().map(|t| t.2));
    let expected_score: f64 = terms.iter().map(|t| t.1 * t.3).sum();
    let alpha = terms
        .iter()
        .map(|t| (t.2 - t.3).abs())
        .fold(0.0, f64::max);
    let bound = alpha + tolerate_mean_gap;
    Ok(MixtureStability {
        expected_score,
        true_mean,
        alpha,
        bound,
        bound_holds: within_level((expected_score - true_mean).abs(), bound),
    })
}
