//! Embedding-space bias diagnostics: ε-closeness, text-text bias tables, cosine ratios,
//! and the least-squares fit used to correlate ratios with generation statistics.

use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::embedding::{cosine, embedding_distance, EmbeddingStore, EmbeddingVector, PromptKey};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosenessResult {
    pub base: PromptKey,
    pub attribute: String,
    pub distance: f64,
    pub epsilon: f64,
    pub is_close: bool,
}

/// Checks `‖e(attribute + base) − e(base)‖ ≤ ε`.
pub fn epsilon_closeness(
    store: &EmbeddingStore,
    base: &str,
    attribute: &str,
    epsilon: f64,
) -> Result<ClosenessResult> {
    if !(epsilon >= 0.0) {
        return Err(Error::invalid(format!("epsilon must be ≥ 0, got {epsilon}")));
    }
    let composed = PromptKey::composed(attribute, base);
    let vs = store.get_many(&[base.to_string(), composed.render()])?;
    let distance = embedding_distance(vs[0], vs[1])?;
    Ok(ClosenessResult {
        base: PromptKey::base(base),
        attribute: attribute.to_string(),
        distance,
        epsilon,
        is_close: distance <= epsilon,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasTableRow {
    pub base: String,
    pub per_attribute_cosine: IndexMap<String, f64>,
    /// First attribute's cosine minus the second's.
    pub delta: f64,
    /// Cosine of the base to the (unnormalized) mean of the composed embeddings.
    pub average_cosine: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortOrder {
    #[default]
    Descending,
    Ascending,
}

/// One row per base, sorted by delta (ties broken by base name).
pub fn text_text_bias_table<S: AsRef<str>>(
    store: &EmbeddingStore,
    bases: &[S],
    attributes: (&str, &str),
    order: SortOrder,
) -> Result<Vec<BiasTableRow>> {
    let (a1, a2) = attributes;
    if a1 == a2 {
        return Err(Error::invalid(format!(
            "the two attributes must differ, got \"{a1}\" twice"
        )));
    }
    let mut needed = Vec::new();
    for b in bases {
        let b = b.as_ref();
        needed.push(b.to_string());
        needed.push(PromptKey::composed(a1, b).render());
        needed.push(PromptKey::composed(a2, b).render());
    }
    // surfaces every missing key at once
    store.get_many(&needed)?;

    let mut rows = Vec::with_capacity(bases.len());
    for b in bases {
        let b = b.as_ref();
        let eb = store.get(b)?;
        let e1 = store.prompt(&PromptKey::composed(a1, b))?;
        let e2 = store.prompt(&PromptKey::composed(a2, b))?;
        let c1 = cosine(eb, e1)?;
        let c2 = cosine(eb, e2)?;
        let mean: Vec<f64> = e1
            .values()
            .iter()
            .zip(e2.values())
            .map(|(x, y)| 0.5 * (x + y))
            .collect();
        let average_cosine = cosine(eb, &EmbeddingVector::new(mean)?)?;
        let mut per = IndexMap::new();
        per.insert(a1.to_string(), c1);
        per.insert(a2.to_string(), c2);
        rows.push(BiasTableRow {
            base: b.to_string(),
            per_attribute_cosine: per,
            delta: c1 - c2,
            average_cosine,
        });
    }
    rows.sort_by(|x, y| {
        let by_delta = match order {
            SortOrder::Descending => y.delta.total_cmp(&x.delta),
            SortOrder::Ascending => x.delta.total_cmp(&y.delta),
        };
        by_delta.then_with(|| x.base.cmp(&y.base))
    });
    Ok(rows)
}

/// Renders rows as `base,cos_a1,cos_a2,delta,avg` with six decimals.
///
/// When `ratios` is given, a trailing `ratio` column is added, matched by base.
pub fn bias_table_csv(rows: &[BiasTableRow], ratios: Option<&IndexMap<String, f64>>) -> String {
    let mut out = String::from("base,cos_a1,cos_a2,delta,avg");
    if ratios.is_some() {
        out.push_str(",ratio");
    }
    out.push('\n');
    for r in rows {
        let cs: Vec<f64> = r.per_attribute_cosine.values().copied().collect();
        let _ = write!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6}",
            csv_field(&r.base),
            cs.first().copied().unwrap_or(f64::NAN),
            cs.get(1).copied().unwrap_or(f64::NAN),
            r.delta,
            r.average_cosine
        );
        if let Some(ratios) = ratios {
            match ratios.get(&r.base) {
                Some(x) => {
                    let _ = write!(out, ",{x:.6}");
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `cos(e(b), e(a1+b)) / cos(e(b), e(a2+b))`; above 1 means the base leans toward `a1`.
pub fn bias_ratio(store: &EmbeddingStore, base: &str, attributes: (&str, &str)) -> Result<f64> {
    let keys = [
        base.to_string(),
        PromptKey::composed(attributes.0, base).render(),
        PromptKey::composed(attributes.1, base).render(),
    ];
    let vs = store.get_many(&keys)?;
    let num = cosine(vs[0], vs[1])?;
    let den = cosine(vs[0], vs[2])?;
    if den <= 0.0 {
        return Err(Error::Numerical(format!(
            "non-positive denominator cosine {den} for \"{}\"",
            keys[2]
        )));
    }
    Ok(num / den)
}

/// Pairwise token cosines for word-level stores that only hold single-token keys.
/// Returns one row per entry of `rows`, one column per entry of `cols`.
pub fn token_cosine_table<S: AsRef<str>>(
    store: &EmbeddingStore,
    rows: &[S],
    cols: &[S],
) -> Result<Vec<Vec<f64>>> {
    let all: Vec<&str> = rows.iter().chain(cols).map(AsRef::as_ref).collect();
    store.get_many(&all)?;
    rows.iter()
        .map(|r| {
            let u = store.get(r.as_ref())?;
            cols.iter()
                .map(|c| cosine(u, store.get(c.as_ref())?))
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionSummary {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n: usize,
}

/// Ordinary least squares for `y = slope·x + intercept`.
///
/// `r_squared` is `1 − SS_res/SS_tot` clamped to `[0, 1]`, and 0 for constant `y`.
pub fn ols_fit(points: &[(f64, f64)]) -> Result<RegressionSummary> {
    let n = points.len();
    if n < 2 {
        return Err(Error::invalid("regression needs at least two points"));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::NonFinite {
            context: "in regression input".into(),
        });
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("degenerate regression: all x values are equal"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        0.0
    } else {
        let ss_res: f64 = points
            .iter()
            .map(|p| (p.1 - (slope * p.0 + intercept)).powi(2))
            .sum();
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(RegressionSummary {
        slope,
        intercept,
        r_squared,
        n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioPoint {
    pub profession: String,
    pub ratio: f64,
    pub proportion_male: f64,
}

/// Reads a `profession,ratio,proportion_male` CSV.
pub fn read_ratio_csv(path: impl AsRef<Path>) -> Result<Vec<RatioPoint>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let expected = ["profession", "ratio", "proportion_male"];
    if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h.trim() != e) {
        return Err(Error::Schema(vec![format!(
            "{}: header must be `profession,ratio,proportion_male`",
            path.display()
        )]));
    }
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::StoreKind;

    fn ev(v: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(v.to_vec()).unwrap()
    }

    fn unit_at(c: f64, axis: usize, dim: usize) -> EmbeddingVector {
        let mut v = vec![0.0; dim];
        v[0] = c;
        v[axis] = (1.0 - c * c).sqrt();
        ev(&v)
    }

    /// base along e0; composed prompts at prescribed cosines on orthogonal axes.
    fn planted(base: &str, c1: f64, c2: f64) -> EmbeddingStore {
        let mut s = EmbeddingStore::new(StoreKind::Prompt, 3);
        s.insert(base, ev(&[1.0, 0.0, 0.0])).unwrap();
        s.insert(format!("male {base}"), unit_at(c1, 1, 3)).unwrap();
        s.insert(format!("female {base}"), unit_at(c2, 2, 3)).unwrap();
        s
    }

    #[test]
    fn closeness_cases() {
        let mut s = EmbeddingStore::new(StoreKind::Prompt, 2);
        s.insert("b", ev(&[1.0, 0.0])).unwrap();
        s.insert("a b", ev(&[1.0, 0.0])).unwrap();
        let r = epsilon_closeness(&s, "b", "a", 0.01).unwrap();
        assert_eq!(r.distance, 0.0);
        assert!(r.is_close);

        let s = planted("nurse", 0.951, 0.973);
        let r = epsilon_closeness(&s, "nurse", "male", 0.2).unwrap();
        assert!((r.distance - 0.3130).abs() < 1e-4, "{}", r.distance);
        assert!(!r.is_close);
        let r = epsilon_closeness(&s, "nurse", "male", 0.0).unwrap();
        assert!(!r.is_close);
        assert!(epsilon_closeness(&s, "nurse", "other", 0.1).is_err());
    }

    #[test]
    fn planted_table_row() {
        let s = planted("x", 0.9, 0.8);
        let rows = text_text_bias_table(&s, &["x"], ("male", "female"), SortOrder::Descending)
            .unwrap();
        assert!((rows[0].delta - 0.1).abs() < 1e-12);
        assert!(rows[0].average_cosine >= 0.8);
    }

    #[test]
    fn mirror_images_give_zero_delta() {
        let mut s = EmbeddingStore::new(StoreKind::Prompt, 2);
        s.insert("b", ev(&[1.0, 0.0])).unwrap();
        s.insert("male b", ev(&[0.8, 0.6])).unwrap();
        s.insert("female b", ev(&[0.8, -0.6])).unwrap();
        let rows =
            text_text_bias_table(&s, &["b"], ("male", "female"), SortOrder::Descending).unwrap();
        assert_eq!(rows[0].delta, 0.0);
        assert!((bias_ratio(&s, "b", ("male", "female")).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn missing_composed_keys_all_listed() {
        let s = planted("x", 0.9, 0.8);
        match text_text_bias_table(&s, &["x", "y"], ("male", "other"), SortOrder::Descending) {
            Err(Error::MissingKeys(k)) => {
                assert_eq!(k, vec!["other x", "y", "male y", "other y"]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ratio_from_table_values() {
        let s = planted("firefighter", 0.971, 0.919);
        let r = bias_ratio(&s, "firefighter", ("male", "female")).unwrap();
        assert!((r - 1.0566).abs() < 1e-4, "{r}");
    }

    #[test]
    fn ratio_zero_denominator_is_error() {
        let s = planted("x", 0.9, 0.0);
        assert!(bias_ratio(&s, "x", ("male", "female")).is_err());
    }

    #[test]
    fn ols_exact_line_and_constant() {
        let pts: Vec<(f64, f64)> = (0..6).map(|i| (i as f64, 2.0 * i as f64 + 1.0)).collect();
        let r = ols_fit(&pts).unwrap();
        assert!((r.slope - 2.0).abs() < 1e-12);
        assert!((r.intercept - 1.0).abs() < 1e-12);
        assert!((r.r_squared - 1.0).abs() < 1e-12);

        let r = ols_fit(&[(0.0, 3.0), (1.0, 3.0), (2.0, 3.0)]).unwrap();
        assert_eq!(r.slope, 0.0);
        assert_eq!(r.r_squared, 0.0);
    }

    #[test]
    fn ols_degenerate_x() {
        assert!(ols_fit(&[(1.0, 0.0), (1.0, 2.0)]).is_err());
        assert!(ols_fit(&[(1.0, 0.0)]).is_err());
    }

    #[test]
    fn ols_matches_normal_equations() {
        let pts = [(0.93, 0.41), (1.02, 0.55), (1.057, 0.71), (0.977, 0.38), (1.04, 0.66)];
        // normal equations [[n, Σx],[Σx, Σx²]]·[b, m] = [Σy, Σxy], solved by Cramer's rule
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let det = n * sxx - sx * sx;
        let m = (n * sxy - sx * sy) / det;
        let b = (sxx * sy - sx * sxy) / det;
        let r = ols_fit(&pts).unwrap();
        assert!((r.slope - m).abs() < 1e-12, "{} vs {m}", r.slope);
        assert!((r.intercept - b).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let s = planted("x", 0.9, 0.8);
        let rows =
            text_text_bias_table(&s, &["x"], ("male", "female"), SortOrder::Descending).unwrap();
        let csv = bias_table_csv(&rows, None);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("base,cos_a1,cos_a2,delta,avg"));
        assert!(lines.next().unwrap().starts_with("x,0.900000,0.800000,0.100000,"));
    }

    #[test]
    fn identical_attributes_are_rejected() {
        let s = planted("doctor", 0.9, 0.8);
        assert!(matches!(
            text_text_bias_table(&s, &["doctor"], ("male", "male"), SortOrder::Descending),
            Err(Error::InvalidArgument(_))
        ));
    }
}
