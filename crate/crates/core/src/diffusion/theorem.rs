use serde::{Deserialize, Serialize};

use super::conditional::{score_lipschitz_estimate, ConditionalMixtureModel, LipschitzProbeConfig};
use super::quadrature::{kl_numeric_with, tv_numeric_with, QuadratureOptions};
use crate::embedding::{EmbeddingStore, PromptKey};
use crate::error::{Error, Result};

/// Rounding allowance on the closeness hypothesis, relative to the radius.
const CLOSENESS_RELATIVE_SLACK: f64 = 1e-12;

/// Floating-point allowance on `tv ≤ 1 − v`, so exact boundary cases stay balanced.
pub const BALANCE_ROUNDING: f64 = 1e-12;

/// `TV(p_b, p_{a+b}) ≤ 1 − v` up to rounding.
pub fn is_balanced(tv: f64, threshold: f64) -> bool {
    tv <= 1.0 - threshold + BALANCE_ROUNDING
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepBalanceRow {
    pub attribute: String,
    pub tv: f64,
    pub threshold: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepBalanceReport {
    pub base: String,
    pub rows: Vec<RepBalanceRow>,
    pub balanced: bool,
}

fn resolve_thresholds(thresholds: &[f64], k: usize) -> Result<Vec<f64>> {
    let v = match thresholds.len() {
        1 => vec![thresholds[0]; k],
        n if n == k => thresholds.to_vec(),
        n => {
            return Err(Error::invalid(format!(
                "{n} thresholds given for {k} attributes"
            )))
        }
    };
    if let Some(bad) = v.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(Error::invalid(format!("threshold {bad} is outside (0, 1]")));
    }
    Ok(v)
}

fn prompt_vectors<S: AsRef<str>>(
    model: &ConditionalMixtureModel,
    store: &EmbeddingStore,
    base: &str,
    attributes: &[S],
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if store.dimension() != model.prompt_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.prompt_dim(),
            found: store.dimension(),
            context: Some("prompt store vs model prompt_dim".into()),
        });
    }
    let mut keys = vec![base.to_string()];
    keys.extend(
        attributes
            .iter()
            .map(|a| PromptKey::composed(a.as_ref(), base).render()),
    );
    let vs = store.get_many(&keys)?;
    Ok((
        vs[0].values().to_vec(),
        vs[1..].iter().map(|v| v.values().to_vec()).collect(),
    ))
}

/// Per attribute, `TV(p_b, p_{a+b})` against `1 − v`.
pub fn rep_balance_audit<S: AsRef<str>>(
    model: &ConditionalMixtureModel,
    store: &EmbeddingStore,
    base: &str,
    attributes: &[S],
    thresholds: &[f64],
    quad: &QuadratureOptions,
) -> Result<RepBalanceReport> {
    if attributes.is_empty() {
        return Err(Error::invalid("no attributes given"));
    }
    let v = resolve_thresholds(thresholds, attributes.len())?;
    let (yb, ys) = prompt_vectors(model, store, base, attributes)?;
    let pb = model.mixture_at(&yb)?;
    let rows = attributes
        .iter()
        .zip(&ys)
        .zip(&v)
        .map(|((a, y), &vi)| {
            let tv = tv_numeric_with(&pb, &model.mixture_at(y)?, quad)?;
            Ok(RepBalanceRow {
                attribute: a.as_ref().to_string(),
                tv,
                threshold: vi,
                satisfied: is_balanced(tv, vi),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RepBalanceReport {
        base: base.to_string(),
        balanced: rows.iter().all(|r| r.satisfied),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem41Config {
    pub horizon: f64,
    pub quadrature: QuadratureOptions,
    pub probes: LipschitzProbeConfig,
}

impl Default for Theorem41Config {
    fn default() -> Self {
        Self {
            horizon: 5.0,
            quadrature: QuadratureOptions::default(),
            probes: LipschitzProbeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub holds: bool,
    pub value: f64,
    pub bound: f64,
}

impl Check {
    fn le(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            holds: value <= bound,
            value,
            bound,
        }
    }

    fn lt(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            holds: value < bound,
            value,
            bound,
        }
    }

    fn ge(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            holds: value >= bound,
            value,
            bound,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Verified,
    TheoremViolated,
    HypothesesNotMet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeDistance {
    pub attribute: String,
    pub prompt_distance: f64,
    pub tv_to_base: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTv {
    pub first: String,
    pub second: String,
    pub tv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem41Report {
    pub base: String,
    pub epsilon: f64,
    pub horizon: f64,
    pub score_lipschitz_bound: f64,
    /// `L`, bound on the reverse-drift difference per unit prompt distance.
    pub drift_lipschitz_bound: f64,
    pub lipschitz_estimate: f64,
    pub closeness_radius: f64,
    pub closest_attribute: String,
    pub attributes: Vec<AttributeDistance>,
    pub attribute_pairs: Vec<PairTv>,
    pub kl_numeric: f64,
    /// `T·(L·‖e(b) − e(a₁+b)‖)²`.
    pub kl_bound: f64,
    pub pinsker_bound: f64,
    pub rep_balance: RepBalanceReport,
    pub hypotheses: Vec<Check>,
    pub conclusions: Vec<Check>,
    pub verdict: Verdict,
}

/// Checks that a prompt embedding close to one attribute's forces near-identical
/// generations for that attribute and near-disjoint generations for every other.
///
/// The closest attribute in the store plays the role of `a₁`. Every quantity in the
/// chain is reported: Lipschitz bounds, the KL bound `T(L·d)²`, its Pinsker image, and
/// quadrature TV for all pairs.
pub fn theorem41_experiment(
    model: &ConditionalMixtureModel,
    store: &EmbeddingStore,
    base: &str,
    epsilon: f64,
    thresholds: &[f64],
    config: &Theorem41Config,
) -> Result<Theorem41Report> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(config.horizon > 0.0) {
        return Err(Error::invalid("horizon must be positive"));
    }
    let attributes: Vec<String> = model.attributes().map(str::to_string).collect();
    if attributes.len() < 2 {
        return Err(Error::invalid("the experiment needs at least two attributes"));
    }
    let v = resolve_thresholds(thresholds, attributes.len())?;
    let quad = &config.quadrature;
    let slack = quad.comparison_slack();

    let score_bound = model.score_lipschitz_bound()?;
    let drift_bound = 2.0 * score_bound;
    let estimate = score_lipschitz_estimate(
        model,
        &LipschitzProbeConfig {
            horizon: config.horizon,
            ..config.probes.clone()
        },
    )?;

    let (yb, ys) = prompt_vectors(model, store, base, &attributes)?;
    let distances = ys
        .iter()
        .map(|y| {
            let d: f64 = y.iter().zip(&yb).map(|(a, b)| (a - b) * (a - b)).sum();
            d.sqrt()
        })
        .collect::<Vec<_>>();
    let closest = (0..distances.len())
        .fold(0, |best, i| if distances[i] < distances[best] { i } else { best });
    let radius = epsilon / (config.horizon.sqrt() * drift_bound);

    let pb = model.mixture_at(&yb)?;
    let pa = ys
        .iter()
        .map(|y| model.mixture_at(y))
        .collect::<Result<Vec<_>>>()?;
    let tv_base = pa
        .iter()
        .map(|p| tv_numeric_with(&pb, p, quad))
        .collect::<Result<Vec<_>>>()?;
    let mut attribute_pairs = Vec::new();
    for i in 0..pa.len() {
        for j in i + 1..pa.len() {
            attribute_pairs.push(PairTv {
                first: attributes[i].clone(),
                second: attributes[j].clone(),
                tv: tv_numeric_with(&pa[i], &pa[j], quad)?,
            });
        }
    }
    let pair_tv = |i: usize, j: usize| {
        let (a, b) = (&attributes[i.min(j)], &attributes[i.max(j)]);
        attribute_pairs
            .iter()
            .find(|p| &p.first == a && &p.second == b)
            .map(|p| p.tv)
            .unwrap_or(0.0)
    };

    let mut hypotheses = vec![
        Check {
            name: "score Lipschitz estimate within analytic bound".into(),
            holds: estimate.within_bound,
            value: estimate.estimate,
            bound: score_bound,
        },
        Check::le(
            format!("{} prompt is epsilon/(sqrt(T) L)-close to base", attributes[closest]),
            distances[closest],
            radius * (1.0 + CLOSENESS_RELATIVE_SLACK),
        ),
        Check::lt(
            "epsilon below half the smallest threshold",
            epsilon,
            v.iter().copied().fold(f64::INFINITY, f64::min) / 2.0,
        ),
    ];
    for p in &attribute_pairs {
        hypotheses.push(Check::ge(
            format!("TV({}, {}) at least 1 - epsilon", p.first, p.second),
            p.tv,
            1.0 - epsilon,
        ));
    }

    let kl = kl_numeric_with(&pb, &pa[closest], quad)?;
    let kl_bound = config.horizon * (drift_bound * distances[closest]).powi(2);
    let pinsker_bound = (kl_bound / 2.0).sqrt();
    let mut conclusions = vec![
        Check::le("KL to closest attribute within T(L d)^2", kl, kl_bound + slack),
        Check::le(
            "TV to closest attribute within Pinsker of numeric KL",
            tv_base[closest],
            (kl / 2.0).sqrt() + slack,
        ),
        Check::le(
            format!("TV(base, {}) at most epsilon", attributes[closest]),
            tv_base[closest],
            epsilon + slack,
        ),
    ];
    for j in (0..attributes.len()).filter(|&j| j != closest) {
        conclusions.push(Check::ge(
            format!("TV(base, {}) at least 1 - 2 epsilon", attributes[j]),
            tv_base[j],
            1.0 - 2.0 * epsilon - slack,
        ));
        conclusions.push(Check::ge(
            format!("reverse triangle for {}", attributes[j]),
            tv_base[j],
            pair_tv(closest, j) - tv_base[closest] - slack,
        ));
    }

    let rows = attributes
        .iter()
        .zip(&tv_base)
        .zip(&v)
        .map(|((a, &tv), &vi)| RepBalanceRow {
            attribute: a.clone(),
            tv,
            threshold: vi,
            satisfied: is_balanced(tv, vi),
        })
        .collect::<Vec<_>>();
    for (j, row) in rows.iter().enumerate() {
        if j != closest {
            conclusions.push(Check {
                name: format!("{} not representationally balanced", row.attribute),
                holds: !row.satisfied,
                value: row.tv,
                bound: 1.0 - row.threshold,
            });
        }
    }

    let verdict = if hypotheses.iter().any(|h| !h.holds) {
        Verdict::HypothesesNotMet
    } else if conclusions.iter().all(|c| c.holds) {
        Verdict::Verified
    } else {
        Verdict::TheoremViolated
    };

    Ok(Theorem41Report {
        base: base.to_string(),
        epsilon,
        horizon: config.horizon,
        score_lipschitz_bound: score_bound,
        drift_lipschitz_bound: drift_bound,
        lipschitz_estimate: estimate.estimate,
        closeness_radius: radius,
        closest_attribute: attributes[closest].clone(),
        attributes: attributes
            .iter()
            .zip(&distances)
            .zip(&tv_base)
            .map(|((a, &d), &tv)| AttributeDistance {
                attribute: a.clone(),
                prompt_distance: d,
                tv_to_base: tv,
            })
            .collect(),
        attribute_pairs,
        kl_numeric: kl,
        kl_bound,
        pinsker_bound,
        rep_balance: RepBalanceReport {
            base: base.to_string(),
            balanced: rows.iter().all(|r| r.satisfied),
            rows,
        },
        hypotheses,
        conclusions,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{ComponentShape, SoftmaxWeightMap};
    use crate::embedding::{EmbeddingVector, StoreKind};

    fn model(mean: f64, var: f64, slope: f64) -> ConditionalMixtureModel {
        ConditionalMixtureModel::new(
            2,
            vec![
                ComponentShape {
                    attribute: "a1".into(),
                    mean: vec![-mean],
                    variance: vec![var],
                },
                ComponentShape {
                    attribute: "a2".into(),
                    mean: vec![mean],
                    variance: vec![var],
                },
            ],
            SoftmaxWeightMap::new(vec![vec![slope, 0.0], vec![-slope, 0.0]], vec![0.0, 0.0], 2)
                .unwrap(),
        )
        .unwrap()
    }

    fn store(base_angle: f64) -> EmbeddingStore {
        let mut s = EmbeddingStore::new(StoreKind::Prompt, 2);
        let ev = |v: [f64; 2]| EmbeddingVector::new(v.to_vec()).unwrap();
        s.insert("doctor", ev([base_angle.cos(), base_angle.sin()])).unwrap();
        s.insert("a1 doctor", ev([1.0, 0.0])).unwrap();
        s.insert("a2 doctor", ev([-1.0, 0.0])).unwrap();
        s.with_unit(true).unwrap()
    }

    fn quick() -> Theorem41Config {
        Theorem41Config {
            probes: LipschitzProbeConfig {
                probes: 1000,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn construction_is_verified() {
        let m = model(4.0, 0.25, 4.0);
        let eps = 0.05;
        let radius = eps / (5f64.sqrt() * m.drift_lipschitz_bound().unwrap());
        let s = store(2.0 * (radius / 2.0).asin());
        let r = theorem41_experiment(&m, &s, "doctor", eps, &[0.5], &quick()).unwrap();
        assert_eq!(r.verdict, Verdict::Verified, "{r:#?}");
        assert_eq!(r.closest_attribute, "a1");
        assert!(r.attributes[0].tv_to_base <= eps + 2e-4);
        assert!(r.attributes[1].tv_to_base >= 1.0 - 2.0 * eps - 2e-4);
        assert!(!r.rep_balance.rows[1].satisfied);
        assert!(r.kl_numeric <= r.kl_bound + 2e-4);
    }

    #[test]
    fn identical_prompt_gives_zero_tv() {
        let m = model(4.0, 0.25, 4.0);
        let r = theorem41_experiment(&m, &store(0.0), "doctor", 0.01, &[0.5], &quick()).unwrap();
        assert_eq!(r.attributes[0].tv_to_base, 0.0);
        assert_eq!(r.verdict, Verdict::Verified);
    }

    #[test]
    fn overlapping_components_fail_hypotheses() {
        // ±0.5 with unit variance: components overlap heavily
        let m = model(0.5, 1.0, 4.0);
        let r = theorem41_experiment(&m, &store(0.0), "doctor", 0.05, &[0.5], &quick()).unwrap();
        assert_eq!(r.verdict, Verdict::HypothesesNotMet);
        assert!(r.hypotheses.iter().any(|h| h.name.starts_with("TV(") && !h.holds));
    }

    #[test]
    fn epsilon_must_be_below_half_threshold() {
        let m = model(4.0, 0.25, 4.0);
        let r = theorem41_experiment(&m, &store(0.0), "doctor", 0.3, &[0.5], &quick()).unwrap();
        assert_eq!(r.verdict, Verdict::HypothesesNotMet);
    }

    #[test]
    fn rep_balance_identity_and_boundary() {
        let m = model(4.0, 0.25, 4.0);
        let r = rep_balance_audit(&m, &store(0.0), "doctor", &["a1"], &[1.0], &Default::default())
            .unwrap();
        assert_eq!(r.rows[0].tv, 0.0);
        assert!(r.rows[0].satisfied);

        // equal weights at the base, pure components at the attributes: TV = 1/2 exactly
        let m = model(50.0, 1.0, 800.0);
        let r = rep_balance_audit(
            &m,
            &store(std::f64::consts::FRAC_PI_2),
            "doctor",
            &["a1", "a2"],
            &[0.5],
            &Default::default(),
        )
        .unwrap();
        for row in &r.rows {
            assert!((row.tv - 0.5).abs() < 1e-12, "{}", row.tv);
            assert!(row.satisfied, "{row:?}");
        }
        assert!(r.balanced);
    }

    #[test]
    fn rep_balance_input_errors() {
        let m = model(4.0, 0.25, 4.0);
        let q = QuadratureOptions::default();
        assert!(rep_balance_audit(&m, &store(0.0), "doctor", &["a1"], &[0.0], &q).is_err());
        assert!(rep_balance_audit(&m, &store(0.0), "doctor", &["a1", "a2"], &[0.2, 0.3, 0.4], &q)
            .is_err());
        assert!(matches!(
            rep_balance_audit(&m, &store(0.0), "doctor", &["a3"], &[0.5], &q),
            Err(Error::MissingKeys(_))
        ));
    }
}
