use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::mixture::{softmax_in_place, GaussianComponent, GaussianMixture};
use crate::error::{Error, Result};

/// `w(y) = softmax(A·y + c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxWeightMap {
    /// `k × m`, one row per component.
    pub matrix: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
}

impl SoftmaxWeightMap {
    pub fn new(matrix: Vec<Vec<f64>>, offset: Vec<f64>, prompt_dim: usize) -> Result<Self> {
        if matrix.len() != offset.len() {
            return Err(Error::DimensionMismatch {
                expected: matrix.len(),
                found: offset.len(),
                context: Some("weight-map offset".into()),
            });
        }
        for (i, row) in matrix.iter().enumerate() {
            if row.len() != prompt_dim {
                return Err(Error::DimensionMismatch {
                    expected: prompt_dim,
                    found: row.len(),
                    context: Some(format!("weight-map row {i}")),
                });
            }
        }
        if matrix.iter().flatten().chain(&offset).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "in weight map".into(),
            });
        }
        Ok(Self { matrix, offset })
    }

    pub fn logits(&self, y: &[f64]) -> Vec<f64> {
        self.matrix
            .iter()
            .zip(&self.offset)
            .map(|(row, c)| row.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() + c)
            .collect()
    }

    pub fn weights(&self, y: &[f64]) -> Vec<f64> {
        let mut w = self.logits(y);
        softmax_in_place(&mut w);
        w
    }

    /// Largest `‖a_i − a_j‖` over pairs of rows.
    pub fn max_row_gap(&self) -> f64 {
        let mut best = 0.0f64;
        for (i, a) in self.matrix.iter().enumerate() {
            for b in &self.matrix[i + 1..] {
                let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                best = best.max(d.sqrt());
            }
        }
        best
    }
}

/// Component shape without a weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentShape {
    pub attribute: String,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// On-disk model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub prompt_dim: usize,
    pub components: Vec<ComponentShape>,
    pub weight_map: WeightMapSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMapSpec {
    pub matrix: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
}

/// A mixture over `k` fixed shapes whose weights depend on a prompt embedding `y ∈ R^m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelSpec", into = "ModelSpec")]
pub struct ConditionalMixtureModel {
    prompt_dim: usize,
    shapes: Vec<ComponentShape>,
    weight_map: SoftmaxWeightMap,
}

impl TryFrom<ModelSpec> for ConditionalMixtureModel {
    type Error = Error;
    fn try_from(spec: ModelSpec) -> Result<Self> {
        let map = SoftmaxWeightMap::new(
            spec.weight_map.matrix,
            spec.weight_map.offset,
            spec.prompt_dim,
        )?;
        Self::new(spec.prompt_dim, spec.components, map)
    }
}

impl From<ConditionalMixtureModel> for ModelSpec {
    fn from(m: ConditionalMixtureModel) -> Self {
        ModelSpec {
            prompt_dim: m.prompt_dim,
            components: m.shapes,
            weight_map: WeightMapSpec {
                matrix: m.weight_map.matrix,
                offset: m.weight_map.offset,
            },
        }
    }
}

impl ConditionalMixtureModel {
    pub fn new(
        prompt_dim: usize,
        shapes: Vec<ComponentShape>,
        weight_map: SoftmaxWeightMap,
    ) -> Result<Self> {
        if prompt_dim == 0 {
            return Err(Error::invalid("prompt dimension must be at least 1"));
        }
        if shapes.len() != weight_map.matrix.len() {
            return Err(Error::DimensionMismatch {
                expected: shapes.len(),
                found: weight_map.matrix.len(),
                context: Some("weight-map rows vs components".into()),
            });
        }
        for (i, row) in weight_map.matrix.iter().enumerate() {
            if row.len() != prompt_dim {
                return Err(Error::DimensionMismatch {
                    expected: prompt_dim,
                    found: row.len(),
                    context: Some(format!("weight-map row {i}")),
                });
            }
        }
        let mut seen = std::collections::HashSet::new();
        for s in &shapes {
            if !seen.insert(s.attribute.as_str()) {
                return Err(Error::DuplicateKey(s.attribute.clone()));
            }
        }
        let k = shapes.len().max(1) as f64;
        // validates shapes through the mixture constructor
        GaussianMixture::new(
            shapes
                .iter()
                .map(|s| GaussianComponent {
                    weight: 1.0 / k,
                    mean: s.mean.clone(),
                    variance: s.variance.clone(),
                })
                .collect(),
        )?;
        Ok(Self {
            prompt_dim,
            shapes,
            weight_map,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn prompt_dim(&self) -> usize {
        self.prompt_dim
    }

    pub fn data_dim(&self) -> usize {
        self.shapes[0].mean.len()
    }

    pub fn shapes(&self) -> &[ComponentShape] {
        &self.shapes
    }

    pub fn attributes(&self) -> impl Iterator<Item = &str> {
        self.shapes.iter().map(|s| s.attribute.as_str())
    }

    pub fn weight_map(&self) -> &SoftmaxWeightMap {
        &self.weight_map
    }

    fn check_prompt(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.prompt_dim {
            return Err(Error::DimensionMismatch {
                expected: self.prompt_dim,
                found: y.len(),
                context: Some("prompt embedding".into()),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "in prompt embedding".into(),
            });
        }
        Ok(())
    }

    pub fn weights(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_prompt(y)?;
        Ok(self.weight_map.weights(y))
    }

    /// `p_y`.
    pub fn mixture_at(&self, y: &[f64]) -> Result<GaussianMixture> {
        let w = self.weights(y)?;
        GaussianMixture::new(
            self.shapes
                .iter()
                .zip(w)
                .map(|(s, weight)| GaussianComponent {
                    weight,
                    mean: s.mean.clone(),
                    variance: s.variance.clone(),
                })
                .collect(),
        )
    }

    /// Variance vector common to all components, if there is one.
    pub fn shared_variance(&self) -> Option<&[f64]> {
        let v = &self.shapes[0].variance;
        self.shapes
            .iter()
            .all(|s| &s.variance == v)
            .then_some(v.as_slice())
    }

    /// Bound on `‖∂w/∂y‖`: `√((1 − 1/k)/2) · max‖a_i − a_j‖`.
    pub fn weight_lipschitz_bound(&self) -> f64 {
        let k = self.shapes.len() as f64;
        ((1.0 - 1.0 / k) / 2.0).sqrt() * self.weight_map.max_row_gap()
    }

    /// Bound on `‖s_t(x, y) − s_t(x, y′)‖ / ‖y − y′‖` uniform in `x` and `t`.
    ///
    /// With a shared diagonal covariance the component scores differ by a constant in
    /// `x`, so the `y`-Jacobian of the score is a responsibility covariance between that
    /// gap and the logit gradients. Cauchy–Schwarz bounds it by
    /// `(1 − 1/k)/2 · D · max‖a_i − a_j‖` where `D` is the largest component-score gap
    /// over all noise levels.
    pub fn score_lipschitz_bound(&self) -> Result<f64> {
        let var = self.shared_variance().ok_or_else(|| {
            Error::invalid(
                "an analytic Lipschitz bound needs all components to share one covariance",
            )
        })?;
        let peak: Vec<f64> = var
            .iter()
            .map(|&v| {
                if v < 2.0 {
                    1.0 / v
                } else {
                    1.0 / (2.0 * (v - 1.0).sqrt())
                }
            })
            .collect();
        let mut gap = 0.0f64;
        for (i, a) in self.shapes.iter().enumerate() {
            for b in &self.shapes[i + 1..] {
                let d2: f64 = a
                    .mean
                    .iter()
                    .zip(&b.mean)
                    .zip(&peak)
                    .map(|((x, y), p)| (p * (x - y)).powi(2))
                    .sum();
                gap = gap.max(d2.sqrt());
            }
        }
        let k = self.shapes.len() as f64;
        Ok((1.0 - 1.0 / k) / 2.0 * gap * self.weight_map.max_row_gap())
    }

    /// Bound on the reverse-drift difference `‖2(s_t(x,y) − s_t(x,y′))‖` per unit `‖y − y′‖`.
    pub fn drift_lipschitz_bound(&self) -> Result<f64> {
        Ok(2.0 * self.score_lipschitz_bound()?)
    }
}

/// `s_t(x, y)`: score of `p_y` noised to time `t`.
pub fn conditional_score(
    model: &ConditionalMixtureModel,
    x: &[f64],
    t: f64,
    y: &[f64],
) -> Result<Vec<f64>> {
    super::mixture::mixture_score(&model.mixture_at(y)?, x, t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzProbeConfig {
    pub probes: usize,
    pub horizon: f64,
    pub seed: u64,
}

impl Default for LipschitzProbeConfig {
    fn default() -> Self {
        Self {
            probes: 10_000,
            horizon: 5.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    pub estimate: f64,
    pub analytic_bound: f64,
    pub probes: usize,
    pub within_bound: bool,
}

/// Rounding allowance when comparing the empirical ratio with the analytic bound.
const BOUND_RELATIVE_SLACK: f64 = 1e-9;

/// Empirical `sup ‖Δs‖ / ‖Δy‖` over random probes.
///
/// Even probes draw `y`, `y′` freely. Odd probes place `y` where two components have
/// equal responsibility and step along the difference of their weight-map rows, which
/// is where the ratio peaks. Probe `i` depends only on `(seed, i)`.
pub fn score_lipschitz_estimate(
    model: &ConditionalMixtureModel,
    config: &LipschitzProbeConfig,
) -> Result<LipschitzEstimate> {
    if !(config.horizon > 0.0) {
        return Err(Error::invalid("probe horizon must be positive"));
    }
    let analytic_bound = model.score_lipschitz_bound()?;
    let m = model.prompt_dim;
    let k = model.shapes.len();
    let box_: Vec<(f64, f64)> = {
        let base = model.mixture_at(&vec![0.0; m])?;
        base.bounds(3.0)
            .into_iter()
            .map(|(lo, hi)| (lo.min(-3.0), hi.max(3.0)))
            .collect()
    };

    let mut estimate = 0.0f64;
    for i in 0..config.probes {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(i as u64);
        let t = rng.random::<f64>() * config.horizon;
        let x: Vec<f64> = box_
            .iter()
            .map(|(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
            .collect();
        let mut y: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let dy: Vec<f64> = if i % 2 == 1 && k >= 2 {
            let a = rng.random_range(0..k);
            let mut b = rng.random_range(0..k - 1);
            if b >= a {
                b += 1;
            }
            let u: Vec<f64> = model.weight_map.matrix[a]
                .iter()
                .zip(&model.weight_map.matrix[b])
                .map(|(p, q)| p - q)
                .collect();
            let uu: f64 = u.iter().map(|v| v * v).sum();
            if uu == 0.0 {
                continue;
            }
            let noised = model.mixture_at(&y)?.noised(t)?.mixture;
            let (ca, cb) = (&noised.components()[a], &noised.components()[b]);
            let ll = |c: &GaussianComponent| -> f64 {
                -0.5 * c
                    .mean
                    .iter()
                    .zip(&c.variance)
                    .zip(&x)
                    .map(|((mu, v), xi)| (xi - mu) * (xi - mu) / v + v.ln())
                    .sum::<f64>()
            };
            let logits = model.weight_map.logits(&y);
            let excess = logits[a] - logits[b] + ll(ca) - ll(cb);
            for (yj, uj) in y.iter_mut().zip(&u) {
                *yj -= excess / uu * uj;
            }
            let scale = 1e-4 / uu.sqrt();
            u.iter().map(|v| v * scale).collect()
        } else {
            let mag = 10f64.powf(-3.0 * rng.random::<f64>());
            (0..m)
                .map(|_| mag * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let y2: Vec<f64> = y.iter().zip(&dy).map(|(a, b)| a + b).collect();
        let step: f64 = y
            .iter()
            .zip(&y2)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if step == 0.0 || !y.iter().all(|v| v.is_finite()) {
            continue;
        }
        let s1 = conditional_score(model, &x, t, &y)?;
        let s2 = conditional_score(model, &x, t, &y2)?;
        let diff: f64 = s1
            .iter()
            .zip(&s2)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        estimate = estimate.max(diff / step);
    }
    Ok(LipschitzEstimate {
        estimate,
        analytic_bound,
        probes: config.probes,
        within_bound: estimate <= analytic_bound * (1.0 + BOUND_RELATIVE_SLACK),
    })
}
