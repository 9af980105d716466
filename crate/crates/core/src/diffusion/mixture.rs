use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// One diagonal-covariance Gaussian component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// A finite mixture of diagonal Gaussians over `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<GaussianComponent>", into = "Vec<GaussianComponent>")]
pub struct GaussianMixture {
    components: Vec<GaussianComponent>,
    dim: usize,
}

impl TryFrom<Vec<GaussianComponent>> for GaussianMixture {
    type Error = Error;
    fn try_from(c: Vec<GaussianComponent>) -> Result<Self> {
        Self::new(c)
    }
}

impl From<GaussianMixture> for Vec<GaussianComponent> {
    fn from(m: GaussianMixture) -> Self {
        m.components
    }
}

impl GaussianMixture {
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::invalid("a mixture needs at least one component"))?;
        let dim = first.mean.len();
        if dim == 0 {
            return Err(Error::invalid("mixture dimension must be at least 1"));
        }
        let mut total = 0.0;
        for (i, c) in components.iter().enumerate() {
            if c.mean.len() != dim || c.variance.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: c.mean.len().max(c.variance.len()),
                    context: Some(format!("mixture component {i}")),
                });
            }
            if !(c.weight >= 0.0) || !c.weight.is_finite() {
                return Err(Error::invalid(format!(
                    "component {i} has invalid weight {}",
                    c.weight
                )));
            }
            if c.mean.iter().any(|m| !m.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("in mean of component {i}"),
                });
            }
            if c.variance.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "component {i} has a non-positive variance"
                )));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { components, dim })
    }

    /// A single Gaussian `N(mean, diag(variance))`.
    pub fn gaussian(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        Self::new(vec![GaussianComponent {
            weight: 1.0,
            mean,
            variance,
        }])
    }

    pub fn standard_normal(dim: usize) -> Result<Self> {
        Self::gaussian(vec![0.0; dim], vec![1.0; dim])
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    /// Same shapes with new weights.
    pub fn with_weights(&self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.components.len() {
            return Err(Error::dims(self.components.len(), weights.len()));
        }
        let components = self
            .components
            .iter()
            .zip(weights)
            .map(|(c, &w)| GaussianComponent {
                weight: w,
                ..c.clone()
            })
            .collect();
        Self::new(components)
    }

    fn component_log_density(c: &GaussianComponent, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((xi, m), v) in x.iter().zip(&c.mean).zip(&c.variance) {
            let d = xi - m;
            acc += (2.0 * PI * v).ln() + d * d / v;
        }
        -0.5 * acc
    }

    /// Per-component `ln w_i + ln N(x; μ_i, Σ_i)`; zero-weight components give `-inf`.
    fn log_terms_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.components.iter().map(|c| {
            if c.weight > 0.0 {
                c.weight.ln() + Self::component_log_density(c, x)
            } else {
                f64::NEG_INFINITY
            }
        }));
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut terms = Vec::with_capacity(self.components.len());
        self.log_terms_into(x, &mut terms);
        log_sum_exp(&terms)
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }

    /// Posterior component probabilities at `x`.
    pub fn responsibilities(&self, x: &[f64]) -> Vec<f64> {
        let mut terms = Vec::with_capacity(self.components.len());
        self.log_terms_into(x, &mut terms);
        softmax_in_place(&mut terms);
        terms
    }

    /// Index of the most responsible component; ties go to the lower index.
    pub fn classify(&self, x: &[f64]) -> usize {
        let r = self.responsibilities(x);
        let mut best = 0;
        for (i, &v) in r.iter().enumerate() {
            if v > r[best] {
                best = i;
            }
        }
        best
    }

    /// `∇ ln p(x)` written into `out`; `scratch` is reused across calls.
    pub fn score_into(&self, x: &[f64], out: &mut [f64], scratch: &mut Vec<f64>) {
        self.log_terms_into(x, scratch);
        softmax_in_place(scratch);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (c, &r) in self.components.iter().zip(scratch.iter()) {
            if r == 0.0 {
                continue;
            }
            for (d, o) in out.iter_mut().enumerate() {
                *o -= r * (x[d] - c.mean[d]) / c.variance[d];
            }
        }
    }

    pub fn score(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        let mut scratch = Vec::with_capacity(self.components.len());
        self.score_into(x, &mut out, &mut scratch);
        out
    }

    /// Law of `X_t` under `dX = −X dt + √2 dB` started from this mixture.
    pub fn noised(&self, t: f64) -> Result<NoisedMixture> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::invalid(format!("time must be finite and ≥ 0, got {t}")));
        }
        let decay = (-t).exp();
        let keep = decay * decay;
        let components = self
            .components
            .iter()
            .map(|c| GaussianComponent {
                weight: c.weight,
                mean: c.mean.iter().map(|m| decay * m).collect(),
                variance: c.variance.iter().map(|v| keep * v + (1.0 - keep)).collect(),
            })
            .collect();
        Ok(NoisedMixture {
            t,
            mixture: GaussianMixture {
                components,
                dim: self.dim,
            },
        })
    }

    /// Adds isotropic variance `sigma²` to every component (law of `x + N(0, σ²I)`).
    pub fn convolved(&self, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::invalid("noise level must be positive"));
        }
        let s2 = sigma * sigma;
        Self::new(
            self.components
                .iter()
                .map(|c| GaussianComponent {
                    weight: c.weight,
                    mean: c.mean.clone(),
                    variance: c.variance.iter().map(|v| v + s2).collect(),
                })
                .collect(),
        )
    }

    /// CDF of a one-dimensional mixture.
    pub fn cdf_1d(&self, x: f64) -> Result<f64> {
        if self.dim != 1 {
            return Err(Error::invalid("CDF is only defined here for 1D mixtures"));
        }
        Ok(self
            .components
            .iter()
            .map(|c| c.weight * normal_cdf((x - c.mean[0]) / c.variance[0].sqrt()))
            .sum())
    }

    /// Smallest component standard deviation over all dimensions.
    pub(crate) fn min_std(&self) -> f64 {
        self.components
            .iter()
            .flat_map(|c| c.variance.iter())
            .fold(f64::INFINITY, |a, v| a.min(v.sqrt()))
    }

    /// Per-dimension `[min(μ − kσ), max(μ + kσ)]` over components.
    pub(crate) fn bounds(&self, k: f64) -> Vec<(f64, f64)> {
        (0..self.dim)
            .map(|d| {
                self.components.iter().fold(
                    (f64::INFINITY, f64::NEG_INFINITY),
                    |(lo, hi), c| {
                        let s = c.variance[d].sqrt();
                        (lo.min(c.mean[d] - k * s), hi.max(c.mean[d] + k * s))
                    },
                )
            })
            .collect()
    }
}

/// A mixture together with the forward time it was noised to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisedMixture {
    pub t: f64,
    pub mixture: GaussianMixture,
}

/// OU-noised parameters of `mixture` at time `t`.
pub fn noised_params(mixture: &GaussianMixture, t: f64) -> Result<NoisedMixture> {
    mixture.noised(t)
}

/// Score of the noised mixture: `∇ ln q_t(x)`.
pub fn mixture_score(mixture: &GaussianMixture, x: &[f64], t: f64) -> Result<Vec<f64>> {
    if x.len() != mixture.dim() {
        return Err(Error::dims(mixture.dim(), x.len()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "in score query point".into(),
        });
    }
    Ok(mixture.noised(t)?.mixture.score(x))
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax_in_place(terms: &mut [f64]) {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for t in terms.iter_mut() {
        *t = (*t - m).exp();
        total += *t;
    }
    for t in terms.iter_mut() {
        *t /= total;
    }
}

pub(crate) fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}
