use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::conditional::ConditionalMixtureModel;
use super::mixture::GaussianMixture;
use crate::error::{Error, Result};

/// Reverse-SDE run settings. The integrator is fixed-step Euler–Maruyama.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SdeRunConfig {
    pub horizon: f64,
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
    /// Upper limit on `steps · paths`.
    pub max_work: u64,
    /// Normal quantile for Monte Carlo confidence intervals.
    pub confidence_z: f64,
}

impl Default for SdeRunConfig {
    fn default() -> Self {
        Self {
            horizon: 5.0,
            steps: 400,
            paths: 5000,
            seed: 0,
            max_work: 200_000_000,
            confidence_z: 2.576,
        }
    }
}

impl SdeRunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::invalid("horizon must be positive and finite"));
        }
        if self.steps == 0 || self.paths == 0 {
            return Err(Error::invalid("steps and paths must both be at least 1"));
        }
        let work = self.steps as u128 * self.paths as u128;
        if work > self.max_work as u128 {
            return Err(Error::invalid(format!(
                "steps × paths = {work} exceeds the budget of {}",
                self.max_work
            )));
        }
        if !(self.confidence_z > 0.0) {
            return Err(Error::invalid("confidence quantile must be positive"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Half-width of a normal-approximation interval for a mean of `paths` draws.
    pub fn mean_tolerance(&self, sd: f64) -> f64 {
        self.confidence_z * sd / (self.paths as f64).sqrt()
    }

    /// Half-width for a proportion `p` estimated from `paths` draws.
    pub fn proportion_tolerance(&self, p: f64) -> f64 {
        self.mean_tolerance((p * (1.0 - p)).sqrt())
    }
}

/// Independent stream for one path.
pub(crate) fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

/// Noised targets at reverse-time grid points: entry `k` is `q_{T − k·dt}`.
pub(crate) fn schedule(target: &GaussianMixture, config: &SdeRunConfig) -> Result<Vec<GaussianMixture>> {
    let dt = config.dt();
    (0..config.steps)
        .map(|k| Ok(target.noised(config.horizon - k as f64 * dt)?.mixture))
        .collect()
}

/// One Euler–Maruyama step of `dX = (X + 2∇ln q)dt + √2 dB`.
pub(crate) fn em_step(x: &mut [f64], score: &[f64], dt: f64, rng: &mut ChaCha8Rng) {
    let noise = (2.0 * dt).sqrt();
    for (xi, si) in x.iter_mut().zip(score) {
        let z: f64 = StandardNormal.sample(rng);
        *xi += (*xi + 2.0 * si) * dt + noise * z;
    }
}

pub(crate) fn initial_state(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

pub(crate) fn blow_up(path: usize, step: usize, x: &[f64]) -> Error {
    Error::Numerical(format!(
        "reverse SDE diverged on path {path} at step {step}: state {x:?}"
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub samples: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Unbiased per-dimension sample variance.
    pub variance: Vec<f64>,
    /// Argmax-responsibility counts under the target mixture.
    pub component_counts: Vec<usize>,
    pub component_proportions: Vec<f64>,
    /// Average posterior responsibility of each component over samples.
    pub mean_responsibilities: Vec<f64>,
}

/// Integrates the reverse SDE for `target` from `N(0, I)` over `config.paths` paths.
pub fn reverse_sde_sample_mixture(target: &GaussianMixture, config: &SdeRunConfig) -> Result<SampleSet> {
    config.validate()?;
    let plan = schedule(target, config)?;
    let dim = target.dim();
    let dt = config.dt();
    let samples = (0..config.paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(config.seed, p);
            let mut x = initial_state(dim, &mut rng);
            let mut s = vec![0.0; dim];
            let mut scratch = Vec::new();
            for (k, q) in plan.iter().enumerate() {
                q.score_into(&x, &mut s, &mut scratch);
                em_step(&mut x, &s, dt, &mut rng);
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(blow_up(p, k, &x));
                }
            }
            Ok(x)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(target, samples))
}

/// Samples from `p_y` for the prompt embedding `y`.
pub fn reverse_sde_sample(
    model: &ConditionalMixtureModel,
    y: &[f64],
    config: &SdeRunConfig,
) -> Result<SampleSet> {
    reverse_sde_sample_mixture(&model.mixture_at(y)?, config)
}

fn summarize(target: &GaussianMixture, samples: Vec<Vec<f64>>) -> SampleSet {
    let n = samples.len() as f64;
    let dim = target.dim();
    let k = target.components().len();
    let mut mean = vec![0.0; dim];
    for s in &samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut variance = vec![0.0; dim];
    for s in &samples {
        for ((acc, v), m) in variance.iter_mut().zip(s).zip(&mean) {
            *acc += (v - m) * (v - m);
        }
    }
    let denom = (n - 1.0).max(1.0);
    variance.iter_mut().for_each(|v| *v /= denom);

    let mut component_counts = vec![0usize; k];
    let mut mean_responsibilities = vec![0.0; k];
    for s in &samples {
        let r = target.responsibilities(s);
        let mut best = 0;
        for (i, &v) in r.iter().enumerate() {
            mean_responsibilities[i] += v;
            if v > r[best] {
                best = i;
            }
        }
        component_counts[best] += 1;
    }
    mean_responsibilities.iter_mut().for_each(|v| *v /= n);
    let component_proportions = component_counts.iter().map(|&c| c as f64 / n).collect();
    SampleSet {
        samples,
        mean,
        variance,
        component_counts,
        component_proportions,
        mean_responsibilities,
    }
}

/// Kolmogorov–Smirnov distance between an empirical sample and a CDF.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted: Vec<f64> = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}
