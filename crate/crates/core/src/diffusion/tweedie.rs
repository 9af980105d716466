use serde::{Deserialize, Serialize};

use super::mixture::GaussianMixture;
use crate::error::{Error, Result};

const SIMPSON_INTERVALS: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweediePoint {
    pub observed: f64,
    pub formula: f64,
    pub oracle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweedieReport {
    pub sigma: f64,
    pub max_deviation: f64,
    pub points: Vec<TweediePoint>,
}

/// `E[x | x̃]` for `x̃ = x + σz`, by Simpson integration of the unnormalized posterior.
pub fn posterior_mean_quadrature(prior: &GaussianMixture, sigma: f64, observed: f64) -> Result<f64> {
    if prior.dim() != 1 {
        return Err(Error::invalid("posterior-mean quadrature needs a 1D prior"));
    }
    let (plo, phi) = prior.bounds(12.0)[0];
    let mut lo = (observed - 12.0 * sigma).max(plo);
    let mut hi = (observed + 12.0 * sigma).min(phi);
    if !(lo < hi) {
        lo = plo;
        hi = phi;
    }
    let n = SIMPSON_INTERVALS;
    let h = (hi - lo) / n as f64;
    let log_post: Vec<f64> = (0..=n)
        .map(|i| {
            let x = lo + i as f64 * h;
            let d = observed - x;
            prior.log_density(&[x]) - d * d / (2.0 * sigma * sigma)
        })
        .collect();
    let peak = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut m) = (0.0, 0.0);
    for (i, lp) in log_post.iter().enumerate() {
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let f = (lp - peak).exp();
        z += w * f;
        m += w * f * (lo + i as f64 * h);
    }
    Ok(m / z)
}

/// Compares `x̃ + σ²·∇ln p̃(x̃)` with the quadrature posterior mean at `trials` evenly
/// spaced observations across the prior's bulk.
pub fn tweedie_check(prior: &GaussianMixture, sigma: f64, trials: usize) -> Result<TweedieReport> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid("sigma must be positive and finite"));
    }
    if prior.dim() != 1 {
        return Err(Error::invalid("the Tweedie check needs a 1D prior"));
    }
    if trials == 0 {
        return Err(Error::invalid("at least one trial is needed"));
    }
    let convolved = prior.convolved(sigma)?;
    let (lo, hi) = prior.bounds(3.0)[0];
    let points = (0..trials)
        .map(|i| {
            let observed = if trials == 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * i as f64 / (trials - 1) as f64
            };
            let formula = observed + sigma * sigma * convolved.score(&[observed])[0];
            let oracle = posterior_mean_quadrature(prior, sigma, observed)?;
            Ok(TweediePoint {
                observed,
                formula,
                oracle,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_deviation = points
        .iter()
        .map(|p| (p.formula - p.oracle).abs())
        .fold(0.0, f64::max);
    Ok(TweedieReport {
        sigma,
        max_deviation,
        points,
    })
}

/// Prior used when no model is given: an asymmetric two-component mixture.
pub fn default_tweedie_prior() -> GaussianMixture {
    GaussianMixture::new(vec![
        super::mixture::GaussianComponent {
            weight: 0.3,
            mean: vec![-2.0],
            variance: vec![0.5],
        },
        super::mixture::GaussianComponent {
            weight: 0.7,
            mean: vec![1.5],
            variance: vec![0.8],
        },
    ])
    .expect("valid default prior")
}
