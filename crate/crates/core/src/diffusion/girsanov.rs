use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::conditional::ConditionalMixtureModel;
use super::quadrature::{kl_numeric_with, tv_numeric_with, QuadratureOptions};
use super::sampler::{blow_up, em_step, initial_state, path_rng, schedule, SdeRunConfig};
use crate::error::{Error, Result};

/// Relative confidence-interval width (`2·half_width / estimate`) above which a
/// Monte Carlo bound is reported as inconclusive.
pub const MAX_RELATIVE_CI_WIDTH: f64 = 0.10;

const CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrandPoint {
    /// Reverse time; forward time is `horizon − t`.
    pub t: f64,
    pub expected_drift_gap_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub prompt_distance: f64,
    pub kl_numeric: f64,
    /// Monte Carlo estimate of `∫₀ᵀ E‖b_t − b′_t‖² dt` along paths driven by `y`.
    pub kl_girsanov_bound: f64,
    pub ci_half_width: f64,
    pub tv_numeric: f64,
    pub pinsker_bound: f64,
    /// `T·L²·‖y − y′‖²` when the model has an analytic drift bound `L`.
    pub lipschitz_kl_cap: Option<f64>,
    pub kl_bound_holds: bool,
    pub pinsker_holds: bool,
    pub lipschitz_cap_holds: Option<bool>,
    pub inconclusive: bool,
    #[serde(skip)]
    pub integrand: Vec<IntegrandPoint>,
}

impl DivergenceReport {
    /// Both bounds hold, judged at the upper confidence limit.
    pub fn holds(&self) -> bool {
        self.kl_bound_holds && self.pinsker_holds && self.lipschitz_cap_holds.unwrap_or(true)
    }

    pub fn integrand_csv(&self) -> String {
        let mut out = String::from("t,expected_drift_gap_sq\n");
        for p in &self.integrand {
            out.push_str(&format!("{},{}\n", p.t, p.expected_drift_gap_sq));
        }
        out
    }
}

struct ChunkTotals {
    per_step: Vec<f64>,
    integrals: Vec<f64>,
}

/// Compares `KL(p_y ‖ p_y′)` against the Girsanov integral and TV against Pinsker.
///
/// Reverse paths follow the drift for `y`. At each step the squared difference between the
/// two reverse drifts `x + 2s_t(x, ·)` is accumulated; per-path integrals give the estimate
/// and its confidence interval.
pub fn girsanov_bound(
    model: &ConditionalMixtureModel,
    y: &[f64],
    y_prime: &[f64],
    config: &SdeRunConfig,
    quad: &QuadratureOptions,
) -> Result<DivergenceReport> {
    config.validate()?;
    let p = model.mixture_at(y)?;
    let q = model.mixture_at(y_prime)?;
    let plan_p = schedule(&p, config)?;
    let plan_q = schedule(&q, config)?;
    let dim = p.dim();
    let dt = config.dt();
    let n_chunks = config.paths.div_ceil(CHUNK);

    let chunks = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut per_step = vec![0.0; config.steps];
            let mut integrals = Vec::with_capacity(CHUNK);
            let mut sp = vec![0.0; dim];
            let mut sq = vec![0.0; dim];
            let mut scratch = Vec::new();
            for path in c * CHUNK..((c + 1) * CHUNK).min(config.paths) {
                let mut rng = path_rng(config.seed, path);
                let mut x = initial_state(dim, &mut rng);
                let mut integral = 0.0;
                for (k, (a, b)) in plan_p.iter().zip(&plan_q).enumerate() {
                    a.score_into(&x, &mut sp, &mut scratch);
                    b.score_into(&x, &mut sq, &mut scratch);
                    let gap: f64 = sp
                        .iter()
                        .zip(&sq)
                        .map(|(u, v)| 4.0 * (u - v) * (u - v))
                        .sum();
                    per_step[k] += gap;
                    integral += gap * dt;
                    em_step(&mut x, &sp, dt, &mut rng);
                    if x.iter().any(|v| !v.is_finite()) {
                        return Err(blow_up(path, k, &x));
                    }
                }
                integrals.push(integral);
            }
            Ok(ChunkTotals {
                per_step,
                integrals,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n = config.paths as f64;
    let mut per_step = vec![0.0; config.steps];
    let mut integrals = Vec::with_capacity(config.paths);
    for c in chunks {
        for (acc, v) in per_step.iter_mut().zip(&c.per_step) {
            *acc += v;
        }
        integrals.extend(c.integrals);
    }
    let rhs = integrals.iter().sum::<f64>() / n;
    let var = if config.paths > 1 {
        integrals.iter().map(|v| (v - rhs) * (v - rhs)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let ci_half_width = config.mean_tolerance(var.sqrt());
    let integrand = per_step
        .iter()
        .enumerate()
        .map(|(k, s)| IntegrandPoint {
            t: k as f64 * dt,
            expected_drift_gap_sq: s / n,
        })
        .collect();

    let kl = kl_numeric_with(&p, &q, quad)?;
    let tv = tv_numeric_with(&p, &q, quad)?;
    let pinsker_bound = (rhs / 2.0).sqrt();
    let slack = quad.comparison_slack();
    let upper = rhs + ci_half_width;
    let prompt_distance = y
        .iter()
        .zip(y_prime)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let lipschitz_kl_cap = model
        .drift_lipschitz_bound()
        .ok()
        .map(|l| config.horizon * (l * prompt_distance).powi(2));

    Ok(DivergenceReport {
        prompt_distance,
        kl_numeric: kl,
        kl_girsanov_bound: rhs,
        ci_half_width,
        tv_numeric: tv,
        pinsker_bound,
        lipschitz_kl_cap,
        kl_bound_holds: kl <= upper + slack,
        pinsker_holds: tv <= (upper / 2.0).sqrt() + slack,
        lipschitz_cap_holds: lipschitz_kl_cap.map(|cap| rhs <= cap * (1.0 + 1e-12)),
        inconclusive: rhs > 0.0 && 2.0 * ci_half_width / rhs > MAX_RELATIVE_CI_WIDTH,
        integrand,
    })
}

/// Runs [`girsanov_bound`] on each pair in order.
pub fn girsanov_suite(
    model: &ConditionalMixtureModel,
    pairs: &[(Vec<f64>, Vec<f64>)],
    config: &SdeRunConfig,
    quad: &QuadratureOptions,
) -> Result<Vec<DivergenceReport>> {
    if pairs.is_empty() {
        return Err(Error::invalid("no prompt pairs given"));
    }
    pairs
        .iter()
        .map(|(a, b)| girsanov_bound(model, a, b, config, quad))
        .collect()
}
