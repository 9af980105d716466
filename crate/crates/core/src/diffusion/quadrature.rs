use serde::{Deserialize, Serialize};

use super::mixture::GaussianMixture;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureOptions {
    /// Absolute error target.
    pub abs_tol: f64,
    /// Grid half-width in component standard deviations.
    pub span_sigmas: f64,
    /// Maximum number of step halvings after the initial grid.
    pub max_refinements: u32,
    /// Cap on grid points per axis.
    pub max_points_per_axis: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-4,
            span_sigmas: 8.0,
            max_refinements: 8,
            max_points_per_axis: 1 << 16,
        }
    }
}

impl QuadratureOptions {
    /// Slack granted to comparisons between quadrature results.
    pub fn comparison_slack(&self) -> f64 {
        2.0 * self.abs_tol
    }
}

fn check_pair(p: &GaussianMixture, q: &GaussianMixture) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::dims(p.dim(), q.dim()));
    }
    if p.dim() > 2 {
        return Err(Error::invalid(format!(
            "grid quadrature supports dimension ≤ 2, got {}",
            p.dim()
        )));
    }
    Ok(())
}

/// Trapezoid rule on a box covering both mixtures, halving the step until two successive
/// estimates agree to a tenth of the tolerance.
fn integrate_pair(
    p: &GaussianMixture,
    q: &GaussianMixture,
    opts: &QuadratureOptions,
    f: impl Fn(&[f64]) -> Result<f64>,
) -> Result<f64> {
    check_pair(p, q)?;
    let dim = p.dim();
    let bp = p.bounds(opts.span_sigmas);
    let bq = q.bounds(opts.span_sigmas);
    let bounds: Vec<(f64, f64)> = bp
        .iter()
        .zip(&bq)
        .map(|(a, b)| (a.0.min(b.0), a.1.max(b.1)))
        .collect();
    let h0 = p.min_std().min(q.min_std()) / 4.0;
    let mut n: Vec<usize> = bounds
        .iter()
        .map(|(lo, hi)| (((hi - lo) / h0).ceil() as usize).max(2))
        .collect();
    if n.iter().any(|&k| k > opts.max_points_per_axis) {
        return Err(Error::Numerical(format!(
            "quadrature grid of {n:?} intervals exceeds the per-axis cap"
        )));
    }

    let mut previous = trapezoid(&bounds, &n, dim, &f)?;
    for _ in 0..opts.max_refinements {
        n.iter_mut().for_each(|k| *k *= 2);
        if n.iter().any(|&k| k > opts.max_points_per_axis) {
            break;
        }
        let next = trapezoid(&bounds, &n, dim, &f)?;
        let change = (next - previous).abs();
        previous = next;
        if change <= opts.abs_tol / 10.0 {
            break;
        }
    }
    Ok(previous)
}

fn trapezoid(
    bounds: &[(f64, f64)],
    n: &[usize],
    dim: usize,
    f: &impl Fn(&[f64]) -> Result<f64>,
) -> Result<f64> {
    let h: Vec<f64> = bounds
        .iter()
        .zip(n)
        .map(|((lo, hi), k)| (hi - lo) / *k as f64)
        .collect();
    let w = |i: usize, k: usize| if i == 0 || i == k { 0.5 } else { 1.0 };
    let mut total = 0.0;
    if dim == 1 {
        for i in 0..=n[0] {
            let x = bounds[0].0 + i as f64 * h[0];
            total += w(i, n[0]) * f(&[x])?;
        }
        Ok(total * h[0])
    } else {
        let mut pt = [0.0; 2];
        for i in 0..=n[0] {
            pt[0] = bounds[0].0 + i as f64 * h[0];
            let mut row = 0.0;
            for j in 0..=n[1] {
                pt[1] = bounds[1].0 + j as f64 * h[1];
                row += w(j, n[1]) * f(&pt)?;
            }
            total += w(i, n[0]) * row;
        }
        Ok(total * h[0] * h[1])
    }
}

/// `½∫|p − q|`, clamped to `[0, 1]`.
pub fn tv_numeric(p: &GaussianMixture, q: &GaussianMixture) -> Result<f64> {
    tv_numeric_with(p, q, &QuadratureOptions::default())
}

pub fn tv_numeric_with(
    p: &GaussianMixture,
    q: &GaussianMixture,
    opts: &QuadratureOptions,
) -> Result<f64> {
    if p == q {
        check_pair(p, q)?;
        return Ok(0.0);
    }
    let v = integrate_pair(p, q, opts, |x| Ok(0.5 * (p.density(x) - q.density(x)).abs()))?;
    Ok(v.clamp(0.0, 1.0))
}

/// `∫ p ln(p/q)`, computed from log densities.
pub fn kl_numeric(p: &GaussianMixture, q: &GaussianMixture) -> Result<f64> {
    kl_numeric_with(p, q, &QuadratureOptions::default())
}

pub fn kl_numeric_with(
    p: &GaussianMixture,
    q: &GaussianMixture,
    opts: &QuadratureOptions,
) -> Result<f64> {
    if p == q {
        check_pair(p, q)?;
        return Ok(0.0);
    }
    let v = integrate_pair(p, q, opts, |x| {
        let lp = p.log_density(x);
        if lp == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        let lq = q.log_density(x);
        if !lq.is_finite() {
            return Err(Error::Numerical(format!(
                "KL integrand is not finite at {x:?}: q has no mass where p does"
            )));
        }
        Ok(lp.exp() * (lp - lq))
    })?;
    Ok(v.max(0.0))
}
