//! Posterior mean of a noisy observation from the score of the smoothed density, checked
//! against direct numerical integration.

use fairdiff::diffusion::{default_tweedie_prior, tweedie_check};

fn main() -> fairdiff::Result<()> {
    let prior = default_tweedie_prior();
    for sigma in [0.1, 0.8, 2.0] {
        let r = tweedie_check(&prior, sigma, 50)?;
        let mid = &r.points[25];
        println!(
            "sigma {sigma}: max deviation {:.2e}; at x~ = {:.3}, E[x|x~] = {:.6}",
            r.max_deviation, mid.observed, mid.formula
        );
    }
    Ok(())
}
