//! Empirical Lipschitz constant of the score in the prompt embedding, against the
//! analytic bound, for increasingly steep weight maps.

use fairdiff::diffusion::{
    score_lipschitz_estimate, ComponentShape, ConditionalMixtureModel, LipschitzProbeConfig,
    SoftmaxWeightMap,
};

fn main() -> fairdiff::Result<()> {
    let shape = |attribute: &str, mean| ComponentShape {
        attribute: attribute.into(),
        mean: vec![mean],
        variance: vec![0.25],
    };
    for slope in [0.5, 2.0, 4.0] {
        let model = ConditionalMixtureModel::new(
            2,
            vec![shape("a", -4.0), shape("b", 4.0)],
            SoftmaxWeightMap::new(vec![vec![slope, 0.0], vec![-slope, 0.0]], vec![0.0, 0.0], 2)?,
        )?;
        let est = score_lipschitz_estimate(&model, &LipschitzProbeConfig::default())?;
        println!(
            "slope {slope}: estimate {:.4}, bound {:.4}, within: {}",
            est.estimate, est.analytic_bound, est.within_bound
        );
    }
    Ok(())
}
