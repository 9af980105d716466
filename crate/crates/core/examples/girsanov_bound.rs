//! KL between generations for two prompts against the Girsanov drift integral, and TV
//! against its Pinsker image.

use fairdiff::diffusion::{
    girsanov_bound, ComponentShape, ConditionalMixtureModel, SdeRunConfig, SoftmaxWeightMap,
};

fn main() -> fairdiff::Result<()> {
    let shape = |attribute: &str, mean| ComponentShape {
        attribute: attribute.into(),
        mean: vec![mean],
        variance: vec![0.5],
    };
    let model = ConditionalMixtureModel::new(
        1,
        vec![shape("a", -1.5), shape("b", 1.5)],
        SoftmaxWeightMap::new(vec![vec![1.0], vec![-1.0]], vec![0.0, 0.0], 1)?,
    )?;
    let config = SdeRunConfig {
        paths: 2000,
        ..Default::default()
    };
    for (y, yp) in [(0.0, 0.1), (0.0, 0.5), (-0.8, 0.8)] {
        let r = girsanov_bound(&model, &[y], &[yp], &config, &Default::default())?;
        println!(
            "y = {y:+.1}, y' = {yp:+.1}: KL {:.5} <= {:.5} (± {:.5}, cap {:.3}), TV {:.4} <= {:.4}",
            r.kl_numeric,
            r.kl_girsanov_bound,
            r.ci_half_width,
            r.lipschitz_kl_cap.unwrap_or(f64::NAN),
            r.tv_numeric,
            r.pinsker_bound
        );
    }
    Ok(())
}
