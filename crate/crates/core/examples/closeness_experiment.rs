//! A base prompt embedded within ε/(√T·L) of one attribute generates almost only that
//! attribute, so every other attribute is underrepresented.

use fairdiff::diffusion::{
    theorem41_experiment, ComponentShape, ConditionalMixtureModel, SoftmaxWeightMap,
    Theorem41Config,
};
use fairdiff::embedding::{EmbeddingStore, EmbeddingVector, StoreKind};

fn main() -> fairdiff::Result<()> {
    let shape = |attribute: &str, mean| ComponentShape {
        attribute: attribute.into(),
        mean: vec![mean],
        variance: vec![0.25],
    };
    let model = ConditionalMixtureModel::new(
        2,
        vec![shape("male", -4.0), shape("female", 4.0)],
        SoftmaxWeightMap::new(vec![vec![4.0, 0.0], vec![-4.0, 0.0]], vec![0.0, 0.0], 2)?,
    )?;
    let epsilon = 0.05;
    let radius = epsilon / (5f64.sqrt() * model.drift_lipschitz_bound()?);
    let angle = 2.0 * (radius / 2.0).asin();

    let mut store = EmbeddingStore::new(StoreKind::Prompt, 2);
    store.insert("doctor", EmbeddingVector::new(vec![angle.cos(), angle.sin()])?)?;
    store.insert("male doctor", EmbeddingVector::new(vec![1.0, 0.0])?)?;
    store.insert("female doctor", EmbeddingVector::new(vec![-1.0, 0.0])?)?;

    let report = theorem41_experiment(&model, &store, "doctor", epsilon, &[0.5], &Theorem41Config::default())?;
    for c in report.hypotheses.iter().chain(&report.conclusions) {
        println!("[{}] {} ({:.3e} vs {:.3e})", if c.holds { "ok" } else { "no" }, c.name, c.value, c.bound);
    }
    println!("verdict: {:?}", report.verdict);
    Ok(())
}
