//! Representational balance as the base prompt rotates from one attribute to the other.

use fairdiff::diffusion::{rep_balance_audit, ComponentShape, ConditionalMixtureModel, SoftmaxWeightMap};
use fairdiff::embedding::{EmbeddingStore, EmbeddingVector, StoreKind};

fn main() -> fairdiff::Result<()> {
    let shape = |attribute: &str, mean| ComponentShape {
        attribute: attribute.into(),
        mean: vec![mean],
        variance: vec![1.0],
    };
    let model = ConditionalMixtureModel::new(
        2,
        vec![shape("male", -6.0), shape("female", 6.0)],
        SoftmaxWeightMap::new(vec![vec![3.0, 0.0], vec![-3.0, 0.0]], vec![0.0, 0.0], 2)?,
    )?;
    for deg in [0.0, 30.0, 60.0, 90.0, 120.0] {
        let a = f64::to_radians(deg);
        let mut store = EmbeddingStore::new(StoreKind::Prompt, 2);
        store.insert("doctor", EmbeddingVector::new(vec![a.cos(), a.sin()])?)?;
        store.insert("male doctor", EmbeddingVector::new(vec![1.0, 0.0])?)?;
        store.insert("female doctor", EmbeddingVector::new(vec![-1.0, 0.0])?)?;
        let r = rep_balance_audit(&model, &store, "doctor", &["male", "female"], &[0.3], &Default::default())?;
        let tvs: Vec<String> = r.rows.iter().map(|row| format!("{}={:.3}", row.attribute, row.tv)).collect();
        println!("base at {deg:>5.1}°: TV {}; balanced at v = 0.3: {}", tvs.join(", "), r.balanced);
    }
    Ok(())
}
