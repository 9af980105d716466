//! Random projection of 300-dimensional word vectors to 128 dimensions, and how much
//! pairwise cosines move.

use fairdiff::embedding::{cosine, jl_project, EmbeddingStore, StoreKind};
use fairdiff::synthetic::random_unit_vectors;

fn main() -> fairdiff::Result<()> {
    let mut store = EmbeddingStore::new(StoreKind::Prompt, 300);
    for (i, v) in random_unit_vectors(40, 300, 7)?.into_iter().enumerate() {
        store.insert(format!("w{i}"), v)?;
    }
    let store = store.with_unit(true)?;
    let projected = jl_project(&store, 128, 42, true)?;

    let keys: Vec<&str> = store.keys().collect();
    let mut worst: f64 = 0.0;
    let mut total = 0.0;
    let mut n = 0;
    for (i, a) in keys.iter().enumerate() {
        for b in &keys[i + 1..] {
            let before = cosine(store.get(a)?, store.get(b)?)?;
            let after = cosine(projected.get(a)?, projected.get(b)?)?;
            worst = worst.max((before - after).abs());
            total += (before - after).abs();
            n += 1;
        }
    }
    println!(
        "{n} pairs, 300 -> 128: mean |Δcos| {:.4}, max |Δcos| {worst:.4}",
        total / n as f64
    );
    Ok(())
}
