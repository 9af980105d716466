//! Score-then-average, average-then-score and subclass-score as a generator shifts from
//! female to male doctors, on planted image clusters.

use fairdiff::audit::{score_sweep, ImageSubset, LabeledImage, ScoreScale};
use fairdiff::embedding::PromptKey;
use fairdiff::synthetic::{planted_clusters, ClusterSpec};

fn main() -> fairdiff::Result<()> {
    let spec = |attribute: &str, prompt, base| ClusterSpec {
        attribute: attribute.into(),
        prompt_cosine: prompt,
        image_base_cosine: base,
        image_own_cosine: 0.9,
        count: 20,
    };
    let planted = planted_clusters(
        "doctor",
        &[spec("male", 0.962, 0.80), spec("female", 0.947, 0.76)],
        0.9567,
        96,
        2,
    )?;
    let subsets = planted
        .members
        .iter()
        .map(|(attr, keys)| {
            let images = keys
                .iter()
                .map(|k| LabeledImage::new(k.as_str(), planted.images.get(k)?.clone(), 0.9))
                .collect::<fairdiff::Result<Vec<_>>>()?;
            ImageSubset::new(attr.as_str(), images)
        })
        .collect::<fairdiff::Result<Vec<_>>>()?;
    let composed = ["male", "female"]
        .iter()
        .map(|a| {
            let key = PromptKey::composed(*a, "doctor").render();
            Ok((a.to_string(), planted.prompts.get(&key)?))
        })
        .collect::<fairdiff::Result<Vec<_>>>()?;

    let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let sweep = score_sweep(
        planted.prompts.get("doctor")?,
        &composed,
        &subsets[0],
        &subsets[1],
        &grid,
        ScoreScale::Affine,
    )?;
    println!("p(male)  score-then-avg  avg-then-score  subclass");
    for p in sweep {
        println!(
            "{:>7.1}  {:>14.4}  {:>14.4}  {:>8.4}",
            p.proportion, p.score_then_average, p.average_then_score, p.subclass_score
        );
    }
    Ok(())
}
