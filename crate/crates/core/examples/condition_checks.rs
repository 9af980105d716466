//! Necessary conditions for a fair auditor: the image-side cosine gap sets a floor on α,
//! and the prompt-side gap is compared with 4α + 2ε.

use fairdiff::audit::{
    text_image_condition_check, text_text_condition_check, AuditCollection, ImageSubset,
    LabeledImage,
};
use fairdiff::embedding::PromptKey;
use fairdiff::synthetic::{planted_clusters, ClusterSpec};

fn main() -> fairdiff::Result<()> {
    let spec = |attribute: &str, prompt, base| ClusterSpec {
        attribute: attribute.into(),
        prompt_cosine: prompt,
        image_base_cosine: base,
        image_own_cosine: 0.9,
        count: 12,
    };
    let planted = planted_clusters(
        "nurse",
        &[spec("male", 0.951, 0.772), spec("female", 0.973, 0.833)],
        0.9515,
        64,
        4,
    )?;
    let subsets = planted
        .members
        .iter()
        .map(|(attr, keys)| {
            let images = keys
                .iter()
                .map(|k| LabeledImage::new(k.as_str(), planted.images.get(k)?.clone(), 0.8))
                .collect::<fairdiff::Result<Vec<_>>>()?;
            ImageSubset::new(attr.as_str(), images)
        })
        .collect::<fairdiff::Result<Vec<_>>>()?;
    let coll = AuditCollection::new(PromptKey::base("nurse"), subsets, 0.01)?;

    let ti = text_image_condition_check(&coll, planted.prompts.get("nurse")?)?;
    for p in &ti.pairs {
        println!(
            "{} vs {}: mean cosines {:.3} / {:.3}, gap {:.3}",
            p.first, p.second, p.first_mean_cosine, p.second_mean_cosine, p.gap
        );
    }
    println!("no multiaccurate auditor below alpha = {:.5}", ti.alpha_lower_bound);

    let tt = text_text_condition_check(&planted.prompts, "nurse", &["male", "female"], 0.0, 0.01)?;
    for p in &tt.pairs {
        println!(
            "prompt gap {:.4} against 4α + 2ε = {:.4}: violation {}",
            p.gap, tt.threshold, p.violation
        );
    }
    Ok(())
}
