//! Multiaccuracy of an auditor that is slightly generous to one subset, and how stable its
//! expected score is when a generator mixes the subsets.

use fairdiff::audit::{
    mixture_stability_check, multiaccuracy_audit, AuditCollection, ImageSubset, LabeledImage,
};
use fairdiff::embedding::PromptKey;
use fairdiff::synthetic::random_unit_vectors;

fn main() -> fairdiff::Result<()> {
    let vecs = random_unit_vectors(40, 8, 3)?;
    let subset = |name: &str, offset: usize| -> fairdiff::Result<ImageSubset> {
        let images = (0..20)
            .map(|i| {
                let t = if i % 2 == 0 { 0.3 } else { 0.7 };
                LabeledImage::new(format!("{name}{i}"), vecs[offset + i].clone(), t)
            })
            .collect::<fairdiff::Result<Vec<_>>>()?;
        ImageSubset::new(name, images)
    };
    let collection = AuditCollection::new(
        PromptKey::base("doctor"),
        vec![subset("male", 0)?, subset("female", 20)?],
        0.05,
    )?;
    let auditor = |attribute: &str, img: &LabeledImage| {
        img.true_score + if attribute == "male" { 0.04 } else { -0.01 }
    };

    let report = multiaccuracy_audit(&collection, &auditor)?;
    print!("{}", report.summary_csv());
    println!("passes at alpha {}: {}", report.alpha, report.passes);

    for p in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let m = mixture_stability_check(&collection, &auditor, &[p, 1.0 - p], 0.0)?;
        println!(
            "p(male) = {p:.2}: expected score {:.4}, true mean {:.4}, within {:.4}: {}",
            m.expected_score, m.true_mean, m.bound, m.bound_holds
        );
    }
    Ok(())
}
