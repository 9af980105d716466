//! An auditor that always answers the average is perfectly multiaccurate on evenly spaced
//! true scores, yet badly miscalibrated in the extreme bins.

use fairdiff::audit::{
    multiaccuracy_audit, multicalibration_audit, AuditCollection, CalibrationOptions,
    ImageSubset, LabeledImage,
};
use fairdiff::embedding::PromptKey;
use fairdiff::synthetic::{evenly_spaced_scores, random_unit_vectors};

fn main() -> fairdiff::Result<()> {
    let scores = evenly_spaced_scores(256);
    let vecs = random_unit_vectors(scores.len(), 8, 0)?;
    let images = scores
        .iter()
        .zip(vecs)
        .enumerate()
        .map(|(j, (s, v))| LabeledImage::new(format!("img{j}"), v, *s))
        .collect::<fairdiff::Result<Vec<_>>>()?;
    let base = PromptKey::base("portrait");
    let subsets = vec![ImageSubset::new("all", images)?];
    let constant = |_: &str, _: &LabeledImage| 0.5;

    let acc = multiaccuracy_audit(&AuditCollection::new(base.clone(), subsets.clone(), 0.0)?, &constant)?;
    println!("multiaccuracy at alpha 0: deviation {}, passes {}", acc.max_deviation, acc.passes);

    for lambda in [0.1, 0.2, 0.3, 0.4] {
        let coll = AuditCollection::new(base.clone(), subsets.clone(), lambda)?;
        let opts = CalibrationOptions {
            bin_width: lambda,
            min_bin_count: 5,
        };
        let cal = multicalibration_audit(&coll, &constant, opts)?;
        let top = cal.bins.last().expect("at least one bin");
        println!(
            "lambda {lambda}: top bin [{:.1}, {:.1}] deviation {:.6}, passes {}",
            top.lower, top.upper, top.deviation, cal.passes
        );
    }
    Ok(())
}
