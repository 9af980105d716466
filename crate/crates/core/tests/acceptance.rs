//! End-to-end acceptance run: one line per criterion, non-zero exit if any fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use fairdiff::audit::{
    average_then_score, mixture_stability_check, multiaccuracy_audit, multicalibration_audit,
    score_sweep, score_then_average, text_image_condition_check, within_level, Auditor,
    CalibrationOptions, EmbeddingAuditor, LabeledImage, ScoreScale, TableAuditor,
};
use fairdiff::cli::{load_audit_input, prompt_pairs, AuditInput};
use fairdiff::diffusion::{
    default_tweedie_prior, girsanov_bound, kl_numeric, ks_distance, mixture_score,
    reverse_sde_sample, theorem41_experiment, tv_numeric, tweedie_check, ComponentShape,
    ConditionalMixtureModel, GaussianComponent, GaussianMixture, QuadratureOptions,
    SdeRunConfig, SoftmaxWeightMap, Theorem41Config,
};
use fairdiff::embedding::{load_store, EmbeddingVector, PromptKey, StoreKind};

type Outcome = fairdiff::Result<(bool, String)>;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn audit_input(name: &str) -> AuditInput {
    load_audit_input(&fixture(name), None).expect("fixture loads")
}

fn auditor_for(input: &AuditInput) -> Box<dyn Auditor> {
    match &input.auditor_scores {
        Some(scores) => Box::new(TableAuditor {
            scores: scores.clone(),
        }),
        None => Box::new(EmbeddingAuditor {
            prompt: input.prompts.get(&input.base).unwrap().clone(),
            scale: ScoreScale::Affine,
        }),
    }
}

fn closeness_then_separation() -> Outcome {
    let model = ConditionalMixtureModel::load(fixture("closeness_model.json"))?;
    let store = load_store(fixture("closeness_prompts.store"), StoreKind::Prompt)?;
    let start = Instant::now();
    let r = theorem41_experiment(&model, &store, "doctor", 0.05, &[0.5], &Theorem41Config::default())?;
    let elapsed = start.elapsed();
    let tv = |a: &str| r.attributes.iter().find(|d| d.attribute == a).unwrap().tv_to_base;
    let (near, far) = (tv("male"), tv("female"));
    let lipschitz_ok = r.hypotheses.iter().all(|c| c.holds);
    let ok = lipschitz_ok
        && near <= 0.05 + 2e-4
        && far >= 0.90 - 2e-4
        && elapsed < Duration::from_secs(30);
    Ok((
        ok,
        format!(
            "L estimate {:.3} <= bound {:.3}, TV(base, male) {near:.3e}, TV(base, female) {far:.5}, {:.2?}",
            r.lipschitz_estimate, r.score_lipschitz_bound, elapsed
        ),
    ))
}

fn girsanov_pinsker_suite() -> Outcome {
    let model = ConditionalMixtureModel::load(fixture("divergence_model.json"))?;
    let config = SdeRunConfig {
        paths: 5000,
        steps: 400,
        ..Default::default()
    };
    let quad = QuadratureOptions::default();
    let start = Instant::now();
    let mut satisfied = 0;
    let mut inconclusive = 0;
    for (y, yp) in prompt_pairs(model.prompt_dim(), 20, 0) {
        let r = girsanov_bound(&model, &y, &yp, &config, &quad)?;
        if r.holds() {
            satisfied += 1;
        }
        if r.inconclusive {
            inconclusive += 1;
        }
    }
    let elapsed = start.elapsed();
    Ok((
        satisfied == 20 && elapsed < Duration::from_secs(300),
        format!("{satisfied}/20 pairs satisfy both bounds ({inconclusive} with wide intervals), {elapsed:.2?}"),
    ))
}

fn sampler_fidelity() -> Outcome {
    let shape = ComponentShape {
        attribute: "only".into(),
        mean: vec![2.0],
        variance: vec![0.25],
    };
    let model = ConditionalMixtureModel::new(1, vec![shape], SoftmaxWeightMap::new(vec![vec![0.0]], vec![0.0], 1)?)?;
    let target = model.mixture_at(&[0.0])?;
    let config = SdeRunConfig::default();
    let set = reverse_sde_sample(&model, &[0.0], &config)?;
    let xs: Vec<f64> = set.samples.iter().map(|s| s[0]).collect();
    let ks = ks_distance(&xs, |x| target.cdf_1d(x).unwrap());
    let (m, v) = (set.mean[0], set.variance[0]);
    Ok((
        (m - 2.0).abs() <= 0.05 && (v - 0.25).abs() <= 0.05 && ks <= 0.02 && config.paths == 5000,
        format!("mean {m:.4}, variance {v:.4}, KS {ks:.4} at {} paths", config.paths),
    ))
}

fn tweedie_oracle() -> Outcome {
    let prior = default_tweedie_prior();
    let r = tweedie_check(&prior, 0.8, 50)?;
    Ok((
        prior.components().len() == 2 && r.points.len() == 50 && r.max_deviation <= 1e-5,
        format!("max deviation {:.2e} over {} points", r.max_deviation, r.points.len()),
    ))
}

fn calibration_counterexample() -> Outcome {
    let input = audit_input("calibration_audit.json");
    let auditor = auditor_for(&input);
    let mut coll = input.collection.clone();
    coll.alpha = 0.0;
    let acc = multiaccuracy_audit(&coll, auditor.as_ref())?;
    let mut ok = acc.passes && acc.max_deviation == 0.0;
    let mut parts = vec![format!("multiaccuracy deviation {}", acc.max_deviation)];
    for lambda in [0.1, 0.2, 0.3, 0.4] {
        coll.alpha = lambda;
        let opts = CalibrationOptions {
            bin_width: lambda,
            ..Default::default()
        };
        let cal = multicalibration_audit(&coll, auditor.as_ref(), opts)?;
        let top = cal.bins.iter().filter(|b| b.upper == 1.0).map(|b| b.deviation).fold(0.0, f64::max);
        ok &= !cal.passes && (top - 0.5).abs() <= lambda / 2.0;
        parts.push(format!("λ {lambda}: top bin {top:.4}"));
    }
    Ok((ok, parts.join(", ")))
}

fn mixture_stability_sweep() -> Outcome {
    let input = audit_input("stability_audit.json");
    let auditor = auditor_for(&input);
    let acc = multiaccuracy_audit(&input.collection, auditor.as_ref())?;
    let mut ok = (acc.max_deviation - 0.05).abs() < 1e-12 && acc.passes;
    let mut expected = Vec::new();
    for p in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let m = mixture_stability_check(&input.collection, auditor.as_ref(), &[p, 1.0 - p], 0.0)?;
        ok &= within_level((m.expected_score - m.true_mean).abs(), 0.05);
        expected.push(m.expected_score);
    }
    let spread = expected.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - expected.iter().cloned().fold(f64::INFINITY, f64::min);
    ok &= within_level(spread, 0.10);
    Ok((
        ok,
        format!(
            "max deviation {:.4}, expected scores {:?}, spread {spread:.4}",
            acc.max_deviation,
            expected.iter().map(|e| (e * 1e4).round() / 1e4).collect::<Vec<_>>()
        ),
    ))
}

fn average_dominates_mean_score() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut holds = 0;
    let mut worst = f64::INFINITY;
    for i in 0..1000 {
        let dim = rng.random_range(2..=16);
        let n = rng.random_range(1..=12);
        let mut draw = || -> fairdiff::Result<EmbeddingVector> {
            let v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
            EmbeddingVector::new(v)?.normalized()
        };
        let prompt = draw()?;
        let images = (0..n)
            .map(|j| LabeledImage::new(format!("{i}_{j}"), draw()?, 0.5))
            .collect::<fairdiff::Result<Vec<_>>>()?;
        let sta = score_then_average(&prompt, &images, ScoreScale::Affine)?;
        let ats = average_then_score(&prompt, &images, ScoreScale::Affine)?.score;
        worst = worst.min(ats - sta);
        if ats >= sta - 1e-12 {
            holds += 1;
        }
    }
    Ok((holds == 1000, format!("{holds}/1000 instances, smallest margin {worst:.2e}")))
}

fn subclass_flat_mean_tilted() -> Outcome {
    let input = audit_input("sweep_audit.json");
    let base = input.prompts.get(&input.base)?;
    let composed = input
        .collection
        .subsets
        .iter()
        .map(|s| {
            let key = PromptKey::composed(s.attribute.as_str(), input.base.as_str()).render();
            Ok((s.attribute.clone(), input.prompts.get(&key)?))
        })
        .collect::<fairdiff::Result<Vec<_>>>()?;
    let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let sweep = score_sweep(
        base,
        &composed,
        &input.collection.subsets[0],
        &input.collection.subsets[1],
        &grid,
        ScoreScale::Affine,
    )?;
    let range = |f: fn(&fairdiff::audit::ScoreSweepPoint) -> f64| {
        let v: Vec<f64> = sweep.iter().map(f).collect();
        v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let sub = range(|p| p.subclass_score);
    let sta = range(|p| p.score_then_average);
    Ok((
        sub <= 0.005 && (sta - 0.02).abs() <= 0.001,
        format!("subclass range {sub:.2e}, score-then-average range {sta:.5}"),
    ))
}

fn text_image_alpha_floor() -> Outcome {
    let input = audit_input("text_image_doctor_audit.json");
    let r = text_image_condition_check(&input.collection, input.prompts.get(&input.base)?)?;
    Ok((
        (r.max_gap - 0.020).abs() <= 1e-9 && (r.alpha_lower_bound - 0.005).abs() <= 1e-9,
        format!("gap {:.12}, implied α >= {:.12}", r.max_gap, r.alpha_lower_bound),
    ))
}

fn closed_form_oracles() -> Outcome {
    let mixture = GaussianMixture::new(vec![
        GaussianComponent {
            weight: 0.35,
            mean: vec![-1.0, 0.5],
            variance: vec![0.4, 1.3],
        },
        GaussianComponent {
            weight: 0.65,
            mean: vec![2.0, -1.0],
            variance: vec![0.9, 0.3],
        },
    ])?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-5;
    let mut score_err: f64 = 0.0;
    for _ in 0..20 {
        let t = rng.random_range(0.0..3.0);
        let x = [rng.random_range(-3.0..4.0), rng.random_range(-3.0..3.0)];
        let noised = mixture.noised(t)?.mixture;
        let s = mixture_score(&mixture, &x, t)?;
        for d in 0..2 {
            let (mut up, mut down) = (x, x);
            up[d] += h;
            down[d] -= h;
            let fd = (noised.log_density(&up) - noised.log_density(&down)) / (2.0 * h);
            score_err = score_err.max((fd - s[d]).abs());
        }
    }

    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let mut tv_err: f64 = 0.0;
    let mut kl_err: f64 = 0.0;
    for (mp, mq, vp, vq) in [
        (0.0, 1.0, 1.0, 1.0),
        (-0.5, 2.5, 0.3, 0.3),
        (1.0, 1.2, 2.0, 2.0),
        (0.0, 1.0, 1.0, 2.0),
        (-1.0, 0.5, 0.5, 0.2),
    ] {
        let p = GaussianMixture::gaussian(vec![mp], vec![vp])?;
        let q = GaussianMixture::gaussian(vec![mq], vec![vq])?;
        let kl_exact = 0.5 * (vp / vq + (mq - mp) * (mq - mp) / vq - 1.0 + (vq / vp).ln());
        kl_err = kl_err.max((kl_numeric(&p, &q)? - kl_exact).abs());
        if vp == vq {
            let tv_exact = 2.0 * std_normal.cdf((mp - mq).abs() / (2.0 * vp.sqrt())) - 1.0;
            tv_err = tv_err.max((tv_numeric(&p, &q)? - tv_exact).abs());
        }
    }
    let p2 = GaussianMixture::gaussian(vec![0.0, 0.0], vec![0.5, 2.0])?;
    let q2 = GaussianMixture::gaussian(vec![0.6, -1.0], vec![0.5, 2.0])?;
    let maha = (0.36f64 / 0.5 + 1.0 / 2.0).sqrt();
    tv_err = tv_err.max((tv_numeric(&p2, &q2)? - (2.0 * std_normal.cdf(maha / 2.0) - 1.0)).abs());
    let kl2 = 0.5 * (0.36 / 0.5 + 1.0 / 2.0);
    kl_err = kl_err.max((kl_numeric(&p2, &q2)? - kl2).abs());

    Ok((
        score_err <= 1e-6 && tv_err <= 1e-4 && kl_err <= 1e-4,
        format!("score vs finite differences {score_err:.2e}, TV {tv_err:.2e}, KL {kl_err:.2e}"),
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("closeness forces one attribute", closeness_then_separation),
        ("girsanov and pinsker on 20 pairs", girsanov_pinsker_suite),
        ("reverse sampler on N(2, 0.25)", sampler_fidelity),
        ("tweedie posterior mean", tweedie_oracle),
        ("multiaccurate but not multicalibrated", calibration_counterexample),
        ("mixture stability sweep", mixture_stability_sweep),
        ("average-then-score dominates", average_dominates_mean_score),
        ("subclass score flat under proportion sweep", subclass_flat_mean_tilted),
        ("text-image gap 0.020 implies alpha 0.005", text_image_alpha_floor),
        ("closed-form oracles", closed_form_oracles),
    ];
    let mut failures = 0;
    for (name, check) in criteria {
        let (ok, detail) = match check() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failures += 1;
        }
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
    println!("{}/{} criteria pass", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
