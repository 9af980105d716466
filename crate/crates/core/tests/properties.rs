use proptest::prelude::*;

use fairdiff::audit::{
    align_score, average_then_score, mixture_stability_check, multiaccuracy_audit,
    multicalibration_audit, score_then_average, subclass_score, within_level, AuditCollection,
    CalibrationOptions, ImageSubset, LabeledImage, ScoreScale, TrueScoreAuditor,
};
use fairdiff::bias::{bias_ratio, epsilon_closeness, ols_fit, text_text_bias_table, SortOrder};
use fairdiff::diffusion::{
    kl_numeric, mixture_score, reverse_sde_sample_mixture, score_lipschitz_estimate, tv_numeric,
    ComponentShape, ConditionalMixtureModel, GaussianComponent, GaussianMixture,
    LipschitzProbeConfig, SdeRunConfig, SoftmaxWeightMap,
};
use fairdiff::embedding::{
    cosine, embedding_distance, jl_project, EmbeddingStore, EmbeddingVector, PromptKey, StoreKind,
};

fn vec_strategy(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, dim).prop_filter("non-zero", |v| {
        v.iter().map(|x| x * x).sum::<f64>() > 1e-6
    })
}

fn unit_vec(dim: usize) -> impl Strategy<Value = EmbeddingVector> {
    vec_strategy(dim).prop_map(|v| EmbeddingVector::new(v).unwrap().normalized().unwrap())
}

fn positive_unit(dim: usize) -> impl Strategy<Value = EmbeddingVector> {
    prop::collection::vec(0.01..1.0f64, dim)
        .prop_map(|v| EmbeddingVector::new(v).unwrap().normalized().unwrap())
}

/// Store with keys `b{i}`, `x b{i}` and `y b{i}` for each base.
fn attribute_store(vectors: &[Vec<f64>]) -> EmbeddingStore {
    let dim = vectors[0].len();
    let mut s = EmbeddingStore::new(StoreKind::Prompt, dim);
    for (i, chunk) in vectors.chunks(3).enumerate() {
        let base = format!("b{i}");
        s.insert(base.as_str(), EmbeddingVector::new(chunk[0].clone()).unwrap()).unwrap();
        s.insert(PromptKey::composed("x", base.as_str()).render(), EmbeddingVector::new(chunk[1].clone()).unwrap()).unwrap();
        s.insert(PromptKey::composed("y", base.as_str()).render(), EmbeddingVector::new(chunk[2].clone()).unwrap()).unwrap();
    }
    s
}

fn mixture_1d() -> impl Strategy<Value = GaussianMixture> {
    prop::collection::vec((0.1..1.0f64, -3.0..3.0f64, 0.2..2.0f64), 1..=3).prop_map(|parts| {
        let total: f64 = parts.iter().map(|p| p.0).sum();
        GaussianMixture::new(
            parts
                .into_iter()
                .map(|(w, m, v)| GaussianComponent {
                    weight: w / total,
                    mean: vec![m],
                    variance: vec![v],
                })
                .collect(),
        )
        .unwrap()
    })
}

fn two_attribute_model(slope: f64, sep: f64) -> ConditionalMixtureModel {
    let shape = |a: &str, m: f64| ComponentShape {
        attribute: a.into(),
        mean: vec![m],
        variance: vec![0.5],
    };
    ConditionalMixtureModel::new(
        2,
        vec![shape("a", -sep), shape("b", sep)],
        SoftmaxWeightMap::new(vec![vec![slope, 0.0], vec![-slope, 0.0]], vec![0.0, 0.0], 2).unwrap(),
    )
    .unwrap()
}

fn labeled(scores: &[(f64, f64)], prefix: &str) -> Vec<LabeledImage> {
    scores
        .iter()
        .enumerate()
        .map(|(i, (t, _))| {
            LabeledImage::new(
                format!("{prefix}{i}"),
                EmbeddingVector::new(vec![1.0, i as f64]).unwrap(),
                *t,
            )
            .unwrap()
        })
        .collect()
}

proptest! {
    #[test]
    fn cosine_is_symmetric_and_bounded(u in vec_strategy(6), v in vec_strategy(6)) {
        let (u, v) = (EmbeddingVector::new(u).unwrap(), EmbeddingVector::new(v).unwrap());
        let a = cosine(&u, &v).unwrap();
        prop_assert_eq!(a, cosine(&v, &u).unwrap());
        prop_assert!(a.abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn unit_distance_and_cosine_agree(u in unit_vec(5), v in unit_vec(5)) {
        let d = embedding_distance(&u, &v).unwrap();
        let c = cosine(&u, &v).unwrap();
        prop_assert!((d * d + 2.0 * c - 2.0).abs() <= 1e-9);
    }

    #[test]
    fn store_text_round_trip(vectors in prop::collection::vec(vec_strategy(4), 1..6)) {
        let mut s = EmbeddingStore::new(StoreKind::Image, 4);
        for (i, v) in vectors.iter().enumerate() {
            s.insert(format!("img {i}"), EmbeddingVector::new(v.clone()).unwrap()).unwrap();
        }
        let back = EmbeddingStore::from_text(&s.to_text()).unwrap();
        prop_assert_eq!(back.len(), s.len());
        for (k, v) in s.iter() {
            let w = back.get(k).unwrap();
            for (a, b) in v.values().iter().zip(w.values()) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn projection_is_deterministic(vectors in prop::collection::vec(vec_strategy(12), 1..5), seed in any::<u64>()) {
        let mut s = EmbeddingStore::new(StoreKind::Prompt, 12);
        for (i, v) in vectors.iter().enumerate() {
            s.insert(format!("k{i}"), EmbeddingVector::new(v.clone()).unwrap()).unwrap();
        }
        let a = jl_project(&s, 5, seed, false).unwrap();
        let b = jl_project(&s, 5, seed, false).unwrap();
        for ((_, x), (_, y)) in a.iter().zip(b.iter()) {
            let bits = |v: &EmbeddingVector| v.values().iter().map(|f| f.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(x), bits(y));
        }
    }

    #[test]
    fn composed_keys_render_injectively(a in "[a-z]{1,6}", b in "[a-z]{1,6}", c in "[a-z]{1,6}", d in "[a-z]{1,6}") {
        let x = PromptKey::composed(a.as_str(), b.as_str()).render();
        let y = PromptKey::composed(c.as_str(), d.as_str()).render();
        prop_assert_eq!(x == y, a == c && b == d);
    }

    #[test]
    fn ratio_reciprocal(vectors in prop::collection::vec(positive_unit(4), 3)) {
        let s = attribute_store(&vectors.iter().map(|v| v.values().to_vec()).collect::<Vec<_>>());
        let r = bias_ratio(&s, "b0", ("x", "y")).unwrap() * bias_ratio(&s, "b0", ("y", "x")).unwrap();
        prop_assert!((r - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn bias_table_order_and_swap(vectors in prop::collection::vec(vec_strategy(4), 12), shift in 0usize..4) {
        let s = attribute_store(&vectors);
        let bases: Vec<String> = (0..4).map(|i| format!("b{i}")).collect();
        let mut rotated = bases.clone();
        rotated.rotate_left(shift);
        let t1 = text_text_bias_table(&s, &bases, ("x", "y"), SortOrder::Descending).unwrap();
        let t2 = text_text_bias_table(&s, &rotated, ("x", "y"), SortOrder::Descending).unwrap();
        prop_assert_eq!(&t1, &t2);
        let swapped = text_text_bias_table(&s, &bases, ("y", "x"), SortOrder::Ascending).unwrap();
        for (a, b) in t1.iter().zip(&swapped) {
            prop_assert_eq!(&a.base, &b.base);
            prop_assert_eq!(a.delta, -b.delta);
            prop_assert_eq!(a.delta, a.per_attribute_cosine["x"] - a.per_attribute_cosine["y"]);
        }
    }

    #[test]
    fn closeness_matches_definition(vectors in prop::collection::vec(vec_strategy(3), 3), eps in 0.0..20.0f64) {
        let s = attribute_store(&vectors);
        let c = epsilon_closeness(&s, "b0", "x", eps).unwrap();
        prop_assert_eq!(c.is_close, c.distance <= eps);
    }

    #[test]
    fn r_squared_is_squared_correlation(points in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 3..30)) {
        let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        let mx = xs.iter().sum::<f64>() / xs.len() as f64;
        prop_assume!(xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>() > 1e-6);
        let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
        let my = ys.iter().sum::<f64>() / ys.len() as f64;
        let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
        prop_assume!(syy > 1e-6);
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let fit = ols_fit(&points).unwrap();
        prop_assert!((fit.r_squared - sxy * sxy / (sxx * syy)).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&fit.r_squared));
    }

    #[test]
    fn averaging_embeddings_never_lowers_score(prompt in positive_unit(8), images in prop::collection::vec(positive_unit(8), 1..20)) {
        let images: Vec<LabeledImage> = images
            .into_iter()
            .enumerate()
            .map(|(i, e)| LabeledImage::new(format!("i{i}"), e, 0.5).unwrap())
            .collect();
        let sta = score_then_average(&prompt, &images, ScoreScale::Affine).unwrap();
        let ats = average_then_score(&prompt, &images, ScoreScale::Affine).unwrap().score;
        prop_assert!(ats >= sta - 1e-12);
    }

    #[test]
    fn subclass_dominates_each_composed_prompt(p1 in unit_vec(6), p2 in unit_vec(6), images in prop::collection::vec(unit_vec(6), 1..10)) {
        let images: Vec<LabeledImage> = images
            .into_iter()
            .enumerate()
            .map(|(i, e)| LabeledImage::new(format!("i{i}"), e, 0.5).unwrap())
            .collect();
        let composed = vec![("x".to_string(), &p1), ("y".to_string(), &p2)];
        let sub = subclass_score(&composed, &images, ScoreScale::Affine).unwrap();
        for (img, s) in images.iter().zip(&sub.per_image) {
            prop_assert!(s.score >= align_score(&p1, &img.embedding).unwrap());
            prop_assert!(s.score >= align_score(&p2, &img.embedding).unwrap());
        }
    }

    #[test]
    fn audits_of_truth_and_of_noise(scores in prop::collection::vec((0.0..=1.0f64, -0.2..0.2f64), 1..40), alpha in 0.0..=1.0f64, lambda in 0.05..=1.0f64) {
        let images = labeled(&scores, "i");
        let coll = AuditCollection::new(PromptKey::base("b"), vec![ImageSubset::new("x", images).unwrap()], alpha).unwrap();
        let truth = multiaccuracy_audit(&coll, &TrueScoreAuditor).unwrap();
        prop_assert_eq!(truth.max_deviation, 0.0);
        prop_assert!(truth.passes);

        let noise: std::collections::HashMap<String, f64> = coll.subsets[0]
            .images
            .iter()
            .zip(&scores)
            .map(|(img, (t, d))| (img.id.clone(), t + d))
            .collect();
        let noisy = |_: &str, img: &LabeledImage| noise[&img.id];
        let acc = multiaccuracy_audit(&coll, &noisy).unwrap();
        prop_assert_eq!(acc.passes, within_level(acc.max_deviation, alpha));
        let max = acc.per_subset_deviation.values().cloned().fold(0.0, f64::max);
        prop_assert_eq!(acc.max_deviation, max);

        let opts = CalibrationOptions { bin_width: lambda, min_bin_count: 1 };
        let cal = multicalibration_audit(&coll, &noisy, opts).unwrap();
        prop_assert!(acc.max_deviation <= cal.max_deviation + lambda / 2.0);
        prop_assert_eq!(cal.passes, within_level(cal.max_deviation, alpha));
        let again = multicalibration_audit(&coll, &noisy, opts).unwrap();
        prop_assert_eq!(cal, again);
    }

    #[test]
    fn mixture_stability_ignores_subset_order(n in 1usize..8, shifts in prop::collection::vec(-0.1..0.1f64, 3), raw in prop::collection::vec(0.01..1.0f64, 3)) {
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let subsets: Vec<ImageSubset> = ["x", "y", "z"]
            .iter()
            .map(|a| ImageSubset::new(*a, labeled(&vec![(0.5, 0.0); n], a)).unwrap())
            .collect();
        let shift = |a: &str, _: &LabeledImage| 0.5 + match a { "x" => shifts[0], "y" => shifts[1], _ => shifts[2] };
        let forward = AuditCollection::new(PromptKey::base("b"), subsets.clone(), 0.1).unwrap();
        let mut rev_subsets = subsets;
        rev_subsets.reverse();
        let reversed = AuditCollection::new(PromptKey::base("b"), rev_subsets, 0.1).unwrap();
        let total_w: f64 = weights[..2].iter().sum();
        let w = [weights[0], weights[1], 1.0 - total_w];
        let a = mixture_stability_check(&forward, &shift, &w, 0.0);
        let b = mixture_stability_check(&reversed, &shift, &[w[2], w[1], w[0]], 0.0);
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a.expected_score.to_bits(), b.expected_score.to_bits()),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "one order errored and the other did not"),
        }
    }

    #[test]
    fn weight_map_lands_on_simplex(matrix in prop::collection::vec(prop::collection::vec(-50.0..50.0f64, 2), 2..5), y in prop::collection::vec(-1e3..1e3f64, 2)) {
        let k = matrix.len();
        let map = SoftmaxWeightMap::new(matrix, vec![0.0; k], 2).unwrap();
        let w = map.weights(&y);
        prop_assert!(w.iter().all(|v| v.is_finite() && *v >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn score_matches_finite_differences(m in mixture_1d(), x in -4.0..4.0f64, t in 0.0..3.0f64) {
        let h = 1e-5;
        let q = m.noised(t).unwrap().mixture;
        let fd = (q.log_density(&[x + h]) - q.log_density(&[x - h])) / (2.0 * h);
        let s = mixture_score(&m, &[x], t).unwrap()[0];
        prop_assert!((fd - s).abs() <= 1e-6, "fd {} score {}", fd, s);
    }

    #[test]
    fn noising_at_zero_is_identity(m in mixture_1d()) {
        prop_assert_eq!(&m.noised(0.0).unwrap().mixture, &m);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pinsker_holds_on_quadrature(p in mixture_1d(), q in mixture_1d()) {
        let tv = tv_numeric(&p, &q).unwrap();
        let kl = kl_numeric(&p, &q).unwrap();
        prop_assert!((0.0..=1.0 + 2e-4).contains(&tv));
        prop_assert!(kl >= -2e-4);
        prop_assert!(tv <= (kl.max(0.0) / 2.0).sqrt() + 2e-4);
    }

    #[test]
    fn forward_process_approaches_standard_normal(m in mixture_1d()) {
        let normal = GaussianMixture::standard_normal(1).unwrap();
        let tvs: Vec<f64> = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0]
            .iter()
            .map(|t| tv_numeric(&m.noised(*t).unwrap().mixture, &normal).unwrap())
            .collect();
        for w in tvs.windows(2) {
            prop_assert!(w[1] <= w[0] + 2e-4, "{:?}", tvs);
        }
    }

    #[test]
    fn reverse_triangle_on_triples(a in mixture_1d(), b in mixture_1d(), c in mixture_1d()) {
        let ab = tv_numeric(&a, &b).unwrap();
        let ac = tv_numeric(&a, &c).unwrap();
        let bc = tv_numeric(&b, &c).unwrap();
        prop_assert!(ac >= bc - ab - 2e-4);
    }

    #[test]
    fn sampler_is_deterministic(m in mixture_1d(), seed in any::<u64>()) {
        let cfg = SdeRunConfig { paths: 40, steps: 30, seed, ..Default::default() };
        let a = reverse_sde_sample_mixture(&m, &cfg).unwrap();
        let b = reverse_sde_sample_mixture(&m, &cfg).unwrap();
        let bits = |s: &[Vec<f64>]| s.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a.samples), bits(&b.samples));
    }

    #[test]
    fn lipschitz_estimate_is_monotone_in_probes(slope in 0.1..3.0f64, sep in 0.5..4.0f64, n in 10usize..200, seed in any::<u64>()) {
        let model = two_attribute_model(slope, sep);
        let probe = |probes| LipschitzProbeConfig { probes, seed, ..Default::default() };
        let few = score_lipschitz_estimate(&model, &probe(n)).unwrap();
        let many = score_lipschitz_estimate(&model, &probe(2 * n)).unwrap();
        prop_assert!(many.estimate >= few.estimate);
        prop_assert!(many.within_bound);
    }
}
