//! Regenerates everything under `fixtures/`.
//!
//! All embeddings are synthetic: cosines are planted exactly with the builders in
//! `fairdiff::synthetic`, and nothing here comes from a real CLIP or word2vec export.
//!
//!     cargo run --example write_fixtures [-- <dir>]

use std::fs;
use std::path::{Path, PathBuf};

use fairdiff::diffusion::{ComponentShape, ConditionalMixtureModel, SoftmaxWeightMap};
use fairdiff::embedding::{EmbeddingStore, EmbeddingVector, PromptKey, StoreKind};
use fairdiff::synthetic::{
    evenly_spaced_scores, planted_bias_store, planted_clusters, random_unit_vectors,
    realize_gram, ClusterSpec, PlantedBiasRow, PlantedClusters,
};
use serde_json::{json, Value};

type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

const SYNTHETIC: &str = "# synthetic fixture written by `cargo run --example write_fixtures`";

fn save_store(store: &EmbeddingStore, path: &Path, note: &str) -> Result<()> {
    fs::write(path, format!("{SYNTHETIC}\n# {note}\n{}", store.to_text()))?;
    Ok(())
}

fn save_json(value: &Value, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn table3_rows() -> Vec<PlantedBiasRow> {
    [
        ("firefighter", 0.971, 0.919, 0.959),
        ("chemist", 0.962, 0.923, 0.955),
        ("chef", 0.954, 0.918, 0.950),
        ("architect", 0.957, 0.924, 0.955),
        ("biologist", 0.978, 0.949, 0.972),
        ("professor", 0.968, 0.950, 0.966),
        ("doctor", 0.962, 0.947, 0.965),
        ("teacher", 0.962, 0.947, 0.963),
        ("librarian", 0.962, 0.951, 0.969),
        ("hairdresser", 0.951, 0.958, 0.967),
        ("receptionist", 0.954, 0.962, 0.970),
        ("nurse", 0.951, 0.973, 0.974),
    ]
    .into_iter()
    .map(|(b, m, f, a)| PlantedBiasRow::new(b, m, f, a))
    .collect()
}

fn bias_fixtures(dir: &Path) -> Result<()> {
    let rows = table3_rows();
    let store = planted_bias_store(&rows, ("male", "female"), 512, 3)?;
    save_store(&store, &dir.join("clip_text.store"), "12 occupations, planted male/female cosines")?;

    // ratio points: embedding ratio from the planted store, proportions from a fixed linear
    // trend plus a deterministic wiggle
    let mut csv = String::from("profession,ratio,proportion_male\n");
    for (i, r) in rows.iter().enumerate() {
        let ratio = r.first / r.second;
        let wiggle = [0.03, -0.02, 0.01, -0.04, 0.02, 0.0][i % 6];
        let p = (0.5 + 6.0 * (ratio - 1.0) + wiggle).clamp(0.0, 1.0);
        csv.push_str(&format!("{},{ratio:.6},{p:.3}\n", r.base));
    }
    fs::write(dir.join("synthetic_ratio_points.csv"), csv)?;

    // word-level store: man, woman, nurse, person, philosopher with non-unit norms
    let gram = vec![
        vec![1.0, 0.766, 0.255, 0.534, 0.290],
        vec![0.766, 1.0, 0.441, 0.547, 0.176],
        vec![0.255, 0.441, 1.0, 0.300, 0.200],
        vec![0.534, 0.547, 0.300, 1.0, 0.350],
        vec![0.290, 0.176, 0.200, 0.350, 1.0],
    ];
    let words = ["man", "woman", "nurse", "person", "philosopher"];
    let norms = [2.31, 2.12, 1.87, 2.45, 1.66];
    let vecs = realize_gram(&gram, 300, 11)?;
    let mut w2v = EmbeddingStore::new(StoreKind::Prompt, 300);
    for ((w, v), n) in words.iter().zip(vecs).zip(norms) {
        w2v.insert(*w, EmbeddingVector::new(v.into_iter().map(|x| x * n).collect())?)?;
    }
    save_store(&w2v, &dir.join("w2v_words.store"), "word-level vectors, unnormalized")?;

    fs::write(
        dir.join("generation_proportions.csv"),
        "generation,proportion\nNurse,0.596\nPerson,0.504\nPhilosopher,0.446\n",
    )?;
    Ok(())
}

fn image_entry(id: &str, true_score: f64, auditor: Option<f64>) -> Value {
    let mut v = json!({ "id": id, "key": id, "true_score": true_score });
    if let Some(s) = auditor {
        v["auditor_score"] = json!(s);
    }
    v
}

fn cluster_audit(
    c: &PlantedClusters,
    base: &str,
    stem: &str,
    alpha: f64,
    score: impl Fn(usize, usize) -> (f64, Option<f64>),
) -> Value {
    let subsets: Vec<Value> = c
        .members
        .iter()
        .enumerate()
        .map(|(si, (attr, keys))| {
            let images: Vec<Value> = keys
                .iter()
                .enumerate()
                .map(|(i, k)| {
                    let (t, a) = score(si, i);
                    image_entry(k, t, a)
                })
                .collect();
            json!({ "attribute": attr, "images": images })
        })
        .collect();
    json!({
        "base": base,
        "prompt_store": format!("{stem}_prompts.store"),
        "image_store": format!("{stem}_images.store"),
        "alpha": alpha,
        "subsets": subsets,
    })
}

fn composed_cosine(row: &PlantedBiasRow) -> f64 {
    row.composed_cosine()
}

fn cluster(attribute: &str, prompt: f64, base: f64, own: f64, count: usize) -> ClusterSpec {
    ClusterSpec {
        attribute: attribute.into(),
        prompt_cosine: prompt,
        image_base_cosine: base,
        image_own_cosine: own,
        count,
    }
}

fn audit_fixtures(dir: &Path) -> Result<()> {
    let rows = table3_rows();
    let doctor = rows.iter().find(|r| r.base == "doctor").expect("doctor row");
    let nurse = rows.iter().find(|r| r.base == "nurse").expect("nurse row");

    // subclass sweep: male images score 0.02 above female images against "doctor",
    // while each image matches its own composed prompt equally well
    let fig = planted_clusters(
        "doctor",
        &[
            cluster("male", doctor.first, 0.80, 0.90, 24),
            cluster("female", doctor.second, 0.76, 0.90, 24),
        ],
        composed_cosine(doctor),
        128,
        5,
    )?;
    save_store(&fig.prompts, &dir.join("sweep_prompts.store"), "doctor prompts")?;
    save_store(&fig.images, &dir.join("sweep_images.store"), "doctor image clusters")?;
    save_json(
        &cluster_audit(&fig, "doctor", "sweep", 0.05, |_, _| (0.9, None)),
        &dir.join("sweep_audit.json"),
    )?;

    // auditor off by +0.05 on male images and -0.05 on female images; equal true means
    save_json(
        &cluster_audit(&fig, "doctor", "sweep", 0.05, |s, i| {
            let t = if i % 2 == 0 { 0.4 } else { 0.6 };
            (t, Some(if s == 0 { t + 0.05 } else { t - 0.05 }))
        }),
        &dir.join("stability_audit.json"),
    )?;

    // mean image cosines 0.800 / 0.780 against "doctor" and 0.772 / 0.833 against "nurse"
    for (row, m, f) in [(doctor, 0.800, 0.780), (nurse, 0.772, 0.833)] {
        let c = planted_clusters(
            &row.base,
            &[
                cluster("male", row.first, m, 0.90, 16),
                cluster("female", row.second, f, 0.90, 16),
            ],
            composed_cosine(row),
            96,
            17,
        )?;
        let stem = format!("text_image_{}", row.base);
        save_store(&c.prompts, &dir.join(format!("{stem}_prompts.store")), "prompts")?;
        save_store(&c.images, &dir.join(format!("{stem}_images.store")), "images")?;
        save_json(
            &cluster_audit(&c, &row.base, &stem, 0.05, |_, _| (0.9, None)),
            &dir.join(format!("{stem}_audit.json")),
        )?;
    }

    // evenly spaced true scores j/256 with a constant auditor at their mean
    let scores = evenly_spaced_scores(256);
    let vecs = random_unit_vectors(scores.len() + 1, 16, 23)?;
    let mut prompts = EmbeddingStore::new(StoreKind::Prompt, 16);
    prompts.insert("portrait", vecs[0].clone())?;
    let mut images = EmbeddingStore::new(StoreKind::Image, 16);
    let mut entries = Vec::new();
    for (j, (s, v)) in scores.iter().zip(&vecs[1..]).enumerate() {
        let id = format!("img_{j:03}");
        images.insert(id.as_str(), v.clone())?;
        entries.push(image_entry(&id, *s, Some(0.5)));
    }
    save_store(&prompts.with_unit(true)?, &dir.join("calibration_prompts.store"), "one prompt")?;
    save_store(&images.with_unit(true)?, &dir.join("calibration_images.store"), "random images")?;
    save_json(
        &json!({
            "base": "portrait",
            "prompt_store": "calibration_prompts.store",
            "image_store": "calibration_images.store",
            "alpha": 0.0,
            "subsets": [{ "attribute": "all", "images": entries }],
        }),
        &dir.join("calibration_audit.json"),
    )?;
    Ok(())
}

fn two_component_model(mean: f64, var: f64, slope: f64) -> Result<ConditionalMixtureModel> {
    Ok(ConditionalMixtureModel::new(
        2,
        vec![
            ComponentShape {
                attribute: "male".into(),
                mean: vec![-mean],
                variance: vec![var],
            },
            ComponentShape {
                attribute: "female".into(),
                mean: vec![mean],
                variance: vec![var],
            },
        ],
        SoftmaxWeightMap::new(vec![vec![slope, 0.0], vec![-slope, 0.0]], vec![0.0, 0.0], 2)?,
    )?)
}

fn circle_store(base_angle: f64) -> Result<EmbeddingStore> {
    let mut s = EmbeddingStore::new(StoreKind::Prompt, 2);
    let ev = |a: f64| EmbeddingVector::new(vec![a.cos(), a.sin()]);
    s.insert("doctor", ev(base_angle)?)?;
    s.insert(PromptKey::composed("male", "doctor").render(), ev(0.0)?)?;
    s.insert(PromptKey::composed("female", "doctor").render(), ev(std::f64::consts::PI)?)?;
    Ok(s.with_unit(true)?)
}

fn simulation_fixtures(dir: &Path) -> Result<()> {
    // separated components; the base sits exactly ε/(√T·L) from "male doctor"
    let m = two_component_model(4.0, 0.25, 4.0)?;
    let radius = 0.05 / (5f64.sqrt() * m.drift_lipschitz_bound()?);
    fs::write(dir.join("closeness_model.json"), m.to_json() + "\n")?;
    save_store(
        &circle_store(2.0 * (radius / 2.0).asin())?,
        &dir.join("closeness_prompts.store"),
        &format!("\"doctor\" at chord distance {radius:e} from \"male doctor\""),
    )?;

    // equal weights at the base, pure components at the composed prompts: TV = 1/2
    let m = two_component_model(50.0, 1.0, 800.0)?;
    fs::write(dir.join("balance_model.json"), m.to_json() + "\n")?;
    save_store(
        &circle_store(std::f64::consts::FRAC_PI_2)?,
        &dir.join("balance_prompts.store"),
        "base orthogonal to both composed prompts",
    )?;

    let m = ConditionalMixtureModel::new(
        2,
        vec![
            ComponentShape {
                attribute: "male".into(),
                mean: vec![-1.5],
                variance: vec![0.5],
            },
            ComponentShape {
                attribute: "female".into(),
                mean: vec![1.5],
                variance: vec![0.5],
            },
        ],
        SoftmaxWeightMap::new(vec![vec![1.0, 0.5], vec![-1.0, -0.5]], vec![0.0, 0.0], 2)?,
    )?;
    fs::write(dir.join("divergence_model.json"), m.to_json() + "\n")?;
    Ok(())
}

fn main() -> Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures"));
    fs::create_dir_all(&dir)?;
    bias_fixtures(&dir)?;
    audit_fixtures(&dir)?;
    simulation_fixtures(&dir)?;
    println!("fixtures written to {}", dir.display());
    Ok(())
}
