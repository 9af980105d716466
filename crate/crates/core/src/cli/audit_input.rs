use std::collections::HashSet;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde_json::Value;

use crate::audit::{AuditCollection, ImageSubset, LabeledImage};
use crate::embedding::{load_store, EmbeddingStore, PromptKey, StoreKind};
use crate::error::{Error, Result};

/// A parsed audit input file with its stores resolved.
#[derive(Debug, Clone)]
pub struct AuditInput {
    pub base: String,
    pub prompt_store_path: PathBuf,
    pub image_store_path: PathBuf,
    pub prompts: EmbeddingStore,
    pub images: EmbeddingStore,
    pub collection: AuditCollection,
    /// Present when every image carries an `auditor_score`.
    pub auditor_scores: Option<IndexMap<String, f64>>,
}

struct RawImage {
    id: String,
    key: String,
    true_score: f64,
    auditor_score: Option<f64>,
}

fn str_field<'a>(obj: &'a Value, field: &str, at: &str, errs: &mut Vec<String>) -> Option<&'a str> {
    match obj.get(field) {
        Some(Value::String(s)) if !s.is_empty() => Some(s),
        Some(Value::String(_)) => {
            errs.push(format!("{at}.{field}: must be a non-empty string"));
            None
        }
        Some(_) => {
            errs.push(format!("{at}.{field}: must be a string"));
            None
        }
        None => {
            errs.push(format!("{at}.{field}: missing"));
            None
        }
    }
}

fn unit_field(obj: &Value, field: &str, at: &str, required: bool, errs: &mut Vec<String>) -> Option<f64> {
    match obj.get(field) {
        Some(v) => match v.as_f64() {
            Some(x) if (0.0..=1.0).contains(&x) => Some(x),
            Some(x) => {
                errs.push(format!("{at}.{field}: {x} is outside [0, 1]"));
                None
            }
            None => {
                errs.push(format!("{at}.{field}: must be a number"));
                None
            }
        },
        None => {
            if required {
                errs.push(format!("{at}.{field}: missing"));
            }
            None
        }
    }
}

/// Reads an audit input JSON, reporting every schema problem at once.
///
/// Store paths are resolved relative to the JSON file. `alpha` overrides the file's value.
pub fn load_audit_input(path: &Path, alpha: Option<f64>) -> Result<AuditInput> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Schema(vec![format!("{}: {e}", path.display())]))?;
    let mut errs = Vec::new();
    if !root.is_object() {
        return Err(Error::Schema(vec!["top level must be an object".into()]));
    }
    let known = ["base", "prompt_store", "image_store", "alpha", "subsets"];
    for k in root.as_object().into_iter().flat_map(|o| o.keys()) {
        if !known.contains(&k.as_str()) {
            errs.push(format!("$.{k}: unknown field"));
        }
    }

    let base = str_field(&root, "base", "$", &mut errs).map(str::to_string);
    let prompt_rel = str_field(&root, "prompt_store", "$", &mut errs).map(str::to_string);
    let image_rel = str_field(&root, "image_store", "$", &mut errs).map(str::to_string);
    let file_alpha = unit_field(&root, "alpha", "$", alpha.is_none(), &mut errs);
    if let Some(a) = alpha {
        if !(0.0..=1.0).contains(&a) {
            errs.push(format!("--alpha: {a} is outside [0, 1]"));
        }
    }

    let mut subsets: Vec<(String, Vec<RawImage>)> = Vec::new();
    match root.get("subsets") {
        Some(Value::Array(items)) if !items.is_empty() => {
            let mut attrs = HashSet::new();
            let mut ids = HashSet::new();
            for (si, s) in items.iter().enumerate() {
                let at = format!("$.subsets[{si}]");
                if !s.is_object() {
                    errs.push(format!("{at}: must be an object"));
                    continue;
                }
                let attribute = str_field(s, "attribute", &at, &mut errs).map(str::to_string);
                if let Some(a) = &attribute {
                    if !attrs.insert(a.clone()) {
                        errs.push(format!("{at}.attribute: \"{a}\" repeats an earlier subset"));
                    }
                }
                let mut images = Vec::new();
                match s.get("images") {
                    Some(Value::Array(imgs)) if !imgs.is_empty() => {
                        for (ii, img) in imgs.iter().enumerate() {
                            let at = format!("{at}.images[{ii}]");
                            if !img.is_object() {
                                errs.push(format!("{at}: must be an object"));
                                continue;
                            }
                            let id = str_field(img, "id", &at, &mut errs);
                            let key = str_field(img, "key", &at, &mut errs);
                            let ts = unit_field(img, "true_score", &at, true, &mut errs);
                            let aud = match img.get("auditor_score") {
                                Some(v) if v.as_f64().is_none() => {
                                    errs.push(format!("{at}.auditor_score: must be a number"));
                                    None
                                }
                                Some(v) => v.as_f64(),
                                None => None,
                            };
                            if let Some(id) = id {
                                if !ids.insert(id.to_string()) {
                                    errs.push(format!("{at}.id: \"{id}\" is not unique"));
                                }
                            }
                            if let (Some(id), Some(key), Some(ts)) = (id, key, ts) {
                                images.push(RawImage {
                                    id: id.to_string(),
                                    key: key.to_string(),
                                    true_score: ts,
                                    auditor_score: aud,
                                });
                            }
                        }
                    }
                    Some(Value::Array(_)) => errs.push(format!("{at}.images: must not be empty")),
                    Some(_) => errs.push(format!("{at}.images: must be an array")),
                    None => errs.push(format!("{at}.images: missing")),
                }
                if let Some(a) = attribute {
                    subsets.push((a, images));
                }
            }
        }
        Some(Value::Array(_)) => errs.push("$.subsets: must not be empty".into()),
        Some(_) => errs.push("$.subsets: must be an array".into()),
        None => errs.push("$.subsets: missing".into()),
    }

    let with_aud = subsets
        .iter()
        .flat_map(|s| &s.1)
        .filter(|i| i.auditor_score.is_some())
        .count();
    let total = subsets.iter().map(|s| s.1.len()).sum::<usize>();
    if with_aud != 0 && with_aud != total {
        errs.push(format!(
            "auditor_score is given for {with_aud} of {total} images; give it for all or none"
        ));
    }

    let dir = path.parent().unwrap_or(Path::new("."));
    let load = |rel: &Option<String>, kind: StoreKind, field: &str, errs: &mut Vec<String>| {
        let rel = rel.as_ref()?;
        let p = dir.join(rel);
        match load_store(&p, kind) {
            Ok(s) => Some((p, s)),
            Err(e) => {
                errs.push(format!("$.{field}: {e}"));
                None
            }
        }
    };
    let prompts = load(&prompt_rel, StoreKind::Prompt, "prompt_store", &mut errs);
    let images = load(&image_rel, StoreKind::Image, "image_store", &mut errs);

    if let (Some((_, ps)), Some((_, is))) = (&prompts, &images) {
        if ps.dimension() != is.dimension() {
            errs.push(format!(
                "prompt store has dimension {} but image store has {}",
                ps.dimension(),
                is.dimension()
            ));
        }
    }
    if let (Some(b), Some((_, ps))) = (&base, &prompts) {
        if !ps.contains(b) {
            errs.push(format!("$.base: \"{b}\" is not a key of the prompt store"));
        }
    }
    if let Some((_, is)) = &images {
        for (si, (_, imgs)) in subsets.iter().enumerate() {
            for img in imgs {
                if !is.contains(&img.key) {
                    errs.push(format!(
                        "$.subsets[{si}]: image \"{}\" references missing key \"{}\"",
                        img.id, img.key
                    ));
                }
            }
        }
    }

    if !errs.is_empty() {
        return Err(Error::Schema(errs));
    }
    let (Some(base), Some((prompt_store_path, prompts)), Some((image_store_path, images))) =
        (base, prompts, images)
    else {
        unreachable!("schema errors would have been reported");
    };

    let mut auditor_scores = (with_aud > 0).then(IndexMap::new);
    let mut built = Vec::with_capacity(subsets.len());
    for (attribute, raw) in subsets {
        let mut labeled = Vec::with_capacity(raw.len());
        for r in raw {
            if let (Some(map), Some(s)) = (auditor_scores.as_mut(), r.auditor_score) {
                map.insert(r.id.clone(), s);
            }
            labeled.push(LabeledImage::new(r.id, images.get(&r.key)?.clone(), r.true_score)?);
        }
        built.push(ImageSubset::new(attribute, labeled)?);
    }
    let alpha = alpha.or(file_alpha).expect("alpha validated");
    let collection = AuditCollection::new(PromptKey::base(base.clone()), built, alpha)?;
    Ok(AuditInput {
        base,
        prompt_store_path,
        image_store_path,
        prompts,
        images,
        collection,
        auditor_scores,
    })
}
