use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::vector::EmbeddingVector;
use crate::error::{Error, Result};

const MAGIC: &str = "fairdiff-store";
const VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StoreKind {
    Prompt,
    Image,
}

impl fmt::Display for StoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StoreKind::Prompt => "prompt",
            StoreKind::Image => "image",
        })
    }
}

impl FromStr for StoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prompt" => Ok(StoreKind::Prompt),
            "image" => Ok(StoreKind::Image),
            other => Err(Error::invalid(format!("unknown store kind `{other}`"))),
        }
    }
}

/// A base prompt with an optional protected attribute, e.g. `female` + `doctor`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptKey {
    pub base: String,
    pub attribute: Option<String>,
}

impl PromptKey {
    pub fn base(base: impl Into<String>) -> Self {
        Self {
            base: base.into(),
            attribute: None,
        }
    }

    pub fn composed(attribute: impl Into<String>, base: impl Into<String>) -> Self {
        Self {
            base: base.into(),
            attribute: Some(attribute.into()),
        }
    }

    /// Store key: `"<attribute> <base>"`, or the bare base.
    pub fn render(&self) -> String {
        match &self.attribute {
            Some(a) => format!("{a} {}", self.base),
            None => self.base.clone(),
        }
    }
}

impl fmt::Display for PromptKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Named embeddings sharing one dimension.
///
/// Insertion order is kept so a saved store lists rows in the order they were added.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    entries: IndexMap<String, EmbeddingVector>,
    dimension: usize,
    kind: StoreKind,
    unit: bool,
    normalize: bool,
}

impl EmbeddingStore {
    pub fn new(kind: StoreKind, dimension: usize) -> Self {
        Self {
            entries: IndexMap::new(),
            dimension,
            kind,
            unit: false,
            normalize: false,
        }
    }

    /// Declares every entry unit-norm; fails if any entry is not.
    pub fn with_unit(mut self, unit: bool) -> Result<Self> {
        if unit {
            self.check_unit()?;
        }
        self.unit = unit;
        Ok(self)
    }

    pub fn with_normalize_flag(mut self, normalize: bool) -> Self {
        self.normalize = normalize;
        self
    }

    fn check_unit(&self) -> Result<()> {
        for (k, v) in &self.entries {
            if !v.is_unit() {
                return Err(Error::invalid(format!(
                    "entry \"{k}\" has norm {} but the store declares unit=true",
                    v.norm()
                )));
            }
        }
        Ok(())
    }

    pub fn insert(&mut self, key: impl Into<String>, vector: EmbeddingVector) -> Result<()> {
        let key = key.into();
        validate_key(&key)?;
        if vector.dim() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: vector.dim(),
                context: Some(format!("key \"{key}\"")),
            });
        }
        if self.unit && !vector.is_unit() {
            return Err(Error::invalid(format!(
                "entry \"{key}\" is not unit-norm in a unit store"
            )));
        }
        if self.entries.contains_key(&key) {
            return Err(Error::DuplicateKey(key));
        }
        self.entries.insert(key, vector);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<&EmbeddingVector> {
        self.entries
            .get(key)
            .ok_or_else(|| Error::MissingKeys(vec![key.to_string()]))
    }

    pub fn prompt(&self, key: &PromptKey) -> Result<&EmbeddingVector> {
        self.get(&key.render())
    }

    /// Resolves every key, reporting all missing ones together.
    pub fn get_many<S: AsRef<str>>(&self, keys: &[S]) -> Result<Vec<&EmbeddingVector>> {
        let missing: Vec<String> = keys
            .iter()
            .filter(|k| !self.entries.contains_key(k.as_ref()))
            .map(|k| k.as_ref().to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingKeys(missing));
        }
        Ok(keys.iter().map(|k| &self.entries[k.as_ref()]).collect())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &EmbeddingVector)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn kind(&self) -> StoreKind {
        self.kind
    }

    pub fn is_unit(&self) -> bool {
        self.unit
    }

    pub fn normalize_flag(&self) -> bool {
        self.normalize
    }

    pub fn header_line(&self) -> String {
        format!(
            "{MAGIC} {VERSION} count={} dim={} kind={} unit={} normalize={}",
            self.len(),
            self.dimension,
            self.kind,
            self.unit,
            self.normalize
        )
    }

    /// Serializes in the text store format. Floats carry 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.len() * (self.dimension * 24 + 16) + 96);
        out.push_str(&self.header_line());
        out.push('\n');
        for (key, v) in &self.entries {
            out.push('"');
            out.push_str(key);
            out.push('"');
            for x in v.values() {
                out.push(' ');
                out.push_str(&format!("{x:.16e}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_text().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    /// Parses the text store format.
    ///
    /// Lines starting with `#` and blank lines are skipped anywhere in the file.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));

        let (hline, header) = lines.next().ok_or(Error::Format {
            line: 1,
            message: "missing header line".into(),
        })?;
        let header = Header::parse(header).map_err(|message| Error::Format {
            line: hline,
            message,
        })?;

        let mut store = EmbeddingStore::new(header.kind, header.dim);
        store.normalize = header.normalize;
        for (lineno, line) in lines {
            let (key, rest) = split_key(line).map_err(|message| Error::Format {
                line: lineno,
                message,
            })?;
            let mut values = Vec::with_capacity(header.dim);
            for tok in rest.split_whitespace() {
                let x: f64 = tok.parse().map_err(|_| Error::Format {
                    line: lineno,
                    message: format!("cannot parse `{tok}` as a number"),
                })?;
                if !x.is_finite() {
                    return Err(Error::NonFinite {
                        context: format!("at line {lineno} (key \"{key}\")"),
                    });
                }
                values.push(x);
            }
            if values.len() != header.dim {
                return Err(Error::DimensionMismatch {
                    expected: header.dim,
                    found: values.len(),
                    context: Some(format!("line {lineno}, key \"{key}\"")),
                });
            }
            let mut v = EmbeddingVector::new(values)?;
            if header.normalize {
                if v.norm() == 0.0 {
                    return Err(Error::ZeroNorm {
                        context: format!("at line {lineno} (key \"{key}\") with normalize=true"),
                    });
                }
                v = v.normalized()?;
            }
            if store.entries.contains_key(key) {
                return Err(Error::DuplicateKey(key.to_string()));
            }
            store.entries.insert(key.to_string(), v);
        }

        if store.len() != header.count {
            return Err(Error::Format {
                line: hline,
                message: format!(
                    "header declares count={} but {} rows were read",
                    header.count,
                    store.len()
                ),
            });
        }
        if header.unit || header.normalize {
            store.check_unit()?;
            store.unit = true;
        }
        Ok(store)
    }
}

/// Loads and validates a store file, checking its declared kind.
pub fn load_store(path: impl AsRef<Path>, expected_kind: StoreKind) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let store = EmbeddingStore::from_text(&text)?;
    if store.kind != expected_kind {
        return Err(Error::invalid(format!(
            "{} is a {} store, expected {}",
            path.display(),
            store.kind,
            expected_kind
        )));
    }
    Ok(store)
}

pub fn save_store(store: &EmbeddingStore, path: impl AsRef<Path>) -> Result<()> {
    store.save(path)
}

fn validate_key(key: &str) -> Result<()> {
    if key.is_empty() || key.contains('"') || key.contains('\n') || key.contains('\r') {
        return Err(Error::invalid(format!(
            "invalid store key {key:?}: keys must be non-empty and free of quotes and newlines"
        )));
    }
    Ok(())
}

struct Header {
    count: usize,
    dim: usize,
    kind: StoreKind,
    unit: bool,
    normalize: bool,
}

impl Header {
    fn parse(line: &str) -> std::result::Result<Self, String> {
        let mut toks = line.split_whitespace();
        if toks.next() != Some(MAGIC) {
            return Err(format!("header must start with `{MAGIC}`"));
        }
        match toks.next() {
            Some(VERSION) => {}
            Some(v) => return Err(format!("unsupported store version `{v}`")),
            None => return Err("missing store version".into()),
        }
        let mut count = None;
        let mut dim = None;
        let mut kind = None;
        let mut unit = None;
        let mut normalize = None;
        for tok in toks {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| format!("malformed header field `{tok}`"))?;
            let bad = |what: &str| format!("invalid {what} `{v}`");
            match k {
                "count" => count = Some(v.parse::<usize>().map_err(|_| bad("count"))?),
                "dim" => dim = Some(v.parse::<usize>().map_err(|_| bad("dim"))?),
                "kind" => kind = Some(v.parse::<StoreKind>().map_err(|e| e.to_string())?),
                "unit" => unit = Some(v.parse::<bool>().map_err(|_| bad("unit flag"))?),
                "normalize" => {
                    normalize = Some(v.parse::<bool>().map_err(|_| bad("normalize flag"))?)
                }
                other => return Err(format!("unknown header field `{other}`")),
            }
        }
        let dim = dim.ok_or("header is missing dim=")?;
        if dim == 0 {
            return Err("dim must be at least 1".into());
        }
        Ok(Header {
            count: count.ok_or("header is missing count=")?,
            dim,
            kind: kind.ok_or("header is missing kind=")?,
            unit: unit.ok_or("header is missing unit=")?,
            normalize: normalize.ok_or("header is missing normalize=")?,
        })
    }
}

fn split_key(line: &str) -> std::result::Result<(&str, &str), String> {
    let line = line.trim_start();
    let rest = line
        .strip_prefix('"')
        .ok_or("row must start with a quoted key")?;
    let end = rest.find('"').ok_or("unterminated key quote")?;
    let key = &rest[..end];
    if key.is_empty() {
        return Err("empty key".into());
    }
    Ok((key, &rest[end + 1..]))
}
