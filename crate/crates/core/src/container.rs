//! One JSON file format for every model kind.
//!
//! ```json
//! {
//!   "magic": "TABOO1",
//!   "kind": "recnn",
//!   "info_type": "PPAY",
//!   "metadata": { "created_by": "taboo-core 0.1.0", "created_unix": 1700000000, "notes": {} },
//!   "payload": { ... }
//! }
//! ```
//!
//! Network payloads carry their word vectors either inline or as a path to
//! a text vector file, resolved relative to the container's directory.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{LabeledSentence, ParseTree};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::keyword::{CsanModel, InfRuleModel, KeywordMaxModel};
use crate::recnn::{Example, RecnnModel};
use crate::selective::SelectiveModel;

pub const MAGIC: &str = "TABOO1";
pub const KINDS: [&str; 5] = ["recnn", "infrule", "csan", "keyword_max", "selective"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub created_by: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_unix: Option<u64>,
    /// Free-form training settings and summaries.
    #[serde(default)]
    pub notes: BTreeMap<String, Value>,
}

impl Metadata {
    pub fn new() -> Self {
        Metadata {
            created_by: format!("taboo-core {}", env!("CARGO_PKG_VERSION")),
            created_unix: None,
            notes: BTreeMap::new(),
        }
    }

    pub fn now() -> Self {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .ok();
        Metadata {
            created_unix: secs,
            ..Metadata::new()
        }
    }

    pub fn note(mut self, key: &str, value: impl Serialize) -> Self {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.notes.insert(key.to_string(), v);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    Inline(EmbeddingTable),
    /// Text vector file; relative paths are resolved against the
    /// container's directory.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecnnPayload {
    pub network: RecnnModel,
    pub embeddings: EmbeddingSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectivePayload {
    pub model: SelectiveModel,
    pub embeddings: EmbeddingSource,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Recnn(RecnnPayload),
    InfRule(InfRuleModel),
    Csan(CsanModel),
    KeywordMax(KeywordMaxModel),
    Selective(SelectivePayload),
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Recnn(_) => "recnn",
            Payload::InfRule(_) => "infrule",
            Payload::Csan(_) => "csan",
            Payload::KeywordMax(_) => "keyword_max",
            Payload::Selective(_) => "selective",
        }
    }

    fn to_value(&self) -> Result<Value> {
        Ok(match self {
            Payload::Recnn(p) => serde_json::to_value(p)?,
            Payload::InfRule(p) => serde_json::to_value(p)?,
            Payload::Csan(p) => serde_json::to_value(p)?,
            Payload::KeywordMax(p) => serde_json::to_value(p)?,
            Payload::Selective(p) => serde_json::to_value(p)?,
        })
    }

    fn from_value(kind: &str, v: Value) -> Result<Self> {
        let bad = |e: serde_json::Error| Error::Container(format!("invalid {kind} payload: {e}"));
        Ok(match kind {
            "recnn" => Payload::Recnn(serde_json::from_value(v).map_err(bad)?),
            "infrule" => Payload::InfRule(serde_json::from_value(v).map_err(bad)?),
            "csan" => Payload::Csan(serde_json::from_value(v).map_err(bad)?),
            "keyword_max" => Payload::KeywordMax(serde_json::from_value(v).map_err(bad)?),
            "selective" => Payload::Selective(serde_json::from_value(v).map_err(bad)?),
            other => {
                return Err(Error::Container(format!(
                    "unknown model kind {other:?}; expected one of {}",
                    KINDS.join(", ")
                )))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelContainer {
    pub info_type: String,
    pub metadata: Metadata,
    pub payload: Payload,
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    magic: String,
    kind: String,
    info_type: String,
    #[serde(default)]
    metadata: Metadata,
    payload: Value,
}

impl ModelContainer {
    pub fn new(info_type: impl Into<String>, metadata: Metadata, payload: Payload) -> Self {
        ModelContainer {
            info_type: info_type.into(),
            metadata,
            payload,
        }
    }

    pub fn kind(&self) -> &'static str {
        self.payload.kind()
    }

    pub fn to_json(&self) -> Result<String> {
        let env = Envelope {
            magic: MAGIC.to_string(),
            kind: self.kind().to_string(),
            info_type: self.info_type.clone(),
            metadata: self.metadata.clone(),
            payload: self.payload.to_value()?,
        };
        Ok(serde_json::to_string(&env)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let env: Envelope = serde_json::from_str(text)
            .map_err(|e| Error::Container(format!("not a model container: {e}")))?;
        if env.magic != MAGIC {
            return Err(Error::Container(format!(
                "bad magic {:?}, expected {MAGIC:?}",
                env.magic
            )));
        }
        let payload = Payload::from_value(&env.kind, env.payload)?;
        Ok(ModelContainer {
            info_type: env.info_type,
            metadata: env.metadata,
            payload,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(self.to_json()?.as_bytes())?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// A sentence-level decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: u8,
    /// Model score for the sensitive class: `Pr(sensitive)` for networks
    /// and routed clusters, rule confidence for inference rules (0 when no
    /// rule fires), the max conditional sensitivity for Keyword-Max, and the
    /// label itself for PMI thresholding.
    pub probability: f64,
}

/// A loaded container with its word vectors resolved, ready to predict.
#[derive(Debug, Clone)]
pub struct Detector {
    pub container: ModelContainer,
    embeddings: Option<EmbeddingTable>,
}

fn resolve(source: &EmbeddingSource, base: Option<&Path>) -> Result<EmbeddingTable> {
    match source {
        EmbeddingSource::Inline(t) => Ok(t.clone()),
        EmbeddingSource::File(p) => {
            let path = match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p.clone(),
            };
            let f = File::open(&path).map_err(|e| {
                Error::Container(format!("cannot open word vectors {}: {e}", path.display()))
            })?;
            EmbeddingTable::load_text(BufReader::new(f))
        }
    }
}

impl Detector {
    /// `base` is the directory relative vector paths are resolved against.
    pub fn new(container: ModelContainer, base: Option<&Path>) -> Result<Self> {
        let embeddings = match &container.payload {
            Payload::Recnn(p) => Some(resolve(&p.embeddings, base)?),
            Payload::Selective(p) => Some(resolve(&p.embeddings, base)?),
            _ => None,
        };
        if let Some(e) = &embeddings {
            let n_e = match &container.payload {
                Payload::Recnn(p) => p.network.n_e(),
                Payload::Selective(p) => p.model.model.n_e(),
                _ => unreachable!(),
            };
            if e.dim() != n_e {
                return Err(Error::Dimension {
                    expected: n_e,
                    got: e.dim(),
                });
            }
        }
        Ok(Detector {
            container,
            embeddings,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::new(ModelContainer::load(path)?, path.parent())
    }

    pub fn kind(&self) -> &'static str {
        self.container.kind()
    }

    pub fn info_type(&self) -> &str {
        &self.container.info_type
    }

    /// Predict from a binarizable tree.
    pub fn predict_tree(&self, tree: &ParseTree) -> Result<Prediction> {
        let tokens = tree.tokens();
        match &self.container.payload {
            Payload::InfRule(m) => Ok(Prediction {
                label: m.predict(&tokens),
                probability: m.best_match(&tokens).unwrap_or(0.0),
            }),
            Payload::Csan(m) => {
                let label = m.predict(&tokens);
                Ok(Prediction {
                    label,
                    probability: f64::from(label),
                })
            }
            Payload::KeywordMax(m) => Ok(Prediction {
                label: m.predict(&tokens),
                probability: m.score(&tokens),
            }),
            Payload::Recnn(p) => {
                let ex = self.example(tree)?;
                let (label, probability) = p.network.predict(&ex)?;
                Ok(Prediction { label, probability })
            }
            Payload::Selective(p) => {
                let r = p.model.route(&self.example(tree)?)?;
                Ok(Prediction {
                    label: r.label,
                    probability: r.sensitive_probability,
                })
            }
        }
    }

    fn example(&self, tree: &ParseTree) -> Result<Example> {
        let emb = self
            .embeddings
            .as_ref()
            .expect("networks always carry vectors");
        Example::new(&tree.binarize()?, 0, emb)
    }

    pub fn predict_sentence(&self, s: &LabeledSentence) -> Result<Prediction> {
        self.predict_tree(&s.tree)
    }

    pub fn predict_all(&self, sentences: &[LabeledSentence]) -> Result<Vec<Prediction>> {
        sentences.iter().map(|s| self.predict_sentence(s)).collect()
    }
}
