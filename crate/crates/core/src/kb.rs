//! Prototype knowledge bases shared by the difficulty and safety classifiers.
//!
//! On disk a KB is a JSON array of
//! `{"label", "modality", "note", "embedding": [384 reals]}` records.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{EmbedError, Embedding, SourceKind};

#[derive(Debug, Error)]
pub enum KbError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed knowledge base: {0}")]
    Malformed(String),
    #[error("entry {index}: {source}")]
    BadEmbedding {
        index: usize,
        #[source]
        source: EmbedError,
    },
    #[error("label {label:?} does not belong in a {kind:?} knowledge base")]
    LabelMismatch { label: Label, kind: KbKind },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Easy,
    Hard,
    Safe,
    Dangerous,
}

impl Label {
    pub fn kind(self) -> KbKind {
        match self {
            Label::Easy | Label::Hard => KbKind::Difficulty,
            Label::Safe | Label::Dangerous => KbKind::Safety,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KbKind {
    Difficulty,
    Safety,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Visual,
    Textual,
}

impl Modality {
    pub fn source_kind(self) -> SourceKind {
        match self {
            Modality::Visual => SourceKind::Image,
            Modality::Textual => SourceKind::Text,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prototype {
    pub label: Label,
    pub modality: Modality,
    pub note: String,
    pub embedding: Embedding,
}

#[derive(Serialize, Deserialize)]
struct PrototypeRecord {
    label: Label,
    modality: Modality,
    #[serde(default)]
    note: String,
    embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeKb {
    pub name: String,
    pub entries: Vec<Prototype>,
}

impl PrototypeKb {
    pub fn new(name: impl Into<String>, entries: Vec<Prototype>) -> Self {
        PrototypeKb { name: name.into(), entries }
    }

    pub fn from_json(name: impl Into<String>, json: &str) -> Result<Self, KbError> {
        let records: Vec<PrototypeRecord> =
            serde_json::from_str(json).map_err(|e| KbError::Malformed(e.to_string()))?;
        if records.is_empty() {
            return Err(KbError::Malformed("no entries".into()));
        }
        let entries = records
            .into_iter()
            .enumerate()
            .map(|(index, r)| {
                let embedding = Embedding::new(r.embedding, r.modality.source_kind())
                    .map_err(|source| KbError::BadEmbedding { index, source })?;
                Ok(Prototype {
                    label: r.label,
                    modality: r.modality,
                    note: r.note,
                    embedding,
                })
            })
            .collect::<Result<_, KbError>>()?;
        Ok(PrototypeKb::new(name, entries))
    }

    /// Loads a KB, naming it after the file stem.
    pub fn load(path: &Path) -> Result<Self, KbError> {
        let json = fs::read_to_string(path).map_err(|source| KbError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::from_json(name, &json)
    }

    pub fn to_json(&self) -> String {
        let records: Vec<PrototypeRecord> = self
            .entries
            .iter()
            .map(|p| PrototypeRecord {
                label: p.label,
                modality: p.modality,
                note: p.note.clone(),
                embedding: p.embedding.values().to_vec(),
            })
            .collect();
        let mut out = serde_json::to_string_pretty(&records).expect("records serialize");
        out.push('\n');
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), KbError> {
        fs::write(path, self.to_json()).map_err(|source| KbError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn check_kind(&self, kind: KbKind) -> Result<(), KbError> {
        match self.entries.iter().find(|p| p.label.kind() != kind) {
            Some(p) => Err(KbError::LabelMismatch { label: p.label, kind }),
            None => Ok(()),
        }
    }

    pub fn select(&self, label: Label, modality: Option<Modality>) -> impl Iterator<Item = &Prototype> {
        self.entries
            .iter()
            .filter(move |p| p.label == label && modality.is_none_or(|m| p.modality == m))
    }
}
