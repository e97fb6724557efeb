//! Building and inspecting prototype knowledge bases from labeled examples.
//!
//! A manifest is a JSON object with an `examples` array. Textual examples
//! carry `text`; visual ones carry `image` (a path relative to the manifest)
//! and optionally `target` as `"x,y"`, defaulting to the image centre.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::call::Point;
use crate::embedding::{cosine, extract_crop, EmbedError, Embedder, Embedding};
use crate::kb::{KbError, KbKind, Label, Modality, Prototype, PrototypeKb};

#[derive(Debug, Error)]
pub enum KbToolError {
    #[error("no {label:?} examples for the {modality:?} modality")]
    MissingHardExamples { label: Label, modality: Modality },
    #[error("cannot read payload {path}: {reason}")]
    UnreadablePayload { path: String, reason: String },
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("example {index}: {source}")]
    Embed {
        index: usize,
        #[source]
        source: EmbedError,
    },
    #[error("example {index}: label {label:?} does not belong in a {kind:?} knowledge base")]
    LabelMismatch { index: usize, label: Label, kind: KbKind },
    #[error(transparent)]
    Kb(#[from] KbError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Text {
        text: String,
    },
    Image {
        image: PathBuf,
        #[serde(default)]
        target: Option<Point>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub modality: Modality,
    pub label: Label,
    #[serde(flatten)]
    pub payload: Payload,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default)]
    pub name: String,
    pub examples: Vec<LabeledExample>,
}

impl Manifest {
    pub fn from_json(json: &str) -> Result<Self, KbToolError> {
        serde_json::from_str(json).map_err(|e| KbToolError::Manifest(e.to_string()))
    }

    /// Reads a manifest and resolves image paths against its directory.
    pub fn load(path: &Path) -> Result<Self, KbToolError> {
        let json = std::fs::read_to_string(path).map_err(|e| KbToolError::UnreadablePayload {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let mut m = Self::from_json(&json)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for ex in &mut m.examples {
            if let Payload::Image { image, .. } = &mut ex.payload {
                if image.is_relative() {
                    *image = base.join(&*image);
                }
            }
        }
        if m.name.is_empty() {
            m.name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
        }
        Ok(m)
    }
}

fn hard_label(kind: KbKind) -> Label {
    match kind {
        KbKind::Difficulty => Label::Hard,
        KbKind::Safety => Label::Dangerous,
    }
}

fn check_examples(examples: &[LabeledExample], kind: KbKind) -> Result<(), KbToolError> {
    for (index, ex) in examples.iter().enumerate() {
        if ex.label.kind() != kind {
            return Err(KbToolError::LabelMismatch {
                index,
                label: ex.label,
                kind,
            });
        }
        if matches!(
            (&ex.payload, ex.modality),
            (Payload::Text { .. }, Modality::Visual) | (Payload::Image { .. }, Modality::Textual)
        ) {
            return Err(KbToolError::Manifest(format!("example {index}: payload does not match its modality")));
        }
    }
    let hard = hard_label(kind);
    let modalities = [Modality::Visual, Modality::Textual];
    let used: Vec<Modality> = modalities
        .into_iter()
        .filter(|m| examples.iter().any(|e| e.modality == *m))
        .collect();
    if used.is_empty() {
        return Err(KbToolError::MissingHardExamples {
            label: hard,
            modality: Modality::Textual,
        });
    }
    for m in used {
        if !examples.iter().any(|e| e.modality == m && e.label == hard) {
            return Err(KbToolError::MissingHardExamples { label: hard, modality: m });
        }
    }
    Ok(())
}

/// Embeds a visual payload exactly as a routed call's crop would be.
pub async fn embed_image_file<E: Embedder + ?Sized>(
    embedder: &E,
    path: &Path,
    target: Option<Point>,
) -> Result<Embedding, KbToolError> {
    let unreadable = |reason: String| KbToolError::UnreadablePayload {
        path: path.display().to_string(),
        reason,
    };
    let img = image::open(path).map_err(|e| unreadable(e.to_string()))?.to_rgb8();
    let target = target.unwrap_or(Point::new(img.width() / 2, img.height() / 2));
    let crop = extract_crop(&img, target).map_err(|e| unreadable(e.to_string()))?;
    embedder.embed_image(&crop).await.map_err(|e| unreadable(e.to_string()))
}

pub async fn build_kb<E: Embedder + ?Sized>(
    name: &str,
    examples: &[LabeledExample],
    embedder: &E,
    kind: KbKind,
) -> Result<PrototypeKb, KbToolError> {
    check_examples(examples, kind)?;
    let mut entries = Vec::with_capacity(examples.len());
    for (index, ex) in examples.iter().enumerate() {
        let embedding = match &ex.payload {
            Payload::Text { text } => embedder
                .embed_text(text)
                .await
                .map_err(|source| KbToolError::Embed { index, source })?,
            Payload::Image { image, target } => embed_image_file(embedder, image, *target).await?,
        };
        entries.push(Prototype {
            label: ex.label,
            modality: ex.modality,
            note: ex.note.clone(),
            embedding,
        });
    }
    Ok(PrototypeKb::new(name, entries))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedEntry {
    pub index: usize,
    pub label: Label,
    pub modality: Modality,
    pub note: String,
    pub similarity: f64,
}

/// The `k` entries most similar to `query`, ties broken by position.
pub fn inspect_kb(kb: &PrototypeKb, query: &Embedding, k: usize) -> Vec<RankedEntry> {
    let mut ranked: Vec<RankedEntry> = kb
        .entries
        .iter()
        .enumerate()
        .map(|(index, p)| RankedEntry {
            index,
            label: p.label,
            modality: p.modality,
            note: p.note.clone(),
            similarity: cosine(query, &p.embedding).unwrap_or(-1.0),
        })
        .collect();
    ranked.sort_by(|a, b| b.similarity.total_cmp(&a.similarity).then(a.index.cmp(&b.index)));
    ranked.truncate(k);
    ranked
}

/// Warns about modalities whose pairwise prototype similarities span less
/// than `needed`, since queries near them cannot reach every band.
pub fn coverage_warnings(kb: &PrototypeKb, needed: f64) -> Vec<String> {
    let mut out = Vec::new();
    for m in [Modality::Visual, Modality::Textual] {
        let protos: Vec<&Prototype> = kb.entries.iter().filter(|p| p.modality == m).collect();
        if protos.len() < 2 {
            continue;
        }
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (i, a) in protos.iter().enumerate() {
            for b in &protos[i + 1..] {
                let c = cosine(&a.embedding, &b.embedding).unwrap_or(0.0).clamp(0.0, 1.0);
                lo = lo.min(c);
                hi = hi.max(c);
            }
        }
        if hi - lo < needed {
            out.push(format!(
                "{m:?} prototypes span similarities {lo:.3}..{hi:.3}, narrower than {needed:.3}; some bands may be unreachable"
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::StubEmbedder;

    fn text(label: Label, t: &str) -> LabeledExample {
        LabeledExample {
            modality: Modality::Textual,
            label,
            payload: Payload::Text { text: t.into() },
            note: t.into(),
        }
    }

    #[tokio::test]
    async fn builds_textual_kb() {
        let ex = vec![
            text(Label::Hard, "tiny toolbar icon"),
            text(Label::Hard, "dense menu item"),
            text(Label::Easy, "click the large Submit button"),
            text(Label::Easy, "press OK"),
        ];
        let stub = StubEmbedder::new();
        let kb = build_kb("d", &ex, &stub, KbKind::Difficulty).await.unwrap();
        assert_eq!(kb.entries.len(), 4);
        assert!(kb.entries.iter().all(|p| p.modality == Modality::Textual));
        let again = build_kb("d", &ex, &stub, KbKind::Difficulty).await.unwrap();
        assert_eq!(kb.to_json(), again.to_json());
        let direct = stub.embed_text_now("press OK").unwrap();
        assert_eq!(kb.entries[3].embedding, direct);
    }

    #[tokio::test]
    async fn requires_hard_examples() {
        let stub = StubEmbedder::new();
        let ex = vec![text(Label::Easy, "press OK")];
        assert!(matches!(
            build_kb("d", &ex, &stub, KbKind::Difficulty).await,
            Err(KbToolError::MissingHardExamples { .. })
        ));
        let ex = vec![text(Label::Dangerous, "delete everything")];
        assert!(matches!(
            build_kb("d", &ex, &stub, KbKind::Difficulty).await,
            Err(KbToolError::LabelMismatch { .. })
        ));
    }

    #[tokio::test]
    async fn missing_image_is_unreadable() {
        let stub = StubEmbedder::new();
        let ex = vec![LabeledExample {
            modality: Modality::Visual,
            label: Label::Hard,
            payload: Payload::Image {
                image: "/nonexistent/icon.png".into(),
                target: None,
            },
            note: String::new(),
        }];
        assert!(matches!(
            build_kb("d", &ex, &stub, KbKind::Difficulty).await,
            Err(KbToolError::UnreadablePayload { .. })
        ));
    }

    #[tokio::test]
    async fn inspect_ranks_exact_match_first() {
        let stub = StubEmbedder::new();
        let ex = vec![text(Label::Hard, "tiny toolbar icon"), text(Label::Easy, "press OK")];
        let kb = build_kb("d", &ex, &stub, KbKind::Difficulty).await.unwrap();
        let q = stub.embed_text_now("press OK").unwrap();
        let r = inspect_kb(&kb, &q, 10);
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].index, 1);
        assert!((r[0].similarity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn manifest_parses_both_payloads() {
        let m = Manifest::from_json(
            r#"{"examples": [
                {"modality": "textual", "label": "hard", "text": "small icon"},
                {"modality": "visual", "label": "easy", "image": "a.png", "target": "5,6", "note": "big"}
            ]}"#,
        )
        .unwrap();
        assert_eq!(m.examples[0].payload, Payload::Text { text: "small icon".into() });
        assert_eq!(
            m.examples[1].payload,
            Payload::Image {
                image: "a.png".into(),
                target: Some(Point::new(5, 6))
            }
        );
    }
}
