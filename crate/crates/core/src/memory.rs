//! Per-application interaction memory.
//!
//! Entries live in an append-only JSON-lines log, one record per line with
//! the embedding inline. The in-memory index is rebuilt from a full scan
//! when the store is opened. Nothing is ever rewritten or removed; a newer
//! entry supersedes an older one only by ranking above it at retrieval.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::call::{ActionType, Point, ToolCall};
use crate::embedding::{cosine, EmbedError, Embedding, SourceKind};
use crate::outcome::RoutingOutcome;

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_TOKEN_BUDGET: usize = 512;

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("memory id {0:?} already exists")]
    DuplicateId(String),
    #[error("memory content is empty")]
    EmptyContent,
    #[error("memory persistence failed: {0}")]
    Persistence(#[from] std::io::Error),
    #[error("memory log line {line}: {message}")]
    Corrupt { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryKind {
    ElementLocation,
    NavigationPath,
    ApplicationState,
    SuccessfulAction,
    FailedAction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryEntry {
    pub id: String,
    pub app_id: String,
    pub kind: MemoryKind,
    pub content: String,
    pub embedding: Embedding,
    pub created_at: u64,
    pub session_id: String,
}

#[derive(Serialize, Deserialize)]
struct MemoryRecord {
    id: String,
    app_id: String,
    kind: MemoryKind,
    content: String,
    embedding: Vec<f64>,
    created_at: u64,
    #[serde(default)]
    session_id: String,
}

impl From<&MemoryEntry> for MemoryRecord {
    fn from(e: &MemoryEntry) -> Self {
        MemoryRecord {
            id: e.id.clone(),
            app_id: e.app_id.clone(),
            kind: e.kind,
            content: e.content.clone(),
            embedding: e.embedding.values().to_vec(),
            created_at: e.created_at,
            session_id: e.session_id.clone(),
        }
    }
}

impl TryFrom<MemoryRecord> for MemoryEntry {
    type Error = EmbedError;
    fn try_from(r: MemoryRecord) -> Result<Self, EmbedError> {
        Ok(MemoryEntry {
            embedding: Embedding::new(r.embedding, SourceKind::Text)?,
            id: r.id,
            app_id: r.app_id,
            kind: r.kind,
            content: r.content,
            created_at: r.created_at,
            session_id: r.session_id,
        })
    }
}

#[derive(Default)]
struct Index {
    entries: Vec<MemoryEntry>,
    ids: HashSet<String>,
    by_app: HashMap<String, Vec<usize>>,
}

impl Index {
    fn insert(&mut self, entry: MemoryEntry) {
        self.ids.insert(entry.id.clone());
        self.by_app
            .entry(entry.app_id.clone())
            .or_default()
            .push(self.entries.len());
        self.entries.push(entry);
    }
}

/// Append-only memory store. Reads run concurrently; writes go through a
/// single writer and become visible once durably logged.
pub struct MemoryStore {
    index: RwLock<Index>,
    writer: Mutex<Option<File>>,
    path: Option<PathBuf>,
}

impl MemoryStore {
    /// A store with no backing file.
    pub fn in_memory() -> Self {
        MemoryStore {
            index: RwLock::new(Index::default()),
            writer: Mutex::new(None),
            path: None,
        }
    }

    /// Opens (creating if needed) the log at `path` and replays it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, MemoryError> {
        let path = path.as_ref().to_path_buf();
        let mut index = Index::default();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let corrupt = |message: String| MemoryError::Corrupt { line: n + 1, message };
                let record: MemoryRecord = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
                let entry = MemoryEntry::try_from(record).map_err(|e| corrupt(e.to_string()))?;
                if index.ids.contains(&entry.id) {
                    return Err(corrupt(format!("duplicate id {:?}", entry.id)));
                }
                index.insert(entry);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(MemoryStore {
            index: RwLock::new(index),
            writer: Mutex::new(Some(file)),
            path: Some(path),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.index.read().expect("memory index poisoned").entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.read().expect("memory index poisoned").ids.contains(id)
    }

    /// Copies of every entry in append order.
    pub fn snapshot(&self) -> Vec<MemoryEntry> {
        self.index.read().expect("memory index poisoned").entries.clone()
    }

    pub fn store(&self, entry: MemoryEntry) -> Result<(), MemoryError> {
        if entry.content.trim().is_empty() {
            return Err(MemoryError::EmptyContent);
        }
        let mut writer = self.writer.lock().expect("memory writer poisoned");
        if self.contains(&entry.id) {
            return Err(MemoryError::DuplicateId(entry.id));
        }
        if let Some(file) = writer.as_mut() {
            let mut line = serde_json::to_string(&MemoryRecord::from(&entry)).expect("record serializes");
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.sync_data()?;
        }
        self.index.write().expect("memory index poisoned").insert(entry);
        Ok(())
    }

    /// Top-`k` entries for `app_id` by cosine to `query`, ties broken by
    /// ascending id.
    pub fn retrieve(&self, app_id: &str, query: &Embedding, k: usize) -> RetrievalResult {
        let index = self.index.read().expect("memory index poisoned");
        let mut scored: Vec<(&MemoryEntry, f64)> = index
            .by_app
            .get(app_id)
            .into_iter()
            .flatten()
            .map(|&i| {
                let e = &index.entries[i];
                (e, cosine(query, &e.embedding).unwrap_or(-1.0))
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.id.cmp(&b.0.id)));
        scored.truncate(k);
        RetrievalResult {
            entries: scored.into_iter().map(|(e, s)| (e.clone(), s)).collect(),
            k,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    /// Similarity descending.
    pub entries: Vec<(MemoryEntry, f64)>,
    pub k: usize,
}

impl RetrievalResult {
    pub fn empty(k: usize) -> Self {
        RetrievalResult { entries: vec![], k }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Rough token count: four characters per token, rounded up.
pub fn approx_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

/// The probe prompt without memory: prior actions, then the request.
pub fn cold_prompt(call: &ToolCall) -> String {
    let mut out = String::new();
    if !call.history.is_empty() {
        out.push_str("Previous actions:\n");
        for (i, rec) in call.history.iter().enumerate() {
            let result = match rec.result {
                crate::call::ActionResult::Success => "succeeded",
                crate::call::ActionResult::Failure => "failed",
                crate::call::ActionResult::Unknown => "result unknown",
            };
            out.push_str(&format!("{}. {} at {} ({result})\n", i + 1, rec.description, rec.coords));
        }
        out.push('\n');
    }
    out.push_str(&format!("Action request ({}): {}", call.action_type, call.description));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedPrompt {
    /// The delimited memory section, absent when nothing was injected.
    pub memory_block: Option<String>,
    pub injected: Vec<String>,
    /// Full prompt: history, memory section, action request.
    pub text: String,
}

/// Renders the memory section for `memories` in similarity order, keeping
/// whole entries only while they fit in `budget` tokens.
pub fn memory_block(app_id: &str, memories: &RetrievalResult, budget: usize) -> (Option<String>, Vec<String>) {
    let mut used = 0;
    let mut lines = Vec::new();
    let mut ids = Vec::new();
    for (entry, _) in &memories.entries {
        let cost = approx_tokens(&entry.content);
        if used + cost > budget {
            break;
        }
        used += cost;
        lines.push(format!("- {}", entry.content));
        ids.push(entry.id.clone());
    }
    if lines.is_empty() {
        return (None, ids);
    }
    let block = format!("<memory app=\"{app_id}\">\n{}\n</memory>", lines.join("\n"));
    (Some(block), ids)
}

pub fn inject(call: &ToolCall, memories: &RetrievalResult, budget: usize) -> AugmentedPrompt {
    let cold = cold_prompt(call);
    let (block, injected) = memory_block(&call.app_id, memories, budget);
    let text = match &block {
        None => cold,
        Some(block) => {
            let request = cold.rfind("Action request (").expect("cold prompt ends with the request");
            format!("{}{block}\n\n{}", &cold[..request], &cold[request..])
        }
    };
    AugmentedPrompt {
        memory_block: block,
        injected,
        text,
    }
}

/// What the gateway keeps about a routed call for later feedback.
#[derive(Debug, Clone, PartialEq)]
pub struct CallContext {
    pub app_id: String,
    pub session_id: String,
    pub action_type: ActionType,
    pub coords: Point,
    pub description: String,
    /// Embedding of the description; also the retrieval key of any memory
    /// written from feedback.
    pub description_embedding: Embedding,
}

impl CallContext {
    pub fn from_call(call: &ToolCall, description_embedding: Embedding) -> Self {
        CallContext {
            app_id: call.app_id.clone(),
            session_id: call.session_id.clone(),
            action_type: call.action_type,
            coords: call.coords,
            description: call.description.clone(),
            description_embedding,
        }
    }
}

/// The orchestrator's report of what an executed action did.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub success: Option<bool>,
    #[serde(default)]
    pub corrected_coords: Option<Point>,
}

pub fn feedback_memory_id(call_ref: &str) -> String {
    format!("{call_ref}/feedback")
}

/// Writes a successful- or failed-action memory for a reported result.
/// Returns `Ok(None)` when the result is unknown.
pub fn record_outcome(
    store: &MemoryStore,
    outcome: &RoutingOutcome,
    call: &CallContext,
    feedback: &Feedback,
    now: u64,
) -> Result<Option<MemoryEntry>, MemoryError> {
    let Some(success) = feedback.success else {
        return Ok(None);
    };
    let verb = call.action_type.gerund();
    let (kind, content) = if success {
        (
            MemoryKind::SuccessfulAction,
            format!("{verb} {} successfully completed \"{}\" in {}.", call.coords, call.description, call.app_id),
        )
    } else {
        let mut content = format!(
            "{verb} {} hit the wrong target for \"{}\" in {}",
            call.coords, call.description, call.app_id
        );
        match feedback.corrected_coords {
            Some(fixed) => content.push_str(&format!("; the correct target was {fixed}.")),
            None => content.push('.'),
        }
        (MemoryKind::FailedAction, content)
    };
    let entry = MemoryEntry {
        id: feedback_memory_id(&outcome.call_ref),
        app_id: call.app_id.clone(),
        kind,
        content,
        embedding: call.description_embedding.clone(),
        created_at: now,
        session_id: call.session_id.clone(),
    };
    store.store(entry.clone())?;
    Ok(Some(entry))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::call::{ActionRecord, ActionResult};
    use crate::embedding::{StubEmbedder, EMBEDDING_DIM};
    use crate::money::Money;
    use crate::outcome::RouteReason;
    use image::RgbImage;
    use std::sync::Arc;

    fn entry(id: &str, app: &str, emb: Embedding, content: &str) -> MemoryEntry {
        MemoryEntry {
            id: id.into(),
            app_id: app.into(),
            kind: MemoryKind::ElementLocation,
            content: content.into(),
            embedding: emb,
            created_at: 1,
            session_id: "s".into(),
        }
    }

    fn at_cosine(c: f64, axis: usize) -> Embedding {
        let mut v = vec![0.0; EMBEDDING_DIM];
        v[0] = c;
        v[axis] = (1.0 - c * c).sqrt();
        Embedding::new(v, SourceKind::Text).unwrap()
    }

    fn call(history: Vec<ActionRecord>) -> ToolCall {
        ToolCall {
            screenshot: Arc::new(RgbImage::new(200, 200)),
            history,
            action_type: ActionType::Click,
            coords: Point::new(20, 30),
            description: "click Save".into(),
            app_id: "photoshop".into(),
            session_id: "s1".into(),
        }
    }

    fn outcome(call_ref: &str) -> RoutingOutcome {
        RoutingOutcome {
            call_ref: call_ref.into(),
            difficulty: 0.5,
            confidence: Some(0.9),
            risk: 0.0,
            threshold_used: 0.86,
            tier_chosen: 1,
            model_id: "small".into(),
            reason: RouteReason::ConfidentProbe,
            probe_charged: true,
            guardrail_verification: false,
            cost: Money::ZERO,
            response: String::new(),
        }
    }

    #[test]
    fn store_then_retrieve() {
        let store = MemoryStore::in_memory();
        let q = Embedding::basis(0, SourceKind::Text);
        assert!(store.retrieve("app", &q, 5).is_empty());
        store.store(entry("e1", "app", q.clone(), "Save is top right")).unwrap();
        assert_eq!(store.retrieve("app", &q, 5).entries[0].0.id, "e1");
        assert!(matches!(
            store.store(entry("e1", "app", q.clone(), "again")),
            Err(MemoryError::DuplicateId(_))
        ));
        assert!(matches!(store.store(entry("e2", "app", q, " ")), Err(MemoryError::EmptyContent)));
    }

    #[test]
    fn top_k_by_similarity() {
        let store = MemoryStore::in_memory();
        for (id, c, axis) in [("a", 0.9, 1), ("b", 0.2, 2), ("c", 0.5, 3)] {
            store.store(entry(id, "app", at_cosine(c, axis), id)).unwrap();
        }
        store.store(entry("other", "elsewhere", at_cosine(1.0, 4), "x")).unwrap();
        let got = store.retrieve("app", &Embedding::basis(0, SourceKind::Text), 2);
        let ids: Vec<_> = got.entries.iter().map(|(e, _)| e.id.as_str()).collect();
        assert_eq!(ids, ["a", "c"]);
        assert!((got.entries[0].1 - 0.9).abs() < 1e-12);
    }

    #[test]
    fn ties_break_by_id() {
        let store = MemoryStore::in_memory();
        let e = Embedding::basis(3, SourceKind::Text);
        store.store(entry("m-2", "app", e.clone(), "x")).unwrap();
        store.store(entry("m-1", "app", e.clone(), "y")).unwrap();
        assert_eq!(store.retrieve("app", &e, 1).entries[0].0.id, "m-1");
    }

    #[test]
    fn log_replays_on_open() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("memory.jsonl");
        let stub = StubEmbedder::new();
        {
            let store = MemoryStore::open(&path).unwrap();
            store
                .store(entry("e1", "vscode", stub.embed_text_now("open terminal").unwrap(), "Ctrl+` opens it"))
                .unwrap();
        }
        let store = MemoryStore::open(&path).unwrap();
        assert_eq!(store.len(), 1);
        assert!(matches!(
            store.store(entry("e1", "vscode", Embedding::basis(0, SourceKind::Text), "dup")),
            Err(MemoryError::DuplicateId(_))
        ));
        let q = stub.embed_text_now("open terminal").unwrap();
        assert!((store.retrieve("vscode", &q, 1).entries[0].1 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn corrupt_log_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("memory.jsonl");
        std::fs::write(&path, "{not json}\n").unwrap();
        assert!(matches!(MemoryStore::open(&path), Err(MemoryError::Corrupt { line: 1, .. })));
    }

    #[test]
    fn empty_injection_is_cold_prompt() {
        let c = call(vec![ActionRecord {
            description: "open File menu".into(),
            coords: Point::new(5, 5),
            result: ActionResult::Success,
            timestamp: 1,
        }]);
        let p = inject(&c, &RetrievalResult::empty(5), 512);
        assert_eq!(p.text, cold_prompt(&c));
        assert_eq!(p.memory_block, None);
    }

    #[test]
    fn injection_keeps_order_and_history() {
        let store = MemoryStore::in_memory();
        store.store(entry("a", "photoshop", at_cosine(0.9, 1), "Save is at (1420, 35)")).unwrap();
        store.store(entry("b", "photoshop", at_cosine(0.4, 2), "Export lives under File")).unwrap();
        let c = call(vec![ActionRecord {
            description: "open File menu".into(),
            coords: Point::new(5, 5),
            result: ActionResult::Unknown,
            timestamp: 1,
        }]);
        let mem = store.retrieve("photoshop", &Embedding::basis(0, SourceKind::Text), 5);
        let p = inject(&c, &mem, 512);
        assert_eq!(p.injected, ["a", "b"]);
        let (first, second) = (p.text.find("(1420, 35)").unwrap(), p.text.find("Export").unwrap());
        let history = p.text.find("open File menu").unwrap();
        let request = p.text.find("Action request").unwrap();
        assert!(history < first && first < second && second < request);
    }

    #[test]
    fn budget_keeps_whole_entries() {
        let store = MemoryStore::in_memory();
        // 40, 40 and 80 characters: 10, 10 and 20 tokens
        store.store(entry("a", "app", at_cosine(0.9, 1), &"a".repeat(40))).unwrap();
        store.store(entry("b", "app", at_cosine(0.8, 2), &"b".repeat(40))).unwrap();
        store.store(entry("c", "app", at_cosine(0.7, 3), &"c".repeat(80))).unwrap();
        let mem = store.retrieve("app", &Embedding::basis(0, SourceKind::Text), 5);
        let tokens: Vec<_> = mem.entries.iter().map(|(e, _)| approx_tokens(&e.content)).collect();
        assert_eq!(tokens, [10, 10, 20]);
        let p = inject(&call(vec![]), &mem, 25);
        assert_eq!(p.injected.len(), 2);
        assert!(!p.text.contains('c'.to_string().repeat(80).as_str()));
    }

    #[test]
    fn feedback_writes_memories() {
        let store = MemoryStore::in_memory();
        let stub = StubEmbedder::new();
        let c = call(vec![]);
        let ctx = CallContext::from_call(&c, stub.embed_text_now(&c.description).unwrap());

        let ok = record_outcome(&store, &outcome("r1"), &ctx, &Feedback { success: Some(true), corrected_coords: None }, 7)
            .unwrap()
            .unwrap();
        assert_eq!(ok.kind, MemoryKind::SuccessfulAction);
        assert!(ok.content.contains("(20, 30)"));

        let bad = record_outcome(
            &store,
            &outcome("r2"),
            &ctx,
            &Feedback {
                success: Some(false),
                corrected_coords: Some(Point::new(25, 44)),
            },
            8,
        )
        .unwrap()
        .unwrap();
        assert_eq!(bad.kind, MemoryKind::FailedAction);
        assert!(bad.content.contains("(20, 30)") && bad.content.contains("(25, 44)"));

        assert!(record_outcome(&store, &outcome("r3"), &ctx, &Feedback::default(), 9).unwrap().is_none());
        assert_eq!(store.len(), 2);
    }
}
