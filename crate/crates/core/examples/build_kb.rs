//! Builds both bundled knowledge bases from their manifests and probes
//! them with a few queries.

use std::path::Path;

use avr_core::embedding::StubEmbedder;
use avr_core::kb::KbKind;
use avr_core::kbtool::{build_kb, coverage_warnings, inspect_kb, Manifest};

#[tokio::main(flavor = "current_thread")]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("kb");
    let stub = StubEmbedder::new();
    for (file, kind, query) in [
        ("difficulty_manifest.json", KbKind::Difficulty, "click the gear icon in the toolbar"),
        ("safety_manifest.json", KbKind::Safety, "permanently delete the selected files"),
    ] {
        let manifest = Manifest::load(&dir.join(file))?;
        let kb = build_kb(&manifest.name, &manifest.examples, &stub, kind).await?;
        println!("{}: {} prototypes", kb.name, kb.entries.len());
        for w in coverage_warnings(&kb, 0.2) {
            println!("  warning: {w}");
        }
        println!("  nearest to {query:?}:");
        for r in inspect_kb(&kb, &stub.embed_text_now(query)?, 3) {
            println!("    {:>7.4}  {:?}/{:?}  {}", r.similarity, r.label, r.modality, r.note);
        }
    }
    Ok(())
}
