use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use avr_core::embedding::{Embedder, StubEmbedder};
use avr_core::kb::{KbKind, PrototypeKb};
use avr_core::kbtool::{build_kb, coverage_warnings, embed_image_file, inspect_kb, Manifest};
use avr_gateway::embedder::RemoteEmbedder;
use clap::{Parser, Subcommand, ValueEnum};

/// Builds and inspects difficulty and safety knowledge bases.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Embedding service base URL; the deterministic stub is used when unset.
    #[arg(long, env = "AVR_EMBEDDER_URL", global = true)]
    embedder_url: Option<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Difficulty,
    Safety,
}

#[derive(Subcommand)]
enum Cmd {
    /// Embeds a labeled manifest into a knowledge base file.
    Build {
        manifest: PathBuf,
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long, short)]
        out: PathBuf,
        /// Minimum pairwise similarity spread before warning.
        #[arg(long, default_value_t = 0.2)]
        min_spread: f64,
    },
    /// Lists the entries nearest to a text or image query.
    Inspect {
        kb: PathBuf,
        #[arg(long, conflicts_with = "image")]
        text: Option<String>,
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long, short, default_value_t = 5)]
        k: usize,
    },
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let embedder: Arc<dyn Embedder> = match &args.embedder_url {
        Some(url) => Arc::new(RemoteEmbedder::new(url, Duration::from_secs(10))?),
        None => Arc::new(StubEmbedder::new()),
    };
    match args.cmd {
        Cmd::Build {
            manifest,
            kind,
            out,
            min_spread,
        } => {
            let m = Manifest::load(&manifest)?;
            let kind = match kind {
                Kind::Difficulty => KbKind::Difficulty,
                Kind::Safety => KbKind::Safety,
            };
            let kb = build_kb(&m.name, &m.examples, embedder.as_ref(), kind).await?;
            for w in coverage_warnings(&kb, min_spread) {
                eprintln!("warning: {w}");
            }
            kb.save(&out)?;
            eprintln!("wrote {} entries to {}", kb.entries.len(), out.display());
        }
        Cmd::Inspect { kb, text, image, k } => {
            let kb = PrototypeKb::load(&kb).with_context(|| format!("loading {}", kb.display()))?;
            let query = match (text, image) {
                (Some(t), None) => embedder.embed_text(&t).await?,
                (None, Some(p)) => embed_image_file(embedder.as_ref(), &p, None).await?,
                _ => bail!("pass exactly one of --text or --image"),
            };
            println!("{:>4} {:>10} {:>8} {:>9}  note", "idx", "label", "modality", "cosine");
            for r in inspect_kb(&kb, &query, k) {
                println!(
                    "{:>4} {:>10} {:>8} {:>9.4}  {}",
                    r.index,
                    format!("{:?}", r.label).to_lowercase(),
                    format!("{:?}", r.modality).to_lowercase(),
                    r.similarity,
                    r.note
                );
            }
        }
    }
    Ok(())
}
