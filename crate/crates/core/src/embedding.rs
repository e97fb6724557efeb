//! Crops, embeddings, and the pluggable embedder interface.
//!
//! Image crops and action descriptions land in one shared 384-dimensional
//! space. Every [`Embedding`] is unit-normalised at construction, so cosine
//! similarity is a plain dot product.

use std::sync::atomic::{AtomicUsize, Ordering};

use async_trait::async_trait;
use image::{GenericImageView, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::call::Point;

/// Dimension of the shared embedding space.
pub const EMBEDDING_DIM: usize = 384;

/// Side length of the square crop taken around an action target.
pub const CROP_SIZE: u32 = 100;

const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("screenshot {width}x{height} is smaller than the {CROP_SIZE}x{CROP_SIZE} crop")]
    ScreenshotTooSmall { width: u32, height: u32 },
    #[error("target {0} lies outside the screenshot")]
    TargetOutOfBounds(Point),
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding has zero or non-finite norm")]
    Degenerate,
    #[error("embedder unavailable: {0}")]
    Unavailable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Image,
    Text,
}

/// A unit-length vector in the shared space.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
    source_kind: SourceKind,
}

impl Embedding {
    /// Normalises `values` to unit length; vectors already unit to within
    /// rounding are kept bit-for-bit. The dimension must be exactly
    /// [`EMBEDDING_DIM`].
    pub fn new(values: Vec<f64>, source_kind: SourceKind) -> Result<Self, EmbedError> {
        if values.len() != EMBEDDING_DIM {
            return Err(EmbedError::DimensionMismatch {
                expected: EMBEDDING_DIM,
                got: values.len(),
            });
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm < NORM_EPS {
            return Err(EmbedError::Degenerate);
        }
        if (norm - 1.0).abs() <= 4.0 * f64::EPSILON {
            return Ok(Embedding { values, source_kind });
        }
        let values = values.into_iter().map(|v| v / norm).collect();
        Ok(Embedding { values, source_kind })
    }

    /// The `index`-th standard basis vector.
    pub fn basis(index: usize, source_kind: SourceKind) -> Self {
        let mut values = vec![0.0; EMBEDDING_DIM];
        values[index] = 1.0;
        Embedding { values, source_kind }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn source_kind(&self) -> SourceKind {
        self.source_kind
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn negated(&self) -> Self {
        Embedding {
            values: self.values.iter().map(|v| -v).collect(),
            source_kind: self.source_kind,
        }
    }

    /// Unit vector `a·self + b·other`, renormalised.
    pub fn blend(&self, a: f64, other: &Embedding, b: f64) -> Result<Self, EmbedError> {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Embedding::new(values, self.source_kind)
    }

    pub fn with_kind(mut self, source_kind: SourceKind) -> Self {
        self.source_kind = source_kind;
        self
    }
}

/// Cosine similarity: the dot product of two unit vectors, clamped to [-1, 1].
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64, EmbedError> {
    if a.values.len() != b.values.len() {
        return Err(EmbedError::DimensionMismatch {
            expected: a.values.len(),
            got: b.values.len(),
        });
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok(dot.clamp(-1.0, 1.0))
}

/// A `CROP_SIZE`-square patch of a screenshot plus where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Crop {
    pixels: RgbImage,
    origin: Point,
}

impl Crop {
    pub fn pixels(&self) -> &RgbImage {
        &self.pixels
    }

    pub fn origin(&self) -> Point {
        self.origin
    }
}

fn clamp_origin(target: u32, extent: u32) -> u32 {
    let half = CROP_SIZE / 2;
    target.saturating_sub(half).min(extent - CROP_SIZE)
}

/// Takes the crop centred on `coords`, sliding the window back inside the
/// image when it would cross an edge. The crop is always exactly
/// `CROP_SIZE` square.
pub fn extract_crop(screenshot: &RgbImage, coords: Point) -> Result<Crop, EmbedError> {
    let (width, height) = screenshot.dimensions();
    if width < CROP_SIZE || height < CROP_SIZE {
        return Err(EmbedError::ScreenshotTooSmall { width, height });
    }
    if coords.x >= width || coords.y >= height {
        return Err(EmbedError::TargetOutOfBounds(coords));
    }
    let origin = Point::new(clamp_origin(coords.x, width), clamp_origin(coords.y, height));
    let pixels = screenshot
        .view(origin.x, origin.y, CROP_SIZE, CROP_SIZE)
        .to_image();
    Ok(Crop { pixels, origin })
}

/// Anything that maps crops and text into the shared space.
#[async_trait]
pub trait Embedder: Send + Sync {
    async fn embed_image(&self, crop: &Crop) -> Result<Embedding, EmbedError>;
    async fn embed_text(&self, text: &str) -> Result<Embedding, EmbedError>;
}

#[async_trait]
impl<E: Embedder + ?Sized> Embedder for std::sync::Arc<E> {
    async fn embed_image(&self, crop: &Crop) -> Result<Embedding, EmbedError> {
        (**self).embed_image(crop).await
    }
    async fn embed_text(&self, text: &str) -> Result<Embedding, EmbedError> {
        (**self).embed_text(text).await
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const DIM_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
const IMAGE_DOMAIN: u64 = 0x5851_f42d_4c95_7f2d;
const TEXT_DOMAIN: u64 = 0x1405_7b7e_f767_814f;

fn chunk_hash(domain: u64, bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET ^ domain, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

fn mix(mut x: u64) -> u64 {
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn accumulate(raw: &mut [f64], chunk: u64) {
    for (j, slot) in raw.iter_mut().enumerate() {
        let h = mix(chunk ^ DIM_SALT.wrapping_mul(j as u64 + 1));
        // top 53 bits as a uniform value in [-1, 1)
        *slot += (h >> 11) as f64 / (1u64 << 52) as f64 - 1.0;
    }
}

/// Deterministic, dependency-free stand-in for a real multimodal model.
///
/// Inputs are split into chunks (pixel rows for crops, lowercase
/// alphanumeric words for text). Each chunk is hashed once and then mixed
/// with a per-dimension salt to give a signed contribution in every
/// dimension; the summed vector is normalised. Inputs that share chunks have
/// positive cosine, unrelated inputs are nearly orthogonal.
#[derive(Debug, Default)]
pub struct StubEmbedder {
    image_calls: AtomicUsize,
    text_calls: AtomicUsize,
}

impl StubEmbedder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn image_calls(&self) -> usize {
        self.image_calls.load(Ordering::Relaxed)
    }

    pub fn text_calls(&self) -> usize {
        self.text_calls.load(Ordering::Relaxed)
    }

    pub fn embed_image_now(&self, crop: &Crop) -> Embedding {
        self.image_calls.fetch_add(1, Ordering::Relaxed);
        self.embed_raster(crop.pixels())
    }

    /// Embeds a whole raster row by row. Used for crops and for prototype
    /// images that are already crop-sized.
    pub fn embed_raster(&self, raster: &RgbImage) -> Embedding {
        let mut raw = vec![0.0; EMBEDDING_DIM];
        let row_len = raster.width() as usize * 3;
        for row in raster.as_raw().chunks(row_len.max(1)) {
            accumulate(&mut raw, chunk_hash(IMAGE_DOMAIN, row));
        }
        Embedding::new(raw, SourceKind::Image).expect("rows always contribute")
    }

    pub fn embed_text_now(&self, text: &str) -> Result<Embedding, EmbedError> {
        let words: Vec<String> = text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase)
            .collect();
        if words.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        self.text_calls.fetch_add(1, Ordering::Relaxed);
        let mut raw = vec![0.0; EMBEDDING_DIM];
        for w in &words {
            accumulate(&mut raw, chunk_hash(TEXT_DOMAIN, w.as_bytes()));
        }
        Embedding::new(raw, SourceKind::Text)
    }
}

#[async_trait]
impl Embedder for StubEmbedder {
    async fn embed_image(&self, crop: &Crop) -> Result<Embedding, EmbedError> {
        Ok(self.embed_image_now(crop))
    }

    async fn embed_text(&self, text: &str) -> Result<Embedding, EmbedError> {
        self.embed_text_now(text)
    }
}
