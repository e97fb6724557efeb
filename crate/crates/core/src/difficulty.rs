//! Per-action difficulty from prototype similarity, and the
//! difficulty-adaptive confidence threshold.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine, Embedding};
use crate::kb::{KbError, KbKind, Label, Modality, PrototypeKb};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DifficultyError {
    #[error("knowledge base has no hard {0:?} prototypes")]
    EmptyHardSet(Modality),
    #[error("{name} = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("thresholds must satisfy 0 < tau_easy <= tau_hard < 1 (got {tau_easy}, {tau_hard})")]
    BadThresholds { tau_easy: f64, tau_hard: f64 },
    #[error("band cutoffs must satisfy 0 <= easy <= hard <= 1 (got {easy}, {hard})")]
    BadCutoffs { easy: f64, hard: f64 },
}

fn unit(name: &'static str, value: f64) -> Result<f64, DifficultyError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(DifficultyError::OutOfRange { name, value })
    }
}

/// A difficulty KB: easy and hard prototypes over both modalities.
///
/// Easy prototypes are kept for curation tooling; the scores only consult
/// the hard sets.
#[derive(Debug, Clone)]
pub struct DifficultyKb(PrototypeKb);

impl DifficultyKb {
    pub fn new(kb: PrototypeKb) -> Result<Self, KbError> {
        kb.check_kind(KbKind::Difficulty)?;
        Ok(DifficultyKb(kb))
    }

    pub fn inner(&self) -> &PrototypeKb {
        &self.0
    }

    fn nearest_hard(&self, query: &Embedding, modality: Modality) -> Result<f64, DifficultyError> {
        let mut best: Option<f64> = None;
        for p in self.0.select(Label::Hard, Some(modality)) {
            let c = cosine(query, &p.embedding).unwrap_or(-1.0);
            best = Some(best.map_or(c, |b: f64| b.max(c)));
        }
        best.map(|b| b.clamp(0.0, 1.0))
            .ok_or(DifficultyError::EmptyHardSet(modality))
    }
}

/// Nearest-hard-prototype similarity of the crop embedding, clamped to [0, 1].
pub fn visual_difficulty(crop_emb: &Embedding, kb: &DifficultyKb) -> Result<f64, DifficultyError> {
    kb.nearest_hard(crop_emb, Modality::Visual)
}

/// Nearest-hard-prototype similarity of the description embedding.
pub fn semantic_difficulty(desc_emb: &Embedding, kb: &DifficultyKb) -> Result<f64, DifficultyError> {
    kb.nearest_hard(desc_emb, Modality::Textual)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Easy,
    Medium,
    Hard,
}

/// Band boundaries: easy below `easy`, hard above `hard`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandCutoffs {
    pub easy: f64,
    pub hard: f64,
}

impl Default for BandCutoffs {
    fn default() -> Self {
        BandCutoffs { easy: 0.3, hard: 0.7 }
    }
}

impl BandCutoffs {
    pub fn new(easy: f64, hard: f64) -> Result<Self, DifficultyError> {
        if !(0.0..=1.0).contains(&easy) || !(0.0..=1.0).contains(&hard) || easy > hard {
            return Err(DifficultyError::BadCutoffs { easy, hard });
        }
        Ok(BandCutoffs { easy, hard })
    }

    pub fn band(&self, d: f64) -> Band {
        if d < self.easy {
            Band::Easy
        } else if d > self.hard {
            Band::Hard
        } else {
            Band::Medium
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifficultyEstimate {
    pub d_vis: f64,
    pub d_sem: f64,
    pub d: f64,
    pub band: Band,
}

/// Conservative combination: the harder of the two channels wins.
pub fn combine_difficulty(d_vis: f64, d_sem: f64) -> Result<DifficultyEstimate, DifficultyError> {
    combine_difficulty_with(d_vis, d_sem, &BandCutoffs::default())
}

pub fn combine_difficulty_with(
    d_vis: f64,
    d_sem: f64,
    cutoffs: &BandCutoffs,
) -> Result<DifficultyEstimate, DifficultyError> {
    let d_vis = unit("d_vis", d_vis)?;
    let d_sem = unit("d_sem", d_sem)?;
    let d = d_vis.max(d_sem);
    Ok(DifficultyEstimate {
        d_vis,
        d_sem,
        d,
        band: cutoffs.band(d),
    })
}

/// Scores both channels against `kb` and combines them.
pub fn estimate(
    crop_emb: &Embedding,
    desc_emb: &Embedding,
    kb: &DifficultyKb,
    cutoffs: &BandCutoffs,
) -> Result<DifficultyEstimate, DifficultyError> {
    let d_vis = visual_difficulty(crop_emb, kb)?;
    let d_sem = semantic_difficulty(desc_emb, kb)?;
    combine_difficulty_with(d_vis, d_sem, cutoffs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawThresholds")]
pub struct ThresholdConfig {
    tau_easy: f64,
    tau_hard: f64,
}

#[derive(Deserialize)]
struct RawThresholds {
    #[serde(default = "default_tau_easy")]
    tau_easy: f64,
    #[serde(default = "default_tau_hard")]
    tau_hard: f64,
}

fn default_tau_easy() -> f64 {
    0.80
}

fn default_tau_hard() -> f64 {
    0.92
}

impl TryFrom<RawThresholds> for ThresholdConfig {
    type Error = DifficultyError;
    fn try_from(raw: RawThresholds) -> Result<Self, Self::Error> {
        ThresholdConfig::new(raw.tau_easy, raw.tau_hard)
    }
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            tau_easy: default_tau_easy(),
            tau_hard: default_tau_hard(),
        }
    }
}

impl ThresholdConfig {
    pub fn new(tau_easy: f64, tau_hard: f64) -> Result<Self, DifficultyError> {
        if !(tau_easy > 0.0 && tau_easy <= tau_hard && tau_hard < 1.0) {
            return Err(DifficultyError::BadThresholds { tau_easy, tau_hard });
        }
        Ok(ThresholdConfig { tau_easy, tau_hard })
    }

    pub fn tau_easy(&self) -> f64 {
        self.tau_easy
    }

    pub fn tau_hard(&self) -> f64 {
        self.tau_hard
    }

    /// Shifts both bounds by `delta`, clamped inside (0, 1).
    pub fn shifted(&self, delta: f64) -> Result<Self, DifficultyError> {
        ThresholdConfig::new(self.tau_easy + delta, self.tau_hard + delta)
    }
}

const MICRO: f64 = 1e6;

/// Linear interpolation from `tau_easy` at d = 0 to `tau_hard` at d = 1.
/// Works in millionths, so thresholds with up to six decimals land on the
/// decimal result (0.80 and 0.92 give exactly 0.86 at d = 0.5).
pub fn adaptive_threshold(d: f64, cfg: &ThresholdConfig) -> Result<f64, DifficultyError> {
    let d = unit("d", d)?;
    if d == 0.0 {
        return Ok(cfg.tau_easy);
    }
    if d == 1.0 {
        return Ok(cfg.tau_hard);
    }
    let (lo, hi) = (cfg.tau_easy * MICRO, cfg.tau_hard * MICRO);
    let tau = (lo + (hi - lo) * d) / MICRO;
    Ok(tau.clamp(cfg.tau_easy, cfg.tau_hard))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preroute {
    ToSmallSkipProbe,
    Probe,
    ToLargeSkipProbe,
}

/// Easy band goes straight to the small model, hard band straight to the
/// large one, and everything else is probed. With pre-routing disabled
/// every call is probed.
pub fn preroute(est: &DifficultyEstimate, enabled: bool) -> Preroute {
    if !enabled {
        return Preroute::Probe;
    }
    match est.band {
        Band::Easy => Preroute::ToSmallSkipProbe,
        Band::Medium => Preroute::Probe,
        Band::Hard => Preroute::ToLargeSkipProbe,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{SourceKind, StubEmbedder};
    use crate::kb::Prototype;
    use proptest::prelude::*;

    fn proto(label: Label, modality: Modality, embedding: Embedding) -> Prototype {
        Prototype {
            label,
            modality,
            note: String::new(),
            embedding,
        }
    }

    /// Unit vector with cosine `c` against basis vector 0, built in the
    /// plane of basis vectors 0 and `axis`.
    fn at_cosine(c: f64, axis: usize, kind: SourceKind) -> Embedding {
        let mut v = vec![0.0; crate::embedding::EMBEDDING_DIM];
        v[0] = c;
        v[axis] = (1.0 - c * c).sqrt();
        Embedding::new(v, kind).unwrap()
    }

    #[test]
    fn visual_self_similarity_and_orthogonality() {
        let hard = Embedding::basis(3, SourceKind::Image);
        let kb = DifficultyKb::new(PrototypeKb::new(
            "d",
            vec![
                proto(Label::Hard, Modality::Visual, hard.clone()),
                proto(Label::Hard, Modality::Textual, Embedding::basis(9, SourceKind::Text)),
            ],
        ))
        .unwrap();
        assert!((visual_difficulty(&hard, &kb).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(visual_difficulty(&Embedding::basis(4, SourceKind::Image), &kb).unwrap(), 0.0);
        // anti-aligned clamps to zero
        assert_eq!(visual_difficulty(&hard.negated(), &kb).unwrap(), 0.0);
    }

    #[test]
    fn visual_max_over_three_prototypes() {
        let query = Embedding::basis(0, SourceKind::Image);
        let cosines = [0.2, 0.55, 0.4];
        let protos: Vec<_> = cosines
            .iter()
            .enumerate()
            .map(|(i, &c)| proto(Label::Hard, Modality::Visual, at_cosine(c, i + 1, SourceKind::Image)))
            .collect();
        // brute force over the constructed set
        let oracle = protos
            .iter()
            .map(|p| p.embedding.values().iter().zip(query.values()).map(|(a, b)| a * b).sum::<f64>())
            .fold(f64::MIN, f64::max);
        let kb = DifficultyKb::new(PrototypeKb::new("d", protos)).unwrap();
        let got = visual_difficulty(&query, &kb).unwrap();
        assert!((got - oracle).abs() < 1e-12);
        assert!((got - 0.55).abs() < 1e-12);
    }

    #[test]
    fn semantic_channel() {
        let stub = StubEmbedder::new();
        let hard_text = "click the third icon from the left in the toolbar";
        let hard = stub.embed_text_now(hard_text).unwrap();
        let mut protos = vec![proto(Label::Hard, Modality::Textual, hard.clone())];
        protos.push(proto(
            Label::Easy,
            Modality::Textual,
            stub.embed_text_now("click the large Submit button").unwrap(),
        ));
        let kb = DifficultyKb::new(PrototypeKb::new("d", protos)).unwrap();
        let same = stub.embed_text_now(hard_text).unwrap();
        assert!((semantic_difficulty(&same, &kb).unwrap() - 1.0).abs() < 1e-12);

        let query = Embedding::basis(0, SourceKind::Text);
        let kb = DifficultyKb::new(PrototypeKb::new(
            "d",
            vec![
                proto(Label::Hard, Modality::Textual, at_cosine(0.1, 1, SourceKind::Text)),
                proto(Label::Hard, Modality::Textual, at_cosine(0.9, 2, SourceKind::Text)),
            ],
        ))
        .unwrap();
        assert!((semantic_difficulty(&query, &kb).unwrap() - 0.9).abs() < 1e-12);
        let orth = DifficultyKb::new(PrototypeKb::new(
            "d",
            vec![proto(Label::Hard, Modality::Textual, Embedding::basis(5, SourceKind::Text))],
        ))
        .unwrap();
        assert_eq!(semantic_difficulty(&query, &orth).unwrap(), 0.0);
    }

    #[test]
    fn missing_hard_set() {
        let kb = DifficultyKb::new(PrototypeKb::new(
            "d",
            vec![proto(Label::Easy, Modality::Visual, Embedding::basis(0, SourceKind::Image))],
        ))
        .unwrap();
        assert_eq!(
            visual_difficulty(&Embedding::basis(0, SourceKind::Image), &kb),
            Err(DifficultyError::EmptyHardSet(Modality::Visual))
        );
    }

    #[test]
    fn combination_and_bands() {
        let e = combine_difficulty(0.2, 0.1).unwrap();
        assert_eq!((e.d, e.band), (0.2, Band::Easy));
        let e = combine_difficulty(0.2, 0.8).unwrap();
        assert_eq!((e.d, e.band), (0.8, Band::Hard));
        let e = combine_difficulty(0.5, 0.5).unwrap();
        assert_eq!((e.d, e.band), (0.5, Band::Medium));
        assert!(matches!(combine_difficulty(1.2, 0.0), Err(DifficultyError::OutOfRange { .. })));
        // cutoffs themselves are medium
        assert_eq!(combine_difficulty(0.3, 0.0).unwrap().band, Band::Medium);
        assert_eq!(combine_difficulty(0.7, 0.0).unwrap().band, Band::Medium);
    }

    #[test]
    fn threshold_endpoints() {
        let cfg = ThresholdConfig::default();
        assert_eq!(adaptive_threshold(0.0, &cfg).unwrap(), 0.80);
        assert_eq!(adaptive_threshold(1.0, &cfg).unwrap(), 0.92);
        assert_eq!(adaptive_threshold(0.5, &cfg).unwrap(), 0.86);
        assert!(adaptive_threshold(-0.1, &cfg).is_err());
        assert!(ThresholdConfig::new(0.9, 0.8).is_err());
        assert!(ThresholdConfig::new(0.8, 1.0).is_err());
    }

    #[test]
    fn preroute_by_band() {
        let est = |d| combine_difficulty(d, 0.0).unwrap();
        assert_eq!(preroute(&est(0.1), true), Preroute::ToSmallSkipProbe);
        assert_eq!(preroute(&est(0.5), true), Preroute::Probe);
        assert_eq!(preroute(&est(0.9), true), Preroute::ToLargeSkipProbe);
        assert_eq!(preroute(&est(0.9), false), Preroute::Probe);
    }

    proptest! {
        #[test]
        fn threshold_monotone_and_bounded(a in 0.0f64..=1.0, b in 0.0f64..=1.0, lo in 0.01f64..0.5, span in 0.0f64..0.49) {
            let cfg = ThresholdConfig::new(lo, lo + span).unwrap();
            let (ta, tb) = (adaptive_threshold(a, &cfg).unwrap(), adaptive_threshold(b, &cfg).unwrap());
            if a <= b { prop_assert!(ta <= tb); }
            prop_assert!(ta >= cfg.tau_easy() && ta <= cfg.tau_hard());
        }

        #[test]
        fn combine_is_symmetric(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (x, y) = (combine_difficulty(a, b).unwrap(), combine_difficulty(b, a).unwrap());
            prop_assert_eq!(x.d, y.d);
            prop_assert_eq!(x.band, y.band);
            prop_assert_eq!(x.d, a.max(b));
        }

        #[test]
        fn hard_band_threshold_floor(d in 0.0f64..=1.0) {
            let cfg = ThresholdConfig::default();
            let est = combine_difficulty(d, 0.0).unwrap();
            if preroute(&est, true) == Preroute::ToLargeSkipProbe {
                let floor = cfg.tau_easy() + 0.7 * (cfg.tau_hard() - cfg.tau_easy());
                prop_assert!(adaptive_threshold(d, &cfg).unwrap() >= floor);
            }
        }
    }
}
