//! Sparse ordinal-depth benchmark: keypoint pair sampling, ratio-gated
//! multi-model voting, manifest assembly and pair accuracy.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::map::DepthMap;
use crate::{Error, Result};

/// The eight evaluation scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Indoor,
    Outdoor,
    NonReal,
    TransparentReflective,
    AdverseStyle,
    Aerial,
    Underwater,
    Object,
}

impl Scenario {
    pub const ALL: [Scenario; 8] = [
        Scenario::Indoor,
        Scenario::Outdoor,
        Scenario::NonReal,
        Scenario::TransparentReflective,
        Scenario::AdverseStyle,
        Scenario::Aerial,
        Scenario::Underwater,
        Scenario::Object,
    ];

    /// Column header used in accuracy tables.
    pub fn title(self) -> &'static str {
        match self {
            Scenario::Indoor => "Indoor",
            Scenario::Outdoor => "Outdoor",
            Scenario::NonReal => "Non-real",
            Scenario::TransparentReflective => "Transparent",
            Scenario::AdverseStyle => "Adverse style",
            Scenario::Aerial => "Aerial",
            Scenario::Underwater => "Underwater",
            Scenario::Object => "Object",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Scenario::Indoor => "indoor",
            Scenario::Outdoor => "outdoor",
            Scenario::NonReal => "non_real",
            Scenario::TransparentReflective => "transparent_reflective",
            Scenario::AdverseStyle => "adverse_style",
            Scenario::Aerial => "aerial",
            Scenario::Underwater => "underwater",
            Scenario::Object => "object",
        }
    }

    pub fn from_key(key: &str) -> Option<Scenario> {
        Scenario::ALL.into_iter().find(|s| s.key() == key)
    }
}

/// Pixel coordinate, serialised as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[u32; 2]", into = "[u32; 2]")]
pub struct Pixel {
    pub x: u32,
    pub y: u32,
}

impl Pixel {
    pub fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }

    pub fn index(self, width: usize) -> usize {
        self.y as usize * width + self.x as usize
    }
}

impl From<[u32; 2]> for Pixel {
    fn from([x, y]: [u32; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Pixel> for [u32; 2] {
    fn from(p: Pixel) -> Self {
        [p.x, p.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    AutoSampled,
    ManualChallenge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairLabel {
    FirstCloser,
    SecondCloser,
    Unlabeled,
    Skipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    ModelConsensus,
    HumanConsensus,
    None,
}

/// One ordinal question: which of two pixels is closer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointPair {
    pub pair_id: String,
    pub image_id: String,
    pub p1: Pixel,
    pub p2: Pixel,
    pub scenario: Scenario,
    pub origin: Origin,
    pub label: PairLabel,
    pub label_source: LabelSource,
}

impl PointPair {
    /// Checks the pair invariants; bounds are checked when dimensions are known.
    pub fn validate(&self, dims: Option<(usize, usize)>) -> Result<()> {
        let bad = |reason| {
            Err(Error::InvalidPair {
                pair_id: self.pair_id.clone(),
                reason,
            })
        };
        if self.p1 == self.p2 {
            return bad("p1 and p2 coincide");
        }
        if let Some((w, h)) = dims {
            for p in [self.p1, self.p2] {
                if p.x as usize >= w || p.y as usize >= h {
                    return bad("pixel outside image bounds");
                }
            }
        }
        if self.label != PairLabel::Unlabeled && self.label_source == LabelSource::None {
            return bad("labeled pair without a label source");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: u32,
    pub y: u32,
    pub mask_id: u32,
}

/// Keypoints (mask prompts) of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageKeypoints {
    pub image_id: String,
    pub scenario: Scenario,
    pub width: u32,
    pub height: u32,
    pub keypoints: Vec<Keypoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedImage {
    pub image_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampledPairs {
    pub pairs: Vec<PointPair>,
    /// Images without an eligible pair (too few keypoints or masks).
    pub skipped: Vec<SkippedImage>,
}

/// Unordered keypoint index pairs `(i, j)`, `i < j`, from different masks and
/// at different pixels, in lexicographic order.
pub fn eligible_pairs(keypoints: &[Keypoint]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..keypoints.len() {
        for j in i + 1..keypoints.len() {
            let (a, b) = (keypoints[i], keypoints[j]);
            if a.mask_id != b.mask_id && (a.x, a.y) != (b.x, b.y) {
                out.push((i, j));
            }
        }
    }
    out
}

/// Draws up to `per_image_pairs` distinct keypoint pairs per image, uniformly
/// without replacement among pairs from distinct masks. Which keypoint
/// becomes `p1` is a fair coin. One seeded stream covers all images in order.
pub fn sample_pairs(images: &[ImageKeypoints], seed: u64, per_image_pairs: usize) -> SampledPairs {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SampledPairs::default();
    for img in images {
        let skip = |reason: &str| SkippedImage {
            image_id: img.image_id.clone(),
            reason: String::from(reason),
        };
        if img.keypoints.len() < 2 {
            out.skipped.push(skip("fewer than 2 keypoints"));
            continue;
        }
        if img.keypoints.iter().any(|k| k.x >= img.width || k.y >= img.height) {
            out.skipped.push(skip("keypoint outside image bounds"));
            continue;
        }
        let eligible = eligible_pairs(&img.keypoints);
        if eligible.is_empty() {
            out.skipped.push(skip("no keypoints from distinct masks"));
            continue;
        }
        let amount = per_image_pairs.min(eligible.len());
        for (n, pick) in index::sample(&mut rng, eligible.len(), amount).into_iter().enumerate() {
            let (i, j) = eligible[pick];
            let (a, b) = if rng.gen::<bool>() { (j, i) } else { (i, j) };
            let (ka, kb) = (img.keypoints[a], img.keypoints[b]);
            out.pairs.push(PointPair {
                pair_id: format!("{}#{:03}", img.image_id, n),
                image_id: img.image_id.clone(),
                p1: Pixel::new(ka.x, ka.y),
                p2: Pixel::new(kb.x, kb.y),
                scenario: img.scenario,
                origin: Origin::AutoSampled,
                label: PairLabel::Unlabeled,
                label_source: LabelSource::None,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VotingConfig {
    /// A model votes only when its depth ratio for the pair exceeds this.
    pub ratio_threshold: f64,
    pub min_models: usize,
}

impl Default for VotingConfig {
    fn default() -> Self {
        Self {
            ratio_threshold: 3.0,
            min_models: 4,
        }
    }
}

impl VotingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio_threshold > 1.0 && self.ratio_threshold.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "ratio_threshold must be > 1, got {}",
                self.ratio_threshold
            )));
        }
        if self.min_models == 0 {
            return Err(Error::InvalidConfig(String::from("min_models must be >= 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Closer {
    FirstCloser,
    SecondCloser,
    Ineligible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelVote {
    pub model: String,
    /// `max(d1/d2, d2/d1)` in depth units, always >= 1.
    pub ratio: f64,
    pub closer: Closer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "label")]
pub enum VoteOutcome {
    ConsensusLabel(PairLabel),
    Disagreement,
    IneligibleAllModels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteResult {
    pub pair_id: String,
    pub per_model: Vec<ModelVote>,
    pub outcome: VoteOutcome,
}

fn depth_of(map: &DepthMap, p: Pixel, model: &str) -> Result<f64> {
    let invalid = || Error::InvalidPixel {
        model: String::from(model),
        x: p.x,
        y: p.y,
    };
    if p.x as usize >= map.width() || p.y as usize >= map.height() {
        return Err(invalid());
    }
    match map.depth_at(p.index(map.width())) {
        Some(d) if d > 0.0 && d.is_finite() => Ok(d),
        _ => Err(invalid()),
    }
}

/// One model's gated opinion on a pair.
pub fn model_vote(pair: &PointPair, model: &str, map: &DepthMap, cfg: &VotingConfig) -> Result<ModelVote> {
    let d1 = depth_of(map, pair.p1, model)?;
    let d2 = depth_of(map, pair.p2, model)?;
    let ratio = if d1 > d2 { d1 / d2 } else { d2 / d1 };
    let closer = if d1 == d2 || !(ratio > cfg.ratio_threshold) {
        Closer::Ineligible
    } else if d1 < d2 {
        Closer::FirstCloser
    } else {
        Closer::SecondCloser
    };
    Ok(ModelVote {
        model: String::from(model),
        ratio,
        closer,
    })
}

/// Ratio-gated unanimous vote. Models whose ratio does not exceed the
/// threshold abstain; the eligible remainder must all agree.
pub fn vote(pair: &PointPair, models: &[(&str, &DepthMap)], cfg: &VotingConfig) -> Result<VoteResult> {
    cfg.validate()?;
    if models.len() < cfg.min_models {
        return Err(Error::NotEnoughModels {
            needed: cfg.min_models,
            got: models.len(),
        });
    }
    let per_model = models
        .iter()
        .map(|(name, map)| model_vote(pair, name, map, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut first = false;
    let mut second = false;
    for v in &per_model {
        match v.closer {
            Closer::FirstCloser => first = true,
            Closer::SecondCloser => second = true,
            Closer::Ineligible => {}
        }
    }
    let outcome = match (first, second) {
        (false, false) => VoteOutcome::IneligibleAllModels,
        (true, true) => VoteOutcome::Disagreement,
        (true, false) => VoteOutcome::ConsensusLabel(PairLabel::FirstCloser),
        (false, true) => VoteOutcome::ConsensusLabel(PairLabel::SecondCloser),
    };
    Ok(VoteResult {
        pair_id: pair.pair_id.clone(),
        per_model,
        outcome,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BuildSummary {
    pub images: usize,
    pub pairs: usize,
    pub auto_labeled: usize,
    pub queued_disagreement: usize,
    pub queued_manual: usize,
    pub dropped_ineligible: usize,
}

impl BuildSummary {
    /// e.g. `1K images / 2K pairs (auto 1.5K, queued 480, manual 20, dropped 31)`.
    pub fn log_line(&self) -> String {
        format!(
            "{} images / {} pairs (auto {}, queued {}, manual {}, dropped {})",
            format_count(self.images),
            format_count(self.pairs),
            format_count(self.auto_labeled),
            format_count(self.queued_disagreement),
            format_count(self.queued_manual),
            format_count(self.dropped_ineligible),
        )
    }
}

/// Compact count: `999`, `1K`, `1.5K`, `2M`.
pub fn format_count(n: usize) -> String {
    let fmt = |value: usize, unit: usize, suffix: &str| {
        if value.is_multiple_of(unit) {
            format!("{}{}", value / unit, suffix)
        } else {
            let tenths = (value * 10 + unit / 2) / unit;
            if tenths.is_multiple_of(10) {
                format!("{}{}", tenths / 10, suffix)
            } else {
                format!("{}.{}{}", tenths / 10, tenths % 10, suffix)
            }
        }
    };
    if n >= 1_000_000 {
        fmt(n, 1_000_000, "M")
    } else if n >= 1_000 {
        fmt(n, 1_000, "K")
    } else {
        format!("{n}")
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchmarkBuild {
    /// Auto-labeled and queued pairs; dropped pairs are not included.
    pub pairs: Vec<PointPair>,
    /// Pair ids awaiting human annotation, in manifest order.
    pub queue: Vec<String>,
    pub votes: Vec<VoteResult>,
    pub dropped: Vec<String>,
    pub summary: BuildSummary,
}

/// Combines sampled pairs and their votes with the manually chosen pairs.
///
/// `votes[i]` must belong to `sampled[i]`.
pub fn assemble_benchmark(
    sampled: Vec<PointPair>,
    votes: Vec<VoteResult>,
    manual_pairs: Vec<PointPair>,
) -> Result<BenchmarkBuild> {
    let mut build = BenchmarkBuild::default();
    for (mut pair, v) in sampled.into_iter().zip(votes.iter()) {
        if v.pair_id != pair.pair_id {
            return Err(Error::InvalidPair {
                pair_id: pair.pair_id,
                reason: "vote belongs to a different pair",
            });
        }
        match v.outcome {
            VoteOutcome::ConsensusLabel(label) => {
                pair.label = label;
                pair.label_source = LabelSource::ModelConsensus;
                build.summary.auto_labeled += 1;
                build.pairs.push(pair);
            }
            VoteOutcome::Disagreement => {
                pair.label = PairLabel::Unlabeled;
                pair.label_source = LabelSource::None;
                build.summary.queued_disagreement += 1;
                build.queue.push(pair.pair_id.clone());
                build.pairs.push(pair);
            }
            VoteOutcome::IneligibleAllModels => {
                build.summary.dropped_ineligible += 1;
                build.dropped.push(pair.pair_id);
            }
        }
    }
    build.votes = votes;
    for mut pair in manual_pairs {
        if pair.origin != Origin::ManualChallenge {
            return Err(Error::InvalidPair {
                pair_id: pair.pair_id,
                reason: "manual pairs must have origin manual_challenge",
            });
        }
        pair.label = PairLabel::Unlabeled;
        pair.label_source = LabelSource::None;
        pair.validate(None)?;
        build.summary.queued_manual += 1;
        build.queue.push(pair.pair_id.clone());
        build.pairs.push(pair);
    }
    let mut seen = alloc::collections::BTreeSet::new();
    for p in &build.pairs {
        if !seen.insert(p.pair_id.as_str()) {
            return Err(Error::InvalidPair {
                pair_id: p.pair_id.clone(),
                reason: "duplicate pair_id",
            });
        }
    }
    let images: alloc::collections::BTreeSet<&str> = build.pairs.iter().map(|p| p.image_id.as_str()).collect();
    build.summary.images = images.len();
    build.summary.pairs = build.pairs.len();
    Ok(build)
}

/// Votes every sampled pair with the maps returned by `models_for(image_id)`
/// and assembles the benchmark.
pub fn build_benchmark<'a, F>(
    sampled: Vec<PointPair>,
    mut models_for: F,
    manual_pairs: Vec<PointPair>,
    cfg: &VotingConfig,
) -> Result<BenchmarkBuild>
where
    F: FnMut(&str) -> Option<Vec<(&'a str, &'a DepthMap)>>,
{
    let mut votes = Vec::with_capacity(sampled.len());
    for pair in &sampled {
        let models = models_for(&pair.image_id).ok_or_else(|| Error::MissingPrediction(pair.image_id.clone()))?;
        votes.push(vote(pair, &models, cfg)?);
    }
    assemble_benchmark(sampled, votes, manual_pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioAccuracy {
    pub scenario: Scenario,
    pub correct: usize,
    pub total: usize,
    /// `None` when the scenario has no labeled pairs.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub per_scenario: Vec<ScenarioAccuracy>,
    pub correct: usize,
    pub total: usize,
    /// `correct / total` over all labeled pairs.
    pub accuracy: f64,
    pub skipped_pairs: usize,
    /// Pairs scored incorrect because the model had no value at a pixel.
    pub invalid_pixels: usize,
}

/// Whether `map` orders the pair as `label` says: the closer pixel must have
/// strictly larger inverse depth. `None` when a pixel has no usable value.
pub fn judge_pair(pair: &PointPair, map: &DepthMap) -> Option<bool> {
    let inv = |p: Pixel| {
        if p.x as usize >= map.width() || p.y as usize >= map.height() {
            return None;
        }
        map.inverse_at(p.index(map.width())).filter(|v| v.is_finite())
    };
    let (a, b) = (inv(pair.p1)?, inv(pair.p2)?);
    Some(match pair.label {
        PairLabel::FirstCloser => a > b,
        PairLabel::SecondCloser => b > a,
        PairLabel::Unlabeled | PairLabel::Skipped => false,
    })
}

pub fn pair_accuracy<'a, F>(pairs: &[PointPair], mut prediction_for: F) -> Result<AccuracyReport>
where
    F: FnMut(&str) -> Option<&'a DepthMap>,
{
    let mut correct = [0usize; 8];
    let mut total = [0usize; 8];
    let mut skipped = 0;
    let mut invalid = 0;
    for pair in pairs {
        match pair.label {
            PairLabel::Unlabeled => return Err(Error::UnlabeledPair(pair.pair_id.clone())),
            PairLabel::Skipped => {
                skipped += 1;
                continue;
            }
            PairLabel::FirstCloser | PairLabel::SecondCloser => {}
        }
        let map = prediction_for(&pair.image_id).ok_or_else(|| Error::MissingPrediction(pair.image_id.clone()))?;
        let s = pair.scenario as usize;
        total[s] += 1;
        match judge_pair(pair, map) {
            Some(true) => correct[s] += 1,
            Some(false) => {}
            None => invalid += 1,
        }
    }
    let per_scenario = Scenario::ALL
        .iter()
        .map(|&scenario| {
            let i = scenario as usize;
            ScenarioAccuracy {
                scenario,
                correct: correct[i],
                total: total[i],
                accuracy: (total[i] > 0).then(|| correct[i] as f64 / total[i] as f64),
            }
        })
        .collect();
    let c: usize = correct.iter().sum();
    let t: usize = total.iter().sum();
    Ok(AccuracyReport {
        per_scenario,
        correct: c,
        total: t,
        accuracy: if t > 0 { c as f64 / t as f64 } else { 0.0 },
        skipped_pairs: skipped,
        invalid_pixels: invalid,
    })
}
