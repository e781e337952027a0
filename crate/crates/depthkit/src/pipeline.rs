//! Dataset-level operations over manifests.
//!
//! Work is spread over the current rayon pool one image at a time, and
//! results are always collected in input order, so outputs do not depend on
//! the thread count.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use depthkit_core::benchmark::{
    self, assemble_benchmark, sample_pairs, AccuracyReport, BenchmarkBuild, ImageKeypoints, PointPair, VotingConfig,
};
use depthkit_core::curation::{curate_image, CurationConfig, CurationReport};
use depthkit_core::metrics::{aggregate, compare_reports, row_or_skip, EvalConfig, LabelComparison, MetricReport};
use depthkit_core::DepthMap;
use rayon::prelude::*;

use crate::depthio;
use crate::manifest::{write_jsonl, ManifestEntry, ManifestError, PredictionManifest};
use crate::{Error, Result};

/// Pairs each `gts` entry with the `preds` entry of the same id. Both
/// manifests must cover exactly the same ids.
fn matched<'a>(
    preds: &'a PredictionManifest,
    gts: &'a PredictionManifest,
) -> Result<Vec<(&'a ManifestEntry, &'a ManifestEntry)>> {
    let by_id: HashMap<&str, &ManifestEntry> = preds.entries.iter().map(|e| (e.image_id.as_str(), e)).collect();
    let mut out = Vec::with_capacity(gts.len());
    for g in &gts.entries {
        let p = by_id
            .get(g.image_id.as_str())
            .ok_or_else(|| ManifestError::MissingCounterpart(g.image_id.clone()))?;
        out.push((*p, g));
    }
    if let Some(extra) = preds.entries.iter().find(|p| gts.get(&p.image_id).is_none()) {
        return Err(ManifestError::MissingCounterpart(extra.image_id.clone()).into());
    }
    Ok(out)
}

pub fn evaluate_dataset(
    preds: &PredictionManifest,
    gts: &PredictionManifest,
    cfg: &EvalConfig,
) -> Result<MetricReport> {
    cfg.validate()?;
    let pairs = matched(preds, gts)?;
    let rows = pairs
        .par_iter()
        .map(|(p, g)| -> Result<_> {
            let pred = preds.load_depth(p)?;
            let gt = gts.load_depth(g)?;
            Ok(row_or_skip(&g.image_id, &pred, &gt, cfg)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ok = Vec::new();
    let mut skipped = Vec::new();
    for r in rows {
        match r {
            Ok(row) => ok.push(row),
            Err(skip) => skipped.push(skip),
        }
    }
    Ok(aggregate(ok, skipped, cfg.pooling))
}

/// Scores two label sources against the same ground truth.
pub fn compare_label_sources(
    a: &PredictionManifest,
    b: &PredictionManifest,
    gts: &PredictionManifest,
    cfg: &EvalConfig,
) -> Result<LabelComparison> {
    let ids_a: BTreeSet<&str> = a.entries.iter().map(|e| e.image_id.as_str()).collect();
    if !b.entries.iter().any(|e| ids_a.contains(e.image_id.as_str())) && !(a.is_empty() && b.is_empty()) {
        let id = a
            .entries
            .first()
            .or(b.entries.first())
            .map(|e| e.image_id.clone())
            .unwrap_or_default();
        return Err(ManifestError::MissingCounterpart(id).into());
    }
    let ra = evaluate_dataset(a, gts, cfg)?;
    let rb = evaluate_dataset(b, gts, cfg)?;
    Ok(compare_reports(ra, rb))
}

/// File-name-safe form of an image id.
fn file_stem(index: usize, image_id: &str) -> String {
    let clean: String = image_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{index:05}-{clean}")
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

#[derive(Debug)]
pub struct CurationOutput {
    pub manifest: PredictionManifest,
    pub reports: Vec<CurationReport>,
}

/// Curates every teacher prediction against its counterpart and writes the
/// curated masks, a manifest pointing at them, and per-image reports into
/// `out_dir` as `masks/`, `curated.jsonl` and `curation_reports.jsonl`.
pub fn curate_dataset(
    teacher: &PredictionManifest,
    counterpart: &PredictionManifest,
    cfg: &CurationConfig,
    out_dir: &Path,
) -> Result<CurationOutput> {
    cfg.validate()?;
    let by_id: HashMap<&str, &ManifestEntry> = counterpart.entries.iter().map(|e| (e.image_id.as_str(), e)).collect();
    let jobs = teacher
        .entries
        .iter()
        .map(|t| {
            by_id
                .get(t.image_id.as_str())
                .map(|c| (t, *c))
                .ok_or_else(|| ManifestError::MissingCounterpart(t.image_id.clone()).into())
        })
        .collect::<Result<Vec<_>>>()?;
    let mask_dir = out_dir.join("masks");
    std::fs::create_dir_all(&mask_dir).map_err(|e| Error::io(&mask_dir, e))?;
    let results = jobs
        .par_iter()
        .enumerate()
        .map(|(i, (t, c))| -> Result<(ManifestEntry, CurationReport)> {
            let tmap = teacher.load_depth(t)?;
            let cmap = counterpart.load_depth(c)?;
            let (mask, report) = curate_image(&t.image_id, &tmap, &cmap, tmap.mask(), cfg)?;
            let rel = PathBuf::from("masks").join(format!("{}.png", file_stem(i, &t.image_id)));
            depthio::save_mask(&mask, &out_dir.join(&rel))?;
            let entry = ManifestEntry {
                image_id: t.image_id.clone(),
                image: absolute(&teacher.resolve(&t.image)),
                depth: absolute(&teacher.resolve(&t.depth)),
                mask: Some(rel),
            };
            Ok((entry, report))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut manifest = PredictionManifest::new(
        format!("{}-curated", teacher.source_tag),
        crate::manifest::DatasetRole::PseudoLabeledReal,
        out_dir,
    );
    manifest.depth_kind = teacher.depth_kind;
    let mut reports = Vec::with_capacity(results.len());
    for (entry, report) in results {
        manifest.entries.push(entry);
        reports.push(report);
    }
    manifest.save(&out_dir.join("curated.jsonl"))?;
    write_jsonl(&out_dir.join("curation_reports.jsonl"), &reports)?;
    Ok(CurationOutput { manifest, reports })
}

/// Loads every model's map for each image, in parallel over images.
fn load_model_maps(
    models: &[PredictionManifest],
    image_ids: &[&str],
) -> Result<HashMap<String, Vec<(String, DepthMap)>>> {
    let loaded = image_ids
        .par_iter()
        .map(|id| -> Result<(String, Vec<(String, DepthMap)>)> {
            let maps = models
                .iter()
                .map(|m| {
                    let entry = m.get(id).ok_or_else(|| {
                        depthkit_core::Error::MissingPrediction(format!("{} (model {})", id, m.source_tag))
                    })?;
                    Ok((m.source_tag.clone(), m.load_depth(entry)?))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((id.to_string(), maps))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(loaded.into_iter().collect())
}

pub struct BenchmarkInputs<'a> {
    pub keypoints: &'a [ImageKeypoints],
    pub models: &'a [PredictionManifest],
    pub manual_pairs: Vec<PointPair>,
    pub seed: u64,
    pub per_image_pairs: usize,
    pub voting: VotingConfig,
}

/// Samples, votes and assembles a benchmark. Nothing is written.
pub fn build_benchmark(inputs: BenchmarkInputs<'_>) -> Result<BenchmarkBuild> {
    inputs.voting.validate()?;
    let tags: BTreeSet<&str> = inputs.models.iter().map(|m| m.source_tag.as_str()).collect();
    if tags.len() != inputs.models.len() {
        return Err(Error::Data("model manifests must have distinct source tags".into()));
    }
    let sampled = sample_pairs(inputs.keypoints, inputs.seed, inputs.per_image_pairs);
    for s in &sampled.skipped {
        log::warn!("skipping image {}: {}", s.image_id, s.reason);
    }
    let dims: HashMap<&str, (usize, usize)> = inputs
        .keypoints
        .iter()
        .map(|k| (k.image_id.as_str(), (k.width as usize, k.height as usize)))
        .collect();
    for p in &sampled.pairs {
        p.validate(dims.get(p.image_id.as_str()).copied())?;
    }
    let mut ids: Vec<&str> = sampled.pairs.iter().map(|p| p.image_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    let maps = load_model_maps(inputs.models, &ids)?;
    let votes = sampled
        .pairs
        .par_iter()
        .map(|pair| {
            let models: Vec<(&str, &DepthMap)> = maps[&pair.image_id].iter().map(|(t, m)| (t.as_str(), m)).collect();
            benchmark::vote(pair, &models, &inputs.voting)
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(assemble_benchmark(sampled.pairs, votes, inputs.manual_pairs)?)
}

/// Writes `benchmark.jsonl`, `queue.jsonl`, `votes.jsonl` and
/// `summary.json` into `out_dir`.
pub fn write_benchmark(build: &BenchmarkBuild, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_jsonl(&out_dir.join("benchmark.jsonl"), &build.pairs)?;
    let queued: BTreeSet<&str> = build.queue.iter().map(String::as_str).collect();
    let queue: Vec<&PointPair> = build
        .pairs
        .iter()
        .filter(|p| queued.contains(p.pair_id.as_str()))
        .collect();
    write_jsonl(&out_dir.join("queue.jsonl"), &queue)?;
    write_jsonl(&out_dir.join("votes.jsonl"), &build.votes)?;
    let summary = serde_json::to_string_pretty(&build.summary).expect("serializable") + "\n";
    let path = out_dir.join("summary.json");
    crate::manifest::write_atomic(&path, summary.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Pair accuracy of one model's predictions on a benchmark.
pub fn score_pairs(pred: &PredictionManifest, pairs: &[PointPair]) -> Result<AccuracyReport> {
    let mut ids: Vec<&str> = pairs.iter().map(|p| p.image_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    let maps = load_model_maps(std::slice::from_ref(pred), &ids)?;
    Ok(benchmark::pair_accuracy(pairs, |id| maps.get(id).map(|v| &v[0].1))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_stems_are_safe_and_unique() {
        assert_eq!(file_stem(3, "a/b c.png"), "00003-a_b_c_png");
        assert_ne!(file_stem(0, "a/b"), file_stem(1, "a_b"));
    }
}
