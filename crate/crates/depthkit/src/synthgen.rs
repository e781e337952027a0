//! Writes a synthetic dataset: analytic ground truth, flat-shaded images,
//! mask keypoints and the predictions of a set of fake models.
//!
//! Layout under the output directory:
//!
//! ```text
//! rgb/<id>.png            flat-shaded image
//! gt/<id>.dbf             metric depth (RawF32)
//! models/<name>/<id>.pfm  fake-model inverse depth
//! gt.jsonl                ground-truth manifest
//! <name>.jsonl            one manifest per fake model
//! keypoints.jsonl         one ImageKeypoints record per image
//! ```

use std::path::{Path, PathBuf};

use depthkit_core::benchmark::{ImageKeypoints, Scenario};
use depthkit_core::synth::{fake_model, keypoints_for, render, shade_rgb, FakeModel, SceneSpec};
use depthkit_core::DepthKind;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::depthio::{self, Format};
use crate::manifest::{write_atomic, write_jsonl, DatasetRole, ManifestEntry, PredictionManifest};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedModel {
    pub name: String,
    pub model: FakeModel,
}

/// The order-preserving models used as benchmark voters.
pub fn voter_models() -> Vec<NamedModel> {
    vec![
        NamedModel {
            name: "identity".into(),
            model: FakeModel::Identity,
        },
        NamedModel {
            name: "affine".into(),
            model: FakeModel::Affine { a: 2.0, b: 0.5 },
        },
        NamedModel {
            name: "square".into(),
            model: FakeModel::Monotone { gamma: 2.0 },
        },
        NamedModel {
            name: "sqrt".into(),
            model: FakeModel::Monotone { gamma: 0.5 },
        },
    ]
}

/// Voters plus a noisy and an inverted model.
pub fn default_models(seed: u64) -> Vec<NamedModel> {
    let mut models = voter_models();
    models.push(NamedModel {
        name: "noisy".into(),
        model: FakeModel::Noisy { sigma: 0.1, seed },
    });
    models.push(NamedModel {
        name: "inverted".into(),
        model: FakeModel::Inverted,
    });
    models
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub count: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Render this scene instead of random ones (its seed is ignored).
    pub scene: Option<SceneSpec>,
    pub keypoints_per_mask: usize,
    pub models: Vec<NamedModel>,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            count: 8,
            width: 64,
            height: 48,
            seed: 0,
            scene: None,
            keypoints_per_mask: 3,
            models: default_models(0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub gt: PathBuf,
    pub models: Vec<PathBuf>,
    pub keypoints: PathBuf,
}

/// Identity reproduces metric ground truth; every other model emits
/// inverse depth.
fn output_kind(model: FakeModel) -> DepthKind {
    match model {
        FakeModel::Identity => DepthKind::MetricMeters,
        _ => DepthKind::InverseRelative,
    }
}

/// Per-image seed derived from the run seed.
fn image_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(index as u64 + 1)
}

pub fn image_id(index: usize) -> String {
    format!("scene{index:04}")
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

pub fn generate(out: &Path, opts: &SynthOptions) -> Result<SynthOutput> {
    if opts.count == 0 {
        return Err(Error::Data("synth-gen needs count >= 1".into()));
    }
    let mut names = std::collections::BTreeSet::new();
    for m in &opts.models {
        if !names.insert(m.name.as_str()) || m.name == "gt" || m.name == "keypoints" {
            return Err(Error::Data(format!(
                "model name {:?} is duplicated or reserved",
                m.name
            )));
        }
    }
    mkdir(&out.join("rgb"))?;
    mkdir(&out.join("gt"))?;
    for m in &opts.models {
        mkdir(&out.join("models").join(&m.name))?;
    }
    let keypoints = (0..opts.count)
        .into_par_iter()
        .map(|i| -> Result<ImageKeypoints> {
            let seed = image_seed(opts.seed, i);
            let spec = match &opts.scene {
                Some(s) => SceneSpec { seed, ..s.clone() },
                None => SceneSpec::random(seed, opts.width, opts.height),
            };
            let r = render(&spec)?;
            let id = image_id(i);
            let (w, h) = r.depth.dims();
            let rgb = depthio::encode_rgb(w, h, &shade_rgb(&r))?;
            let rgb_path = out.join("rgb").join(format!("{id}.png"));
            std::fs::write(&rgb_path, rgb).map_err(|e| Error::io(&rgb_path, e))?;
            depthio::save_depth(&r.depth, &out.join("gt").join(format!("{id}.dbf")), Format::RawF32)?;
            for m in &opts.models {
                let model = match m.model {
                    FakeModel::Noisy { sigma, seed: s } => FakeModel::Noisy {
                        sigma,
                        seed: image_seed(s, i),
                    },
                    other => other,
                };
                let pred = fake_model(&r.depth, model);
                depthio::save_depth(
                    &pred,
                    &out.join("models").join(&m.name).join(format!("{id}.pfm")),
                    Format::Pfm,
                )?;
            }
            let scenario = Scenario::ALL[i % Scenario::ALL.len()];
            Ok(keypoints_for(
                &id,
                scenario,
                &r,
                seed ^ 0x6b65_7970,
                opts.keypoints_per_mask,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let entry = |i: usize, depth: PathBuf| ManifestEntry {
        image_id: image_id(i),
        image: PathBuf::from("rgb").join(format!("{}.png", image_id(i))),
        depth,
        mask: None,
    };
    let mut gt = PredictionManifest::new("gt", DatasetRole::GroundTruth, out);
    gt.entries = (0..opts.count)
        .map(|i| entry(i, PathBuf::from("gt").join(format!("{}.dbf", image_id(i)))))
        .collect();
    let gt_path = out.join("gt.jsonl");
    gt.save(&gt_path)?;
    let mut model_paths = Vec::new();
    for m in &opts.models {
        let mut manifest = PredictionManifest::new(m.name.clone(), DatasetRole::ModelPrediction, out);
        manifest.depth_kind = output_kind(m.model);
        manifest.entries = (0..opts.count)
            .map(|i| {
                entry(
                    i,
                    PathBuf::from("models")
                        .join(&m.name)
                        .join(format!("{}.pfm", image_id(i))),
                )
            })
            .collect();
        let path = out.join(format!("{}.jsonl", m.name));
        manifest.save(&path)?;
        model_paths.push(path);
    }
    let kp_path = out.join("keypoints.jsonl");
    write_jsonl(&kp_path, &keypoints)?;
    let models_json = serde_json::to_string_pretty(&opts.models).expect("serializable") + "\n";
    let models_path = out.join("models.json");
    write_atomic(&models_path, models_json.as_bytes()).map_err(|e| Error::io(models_path, e))?;
    Ok(SynthOutput {
        gt: gt_path,
        models: model_paths,
        keypoints: kp_path,
    })
}

/// Reads a scene description from TOML.
pub fn load_scene(path: &Path) -> Result<SceneSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let spec: SceneSpec = toml::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    spec.validate()?;
    Ok(spec)
}
