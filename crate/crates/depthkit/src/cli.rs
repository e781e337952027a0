//! Command-line front end.
//!
//! Exit status: 0 success, 2 configuration or usage error, 3 data error,
//! 4 internal error.

use std::collections::HashMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use depthkit_core::annotation::LedgerState;
use depthkit_core::benchmark::{AccuracyReport, ImageKeypoints, PairLabel, PointPair};
use depthkit_core::metrics::{AlignSpace, LabelComparison, MetricReport};
use depthkit_core::AlignmentMethod;

use crate::config::{ConfigError, RunConfig};
use crate::manifest::{load_manifest, read_jsonl, write_atomic, write_jsonl};
use crate::{pipeline, report, service, synthgen, Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "depthkit",
    version,
    about = "Relative depth evaluation, pseudo-label curation and ordinal-pair benchmark tooling"
)]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Seed for every random choice.
    #[arg(long, global = true, value_name = "SEED")]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AlignmentArg {
    Lsq,
    Robust,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SpaceArg {
    Inv,
    Depth,
}

#[derive(Debug, Args)]
pub struct EvalFlags {
    /// Scale/shift fit used before scoring.
    #[arg(long, value_enum)]
    pub alignment: Option<AlignmentArg>,
    /// Space in which the fit is performed.
    #[arg(long, value_enum)]
    pub space: Option<SpaceArg>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score predictions against ground truth after per-image alignment.
    Evaluate {
        #[arg(long, value_name = "MANIFEST")]
        pred: PathBuf,
        #[arg(long, value_name = "MANIFEST")]
        gt: PathBuf,
        /// Directory for report.json and report.txt.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[command(flatten)]
        eval: EvalFlags,
        /// Exit 0 even when some images had to be skipped.
        #[arg(long)]
        allow_skips: bool,
    },
    /// Mask the largest-loss pixels of teacher pseudo labels.
    Curate {
        /// Teacher predictions.
        #[arg(long, value_name = "MANIFEST")]
        pred: PathBuf,
        /// Counterpart predictions the loss is measured against.
        #[arg(long, alias = "reference", value_name = "MANIFEST")]
        gt: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Fraction of valid pixels to mask.
        #[arg(long, value_name = "F")]
        n_fraction: Option<f64>,
    },
    /// Sample keypoint pairs, let the models vote, and write the benchmark.
    BuildBenchmark {
        /// Per-image keypoints (JSONL), one entry per image.
        #[arg(long, value_name = "FILE")]
        keypoints: PathBuf,
        /// Voting model manifests (repeat once per model).
        #[arg(long, value_name = "MANIFEST", required = true)]
        pred: Vec<PathBuf>,
        /// Manually chosen pairs (JSONL of pair records).
        #[arg(long, value_name = "FILE")]
        manual: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Depth ratio a model must exceed to cast a vote.
        #[arg(long, value_name = "R")]
        ratio_threshold: Option<f64>,
        #[arg(long, value_name = "N")]
        pairs_per_image: Option<usize>,
    },
    /// Pair accuracy of one or more models on a benchmark.
    ScorePairs {
        /// Model manifests (repeat once per model).
        #[arg(long, value_name = "MANIFEST", required = true)]
        pred: Vec<PathBuf>,
        /// Benchmark JSONL.
        #[arg(long, alias = "benchmark", value_name = "FILE")]
        gt: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Ignore pairs still waiting for annotation instead of failing.
        #[arg(long)]
        labeled_only: bool,
    },
    /// Run the HTTP annotation service until interrupted.
    ServeAnnotation {
        /// Pairs to annotate (JSONL of pair records).
        #[arg(long, value_name = "FILE")]
        queue: PathBuf,
        /// Directory holding the event log and snapshot.
        #[arg(long, value_name = "DIR")]
        state: PathBuf,
        /// Manifest whose `image` paths are served to annotators.
        #[arg(long, value_name = "MANIFEST")]
        images: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        /// Annotator ids to register at start-up.
        #[arg(long = "annotator", value_name = "ID")]
        annotators: Vec<String>,
    },
    /// Render synthetic scenes, ground truth and fake-model predictions.
    SynthGen {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 48)]
        height: usize,
        /// Scene description (TOML) rendered instead of random scenes.
        #[arg(long, value_name = "FILE")]
        scene: Option<PathBuf>,
    },
    /// Score two label sources against the same ground truth.
    CompareLabels {
        #[arg(long, value_name = "MANIFEST")]
        pred: PathBuf,
        /// Second label source, scored like `--pred`.
        #[arg(long, value_name = "MANIFEST")]
        pred_b: PathBuf,
        #[arg(long, value_name = "MANIFEST")]
        gt: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[command(flatten)]
        eval: EvalFlags,
    },
    /// Write human annotation outcomes back into a benchmark.
    ExportLabels {
        /// Benchmark JSONL to update.
        #[arg(long, alias = "benchmark", value_name = "FILE")]
        gt: PathBuf,
        /// Annotation state directory.
        #[arg(long, value_name = "DIR")]
        state: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Render saved JSON reports as text tables.
    Table {
        #[arg(required = true, value_name = "REPORT")]
        reports: Vec<PathBuf>,
    },
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let eval_flags = match &cli.command {
        Command::Evaluate { eval, .. } | Command::CompareLabels { eval, .. } => Some(eval),
        _ => None,
    };
    if let Some(e) = eval_flags {
        if let Some(a) = e.alignment {
            cfg.eval.alignment = match a {
                AlignmentArg::Lsq => AlignmentMethod::LeastSquares,
                AlignmentArg::Robust => AlignmentMethod::Robust,
            };
        }
        if let Some(s) = e.space {
            cfg.eval.space = match s {
                SpaceArg::Inv => AlignSpace::InverseDepth,
                SpaceArg::Depth => AlignSpace::Depth,
            };
        }
    }
    match &cli.command {
        Command::Curate {
            n_fraction: Some(n), ..
        } => cfg.curation.n = *n,
        Command::BuildBenchmark {
            ratio_threshold,
            pairs_per_image,
            ..
        } => {
            if let Some(r) = ratio_threshold {
                cfg.voting.ratio_threshold = *r;
            }
            if let Some(n) = pairs_per_image {
                cfg.benchmark.per_image_pairs = *n;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_atomic(path, text.as_bytes()).map_err(|e| Error::io(path, e))
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn cmd_evaluate(cfg: &RunConfig, pred: &Path, gt: &Path, out: Option<&Path>, allow_skips: bool) -> Result<()> {
    let preds = load_manifest(pred)?;
    let gts = load_manifest(gt)?;
    let r = pipeline::evaluate_dataset(&preds, &gts, &cfg.eval)?;
    let table = report::metric_table(&cfg.eval, &[(preds.source_tag.as_str(), &r)]);
    print!("{table}");
    if let Some(out) = out {
        write_file(&out.join("report.json"), &json(&r))?;
        write_file(
            &out.join("report.txt"),
            &format!("{table}\n{}", report::per_image_table(&r)),
        )?;
    }
    if r.images_skipped > 0 && !allow_skips {
        let ids: Vec<&str> = r.skipped.iter().map(|s| s.image_id.as_str()).collect();
        return Err(Error::Data(format!(
            "{} image(s) skipped ({}); pass --allow-skips to accept",
            r.images_skipped,
            ids.join(", ")
        )));
    }
    Ok(())
}

fn cmd_curate(cfg: &RunConfig, pred: &Path, counterpart: &Path, out: &Path) -> Result<()> {
    let teacher = load_manifest(pred)?;
    let other = load_manifest(counterpart)?;
    let result = pipeline::curate_dataset(&teacher, &other, &cfg.curation, out)?;
    let masked: usize = result.reports.iter().map(|r| r.pixels_masked).sum();
    let valid: usize = result.reports.iter().map(|r| r.pixels_valid_before).sum();
    println!(
        "curated {} images: masked {masked} of {valid} valid pixels (n = {})",
        result.reports.len(),
        cfg.curation.n
    );
    Ok(())
}

fn cmd_build_benchmark(
    cfg: &RunConfig,
    keypoints: &Path,
    preds: &[PathBuf],
    manual: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let kp: Vec<ImageKeypoints> = read_jsonl(keypoints)?;
    let models = preds.iter().map(|p| load_manifest(p)).collect::<Result<Vec<_>, _>>()?;
    let manual_pairs: Vec<PointPair> = match manual {
        Some(p) => read_jsonl(p)?,
        None => Vec::new(),
    };
    let build = pipeline::build_benchmark(pipeline::BenchmarkInputs {
        keypoints: &kp,
        models: &models,
        manual_pairs,
        seed: cfg.seed,
        per_image_pairs: cfg.benchmark.per_image_pairs,
        voting: cfg.voting,
    })?;
    pipeline::write_benchmark(&build, out)?;
    let line = build.summary.log_line();
    log::info!("{line}");
    println!("{line}");
    Ok(())
}

fn cmd_score(preds: &[PathBuf], bench: &Path, out: Option<&Path>, labeled_only: bool) -> Result<()> {
    let mut pairs: Vec<PointPair> = read_jsonl(bench)?;
    if labeled_only {
        let before = pairs.len();
        pairs.retain(|p| p.label != PairLabel::Unlabeled);
        if pairs.len() < before {
            log::warn!("ignoring {} unlabeled pair(s)", before - pairs.len());
        }
    }
    let manifests = preds.iter().map(|p| load_manifest(p)).collect::<Result<Vec<_>, _>>()?;
    let reports = manifests
        .iter()
        .map(|m| pipeline::score_pairs(m, &pairs))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<(&str, &AccuracyReport)> = manifests.iter().map(|m| m.source_tag.as_str()).zip(&reports).collect();
    let table = report::accuracy_table(&rows);
    print!("{table}");
    if let Some(out) = out {
        let by_model: std::collections::BTreeMap<&str, &AccuracyReport> = rows.iter().copied().collect();
        write_file(&out.join("accuracy.json"), &json(&by_model))?;
        write_file(&out.join("accuracy.txt"), &table)?;
    }
    Ok(())
}

fn cmd_serve(
    cfg: &RunConfig,
    queue: &Path,
    state: &Path,
    images: Option<&Path>,
    bind: &str,
    annotators: &[String],
) -> Result<()> {
    let pairs: Vec<PointPair> = read_jsonl(queue)?;
    let image_map: HashMap<String, PathBuf> = match images {
        Some(p) => {
            let m = load_manifest(p)?;
            m.entries
                .iter()
                .map(|e| (e.image_id.clone(), m.resolve(&e.image)))
                .collect()
        }
        None => HashMap::new(),
    };
    let svc = service::Service::open(
        state,
        cfg.service.lease_ms,
        cfg.service.snapshot_every,
        service::system_clock(),
    )?
    .with_images(image_map);
    for a in annotators {
        svc.register(a)?;
    }
    let added = svc.enqueue_new(pairs)?;
    let svc = Arc::new(svc);
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::Internal(format!("runtime: {e}")))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(bind)
            .await
            .map_err(|e| Error::io(bind, e))?;
        let addr = listener.local_addr().map_err(|e| Error::io(bind, e))?;
        log::info!(
            "serving {} pairs ({added} new) on http://{addr}",
            svc.snapshot().pairs.len()
        );
        println!("listening on http://{addr}");
        service::serve(svc, listener, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
    })
}

fn cmd_synth(
    cfg: &RunConfig,
    out: &Path,
    count: usize,
    width: usize,
    height: usize,
    scene: Option<&Path>,
) -> Result<()> {
    let scene = scene.map(synthgen::load_scene).transpose()?;
    let opts = synthgen::SynthOptions {
        count,
        width,
        height,
        seed: cfg.seed,
        scene,
        models: synthgen::default_models(cfg.seed),
        ..synthgen::SynthOptions::default()
    };
    let written = synthgen::generate(out, &opts)?;
    println!(
        "wrote {count} scenes, {} model manifests to {}",
        written.models.len(),
        out.display()
    );
    Ok(())
}

fn cmd_compare(cfg: &RunConfig, a: &Path, b: &Path, gt: &Path, out: Option<&Path>) -> Result<()> {
    let ma = load_manifest(a)?;
    let mb = load_manifest(b)?;
    let gts = load_manifest(gt)?;
    let cmp = pipeline::compare_label_sources(&ma, &mb, &gts, &cfg.eval)?;
    let table = report::comparison_table(&cfg.eval, &ma.source_tag, &mb.source_tag, &cmp);
    print!("{table}");
    if let Some(out) = out {
        write_file(&out.join("comparison.json"), &json(&cmp))?;
        write_file(&out.join("comparison.txt"), &table)?;
    }
    Ok(())
}

fn cmd_export(bench: &Path, state_dir: &Path, out: &Path) -> Result<()> {
    let mut pairs: Vec<PointPair> = read_jsonl(bench)?;
    let events = service::read_log(&state_dir.join("events.jsonl"))?;
    let state = LedgerState::replay(&events)?;
    let changed = state.export_labels(&mut pairs);
    write_jsonl(out, &pairs)?;
    println!("updated {changed} of {} pairs", pairs.len());
    Ok(())
}

fn cmd_table(cfg: &RunConfig, reports: &[PathBuf]) -> Result<()> {
    let mut metric = Vec::new();
    let mut accuracy = Vec::new();
    for p in reports {
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        let label = p.file_stem().and_then(|s| s.to_str()).unwrap_or("report").to_string();
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", p.display())))?;
        let bad = |e: serde_json::Error| Error::Data(format!("{}: {e}", p.display()));
        if value.get("delta").is_some() {
            let cmp: LabelComparison = serde_json::from_value(value).map_err(bad)?;
            print!("{}", report::comparison_table(&cfg.eval, "a", "b", &cmp));
        } else if value.get("abs_rel").is_some() {
            metric.push((label, serde_json::from_value::<MetricReport>(value).map_err(bad)?));
        } else if value.get("per_scenario").is_some() {
            accuracy.push((label, serde_json::from_value::<AccuracyReport>(value).map_err(bad)?));
        } else if let Some(obj) = value.as_object() {
            for (model, v) in obj {
                let r: AccuracyReport = serde_json::from_value(v.clone()).map_err(bad)?;
                accuracy.push((model.clone(), r));
            }
        } else {
            return Err(Error::Data(format!("{}: not a report", p.display())));
        }
    }
    if !metric.is_empty() {
        let rows: Vec<(&str, &MetricReport)> = metric.iter().map(|(l, r)| (l.as_str(), r)).collect();
        print!("{}", report::metric_table(&cfg.eval, &rows));
    }
    if !accuracy.is_empty() {
        let rows: Vec<(&str, &AccuracyReport)> = accuracy.iter().map(|(l, r)| (l.as_str(), r)).collect();
        print!("{}", report::accuracy_table(&rows));
    }
    Ok(())
}

fn dispatch(cli: &Cli, cfg: &RunConfig) -> Result<()> {
    match &cli.command {
        Command::Evaluate {
            pred,
            gt,
            out,
            allow_skips,
            ..
        } => cmd_evaluate(cfg, pred, gt, out.as_deref(), *allow_skips),
        Command::Curate { pred, gt, out, .. } => cmd_curate(cfg, pred, gt, out),
        Command::BuildBenchmark {
            keypoints,
            pred,
            manual,
            out,
            ..
        } => cmd_build_benchmark(cfg, keypoints, pred, manual.as_deref(), out),
        Command::ScorePairs {
            pred,
            gt,
            out,
            labeled_only,
        } => cmd_score(pred, gt, out.as_deref(), *labeled_only),
        Command::ServeAnnotation {
            queue,
            state,
            images,
            bind,
            annotators,
        } => cmd_serve(cfg, queue, state, images.as_deref(), bind, annotators),
        Command::SynthGen {
            out,
            count,
            width,
            height,
            scene,
        } => cmd_synth(cfg, out, *count, *width, *height, scene.as_deref()),
        Command::CompareLabels {
            pred, pred_b, gt, out, ..
        } => cmd_compare(cfg, pred, pred_b, gt, out.as_deref()),
        Command::ExportLabels { gt, state, out } => cmd_export(gt, state, out),
        Command::Table { reports } => cmd_table(cfg, reports),
    }
}

/// Parses `args`, runs the command and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = resolve_config(&cli).and_then(|cfg| {
        let mut pool = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cfg.threads {
            pool = pool.num_threads(n);
        }
        let pool = pool
            .build()
            .map_err(|e| Error::Config(ConfigError::Other(format!("thread pool: {e}"))))?;
        pool.install(|| dispatch(&cli, &cfg))
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
