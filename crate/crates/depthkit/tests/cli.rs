//! End-to-end runs of the `depthkit` binary.

use std::path::Path;
use std::process::{Command, Output};
use std::sync::Arc;

use depthkit::core::annotation::Decision;
use depthkit::core::benchmark::{LabelSource, PairLabel, PointPair};
use depthkit::core::curation::CurationReport;
use depthkit::manifest::{load_manifest, read_jsonl};
use depthkit::service::{Clock, Service};

fn depthkit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_depthkit"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = depthkit(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn synth(dir: &Path) {
    ok(dir, &["--seed", "3", "synth-gen", "--out", "data", "--count", "10"]);
}

fn build(dir: &Path, last_model: &str, out: &str) -> String {
    let last = format!("data/{last_model}.jsonl");
    ok(
        dir,
        &[
            "--seed",
            "3",
            "build-benchmark",
            "--keypoints",
            "data/keypoints.jsonl",
            "--pred",
            "data/identity.jsonl",
            "--pred",
            "data/affine.jsonl",
            "--pred",
            "data/square.jsonl",
            "--pred",
            &last,
            "--out",
            out,
            "--pairs-per-image",
            "12",
        ],
    )
}

#[test]
fn help_lists_every_subcommand() {
    let text = ok(Path::new("."), &["--help"]);
    for cmd in [
        "evaluate",
        "curate",
        "build-benchmark",
        "score-pairs",
        "serve-annotation",
        "synth-gen",
    ] {
        assert!(text.contains(cmd), "--help lacks {cmd}");
    }
}

#[test]
fn monotone_voters_label_everything_and_identity_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir);
    let line = build(dir, "sqrt", "bench");
    assert!(line.contains("queued 0"), "{line}");
    let table = ok(
        dir,
        &[
            "score-pairs",
            "--pred",
            "data/identity.jsonl",
            "--pred",
            "data/inverted.jsonl",
            "--gt",
            "bench/benchmark.jsonl",
            "--out",
            "acc",
        ],
    );
    assert!(table.contains("97.4%"), "anchor missing:\n{table}");
    let acc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("acc/accuracy.json")).unwrap()).unwrap();
    assert_eq!(acc["identity"]["accuracy"], 1.0);
    assert_eq!(acc["inverted"]["accuracy"], 0.0);
    assert!(acc["identity"]["total"].as_u64().unwrap() > 0);
    let rendered = ok(dir, &["table", "acc/accuracy.json"]);
    assert!(rendered.contains("identity"));
}

#[test]
fn missing_depth_file_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir);
    std::fs::remove_file(dir.join("data/gt/scene0004.dbf")).unwrap();
    let out = depthkit(
        dir,
        &["evaluate", "--pred", "data/noisy.jsonl", "--gt", "data/gt.jsonl"],
    );
    assert_eq!(code(&out), 3);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("scene0004"), "{err}");
}

#[test]
fn configuration_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir);
    std::fs::write(dir.join("bad.toml"), "[eval]\nalignment = \"magic\"\n").unwrap();
    let out = depthkit(
        dir,
        &[
            "--config",
            "bad.toml",
            "evaluate",
            "--pred",
            "data/noisy.jsonl",
            "--gt",
            "data/gt.jsonl",
        ],
    );
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    std::fs::write(dir.join("range.toml"), "[voting]\nratio_threshold = 0.5\n").unwrap();
    let out = depthkit(
        dir,
        &[
            "--config",
            "range.toml",
            "evaluate",
            "--pred",
            "data/noisy.jsonl",
            "--gt",
            "data/gt.jsonl",
        ],
    );
    assert_eq!(code(&out), 2);
    let out = depthkit(
        dir,
        &[
            "curate",
            "--pred",
            "data/noisy.jsonl",
            "--gt",
            "data/identity.jsonl",
            "--out",
            "c",
            "--n-fraction",
            "1.5",
        ],
    );
    assert_eq!(code(&out), 2);
    assert_eq!(code(&depthkit(dir, &["evaluate", "--bogus"])), 2);
    assert_eq!(
        code(&depthkit(dir, &["--config", "missing.toml", "table", "x.json"])),
        2
    );
}

#[test]
fn skipped_images_fail_unless_allowed() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir);
    // A prediction that is constant over the image cannot be aligned.
    let flat = vec![0.5f32; 64 * 48];
    let map = depthkit::core::DepthMap::from_values(64, 48, flat, depthkit::core::DepthKind::InverseRelative).unwrap();
    depthkit::depthio::save_depth(
        &map,
        &dir.join("data/models/noisy/scene0002.pfm"),
        depthkit::depthio::Format::Pfm,
    )
    .unwrap();
    let args = [
        "evaluate",
        "--pred",
        "data/noisy.jsonl",
        "--gt",
        "data/gt.jsonl",
        "--out",
        "ev",
    ];
    let out = depthkit(dir, &args);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("scene0002"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("ev/report.json")).unwrap()).unwrap();
    assert_eq!(report["images_skipped"], 1);
    assert_eq!(report["images_evaluated"], 9);
    let mut allowed = args.to_vec();
    allowed.push("--allow-skips");
    ok(dir, &allowed);
}

#[test]
fn curated_manifest_masks_the_requested_fraction() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir);
    ok(
        dir,
        &[
            "curate",
            "--pred",
            "data/noisy.jsonl",
            "--gt",
            "data/identity.jsonl",
            "--out",
            "cur",
            "--n-fraction",
            "0.25",
        ],
    );
    let curated = load_manifest(&dir.join("cur/curated.jsonl")).unwrap();
    assert_eq!(curated.len(), 10);
    let reports: Vec<CurationReport> = read_jsonl(&dir.join("cur/curation_reports.jsonl")).unwrap();
    for (entry, report) in curated.entries.iter().zip(&reports) {
        assert_eq!(report.pixels_masked, report.pixels_valid_before / 4);
        let map = curated.load_depth(entry).unwrap();
        assert_eq!(map.valid_count(), report.pixels_valid_before - report.pixels_masked);
    }
    // The curated labels are usable wherever predictions are.
    ok(
        dir,
        &["evaluate", "--pred", "cur/curated.jsonl", "--gt", "data/gt.jsonl"],
    );
}

#[test]
fn human_labels_flow_back_into_the_benchmark() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir);
    let line = build(dir, "inverted", "bench");
    assert!(!line.contains("queued 0,"), "{line}");
    let queue: Vec<PointPair> = read_jsonl(&dir.join("bench/queue.jsonl")).unwrap();
    assert!(!queue.is_empty());

    let unlabeled = depthkit(
        dir,
        &[
            "score-pairs",
            "--pred",
            "data/identity.jsonl",
            "--gt",
            "bench/benchmark.jsonl",
        ],
    );
    assert_eq!(code(&unlabeled), 3);

    // Three annotators agree with the ground truth on every queued pair.
    let gt = load_manifest(&dir.join("data/gt.jsonl")).unwrap();
    let clock: Clock = Arc::new(|| 0);
    let svc = Service::open(&dir.join("state"), 60_000, 500, clock).unwrap();
    svc.enqueue_new(queue.clone()).unwrap();
    for who in ["a", "b", "c"] {
        svc.register(who).unwrap();
        while let Some(task) = svc.claim_next(who).unwrap() {
            let depth = gt.load_depth(gt.get(&task.pair.image_id).unwrap()).unwrap();
            let w = depth.width();
            let d1 = depth.depth_at(task.pair.p1.index(w)).unwrap();
            let d2 = depth.depth_at(task.pair.p2.index(w)).unwrap();
            let decision = if d1 < d2 {
                Decision::FirstCloser
            } else {
                Decision::SecondCloser
            };
            svc.submit(who, &task.pair.pair_id, decision).unwrap();
        }
    }
    svc.flush().unwrap();
    drop(svc);

    let msg = ok(
        dir,
        &[
            "export-labels",
            "--gt",
            "bench/benchmark.jsonl",
            "--state",
            "state",
            "--out",
            "bench/final.jsonl",
        ],
    );
    assert!(msg.contains(&format!("updated {}", queue.len())), "{msg}");
    let pairs: Vec<PointPair> = read_jsonl(&dir.join("bench/final.jsonl")).unwrap();
    let human = pairs
        .iter()
        .filter(|p| p.label_source == LabelSource::HumanConsensus)
        .count();
    assert_eq!(human, queue.len());
    assert!(pairs.iter().all(|p| p.label != PairLabel::Unlabeled));
    ok(
        dir,
        &[
            "score-pairs",
            "--pred",
            "data/identity.jsonl",
            "--gt",
            "bench/final.jsonl",
            "--out",
            "acc",
        ],
    );
    let acc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("acc/accuracy.json")).unwrap()).unwrap();
    assert_eq!(acc["identity"]["accuracy"], 1.0);
}
