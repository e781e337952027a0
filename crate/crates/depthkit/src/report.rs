//! Aligned-column text tables.

use depthkit_core::benchmark::{AccuracyReport, Scenario};
use depthkit_core::metrics::{DepthErrors, EvalConfig, LabelComparison, MetricReport};

/// Published large-model figures, printed for orientation only.
pub const RELATIVE_DEPTH_ANCHOR: &str = "reference: ViT-L on KITTI reaches AbsRel 0.074, d1 0.946";
pub const PAIR_ACCURACY_ANCHOR: &str = "reference: ViT-G reaches 97.4% pair accuracy";

/// Left-aligned first column, right-aligned numbers, two spaces between.
pub fn render_table(header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut width = vec![0; cols];
    for row in std::iter::once(header).chain(rows.iter().map(Vec::as_slice)) {
        for (i, cell) in row.iter().enumerate().take(cols) {
            width[i] = width[i].max(cell.chars().count());
        }
    }
    let line = |row: &[String]| {
        let mut out = String::new();
        for (i, cell) in row.iter().enumerate().take(cols) {
            if i > 0 {
                out.push_str("  ");
            }
            let pad = width[i] - cell.chars().count();
            if i == 0 {
                out.push_str(cell);
                out.push_str(&" ".repeat(pad));
            } else {
                out.push_str(&" ".repeat(pad));
                out.push_str(cell);
            }
        }
        out.trim_end().to_string() + "\n"
    };
    let mut out = line(header);
    let total: usize = width.iter().sum::<usize>() + 2 * (cols.saturating_sub(1));
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
    }
    out
}

fn error_cells(e: &DepthErrors) -> Vec<String> {
    [e.abs_rel, e.delta1, e.delta2, e.delta3, e.rmse, e.rmse_log, e.log10]
        .iter()
        .map(|v| format!("{v:.3}"))
        .collect()
}

fn error_header(first: &str) -> Vec<String> {
    [first, "AbsRel", "d1", "d2", "d3", "RMSE", "RMSE-log", "log10"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

/// Relative-depth table: one row per labelled report.
pub fn metric_table(cfg: &EvalConfig, rows: &[(&str, &MetricReport)]) -> String {
    let mut out = format!("# {}\n# {}\n", cfg.protocol_line(), RELATIVE_DEPTH_ANCHOR);
    let mut header = error_header("Method");
    header.push("Images".into());
    header.push("Skipped".into());
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(label, r)| {
            let mut row = vec![label.to_string()];
            row.extend(error_cells(&r.errors()));
            row.push(r.images_evaluated.to_string());
            row.push(r.images_skipped.to_string());
            row
        })
        .collect();
    out.push_str(&render_table(&header, &body));
    out
}

/// Per-image breakdown of one report.
pub fn per_image_table(report: &MetricReport) -> String {
    let mut header = error_header("Image");
    header.push("Pixels".into());
    let body: Vec<Vec<String>> = report
        .per_image
        .iter()
        .map(|r| {
            let mut row = vec![r.image_id.clone()];
            row.extend(error_cells(&r.errors));
            row.push(r.valid_pixels.to_string());
            row
        })
        .collect();
    render_table(&header, &body)
}

fn percent(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |a| format!("{:.1}", 100.0 * a))
}

/// Pair-accuracy table: one row per model, one column per scenario.
pub fn accuracy_table(rows: &[(&str, &AccuracyReport)]) -> String {
    let mut out = format!("# pair accuracy (%)\n# {PAIR_ACCURACY_ANCHOR}\n");
    let mut header = vec!["Model".to_string()];
    header.extend(Scenario::ALL.iter().map(|s| s.title().to_string()));
    header.push("Mean".into());
    header.push("Pairs".into());
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(label, r)| {
            let mut row = vec![label.to_string()];
            row.extend(r.per_scenario.iter().map(|s| percent(s.accuracy)));
            row.push(percent((r.total > 0).then_some(r.accuracy)));
            row.push(r.total.to_string());
            row
        })
        .collect();
    out.push_str(&render_table(&header, &body));
    out
}

/// Two label sources scored on the same data, with `b - a` deltas.
pub fn comparison_table(cfg: &EvalConfig, label_a: &str, label_b: &str, cmp: &LabelComparison) -> String {
    let mut out = format!("# {}\n", cfg.protocol_line());
    let rows = vec![
        std::iter::once(label_a.to_string())
            .chain(error_cells(&cmp.a.errors()))
            .collect(),
        std::iter::once(label_b.to_string())
            .chain(error_cells(&cmp.b.errors()))
            .collect(),
        std::iter::once("delta".to_string())
            .chain(
                [
                    cmp.delta.abs_rel,
                    cmp.delta.delta1,
                    cmp.delta.delta2,
                    cmp.delta.delta3,
                    cmp.delta.rmse,
                    cmp.delta.rmse_log,
                    cmp.delta.log10,
                ]
                .iter()
                .map(|v| format!("{v:+.3}")),
            )
            .collect(),
    ];
    out.push_str(&render_table(&error_header("Label"), &rows));
    out
}
