//! Rendering of metric reports as JSON and as a Markdown comparison
//! table.
//!
//! The table carries one row per design/method pair plus an aggregate
//! row per method when it spans several designs. Aggregate percentages
//! come from mean counts over mean totals, not from averaging the
//! per-row percentages, so they stay consistent with the counts shown
//! beside them.

use std::fs;
use std::path::Path;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluate::MetricsReport;

pub const REPORT_SCHEMA: &str = "report/v1";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("report schema mismatch: found `{found}`")]
    BadSchema { found: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema: String,
    pub reports: Vec<MetricsReport>,
}

pub fn reports_to_json(reports: &[MetricsReport]) -> Result<String, ReportError> {
    let file = ReportFile {
        schema: REPORT_SCHEMA.to_string(),
        reports: reports.to_vec(),
    };
    let mut out = serde_json::to_string_pretty(&file)?;
    out.push('\n');
    Ok(out)
}

pub fn reports_from_json(src: &str) -> Result<Vec<MetricsReport>, ReportError> {
    let file: ReportFile = serde_json::from_str(src)?;
    if file.schema != REPORT_SCHEMA {
        return Err(ReportError::BadSchema { found: file.schema });
    }
    Ok(file.reports)
}

fn ratio_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn pct(count: f64, total: f64) -> f64 {
    if total == 0.0 {
        0.0
    } else {
        100.0 * count / total
    }
}

fn escape_cell(s: &str) -> String {
    s.replace('|', "\\|")
}

/// Column order of the summary table, fixed so downstream diffs stay stable.
pub const COLUMNS: [&str; 8] = [
    "Design",
    "Method",
    "#SVAs Gen.",
    "Syntax Correctness (%)",
    "Functional Correctness (%)",
    "Avg. Mutation Score",
    "MDR (%)",
    "FPR (%)",
];

fn row_cells(r: &MetricsReport) -> [String; 8] {
    let generated = r.svas_generated as f64;
    [
        escape_cell(&r.design),
        escape_cell(&r.method),
        format!("{}", r.svas_generated),
        format!(
            "{} ({:.1}%)",
            r.syntax_correct,
            pct(r.syntax_correct as f64, generated)
        ),
        format!(
            "{} ({:.1}%)",
            r.functional_correct,
            pct(r.functional_correct as f64, generated)
        ),
        format!("{:.2}", ratio_f64(r.avg_mutation_score)),
        format!("{:.1}", 100.0 * ratio_f64(r.mdr)),
        format!("{:.1}", 100.0 * ratio_f64(r.fpr)),
    ]
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    values.sum::<f64>() / n as f64
}

fn aggregate_cells(method: &str, group: &[&MetricsReport]) -> [String; 8] {
    let n = group.len();
    // Percentages divide the printed one-decimal means, so the row is
    // internally consistent for a reader checking the arithmetic.
    let round1 = |x: f64| (x * 10.0).round() / 10.0;
    let gen_mean = round1(mean(group.iter().map(|r| r.svas_generated as f64), n));
    let syn_mean = round1(mean(group.iter().map(|r| r.syntax_correct as f64), n));
    let fun_mean = round1(mean(group.iter().map(|r| r.functional_correct as f64), n));
    let score_mean = mean(group.iter().map(|r| ratio_f64(r.avg_mutation_score)), n);
    let mdr_mean = mean(group.iter().map(|r| 100.0 * ratio_f64(r.mdr)), n);
    let fpr_mean = mean(group.iter().map(|r| 100.0 * ratio_f64(r.fpr)), n);
    [
        "Avg.".to_string(),
        escape_cell(method),
        format!("{gen_mean:.1}"),
        format!("{syn_mean:.1} ({:.1}%)", pct(syn_mean, gen_mean)),
        format!("{fun_mean:.1} ({:.1}%)", pct(fun_mean, gen_mean)),
        format!("{score_mean:.2}"),
        format!("{mdr_mean:.1}"),
        format!("{fpr_mean:.1}"),
    ]
}

fn push_row(out: &mut String, cells: &[String; 8]) {
    out.push('|');
    for cell in cells {
        out.push(' ');
        out.push_str(cell);
        out.push_str(" |");
    }
    out.push('\n');
}

/// Renders the comparison table plus a per-report detail section with
/// each assertion's mutation score and the post-prune average. Output
/// depends only on the report values.
pub fn render_markdown(reports: &[MetricsReport]) -> String {
    let mut out = String::from("# Assertion Quality Report\n\n");
    out.push('|');
    for col in COLUMNS {
        out.push(' ');
        out.push_str(col);
        out.push_str(" |");
    }
    out.push('\n');
    out.push('|');
    for _ in COLUMNS {
        out.push_str(" --- |");
    }
    out.push('\n');
    for r in reports {
        push_row(&mut out, &row_cells(r));
    }

    let mut methods: Vec<&str> = Vec::new();
    for r in reports {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    for method in methods {
        let group: Vec<&MetricsReport> =
            reports.iter().filter(|r| r.method == method).collect();
        if group.len() > 1 {
            push_row(&mut out, &aggregate_cells(method, &group));
        }
    }

    for r in reports {
        out.push_str(&format!("\n## {} / {}\n\n", r.design, r.method));
        out.push_str(&format!(
            "Average mutation score over the pruned set: {:.2}\n",
            ratio_f64(r.avg_mutation_score_pruned)
        ));
        if !r.per_assertion_scores.is_empty() {
            out.push_str("\nPer-assertion mutation scores:\n\n");
            for (id, score) in &r.per_assertion_scores {
                out.push_str(&format!("- {id}: {score}\n"));
            }
        }
    }
    out
}

/// Writes `report.json` and `report.md` into `dir`, creating it if
/// needed.
pub fn write_report(dir: &Path, reports: &[MetricsReport]) -> Result<(), ReportError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), reports_to_json(reports)?)?;
    fs::write(dir.join("report.md"), render_markdown(reports))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn report(
        design: &str,
        method: &str,
        generated: usize,
        syntax: usize,
        functional: usize,
        avg: Ratio<u64>,
        mdr: Ratio<u64>,
        fpr: Ratio<u64>,
    ) -> MetricsReport {
        MetricsReport {
            design: design.into(),
            method: method.into(),
            svas_generated: generated,
            syntax_correct: syntax,
            functional_correct: functional,
            per_assertion_scores: BTreeMap::new(),
            avg_mutation_score: avg,
            avg_mutation_score_pruned: avg,
            mdr,
            fpr,
        }
    }

    #[test]
    fn row_formats_counts_with_percentages() {
        let r = report(
            "i2c",
            "pipeline",
            92,
            90,
            81,
            Ratio::new(63, 100),
            Ratio::new(843, 1000),
            Ratio::new(32, 1000),
        );
        let cells = row_cells(&r);
        assert_eq!(cells[2], "92");
        assert_eq!(cells[3], "90 (97.8%)");
        assert_eq!(cells[4], "81 (88.0%)");
        assert_eq!(cells[5], "0.63");
        assert_eq!(cells[6], "84.3");
        assert_eq!(cells[7], "3.2");
    }

    #[test]
    fn aggregate_row_recomputes_percent_from_mean_counts() {
        let rows = vec![
            report("a", "m", 92, 90, 81, Ratio::new(63, 100), Ratio::new(843, 1000), Ratio::new(32, 1000)),
            report("b", "m", 134, 132, 118, Ratio::new(61, 100), Ratio::new(872, 1000), Ratio::new(28, 1000)),
            report("c", "m", 215, 209, 187, Ratio::new(59, 100), Ratio::new(854, 1000), Ratio::new(35, 1000)),
        ];
        let group: Vec<&MetricsReport> = rows.iter().collect();
        let cells = aggregate_cells("m", &group);
        assert_eq!(cells[0], "Avg.");
        assert_eq!(cells[2], "147.0");
        // 143.7 / 147.0 = 97.8, matching the displayed counts; the
        // unrounded ratio 431/441 would print 97.7 and disagree with
        // the row it sits in.
        assert_eq!(cells[3], "143.7 (97.8%)");
        assert_eq!(cells[4], "128.7 (87.6%)");
        assert_eq!(cells[5], "0.61");
        assert_eq!(cells[6], "85.6");
        assert_eq!(cells[7], "3.2");
    }

    #[test]
    fn markdown_has_the_full_column_set_and_is_stable() {
        let mut r = report(
            "counter",
            "pipeline",
            2,
            2,
            2,
            Ratio::new(3, 2),
            Ratio::new(1, 1),
            Ratio::new(0, 1),
        );
        r.per_assertion_scores.insert("a001".into(), 2);
        r.per_assertion_scores.insert("a002".into(), 1);
        let md = render_markdown(&[r.clone()]);
        let header = md.lines().nth(2).unwrap();
        for col in COLUMNS {
            assert!(header.contains(col), "missing column {col}");
        }
        assert!(md.contains("| counter | pipeline | 2 | 2 (100.0%) | 2 (100.0%) | 1.50 | 100.0 | 0.0 |"));
        assert!(md.contains("- a001: 2"));
        assert!(md.contains("pruned set: 1.50"));
        // No aggregate row for a single design.
        assert!(!md.contains("Avg. |"));
        assert_eq!(md, render_markdown(&[r]));
    }

    #[test]
    fn zero_generated_divides_safely() {
        let r = report(
            "empty",
            "pipeline",
            0,
            0,
            0,
            Ratio::new(0, 1),
            Ratio::new(0, 1),
            Ratio::new(0, 1),
        );
        assert_eq!(row_cells(&r)[3], "0 (0.0%)");
    }

    #[test]
    fn json_round_trips_and_checks_schema() {
        let rows = vec![report(
            "counter",
            "pipeline",
            2,
            2,
            1,
            Ratio::new(3, 2),
            Ratio::new(1, 1),
            Ratio::new(0, 1),
        )];
        let json = reports_to_json(&rows).unwrap();
        assert!(json.contains("\"schema\": \"report/v1\""));
        let back = reports_from_json(&json).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].design, "counter");
        let bad = json.replace("report/v1", "report/v0");
        assert!(matches!(
            reports_from_json(&bad),
            Err(ReportError::BadSchema { .. })
        ));
    }

    #[test]
    fn pipe_characters_in_names_are_escaped() {
        let r = report(
            "a|b",
            "m",
            1,
            1,
            1,
            Ratio::new(1, 1),
            Ratio::new(1, 1),
            Ratio::new(0, 1),
        );
        assert_eq!(row_cells(&r)[0], "a\\|b");
    }

    #[test]
    fn write_report_emits_both_files() {
        let dir = std::env::temp_dir().join(format!("report-test-{}", std::process::id()));
        let rows = vec![report(
            "counter",
            "pipeline",
            1,
            1,
            1,
            Ratio::new(1, 1),
            Ratio::new(1, 1),
            Ratio::new(0, 1),
        )];
        write_report(&dir, &rows).unwrap();
        assert!(dir.join("report.json").exists());
        assert!(dir.join("report.md").exists());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
