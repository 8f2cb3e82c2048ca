//! Word recognition accuracy scoring and report rendering.
//!
//! `WRA(%) = ((W_TOT - W_err) / W_TOT) * 100`, reported per speaker with a
//! totals row computed from the summed counts (not the mean of row
//! percentages). Percentages print at two decimals, rounding half away
//! from zero.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::corpus::{CorpusManifest, Severity};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid counts: {w_err} errors out of {w_tot} words")]
    InvalidCounts { w_tot: u64, w_err: u64 },
    #[error("utterance {0:?} is not in the manifest")]
    UnknownUtterance(String),
    #[error("reports disagree: {0}")]
    MismatchedSpeakers(String),
    #[error("report line {line}: {msg}")]
    ParseError { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-speaker scoreboard line.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub speaker_id: String,
    pub severity: Severity,
    pub w_tot: u64,
    pub w_err: u64,
    pub wra_percent: f64,
}

/// Column sums plus their WRA.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalsRow {
    pub w_tot: u64,
    pub w_err: u64,
    pub wra_percent: f64,
}

/// Wall-clock stage durations for one system run.
#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    pub som_seconds: f64,
    pub mlp_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub system_name: String,
    pub rows: Vec<EvalRow>,
    pub totals: TotalsRow,
    pub timing: Option<Timing>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Text,
}

/// Word recognition accuracy in percent.
pub fn wra(w_tot: u64, w_err: u64) -> Result<f64, EvalError> {
    if w_tot == 0 || w_err > w_tot {
        return Err(EvalError::InvalidCounts { w_tot, w_err });
    }
    Ok((w_tot - w_err) as f64 / w_tot as f64 * 100.0)
}

/// Round to two decimals, halves away from zero.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn fmt2(x: f64) -> String {
    format!("{:.2}", round2(x))
}

/// Score a decode list against the manifest: per speaker, `W_TOT` counts
/// scored utterances and `W_err` counts wrong predictions. Utterances are
/// identified by their manifest `audio_path`.
pub fn score_decodes(
    decodes: &[(String, usize)],
    manifest: &CorpusManifest,
    system_name: &str,
) -> Result<EvalReport, EvalError> {
    let by_path: BTreeMap<&str, (&str, Severity, usize)> = manifest
        .records
        .iter()
        .map(|r| {
            (
                r.audio_path.as_str(),
                (r.speaker_id.as_str(), r.severity, r.word_id),
            )
        })
        .collect();

    let mut counts: BTreeMap<String, (Severity, u64, u64)> = BTreeMap::new();
    for (utt, predicted) in decodes {
        let (speaker, severity, truth) = by_path
            .get(utt.as_str())
            .ok_or_else(|| EvalError::UnknownUtterance(utt.clone()))?;
        let entry = counts
            .entry(speaker.to_string())
            .or_insert((*severity, 0, 0));
        entry.1 += 1;
        if predicted != truth {
            entry.2 += 1;
        }
    }

    let mut rows = Vec::with_capacity(counts.len());
    for (speaker_id, (severity, w_tot, w_err)) in counts {
        rows.push(EvalRow {
            speaker_id,
            severity,
            w_tot,
            w_err,
            wra_percent: wra(w_tot, w_err)?,
        });
    }
    report_from_rows(system_name, rows, None)
}

/// Assemble a report from per-speaker counts, recomputing the totals row.
pub fn report_from_rows(
    system_name: &str,
    rows: Vec<EvalRow>,
    timing: Option<Timing>,
) -> Result<EvalReport, EvalError> {
    let w_tot: u64 = rows.iter().map(|r| r.w_tot).sum();
    let w_err: u64 = rows.iter().map(|r| r.w_err).sum();
    let totals = TotalsRow {
        w_tot,
        w_err,
        wra_percent: wra(w_tot, w_err)?,
    };
    Ok(EvalReport {
        system_name: system_name.to_string(),
        rows,
        totals,
        timing,
    })
}

/// Aggregate a report's rows by severity.
pub fn severity_totals(report: &EvalReport) -> Vec<(Severity, u64, u64, f64)> {
    let mut acc: BTreeMap<Severity, (u64, u64)> = BTreeMap::new();
    for row in &report.rows {
        let e = acc.entry(row.severity).or_insert((0, 0));
        e.0 += row.w_tot;
        e.1 += row.w_err;
    }
    acc.into_iter()
        .map(|(sev, (t, e))| {
            let pct = wra(t, e).expect("row counts already validated");
            (sev, t, e, pct)
        })
        .collect()
}

fn check_aligned(reports: &[EvalReport]) -> Result<(), EvalError> {
    assert!(!reports.is_empty(), "need at least one report");
    let first = &reports[0];
    for other in &reports[1..] {
        if other.rows.len() != first.rows.len() {
            return Err(EvalError::MismatchedSpeakers(format!(
                "{} has {} rows, {} has {}",
                first.system_name,
                first.rows.len(),
                other.system_name,
                other.rows.len()
            )));
        }
        for (a, b) in first.rows.iter().zip(&other.rows) {
            if a.speaker_id != b.speaker_id {
                return Err(EvalError::MismatchedSpeakers(format!(
                    "row order differs: {} vs {}",
                    a.speaker_id, b.speaker_id
                )));
            }
            if a.w_tot != b.w_tot || a.severity != b.severity {
                return Err(EvalError::MismatchedSpeakers(format!(
                    "speaker {} differs between systems",
                    a.speaker_id
                )));
            }
        }
    }
    Ok(())
}

/// Side-by-side table over one or more systems: speaker, severity, total
/// words, per-system error counts, per-system WRA. The text format
/// appends a timing table when any report carries timing; the CSV format
/// never does, so identical runs stay byte-identical.
pub fn render_report(reports: &[EvalReport], format: ReportFormat) -> Result<String, EvalError> {
    check_aligned(reports)?;
    match format {
        ReportFormat::Csv => render_csv(reports),
        ReportFormat::Text => render_text(reports),
    }
}

fn render_csv(reports: &[EvalReport]) -> Result<String, EvalError> {
    let mut out = String::new();
    out.push_str("speaker,severity,total");
    for r in reports {
        write!(out, ",{}_errors", r.system_name).unwrap();
    }
    for r in reports {
        write!(out, ",{}_wra", r.system_name).unwrap();
    }
    out.push('\n');

    let first = &reports[0];
    for (i, row) in first.rows.iter().enumerate() {
        write!(out, "{},{},{}", row.speaker_id, row.severity, row.w_tot).unwrap();
        for r in reports {
            write!(out, ",{}", r.rows[i].w_err).unwrap();
        }
        for r in reports {
            write!(out, ",{}", fmt2(r.rows[i].wra_percent)).unwrap();
        }
        out.push('\n');
    }

    write!(out, "Total,-,{}", first.totals.w_tot).unwrap();
    for r in reports {
        write!(out, ",{}", r.totals.w_err).unwrap();
    }
    for r in reports {
        write!(out, ",{}", fmt2(r.totals.wra_percent)).unwrap();
    }
    out.push('\n');
    Ok(out)
}

fn render_text(reports: &[EvalReport]) -> Result<String, EvalError> {
    let first = &reports[0];
    let mut header = vec![
        "Speaker".to_string(),
        "Severity".to_string(),
        "Total".to_string(),
    ];
    for r in reports {
        header.push(format!("{} err", r.system_name));
    }
    for r in reports {
        header.push(format!("{} WRA", r.system_name));
    }

    let mut table: Vec<Vec<String>> = vec![header];
    for (i, row) in first.rows.iter().enumerate() {
        let mut line = vec![
            row.speaker_id.clone(),
            row.severity.to_string(),
            row.w_tot.to_string(),
        ];
        for r in reports {
            line.push(r.rows[i].w_err.to_string());
        }
        for r in reports {
            line.push(fmt2(r.rows[i].wra_percent));
        }
        table.push(line);
    }
    let mut line = vec![
        "Total".to_string(),
        "-".to_string(),
        first.totals.w_tot.to_string(),
    ];
    for r in reports {
        line.push(r.totals.w_err.to_string());
    }
    for r in reports {
        line.push(fmt2(r.totals.wra_percent));
    }
    table.push(line);

    let cols = table[0].len();
    let widths: Vec<usize> = (0..cols)
        .map(|c| table.iter().map(|row| row[c].len()).max().unwrap())
        .collect();
    let mut out = String::new();
    for row in &table {
        for (c, cell) in row.iter().enumerate() {
            if c > 0 {
                out.push_str("  ");
            }
            write!(out, "{cell:>width$}", width = widths[c]).unwrap();
        }
        out.push('\n');
    }

    if reports.iter().any(|r| r.timing.is_some()) {
        out.push('\n');
        out.push_str("System  SOM time (s)  Classifier time (s)  Total (s)  WRA\n");
        for r in reports {
            if let Some(t) = &r.timing {
                writeln!(
                    out,
                    "{}  {:.2}  {:.2}  {:.2}  {}",
                    r.system_name,
                    t.som_seconds,
                    t.mlp_seconds,
                    t.total_seconds,
                    fmt2(r.totals.wra_percent)
                )
                .unwrap();
            }
        }
    }
    Ok(out)
}

/// Timing table as CSV: `system,som_seconds,mlp_seconds,total_seconds,wra`.
/// Kept out of the main report so wall-clock noise never touches it.
pub fn render_timing_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("system,som_seconds,mlp_seconds,total_seconds,wra\n");
    for r in reports {
        if let Some(t) = &r.timing {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.system_name,
                t.som_seconds,
                t.mlp_seconds,
                t.total_seconds,
                fmt2(r.totals.wra_percent)
            )
            .unwrap();
        }
    }
    out
}

/// Parse a CSV produced by [`render_report`] back into one report per
/// system. Counts round-trip exactly; WRA is recomputed from them.
pub fn parse_report_csv(text: &str) -> Result<Vec<EvalReport>, EvalError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(EvalError::ParseError {
        line: 1,
        msg: "empty report".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 5 || cols[0] != "speaker" || cols[1] != "severity" || cols[2] != "total" {
        return Err(EvalError::ParseError {
            line: 1,
            msg: "unrecognized report header".into(),
        });
    }
    let n_sys = (cols.len() - 3) / 2;
    let systems: Vec<String> = cols[3..3 + n_sys]
        .iter()
        .map(|c| {
            c.strip_suffix("_errors")
                .map(str::to_string)
                .ok_or(EvalError::ParseError {
                    line: 1,
                    msg: format!("expected *_errors column, got {c}"),
                })
        })
        .collect::<Result<_, _>>()?;

    let mut rows_per_sys: Vec<Vec<EvalRow>> = vec![Vec::new(); n_sys];
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(EvalError::ParseError {
                line: lineno,
                msg: format!("expected {} fields, got {}", cols.len(), fields.len()),
            });
        }
        if fields[0] == "Total" {
            continue; // recomputed below
        }
        let severity = Severity::parse(fields[1]).ok_or(EvalError::ParseError {
            line: lineno,
            msg: format!("bad severity {:?}", fields[1]),
        })?;
        let w_tot: u64 = fields[2].parse().map_err(|e| EvalError::ParseError {
            line: lineno,
            msg: format!("bad total: {e}"),
        })?;
        for s in 0..n_sys {
            let w_err: u64 = fields[3 + s].parse().map_err(|e| EvalError::ParseError {
                line: lineno,
                msg: format!("bad error count: {e}"),
            })?;
            rows_per_sys[s].push(EvalRow {
                speaker_id: fields[0].to_string(),
                severity,
                w_tot,
                w_err,
                wra_percent: wra(w_tot, w_err).map_err(|_| EvalError::ParseError {
                    line: lineno,
                    msg: format!("error count {w_err} exceeds total {w_tot}"),
                })?,
            });
        }
    }

    systems
        .into_iter()
        .zip(rows_per_sys)
        .map(|(name, rows)| report_from_rows(&name, rows, None))
        .collect()
}

/// Minimal bar chart of per-speaker WRA, one bar per row plus a totals
/// bar.
pub fn write_wra_svg(path: impl AsRef<Path>, report: &EvalReport) -> Result<(), EvalError> {
    let bar_w = 28;
    let gap = 14;
    let chart_h = 220;
    let n = report.rows.len() + 1;
    let width = gap + n * (bar_w + gap);
    let height = chart_h + 60;

    let mut svg = String::new();
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\">"
    )
    .unwrap();
    writeln!(
        svg,
        "  <text x=\"{}\" y=\"16\" text-anchor=\"middle\" font-size=\"13\">{} word recognition accuracy (%)</text>",
        width / 2,
        report.system_name
    )
    .unwrap();

    let labels: Vec<(&str, f64)> = report
        .rows
        .iter()
        .map(|r| (r.speaker_id.as_str(), r.wra_percent))
        .chain(std::iter::once(("Total", report.totals.wra_percent)))
        .collect();
    for (i, (label, pct)) in labels.iter().enumerate() {
        let x = gap + i * (bar_w + gap);
        let h = (pct / 100.0 * chart_h as f64).round() as usize;
        let y = 30 + chart_h - h;
        writeln!(
            svg,
            "  <rect x=\"{x}\" y=\"{y}\" width=\"{bar_w}\" height=\"{h}\" fill=\"#4668a8\"/>"
        )
        .unwrap();
        writeln!(
            svg,
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"10\">{}</text>",
            x + bar_w / 2,
            30 + chart_h + 14,
            label
        )
        .unwrap();
        writeln!(
            svg,
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"9\">{}</text>",
            x + bar_w / 2,
            y.saturating_sub(4),
            fmt2(*pct)
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg)?;
    Ok(())
}
