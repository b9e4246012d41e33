//! Table writers and readers.
//!
//! CSV cells hold shortest round-trip floats and are blank where a measure
//! is absent. Markdown tables round to four decimals and bold each
//! measure's best value over a dataset's sweep.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::bnb::SolveStatus;
use crate::clustering::Clustering;
use crate::error::{Error, Result};
use crate::metrics::{direction, Direction, MetricReport, MEASURES};

use super::pca::Projection;
use super::summary::SummaryRow;
use super::{ReportRow, SolveRecord};

fn header() -> Vec<&'static str> {
    let mut h = vec!["instance", "k"];
    h.extend(MEASURES);
    h
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:?}"))
}

pub fn write_reports_csv<W: Write>(rows: &[ReportRow], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(header())?;
    for row in rows {
        let mut rec = vec![row.instance.clone(), row.report.k.to_string()];
        rec.extend(MEASURES.iter().map(|m| cell(row.report.get(m))));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a table written by [`write_reports_csv`]. Rows whose extrinsic
/// cells are all blank are reference rows.
pub fn read_reports_csv<R: Read>(source: R) -> Result<Vec<ReportRow>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let found: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if found != header() {
        return Err(Error::parse(1, format!("expected header {}", header().join(","))));
    }
    let mut rows = Vec::new();
    for (idx, rec) in reader.records().enumerate() {
        let line = idx + 2;
        let rec = rec?;
        let num = |i: usize| -> Result<Option<f64>> {
            let s = rec.get(i).unwrap_or("").trim();
            if s.is_empty() {
                return Ok(None);
            }
            s.parse()
                .map(Some)
                .map_err(|_| Error::parse(line, format!("non-numeric cell {s:?} in column {}", header()[i])))
        };
        let k: usize = rec
            .get(1)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::parse(line, "k must be a non-negative integer"))?;
        let d_sos = num(2)?.ok_or_else(|| Error::parse(line, "missing d_SOS"))?;
        let mut report = MetricReport {
            k,
            d_sos,
            is_ground_truth_row: false,
            ami: num(3)?,
            ars: num(4)?,
            h: num(5)?,
            c: num(6)?,
            nmi: num(7)?,
            fms: num(8)?,
            chc: num(9)?,
            dbi: num(10)?,
            s_score: num(11)?,
        };
        report.is_ground_truth_row = [report.ami, report.ars, report.h, report.c, report.nmi, report.fms]
            .iter()
            .all(Option::is_none);
        rows.push(ReportRow {
            instance: rec.get(0).unwrap_or("").to_string(),
            report,
        });
    }
    Ok(rows)
}

fn best_values(rows: &[ReportRow]) -> BTreeMap<(&str, &'static str), f64> {
    let mut best = BTreeMap::new();
    for row in rows.iter().filter(|r| !r.report.is_ground_truth_row) {
        for m in MEASURES {
            let (Some(dir), Some(v)) = (direction(m), row.report.get(m)) else { continue };
            best.entry((row.instance.as_str(), m))
                .and_modify(|b: &mut f64| {
                    *b = match dir {
                        Direction::Higher => b.max(v),
                        Direction::Lower => b.min(v),
                    }
                })
                .or_insert(v);
        }
    }
    best
}

pub fn write_reports_markdown<W: Write>(rows: &[ReportRow], mut out: W) -> Result<()> {
    let best = best_values(rows);
    writeln!(out, "| {} |", header().join(" | "))?;
    writeln!(out, "|{}", "---|".repeat(header().len()))?;
    for row in rows {
        let r = &row.report;
        let name = if r.is_ground_truth_row {
            format!("{} (ground truth)", row.instance)
        } else {
            row.instance.clone()
        };
        let mut cells = vec![name, r.k.to_string()];
        for m in MEASURES {
            cells.push(match r.get(m) {
                None => String::new(),
                Some(v) if !r.is_ground_truth_row && best.get(&(row.instance.as_str(), m)) == Some(&v) => {
                    format!("**{v:.4}**")
                }
                Some(v) => format!("{v:.4}"),
            });
        }
        writeln!(out, "| {} |", cells.join(" | "))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_solver_csv<W: Write>(records: &[SolveRecord], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["instance", "k", "status", "nodes_explored", "certified_gap"])?;
    for r in records {
        out.write_record([
            r.instance.clone(),
            r.k.to_string(),
            r.status.as_str().to_string(),
            r.nodes_explored.to_string(),
            format!("{:?}", r.certified_gap),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["measure", "datasets", "pct_diff_0", "pct_diff_1", "pct_diff_2"])?;
    for r in rows {
        let p = r.percents();
        out.write_record([
            r.measure.clone(),
            r.datasets.to_string(),
            format!("{:.2}", p[0]),
            format!("{:.2}", p[1]),
            format!("{:.2}", p[2]),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_summary_markdown<W: Write>(rows: &[SummaryRow], mut out: W) -> Result<()> {
    writeln!(out, "| measure | \\|k_true - k_opt\\| = 0 | = 1 | = 2 |")?;
    writeln!(out, "|---|---|---|---|")?;
    for r in rows {
        let p = r.percents();
        writeln!(out, "| {} | {:.2}% | {:.2}% | {:.2}% |", r.measure, p[0], p[1], p[2])?;
    }
    out.flush()?;
    Ok(())
}

/// Projected points with the reference labels and one optimum per swept k.
pub fn write_plot_csv<W: Write>(
    projection: &Projection,
    truth: &Clustering,
    ks: &[usize],
    optima: &[Clustering],
    writer: W,
) -> Result<()> {
    if ks.len() != optima.len() || truth.n() != projection.scores.nrows() {
        return Err(Error::InvalidArgument("plot columns do not line up".into()));
    }
    let mut out = csv::Writer::from_writer(writer);
    let mut head = vec!["pc1".to_string(), "pc2".to_string(), "truth".to_string()];
    head.extend(ks.iter().map(|k| format!("k{k}")));
    out.write_record(&head)?;
    for i in 0..truth.n() {
        let mut rec = vec![
            format!("{:?}", projection.scores[(i, 0)]),
            format!("{:?}", projection.scores[(i, 1)]),
            truth.labels()[i].to_string(),
        ];
        rec.extend(optima.iter().map(|c| c.labels()[i].to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// `status` column value back to a status.
pub fn parse_status(s: &str) -> Option<SolveStatus> {
    [SolveStatus::Optimal, SolveStatus::GapLimit, SolveStatus::NodeLimit, SolveStatus::TimeLimit]
        .into_iter()
        .find(|st| st.as_str() == s)
}
