//! How often each measure's best k lands at, or near, the reference k.

use std::collections::BTreeMap;

use crate::metrics::{direction, Direction};

use super::ReportRow;

/// Every measure with a preferred direction, in table order.
pub const DEFAULT_MEASURES: [&str; 9] = ["AMI", "ARS", "h", "c", "NMI", "FMS", "CHC", "DBI", "S_score"];

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub measure: String,
    /// Datasets with `|k_true - k_opt|` equal to 0, 1 and 2.
    pub counts: [usize; 3],
    /// Datasets with a defined `k_opt`.
    pub datasets: usize,
}

impl SummaryRow {
    /// Bucket shares in percent of `datasets`.
    pub fn percents(&self) -> [f64; 3] {
        self.counts.map(|c| {
            if self.datasets == 0 {
                0.0
            } else {
                100.0 * c as f64 / self.datasets as f64
            }
        })
    }
}

/// The swept k at which `values` is best. Ties go to the k closest to
/// `k_true`, then to the smaller k.
pub fn k_opt(values: &[(usize, f64)], k_true: usize, dir: Direction) -> Option<usize> {
    let best = values.iter().map(|&(_, v)| v).filter(|v| !v.is_nan()).reduce(|a, b| match dir {
        Direction::Higher => a.max(b),
        Direction::Lower => a.min(b),
    })?;
    values
        .iter()
        .filter(|&&(_, v)| v == best)
        .map(|&(k, _)| k)
        .min_by_key(|&k| (k.abs_diff(k_true), k))
}

/// Rows are grouped by instance; an instance's reference row supplies
/// `k_true` and instances without one are skipped. Unknown measures and
/// measures without a direction yield rows with no datasets.
pub fn summarize_kopt(rows: &[ReportRow], measures: &[&str]) -> Vec<SummaryRow> {
    let mut by_instance: BTreeMap<&str, (Option<usize>, Vec<&ReportRow>)> = BTreeMap::new();
    for row in rows {
        let entry = by_instance.entry(row.instance.as_str()).or_default();
        if row.report.is_ground_truth_row {
            entry.0 = Some(row.report.k);
        } else {
            entry.1.push(row);
        }
    }
    measures
        .iter()
        .map(|&measure| {
            let mut out = SummaryRow {
                measure: measure.to_string(),
                counts: [0; 3],
                datasets: 0,
            };
            let Some(dir) = direction(measure) else {
                return out;
            };
            for (k_true, sweep) in by_instance.values() {
                let Some(k_true) = *k_true else { continue };
                let values: Vec<(usize, f64)> = sweep
                    .iter()
                    .filter_map(|r| r.report.get(measure).map(|v| (r.report.k, v)))
                    .collect();
                if let Some(k) = k_opt(&values, k_true, dir) {
                    out.datasets += 1;
                    if let Some(c) = out.counts.get_mut(k.abs_diff(k_true)) {
                        *c += 1;
                    }
                }
            }
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::MetricReport;

    fn row(instance: &str, k: usize, truth: bool, ars: Option<f64>) -> ReportRow {
        ReportRow {
            instance: instance.into(),
            report: MetricReport {
                k,
                d_sos: 1.0,
                is_ground_truth_row: truth,
                ami: None,
                ars,
                h: None,
                c: None,
                nmi: None,
                fms: None,
                chc: None,
                dbi: Some(0.5),
                s_score: None,
            },
        }
    }

    #[test]
    fn ties_prefer_true_k_then_smaller() {
        let vals = [(2, 0.5), (3, 0.9), (4, 0.9), (5, 0.9)];
        assert_eq!(k_opt(&vals, 4, Direction::Higher), Some(4));
        assert_eq!(k_opt(&vals, 6, Direction::Higher), Some(5));
        assert_eq!(k_opt(&[(3, 1.0), (5, 1.0)], 4, Direction::Higher), Some(3));
        assert_eq!(k_opt(&vals, 4, Direction::Lower), Some(2));
        assert_eq!(k_opt(&[], 4, Direction::Lower), None);
    }

    #[test]
    fn single_dataset_peaking_at_truth() {
        let rows = vec![
            row("a", 3, true, None),
            row("a", 2, false, Some(0.4)),
            row("a", 3, false, Some(1.0)),
            row("a", 4, false, Some(0.7)),
        ];
        let s = summarize_kopt(&rows, &["ARS", "DBI", "d_SOS"]);
        assert_eq!(s[0].percents(), [100.0, 0.0, 0.0]);
        // DBI is constant across the sweep, so the tie rule picks k_true.
        assert_eq!(s[1].counts, [1, 0, 0]);
        assert_eq!(s[2].datasets, 0);
    }
}
