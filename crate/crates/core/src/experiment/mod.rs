//! Experiment protocol: k sweeps around the reference number of clusters,
//! metric tables for optimal and reference clusterings, k_opt summaries and
//! plot data.

pub mod config;
pub mod generators;
pub mod pca;
pub mod report;
pub mod summary;

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::bnb::{solve_exact, SolveStatus, SolverConfig};
use crate::clustering::{mssc_objective, Clustering};
use crate::dataset::{load, Dataset};
use crate::error::{Error, Result};
use crate::metrics::MetricReport;

pub use config::{load_config, parse_config, DatasetSource, ExperimentSpec};
pub use pca::{pca_project, Projection};
pub use summary::{summarize_kopt, SummaryRow};

/// One line of a results table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub instance: String,
    pub report: MetricReport,
}

/// Solver outcome for one `(instance, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveRecord {
    pub instance: String,
    pub k: usize,
    pub status: SolveStatus,
    pub nodes_explored: usize,
    pub certified_gap: f64,
}

/// Everything produced for one dataset.
#[derive(Debug, Clone)]
pub struct DatasetResult {
    pub instance: String,
    pub k_true: usize,
    /// Reference row first, then one row per swept k in increasing order.
    pub rows: Vec<ReportRow>,
    pub solves: Vec<SolveRecord>,
    pub truth: Clustering,
    pub optima: Vec<Clustering>,
    pub projection: Option<Projection>,
}

/// `k >= 2` with `|k - k_true| <= window`, capped at `n`.
pub fn k_sweep(k_true: usize, n: usize, window: usize) -> Vec<usize> {
    (k_true.saturating_sub(window).max(2)..=(k_true + window).min(n)).collect()
}

pub fn materialize(source: &DatasetSource) -> Result<Dataset> {
    match source {
        DatasetSource::File { path, label_column } => load(path, label_column.as_deref()),
        DatasetSource::Generated { kind, n, k, seed } => generators::generate(*kind, *n, *k, *seed),
    }
}

/// Runs the sweep on one labelled dataset.
pub fn evaluate_dataset(dataset: &Dataset, window: usize, solver: &SolverConfig) -> Result<DatasetResult> {
    let labels = dataset
        .truth_labels()
        .ok_or_else(|| Error::MissingLabels(dataset.name().to_string()))?;
    let truth = Clustering::from_labels(labels)?;
    let k_true = truth.k();
    let instance = dataset.name().to_string();
    let mut rows = vec![ReportRow {
        instance: instance.clone(),
        report: MetricReport::evaluate(dataset, &truth, mssc_objective(dataset, &truth), None)?,
    }];
    let mut solves = Vec::new();
    let mut optima = Vec::new();
    for k in k_sweep(k_true, dataset.n(), window) {
        let res = solve_exact(dataset, k, solver)?;
        log::info!(
            "event=solved instance={instance} k={k} status={} objective={:.12e} nodes={} gap={:.3e}",
            res.status.as_str(),
            res.objective,
            res.nodes_explored,
            res.certified_gap
        );
        rows.push(ReportRow {
            instance: instance.clone(),
            report: MetricReport::evaluate(dataset, &res.optimum, res.objective, Some(&truth))?,
        });
        solves.push(SolveRecord {
            instance: instance.clone(),
            k,
            status: res.status,
            nodes_explored: res.nodes_explored,
            certified_gap: res.certified_gap,
        });
        optima.push(res.optimum);
    }
    Ok(DatasetResult {
        instance,
        k_true,
        rows,
        solves,
        truth,
        optima,
        projection: pca_project(dataset).ok(),
    })
}

/// Runs every dataset of the spec. Results are ordered by instance name
/// regardless of the thread count.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<DatasetResult>> {
    let datasets = spec
        .datasets
        .iter()
        .map(materialize)
        .collect::<Result<Vec<_>>>()?;
    let mut names = BTreeSet::new();
    for d in &datasets {
        if !names.insert(d.name()) {
            return Err(Error::InvalidArgument(format!("duplicate instance name {:?}", d.name())));
        }
        if d.truth_labels().is_none() {
            return Err(Error::MissingLabels(d.name().to_string()));
        }
    }

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<DatasetResult>>>> =
        Mutex::new((0..datasets.len()).map(|_| None).collect());
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(d) = datasets.get(i) else { break };
        let r = evaluate_dataset(d, spec.k_window, &spec.solver);
        slots.lock().expect("no worker panicked")[i] = Some(r);
    };
    let threads = spec.threads.clamp(1, datasets.len().max(1));
    if threads == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(worker);
            }
        });
    }
    let mut results = slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every dataset processed"))
        .collect::<Result<Vec<_>>>()?;
    results.sort_by(|a, b| a.instance.cmp(&b.instance));
    Ok(results)
}

pub fn all_rows(results: &[DatasetResult]) -> Vec<ReportRow> {
    results.iter().flat_map(|r| r.rows.iter().cloned()).collect()
}

/// Writes `reports.csv`, `reports.md`, `solver.csv`, `summary.csv`,
/// `summary.md` and one `<instance>_pca.csv` per dataset into `dir`.
pub fn write_outputs(results: &[DatasetResult], dir: &Path) -> Result<()> {
    use std::fs::File;
    use std::io::BufWriter;

    std::fs::create_dir_all(dir)?;
    let rows = all_rows(results);
    report::write_reports_csv(&rows, BufWriter::new(File::create(dir.join("reports.csv"))?))?;
    report::write_reports_markdown(&rows, BufWriter::new(File::create(dir.join("reports.md"))?))?;
    let solves: Vec<SolveRecord> = results.iter().flat_map(|r| r.solves.iter().cloned()).collect();
    report::write_solver_csv(&solves, BufWriter::new(File::create(dir.join("solver.csv"))?))?;
    let summary = summarize_kopt(&rows, &summary::DEFAULT_MEASURES);
    report::write_summary_csv(&summary, BufWriter::new(File::create(dir.join("summary.csv"))?))?;
    report::write_summary_markdown(&summary, BufWriter::new(File::create(dir.join("summary.md"))?))?;
    for r in results {
        if let Some(p) = &r.projection {
            let ks: Vec<usize> = r.optima.iter().map(Clustering::k).collect();
            let file = File::create(dir.join(format!("{}_pca.csv", r.instance)))?;
            report::write_plot_csv(p, &r.truth, &ks, &r.optima, BufWriter::new(file))?;
        }
    }
    Ok(())
}

/// True when some solve stopped short of a certified optimum.
pub fn any_limit_hit(results: &[DatasetResult]) -> bool {
    results
        .iter()
        .flat_map(|r| &r.solves)
        .any(|s| s.status != SolveStatus::Optimal)
}
