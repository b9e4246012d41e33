use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};

use exact_mssc::bnb::{solve_exact, SolveStatus, SolverConfig};
use exact_mssc::clustering::{mssc_objective, Clustering};
use exact_mssc::dataset::{gram, load};
use exact_mssc::experiment::generators::{generate, GeneratorKind};
use exact_mssc::experiment::report::{read_reports_csv, write_summary_csv, write_summary_markdown};
use exact_mssc::experiment::{
    any_limit_hit, load_config, pca_project, run_experiment, summarize_kopt, summary, write_outputs,
};
use exact_mssc::metrics::{MetricReport, MEASURES};
use exact_mssc::sdp::{cutting_loop_with, write_cuts_csv, write_matrix_csv, SdpProblem};
use exact_mssc::Error;

#[derive(Parser)]
#[command(name = "exact-mssc", version, about = "Certified-optimal sum-of-squares clustering")]
struct Cli {
    /// Log progress (repeat for more detail). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance to optimality and print the optimal labels.
    Solve {
        data: PathBuf,
        #[arg(long)]
        k: usize,
        /// CSV column holding reference labels (excluded from the features).
        #[arg(long)]
        labels: Option<String>,
        #[arg(long, default_value_t = 1e-6)]
        gap_tol: f64,
        /// Seconds.
        #[arg(long)]
        time_limit: Option<f64>,
        #[arg(long, default_value_t = 100_000)]
        node_limit: usize,
        #[arg(long, default_value_t = 1000)]
        max_nk: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the labels here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Write the root relaxation matrix and its cuts into this directory.
        #[arg(long)]
        dump_sdp: Option<PathBuf>,
    },
    /// Compare two label files and score the second against the data.
    Evaluate {
        data: PathBuf,
        reference: PathBuf,
        candidate: PathBuf,
        #[arg(long)]
        labels: Option<String>,
    },
    /// Run a k-sweep experiment described by a key=value config file.
    Experiment {
        config: PathBuf,
        /// Overrides the config's thread count.
        #[arg(long)]
        threads: Option<usize>,
        /// Overrides the config's output directory.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Tabulate how far each measure's best k lies from the reference k.
    Summarize {
        reports: PathBuf,
        #[arg(long)]
        markdown: bool,
    },
    /// Project onto the two leading principal components (CSV on stdout).
    Pca {
        data: PathBuf,
        #[arg(long)]
        labels: Option<String>,
    },
    /// Generate a labelled synthetic dataset (CSV on stdout).
    Gen {
        kind: GeneratorKind,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn existing(path: &Path) -> Result<&Path, Error> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::InvalidArgument(format!("{}: no such file", path.display())))
    }
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |v| format!("{v:?}"))
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Solve {
            data,
            k,
            labels,
            gap_tol,
            time_limit,
            node_limit,
            max_nk,
            seed,
            output,
            dump_sdp,
        } => {
            let dataset = load(existing(&data)?, labels.as_deref())?;
            if let Some(t) = time_limit {
                if !(t > 0.0 && t.is_finite()) {
                    return Err(Error::InvalidArgument("--time-limit must be positive".into()));
                }
            }
            let config = SolverConfig {
                gap_tol,
                node_limit,
                max_nk,
                rng_seed: seed,
                time_limit: time_limit.map(Duration::from_secs_f64),
                ..SolverConfig::default()
            };
            if let Some(dir) = dump_sdp {
                std::fs::create_dir_all(&dir)?;
                let g = gram(&dataset);
                let mut problem = SdpProblem::new(&g, k);
                let (res, _) = cutting_loop_with(&mut problem, &config.sdp, &config.cuts, None);
                write_matrix_csv(&res.z_relaxed, BufWriter::new(File::create(dir.join("z.csv"))?))?;
                write_cuts_csv(&problem.cuts, BufWriter::new(File::create(dir.join("cuts.csv"))?))?;
            }
            let res = solve_exact(&dataset, k, &config)?;
            eprintln!(
                "status={} objective={:?} lower_bound={:?} gap={:e} nodes={} seconds={:.3}",
                res.status.as_str(),
                res.objective,
                res.lower_bound,
                res.certified_gap,
                res.nodes_explored,
                res.wall_time.as_secs_f64()
            );
            let mut out = sink(output.as_deref())?;
            res.optimum.write_csv(&mut out)?;
            out.flush()?;
            Ok(if res.status == SolveStatus::Optimal {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Evaluate {
            data,
            reference,
            candidate,
            labels,
        } => {
            let dataset = load(existing(&data)?, labels.as_deref())?;
            let a = Clustering::read_csv(File::open(existing(&reference)?)?)?;
            let b = Clustering::read_csv(File::open(existing(&candidate)?)?)?;
            if a.n() != dataset.n() || b.n() != dataset.n() {
                return Err(Error::InvalidClustering(format!(
                    "label files have {} and {} entries, dataset has {} points",
                    a.n(),
                    b.n(),
                    dataset.n()
                )));
            }
            let r = MetricReport::evaluate(&dataset, &b, mssc_objective(&dataset, &b), Some(&a))?;
            let mut out = io::stdout().lock();
            writeln!(out, "k={}", r.k)?;
            for m in MEASURES {
                writeln!(out, "{m}={}", fmt(r.get(m)))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Experiment {
            config,
            threads,
            output,
        } => {
            let mut spec = load_config(existing(&config)?)?;
            if let Some(t) = threads {
                spec.threads = t.max(1);
            }
            if let Some(o) = output {
                spec.output_dir = o;
            }
            let results = run_experiment(&spec)?;
            write_outputs(&results, &spec.output_dir)?;
            eprintln!("wrote {}", spec.output_dir.display());
            Ok(if any_limit_hit(&results) {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Summarize { reports, markdown } => {
            let rows = read_reports_csv(File::open(existing(&reports)?)?)?;
            let table = summarize_kopt(&rows, &summary::DEFAULT_MEASURES);
            let out = io::stdout().lock();
            if markdown {
                write_summary_markdown(&table, out)?;
            } else {
                write_summary_csv(&table, out)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Pca { data, labels } => {
            let dataset = load(existing(&data)?, labels.as_deref())?;
            let p = pca_project(&dataset)?;
            let mut out = csv::Writer::from_writer(io::stdout().lock());
            let truth = dataset.truth_names();
            if truth.is_some() {
                out.write_record(["pc1", "pc2", "label"])?;
            } else {
                out.write_record(["pc1", "pc2"])?;
            }
            for i in 0..dataset.n() {
                let mut rec = vec![format!("{:?}", p.scores[(i, 0)]), format!("{:?}", p.scores[(i, 1)])];
                if let (Some(names), Some(ids)) = (truth, dataset.truth_labels()) {
                    rec.push(names[ids[i]].clone());
                }
                out.write_record(&rec)?;
            }
            out.flush()?;
            eprintln!("explained_pc1={:.6} explained_pc2={:.6}", p.explained[0], p.explained[1]);
            Ok(ExitCode::SUCCESS)
        }
        Command::Gen {
            kind,
            n,
            k,
            seed,
            output,
        } => {
            let d = generate(kind, n, k, seed)?;
            let mut out = sink(output.as_deref())?;
            d.write_csv(&mut out)?;
            out.flush()?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
