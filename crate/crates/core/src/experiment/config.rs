//! `key = value` experiment configuration files.
//!
//! ```text
//! # comments start with '#'
//! dataset = data/iris.arff
//! labels = class              # label column for CSV datasets listed after it
//! generate = blobs n=60 k=4 seed=1
//! k_window = 2
//! gap_tol = 1e-6
//! node_limit = 100000
//! time_limit = 600            # seconds per solve
//! max_nk = 1000
//! seed = 0
//! threads = 1
//! output = results
//! ```
//!
//! `dataset` and `generate` may repeat; every other key keeps its last value.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use crate::bnb::SolverConfig;
use crate::error::{Error, Result};

use super::generators::GeneratorKind;

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    File {
        path: PathBuf,
        label_column: Option<String>,
    },
    Generated {
        kind: GeneratorKind,
        n: usize,
        k: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub datasets: Vec<DatasetSource>,
    /// Sweep covers `k >= 2` with `|k - k_true| <= k_window`.
    pub k_window: usize,
    pub solver: SolverConfig,
    pub output_dir: PathBuf,
    pub rng_seed: u64,
    /// Datasets processed concurrently; results do not depend on it.
    pub threads: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            datasets: Vec::new(),
            k_window: 2,
            solver: SolverConfig::default(),
            output_dir: PathBuf::from("results"),
            rng_seed: 0,
            threads: 1,
        }
    }
}

fn value<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| Error::Config {
        line,
        message: format!("invalid value {raw:?} for {key}"),
    })
}

fn parse_generate(line: usize, raw: &str) -> Result<DatasetSource> {
    let mut words = raw.split_whitespace();
    let kind = words
        .next()
        .ok_or_else(|| Error::Config {
            line,
            message: "generate needs a generator name".into(),
        })?
        .parse()
        .map_err(|e: Error| Error::Config {
            line,
            message: e.to_string(),
        })?;
    let (mut n, mut k, mut seed) = (None, None, 0);
    for word in words {
        let (key, v) = word.split_once('=').ok_or_else(|| Error::Config {
            line,
            message: format!("expected key=value, found {word:?}"),
        })?;
        match key {
            "n" => n = Some(value(line, key, v)?),
            "k" => k = Some(value(line, key, v)?),
            "seed" => seed = value(line, key, v)?,
            _ => {
                return Err(Error::Config {
                    line,
                    message: format!("unknown generator parameter {key:?}"),
                })
            }
        }
    }
    match (n, k) {
        (Some(n), Some(k)) => Ok(DatasetSource::Generated { kind, n, k, seed }),
        _ => Err(Error::Config {
            line,
            message: "generate needs n= and k=".into(),
        }),
    }
}

/// Parses a configuration; relative dataset and output paths are taken
/// relative to `base`.
pub fn parse_config(text: &str, base: &Path) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::default();
    let mut output = None;
    let mut labels: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, v) = content.split_once('=').ok_or_else(|| Error::Config {
            line,
            message: format!("expected key = value, found {content:?}"),
        })?;
        let (key, v) = (key.trim(), v.trim());
        match key {
            "dataset" => spec.datasets.push(DatasetSource::File {
                path: base.join(v),
                label_column: labels.clone(),
            }),
            "labels" => labels = (!v.is_empty()).then(|| v.to_string()),
            "generate" => spec.datasets.push(parse_generate(line, v)?),
            "k_window" => spec.k_window = value(line, key, v)?,
            "gap_tol" => spec.solver.gap_tol = value(line, key, v)?,
            "node_limit" => spec.solver.node_limit = value(line, key, v)?,
            "time_limit" => {
                let secs: f64 = value(line, key, v)?;
                if !(secs > 0.0 && secs.is_finite()) {
                    return Err(Error::Config {
                        line,
                        message: "time_limit must be a positive number of seconds".into(),
                    });
                }
                spec.solver.time_limit = Some(Duration::from_secs_f64(secs));
            }
            "max_nk" => spec.solver.max_nk = value(line, key, v)?,
            "seed" => {
                spec.rng_seed = value(line, key, v)?;
                spec.solver.rng_seed = spec.rng_seed;
            }
            "threads" => spec.threads = value::<usize>(line, key, v)?.max(1),
            "output" => output = Some(base.join(v)),
            _ => {
                return Err(Error::Config {
                    line,
                    message: format!("unknown key {key:?}"),
                })
            }
        }
    }
    if spec.datasets.is_empty() {
        return Err(Error::Config {
            line: text.lines().count(),
            message: "no dataset or generate entries".into(),
        });
    }
    if !(spec.solver.gap_tol >= 0.0) {
        return Err(Error::Config {
            line: 0,
            message: "gap_tol must be >= 0".into(),
        });
    }
    spec.output_dir = output.unwrap_or_else(|| base.join("results"));
    Ok(spec)
}

pub fn load_config(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let text = "\
# sweep
dataset = a.csv
labels = class
dataset = b.csv   # with labels
generate = spirals n=30 k=3 seed=7
k_window = 1
gap_tol = 1e-5
time_limit = 2.5
seed = 11
threads = 4
output = out
";
        let spec = parse_config(text, Path::new("/cfg")).unwrap();
        assert_eq!(
            spec.datasets,
            vec![
                DatasetSource::File {
                    path: "/cfg/a.csv".into(),
                    label_column: None
                },
                DatasetSource::File {
                    path: "/cfg/b.csv".into(),
                    label_column: Some("class".into())
                },
                DatasetSource::Generated {
                    kind: GeneratorKind::Spirals,
                    n: 30,
                    k: 3,
                    seed: 7
                },
            ]
        );
        assert_eq!(spec.k_window, 1);
        assert_eq!(spec.solver.gap_tol, 1e-5);
        assert_eq!(spec.solver.time_limit, Some(Duration::from_millis(2500)));
        assert_eq!((spec.rng_seed, spec.solver.rng_seed, spec.threads), (11, 11, 4));
        assert_eq!(spec.output_dir, PathBuf::from("/cfg/out"));
    }

    #[test]
    fn reports_offending_line() {
        for (text, line) in [
            ("generate = blobs n=5 k=2\nk_window = two\n", 2),
            ("bogus = 1\n", 1),
            ("generate = rings n=5 k=2\n", 1),
            ("generate = blobs n=5\n", 1),
            ("\n\nno equals sign\n", 3),
        ] {
            match parse_config(text, Path::new(".")) {
                Err(Error::Config { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
        assert!(parse_config("k_window = 2\n", Path::new(".")).is_err());
    }
}
