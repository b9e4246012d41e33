//! Synthetic labelled datasets.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    Blobs,
    Spirals,
    Overlap,
}

impl GeneratorKind {
    pub fn name(&self) -> &'static str {
        match self {
            GeneratorKind::Blobs => "blobs",
            GeneratorKind::Spirals => "spirals",
            GeneratorKind::Overlap => "overlap",
        }
    }
}

impl std::str::FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blobs" => Ok(GeneratorKind::Blobs),
            "spirals" => Ok(GeneratorKind::Spirals),
            "overlap" => Ok(GeneratorKind::Overlap),
            _ => Err(Error::InvalidArgument(format!("unknown generator {s:?}"))),
        }
    }
}

/// Dispatches to the generator with its default shape parameters.
pub fn generate(kind: GeneratorKind, n: usize, k: usize, seed: u64) -> Result<Dataset> {
    match kind {
        GeneratorKind::Blobs => gaussian_blobs(n, k, 10.0, 1.0, seed),
        GeneratorKind::Spirals => spirals(n, k, 0.05, seed),
        GeneratorKind::Overlap => gaussian_blobs(n, k, 2.0, 1.0, seed),
    }
}

fn check(n: usize, k: usize) -> Result<()> {
    if k == 0 || n < k {
        return Err(Error::InvalidArgument(format!("need 1 <= k <= n, got n={n}, k={k}")));
    }
    Ok(())
}

fn cluster_sizes(n: usize, k: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..k).map(move |j| (j, n / k + usize::from(j < n % k)))
}

fn finish(name: String, rows: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Dataset> {
    Dataset::from_rows(name, &rows)?
        .with_feature_names(vec!["x".into(), "y".into()])?
        .with_labels(&labels.iter().map(usize::to_string).collect::<Vec<_>>())
}

/// Isotropic 2-D Gaussians of standard deviation `spread` whose centres sit
/// on a regular polygon with neighbouring centres `separation` apart.
/// Points are emitted cluster by cluster with near-equal sizes.
pub fn gaussian_blobs(n: usize, k: usize, separation: f64, spread: f64, seed: u64) -> Result<Dataset> {
    check(n, k)?;
    if !(separation >= 0.0 && spread > 0.0) {
        return Err(Error::InvalidArgument("separation must be >= 0 and spread > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spread).expect("positive spread");
    let radius = if k > 1 { separation / (2.0 * (TAU / (2.0 * k as f64)).sin()) } else { 0.0 };
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (j, size) in cluster_sizes(n, k) {
        let angle = TAU * j as f64 / k as f64;
        let (cx, cy) = (radius * angle.cos(), radius * angle.sin());
        for _ in 0..size {
            rows.push(vec![cx + noise.sample(&mut rng), cy + noise.sample(&mut rng)]);
            labels.push(j);
        }
    }
    let kind = if separation / spread >= 10.0 { "blobs" } else { "overlap" };
    finish(format!("{kind}-n{n}-k{k}-s{seed}"), rows, labels)
}

/// `k` interleaved Archimedean spiral arms around the origin, each turning
/// once, with Gaussian jitter of standard deviation `noise`.
pub fn spirals(n: usize, k: usize, noise: f64, seed: u64) -> Result<Dataset> {
    check(n, k)?;
    if !(noise >= 0.0) {
        return Err(Error::InvalidArgument("noise must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).expect("positive noise");
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (j, size) in cluster_sizes(n, k) {
        let offset = TAU * j as f64 / k as f64;
        for p in 0..size {
            let t = 0.15 + 0.85 * (p as f64 + rng.random::<f64>()) / size as f64;
            let angle = offset + TAU * t;
            rows.push(vec![
                t * angle.cos() + jitter.sample(&mut rng),
                t * angle.sin() + jitter.sample(&mut rng),
            ]);
            labels.push(j);
        }
    }
    finish(format!("spirals-n{n}-k{k}-s{seed}"), rows, labels)
}
