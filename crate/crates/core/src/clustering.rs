//! Clusterings, the sum-of-squares objective, and the normalized projector
//! `Z = X (X^T X)^{-1} X^T` that turns the objective into `tr(W) - <W, Z>`.

use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::DMatrix;

use crate::dataset::{squared_distance, Dataset, GramMatrix};
use crate::error::{Error, Result};

/// A total assignment of `n` points to `k` non-empty clusters, stored in
/// canonical form: labels appear in first-occurrence order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Clustering {
    labels: Vec<usize>,
    k: usize,
}

impl Clustering {
    /// Canonicalizes arbitrary labels; `k` is the number of distinct values.
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidClustering("empty label sequence".into()));
        }
        let mut map = std::collections::HashMap::new();
        let canonical: Vec<usize> = labels
            .iter()
            .map(|&l| {
                let next = map.len();
                *map.entry(l).or_insert(next)
            })
            .collect();
        Ok(Self {
            k: map.len(),
            labels: canonical,
        })
    }

    /// Like [`Clustering::from_labels`], but requires exactly `k` clusters.
    pub fn with_k(labels: &[usize], k: usize) -> Result<Self> {
        let c = Self::from_labels(labels)?;
        if c.k != k {
            return Err(Error::InvalidClustering(format!(
                "expected {k} non-empty clusters, found {}",
                c.k
            )));
        }
        Ok(c)
    }

    pub fn singletons(n: usize) -> Self {
        Self {
            labels: (0..n).collect(),
            k: n,
        }
    }

    pub fn single(n: usize) -> Self {
        Self {
            labels: vec![0; n],
            k: 1,
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Point indices of each cluster, in increasing order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            members[l].push(i);
        }
        members
    }

    pub fn same_cluster(&self, i: usize, j: usize) -> bool {
        self.labels[i] == self.labels[j]
    }

    /// Writes one integer label per line under a `label` header.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "label")?;
        for l in &self.labels {
            writeln!(writer, "{l}")?;
        }
        Ok(())
    }

    /// Reads a single-column label file. A non-numeric first line is taken
    /// as a header. Labels may be arbitrary text and are canonicalized.
    pub fn read_csv<R: Read>(source: R) -> Result<Self> {
        let mut ids: Vec<String> = Vec::new();
        for (idx, line) in BufReader::new(source).lines().enumerate() {
            let line = line?;
            let cell = line.trim();
            if cell.is_empty() {
                continue;
            }
            if cell.contains(',') {
                return Err(Error::parse(idx + 1, "expected a single column of labels"));
            }
            if idx == 0 && cell.parse::<i64>().is_err() && cell.eq_ignore_ascii_case("label") {
                continue;
            }
            ids.push(cell.to_string());
        }
        let mut index = std::collections::HashMap::new();
        let labels: Vec<usize> = ids
            .iter()
            .map(|id| {
                let next = index.len();
                *index.entry(id.as_str()).or_insert(next)
            })
            .collect();
        Self::from_labels(&labels)
    }

    pub(crate) fn check_n(&self, n: usize) -> Result<()> {
        if self.n() != n {
            return Err(Error::InvalidClustering(format!(
                "clustering has {} labels, dataset has {n} points",
                self.n()
            )));
        }
        Ok(())
    }
}

/// Cluster means and sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroids {
    m: usize,
    /// Row-major `k x m`.
    centers: Vec<f64>,
    sizes: Vec<usize>,
}

impl Centroids {
    /// Free-standing centers (e.g. from seeding); sizes are unknown and zero.
    pub fn from_centers(k: usize, m: usize, centers: Vec<f64>) -> Self {
        assert_eq!(centers.len(), k * m, "center buffer must be k*m");
        Self {
            m,
            centers,
            sizes: vec![0; k],
        }
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn center(&self, j: usize) -> &[f64] {
        &self.centers[j * self.m..(j + 1) * self.m]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Index and squared distance of the nearest center; ties go to the
    /// lowest index.
    pub fn nearest(&self, p: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for j in 0..self.k() {
            let d = squared_distance(p, self.center(j));
            if d < best.1 {
                best = (j, d);
            }
        }
        best
    }
}

pub fn centroids(dataset: &Dataset, clustering: &Clustering) -> Centroids {
    let m = dataset.m();
    let k = clustering.k();
    let mut centers = vec![0.0; k * m];
    let sizes = clustering.sizes();
    for (p, &l) in dataset.points().zip(clustering.labels()) {
        for (c, v) in centers[l * m..(l + 1) * m].iter_mut().zip(p) {
            *c += v;
        }
    }
    for (j, &s) in sizes.iter().enumerate() {
        for c in &mut centers[j * m..(j + 1) * m] {
            *c /= s as f64;
        }
    }
    Centroids { m, centers, sizes }
}

/// Sum of squared distances of points to their cluster centroid.
pub fn mssc_objective(dataset: &Dataset, clustering: &Clustering) -> f64 {
    let c = centroids(dataset, clustering);
    dataset
        .points()
        .zip(clustering.labels())
        .map(|(p, &l)| squared_distance(p, c.center(l)))
        .sum()
}

/// Per-cluster sum of squared deviations, by cluster index.
pub fn cluster_scatter(dataset: &Dataset, clustering: &Clustering) -> Vec<f64> {
    let c = centroids(dataset, clustering);
    let mut out = vec![0.0; clustering.k()];
    for (p, &l) in dataset.points().zip(clustering.labels()) {
        out[l] += squared_distance(p, c.center(l));
    }
    out
}

/// An `n x n` symmetric matrix in the projector space, either the exact
/// projector of a clustering or a relaxed solution.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorMatrix {
    z: DMatrix<f64>,
    k: usize,
}

impl ProjectorMatrix {
    pub fn new(z: DMatrix<f64>, k: usize) -> Self {
        Self { z, k }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }
}

pub fn projector_from_clustering(clustering: &Clustering) -> ProjectorMatrix {
    let n = clustering.n();
    let sizes = clustering.sizes();
    let labels = clustering.labels();
    let z = DMatrix::from_fn(n, n, |i, j| {
        if labels[i] == labels[j] {
            1.0 / sizes[labels[i]] as f64
        } else {
            0.0
        }
    });
    ProjectorMatrix { z, k: clustering.k() }
}

/// `tr(W) - <W, Z>`, the sum-of-squares value of a feasible `Z`.
pub fn objective_from_projector(gram: &GramMatrix, z: &ProjectorMatrix) -> f64 {
    gram.trace() - gram.matrix().dot(z.matrix())
}

/// Outcome of reading a clustering off a (possibly relaxed) projector.
#[derive(Debug, Clone, PartialEq)]
pub struct Recovery {
    pub clustering: Clustering,
    /// Whether the recovered cluster count equals the projector's `k`.
    pub matches_k: bool,
}

/// Default threshold separating co-clustered entries (at least `1/n`) from
/// zeros.
pub fn default_recovery_threshold(n: usize) -> f64 {
    0.5 / n as f64
}

/// Greedy sweep: the first unassigned point opens a new cluster and pulls
/// in every unassigned point `j` with `Z_ij > threshold`.
pub fn clustering_from_projector(z: &ProjectorMatrix, threshold: f64) -> Result<Recovery> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "recovery threshold must be positive, got {threshold}"
        )));
    }
    let n = z.n();
    let zm = z.matrix();
    let mut labels = vec![usize::MAX; n];
    let mut next = 0;
    for i in 0..n {
        if labels[i] != usize::MAX {
            continue;
        }
        labels[i] = next;
        for j in i + 1..n {
            if labels[j] == usize::MAX && zm[(i, j)] > threshold {
                labels[j] = next;
            }
        }
        next += 1;
    }
    let clustering = Clustering::from_labels(&labels)?;
    Ok(Recovery {
        matches_k: clustering.k() == z.k(),
        clustering,
    })
}

/// Stirling number of the second kind, as a float (exact below 2^53).
pub fn stirling2(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut row = vec![0.0f64; k + 1];
    row[0] = 1.0;
    for i in 1..=n {
        for j in (1..=k.min(i)).rev() {
            row[j] = j as f64 * row[j] + row[j - 1];
        }
        row[0] = 0.0;
    }
    row[k]
}

/// Largest partition count [`brute_force_optimum`] will enumerate.
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

/// Exhaustive optimum over all partitions into exactly `k` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactOptimum {
    pub clustering: Clustering,
    pub objective: f64,
    /// Number of partitions attaining the optimum (1 when unique).
    pub ties: usize,
}

/// Enumerates restricted-growth strings with exactly `k` blocks. Ties are
/// broken toward the lexicographically smallest canonical labelling, which
/// is the enumeration order.
pub fn brute_force_optimum(dataset: &Dataset, k: usize) -> Result<ExactOptimum> {
    brute_force_constrained(dataset, k, |_| true)
}

/// [`brute_force_optimum`] restricted to labellings accepted by `admissible`.
pub fn brute_force_constrained<F>(dataset: &Dataset, k: usize, admissible: F) -> Result<ExactOptimum>
where
    F: Fn(&[usize]) -> bool,
{
    let n = dataset.n();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k={k} must be in 1..={n}")));
    }
    let count = stirling2(n, k);
    if count > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            partitions: count,
            limit: BRUTE_FORCE_LIMIT,
        });
    }

    let mut labels = vec![0usize; n];
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut ties = 0;
    let mut scratch = Clustering::single(n);
    enumerate_rgs(&mut labels, 1, 1, k, &mut |rgs| {
        if !admissible(rgs) {
            return;
        }
        scratch.labels.copy_from_slice(rgs);
        scratch.k = k;
        let obj = mssc_objective(dataset, &scratch);
        match &best {
            Some((_, b)) if obj > *b + tie_tolerance(*b) => {}
            Some((_, b)) if obj >= *b - tie_tolerance(*b) => ties += 1,
            _ => {
                best = Some((rgs.to_vec(), obj));
                ties = 1;
            }
        }
    });
    let (labels, objective) = best.ok_or_else(|| {
        Error::InfeasibleConstraints("no admissible partition into k blocks".into())
    })?;
    Ok(ExactOptimum {
        clustering: Clustering { labels, k },
        objective,
        ties,
    })
}

fn tie_tolerance(v: f64) -> f64 {
    1e-12 * v.abs().max(1e-300)
}

fn enumerate_rgs<F: FnMut(&[usize])>(
    labels: &mut [usize],
    pos: usize,
    blocks: usize,
    k: usize,
    visit: &mut F,
) {
    let n = labels.len();
    if pos == n {
        if blocks == k {
            visit(labels);
        }
        return;
    }
    // Remaining positions must still be able to open the missing blocks.
    if n - pos < k - blocks {
        return;
    }
    let upper = blocks.min(k - 1);
    for l in 0..=upper {
        labels[pos] = l;
        enumerate_rgs(labels, pos + 1, blocks.max(l + 1), k, visit);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::gram;

    fn square() -> Dataset {
        Dataset::from_rows(
            "square",
            &[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
        )
        .unwrap()
    }

    #[test]
    fn canonical_labels() {
        let c = Clustering::from_labels(&[5, 5, 2, 7, 2]).unwrap();
        assert_eq!(c.labels(), &[0, 0, 1, 2, 1]);
        assert_eq!(c.k(), 3);
        assert!(Clustering::with_k(&[0, 0, 1], 3).is_err());
    }

    #[test]
    fn centroid_cases() {
        let d = Dataset::from_rows("t", &[vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
        let c = centroids(&d, &Clustering::single(2));
        assert_eq!(c.center(0), &[1.0, 0.0]);
        assert_eq!(c.sizes(), &[2]);
        let c = centroids(&d, &Clustering::singletons(2));
        assert_eq!(c.center(0), &[0.0, 0.0]);
        assert_eq!(c.center(1), &[2.0, 0.0]);

        // Left pair {(0,0),(0,1)} and right pair {(1,0),(1,1)}.
        let lr = Clustering::from_labels(&[0, 1, 0, 1]).unwrap();
        let c = centroids(&square(), &lr);
        assert_eq!(c.center(0), &[0.0, 0.5]);
        assert_eq!(c.center(1), &[1.0, 0.5]);
    }

    #[test]
    fn objective_cases() {
        let same = Dataset::from_rows("t", &vec![vec![3.0, -1.0]; 5]).unwrap();
        for k in 1..=5 {
            let labels: Vec<usize> = (0..5).map(|i| i % k).collect();
            let c = Clustering::from_labels(&labels).unwrap();
            assert_eq!(mssc_objective(&same, &c), 0.0);
        }
        let lr = Clustering::from_labels(&[0, 1, 0, 1]).unwrap();
        assert!((mssc_objective(&square(), &lr) - 1.0).abs() < 1e-15);

        let d = 3.7;
        let pair = Dataset::from_rows("t", &[vec![0.0], vec![d]]).unwrap();
        let obj = mssc_objective(&pair, &Clustering::single(2));
        assert!((obj - d * d / 2.0).abs() < 1e-12);
    }

    #[test]
    fn projector_cases() {
        let z = projector_from_clustering(&Clustering::single(2));
        assert_eq!(z.matrix(), &DMatrix::from_element(2, 2, 0.5));
        let z = projector_from_clustering(&Clustering::singletons(2));
        assert_eq!(z.matrix(), &DMatrix::identity(2, 2));
        let z = projector_from_clustering(&Clustering::from_labels(&[0, 0, 1]).unwrap());
        let expect =
            DMatrix::from_row_slice(3, 3, &[0.5, 0.5, 0.0, 0.5, 0.5, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(z.matrix(), &expect);
    }

    #[test]
    fn projector_objective_cases() {
        let d = square();
        let g = gram(&d);
        let id = ProjectorMatrix::new(DMatrix::identity(4, 4), 4);
        assert_eq!(objective_from_projector(&g, &id), 0.0);
        let lr = Clustering::from_labels(&[0, 1, 0, 1]).unwrap();
        let v = objective_from_projector(&g, &projector_from_clustering(&lr));
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn recovery_cases() {
        let c = Clustering::from_labels(&[0, 0, 1]).unwrap();
        let r = clustering_from_projector(&projector_from_clustering(&c), 1e-6).unwrap();
        assert_eq!(r.clustering.labels(), &[0, 0, 1]);
        assert!(r.matches_k);
        let id = ProjectorMatrix::new(DMatrix::identity(4, 4), 2);
        let r = clustering_from_projector(&id, 1e-6).unwrap();
        assert_eq!(r.clustering, Clustering::singletons(4));
        assert!(!r.matches_k);
        assert!(clustering_from_projector(&id, 0.0).is_err());
    }

    #[test]
    fn stirling_numbers() {
        assert_eq!(stirling2(4, 2), 7.0);
        assert_eq!(stirling2(10, 3), 9330.0);
        assert_eq!(stirling2(5, 5), 1.0);
        assert_eq!(stirling2(3, 4), 0.0);
    }

    #[test]
    fn brute_force_cases() {
        let best = brute_force_optimum(&square(), 2).unwrap();
        assert!((best.objective - 1.0).abs() < 1e-12);
        // {left, right} and {bottom, top} tie; lexicographically first wins.
        assert_eq!(best.ties, 2);
        assert_eq!(best.clustering.labels(), &[0, 0, 1, 1]);

        let best = brute_force_optimum(&square(), 4).unwrap();
        assert_eq!(best.objective, 0.0);
        assert_eq!(best.clustering, Clustering::singletons(4));

        let big = Dataset::new("big", 20, 1, (0..20).map(f64::from).collect()).unwrap();
        assert!(matches!(brute_force_optimum(&big, 5), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn rgs_enumeration_counts() {
        for n in 1..=8 {
            for k in 1..=n {
                let mut labels = vec![0; n];
                let mut count = 0usize;
                enumerate_rgs(&mut labels, 1, 1, k, &mut |rgs| {
                    assert_eq!(Clustering::from_labels(rgs).unwrap().labels(), rgs);
                    count += 1;
                });
                assert_eq!(count as f64, stirling2(n, k), "n={n} k={k}");
            }
        }
    }

    #[test]
    fn label_file_round_trip() {
        let c = Clustering::from_labels(&[0, 1, 1, 0, 2]).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(Clustering::read_csv(buf.as_slice()).unwrap(), c);
        let text = Clustering::read_csv("b\na\nb\n".as_bytes()).unwrap();
        assert_eq!(text.labels(), &[0, 1, 0]);
    }
}
