//! Clustering quality measures.
//!
//! Extrinsic measures compare two labelings through their contingency
//! table; intrinsic measures score one clustering against the geometry of
//! the data. Logarithms are natural throughout.

use crate::clustering::{centroids, mssc_objective, Clustering};
use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Joint counts of two labelings of the same points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Vec<Vec<usize>>,
    n: usize,
    row_sums: Vec<usize>,
    col_sums: Vec<usize>,
}

impl ContingencyTable {
    /// Builds a table from raw counts. Rows and columns summing to zero are kept.
    pub fn from_counts(counts: Vec<Vec<usize>>) -> Result<Self> {
        let cols = counts.first().map_or(0, Vec::len);
        if counts.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidArgument("ragged contingency table".into()));
        }
        let row_sums: Vec<usize> = counts.iter().map(|r| r.iter().sum()).collect();
        let col_sums: Vec<usize> = (0..cols).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        let n = row_sums.iter().sum();
        Ok(Self {
            counts,
            n,
            row_sums,
            col_sums,
        })
    }

    pub fn counts(&self) -> &[Vec<usize>] {
        &self.counts
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row_sums(&self) -> &[usize] {
        &self.row_sums
    }

    pub fn col_sums(&self) -> &[usize] {
        &self.col_sums
    }

    pub fn transpose(&self) -> Self {
        let counts = (0..self.col_sums.len())
            .map(|j| self.counts.iter().map(|r| r[j]).collect())
            .collect();
        Self {
            counts,
            n: self.n,
            row_sums: self.col_sums.clone(),
            col_sums: self.row_sums.clone(),
        }
    }

    fn cells(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().enumerate().map(move |(j, &c)| (i, j, c)))
    }
}

/// Rows index the clusters of `a`, columns those of `b`.
pub fn contingency(a: &Clustering, b: &Clustering) -> Result<ContingencyTable> {
    if a.n() != b.n() {
        return Err(Error::InvalidClustering(format!(
            "labelings cover {} and {} points",
            a.n(),
            b.n()
        )));
    }
    let mut counts = vec![vec![0; b.k()]; a.k()];
    for (&x, &y) in a.labels().iter().zip(b.labels()) {
        counts[x][y] += 1;
    }
    ContingencyTable::from_counts(counts)
}

fn entropy(sizes: &[usize], n: usize) -> f64 {
    let n = n as f64;
    -sizes
        .iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let p = s as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

fn nonempty(sums: &[usize]) -> usize {
    sums.iter().filter(|&&s| s > 0).count()
}

pub fn mutual_information(t: &ContingencyTable) -> f64 {
    if t.n == 0 {
        return 0.0;
    }
    let n = t.n as f64;
    let mi: f64 = t
        .cells()
        .filter(|&(_, _, c)| c > 0)
        .map(|(i, j, c)| {
            let c = c as f64;
            c / n * (n * c / (t.row_sums[i] as f64 * t.col_sums[j] as f64)).ln()
        })
        .sum();
    mi.max(0.0)
}

/// Expected mutual information of two labelings with the given marginals
/// under the hypergeometric model of random labelings.
pub fn expected_mutual_information(t: &ContingencyTable) -> f64 {
    let n = t.n;
    if n == 0 {
        return 0.0;
    }
    let mut ln_fact = vec![0.0; n + 1];
    for x in 1..=n {
        ln_fact[x] = ln_fact[x - 1] + (x as f64).ln();
    }
    let nf = n as f64;
    let mut emi = 0.0;
    for &a in t.row_sums.iter().filter(|&&a| a > 0) {
        for &b in t.col_sums.iter().filter(|&&b| b > 0) {
            let fixed = ln_fact[a] + ln_fact[b] + ln_fact[n - a] + ln_fact[n - b] - ln_fact[n];
            let lo = (a + b).saturating_sub(n).max(1);
            for nij in lo..=a.min(b) {
                let x = nij as f64;
                let ln_p = fixed
                    - ln_fact[nij]
                    - ln_fact[a - nij]
                    - ln_fact[b - nij]
                    - ln_fact[n + nij - a - b];
                emi += x / nf * (nf * x / (a as f64 * b as f64)).ln() * ln_p.exp();
            }
        }
    }
    emi
}

pub fn adjusted_mutual_information(t: &ContingencyTable) -> f64 {
    let (ka, kb) = (nonempty(&t.row_sums), nonempty(&t.col_sums));
    if ka == kb && ka <= 1 {
        return 1.0;
    }
    let mi = mutual_information(t);
    let emi = expected_mutual_information(t);
    let avg = 0.5 * (entropy(&t.row_sums, t.n) + entropy(&t.col_sums, t.n));
    let denom = avg - emi;
    if denom.abs() <= 1e-12 * avg.max(1.0) {
        return 1.0;
    }
    (mi - emi) / denom
}

fn choose2(x: usize) -> u128 {
    let x = x as u128;
    x * x.saturating_sub(1) / 2
}

/// Unordered point pairs: `(together in both, together in a only,
/// together in b only, apart in both)`.
pub fn pair_counts(t: &ContingencyTable) -> (u128, u128, u128, u128) {
    let both: u128 = t.cells().map(|(_, _, c)| choose2(c)).sum();
    let in_a: u128 = t.row_sums.iter().map(|&s| choose2(s)).sum();
    let in_b: u128 = t.col_sums.iter().map(|&s| choose2(s)).sum();
    let total = choose2(t.n);
    (both, in_a - both, in_b - both, total + both - in_a - in_b)
}

/// Adjusted Rand score from the four pair counts.
pub fn adjusted_rand_from_pairs(tp: u128, fp: u128, fn_: u128, tn: u128) -> f64 {
    let (tp, fp, fn_, tn) = (tp as i128, fp as i128, fn_ as i128, tn as i128);
    let num = 2 * (tp * tn - fn_ * fp);
    let den = (tp + fn_) * (fn_ + tn) + (tp + fp) * (fp + tn);
    if den == 0 {
        return 1.0;
    }
    num as f64 / den as f64
}

pub fn adjusted_rand_score(t: &ContingencyTable) -> f64 {
    let (tp, fp, fn_, tn) = pair_counts(t);
    adjusted_rand_from_pairs(tp, fp, fn_, tn)
}

/// Fowlkes-Mallows score from the pair counts; 0 when no pair is together in both.
pub fn fowlkes_mallows_from_pairs(tp: u128, fp: u128, fn_: u128) -> f64 {
    if tp == 0 {
        return 0.0;
    }
    tp as f64 / (((tp + fp) * (tp + fn_)) as f64).sqrt()
}

pub fn fowlkes_mallows(t: &ContingencyTable) -> f64 {
    let (tp, fp, fn_, _) = pair_counts(t);
    fowlkes_mallows_from_pairs(tp, fp, fn_)
}

/// Homogeneity, completeness and their `beta`-weighted harmonic mean, with
/// rows of `t` the reference labeling and columns the predicted one.
pub fn homogeneity_completeness_v(t: &ContingencyTable, beta: f64) -> Result<(f64, f64, f64)> {
    if !(beta >= 0.0) {
        return Err(Error::InvalidArgument(format!("beta must be >= 0, got {beta}")));
    }
    let h_true = entropy(&t.row_sums, t.n);
    let h_pred = entropy(&t.col_sums, t.n);
    let mi = mutual_information(t);
    let h = if h_true > 0.0 { (mi / h_true).min(1.0) } else { 1.0 };
    let c = if h_pred > 0.0 { (mi / h_pred).min(1.0) } else { 1.0 };
    let v = if h + c > 0.0 {
        (1.0 + beta) * h * c / (beta * h + c)
    } else {
        0.0
    };
    Ok((h, c, v))
}

pub fn normalized_mutual_information(t: &ContingencyTable) -> f64 {
    homogeneity_completeness_v(t, 1.0).expect("beta = 1 is valid").2
}

fn check_k_range(dataset: &Dataset, clustering: &Clustering, measure: &str) -> Result<()> {
    let (n, k) = (dataset.n(), clustering.k());
    clustering.check_n(n)?;
    if k < 2 || k + 1 > n {
        return Err(Error::InvalidArgument(format!(
            "{measure} needs 2 <= k <= n-1, got k={k}, n={n}"
        )));
    }
    Ok(())
}

/// Between-cluster over within-cluster dispersion, each per degree of
/// freedom. `+inf` when every cluster is a single location.
pub fn calinski_harabasz(dataset: &Dataset, clustering: &Clustering) -> Result<f64> {
    check_k_range(dataset, clustering, "Calinski-Harabasz")?;
    let (n, k, m) = (dataset.n(), clustering.k(), dataset.m());
    let mut mean = vec![0.0; m];
    for p in dataset.points() {
        for (acc, x) in mean.iter_mut().zip(p) {
            *acc += x;
        }
    }
    mean.iter_mut().for_each(|x| *x /= n as f64);
    let cents = centroids(dataset, clustering);
    let between: f64 = (0..k)
        .map(|j| cents.sizes()[j] as f64 * crate::dataset::squared_distance(cents.center(j), &mean))
        .sum();
    let within = mssc_objective(dataset, clustering);
    if within == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(between / (k - 1) as f64 / (within / (n - k) as f64))
}

/// Mean over clusters of the worst ratio of summed RMS spreads to centroid
/// distance; lower is better.
pub fn davies_bouldin(dataset: &Dataset, clustering: &Clustering) -> Result<f64> {
    clustering.check_n(dataset.n())?;
    let k = clustering.k();
    if k < 2 {
        return Err(Error::InvalidArgument(format!("Davies-Bouldin needs k >= 2, got {k}")));
    }
    let cents = centroids(dataset, clustering);
    let mut spread = vec![0.0; k];
    for (i, &l) in clustering.labels().iter().enumerate() {
        spread[l] += crate::dataset::squared_distance(dataset.point(i), cents.center(l));
    }
    for (s, &size) in spread.iter_mut().zip(cents.sizes()) {
        *s = (*s / size as f64).sqrt();
    }
    let mut total = 0.0;
    for i in 0..k {
        let mut worst = f64::NEG_INFINITY;
        for j in (0..k).filter(|&j| j != i) {
            let d = crate::dataset::squared_distance(cents.center(i), cents.center(j)).sqrt();
            if d == 0.0 {
                return Err(Error::Degenerate(format!("clusters {i} and {j} share a centroid")));
            }
            worst = worst.max((spread[i] + spread[j]) / d);
        }
        total += worst;
    }
    Ok(total / k as f64)
}

/// Mean silhouette with Euclidean distances; points in singleton clusters score 0.
pub fn silhouette(dataset: &Dataset, clustering: &Clustering) -> Result<f64> {
    check_k_range(dataset, clustering, "silhouette")?;
    let (n, k) = (dataset.n(), clustering.k());
    let labels = clustering.labels();
    let sizes = clustering.sizes();
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in (0..n).filter(|&j| j != i) {
            sums[labels[j]] += dataset.squared_distance(i, j).sqrt();
        }
        let own = labels[i];
        if sizes[own] == 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

/// One row of a results table. Extrinsic cells are absent on ground-truth
/// rows; intrinsic cells are absent where the measure is undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub k: usize,
    pub d_sos: f64,
    pub is_ground_truth_row: bool,
    pub ami: Option<f64>,
    pub ars: Option<f64>,
    pub h: Option<f64>,
    pub c: Option<f64>,
    pub nmi: Option<f64>,
    pub fms: Option<f64>,
    pub chc: Option<f64>,
    pub dbi: Option<f64>,
    pub s_score: Option<f64>,
}

/// Which direction of a measure is better.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Higher,
    Lower,
}

/// Table columns in output order, after `instance` and `k`.
pub const MEASURES: [&str; 10] = [
    "d_SOS", "AMI", "ARS", "h", "c", "NMI", "FMS", "CHC", "DBI", "S_score",
];

impl MetricReport {
    /// Scores `clustering`; extrinsic measures are filled when a reference is given.
    pub fn evaluate(
        dataset: &Dataset,
        clustering: &Clustering,
        d_sos: f64,
        reference: Option<&Clustering>,
    ) -> Result<Self> {
        let mut r = Self {
            k: clustering.k(),
            d_sos,
            is_ground_truth_row: reference.is_none(),
            ami: None,
            ars: None,
            h: None,
            c: None,
            nmi: None,
            fms: None,
            chc: calinski_harabasz(dataset, clustering).ok(),
            dbi: davies_bouldin(dataset, clustering).ok(),
            s_score: silhouette(dataset, clustering).ok(),
        };
        if let Some(truth) = reference {
            let t = contingency(truth, clustering)?;
            let (h, c, v) = homogeneity_completeness_v(&t, 1.0)?;
            r.ami = Some(adjusted_mutual_information(&t));
            r.ars = Some(adjusted_rand_score(&t));
            r.h = Some(h);
            r.c = Some(c);
            r.nmi = Some(v);
            r.fms = Some(fowlkes_mallows(&t));
        }
        Ok(r)
    }

    /// Value of a column named in [`MEASURES`].
    pub fn get(&self, measure: &str) -> Option<f64> {
        match measure {
            "d_SOS" => Some(self.d_sos),
            "AMI" => self.ami,
            "ARS" => self.ars,
            "h" => self.h,
            "c" => self.c,
            "NMI" => self.nmi,
            "FMS" => self.fms,
            "CHC" => self.chc,
            "DBI" => self.dbi,
            "S_score" => self.s_score,
            _ => None,
        }
    }
}

/// Preferred direction of a measure; `None` for `d_SOS` and unknown names.
pub fn direction(measure: &str) -> Option<Direction> {
    match measure {
        "DBI" => Some(Direction::Lower),
        "AMI" | "ARS" | "h" | "c" | "NMI" | "FMS" | "CHC" | "S_score" => Some(Direction::Higher),
        _ => None,
    }
}
