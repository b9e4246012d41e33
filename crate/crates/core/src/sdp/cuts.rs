//! Valid inequalities for the projector relaxation and their separation.
//!
//! Every projector of a genuine k-clustering satisfies
//!
//! * triangle: `Z_ij + Z_ih <= Z_ii + Z_jh`
//! * pair: `Z_ij <= Z_ii`
//! * clique: `sum_{i<j in I} Z_ij >= 1/(n-k+1)` for every `|I| = k+1`
//!
//! The clique bound holds because two of any `k+1` points share a cluster,
//! and no cluster can hold more than `n-k+1` points.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A single cutting plane.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cut {
    /// `(i, j, h)` with `j < h`: `Z_ij + Z_ih <= Z_ii + Z_jh`.
    Triangle(usize, usize, usize),
    /// `(i, j)`: `Z_ij <= Z_ii`.
    Pair(usize, usize),
    /// Sorted `(k+1)`-subset.
    Clique(Vec<usize>),
}

impl Cut {
    /// `lhs - rhs` of the inequality in `<=` form; positive means violated.
    pub fn violation(&self, z: &DMatrix<f64>, k: usize) -> f64 {
        match *self {
            Cut::Triangle(i, j, h) => triangle_violation(z, i, j, h),
            Cut::Pair(i, j) => z[(i, j)] - z[(i, i)],
            Cut::Clique(ref members) => clique_rhs(z.nrows(), k) - clique_mass(z, members),
        }
    }

    /// Sparse coefficients `(i, j, a)` with `i <= j` of the symmetric matrix
    /// `A` and right-hand side `b` such that the cut reads `<A, Z> >= b`.
    pub(crate) fn as_ge(&self, n: usize, k: usize) -> (Vec<(usize, usize, f64)>, f64) {
        let sym = |i: usize, j: usize| if i <= j { (i, j) } else { (j, i) };
        match *self {
            Cut::Triangle(i, j, h) => {
                let (a, b) = sym(i, j);
                let (c, d) = sym(i, h);
                let (e, f) = sym(j, h);
                (
                    vec![(i, i, 1.0), (e, f, 0.5), (a, b, -0.5), (c, d, -0.5)],
                    0.0,
                )
            }
            Cut::Pair(i, j) => {
                let (a, b) = sym(i, j);
                (vec![(i, i, 1.0), (a, b, -0.5)], 0.0)
            }
            Cut::Clique(ref members) => {
                let mut entries = Vec::new();
                for (x, &i) in members.iter().enumerate() {
                    for &j in &members[x + 1..] {
                        entries.push((i, j, 0.5));
                    }
                }
                (entries, clique_rhs(n, k))
            }
        }
    }
}

pub fn clique_rhs(n: usize, k: usize) -> f64 {
    1.0 / (n - k + 1) as f64
}

fn clique_mass(z: &DMatrix<f64>, members: &[usize]) -> f64 {
    let mut s = 0.0;
    for (x, &i) in members.iter().enumerate() {
        for &j in &members[x + 1..] {
            s += z[(i, j)];
        }
    }
    s
}

fn triangle_violation(z: &DMatrix<f64>, i: usize, j: usize, h: usize) -> f64 {
    z[(i, j)] + z[(i, h)] - z[(i, i)] - z[(j, h)]
}

/// Active cutting planes, without duplicates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CutPool {
    cuts: BTreeSet<Cut>,
}

impl CutPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }

    /// Returns `false` if the cut was already present.
    pub fn insert(&mut self, cut: Cut) -> bool {
        self.cuts.insert(cut)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Cut> {
        self.cuts.iter()
    }

    pub fn triangles(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.cuts.iter().filter_map(|c| match *c {
            Cut::Triangle(i, j, h) => Some((i, j, h)),
            _ => None,
        })
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.cuts.iter().filter_map(|c| match *c {
            Cut::Pair(i, j) => Some((i, j)),
            _ => None,
        })
    }

    pub fn cliques(&self) -> impl Iterator<Item = &[usize]> + '_ {
        self.cuts.iter().filter_map(|c| match c {
            Cut::Clique(m) => Some(m.as_slice()),
            _ => None,
        })
    }

    /// Drops cuts whose slack at `z` exceeds `max_slack`; returns how many.
    pub fn purge(&mut self, z: &DMatrix<f64>, k: usize, max_slack: f64) -> usize {
        let before = self.cuts.len();
        self.cuts.retain(|c| -c.violation(z, k) <= max_slack);
        before - self.cuts.len()
    }
}

fn sort_and_truncate<T: Ord>(found: &mut Vec<(f64, T)>, limit: usize) {
    found.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    found.truncate(limit);
}

/// Up to `limit` most violated triangle inequalities `(i; j, h)`, `j < h`,
/// with violation above `eps`, ordered by violation then lexicographically.
pub fn separate_triangle(z: &DMatrix<f64>, limit: usize, eps: f64) -> Vec<(usize, usize, usize)> {
    let n = z.nrows();
    let mut found = Vec::new();
    for i in 0..n {
        let zii = z[(i, i)];
        for j in 0..n {
            if j == i {
                continue;
            }
            let zij = z[(i, j)];
            for h in j + 1..n {
                if h == i {
                    continue;
                }
                let v = zij + z[(i, h)] - zii - z[(j, h)];
                if v > eps {
                    found.push((v, (i, j, h)));
                }
            }
        }
    }
    sort_and_truncate(&mut found, limit);
    found.into_iter().map(|(_, t)| t).collect()
}

/// Up to `limit` violated pair inequalities. Each returned `(i, j)` means
/// `Z_ij <= Z_ii` is violated, with `i` the endpoint of smaller diagonal.
pub fn separate_pair(z: &DMatrix<f64>, limit: usize, eps: f64) -> Vec<(usize, usize)> {
    let n = z.nrows();
    let mut found = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = if z[(j, j)] < z[(i, i)] { (j, i) } else { (i, j) };
            let v = z[(i, j)] - z[(a, a)];
            if v > eps {
                found.push((v, (a, b)));
            }
        }
    }
    sort_and_truncate(&mut found, limit);
    found.into_iter().map(|(_, p)| p).collect()
}

fn binomial(n: usize, r: usize) -> f64 {
    if r > n {
        return 0.0;
    }
    (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Violated clique inequalities over `(k+1)`-subsets. Exhaustive when the
/// subset count fits in `sample_budget`; otherwise a greedy construction
/// from every start point plus `sample_budget` random subsets.
pub fn separate_clique(
    z: &DMatrix<f64>,
    k: usize,
    sample_budget: usize,
    rng_seed: u64,
    limit: usize,
    eps: f64,
) -> Vec<Vec<usize>> {
    let n = z.nrows();
    let size = k + 1;
    if size > n || k == 0 {
        return Vec::new();
    }
    let rhs = clique_rhs(n, k);
    let mut found: Vec<(f64, Vec<usize>)> = Vec::new();
    let consider = |members: Vec<usize>, found: &mut Vec<(f64, Vec<usize>)>| {
        let v = rhs - clique_mass(z, &members);
        if v > eps {
            found.push((v, members));
        }
    };

    if binomial(n, size) <= sample_budget as f64 {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            consider(idx.clone(), &mut found);
            // Next combination in lexicographic order.
            let mut p = size;
            while p > 0 && idx[p - 1] == n - size + p - 1 {
                p -= 1;
            }
            if p == 0 {
                break;
            }
            idx[p - 1] += 1;
            for q in p..size {
                idx[q] = idx[q - 1] + 1;
            }
        }
    } else {
        let mut seen = BTreeSet::new();
        for start in 0..n {
            let mut members = vec![start];
            let mut mass = vec![0.0; n];
            for p in 0..n {
                mass[p] = z[(start, p)];
            }
            while members.len() < size {
                let next = (0..n)
                    .filter(|p| !members.contains(p))
                    .min_by(|&a, &b| mass[a].total_cmp(&mass[b]).then(a.cmp(&b)))
                    .expect("n >= k+1 leaves a candidate");
                members.push(next);
                for p in 0..n {
                    mass[p] += z[(next, p)];
                }
            }
            members.sort_unstable();
            if seen.insert(members.clone()) {
                consider(members, &mut found);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        for _ in 0..sample_budget {
            let mut members = sample(&mut rng, n, size).into_vec();
            members.sort_unstable();
            if seen.insert(members.clone()) {
                consider(members, &mut found);
            }
        }
    }
    sort_and_truncate(&mut found, limit);
    found.into_iter().map(|(_, m)| m).collect()
}
