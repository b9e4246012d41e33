//! Upper-bound heuristics: Lloyd's k-means with k-means++ seeding and
//! COP-k-means, which honours must-link / cannot-link constraints.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clustering::{centroids, mssc_objective, Centroids, Clustering};
use crate::dataset::{squared_distance, Dataset};
use crate::error::{Error, Result};

pub const DEFAULT_RESTARTS: usize = 20;
pub const DEFAULT_MAX_ITERS: usize = 300;

/// Must-link and cannot-link pairs over `n` points, closed under must-link
/// transitivity. Pairs are stored smaller index first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintSet {
    n: usize,
    must_link: BTreeSet<(usize, usize)>,
    cannot_link: BTreeSet<(usize, usize)>,
    /// Must-link group of each point; groups are numbered by smallest member.
    group_of: Vec<usize>,
    groups: Vec<Vec<usize>>,
    /// Cannot-link adjacency between groups.
    group_conflicts: Vec<BTreeSet<usize>>,
}

fn ordered(i: usize, j: usize) -> (usize, usize) {
    if i <= j {
        (i, j)
    } else {
        (j, i)
    }
}

impl ConstraintSet {
    pub fn empty(n: usize) -> Self {
        Self::new(n, [], []).expect("empty constraint set is feasible")
    }

    pub fn new(
        n: usize,
        must_link: impl IntoIterator<Item = (usize, usize)>,
        cannot_link: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut ml = BTreeSet::new();
        let mut cl = BTreeSet::new();
        for (i, j) in must_link {
            Self::check_pair(n, i, j)?;
            ml.insert(ordered(i, j));
        }
        for (i, j) in cannot_link {
            Self::check_pair(n, i, j)?;
            cl.insert(ordered(i, j));
        }
        if let Some(p) = ml.intersection(&cl).next() {
            return Err(Error::InfeasibleConstraints(format!(
                "pair {p:?} is both must-link and cannot-link"
            )));
        }
        Self::build(n, ml, cl)
    }

    fn check_pair(n: usize, i: usize, j: usize) -> Result<()> {
        if i == j || i >= n || j >= n {
            return Err(Error::InvalidArgument(format!(
                "constraint pair ({i}, {j}) invalid for n={n}"
            )));
        }
        Ok(())
    }

    fn build(
        n: usize,
        must_link: BTreeSet<(usize, usize)>,
        cannot_link: BTreeSet<(usize, usize)>,
    ) -> Result<Self> {
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &(i, j) in &must_link {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut group_of = vec![usize::MAX; n];
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut root_group = vec![usize::MAX; n];
        for i in 0..n {
            let r = find(&mut parent, i);
            if root_group[r] == usize::MAX {
                root_group[r] = groups.len();
                groups.push(Vec::new());
            }
            group_of[i] = root_group[r];
            groups[root_group[r]].push(i);
        }
        let mut group_conflicts = vec![BTreeSet::new(); groups.len()];
        for &(i, j) in &cannot_link {
            let (a, b) = (group_of[i], group_of[j]);
            if a == b {
                return Err(Error::InfeasibleConstraints(format!(
                    "cannot-link ({i}, {j}) joins points already must-linked"
                )));
            }
            group_conflicts[a].insert(b);
            group_conflicts[b].insert(a);
        }
        Ok(Self {
            n,
            must_link,
            cannot_link,
            group_of,
            groups,
            group_conflicts,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.must_link.is_empty() && self.cannot_link.is_empty()
    }

    pub fn must_link(&self) -> &BTreeSet<(usize, usize)> {
        &self.must_link
    }

    pub fn cannot_link(&self) -> &BTreeSet<(usize, usize)> {
        &self.cannot_link
    }

    /// Must-link groups (singletons included), ordered by smallest member.
    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group_of(&self, i: usize) -> usize {
        self.group_of[i]
    }

    pub fn groups_conflict(&self, a: usize, b: usize) -> bool {
        self.group_conflicts[a].contains(&b)
    }

    /// Whether the pair is implied must-link or implied cannot-link.
    pub fn is_decided(&self, i: usize, j: usize) -> bool {
        let (a, b) = (self.group_of[i], self.group_of[j]);
        a == b || self.groups_conflict(a, b)
    }

    pub fn implies_same(&self, i: usize, j: usize) -> bool {
        self.group_of[i] == self.group_of[j]
    }

    pub fn implies_separate(&self, i: usize, j: usize) -> bool {
        self.groups_conflict(self.group_of[i], self.group_of[j])
    }

    pub fn with_must_link(&self, i: usize, j: usize) -> Result<Self> {
        Self::check_pair(self.n, i, j)?;
        let mut ml = self.must_link.clone();
        ml.insert(ordered(i, j));
        if self.cannot_link.contains(&ordered(i, j)) {
            return Err(Error::InfeasibleConstraints(format!(
                "pair ({i}, {j}) is already cannot-link"
            )));
        }
        Self::build(self.n, ml, self.cannot_link.clone())
    }

    pub fn with_cannot_link(&self, i: usize, j: usize) -> Result<Self> {
        Self::check_pair(self.n, i, j)?;
        let mut cl = self.cannot_link.clone();
        cl.insert(ordered(i, j));
        if self.must_link.contains(&ordered(i, j)) {
            return Err(Error::InfeasibleConstraints(format!(
                "pair ({i}, {j}) is already must-link"
            )));
        }
        Self::build(self.n, self.must_link.clone(), cl)
    }

    pub fn is_satisfied_by(&self, clustering: &Clustering) -> bool {
        clustering.n() == self.n
            && self.must_link.iter().all(|&(i, j)| clustering.same_cluster(i, j))
            && self.cannot_link.iter().all(|&(i, j)| !clustering.same_cluster(i, j))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicResult {
    pub clustering: Clustering,
    pub objective: f64,
    pub restarts_used: usize,
    pub converged: bool,
}

impl HeuristicResult {
    /// Lexicographic `(objective, canonical labels)` order, so best-of
    /// reductions do not depend on evaluation order.
    pub fn better_than(&self, other: &HeuristicResult) -> bool {
        match self.objective.total_cmp(&other.objective) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => self.clustering.labels() < other.clustering.labels(),
        }
    }
}

/// Derives the seed of the `r`-th restart from a base seed.
pub(crate) fn restart_seed(base: u64, r: usize) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((r as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9))
        ^ 0x94D0_49BB_1331_11EB
}

/// k-means++ seeding: the first center is uniform over points, each further
/// center is drawn with probability proportional to the squared distance to
/// the nearest center already chosen.
pub fn kmeans_pp_seed(dataset: &Dataset, k: usize, rng_seed: u64) -> Result<Centroids> {
    let n = dataset.n();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k={k} must be in 1..={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut dist: Vec<f64> = (0..n)
        .map(|i| dataset.squared_distance(i, chosen[0]))
        .collect();
    while chosen.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &d) in dist.iter().enumerate() {
                if d <= 0.0 {
                    continue;
                }
                pick = Some(i);
                if target < d {
                    break;
                }
                target -= d;
            }
            pick.expect("positive total implies a positive entry")
        } else {
            // Every remaining point coincides with a center.
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(dataset.squared_distance(i, next));
        }
    }
    let centers: Vec<f64> = chosen.iter().flat_map(|&i| dataset.point(i).to_vec()).collect();
    Ok(Centroids::from_centers(k, dataset.m(), centers))
}

fn assign_nearest(dataset: &Dataset, centers: &Centroids, labels: &mut [usize]) {
    for (l, p) in labels.iter_mut().zip(dataset.points()) {
        *l = centers.nearest(p).0;
    }
}

/// Moves the point farthest from its own centroid into each empty cluster,
/// taking only from clusters that keep at least one member.
fn repair_empty(dataset: &Dataset, k: usize, labels: &mut [usize]) {
    loop {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let c = raw_centroids(dataset, k, labels, &sizes);
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in dataset.points().enumerate() {
            if sizes[labels[i]] < 2 {
                continue;
            }
            let d = squared_distance(p, &c[labels[i]]);
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        match best {
            Some((i, _)) => labels[i] = empty,
            None => return,
        }
    }
}

fn raw_centroids(dataset: &Dataset, k: usize, labels: &[usize], sizes: &[usize]) -> Vec<Vec<f64>> {
    let m = dataset.m();
    let mut c = vec![vec![0.0; m]; k];
    for (p, &l) in dataset.points().zip(labels) {
        for (a, v) in c[l].iter_mut().zip(p) {
            *a += v;
        }
    }
    for (cj, &s) in c.iter_mut().zip(sizes) {
        if s > 0 {
            cj.iter_mut().for_each(|a| *a /= s as f64);
        }
    }
    c
}

/// Lloyd's iteration from the given centers, also returning the objective
/// after each assignment step.
pub(crate) fn lloyd_traced(
    dataset: &Dataset,
    init: &Centroids,
    max_iters: usize,
) -> (HeuristicResult, Vec<f64>) {
    let k = init.k();
    let mut labels = vec![0; dataset.n()];
    assign_nearest(dataset, init, &mut labels);
    repair_empty(dataset, k, &mut labels);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut current = Clustering::with_k(&labels, k).expect("repair leaves no cluster empty");
    trace.push(mssc_objective(dataset, &current));
    let mut next = labels.clone();
    for _ in 0..max_iters {
        let c = centroids(dataset, &current);
        assign_nearest(dataset, &c, &mut next);
        repair_empty(dataset, k, &mut next);
        let candidate = Clustering::with_k(&next, k).expect("repair leaves no cluster empty");
        if candidate == current {
            converged = true;
            break;
        }
        current = candidate;
        trace.push(mssc_objective(dataset, &current));
    }
    let objective = *trace.last().expect("trace is never empty");
    (
        HeuristicResult {
            clustering: current,
            objective,
            restarts_used: 1,
            converged,
        },
        trace,
    )
}

/// Lloyd's algorithm: alternate nearest-center assignment and centroid
/// updates until the labels stop changing or `max_iters` is reached.
pub fn lloyd(dataset: &Dataset, init: &Centroids, max_iters: usize) -> Result<HeuristicResult> {
    if init.k() == 0 || init.k() > dataset.n() || init.m() != dataset.m() {
        return Err(Error::InvalidArgument(format!(
            "{} centers of dimension {} for {} points of dimension {}",
            init.k(),
            init.m(),
            dataset.n(),
            dataset.m()
        )));
    }
    Ok(lloyd_traced(dataset, init, max_iters).0)
}

/// Best of `restarts` k-means++ seeded Lloyd runs.
pub fn kmeans(dataset: &Dataset, k: usize, restarts: usize, rng_seed: u64) -> Result<HeuristicResult> {
    let mut best: Option<HeuristicResult> = None;
    for r in 0..restarts.max(1) {
        let init = kmeans_pp_seed(dataset, k, restart_seed(rng_seed, r))?;
        let run = lloyd(dataset, &init, DEFAULT_MAX_ITERS)?;
        if best.as_ref().is_none_or(|b| run.better_than(b)) {
            best = Some(run);
        }
    }
    let mut best = best.expect("at least one restart");
    best.restarts_used = restarts.max(1);
    Ok(best)
}

/// Constrained Lloyd from fixed initial centers. Must-link groups move as a
/// unit and are assigned in order of their smallest member to the cheapest
/// center that creates no cannot-link conflict. Returns `None` when some
/// group has no admissible cluster or an empty cluster cannot be refilled.
pub fn cop_kmeans_from(
    dataset: &Dataset,
    constraints: &ConstraintSet,
    init: &Centroids,
    max_iters: usize,
) -> Option<HeuristicResult> {
    let k = init.k();
    let groups = constraints.groups();
    if groups.len() < k {
        return None;
    }
    let mut centers: Vec<Vec<f64>> = (0..k).map(|j| init.center(j).to_vec()).collect();
    let mut group_label = vec![usize::MAX; groups.len()];
    let mut best: Option<HeuristicResult> = None;
    let mut converged = false;
    for _ in 0..max_iters.max(1) {
        let previous = group_label.clone();
        group_label.fill(usize::MAX);
        for (g, members) in groups.iter().enumerate() {
            let mut costs: Vec<(f64, usize)> = (0..k)
                .map(|j| {
                    let cost = members
                        .iter()
                        .map(|&i| squared_distance(dataset.point(i), &centers[j]))
                        .sum();
                    (cost, j)
                })
                .collect();
            costs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let admissible = costs.iter().map(|&(_, j)| j).find(|&j| {
                !group_label
                    .iter()
                    .enumerate()
                    .any(|(h, &lh)| lh == j && constraints.groups_conflict(g, h))
            });
            group_label[g] = admissible?;
        }
        fill_empty_clusters(dataset, constraints, k, &mut group_label, &centers)?;

        let mut labels = vec![0; dataset.n()];
        for (g, members) in groups.iter().enumerate() {
            for &i in members {
                labels[i] = group_label[g];
            }
        }
        let clustering = Clustering::with_k(&labels, k).ok()?;
        let objective = mssc_objective(dataset, &clustering);
        let candidate = HeuristicResult {
            clustering: clustering.clone(),
            objective,
            restarts_used: 1,
            converged: false,
        };
        if best.as_ref().is_none_or(|b| candidate.better_than(b)) {
            best = Some(candidate);
        }
        if group_label == previous {
            converged = true;
            break;
        }
        let c = centroids(dataset, &clustering);
        // `clustering` is canonical; map back to the raw cluster slots.
        for (g, members) in groups.iter().enumerate() {
            let canon = clustering.labels()[members[0]];
            centers[group_label[g]] = c.center(canon).to_vec();
        }
    }
    best.map(|mut b| {
        b.converged = converged;
        b
    })
}

fn fill_empty_clusters(
    dataset: &Dataset,
    constraints: &ConstraintSet,
    k: usize,
    group_label: &mut [usize],
    centers: &[Vec<f64>],
) -> Option<()> {
    let groups = constraints.groups();
    loop {
        let mut count = vec![0usize; k];
        for &l in group_label.iter() {
            count[l] += 1;
        }
        let Some(empty) = count.iter().position(|&c| c == 0) else {
            return Some(());
        };
        // An empty cluster has no cannot-link conflicts, so any group from a
        // cluster with at least two groups may move there.
        let mut pick: Option<(usize, f64)> = None;
        for (g, members) in groups.iter().enumerate() {
            if count[group_label[g]] < 2 {
                continue;
            }
            let cost: f64 = members
                .iter()
                .map(|&i| squared_distance(dataset.point(i), &centers[group_label[g]]))
                .sum();
            if pick.is_none_or(|(_, c)| cost > c) {
                pick = Some((g, cost));
            }
        }
        group_label[pick?.0] = empty;
    }
}

/// COP-k-means: best of `restarts` k-means++ seeded constrained runs, or
/// `None` when every restart fails.
pub fn cop_kmeans(
    dataset: &Dataset,
    k: usize,
    constraints: &ConstraintSet,
    restarts: usize,
    rng_seed: u64,
) -> Result<Option<HeuristicResult>> {
    if constraints.n() != dataset.n() {
        return Err(Error::InvalidArgument(format!(
            "constraint set is for {} points, dataset has {}",
            constraints.n(),
            dataset.n()
        )));
    }
    if k == 0 || k > dataset.n() {
        return Err(Error::InvalidArgument(format!(
            "k={k} must be in 1..={}",
            dataset.n()
        )));
    }
    let mut best: Option<HeuristicResult> = None;
    let restarts = restarts.max(1);
    for r in 0..restarts {
        let init = kmeans_pp_seed(dataset, k, restart_seed(rng_seed, r))?;
        if let Some(run) = cop_kmeans_from(dataset, constraints, &init, DEFAULT_MAX_ITERS) {
            if best.as_ref().is_none_or(|b| run.better_than(b)) {
                best = Some(run);
            }
        }
    }
    Ok(best.map(|mut b| {
        b.restarts_used = restarts;
        b
    }))
}
