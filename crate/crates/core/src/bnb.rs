//! Best-first branch-and-bound over must-link / cannot-link dichotomies.
//!
//! Each node carries a constraint set. Its lower bound comes from the
//! cutting-plane relaxation, upper bounds from COP-k-means under the node
//! constraints and from rounding the relaxed projector. A node is pruned
//! once its bound is within the gap tolerance of the incumbent; otherwise it
//! splits on the most ambiguous undecided pair.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;

use crate::clustering::{
    centroids, clustering_from_projector, default_recovery_threshold, mssc_objective, Clustering,
    ProjectorMatrix,
};
use crate::dataset::{gram, Dataset};
use crate::error::{Error, Result};
use crate::heuristics::{cop_kmeans, cop_kmeans_from, kmeans, restart_seed, ConstraintSet};
use crate::sdp::{cutting_loop_with, CutPool, CutSettings, SdpProblem, SdpSettings, SdpStatus, WarmStart};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Relative gap at which the incumbent is declared optimal.
    pub gap_tol: f64,
    pub node_limit: usize,
    pub time_limit: Option<Duration>,
    /// Largest accepted `n * k`.
    pub max_nk: usize,
    pub root_restarts: usize,
    pub node_restarts: usize,
    pub rng_seed: u64,
    /// Pairs with ambiguity below this are treated as decided by the relaxation.
    pub ambiguity_threshold: f64,
    pub sdp: SdpSettings,
    pub cuts: CutSettings,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gap_tol: 1e-6,
            node_limit: 100_000,
            time_limit: None,
            max_nk: 1000,
            root_restarts: 20,
            node_restarts: 5,
            rng_seed: 0,
            ambiguity_threshold: 1e-6,
            sdp: SdpSettings::default(),
            cuts: CutSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// Search finished without certifying the gap tolerance.
    GapLimit,
    NodeLimit,
    TimeLimit,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::GapLimit => "gap_limit",
            SolveStatus::NodeLimit => "node_limit",
            SolveStatus::TimeLimit => "time_limit",
        }
    }
}

/// Snapshot taken whenever the incumbent improves and after every node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    pub node: usize,
    pub global_lower_bound: f64,
    pub incumbent: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub optimum: Clustering,
    pub objective: f64,
    pub lower_bound: f64,
    pub certified_gap: f64,
    pub nodes_explored: usize,
    pub wall_time: Duration,
    pub status: SolveStatus,
    pub trace: Vec<Progress>,
}

/// A search node.
#[derive(Debug, Clone)]
pub struct BBNode {
    pub id: usize,
    pub constraints: ConstraintSet,
    pub lower_bound: f64,
    pub depth: usize,
    cuts: CutPool,
    warm: Option<Arc<WarmStart>>,
}

impl PartialEq for BBNode {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for BBNode {}
impl PartialOrd for BBNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for BBNode {
    /// Reversed so the max-heap pops the smallest `(lower_bound, id)`.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .lower_bound
            .total_cmp(&self.lower_bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

/// The undecided pair whose relaxed entry is most ambiguous between
/// "co-clustered" (`Z_ij` near `Z_ii`) and "separated" (`Z_ij` near 0),
/// scored by `min(Z_ij, Z_ii - Z_ij)`. `None` when no pair scores above
/// `threshold`. Ties go to the lexicographically smallest pair.
pub fn branching_pair(
    z: &DMatrix<f64>,
    constraints: &ConstraintSet,
    threshold: f64,
) -> Option<(usize, usize)> {
    let n = z.nrows();
    let mut best: Option<((usize, usize), f64)> = None;
    for i in 0..n {
        for j in i + 1..n {
            if constraints.is_decided(i, j) {
                continue;
            }
            let score = z[(i, j)].min(z[(i, i)] - z[(i, j)]);
            if score > threshold && best.is_none_or(|(_, s)| score > s) {
                best = Some(((i, j), score));
            }
        }
    }
    best.map(|(p, _)| p)
}

fn first_undecided(constraints: &ConstraintSet) -> Option<(usize, usize)> {
    let groups = constraints.groups();
    for a in 0..groups.len() {
        for b in a + 1..groups.len() {
            if !constraints.groups_conflict(a, b) {
                return Some((groups[a][0], groups[b][0]));
            }
        }
    }
    None
}

struct Incumbent {
    clustering: Clustering,
    objective: f64,
}

impl Incumbent {
    fn offer(&mut self, clustering: Clustering, objective: f64) -> bool {
        let improved = objective < self.objective;
        if improved
            || (objective == self.objective && clustering.labels() < self.clustering.labels())
        {
            self.clustering = clustering;
            self.objective = objective;
        }
        improved
    }
}

/// Solves the sum-of-squares clustering problem to certified optimality.
pub fn solve_exact(dataset: &Dataset, k: usize, config: &SolverConfig) -> Result<SolveResult> {
    let start = Instant::now();
    let n = dataset.n();
    if k < 1 || k > n {
        return Err(Error::InvalidArgument(format!("k={k} must be in 1..={n}")));
    }
    if n * k > config.max_nk {
        return Err(Error::InvalidArgument(format!(
            "n*k = {} exceeds the configured budget {}",
            n * k,
            config.max_nk
        )));
    }
    if k == n || k == 1 {
        let optimum = if k == n { Clustering::singletons(n) } else { Clustering::single(n) };
        let objective = mssc_objective(dataset, &optimum);
        return Ok(SolveResult {
            optimum,
            objective,
            lower_bound: objective,
            certified_gap: 0.0,
            nodes_explored: 0,
            wall_time: start.elapsed(),
            status: SolveStatus::Optimal,
            trace: vec![Progress {
                node: 0,
                global_lower_bound: objective,
                incumbent: objective,
            }],
        });
    }

    let g = gram(dataset);
    let scatter = g.centered().trace();
    // Objectives below this are indistinguishable from zero at f64 precision.
    let floor = 1e-12 * scatter.max(f64::MIN_POSITIVE);
    let gap_of = |inc: f64, lb: f64| ((inc - lb) / inc.abs().max(floor)).max(0.0);

    let root = kmeans(dataset, k, config.root_restarts, config.rng_seed)?;
    let mut inc = Incumbent {
        clustering: root.clustering,
        objective: root.objective,
    };
    log::info!("event=root_incumbent incumbent={:.12e}", inc.objective);

    let mut frontier = BinaryHeap::new();
    frontier.push(BBNode {
        id: 0,
        constraints: ConstraintSet::empty(n),
        lower_bound: 0.0,
        depth: 0,
        cuts: CutPool::new(),
        warm: None,
    });
    let mut next_id = 1;
    let mut explored = 0;
    let mut closed_min = f64::INFINITY;
    let mut trace = Vec::new();
    let mut status = None;

    while let Some(node) = frontier.pop() {
        if gap_of(inc.objective, node.lower_bound) <= config.gap_tol {
            closed_min = closed_min.min(node.lower_bound);
            continue;
        }
        if explored >= config.node_limit {
            frontier.push(node);
            status = Some(SolveStatus::NodeLimit);
            break;
        }
        if config.time_limit.is_some_and(|t| start.elapsed() >= t) {
            frontier.push(node);
            status = Some(SolveStatus::TimeLimit);
            break;
        }
        explored += 1;

        let mut sdp = config.sdp;
        sdp.cutoff = inc.objective - config.gap_tol * inc.objective.abs().max(floor);
        let mut cut_settings = config.cuts;
        cut_settings.rng_seed = restart_seed(config.cuts.rng_seed, node.id);
        let mut problem = SdpProblem {
            gram: &g,
            k,
            constraints: node.constraints.clone(),
            cuts: node.cuts.clone(),
        };
        let (res, warm) =
            cutting_loop_with(&mut problem, &sdp, &cut_settings, node.warm.as_deref());
        let bound = res.safe_lower_bound.max(node.lower_bound).max(0.0);

        if res.status != SdpStatus::Infeasible {
            let seed = restart_seed(config.rng_seed, node.id);
            let mut improved = false;
            if let Ok(Some(h)) =
                cop_kmeans(dataset, k, &node.constraints, config.node_restarts, seed)
            {
                improved |= inc.offer(h.clustering, h.objective);
            }
            let z = ProjectorMatrix::new(res.z_relaxed.clone(), k);
            if let Ok(rec) = clustering_from_projector(&z, default_recovery_threshold(n)) {
                if rec.matches_k {
                    let init = centroids(dataset, &rec.clustering);
                    let obj = mssc_objective(dataset, &rec.clustering);
                    improved |= inc.offer(rec.clustering, obj);
                    if let Some(h) = cop_kmeans_from(dataset, &node.constraints, &init, 300) {
                        improved |= inc.offer(h.clustering, h.objective);
                    }
                }
            }
            if improved {
                log::info!(
                    "event=incumbent node={} bound={bound:.12e} incumbent={:.12e} gap={:.3e}",
                    node.id,
                    inc.objective,
                    gap_of(inc.objective, bound)
                );
            }
        }

        let global_lb = frontier
            .peek()
            .map_or(f64::INFINITY, |b: &BBNode| b.lower_bound)
            .min(bound)
            .min(closed_min)
            .min(inc.objective);
        trace.push(Progress {
            node: node.id,
            global_lower_bound: global_lb,
            incumbent: inc.objective,
        });
        if explored % 100 == 0 {
            log::info!(
                "event=progress node={} bound={global_lb:.12e} incumbent={:.12e} gap={:.3e} open={}",
                node.id,
                inc.objective,
                gap_of(inc.objective, global_lb),
                frontier.len()
            );
        }

        if res.status == SdpStatus::Infeasible || gap_of(inc.objective, bound) <= config.gap_tol {
            if res.status != SdpStatus::Infeasible {
                closed_min = closed_min.min(bound);
            }
            continue;
        }

        let pair = branching_pair(&res.z_relaxed, &node.constraints, config.ambiguity_threshold)
            .or_else(|| first_undecided(&node.constraints));
        let Some((i, j)) = pair else {
            // Every pair is decided: the groups are the only candidate.
            let groups = node.constraints.groups();
            if groups.len() == k {
                let labels: Vec<usize> =
                    (0..n).map(|p| node.constraints.group_of(p)).collect();
                let leaf = Clustering::with_k(&labels, k)?;
                let obj = mssc_objective(dataset, &leaf);
                inc.offer(leaf, obj);
                closed_min = closed_min.min(obj);
            }
            continue;
        };

        let warm = warm.map(Arc::new);
        for child in [
            node.constraints.with_must_link(i, j),
            node.constraints.with_cannot_link(i, j),
        ] {
            let Ok(constraints) = child else { continue };
            if constraints.groups().len() < k {
                continue;
            }
            frontier.push(BBNode {
                id: next_id,
                constraints,
                lower_bound: bound,
                depth: node.depth + 1,
                cuts: problem.cuts.clone(),
                warm: warm.clone(),
            });
            next_id += 1;
        }
    }

    let open_min = frontier.iter().map(|b| b.lower_bound).fold(f64::INFINITY, f64::min);
    let lower_bound = open_min.min(closed_min).min(inc.objective);
    let certified_gap = gap_of(inc.objective, lower_bound);
    let status = status.unwrap_or(if certified_gap <= config.gap_tol {
        SolveStatus::Optimal
    } else {
        SolveStatus::GapLimit
    });
    log::info!(
        "event=done status={} nodes={explored} bound={lower_bound:.12e} incumbent={:.12e} gap={certified_gap:.3e}",
        status.as_str(),
        inc.objective
    );
    trace.push(Progress {
        node: next_id,
        global_lower_bound: lower_bound,
        incumbent: inc.objective,
    });
    Ok(SolveResult {
        objective: mssc_objective(dataset, &inc.clustering),
        optimum: inc.clustering,
        lower_bound,
        certified_gap,
        nodes_explored: explored,
        wall_time: start.elapsed(),
        status,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{brute_force_optimum, projector_from_clustering};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square() -> Dataset {
        Dataset::from_rows(
            "square",
            &[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
        )
        .unwrap()
    }

    #[test]
    fn branching_on_integral_projector_is_none() {
        let c = Clustering::from_labels(&[0, 1, 0, 2, 1]).unwrap();
        let z = projector_from_clustering(&c);
        assert_eq!(branching_pair(z.matrix(), &ConstraintSet::empty(5), 1e-6), None);
    }

    #[test]
    fn branching_picks_the_only_ambiguous_pair() {
        let mut z = DMatrix::identity(3, 3) * 0.5;
        z[(0, 1)] = 0.25;
        z[(1, 0)] = 0.25;
        let c = ConstraintSet::new(3, [], [(0, 2), (1, 2)]).unwrap();
        assert_eq!(branching_pair(&z, &c, 1e-6), Some((0, 1)));
        assert_eq!(branching_pair(&z, &c, 1e-6), branching_pair(&z, &c, 1e-6));
    }

    #[test]
    fn square_is_solved() {
        let r = solve_exact(&square(), 2, &SolverConfig::default()).unwrap();
        assert!((r.objective - 1.0).abs() < 1e-12);
        assert_eq!(r.status, SolveStatus::Optimal);
    }

    #[test]
    fn k_equals_n_is_zero() {
        let r = solve_exact(&square(), 4, &SolverConfig::default()).unwrap();
        assert_eq!(r.objective, 0.0);
        assert_eq!(r.optimum, Clustering::singletons(4));
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!(solve_exact(&square(), 5, &SolverConfig::default()).is_err());
    }

    #[test]
    fn matches_oracle_on_small_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..15 {
            let n = rng.random_range(5..=9);
            let k = rng.random_range(2..=3);
            let vals: Vec<f64> = (0..n * 2).map(|_| rng.random_range(-2.0..2.0)).collect();
            let d = Dataset::new("r", n, 2, vals).unwrap();
            let r = solve_exact(&d, k, &SolverConfig::default()).unwrap();
            let o = brute_force_optimum(&d, k).unwrap();
            assert_eq!(r.status, SolveStatus::Optimal);
            assert!(
                (r.objective - o.objective).abs() <= 1e-9 * o.objective,
                "trial {trial}: {} vs {}",
                r.objective,
                o.objective
            );
            for p in &r.trace {
                assert!(p.global_lower_bound <= o.objective * (1.0 + 1e-9));
                assert!(p.incumbent >= o.objective * (1.0 - 1e-9));
            }
            for w in r.trace.windows(2) {
                assert!(w[1].incumbent <= w[0].incumbent);
            }
        }
    }

    #[test]
    fn node_limit_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let vals: Vec<f64> = (0..40).map(|_| rng.random_range(-2.0..2.0)).collect();
        let d = Dataset::new("r", 20, 2, vals).unwrap();
        let cfg = SolverConfig {
            node_limit: 0,
            ..SolverConfig::default()
        };
        let r = solve_exact(&d, 3, &cfg).unwrap();
        assert_eq!(r.status, SolveStatus::NodeLimit);
        assert!(r.certified_gap > cfg.gap_tol);
    }
}
