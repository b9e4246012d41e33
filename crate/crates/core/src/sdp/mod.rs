//! Lower bounds on the sum-of-squares optimum from the projector relaxation
//!
//! ```text
//!   max <W, Z>  s.t.  Ze = e,  tr(Z) = k,  Z psd,  Z >= 0
//! ```
//!
//! (the rank constraint dropped), with branching constraints and cutting
//! planes added as linear rows. Must-link `(i, j)` is imposed as
//! `Z_ii + Z_jj - 2 Z_ij = 0`, which for psd `Z` forces rows `i` and `j`
//! to coincide; cannot-link `(i, j)` as `Z_ij = 0`.
//!
//! The objective is evaluated on the Gram matrix of the mean-centred points,
//! which leaves `tr(W) - <W, Z>` unchanged on `Ze = e` and keeps the
//! solver well scaled.

mod admm;
pub mod cuts;

use std::io::Write;

use nalgebra::DMatrix;

use crate::dataset::GramMatrix;
use crate::heuristics::ConstraintSet;

use admm::{AdmmSettings, AdmmStop, ConstraintKey, LinearConstraint, Operator};
pub use admm::WarmStart;
pub use cuts::{clique_rhs, separate_clique, separate_pair, separate_triangle, Cut, CutPool};

/// A relaxation instance: one branch-and-bound node plus its cuts.
#[derive(Debug, Clone)]
pub struct SdpProblem<'a> {
    pub gram: &'a GramMatrix,
    pub k: usize,
    pub constraints: ConstraintSet,
    pub cuts: CutPool,
}

impl<'a> SdpProblem<'a> {
    pub fn new(gram: &'a GramMatrix, k: usize) -> Self {
        Self {
            gram,
            k,
            constraints: ConstraintSet::empty(gram.n()),
            cuts: CutPool::new(),
        }
    }

    pub fn with_constraints(mut self, constraints: ConstraintSet) -> Self {
        self.constraints = constraints;
        self
    }

    pub fn n(&self) -> usize {
        self.gram.n()
    }

    fn operator(&self) -> Operator {
        let n = self.n();
        let mut cons = Vec::with_capacity(n + 1 + self.cuts.len());
        for i in 0..n {
            let entries = (0..n)
                .map(|j| match i.cmp(&j) {
                    std::cmp::Ordering::Equal => (i, i, 1.0),
                    std::cmp::Ordering::Less => (i, j, 0.5),
                    std::cmp::Ordering::Greater => (j, i, 0.5),
                })
                .collect();
            cons.push(LinearConstraint::new(ConstraintKey::RowSum(i), entries, 1.0, false));
        }
        cons.push(LinearConstraint::new(
            ConstraintKey::Trace,
            (0..n).map(|i| (i, i, 1.0)).collect(),
            self.k as f64,
            false,
        ));
        for group in self.constraints.groups() {
            let r = group[0];
            for &a in &group[1..] {
                cons.push(LinearConstraint::new(
                    ConstraintKey::MustLink(r, a),
                    vec![(r, r, 1.0), (a, a, 1.0), (r, a, -1.0)],
                    0.0,
                    false,
                ));
            }
        }
        for &(i, j) in self.constraints.cannot_link() {
            cons.push(LinearConstraint::new(
                ConstraintKey::CannotLink(i, j),
                vec![(i, j, 0.5)],
                0.0,
                false,
            ));
        }
        for cut in self.cuts.iter() {
            let (entries, rhs) = cut.as_ge(n, self.k);
            cons.push(LinearConstraint::new(ConstraintKey::Cut(cut.clone()), entries, rhs, true));
        }
        Operator::new(cons)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpSettings {
    /// Relative residual and duality-gap tolerance.
    pub tol: f64,
    pub max_iters: usize,
    /// Stop once the certified bound reaches this value (objective units).
    pub cutoff: f64,
    /// Residual checks happen every this many iterations.
    pub check_every: usize,
}

impl Default for SdpSettings {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 20_000,
            cutoff: f64::INFINITY,
            check_every: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutSettings {
    pub rounds: usize,
    pub cuts_per_round: usize,
    /// Minimum violation for a cut to be separated.
    pub eps_cut: f64,
    pub clique_budget: usize,
    pub rng_seed: u64,
    /// Stop when a round improves the bound by less than this fraction.
    pub min_improvement: f64,
}

impl Default for CutSettings {
    fn default() -> Self {
        Self {
            rounds: 5,
            cuts_per_round: 500,
            eps_cut: 1e-4,
            clique_budget: 20_000,
            rng_seed: 0,
            min_improvement: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Converged,
    /// Iteration budget exhausted; the bound is still valid, only weaker.
    IterationLimit,
    /// The bound reached the requested cutoff.
    Cutoff,
    /// The node admits no clustering (fewer must-link groups than `k`).
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct SdpResult {
    pub z_relaxed: DMatrix<f64>,
    /// `-<W, Z>` at the returned iterate.
    pub raw_value: f64,
    /// Certified lower bound on the objective of every clustering feasible
    /// for the node.
    pub safe_lower_bound: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub status: SdpStatus,
    /// Cutting-plane rounds performed (zero for a plain solve).
    pub rounds: usize,
}

fn infeasible_result(n: usize) -> SdpResult {
    SdpResult {
        z_relaxed: DMatrix::zeros(n, n),
        raw_value: f64::NAN,
        safe_lower_bound: f64::INFINITY,
        primal_residual: f64::INFINITY,
        dual_residual: 0.0,
        iterations: 0,
        status: SdpStatus::Infeasible,
        rounds: 0,
    }
}

/// One relaxation solve, optionally warm-started from a related solve.
pub fn solve_relaxation_with(
    problem: &SdpProblem,
    settings: &SdpSettings,
    warm: Option<&WarmStart>,
) -> (SdpResult, Option<WarmStart>) {
    let n = problem.n();
    let k = problem.k;
    if k == 0 || k > problem.constraints.groups().len() || problem.constraints.n() != n {
        return (infeasible_result(n), None);
    }
    let centered = problem.gram.centered();
    let scale = centered.matrix().norm();
    if scale == 0.0 || !scale.is_finite() {
        // All points coincide: every clustering costs zero.
        let z = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 });
        return (
            SdpResult {
                raw_value: -problem.gram.matrix().dot(&z),
                z_relaxed: z,
                safe_lower_bound: 0.0,
                primal_residual: 0.0,
                dual_residual: 0.0,
                iterations: 0,
                status: SdpStatus::Converged,
                rounds: 0,
            },
            None,
        );
    }
    let c = centered.matrix() * (-1.0 / scale);
    let op = problem.operator();
    let admm = AdmmSettings {
        tol: settings.tol,
        max_iters: settings.max_iters,
        cutoff: (settings.cutoff - centered.trace()) / scale,
        check_every: settings.check_every,
    };
    let out = admm::solve(&op, &c, k as f64, &admm, warm);
    let status = match out.stop {
        AdmmStop::Converged => SdpStatus::Converged,
        AdmmStop::IterationLimit => SdpStatus::IterationLimit,
        AdmmStop::Cutoff => SdpStatus::Cutoff,
    };
    log::trace!(
        "sdp n={n} k={k} rows={} iters={} status={status:?} pobj={:.6e}",
        op.len(),
        out.iterations,
        out.primal_objective
    );
    let bound = centered.trace() + scale * out.bound;
    (
        SdpResult {
            raw_value: -problem.gram.matrix().dot(&out.x),
            z_relaxed: out.x,
            safe_lower_bound: bound,
            primal_residual: out.primal_residual,
            dual_residual: out.dual_residual,
            iterations: out.iterations,
            status,
            rounds: 0,
        },
        Some(out.warm),
    )
}

/// Solves the relaxation of `problem` without cutting-plane rounds.
pub fn solve_relaxation(problem: &SdpProblem, tol: f64, max_iters: usize) -> SdpResult {
    let settings = SdpSettings {
        tol,
        max_iters,
        ..SdpSettings::default()
    };
    solve_relaxation_with(problem, &settings, None).0
}

/// Most violated cuts over all three families, at most `limit` in total.
pub fn separate_all(z: &DMatrix<f64>, k: usize, limit: usize, settings: &CutSettings) -> Vec<Cut> {
    let eps = settings.eps_cut;
    let mut found: Vec<(f64, Cut)> = Vec::new();
    for (i, j, h) in separate_triangle(z, limit, eps) {
        let c = Cut::Triangle(i, j, h);
        found.push((c.violation(z, k), c));
    }
    for (i, j) in separate_pair(z, limit, eps) {
        let c = Cut::Pair(i, j);
        found.push((c.violation(z, k), c));
    }
    for members in separate_clique(z, k, settings.clique_budget, settings.rng_seed, limit, eps) {
        let c = Cut::Clique(members);
        found.push((c.violation(z, k), c));
    }
    found.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    found.truncate(limit);
    found.into_iter().map(|(_, c)| c).collect()
}

/// Solve, separate, add the most violated cuts, re-solve. The reported bound
/// is the best over all rounds, so it never decreases. Cuts stay in
/// `problem.cuts` for reuse by child nodes.
pub fn cutting_loop_with(
    problem: &mut SdpProblem,
    sdp: &SdpSettings,
    cut: &CutSettings,
    warm: Option<&WarmStart>,
) -> (SdpResult, Option<WarmStart>) {
    let (mut result, mut state) = solve_relaxation_with(problem, sdp, warm);
    let mut best = result.safe_lower_bound;
    let mut iterations = result.iterations;
    for round in 0..cut.rounds {
        if matches!(result.status, SdpStatus::Cutoff | SdpStatus::Infeasible) {
            break;
        }
        let new_cuts = separate_all(&result.z_relaxed, problem.k, cut.cuts_per_round, cut);
        if new_cuts.is_empty() {
            break;
        }
        problem
            .cuts
            .purge(&result.z_relaxed, problem.k, 10.0 * cut.eps_cut);
        for c in new_cuts {
            problem.cuts.insert(c);
        }
        let (next, next_state) = solve_relaxation_with(problem, sdp, state.as_ref());
        iterations += next.iterations;
        let improvement = next.safe_lower_bound - best;
        best = best.max(next.safe_lower_bound);
        result = next;
        result.rounds = round + 1;
        state = next_state;
        log::trace!(
            "cut round={} cuts={} bound={best:.9e} improvement={improvement:.3e}",
            round + 1,
            problem.cuts.len()
        );
        if improvement < cut.min_improvement * best.abs() {
            break;
        }
    }
    result.safe_lower_bound = best;
    result.iterations = iterations;
    if best >= sdp.cutoff {
        result.status = SdpStatus::Cutoff;
    }
    (result, state)
}

/// Cutting-plane loop with default solver and separation settings apart from
/// the given round count, per-round cut budget and tolerance.
pub fn cutting_loop(
    problem: &mut SdpProblem,
    rounds: usize,
    cuts_per_round: usize,
    tol: f64,
) -> SdpResult {
    let sdp = SdpSettings {
        tol,
        ..SdpSettings::default()
    };
    let cut = CutSettings {
        rounds,
        cuts_per_round,
        ..CutSettings::default()
    };
    cutting_loop_with(problem, &sdp, &cut, None).0
}

/// Writes `Z` as headerless CSV rows.
pub fn write_matrix_csv<W: Write>(z: &DMatrix<f64>, mut out: W) -> std::io::Result<()> {
    for i in 0..z.nrows() {
        let row: Vec<String> = (0..z.ncols()).map(|j| format!("{:?}", z[(i, j)])).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Writes active cuts as `family,indices` CSV (indices space-separated).
pub fn write_cuts_csv<W: Write>(cuts: &CutPool, mut out: W) -> std::io::Result<()> {
    writeln!(out, "family,indices")?;
    for c in cuts.iter() {
        let (family, idx) = match c {
            Cut::Triangle(i, j, h) => ("triangle", vec![*i, *j, *h]),
            Cut::Pair(i, j) => ("pair", vec![*i, *j]),
            Cut::Clique(m) => ("clique", m.clone()),
        };
        let idx: Vec<String> = idx.iter().map(usize::to_string).collect();
        writeln!(out, "{family},{}", idx.join(" "))?;
    }
    Ok(())
}
