//! Alternating-direction augmented Lagrangian method on the dual of
//!
//! ```text
//!   min <C, X>  s.t.  A_E(X) = b_E,  A_I(X) >= b_I,  X psd,  X >= 0
//! ```
//!
//! with dual `max b^T y  s.t.  A*(y) + V + S = C,  y_I >= 0,  V >= 0,  S psd`.
//! Each sweep solves for `y` (conjugate gradients on `A A* + D_I`), projects
//! `V` onto the nonnegative orthant, and projects onto the PSD cone with one
//! eigendecomposition, which also yields the next primal iterate `X`.
//!
//! Lower bounds never trust convergence: any `y` with `y_I >= 0` and any
//! `V >= 0` give `<C, X> >= b^T y + tr(X) * min(0, lambda_min(C - A*y - V))`
//! for every feasible `X`, and `tr(X) = k` is one of the constraints.

use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};

use super::cuts::Cut;

/// Identity of a linear constraint, used to carry multipliers across solves.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub(crate) enum ConstraintKey {
    RowSum(usize),
    Trace,
    MustLink(usize, usize),
    CannotLink(usize, usize),
    Cut(Cut),
}

#[derive(Debug, Clone)]
pub(crate) struct LinearConstraint {
    pub key: ConstraintKey,
    /// Upper-triangle entries `(i, j, a)`, `i <= j`, of a symmetric matrix.
    pub entries: Vec<(usize, usize, f64)>,
    pub rhs: f64,
    pub inequality: bool,
}

impl LinearConstraint {
    pub fn new(
        key: ConstraintKey,
        entries: Vec<(usize, usize, f64)>,
        rhs: f64,
        inequality: bool,
    ) -> Self {
        // Merge duplicate coordinates, then scale to unit Frobenius norm.
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        let mut sorted = entries;
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        for (i, j, a) in sorted {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += a,
                _ => merged.push((i, j, a)),
            }
        }
        merged.retain(|e| e.2 != 0.0);
        let norm = merged
            .iter()
            .map(|&(i, j, a)| if i == j { a * a } else { 2.0 * a * a })
            .sum::<f64>()
            .sqrt();
        let scale = if norm > 0.0 { 1.0 / norm } else { 1.0 };
        Self {
            key,
            entries: merged.into_iter().map(|(i, j, a)| (i, j, a * scale)).collect(),
            rhs: rhs * scale,
            inequality,
        }
    }
}

/// The linear map `A` and its adjoint.
pub(crate) struct Operator {
    cons: Vec<LinearConstraint>,
    ineq: Vec<usize>,
    delta: f64,
}

impl Operator {
    pub fn new(cons: Vec<LinearConstraint>) -> Self {
        let ineq = cons
            .iter()
            .enumerate()
            .filter(|(_, c)| c.inequality)
            .map(|(i, _)| i)
            .collect();
        Self {
            cons,
            ineq,
            delta: 1e-8,
        }
    }

    pub fn len(&self) -> usize {
        self.cons.len()
    }

    fn apply(&self, x: &DMatrix<f64>, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.cons) {
            *o = c
                .entries
                .iter()
                .map(|&(i, j, a)| if i == j { a * x[(i, i)] } else { 2.0 * a * x[(i, j)] })
                .sum();
        }
    }

    fn adjoint(&self, y: &[f64], out: &mut DMatrix<f64>) {
        out.fill(0.0);
        for (&yc, c) in y.iter().zip(&self.cons) {
            if yc == 0.0 {
                continue;
            }
            for &(i, j, a) in &c.entries {
                out[(i, j)] += yc * a;
                if i != j {
                    out[(j, i)] += yc * a;
                }
            }
        }
    }

    /// `(A A* + D_I + delta I) v`.
    fn normal(&self, v: &[f64], out: &mut [f64], work: &mut DMatrix<f64>) {
        self.adjoint(v, work);
        self.apply(work, out);
        for (o, vi) in out.iter_mut().zip(v) {
            *o += self.delta * vi;
        }
        for &c in &self.ineq {
            out[c] += v[c];
        }
    }

    /// Preconditioned conjugate gradients, warm-started from `y`.
    fn solve_normal(&self, rhs: &[f64], y: &mut [f64], work: &mut DMatrix<f64>) {
        let m = rhs.len();
        if m == 0 {
            return;
        }
        let diag: Vec<f64> = self
            .cons
            .iter()
            .map(|c| {
                let d: f64 = c
                    .entries
                    .iter()
                    .map(|&(i, j, a)| if i == j { a * a } else { 2.0 * a * a })
                    .sum();
                d + self.delta + if c.inequality { 1.0 } else { 0.0 }
            })
            .collect();
        let mut ky = vec![0.0; m];
        self.normal(y, &mut ky, work);
        let mut r: Vec<f64> = rhs.iter().zip(&ky).map(|(b, a)| b - a).collect();
        let rhs_norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        let mut z: Vec<f64> = r.iter().zip(&diag).map(|(a, d)| a / d).collect();
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let mut kp = vec![0.0; m];
        for _ in 0..(2 * m).clamp(50, 500) {
            let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rnorm <= 1e-12 * rhs_norm {
                break;
            }
            self.normal(&p, &mut kp, work);
            let pkp: f64 = p.iter().zip(&kp).map(|(a, b)| a * b).sum();
            if pkp <= 0.0 {
                break;
            }
            let alpha = rz / pkp;
            for i in 0..m {
                y[i] += alpha * p[i];
                r[i] -= alpha * kp[i];
            }
            for i in 0..m {
                z[i] = r[i] / diag[i];
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..m {
                p[i] = z[i] + beta * p[i];
            }
        }
    }
}

/// Iterate state that can seed a later solve of a related problem.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub(crate) x: DMatrix<f64>,
    pub(crate) v: DMatrix<f64>,
    pub(crate) s: DMatrix<f64>,
    pub(crate) sigma: f64,
    pub(crate) duals: HashMap<ConstraintKey, (f64, f64, f64)>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct AdmmSettings {
    pub tol: f64,
    pub max_iters: usize,
    /// Stop as soon as the certified bound reaches this value (scaled units).
    pub cutoff: f64,
    pub check_every: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum AdmmStop {
    Converged,
    IterationLimit,
    Cutoff,
}

pub(crate) struct AdmmOutput {
    pub x: DMatrix<f64>,
    pub primal_objective: f64,
    /// Certified lower bound on `<C, X>` over the feasible set.
    pub bound: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub stop: AdmmStop,
    pub warm: WarmStart,
}

/// Average of all clustering projectors with trace `k`: `a I + b ee^T`
/// with unit row sums.
fn barycenter(n: usize, k: f64) -> DMatrix<f64> {
    if n == 1 {
        return DMatrix::from_element(1, 1, 1.0);
    }
    let a = (k - 1.0) / (n as f64 - 1.0);
    let b = (1.0 - a) / n as f64;
    DMatrix::from_fn(n, n, |i, j| if i == j { a + b } else { b })
}

fn frob(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

/// Splits symmetric `m` into `m = p - q` with `p, q` psd and `p q = 0`.
fn psd_split(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let pos: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 0.0).collect();
    let neg: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] < 0.0).collect();
    let build = |idx: &[usize], sign: f64| {
        let mut f = DMatrix::zeros(n, idx.len());
        for (c, &i) in idx.iter().enumerate() {
            let s = (sign * eig.eigenvalues[i]).sqrt();
            f.set_column(c, &(eig.eigenvectors.column(i) * s));
        }
        &f * f.transpose()
    };
    if pos.len() <= neg.len() {
        let p = build(&pos, 1.0);
        let q = &p - m;
        (p, q)
    } else {
        let q = build(&neg, -1.0);
        let p = m + &q;
        (p, q)
    }
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Certified bound from dual point `(y, V)`; `trace_x` is the fixed trace
/// of every feasible `X`.
fn dual_bound(
    op: &Operator,
    c: &DMatrix<f64>,
    y: &[f64],
    v: &DMatrix<f64>,
    trace_x: f64,
    work: &mut DMatrix<f64>,
) -> f64 {
    let n = c.nrows() as f64;
    let mut yp = y.to_vec();
    for &i in &op.ineq {
        yp[i] = yp[i].max(0.0);
    }
    op.adjoint(&yp, work);
    let mut s = c - &*work - v.map(|e| e.max(0.0));
    symmetrize(&mut s);
    let lmin = min_eigenvalue(&s);
    let by: f64 = yp.iter().zip(op.cons.iter()).map(|(y, c)| y * c.rhs).sum();
    let by_abs: f64 = yp.iter().zip(op.cons.iter()).map(|(y, c)| (y * c.rhs).abs()).sum();
    // Rounding in forming S, its eigenvalues and the dot product.
    let guard = 8.0 * n * f64::EPSILON * (trace_x * (frob(&s) + frob(c) + frob(work)) + by_abs);
    by + trace_x * lmin.min(0.0) - guard
}

/// Runs the method. `trace_x` must equal the right-hand side of the trace
/// constraint included in `op`.
pub(crate) fn solve(
    op: &Operator,
    c: &DMatrix<f64>,
    trace_x: f64,
    settings: &AdmmSettings,
    warm: Option<&WarmStart>,
) -> AdmmOutput {
    let n = c.nrows();
    let m = op.len();
    let b: Vec<f64> = op.cons.iter().map(|c| c.rhs).collect();
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let c_norm = frob(c);

    let mut y = vec![0.0; m];
    let mut w = vec![0.0; m];
    let mut q = vec![0.0; m];
    let (mut x, mut v, mut s, mut sigma) = match warm {
        Some(ws) if ws.x.nrows() == n => {
            for (idx, con) in op.cons.iter().enumerate() {
                if let Some(&(yi, wi, qi)) = ws.duals.get(&con.key) {
                    y[idx] = yi;
                    w[idx] = wi;
                    q[idx] = qi;
                }
            }
            (ws.x.clone(), ws.v.clone(), ws.s.clone(), ws.sigma)
        }
        _ => (
            barycenter(n, trace_x),
            DMatrix::zeros(n, n),
            DMatrix::zeros(n, n),
            1.0,
        ),
    };

    let mut work = DMatrix::zeros(n, n);
    let mut ay = DMatrix::zeros(n, n);
    let mut ax = vec![0.0; m];
    let mut rhs = vec![0.0; m];
    let mut tmp = vec![0.0; m];
    let mut best_bound = f64::NEG_INFINITY;
    let mut pinf = f64::INFINITY;
    let mut dinf = f64::INFINITY;
    let mut stop = AdmmStop::IterationLimit;
    let mut iterations = 0;
    let check_every = settings.check_every.max(1);

    for it in 1..=settings.max_iters {
        iterations = it;
        // y-step.
        let t = &v + &s - c;
        op.apply(&t, &mut tmp);
        op.apply(&x, &mut ax);
        for i in 0..m {
            rhs[i] = (b[i] - ax[i]) / sigma - tmp[i] + op.delta * y[i];
        }
        for &i in &op.ineq {
            rhs[i] += -q[i] / sigma + w[i];
        }
        op.solve_normal(&rhs, &mut y, &mut work);
        op.adjoint(&y, &mut ay);

        // Sign-constrained copy of the inequality multipliers.
        for &i in &op.ineq {
            w[i] = (y[i] + q[i] / sigma).max(0.0);
        }

        // V-step: nonnegative part.
        let base = c - &ay;
        v = (&base - &s - &x / sigma).map(|e| e.max(0.0));

        // S-step and multiplier update from one eigendecomposition.
        let mut mm = &base - &v - &x / sigma;
        symmetrize(&mut mm);
        let (p, neg) = psd_split(&mm);
        let x_prev = x;
        s = p;
        x = neg * sigma;
        let mut ineq_gap = 0.0;
        for &i in &op.ineq {
            let r = y[i] - w[i];
            q[i] += sigma * r;
            ineq_gap += r * r;
        }

        if it % check_every == 0 || it == settings.max_iters {
            // Dual infeasibility: A*y + V + S - C = (X - X_prev) / sigma.
            dinf = ((frob(&(&x - &x_prev)) / sigma).powi(2) + ineq_gap).sqrt() / (1.0 + c_norm);
            op.apply(&x, &mut ax);
            let mut pr = 0.0;
            for (i, con) in op.cons.iter().enumerate() {
                let r = ax[i] - b[i];
                let r = if con.inequality { r.min(0.0) } else { r };
                pr += r * r;
            }
            pr += x.iter().map(|e| e.min(0.0).powi(2)).sum::<f64>();
            pinf = pr.sqrt() / (1.0 + b_norm);
            let pobj = c.dot(&x);
            let dobj: f64 = y.iter().zip(&b).map(|(a, b)| a * b).sum();
            let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());

            if it % (check_every * 5) == 0 || it == settings.max_iters {
                let bound = dual_bound(op, c, &y, &v, trace_x, &mut work);
                best_bound = best_bound.max(bound);
                if best_bound >= settings.cutoff {
                    stop = AdmmStop::Cutoff;
                    break;
                }
            }
            if pinf.max(dinf).max(gap) <= settings.tol {
                stop = AdmmStop::Converged;
                break;
            }
            // Keep the two residuals balanced.
            if dinf > 5.0 * pinf {
                sigma = (sigma * 1.6).min(1e6);
            } else if pinf > 5.0 * dinf {
                sigma = (sigma / 1.6).max(1e-6);
            }
        }
    }
    let bound = dual_bound(op, c, &y, &v, trace_x, &mut work);
    best_bound = best_bound.max(bound);
    if stop == AdmmStop::IterationLimit && best_bound >= settings.cutoff {
        stop = AdmmStop::Cutoff;
    }

    let duals = op
        .cons
        .iter()
        .enumerate()
        .map(|(i, con)| (con.key.clone(), (y[i], w[i], q[i])))
        .collect();
    AdmmOutput {
        primal_objective: c.dot(&x),
        bound: best_bound,
        primal_residual: pinf,
        dual_residual: dinf,
        iterations,
        stop,
        warm: WarmStart {
            x: x.clone(),
            v,
            s,
            sigma,
            duals,
        },
        x,
    }
}
