//! Primal barrier method on the log-space program.
//!
//! Affine equalities are eliminated up front: `y = y0 + N w` with `N` an
//! orthonormal basis of the nullspace, taken from an SVD. The remaining
//! problem in `w` has only log-sum-exp inequalities and is solved by
//! Newton centering with an increasing barrier weight. A strictly feasible
//! start comes from the warm start when possible, otherwise from an
//! elastic phase I that minimizes a common slack `σ`.

use nalgebra::{DMatrix, DVector};

use super::transform::{log_transform, AffineForm, LogSpaceProgram};
use super::{GpError, GpProblem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Target barrier gap `m/t` in natural-log units.
    pub tol: f64,
    pub t_init: f64,
    pub t_factor: f64,
    pub max_newton: usize,
    pub max_outer: usize,
    /// Pivots below `rank_tol` times the largest count as zero when the
    /// equalities are eliminated.
    pub rank_tol: f64,
    /// Inequalities that can only be met with equality (no strict
    /// interior) are accepted when phase I gets within this margin. They
    /// are then relaxed by twice the margin, in natural-log units.
    pub feas_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            t_init: 1.0,
            t_factor: 10.0,
            max_newton: 200,
            max_outer: 40,
            rank_tol: 1e-11,
            feas_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// Iteration budget exhausted; common for unbounded objectives.
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct GpSolution {
    pub status: SolveStatus,
    /// `log_b` of the variables.
    pub y: Vec<f64>,
    /// Variables in the positive orthant.
    pub x: Vec<f64>,
    /// `ln` of the objective posynomial at the solution.
    pub ln_objective: f64,
    /// Final barrier gap `m/t`.
    pub gap: f64,
    pub newton_steps: usize,
    pub phase1: bool,
}

/// Solve a GP. `warm_start` is a point in the positive orthant.
pub fn solve(p: &GpProblem, warm_start: Option<&[f64]>, opts: &SolverOptions) -> Result<GpSolution, GpError> {
    let lp = log_transform(p)?;
    let warm_y = match warm_start {
        Some(x) if x.len() == lp.n_vars && x.iter().all(|&v| v > 0.0 && v.is_finite()) => Some(lp.from_positive(x)),
        Some(x) if x.len() != lp.n_vars => {
            return Err(GpError::DimensionMismatch(format!(
                "warm start has {} entries, problem has {} variables",
                x.len(),
                lp.n_vars
            )))
        }
        _ => None,
    };
    solve_log(&lp, warm_y.as_deref(), opts)
}

/// Log-sum-exp of `g w + c`, with `g` one row per term.
#[derive(Debug, Clone)]
struct Lse {
    g: DMatrix<f64>,
    c: DVector<f64>,
}

impl Lse {
    fn project(terms: &[AffineForm], y0: &DVector<f64>, basis: &DMatrix<f64>) -> Lse {
        let k = basis.ncols();
        let mut g = DMatrix::zeros(terms.len(), k);
        let mut c = DVector::zeros(terms.len());
        for (r, term) in terms.iter().enumerate() {
            c[r] = term.constant;
            for &(i, a) in &term.coeffs {
                c[r] += a * y0[i];
                for j in 0..k {
                    g[(r, j)] += a * basis[(i, j)];
                }
            }
        }
        Lse { g, c }
    }

    fn value(&self, w: &DVector<f64>) -> f64 {
        let z = &self.g * w + &self.c;
        if z.len() == 1 {
            return z[0];
        }
        let max = z.max();
        max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
    }

    /// Value, gradient and Hessian.
    fn derivatives(&self, w: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let z = &self.g * w + &self.c;
        if z.len() == 1 {
            let grad = self.g.row(0).transpose();
            let k = w.len();
            return (z[0], grad, DMatrix::zeros(k, k));
        }
        let max = z.max();
        let e = z.map(|v| (v - max).exp());
        let sum = e.sum();
        let p = e / sum;
        let grad = self.g.transpose() * &p;
        let weighted = DMatrix::from_fn(self.g.nrows(), self.g.ncols(), |r, c| self.g[(r, c)] * p[r]);
        let hess = self.g.transpose() * weighted - &grad * grad.transpose();
        (max + sum.ln(), grad, hess)
    }

    fn with_slack_column(&self) -> Lse {
        let (rows, k) = self.g.shape();
        let mut g = self.g.clone().resize_horizontally(k + 1, 0.0);
        for r in 0..rows {
            g[(r, k)] = -1.0;
        }
        Lse { g, c: self.c.clone() }
    }
}

/// Reduced problem: objective plus affine and log-sum-exp inequalities.
#[derive(Debug, Clone)]
struct Reduced {
    objective: Lse,
    /// Single-term inequalities `a w + b ≤ 0`, stacked.
    lin_a: DMatrix<f64>,
    lin_b: DVector<f64>,
    nonlinear: Vec<Lse>,
}

impl Reduced {
    fn n_constraints(&self) -> usize {
        self.lin_b.len() + self.nonlinear.len()
    }

    fn max_constraint(&self, w: &DVector<f64>) -> f64 {
        let lin = if self.lin_b.is_empty() {
            f64::NEG_INFINITY
        } else {
            (&self.lin_a * w + &self.lin_b).max()
        };
        self.nonlinear.iter().map(|c| c.value(w)).fold(lin, f64::max)
    }

    /// `t f0(w) − Σ ln(−f_i(w))`, or `None` outside the strict interior.
    fn barrier_value(&self, w: &DVector<f64>, t: f64) -> Option<f64> {
        let mut phi = t * self.objective.value(w);
        if !self.lin_b.is_empty() {
            let f = &self.lin_a * w + &self.lin_b;
            for v in f.iter() {
                if !(*v < 0.0) {
                    return None;
                }
                phi -= (-v).ln();
            }
        }
        for c in &self.nonlinear {
            let v = c.value(w);
            if !(v < 0.0) {
                return None;
            }
            phi -= (-v).ln();
        }
        phi.is_finite().then_some(phi)
    }

    fn barrier_derivatives(&self, w: &DVector<f64>, t: f64) -> (DVector<f64>, DMatrix<f64>) {
        let (_, g0, h0) = self.objective.derivatives(w);
        let mut grad = g0 * t;
        let mut hess = h0 * t;
        if !self.lin_b.is_empty() {
            let f = &self.lin_a * w + &self.lin_b;
            let inv = f.map(|v| -1.0 / v);
            grad += self.lin_a.transpose() * &inv;
            let scaled = DMatrix::from_fn(self.lin_a.nrows(), self.lin_a.ncols(), |r, c| {
                self.lin_a[(r, c)] * inv[r] * inv[r]
            });
            hess += self.lin_a.transpose() * scaled;
        }
        for c in &self.nonlinear {
            let (f, g, h) = c.derivatives(w);
            grad += &g / (-f);
            hess += h / (-f) + &g * g.transpose() / (f * f);
        }
        (grad, hess)
    }

    /// Every inequality loosened by `delta`.
    fn relaxed(mut self, delta: f64) -> Reduced {
        self.lin_b.add_scalar_mut(-delta);
        for c in &mut self.nonlinear {
            c.c.add_scalar_mut(-delta);
        }
        self
    }

    /// The phase-I problem over `(w, σ)`: minimize σ with `f_i − σ ≤ 0` and `σ ≥ −1`.
    fn phase1(&self) -> Reduced {
        let k = self.lin_a.ncols();
        let mut objective_g = DMatrix::zeros(1, k + 1);
        objective_g[(0, k)] = 1.0;
        let m = self.lin_b.len();
        let mut lin_a = self.lin_a.clone().resize(m + 1, k + 1, 0.0);
        for r in 0..m {
            lin_a[(r, k)] = -1.0;
        }
        lin_a[(m, k)] = -1.0;
        let mut lin_b = self.lin_b.clone().resize_vertically(m + 1, 0.0);
        lin_b[m] = -1.0;
        Reduced {
            objective: Lse {
                g: objective_g,
                c: DVector::zeros(1),
            },
            lin_a,
            lin_b,
            nonlinear: self.nonlinear.iter().map(Lse::with_slack_column).collect(),
        }
    }
}

fn newton_direction(grad: &DVector<f64>, hess: &DMatrix<f64>) -> Option<DVector<f64>> {
    let scale = hess.diagonal().amax().max(1.0);
    let mut lambda = 0.0;
    for _ in 0..20 {
        let mut h = hess.clone();
        if lambda > 0.0 {
            for i in 0..h.nrows() {
                h[(i, i)] += lambda;
            }
        }
        if let Some(chol) = h.cholesky() {
            let step = chol.solve(&(-grad));
            if step.iter().all(|v| v.is_finite()) {
                return Some(step);
            }
        }
        lambda = if lambda == 0.0 { 1e-12 * scale } else { lambda * 100.0 };
    }
    None
}

/// Outcome of one centering run.
struct Centering {
    steps: usize,
    converged: bool,
    stopped_early: bool,
}

/// Minimize the barrier function at fixed `t` from a strictly feasible `w`.
fn center(
    prob: &Reduced,
    w: &mut DVector<f64>,
    t: f64,
    max_newton: usize,
    stop: &dyn Fn(&DVector<f64>) -> bool,
) -> Result<Centering, GpError> {
    let mut phi = prob
        .barrier_value(w, t)
        .ok_or_else(|| GpError::NumericalFailure("centering started outside the interior".into()))?;
    for step in 1..=max_newton {
        let (grad, hess) = prob.barrier_derivatives(w, t);
        let dir = newton_direction(&grad, &hess)
            .ok_or_else(|| GpError::NumericalFailure("Newton system could not be factorized".into()))?;
        let slope = grad.dot(&dir);
        if -slope / 2.0 <= 1e-10 {
            return Ok(Centering {
                steps: step - 1,
                converged: true,
                stopped_early: false,
            });
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..80 {
            let trial = &*w + alpha * &dir;
            if let Some(v) = prob.barrier_value(&trial, t) {
                if v <= phi + 0.01 * alpha * slope {
                    accepted = Some((trial, v));
                    break;
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((trial, v)) => {
                // relative progress below roundoff: treat as centered
                let stalled = (phi - v).abs() <= 1e-15 * phi.abs().max(1.0);
                *w = trial;
                phi = v;
                if stop(w) {
                    return Ok(Centering {
                        steps: step,
                        converged: true,
                        stopped_early: true,
                    });
                }
                if stalled {
                    return Ok(Centering {
                        steps: step,
                        converged: true,
                        stopped_early: false,
                    });
                }
            }
            None => {
                return Ok(Centering {
                    steps: step,
                    converged: true,
                    stopped_early: false,
                })
            }
        }
        if w.amax() > 1e15 {
            return Ok(Centering {
                steps: step,
                converged: false,
                stopped_early: false,
            });
        }
    }
    Ok(Centering {
        steps: max_newton,
        converged: false,
        stopped_early: false,
    })
}

struct BarrierRun {
    status: SolveStatus,
    gap: f64,
    steps: usize,
}

fn barrier(
    prob: &Reduced,
    w: &mut DVector<f64>,
    opts: &SolverOptions,
    stop: &dyn Fn(&DVector<f64>) -> bool,
) -> Result<(BarrierRun, bool), GpError> {
    let m = prob.n_constraints() as f64;
    let mut t = opts.t_init;
    let mut steps = 0;
    for _ in 0..opts.max_outer {
        let c = center(prob, w, t, opts.max_newton, stop)?;
        steps += c.steps;
        if c.stopped_early {
            return Ok((
                BarrierRun {
                    status: SolveStatus::Optimal,
                    gap: m / t,
                    steps,
                },
                true,
            ));
        }
        if !c.converged {
            return Ok((
                BarrierRun {
                    status: SolveStatus::MaxIter,
                    gap: m / t,
                    steps,
                },
                false,
            ));
        }
        if m == 0.0 || m / t < opts.tol {
            return Ok((
                BarrierRun {
                    status: SolveStatus::Optimal,
                    gap: m / t,
                    steps,
                },
                false,
            ));
        }
        t *= opts.t_factor;
    }
    Ok((
        BarrierRun {
            status: SolveStatus::MaxIter,
            gap: m / t,
            steps,
        },
        false,
    ))
}

/// Particular solution and orthonormal nullspace basis of `A y = r`.
///
/// Householder QR with column pivoting of `Aᵀ`, padded with zero columns
/// to a square matrix so that `Q` is complete: its leading `rank` columns
/// span the row space of `A` and the rest span the nullspace.
fn eliminate_equalities(lp: &LogSpaceProgram, opts: &SolverOptions) -> Result<(DVector<f64>, DMatrix<f64>), GpError> {
    let n = lp.n_vars;
    let m = lp.equalities.len();
    if m == 0 {
        return Ok((DVector::zeros(n), DMatrix::identity(n, n)));
    }
    let mut a = DMatrix::zeros(m, n);
    let mut r = DVector::zeros(m);
    for (i, eq) in lp.equalities.iter().enumerate() {
        for &(j, c) in &eq.coeffs {
            a[(i, j)] += c;
        }
        r[i] = -eq.constant;
    }
    let cols = m.max(n);
    let mut at = DMatrix::<f64>::zeros(n, cols);
    at.view_mut((0, 0), (n, m)).copy_from(&a.transpose());
    let qr = at.col_piv_qr();
    let q = qr.q();
    let rr = qr.r();
    let diag: Vec<f64> = (0..n).map(|i| rr[(i, i)].abs()).collect();
    let cutoff = opts.rank_tol * diag.iter().copied().fold(f64::MIN_POSITIVE, f64::max);
    let rank = diag.iter().take_while(|&&d| d > cutoff).count();

    let q1 = q.columns(0, rank).into_owned();
    let b = &a * &q1;
    let bqr = b.qr();
    let rhs = bqr.q().transpose() * &r;
    let c = bqr
        .r()
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| GpError::NumericalFailure("singular equality system".into()))?;
    let y0 = &q1 * c;
    let residual = (&a * &y0 - &r).amax();
    if residual > 1e-7 * (1.0 + r.amax()) {
        return Err(GpError::Infeasible { residual });
    }
    Ok((y0, q.columns(rank, n - rank).into_owned()))
}

fn solve_log(lp: &LogSpaceProgram, warm_y: Option<&[f64]>, opts: &SolverOptions) -> Result<GpSolution, GpError> {
    let (y0, basis) = eliminate_equalities(lp, opts)?;
    let k = basis.ncols();

    let mut lin_rows = Vec::new();
    let mut nonlinear = Vec::new();
    for terms in &lp.inequalities {
        if terms.len() == 1 {
            lin_rows.push(&terms[0]);
        } else {
            nonlinear.push(Lse::project(terms, &y0, &basis));
        }
    }
    let lin_terms: Vec<AffineForm> = lin_rows.into_iter().cloned().collect();
    let lin = Lse::project(&lin_terms, &y0, &basis);
    let prob = Reduced {
        objective: Lse::project(&lp.objective, &y0, &basis),
        lin_a: lin.g,
        lin_b: lin.c,
        nonlinear,
    };

    let mut w = match warm_y {
        Some(y) => basis.transpose() * (DVector::from_column_slice(y) - &y0),
        None => DVector::zeros(k),
    };

    let mut prob = prob;
    let mut steps = 0;
    let mut phase1 = false;
    if prob.n_constraints() > 0 && !(prob.max_constraint(&w) < 0.0) {
        phase1 = true;
        let f0 = prob.max_constraint(&w);
        if k == 0 {
            if !(f0 <= opts.feas_tol) {
                return Err(GpError::Infeasible { residual: f0 });
            }
            prob = prob.relaxed(f0.max(0.0) + 2.0 * opts.feas_tol);
        }
    }
    if prob.n_constraints() > 0 && !(prob.max_constraint(&w) < 0.0) {
        let p1 = prob.phase1();
        let sigma0 = prob.max_constraint(&w).max(0.0) + 1.0;
        let mut ws = w.clone().resize_vertically(k + 1, sigma0);
        let margin = 1e-6;
        let stop = |ws: &DVector<f64>| prob.max_constraint(&ws.rows(0, k).into_owned()) < -margin;
        let (run, early) = barrier(&p1, &mut ws, opts, &stop)?;
        steps += run.steps;
        w = ws.rows(0, k).into_owned();
        let fmax = prob.max_constraint(&w);
        if !early && !(fmax < 0.0) {
            if !(fmax <= opts.feas_tol) {
                return Err(GpError::Infeasible { residual: fmax });
            }
            prob = prob.relaxed(fmax.max(0.0) + 2.0 * opts.feas_tol);
        }
    }

    let (run, _) = barrier(&prob, &mut w, opts, &|_| false)?;
    steps += run.steps;

    let y = &y0 + &basis * &w;
    let y: Vec<f64> = y.iter().copied().collect();
    if !y.iter().all(|v| v.is_finite()) {
        return Err(GpError::NumericalFailure("non-finite iterate".into()));
    }
    Ok(GpSolution {
        status: run.status,
        x: lp.to_positive(&y),
        ln_objective: lp.objective_value(&y),
        y,
        gap: run.gap,
        newton_steps: steps,
        phase1,
    })
}
