//! Phase-I barrier method for the fixed-target cone feasibility problem
//!
//! ```text
//! maximize r  s.t.  h_k(u) = N_k(u) − √t·√Q_k(u) ≥ r,   ‖u_m‖² ≤ 1
//! ```
//!
//! The target is feasible iff the optimal `r` is non-negative. Iterates stop
//! as soon as some `u` has `min_k h_k(u) ≥ 0`, and declare infeasibility once
//! the central-path duality gap proves the optimum negative.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Instance, SolverConfig};
use crate::radio::BetaMatrix;

const MAX_CENTERING_STEPS: usize = 60;
const MAX_BACKTRACKS: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeasibilityOutcome {
    /// `zeta[m*K + k] = √η_{m,k}` meeting every constraint.
    Feasible { zeta: Vec<f64> },
    /// Certified: the best achievable worst-user margin is at most `bound < 0`.
    Infeasible { bound: f64 },
    /// Newton budget exhausted before either certificate; callers treat this
    /// as infeasible.
    InnerNoConvergence,
}

impl FeasibilityOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Self::Feasible { .. })
    }
}

#[derive(Debug)]
pub(crate) enum Outcome {
    Feasible(Vec<f64>),
    Infeasible { bound: f64 },
    NotConverged,
}

impl Outcome {
    pub fn into_zeta(self, beta: &BetaMatrix) -> FeasibilityOutcome {
        match self {
            Outcome::Feasible(u) => FeasibilityOutcome::Feasible {
                zeta: u
                    .iter()
                    .zip(beta.values())
                    .map(|(x, b)| x.abs() / b.sqrt())
                    .collect(),
            },
            Outcome::Infeasible { bound } => FeasibilityOutcome::Infeasible { bound },
            Outcome::NotConverged => FeasibilityOutcome::InnerNoConvergence,
        }
    }
}

pub(crate) struct Run {
    pub outcome: Outcome,
    pub newton_iters: usize,
    /// Last iterate and its constraint slacks `h_k − r`, for dual bounds.
    pub last: Option<(Vec<f64>, Vec<f64>)>,
}

struct Eval {
    loads: Vec<f64>,
    q: Vec<f64>,
    h: Vec<f64>,
}

struct Problem<'a> {
    inst: &'a Instance,
    s: f64,
}

impl Problem<'_> {
    fn eval(&self, u: &[f64]) -> Eval {
        let loads = self.inst.loads(u);
        let (n, q) = self.inst.terms(u, &loads);
        let h = n
            .iter()
            .zip(&q)
            .map(|(n, q)| n - self.s * q.sqrt())
            .collect();
        Eval { loads, q, h }
    }

    /// Barrier objective, or `None` outside the domain.
    fn objective(&self, tau: f64, u: &[f64], r: f64) -> Option<f64> {
        let e = self.eval(u);
        let mut f = -tau * r;
        for h in &e.h {
            let slack = h - r;
            if !(slack > 0.0) {
                return None;
            }
            f -= slack.ln();
        }
        for v in &e.loads {
            let slack = 1.0 - v;
            if !(slack > 0.0) {
                return None;
            }
            f -= slack.ln();
        }
        Some(f)
    }

    /// Gradient and Hessian in z = (u, r), the Hessian in factored form.
    fn derivatives(&self, tau: f64, u: &[f64], r: f64) -> Derivatives {
        let inst = self.inst;
        let (mc, kc) = (inst.m, inst.k);
        let dim = mc * kc + 1;
        let ri = dim - 1;
        let e = self.eval(u);
        let mut grad = DVector::zeros(dim);
        grad[ri] = -tau;
        let mut diag = vec![0.0; mc];
        let mut cols = Vec::with_capacity(2 * kc + 1);
        let mut coefs = Vec::with_capacity(2 * kc + 1);

        for k in 0..kc {
            let phi = e.h[k] - r;
            let sq = e.q[k].sqrt();
            // c = ∇(h_k − r), w = ∇Q_k / 2
            let mut c = DVector::zeros(dim);
            let mut w = DVector::zeros(dim);
            for m in 0..mc {
                let gmk = inst.g[m * kc + k];
                for l in 0..kc {
                    let idx = m * kc + l;
                    let wv = gmk * u[idx];
                    w[idx] = wv;
                    c[idx] = -self.s * wv / sq;
                }
                c[m * kc + k] += inst.a[m * kc + k];
                // −∇²h_k/φ = (s/φ)(diag(g_k)/√Q − w wᵀ/Q^{3/2})
                diag[m] += self.s * gmk / (phi * sq);
            }
            c[ri] = -1.0;
            grad.axpy(-1.0 / phi, &c, 1.0);
            cols.push(c);
            coefs.push(1.0 / (phi * phi));
            cols.push(w);
            coefs.push(-self.s / (phi * e.q[k] * sq));
        }
        let mut rank_one = vec![0.0; mc];
        for m in 0..mc {
            let psi = 1.0 - e.loads[m];
            let base = m * kc;
            for l in 0..kc {
                grad[base + l] += 2.0 * u[base + l] / psi;
            }
            diag[m] += 2.0 / psi;
            rank_one[m] = 4.0 / (psi * psi);
        }
        // the r coordinate carries a unit diagonal cancelled by −e_r e_rᵀ
        let mut er = DVector::zeros(dim);
        er[ri] = 1.0;
        cols.push(er);
        coefs.push(-1.0);
        Derivatives {
            grad,
            kc,
            u: u.to_vec(),
            diag,
            rank_one,
            cols,
            coefs,
        }
    }
}

/// `H = D + Σ_j coefs_j cols_j cols_jᵀ` where `D` is block diagonal with
/// blocks `diag_m I + rank_one_m u_m u_mᵀ` and a unit entry for `r`.
struct Derivatives {
    grad: DVector<f64>,
    kc: usize,
    u: Vec<f64>,
    diag: Vec<f64>,
    rank_one: Vec<f64>,
    cols: Vec<DVector<f64>>,
    coefs: Vec<f64>,
}

impl Derivatives {
    fn solve_block(&self, x: &DVector<f64>) -> DVector<f64> {
        let kc = self.kc;
        let mut out = x.clone();
        for (m, (row, ur)) in out
            .as_mut_slice()
            .chunks_exact_mut(kc)
            .zip(self.u.chunks_exact(kc))
            .enumerate()
        {
            let d = self.diag[m];
            let gamma = self.rank_one[m];
            let dot: f64 = row.iter().zip(ur).map(|(a, b)| a * b).sum();
            let nrm: f64 = ur.iter().map(|v| v * v).sum();
            let f = gamma * dot / (d * (d + gamma * nrm));
            for (x, v) in row.iter_mut().zip(ur) {
                *x = *x / d - f * v;
            }
        }
        out
    }

    /// Woodbury solve of `H d = −g`.
    fn structured_direction(&self) -> Option<DVector<f64>> {
        let n = self.cols.len();
        let dinv_cols: Vec<DVector<f64>> = self.cols.iter().map(|c| self.solve_block(c)).collect();
        let mut cap = DMatrix::zeros(n, n);
        for i in 0..n {
            cap[(i, i)] = 1.0 / self.coefs[i];
            for j in 0..n {
                cap[(i, j)] += self.cols[i].dot(&dinv_cols[j]);
            }
        }
        let y = self.solve_block(&self.grad);
        let rhs = DVector::from_iterator(n, self.cols.iter().map(|c| c.dot(&y)));
        let alpha = cap.lu().solve(&rhs)?;
        let mut x = y;
        for (dc, a) in dinv_cols.iter().zip(alpha.iter()) {
            x.axpy(-a, dc, 1.0);
        }
        let dir = -x;
        let ok = dir.iter().all(|v| v.is_finite()) && self.grad.dot(&dir) < 0.0;
        ok.then_some(dir)
    }

    fn dense(&self) -> DMatrix<f64> {
        let dim = self.grad.len();
        let kc = self.kc;
        let mut h = DMatrix::zeros(dim, dim);
        for m in 0..self.diag.len() {
            let base = m * kc;
            for l in 0..kc {
                h[(base + l, base + l)] += self.diag[m];
                for j in 0..kc {
                    h[(base + l, base + j)] += self.rank_one[m] * self.u[base + l] * self.u[base + j];
                }
            }
        }
        h[(dim - 1, dim - 1)] = 1.0;
        for (c, a) in self.cols.iter().zip(&self.coefs) {
            h.ger(*a, c, c, 1.0);
        }
        h
    }

    fn direction(&self) -> Option<DVector<f64>> {
        self.structured_direction()
            .or_else(|| newton_direction(&self.grad, self.dense()))
    }
}

fn newton_direction(grad: &DVector<f64>, hess: DMatrix<f64>) -> Option<DVector<f64>> {
    let scale = hess.diagonal().amax().max(1e-300);
    let mut reg = 0.0;
    for _ in 0..8 {
        let mut h = hess.clone();
        if reg > 0.0 {
            for i in 0..h.nrows() {
                h[(i, i)] += reg;
            }
        }
        if let Some(chol) = h.cholesky() {
            return Some(-chol.solve(grad));
        }
        reg = if reg == 0.0 { 1e-12 * scale } else { reg * 100.0 };
    }
    None
}

fn slacks(prob: &Problem, u: Vec<f64>, r: f64) -> Option<(Vec<f64>, Vec<f64>)> {
    let phi = prob.eval(&u).h.iter().map(|h| h - r).collect();
    Some((u, phi))
}

/// Runs phase I at SINR target `target` from the starting point `start`.
pub(crate) fn phase_one(inst: &Instance, target: f64, start: &[f64], cfg: &SolverConfig) -> Run {
    let prob = Problem {
        inst,
        s: target.sqrt(),
    };
    let kc = inst.k;
    let constraints = (inst.k + inst.m) as f64;
    let mut newton_iters = 0;

    // strictly inside every ball and with some power on each user
    let equal = inst.equal_split();
    let mut u: Vec<f64> = start
        .iter()
        .zip(&equal)
        .map(|(x, e)| 0.9 * x.abs() + 0.05 * e)
        .collect();
    for row in u.chunks_exact_mut(kc) {
        let v: f64 = row.iter().map(|x| x * x).sum();
        if v > 0.9 {
            let f = (0.9 / v).sqrt();
            row.iter_mut().for_each(|x| *x *= f);
        }
    }

    let e = prob.eval(&u);
    let min_h = e.h.iter().copied().fold(f64::INFINITY, f64::min);
    if min_h >= 0.0 {
        return Run {
            outcome: Outcome::Feasible(u),
            newton_iters,
            last: None,
        };
    }
    let scale = min_h.abs().max(1e-9);
    let mut r = min_h - scale;
    let mut tau = constraints / scale;

    loop {
        let mut centered = false;
        for _ in 0..MAX_CENTERING_STEPS {
            if newton_iters >= cfg.max_inner_iters {
                return Run {
                    outcome: Outcome::NotConverged,
                    newton_iters,
                    last: slacks(&prob, u, r),
                };
            }
            newton_iters += 1;
            let derivs = prob.derivatives(tau, &u, r);
            let grad = &derivs.grad;
            let Some(dir) = derivs.direction() else {
                return Run {
                    outcome: Outcome::NotConverged,
                    newton_iters,
                    last: slacks(&prob, u, r),
                };
            };
            let slope = grad.dot(&dir);
            if -slope / 2.0 <= cfg.centering_tol {
                centered = true;
                break;
            }
            let f0 = prob
                .objective(tau, &u, r)
                .expect("iterates stay inside the barrier domain");
            let dim = dir.len();
            let mut step = 1.0;
            let mut accepted = false;
            let mut trial = u.clone();
            for _ in 0..MAX_BACKTRACKS {
                for (t, (x, d)) in trial.iter_mut().zip(u.iter().zip(dir.iter())) {
                    *t = x + step * d;
                }
                let tr = r + step * dir[dim - 1];
                if let Some(f) = prob.objective(tau, &trial, tr) {
                    if f <= f0 + 0.25 * step * slope {
                        u.copy_from_slice(&trial);
                        r = tr;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
            let e = prob.eval(&u);
            if e.h.iter().all(|&h| h >= 0.0) {
                return Run {
                    outcome: Outcome::Feasible(u),
                    newton_iters,
                    last: None,
                };
            }
        }
        if !centered {
            return Run {
                outcome: Outcome::NotConverged,
                newton_iters,
                last: slacks(&prob, u, r),
            };
        }
        let bound = r + constraints / tau;
        if bound < 0.0 {
            return Run {
                outcome: Outcome::Infeasible { bound },
                newton_iters,
                last: slacks(&prob, u, r),
            };
        }
        tau *= cfg.barrier_growth;
    }
}
