//! Max-min fair power control.
//!
//! The solver works in the substituted variables `u_{m,k} = √(η_{m,k} β_{m,k})`
//! and the SNR-normalised gains `g_{m,k} = β_{m,k} P_t / σ²`. In those
//! coordinates the per-RU constraint is a unit ball on each row of `u` and
//!
//! ```text
//! SINR_k = (Σ_m √g_{m,k} u_{m,k})² / (Σ_m g_{m,k} ‖u_m‖² + 1)
//! ```
//!
//! so for a fixed target `t` the set `{u : SINR_k ≥ t ∀k}` is a second-order
//! cone. [`solve_mmf`] bisects on `t`, deciding each target with a
//! barrier-method phase-I problem ([`check_feasibility`]), and after every
//! feasible probe re-solves the per-user powers exactly for the directions
//! found (see `polish`), which equalizes the SINRs and makes an RU tight.

mod barrier;
mod dual;
mod polish;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radio::{compute_sinr, BetaMatrix, PowerCoefficients};

pub use barrier::FeasibilityOutcome;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Relative width `(hi − lo)/lo` at which the SINR bracket is collapsed.
    pub bisection_tol: f64,
    pub max_bisection_iters: usize,
    /// Newton-step budget of one feasibility check.
    pub max_inner_iters: usize,
    /// Newton decrement `λ²/2` below which a barrier subproblem is centred.
    pub centering_tol: f64,
    /// Factor by which the barrier weight grows between centerings.
    pub barrier_growth: f64,
    /// Re-check three targets below the result and panic if any is
    /// reported infeasible. Slow; meant for tests.
    pub verify_monotonicity: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            bisection_tol: 1e-4,
            max_bisection_iters: 60,
            max_inner_iters: 400,
            centering_tol: 1e-10,
            barrier_growth: 10.0,
            verify_monotonicity: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bisection_tol > 0.0 && self.centering_tol > 0.0 && self.barrier_growth > 1.0) {
            return Err(Error::InvalidConfig(
                "solver tolerances must be positive and barrier growth above one".into(),
            ));
        }
        if self.max_bisection_iters == 0 || self.max_inner_iters == 0 {
            return Err(Error::InvalidConfig("iteration limits must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub bisection_iters: usize,
    pub newton_iters: usize,
    /// Feasibility checks that exhausted their budget and were counted as
    /// infeasible.
    pub inner_nonconverged: usize,
    /// Final `(hi − lo)/lo`.
    pub bracket_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmfSolution {
    pub eta: PowerCoefficients,
    /// min_k SINR_k of `eta`.
    pub achieved_sinr_target: f64,
    pub sinr: Vec<f64>,
    pub diagnostics: SolverDiagnostics,
}

impl MmfSolution {
    pub fn min_se(&self) -> f64 {
        (1.0 + self.achieved_sinr_target).log2()
    }
}

/// SNR-normalised problem data shared by the barrier and the polish step.
#[derive(Debug, Clone)]
pub(crate) struct Instance {
    pub m: usize,
    pub k: usize,
    /// β·P_t/σ², row-major
    pub g: Vec<f64>,
    /// √g
    pub a: Vec<f64>,
}

impl Instance {
    pub fn new(beta: &BetaMatrix, total_power: f64, noise_power: f64) -> Self {
        let scale = total_power / noise_power;
        let g: Vec<f64> = beta.values().iter().map(|b| b * scale).collect();
        let a = g.iter().map(|x| x.sqrt()).collect();
        Self {
            m: beta.num_rus(),
            k: beta.num_ues(),
            g,
            a,
        }
    }

    pub fn loads(&self, u: &[f64]) -> Vec<f64> {
        u.chunks_exact(self.k)
            .map(|row| row.iter().map(|x| x * x).sum())
            .collect()
    }

    /// (coherent amplitude N_k, interference-plus-noise Q_k) per user.
    pub fn terms(&self, u: &[f64], loads: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut n = vec![0.0; self.k];
        let mut q = vec![1.0; self.k];
        for m in 0..self.m {
            for k in 0..self.k {
                let idx = m * self.k + k;
                n[k] += self.a[idx] * u[idx];
                q[k] += self.g[idx] * loads[m];
            }
        }
        (n, q)
    }

    pub fn sinr(&self, u: &[f64]) -> Vec<f64> {
        let loads = self.loads(u);
        let (n, q) = self.terms(u, &loads);
        n.iter().zip(&q).map(|(n, q)| n * n / q).collect()
    }

    /// Every RU splits its budget equally: u_{m,k} = 1/√K.
    pub fn equal_split(&self) -> Vec<f64> {
        vec![(1.0 / self.k as f64).sqrt(); self.m * self.k]
    }

    /// Upper bound on the max-min SINR. Each user's SINR is below M (the
    /// interference sum contains the user's own term) and below
    /// (Σ_m √g_{m,k})², the noise-limited value with every RU at full power.
    pub fn sinr_upper_bound(&self) -> f64 {
        (0..self.k)
            .map(|k| {
                let s: f64 = (0..self.m).map(|m| self.a[m * self.k + k]).sum();
                s * s
            })
            .fold(self.m as f64, f64::min)
    }

    pub fn to_eta(&self, beta: &BetaMatrix, u: &[f64]) -> Result<PowerCoefficients> {
        let values = u
            .iter()
            .zip(beta.values())
            .map(|(x, b)| x * x / b)
            .collect();
        crate::radio::project_feasible(beta, &PowerCoefficients::new(self.m, self.k, values)?)
    }
}

/// Each RU splits its power budget equally across users:
/// `η_{m,k} = 1/(K β_{m,k})`.
pub fn equal_power_baseline(beta: &BetaMatrix) -> PowerCoefficients {
    let k = beta.num_ues() as f64;
    PowerCoefficients::new(
        beta.num_rus(),
        beta.num_ues(),
        beta.values().iter().map(|b| 1.0 / (k * b)).collect(),
    )
    .expect("positive β gives finite non-negative coefficients")
}

/// Decides whether every user can reach SINR `target` within the per-RU
/// power budgets. A feasible outcome carries `ζ = √η` satisfying all
/// constraints.
pub fn check_feasibility(
    beta: &BetaMatrix,
    target: f64,
    total_power: f64,
    noise_power: f64,
    cfg: &SolverConfig,
) -> Result<FeasibilityOutcome> {
    cfg.validate()?;
    if !(target >= 0.0) {
        return Err(Error::InvalidConfig(format!("SINR target {target} must be >= 0")));
    }
    let inst = Instance::new(beta, total_power, noise_power);
    let start = inst.equal_split();
    let run = barrier::phase_one(&inst, target, &start, cfg);
    Ok(run.outcome.into_zeta(beta))
}

/// Maximizes the minimum user SINR subject to `Σ_k η_{m,k} β_{m,k} ≤ 1`.
pub fn solve_mmf(
    beta: &BetaMatrix,
    total_power: f64,
    noise_power: f64,
    cfg: &SolverConfig,
) -> Result<MmfSolution> {
    cfg.validate()?;
    if !(total_power > 0.0 && noise_power > 0.0) {
        return Err(Error::InvalidConfig(
            "total_power and noise_power must be positive".into(),
        ));
    }
    let inst = Instance::new(beta, total_power, noise_power);
    let mut diag = SolverDiagnostics::default();

    let (mut lo, mut best) = polish::equalize(&inst, &inst.equal_split());
    let mut hi = inst.sinr_upper_bound().max(lo);
    if let Some(t) = dual::upper_bound(&inst, &best, &vec![1.0; inst.k], hi) {
        hi = hi.min(t.max(lo));
    }

    while hi - lo > cfg.bisection_tol * lo {
        if diag.bisection_iters == cfg.max_bisection_iters {
            return Err(Error::NoConvergence {
                iterations: diag.bisection_iters,
                width: (hi - lo) / lo,
            });
        }
        diag.bisection_iters += 1;
        let mid = 0.5 * (lo + hi);
        let warm: Vec<f64> = best.iter().map(|x| 0.97 * x).collect();
        let run = barrier::phase_one(&inst, mid, &warm, cfg);
        diag.newton_iters += run.newton_iters;
        match run.outcome {
            barrier::Outcome::Feasible(u) => {
                let (t, u) = polish::equalize(&inst, &u);
                if t >= lo {
                    lo = t;
                    best = u;
                }
                lo = lo.max(mid);
                if lo >= hi {
                    break;
                }
            }
            barrier::Outcome::Infeasible { .. } => hi = mid,
            barrier::Outcome::NotConverged => {
                diag.inner_nonconverged += 1;
                hi = mid;
            }
        }
        if let Some((u, phi)) = run.last {
            let weights: Vec<f64> = phi.iter().map(|p| 1.0 / p).collect();
            if let Some(t) = dual::upper_bound(&inst, &u, &weights, hi) {
                hi = hi.min(t.max(lo));
            }
        }
    }
    diag.bracket_width = ((hi - lo) / lo).max(0.0);

    if cfg.verify_monotonicity {
        for frac in [0.25, 0.5, 0.75] {
            let run = barrier::phase_one(&inst, frac * lo, &inst.equal_split(), cfg);
            assert!(
                matches!(run.outcome, barrier::Outcome::Feasible(_)),
                "feasibility not monotone: {} infeasible below {lo}",
                frac * lo
            );
        }
    }

    let eta = inst.to_eta(beta, &best)?;
    let sinr = compute_sinr(beta, &eta, total_power, noise_power)?;
    let achieved = sinr.iter().copied().fold(f64::INFINITY, f64::min);
    if !(achieved > 0.0) {
        return Err(Error::InfeasibleModel(lo));
    }
    Ok(MmfSolution {
        eta,
        achieved_sinr_target: achieved,
        sinr,
        diagnostics: diag,
    })
}
