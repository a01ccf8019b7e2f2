//! Adversarial perturbations of reported fading coefficients, in dB.

mod bim;
mod uap;

pub use bim::{Adversary, BimResult};
pub use uap::UapOutcome;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{shape_mismatch, Error, Result};
use crate::radio::BetaMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threat {
    Full,
    MaliciousRus,
    MaliciousUes,
}

/// Entries the adversary can read and perturb, flattened as `m*K + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackMask {
    pub num_rus: usize,
    pub num_ues: usize,
    pub known: Vec<bool>,
    pub modifiable: Vec<bool>,
    pub threat: Threat,
    /// malicious RU or UE indices; empty for [`Threat::Full`]
    pub indices: Vec<usize>,
}

impl AttackMask {
    pub fn len(&self) -> usize {
        self.modifiable.len()
    }

    pub fn is_empty(&self) -> bool {
        !self.modifiable.iter().any(|&b| b)
    }

    pub fn modifiable_count(&self) -> usize {
        self.modifiable.iter().filter(|&&b| b).count()
    }

    /// A mask with nothing known or modifiable.
    pub fn none(num_rus: usize, num_ues: usize) -> Self {
        Self {
            num_rus,
            num_ues,
            known: vec![false; num_rus * num_ues],
            modifiable: vec![false; num_rus * num_ues],
            threat: Threat::Full,
            indices: Vec::new(),
        }
    }
}

/// Rows (RUs) or columns (UEs) listed in `indices`, or everything.
pub fn make_mask(
    threat: Threat,
    indices: &[usize],
    num_rus: usize,
    num_ues: usize,
) -> Result<AttackMask> {
    let bound = match threat {
        Threat::Full => usize::MAX,
        Threat::MaliciousRus => num_rus,
        Threat::MaliciousUes => num_ues,
    };
    if let Some(&index) = indices.iter().find(|&&i| i >= bound) {
        return Err(Error::IndexOutOfRange { index, bound });
    }
    let mut on = vec![false; num_rus * num_ues];
    for m in 0..num_rus {
        for k in 0..num_ues {
            on[m * num_ues + k] = match threat {
                Threat::Full => true,
                Threat::MaliciousRus => indices.contains(&m),
                Threat::MaliciousUes => indices.contains(&k),
            };
        }
    }
    let mut indices = if threat == Threat::Full {
        Vec::new()
    } else {
        indices.to_vec()
    };
    indices.sort_unstable();
    indices.dedup();
    Ok(AttackMask {
        num_rus,
        num_ues,
        known: on.clone(),
        modifiable: on,
        threat,
        indices,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    /// L∞ budget per entry, dB
    pub epsilon: f64,
    /// BIM step, dB
    pub alpha: f64,
    pub bim_iters: usize,
    /// pool size N of the universal perturbation
    pub uap_samples: usize,
    /// zero the universal perturbation outside the modifiable mask
    pub mask_uap: bool,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self::with_epsilon(8.0)
    }
}

impl AttackConfig {
    /// Default schedule for budget `epsilon`: `α = ε/8`, ten iterations.
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            epsilon,
            alpha: epsilon / 8.0,
            bim_iters: 10,
            uap_samples: 16,
            mask_uap: true,
            seed: 99,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let step_ok = if self.epsilon == 0.0 {
            self.alpha >= 0.0
        } else {
            self.alpha > 0.0 && self.alpha <= self.epsilon
        };
        if self.epsilon >= 0.0 && self.epsilon.is_finite() && step_ok && self.bim_iters >= 1
            && self.uap_samples >= 1
        {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("bad attack config {self:?}")))
        }
    }
}

/// Additive dB perturbation of the reported β.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub delta: Vec<f64>,
}

impl Perturbation {
    pub fn zero(len: usize) -> Self {
        Self {
            delta: vec![0.0; len],
        }
    }

    pub fn linf(&self) -> f64 {
        self.delta.iter().fold(0.0, |a, d| a.max(d.abs()))
    }

    /// Budget and mask contract.
    pub fn check(&self, mask: &AttackMask, epsilon: f64) -> Result<()> {
        if self.delta.len() != mask.len() {
            return Err(shape_mismatch(mask.len(), self.delta.len()));
        }
        for (i, (d, &ok)) in self.delta.iter().zip(&mask.modifiable).enumerate() {
            if !(d.abs() <= epsilon + 1e-12) {
                return Err(Error::BudgetViolation(format!("|δ[{i}]| = {} > {epsilon}", d.abs())));
            }
            if !ok && *d != 0.0 {
                return Err(Error::BudgetViolation(format!("δ[{i}] = {d} off the mask")));
            }
        }
        Ok(())
    }
}

/// `sign` with `sign(0) = +1`.
pub(crate) fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// i.i.d. `N(0, ε²)` on modifiable entries, clipped to `[−ε, ε]`.
pub fn gaussian_attack<R: Rng>(
    beta_true: &BetaMatrix,
    mask: &AttackMask,
    cfg: &AttackConfig,
    rng: &mut R,
) -> Result<Perturbation> {
    cfg.validate()?;
    if beta_true.len() != mask.len() {
        return Err(shape_mismatch(mask.len(), beta_true.len()));
    }
    let mut delta = vec![0.0; mask.len()];
    if cfg.epsilon > 0.0 {
        let normal = Normal::new(0.0, cfg.epsilon).expect("positive std");
        for (d, &ok) in delta.iter_mut().zip(&mask.modifiable) {
            if ok {
                *d = normal.sample(rng).clamp(-cfg.epsilon, cfg.epsilon);
            }
        }
    }
    let p = Perturbation { delta };
    p.check(mask, cfg.epsilon)?;
    Ok(p)
}

/// `β_reported,dB = β_true,dB + δ`.
pub fn apply_attack(beta_true: &BetaMatrix, delta: &Perturbation) -> Result<BetaMatrix> {
    if beta_true.len() != delta.delta.len() {
        return Err(shape_mismatch(beta_true.len(), delta.delta.len()));
    }
    let db: Vec<f64> = beta_true
        .to_db()
        .iter()
        .zip(&delta.delta)
        .map(|(b, d)| b + d)
        .collect();
    BetaMatrix::from_db(beta_true.num_rus(), beta_true.num_ues(), &db)
}
