//! Sum-SE objective seen through a model, and the CP inference path.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::MlpModel;
use crate::error::{shape_mismatch, Result};
use crate::features::{standardize, FeatureVector};
use crate::radio::{project_feasible, BetaMatrix, PowerCoefficients};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// `J = Σ_k SE_k`
    SumSe,
}

#[derive(Debug, Clone)]
pub struct GradientRequest {
    /// standardized input
    pub x: FeatureVector,
    pub objective: Objective,
    /// Held fixed inside the SE formula.
    pub beta_belief: BetaMatrix,
    pub total_power: f64,
    pub noise_power: f64,
}

/// `J(ν) = Σ_k log2(1 + SINR_k)` with `η = ν/β` and its gradient in `ν`.
///
/// With `η = ν/β`, `√η_{m,k} β_{m,k} = √(ν_{m,k} β_{m,k})` and the interference
/// on user `k` is `P_t Σ_m β_{m,k} Σ_ℓ ν_{m,ℓ}`.
pub fn sum_se_with_gradient(
    beta: &BetaMatrix,
    nu: &[f64],
    total_power: f64,
    noise_power: f64,
) -> Result<(f64, Vec<f64>)> {
    let (mc, kc) = (beta.num_rus(), beta.num_ues());
    if nu.len() != mc * kc {
        return Err(shape_mismatch(mc * kc, nu.len()));
    }
    let b = beta.values();
    let nu: Vec<f64> = nu.iter().map(|v| v.max(f64::MIN_POSITIVE)).collect();
    let loads: Vec<f64> = nu.chunks_exact(kc).map(|r| r.iter().sum()).collect();
    let mut coherent = vec![0.0; kc];
    let mut interference = vec![noise_power; kc];
    for m in 0..mc {
        for k in 0..kc {
            let i = m * kc + k;
            coherent[k] += (nu[i] * b[i]).sqrt();
            interference[k] += total_power * b[i] * loads[m];
        }
    }
    let signal: Vec<f64> = coherent.iter().map(|a| total_power * a * a).collect();
    let ln2 = std::f64::consts::LN_2;
    let j = signal
        .iter()
        .zip(&interference)
        .map(|(s, i)| (s / i).ln_1p())
        .sum::<f64>()
        / ln2;

    // ∂J/∂I_k and ∂J/∂S_k
    let d_int: Vec<f64> = signal
        .iter()
        .zip(&interference)
        .map(|(s, i)| (1.0 / (i + s) - 1.0 / i) / ln2)
        .collect();
    let d_sig: Vec<f64> = signal
        .iter()
        .zip(&interference)
        .map(|(s, i)| 1.0 / ((i + s) * ln2))
        .collect();
    let mut grad = vec![0.0; mc * kc];
    for m in 0..mc {
        let via_load: f64 = (0..kc)
            .map(|k| d_int[k] * total_power * b[m * kc + k])
            .sum();
        for j in 0..kc {
            let i = m * kc + j;
            let via_signal = d_sig[j] * total_power * coherent[j] * (b[i] / nu[i]).sqrt();
            grad[i] = via_signal + via_load;
        }
    }
    Ok((j, grad))
}

/// `∇_x J` for one request; the gradient flows through the model only.
pub fn input_gradient(model: &MlpModel, req: &GradientRequest) -> Result<Vec<f64>> {
    let mut out = input_gradients(
        model,
        std::slice::from_ref(&req.x.x),
        std::slice::from_ref(&req.beta_belief),
        req.total_power,
        req.noise_power,
    )?;
    Ok(out.pop().expect("one request").1)
}

/// Batched `(J, ∇_x J)` over standardized inputs with per-row beliefs.
pub fn input_gradients(
    model: &MlpModel,
    xs: &[Vec<f64>],
    beliefs: &[BetaMatrix],
    total_power: f64,
    noise_power: f64,
) -> Result<Vec<(f64, Vec<f64>)>> {
    if xs.len() != beliefs.len() {
        return Err(shape_mismatch(xs.len(), beliefs.len()));
    }
    let d = model.input_dim();
    if let Some(x) = xs.iter().find(|x| x.len() != d) {
        return Err(shape_mismatch(d, x.len()));
    }
    if xs.is_empty() {
        return Ok(Vec::new());
    }
    let batch = DMatrix::from_fn(d, xs.len(), |r, c| xs[c][r]);
    let trace = model.trace(&batch);
    let nu = trace.post.last().expect("output layer");
    let mut dy = DMatrix::zeros(model.output_dim(), xs.len());
    let mut values = Vec::with_capacity(xs.len());
    for (c, beta) in beliefs.iter().enumerate() {
        let (j, g) = sum_se_with_gradient(beta, nu.column(c).as_slice(), total_power, noise_power)?;
        dy.set_column(c, &nalgebra::DVector::from_vec(g));
        values.push(j);
    }
    let (dx, _) = model.backward(&trace, dy, false);
    Ok(values
        .into_iter()
        .enumerate()
        .map(|(c, j)| (j, dx.column(c).as_slice().to_vec()))
        .collect())
}

/// CP inference: standardize, predict ν, recover `η = ν/β_reported`, project.
pub fn predict_allocation(model: &MlpModel, beta_reported: &BetaMatrix) -> Result<PowerCoefficients> {
    let x = standardize(beta_reported, model.feature_stats())?;
    let nu = model.forward(&x.x)?;
    let eta = PowerCoefficients::from_fractions(beta_reported, &nu)?;
    project_feasible(beta_reported, &eta)
}
