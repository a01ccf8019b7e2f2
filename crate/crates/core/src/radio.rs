//! Closed-form downlink arithmetic for a D-MIMO network with per-RU MRT
//! precoding: SINR, spectral efficiency, energy efficiency and the per-RU
//! power constraint.
//!
//! All M×K quantities are stored row-major with flat index `m * K + k`
//! (RU `m`, UE `k`).

use serde::{Deserialize, Serialize};

use crate::error::{shape_mismatch, Error, Result};

/// Large-scale fading coefficients β in linear scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaMatrix {
    num_rus: usize,
    num_ues: usize,
    values: Vec<f64>,
}

impl BetaMatrix {
    pub fn new(num_rus: usize, num_ues: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_rus * num_ues {
            return Err(shape_mismatch(
                format!("{num_rus}x{num_ues}"),
                format!("{} values", values.len()),
            ));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "large-scale fading coefficients must be positive and finite, found {bad}"
            )));
        }
        Ok(Self {
            num_rus,
            num_ues,
            values,
        })
    }

    pub fn from_db(num_rus: usize, num_ues: usize, values_db: &[f64]) -> Result<Self> {
        Self::new(
            num_rus,
            num_ues,
            values_db.iter().map(|&db| db_to_linear(db)).collect(),
        )
    }

    pub fn num_rus(&self) -> usize {
        self.num_rus
    }

    pub fn num_ues(&self) -> usize {
        self.num_ues
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, m: usize, k: usize) -> f64 {
        self.values[m * self.num_ues + k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_db(&self) -> Vec<f64> {
        self.values.iter().map(|&v| linear_to_db(v)).collect()
    }

    fn check_same_shape(&self, eta: &PowerCoefficients) -> Result<()> {
        if self.num_rus != eta.num_rus || self.num_ues != eta.num_ues {
            return Err(shape_mismatch(
                format!("{}x{}", self.num_rus, self.num_ues),
                format!("{}x{}", eta.num_rus, eta.num_ues),
            ));
        }
        Ok(())
    }
}

/// Power-control coefficients η.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCoefficients {
    num_rus: usize,
    num_ues: usize,
    values: Vec<f64>,
}

impl PowerCoefficients {
    pub fn new(num_rus: usize, num_ues: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_rus * num_ues {
            return Err(shape_mismatch(
                format!("{num_rus}x{num_ues}"),
                format!("{} values", values.len()),
            ));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "power coefficients must be non-negative and finite, found {bad}"
            )));
        }
        Ok(Self {
            num_rus,
            num_ues,
            values,
        })
    }

    pub fn zeros(num_rus: usize, num_ues: usize) -> Self {
        Self {
            num_rus,
            num_ues,
            values: vec![0.0; num_rus * num_ues],
        }
    }

    /// Recovers η = ν / β from per-RU power fractions ν = η·β.
    /// Negative or non-finite fractions are clamped to zero.
    pub fn from_fractions(beta: &BetaMatrix, nu: &[f64]) -> Result<Self> {
        if nu.len() != beta.len() {
            return Err(shape_mismatch(beta.len(), nu.len()));
        }
        let values = nu
            .iter()
            .zip(beta.values())
            .map(|(&n, &b)| if n.is_finite() && n > 0.0 { n / b } else { 0.0 })
            .collect();
        Ok(Self {
            num_rus: beta.num_rus,
            num_ues: beta.num_ues,
            values,
        })
    }

    /// ν = η·β, the share of RU power spent on each user.
    pub fn fractions(&self, beta: &BetaMatrix) -> Result<Vec<f64>> {
        beta.check_same_shape(self)?;
        Ok(self
            .values
            .iter()
            .zip(beta.values())
            .map(|(e, b)| e * b)
            .collect())
    }

    pub fn num_rus(&self) -> usize {
        self.num_rus
    }

    pub fn num_ues(&self) -> usize {
        self.num_ues
    }

    #[inline]
    pub fn get(&self, m: usize, k: usize) -> f64 {
        self.values[m * self.num_ues + k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            num_rus: self.num_rus,
            num_ues: self.num_ues,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Per-user and network-level figures of merit for one allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralMetrics {
    pub sinr: Vec<f64>,
    /// bits/s/Hz
    pub se: Vec<f64>,
    pub min_se: f64,
    pub sum_se: f64,
    /// bits/joule
    pub ee: f64,
}

impl SpectralMetrics {
    pub fn evaluate(
        beta: &BetaMatrix,
        eta: &PowerCoefficients,
        total_power: f64,
        noise_power: f64,
        bandwidth: f64,
    ) -> Result<Self> {
        let sinr = compute_sinr(beta, eta, total_power, noise_power)?;
        let se = compute_se(&sinr)?;
        let ee = compute_ee(beta, eta, &se, bandwidth, total_power)?;
        let min_se = se.iter().copied().fold(f64::INFINITY, f64::min);
        let sum_se = se.iter().sum();
        Ok(Self {
            sinr,
            se,
            min_se,
            sum_se,
            ee,
        })
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Per-user SINR under MRT with statistical channel knowledge at the UEs.
///
/// The interference sum runs over every user ℓ including ℓ = k, which models
/// the beamforming-gain uncertainty of the intended user.
pub fn compute_sinr(
    beta: &BetaMatrix,
    eta: &PowerCoefficients,
    total_power: f64,
    noise_power: f64,
) -> Result<Vec<f64>> {
    beta.check_same_shape(eta)?;
    let (m_count, k_count) = (beta.num_rus, beta.num_ues);
    // loads[m] = Σ_ℓ η_{m,ℓ} β_{m,ℓ}
    let loads = power_violation(beta, eta)?;
    let mut sinr = Vec::with_capacity(k_count);
    for k in 0..k_count {
        let mut coherent = 0.0;
        let mut interference = 0.0;
        for (m, load) in loads.iter().enumerate().take(m_count) {
            let b = beta.get(m, k);
            coherent += eta.get(m, k).sqrt() * b;
            interference += load * b;
        }
        let signal = total_power * coherent * coherent;
        sinr.push(signal / (total_power * interference + noise_power));
    }
    Ok(sinr)
}

pub fn compute_se(sinr: &[f64]) -> Result<Vec<f64>> {
    sinr.iter()
        .map(|&s| {
            if s < 0.0 || s.is_nan() {
                Err(Error::NegativeSinr(s))
            } else {
                Ok((1.0 + s).log2())
            }
        })
        .collect()
}

/// Access-link energy efficiency: delivered bits per joule of transmit
/// energy. `bandwidth` is the per-user bandwidth in Hz (equal for all users).
pub fn compute_ee(
    beta: &BetaMatrix,
    eta: &PowerCoefficients,
    se: &[f64],
    bandwidth: f64,
    total_power: f64,
) -> Result<f64> {
    if se.len() != beta.num_ues {
        return Err(shape_mismatch(beta.num_ues, se.len()));
    }
    let consumed: f64 = power_violation(beta, eta)?.iter().sum();
    if consumed <= 0.0 {
        return Err(Error::ZeroPower);
    }
    let throughput: f64 = se.iter().map(|s| bandwidth * s).sum();
    Ok(throughput / (total_power * consumed))
}

/// Per-RU load `v_m = Σ_k η_{m,k} β_{m,k}`; the allocation is feasible iff
/// every load is at most one.
pub fn power_violation(beta: &BetaMatrix, eta: &PowerCoefficients) -> Result<Vec<f64>> {
    beta.check_same_shape(eta)?;
    let k_count = beta.num_ues;
    Ok(beta
        .values
        .chunks_exact(k_count.max(1))
        .zip(eta.values.chunks_exact(k_count.max(1)))
        .map(|(b_row, e_row)| b_row.iter().zip(e_row).map(|(b, e)| b * e).sum())
        .take(beta.num_rus)
        .collect())
}

/// Scales down every overloaded RU row so that its load becomes one.
/// Negative entries are clamped to zero first; feasible rows are untouched.
pub fn project_feasible(beta: &BetaMatrix, eta: &PowerCoefficients) -> Result<PowerCoefficients> {
    beta.check_same_shape(eta)?;
    let k_count = beta.num_ues;
    let mut values: Vec<f64> = eta.values.iter().map(|v| v.max(0.0)).collect();
    if k_count == 0 {
        return PowerCoefficients::new(beta.num_rus, 0, values);
    }
    for (row, b_row) in values
        .chunks_exact_mut(k_count)
        .zip(beta.values.chunks_exact(k_count))
    {
        let load: f64 = row.iter().zip(b_row).map(|(e, b)| e * b).sum();
        if load > 1.0 {
            let scale = 1.0 / load;
            row.iter_mut().for_each(|e| *e *= scale);
            // guard against the product rounding a hair above one
            while row.iter().zip(b_row).map(|(e, b)| e * b).sum::<f64>() > 1.0 {
                row.iter_mut().for_each(|e| *e *= 1.0 - f64::EPSILON);
            }
        }
    }
    PowerCoefficients::new(beta.num_rus, k_count, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn unit() -> (BetaMatrix, PowerCoefficients) {
        (
            BetaMatrix::new(1, 1, vec![1.0]).unwrap(),
            PowerCoefficients::new(1, 1, vec![1.0]).unwrap(),
        )
    }

    #[test]
    fn single_link_hand_arithmetic() {
        let (beta, eta) = unit();
        let sinr = compute_sinr(&beta, &eta, 1.0, 1.0).unwrap();
        assert_relative_eq!(sinr[0], 0.5, max_relative = 1e-15);
        let se = compute_se(&sinr).unwrap();
        assert_relative_eq!(se[0], 1.5f64.log2(), max_relative = 1e-15);
        assert_relative_eq!(se[0], 0.58496, epsilon = 1e-5);
        let ee = compute_ee(&beta, &eta, &se, 1.0, 1.0).unwrap();
        assert_relative_eq!(ee, se[0], max_relative = 1e-15);
    }

    #[test]
    fn zero_power_gives_zero_rate() {
        let beta = BetaMatrix::new(2, 3, vec![0.3, 1.0, 2.0, 0.1, 0.5, 4.0]).unwrap();
        let eta = PowerCoefficients::zeros(2, 3);
        let sinr = compute_sinr(&beta, &eta, 0.2, 1e-3).unwrap();
        assert!(sinr.iter().all(|&s| s == 0.0));
        assert!(compute_se(&sinr).unwrap().iter().all(|&s| s == 0.0));
        assert!(matches!(
            compute_ee(&beta, &eta, &[0.0; 3], 1.0, 1.0),
            Err(Error::ZeroPower)
        ));
        assert_eq!(power_violation(&beta, &eta).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn se_of_simple_sinr_values() {
        assert_eq!(compute_se(&[0.0, 1.0, 3.0]).unwrap(), vec![0.0, 1.0, 2.0]);
        assert!(matches!(compute_se(&[-0.1]), Err(Error::NegativeSinr(_))));
    }

    #[test]
    fn ee_is_linear_in_bandwidth_and_inverse_in_power() {
        let beta = BetaMatrix::new(2, 2, vec![1.0, 2.0, 0.5, 3.0]).unwrap();
        let eta = PowerCoefficients::new(2, 2, vec![0.2, 0.1, 0.4, 0.05]).unwrap();
        let se = [1.3, 0.7];
        let base = compute_ee(&beta, &eta, &se, 1e6, 0.2).unwrap();
        assert_relative_eq!(
            compute_ee(&beta, &eta, &se, 2e6, 0.2).unwrap(),
            2.0 * base,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            compute_ee(&beta, &eta.scaled(0.25), &se, 1e6, 0.2).unwrap(),
            4.0 * base,
            max_relative = 1e-14
        );
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let beta = BetaMatrix::new(2, 2, vec![1.0; 4]).unwrap();
        let eta = PowerCoefficients::zeros(2, 3);
        assert!(matches!(
            compute_sinr(&beta, &eta, 1.0, 1.0),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(BetaMatrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(BetaMatrix::new(1, 1, vec![0.0]).is_err());
        assert!(PowerCoefficients::new(1, 1, vec![-1.0]).is_err());
    }

    #[test]
    fn equal_split_loads_every_ru_exactly() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (m, k) = (5, 3);
        let b: Vec<f64> = (0..m * k).map(|_| rng.gen_range(1e-6..1.0)).collect();
        let beta = BetaMatrix::new(m, k, b.clone()).unwrap();
        let eta =
            PowerCoefficients::new(m, k, b.iter().map(|x| 1.0 / (k as f64 * x)).collect()).unwrap();
        for v in power_violation(&beta, &eta).unwrap() {
            assert_relative_eq!(v, 1.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn projection_scales_only_overloaded_rows() {
        let beta = BetaMatrix::new(2, 2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let eta = PowerCoefficients::new(2, 2, vec![1.5, 0.5, 0.3, 0.2]).unwrap();
        let p = project_feasible(&beta, &eta).unwrap();
        assert_eq!(&p.values()[2..], &[0.3, 0.2]);
        assert_relative_eq!(p.values()[0], 0.75, max_relative = 1e-15);
        assert_relative_eq!(p.values()[1], 0.25, max_relative = 1e-15);
        let loads = power_violation(&beta, &p).unwrap();
        assert!(loads[0] <= 1.0);
        assert_relative_eq!(loads[0], 1.0, max_relative = 1e-15);

        let feasible = PowerCoefficients::new(2, 2, vec![0.5, 0.5, 0.1, 0.0]).unwrap();
        assert_eq!(project_feasible(&beta, &feasible).unwrap(), feasible);
    }

    #[test]
    fn db_round_trip() {
        let beta = BetaMatrix::new(1, 3, vec![1e-13, 3.7e-9, 0.42]).unwrap();
        let back = BetaMatrix::from_db(1, 3, &beta.to_db()).unwrap();
        for (a, b) in beta.values().iter().zip(back.values()) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }
}
