//! Model-input conditioning: standardized dB-domain fading features.

use serde::{Deserialize, Serialize};

use crate::error::{shape_mismatch, Error, Result};
use crate::radio::BetaMatrix;

const MIN_STD: f64 = 1e-12;

/// Per-entry mean and standard deviation of β in dB over a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    /// Population statistics of the given dB rows.
    pub fn fit<'a, I>(rows_db: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut iter = rows_db.into_iter().peekable();
        let width = iter.peek().map(|r| r.len()).ok_or(Error::EmptySamples)?;
        let mut n = 0usize;
        let mut mean = vec![0.0; width];
        let mut m2 = vec![0.0; width];
        // Welford
        for row in iter {
            if row.len() != width {
                return Err(shape_mismatch(width, row.len()));
            }
            n += 1;
            for ((mu, s), &x) in mean.iter_mut().zip(m2.iter_mut()).zip(row) {
                let d = x - *mu;
                *mu += d / n as f64;
                *s += d * (x - *mu);
            }
        }
        let std = m2.into_iter().map(|s| (s / n as f64).sqrt()).collect();
        Ok(Self { mean, std })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    fn validate(&self, len: usize) -> Result<()> {
        if self.mean.len() != len || self.std.len() != len {
            return Err(shape_mismatch(len, self.mean.len()));
        }
        if let Some((index, &std)) = self
            .std
            .iter()
            .enumerate()
            .find(|(_, s)| !(**s >= MIN_STD))
        {
            return Err(Error::DegenerateStd { index, std });
        }
        Ok(())
    }

    pub fn standardize_db(&self, beta_db: &[f64]) -> Result<Vec<f64>> {
        self.validate(beta_db.len())?;
        Ok(beta_db
            .iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| (x - m) / s)
            .collect())
    }

    pub fn destandardize_db(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.validate(x.len())?;
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| x * s + m)
            .collect())
    }
}

/// Standardized model input `x`, ordered `m * K + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub x: Vec<f64>,
}

pub fn standardize(beta: &BetaMatrix, stats: &FeatureStats) -> Result<FeatureVector> {
    Ok(FeatureVector {
        x: stats.standardize_db(&beta.to_db())?,
    })
}

pub fn destandardize(
    features: &FeatureVector,
    stats: &FeatureStats,
    num_rus: usize,
    num_ues: usize,
) -> Result<BetaMatrix> {
    BetaMatrix::from_db(num_rus, num_ues, &stats.destandardize_db(&features.x)?)
}
