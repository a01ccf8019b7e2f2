use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Domain};

/// Empirical distribution of a sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cdf {
    sorted: Vec<f64>,
}

impl Cdf {
    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Nearest-rank percentile: the `⌈p·n⌉`-th smallest sample, `p ∈ [0, 1]`.
    pub fn percentile(&self, p: f64) -> f64 {
        percentile_sorted(&self.sorted, p)
    }

    pub fn median(&self) -> f64 {
        self.percentile(0.5)
    }

    pub fn p5(&self) -> f64 {
        self.percentile(0.05)
    }

    /// Fraction of samples `≤ x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|v| *v <= x) as f64 / self.sorted.len() as f64
    }

    /// `(value, probability)` at every distinct sample.
    pub fn series(&self) -> Vec<(f64, f64)> {
        let n = self.sorted.len() as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (i, &v) in self.sorted.iter().enumerate() {
            let p = (i + 1) as f64 / n;
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 = p,
                _ => out.push((v, p)),
            }
        }
        out
    }
}

pub fn compute_cdf(samples: &[f64]) -> Result<Cdf> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidConfig("NaN in CDF samples".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Cdf { sorted })
}

pub(crate) fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = (p.clamp(0.0, 1.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Standard deviation of `stat` over `resamples` bootstrap resamples of the
/// `groups` (whole groups are drawn with replacement and concatenated). The
/// same seed gives the same resample indices, pairing comparisons.
pub fn bootstrap_se<F>(groups: &[Vec<f64>], resamples: usize, seed: u64, stat: F) -> f64
where
    F: Fn(&mut [f64]) -> f64,
{
    if groups.is_empty() || resamples < 2 {
        return 0.0;
    }
    let mut rng = stream(seed, Domain::Bootstrap, 0);
    let total: usize = groups.iter().map(Vec::len).sum();
    let mut buf = Vec::with_capacity(total);
    let mut values = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        buf.clear();
        for _ in 0..groups.len() {
            buf.extend_from_slice(&groups[rng.gen_range(0..groups.len())]);
        }
        values.push(stat(&mut buf));
    }
    let mean = values.iter().sum::<f64>() / resamples as f64;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (resamples - 1) as f64).sqrt()
}

/// Nearest-rank percentile of an unsorted buffer (sorted in place).
pub fn percentile_of(buf: &mut [f64], p: f64) -> f64 {
    buf.sort_by(f64::total_cmp);
    percentile_sorted(buf, p)
}

pub fn mean_of(buf: &mut [f64]) -> f64 {
    buf.iter().sum::<f64>() / buf.len() as f64
}
