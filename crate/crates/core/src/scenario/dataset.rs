//! Labelled (β, η) pairs and their on-disk container.
//!
//! File layout: the 8-byte magic `DMIMODS1`, a little-endian `u64` header
//! length, a JSON [`DatasetHeader`], then one record per sample made of
//! `M·K` values of β in dB followed by `M·K` values of η, every value a
//! little-endian IEEE-754 `f64`, index `m·K + k` inside each block.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sample_scenario, NetworkConfig};
use crate::error::{Error, Result};
use crate::features::FeatureStats;
use crate::mmf::{solve_mmf, SolverConfig};
use crate::radio::{BetaMatrix, PowerCoefficients};

const MAGIC: &[u8; 8] = b"DMIMODS1";
const ORDERING: &str = "row-major, index = m*K + k";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetOptions {
    pub n_samples: usize,
    /// Share of samples (taken from the front) used for training.
    pub train_fraction: f64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            n_samples: 20_000,
            train_fraction: 0.975,
        }
    }
}

impl DatasetOptions {
    pub fn num_train(&self) -> usize {
        ((self.n_samples as f64) * self.train_fraction).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub beta: BetaMatrix,
    pub eta: PowerCoefficients,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: NetworkConfig,
    pub samples: Vec<LabeledSample>,
    pub num_train: usize,
    /// β statistics (dB) over the training split only.
    pub feature_stats: FeatureStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub config: NetworkConfig,
    pub num_samples: usize,
    pub num_train: usize,
    pub num_rus: usize,
    pub num_ues: usize,
    pub ordering: String,
    pub record: String,
    pub feature_stats: FeatureStats,
}

/// Generates `options.n_samples` scenarios from `config.master_seed` and labels
/// each with `label`. Sample `i` only depends on `(master_seed, i)`.
pub fn gen_dataset<F>(config: &NetworkConfig, options: &DatasetOptions, label: F) -> Result<Dataset>
where
    F: Fn(&BetaMatrix) -> Result<PowerCoefficients> + Sync,
{
    config.validate()?;
    if !(0.0..=1.0).contains(&options.train_fraction) {
        return Err(Error::InvalidConfig("train_fraction must lie in [0, 1]".into()));
    }
    let num_train = options.num_train();
    if num_train == 0 {
        return Err(Error::InvalidConfig("training split is empty".into()));
    }
    let samples = (0..options.n_samples)
        .into_par_iter()
        .map(|i| {
            let (_, beta) = sample_scenario(config, config.master_seed, i as u64)?;
            let eta = label(&beta).map_err(|e| Error::SolverFailure {
                index: i,
                reason: e.to_string(),
                beta_db: beta.to_db(),
            })?;
            Ok(LabeledSample { beta, eta })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::from_samples(config.clone(), samples, num_train)
}

/// [`gen_dataset`] labelled by the max-min fair optimum.
pub fn gen_dataset_mmf(
    config: &NetworkConfig,
    options: &DatasetOptions,
    solver: &SolverConfig,
) -> Result<Dataset> {
    gen_dataset(config, options, |beta| {
        solve_mmf(beta, config.total_power, config.noise_power, solver).map(|s| s.eta)
    })
}

impl Dataset {
    pub fn from_samples(
        config: NetworkConfig,
        samples: Vec<LabeledSample>,
        num_train: usize,
    ) -> Result<Self> {
        if num_train == 0 || num_train > samples.len() {
            return Err(Error::InvalidConfig(format!(
                "num_train {num_train} outside 1..={}",
                samples.len()
            )));
        }
        let train_db: Vec<Vec<f64>> = samples[..num_train].iter().map(|s| s.beta.to_db()).collect();
        let feature_stats = FeatureStats::fit(train_db.iter().map(|r| r.as_slice()))?;
        Ok(Self {
            config,
            samples,
            num_train,
            feature_stats,
        })
    }

    pub fn train(&self) -> &[LabeledSample] {
        &self.samples[..self.num_train]
    }

    pub fn test(&self) -> &[LabeledSample] {
        &self.samples[self.num_train..]
    }

    pub fn header(&self) -> DatasetHeader {
        DatasetHeader {
            format: "dmimo-dataset/1".into(),
            config: self.config.clone(),
            num_samples: self.samples.len(),
            num_train: self.num_train,
            num_rus: self.config.num_rus,
            num_ues: self.config.num_ues,
            ordering: ORDERING.into(),
            record: "beta_db[M*K] then eta[M*K], f64 little-endian".into(),
            feature_stats: self.feature_stats.clone(),
        }
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let header = serde_json::to_vec(&self.header())?;
        out.write_all(MAGIC)?;
        out.write_all(&(header.len() as u64).to_le_bytes())?;
        out.write_all(&header)?;
        for s in &self.samples {
            for v in s.beta.to_db().iter().chain(s.eta.values()) {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a dataset file (bad magic)".into()));
        }
        let header: DatasetHeader = read_json_header(&mut input)?;
        let dim = header.num_rus * header.num_ues;
        if dim != header.config.dim() {
            return Err(Error::Format("header shape disagrees with config".into()));
        }
        let mut samples = Vec::with_capacity(header.num_samples);
        let mut record = vec![0.0; 2 * dim];
        for _ in 0..header.num_samples {
            read_f64s(&mut input, &mut record)?;
            let beta = BetaMatrix::from_db(header.num_rus, header.num_ues, &record[..dim])?;
            let eta = PowerCoefficients::new(header.num_rus, header.num_ues, record[dim..].to_vec())?;
            samples.push(LabeledSample { beta, eta });
        }
        Ok(Self {
            config: header.config,
            samples,
            num_train: header.num_train,
            feature_stats: header.feature_stats,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    /// Same content as the binary file, one sample per CSV row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let (mc, kc) = (self.config.num_rus, self.config.num_ues);
        let mut w = csv::Writer::from_writer(out);
        let mut head = vec!["sample".to_string(), "split".to_string()];
        for prefix in ["beta_db", "eta"] {
            for m in 0..mc {
                for k in 0..kc {
                    head.push(format!("{prefix}_{m}_{k}"));
                }
            }
        }
        w.write_record(&head)?;
        for (i, s) in self.samples.iter().enumerate() {
            let mut row = vec![
                i.to_string(),
                if i < self.num_train { "train" } else { "test" }.to_string(),
            ];
            row.extend(s.beta.to_db().iter().map(|v| v.to_string()));
            row.extend(s.eta.values().iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn read_json_header<R: Read, T: serde::de::DeserializeOwned>(input: &mut R) -> Result<T> {
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len);
    if len > 1 << 30 {
        return Err(Error::Format(format!("implausible header length {len}")));
    }
    let mut buf = vec![0u8; len as usize];
    input.read_exact(&mut buf)?;
    Ok(serde_json::from_slice(&buf)?)
}

pub(crate) fn read_f64s<R: Read>(input: &mut R, out: &mut [f64]) -> Result<()> {
    let mut bytes = [0u8; 8];
    for v in out.iter_mut() {
        input
            .read_exact(&mut bytes)
            .map_err(|e| Error::Format(format!("truncated record block: {e}")))?;
        *v = f64::from_le_bytes(bytes);
    }
    Ok(())
}
