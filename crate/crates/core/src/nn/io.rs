//! Model files: magic, JSON header, then little-endian f64 parameter blocks
//! (per layer, weights row-major then bias).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, MlpModel};
use crate::error::{Error, Result};
use crate::features::FeatureStats;
use crate::scenario::dataset::{read_f64s, read_json_header};

const MAGIC: &[u8; 8] = b"DMIMOMD1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub format: String,
    pub widths: Vec<usize>,
    pub hidden: Activation,
    pub output: Activation,
    pub feature_stats: FeatureStats,
    /// SHA-256 of the architecture, parameters and feature statistics
    pub fingerprint: String,
    pub num_params: usize,
    pub layout: String,
}

impl MlpModel {
    pub fn header(&self) -> ModelHeader {
        ModelHeader {
            format: "dmimo-adv model v1".into(),
            widths: self.widths.clone(),
            hidden: self.hidden,
            output: self.output,
            feature_stats: self.feature_stats.clone(),
            fingerprint: self.fingerprint(),
            num_params: self.num_params(),
            layout: "per layer: weights[out][in] row-major, then bias[out]; f64 little-endian".into(),
        }
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let header = serde_json::to_vec(&self.header())?;
        out.write_all(MAGIC)?;
        out.write_all(&(header.len() as u64).to_le_bytes())?;
        out.write_all(&header)?;
        for v in self.parameters() {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a model and checks its fingerprint.
    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        let header: ModelHeader = read_json_header(&mut input)?;
        let mut model =
            Self::zeroed(&header.widths, header.hidden, header.output, header.feature_stats.clone())?;
        for layer in model.layers_mut() {
            let (rows, cols) = layer.weights.shape();
            let mut buf = vec![0.0; rows * cols];
            read_f64s(&mut input, &mut buf)?;
            for r in 0..rows {
                for c in 0..cols {
                    layer.weights[(r, c)] = buf[r * cols + c];
                }
            }
            read_f64s(&mut input, layer.bias.as_mut_slice())?;
        }
        if model.fingerprint() != header.fingerprint {
            return Err(Error::Format("model fingerprint mismatch".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}
