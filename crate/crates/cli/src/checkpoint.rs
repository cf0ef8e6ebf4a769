//! Binary checkpoints: `FLAN`, a version byte, a little-endian `u32` header
//! length, a JSON header, then every parameter as a little-endian `f64` in
//! declaration order.

use std::path::Path;

use flan::model::{EncoderSpec, FeaturePartition, FlanModel, OutputKind, PredictorSpec};
use flan::{Flan64, Rng};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"FLAN";
pub const VERSION: u8 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct CheckpointHeader {
    pub partition: FeaturePartition,
    pub encoder: EncoderSpec,
    pub predictor: PredictorSpec,
    pub output: OutputKind,
    /// `(rows, cols)` of each parameter block.
    pub shapes: Vec<(usize, usize)>,
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn from_model(model: &Flan64, config_hash: &str, seed: u64) -> Self {
        let params = model.params();
        Self {
            header: CheckpointHeader {
                partition: model.partition().clone(),
                encoder: model.encoder_spec().clone(),
                predictor: model.predictor_spec().clone(),
                output: model.output_kind(),
                shapes: params.iter().map(|p| p.shape()).collect(),
                config_hash: config_hash.to_owned(),
                seed,
            },
            params: params.iter().flat_map(|p| p.as_slice().iter().copied()).collect(),
        }
    }

    /// Rebuilds the model; the architecture comes from the header and every
    /// parameter from the payload.
    pub fn to_model(&self) -> Result<Flan64> {
        let h = &self.header;
        let mut model = FlanModel::new(
            h.partition.clone(),
            h.encoder.clone(),
            h.predictor.clone(),
            h.output,
            &mut Rng::new(0),
        )?;
        let total: usize = h.shapes.iter().map(|(r, c)| r * c).sum();
        if total != self.params.len() {
            return Err(CliError::Checkpoint(format!(
                "{} parameters for {total} declared",
                self.params.len()
            )));
        }
        let mut offset = 0;
        let mut blocks = model.params_mut();
        if blocks.len() != h.shapes.len() {
            return Err(CliError::Checkpoint(format!(
                "header lists {} parameter blocks, architecture has {}",
                h.shapes.len(),
                blocks.len()
            )));
        }
        for (k, (block, &shape)) in blocks.iter_mut().zip(&h.shapes).enumerate() {
            if block.shape() != shape {
                return Err(CliError::Checkpoint(format!(
                    "parameter block {k} is {:?} in the header but {:?} in the architecture",
                    shape,
                    block.shape()
                )));
            }
            let n = block.len();
            block.as_mut_slice().copy_from_slice(&self.params[offset..offset + n]);
            offset += n;
        }
        Ok(model)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let len = u32::try_from(header.len()).map_err(|_| CliError::Checkpoint("header too large".into()))?;
        let mut out = Vec::with_capacity(9 + header.len() + 8 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&header);
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(CliError::Checkpoint("has bad magic".into()));
        }
        match bytes.get(4) {
            Some(&VERSION) => {}
            Some(v) => return Err(CliError::Checkpoint(format!("version {v} is not supported (expected {VERSION})"))),
            None => return Err(CliError::Checkpoint("is truncated in the preamble".into())),
        }
        let len = bytes
            .get(5..9)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
            .ok_or_else(|| CliError::Checkpoint("is truncated in the preamble".into()))?;
        let header_bytes = bytes
            .get(9..9 + len)
            .ok_or_else(|| CliError::Checkpoint("is truncated in the header".into()))?;
        let header: CheckpointHeader = serde_json::from_slice(header_bytes)
            .map_err(|e| CliError::Checkpoint(format!("header is malformed: {e}")))?;
        let expected: usize = header.shapes.iter().map(|(r, c)| r * c).sum();
        let payload = &bytes[9 + len..];
        if payload.len() != 8 * expected {
            return Err(CliError::Checkpoint(format!(
                "payload holds {} bytes, header implies {}",
                payload.len(),
                8 * expected
            )));
        }
        let params = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Self { header, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    /// Reads a checkpoint and, when `expected_hash` is given, requires the
    /// recorded task hash to match unless `allow_mismatch` is set.
    pub fn load(path: impl AsRef<Path>, expected_hash: Option<&str>, allow_mismatch: bool) -> Result<Self> {
        let ckpt = Self::from_bytes(&std::fs::read(path)?)?;
        if let Some(expected) = expected_hash {
            if expected != ckpt.header.config_hash {
                if !allow_mismatch {
                    return Err(CliError::HashMismatch {
                        expected: expected.to_owned(),
                        found: ckpt.header.config_hash.clone(),
                    });
                }
                log::warn!("loading checkpoint despite task hash mismatch");
            }
        }
        Ok(ckpt)
    }
}
