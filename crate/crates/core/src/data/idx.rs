//! IDX (MNIST-style) image and label files: big-endian header, unsigned
//! byte payload.

use std::path::Path;

use super::dataset::{Dataset, Provenance, SplitSpec, Targets};
use crate::error::{Error, Result};
use crate::model::FeaturePartition;
use crate::numeric::Matrix;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Data(format!("{what}: truncated header")))
}

/// Parses an IDX buffer, returning its dimensions and payload.
pub fn parse_idx(bytes: &[u8], expected_magic: u32, what: &str) -> Result<(Vec<usize>, Vec<u8>)> {
    let magic = read_u32(bytes, 0, what)?;
    if magic != expected_magic {
        return Err(Error::Data(format!(
            "{what}: bad magic {magic:#010x}, expected {expected_magic:#010x}"
        )));
    }
    let ndim = (magic & 0xff) as usize;
    let dims = (0..ndim)
        .map(|k| read_u32(bytes, 4 + 4 * k, what).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let start = 4 + 4 * ndim;
    let len: usize = dims.iter().product();
    let payload = bytes
        .get(start..start + len)
        .ok_or_else(|| Error::Data(format!("{what}: truncated payload, need {len} bytes")))?;
    Ok((dims, payload.to_vec()))
}

pub fn encode_idx_images(images: &[Vec<u8>], height: usize, width: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * height * width);
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    for d in [images.len(), height, width] {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    for img in images {
        out.extend_from_slice(img);
    }
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Loads images scaled to `[0, 1]` with one feature group per `patch x patch`
/// block.
pub fn load_idx_images(
    images: impl AsRef<Path>,
    labels: impl AsRef<Path>,
    patch: usize,
    split: &SplitSpec,
    seed: u64,
) -> Result<Dataset<f64>> {
    let img_bytes = std::fs::read(images.as_ref())?;
    let lbl_bytes = std::fs::read(labels.as_ref())?;
    let (dims, pixels) = parse_idx(&img_bytes, IMAGES_MAGIC, "images")?;
    let (ldims, lbls) = parse_idx(&lbl_bytes, LABELS_MAGIC, "labels")?;
    let (n, h, w) = (dims[0], dims[1], dims[2]);
    if ldims[0] != n {
        return Err(Error::Data(format!("{n} images but {} labels", ldims[0])));
    }
    let partition = FeaturePartition::square_patches(h, w, patch)?;
    let inputs = Matrix::from_vec(n, h * w, pixels.iter().map(|&p| f64::from(p) / 255.0).collect())?;
    let labels: Vec<usize> = lbls.iter().map(|&l| usize::from(l)).collect();
    let classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
    let splits = split.split(Some(&labels), n, seed)?;
    Dataset::new(
        inputs,
        Targets::Classes { labels, classes },
        partition,
        splits,
        Provenance {
            source: images.as_ref().display().to_string(),
            seed: Some(split.seed.unwrap_or(seed)),
            ..Provenance::default()
        },
    )
}
