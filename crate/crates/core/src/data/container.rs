//! Generic little-endian dataset container for arbitrary tensor datasets.
//!
//! ```text
//! magic        8 bytes   "BFELDATA"
//! version      u32       1
//! count        u64       number of samples
//! ndim         u32       rank of one sample
//! dims         ndim x u64
//! class_count  u32
//! samples      count * prod(dims) x f64, row-major
//! labels       count x u16
//! ```
//!
//! All integers and floats are little-endian. Trailing bytes are rejected.

use std::fs;
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const CONTAINER_MAGIC: &[u8; 8] = b"BFELDATA";
pub const CONTAINER_VERSION: u32 = 1;

pub fn encode_container(dataset: &Dataset) -> Result<Vec<u8>> {
    if dataset.class_count() > usize::from(u16::MAX) + 1 {
        return Err(Error::Malformed(format!(
            "{} classes do not fit u16 labels",
            dataset.class_count()
        )));
    }
    let dims = dataset.sample_shape();
    let mut out = Vec::with_capacity(32 + dataset.samples().len() * 8 + dataset.len() * 2);
    out.extend_from_slice(CONTAINER_MAGIC);
    out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    out.extend_from_slice(&(dataset.len() as u64).to_le_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    out.extend_from_slice(&(dataset.class_count() as u32).to_le_bytes());
    for v in dataset.samples().data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &l in dataset.labels() {
        out.extend_from_slice(&(l as u16).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_container(bytes: &[u8]) -> Result<Dataset> {
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let end = pos
            .checked_add(n)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::Truncated {
                what: "dataset container".into(),
                detail: format!("needed {n} bytes at offset {pos}, have {}", bytes.len()),
            })?;
        let s = &bytes[pos..end];
        pos = end;
        Ok(s)
    };
    let magic = take(8)?;
    if magic != CONTAINER_MAGIC {
        return Err(Error::Malformed(format!(
            "dataset container magic {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != CONTAINER_VERSION {
        return Err(Error::Malformed(format!(
            "unsupported container version {version}"
        )));
    }
    let count = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let ndim = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let mut dims = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        dims.push(u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize);
    }
    let class_count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let per_sample: usize = dims.iter().product();
    let values = count
        .checked_mul(per_sample)
        .ok_or_else(|| Error::Malformed("sample count overflow".into()))?;
    let raw = take(values.saturating_mul(8))?;
    let data = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let raw_labels = take(count * 2)?;
    let labels = raw_labels
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]) as usize)
        .collect();
    if pos != bytes.len() {
        return Err(Error::Malformed(format!(
            "{} trailing bytes after container",
            bytes.len() - pos
        )));
    }
    let mut shape = vec![count];
    shape.extend(dims);
    Dataset::new(Tensor::new(shape, data)?, labels, class_count)
}

pub fn write_container(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    fs::write(path, encode_container(dataset)?)?;
    Ok(())
}

pub fn read_container(path: impl AsRef<Path>) -> Result<Dataset> {
    decode_container(&fs::read(path)?)
}
