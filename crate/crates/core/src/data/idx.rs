//! Big-endian IDX files (the MNIST container).
//!
//! Images: magic `0x00000803`, then count, rows, cols as `u32`, then
//! `count * rows * cols` pixel bytes. Labels: magic `0x00000801`, count, then
//! one byte per label.

use std::fs;
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

struct Reader<'a> {
    what: String,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated {
                what: self.what.clone(),
                detail: format!(
                    "needed {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ),
            }),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn magic(&mut self, expected: u32) -> Result<()> {
        let found = self.u32()?;
        if found != expected {
            return Err(Error::BadMagic {
                what: self.what.clone(),
                expected,
                found,
            });
        }
        Ok(())
    }
}

pub(crate) fn parse_images(what: &str, bytes: &[u8]) -> Result<(usize, usize, usize, Vec<f64>)> {
    let mut r = Reader {
        what: what.to_string(),
        bytes,
        pos: 0,
    };
    r.magic(IMAGE_MAGIC)?;
    let count = r.u32()? as usize;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let pixels = r.take(count * rows * cols)?;
    let data = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    Ok((count, rows, cols, data))
}

pub(crate) fn parse_labels(what: &str, bytes: &[u8]) -> Result<Vec<usize>> {
    let mut r = Reader {
        what: what.to_string(),
        bytes,
        pos: 0,
    };
    r.magic(LABEL_MAGIC)?;
    let count = r.u32()? as usize;
    Ok(r.take(count)?.iter().map(|&l| l as usize).collect())
}

/// Loads an image/label IDX pair. Pixels are scaled to `[0, 1]` and samples
/// are shaped `[1, rows, cols]`; the class count is `max(label) + 1`.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let (count, rows, cols, data) =
        parse_images(&images_path.display().to_string(), &fs::read(images_path)?)?;
    let labels = parse_labels(&labels_path.display().to_string(), &fs::read(labels_path)?)?;
    if labels.len() != count {
        return Err(Error::CountMismatch {
            images: count,
            labels: labels.len(),
        });
    }
    let class_count = labels.iter().max().map_or(0, |m| m + 1);
    let samples = Tensor::new(vec![count, 1, rows, cols], data)?;
    Dataset::new(samples, labels, class_count)
}
