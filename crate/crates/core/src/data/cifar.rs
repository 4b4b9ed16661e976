//! CIFAR-10 binary records: one label byte, then 1024 bytes each of the red,
//! green and blue planes, every plane row-major 32×32.

use std::path::Path;

use crate::data::{Dataset, LabeledImage};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SIDE: usize = 32;
pub const PLANE: usize = SIDE * SIDE;
pub const RECORD: usize = 1 + 3 * PLANE;
pub const CLASSES: usize = 10;

pub fn read_cifar10_bin(bytes: &[u8]) -> Result<Vec<LabeledImage>> {
    if bytes.len() % RECORD != 0 {
        return Err(Error::Format(format!(
            "{} bytes is not a whole number of {RECORD}-byte records",
            bytes.len()
        )));
    }
    bytes
        .chunks(RECORD)
        .enumerate()
        .map(|(i, rec)| {
            let label = rec[0] as usize;
            if label >= CLASSES {
                return Err(Error::Format(format!("record {i}: label byte {label} > 9")));
            }
            let pixels = rec[1..].iter().map(|&b| b as f64).collect();
            Ok(LabeledImage {
                pixels: Tensor::new([3, SIDE, SIDE], pixels)?,
                label,
            })
        })
        .collect()
}

/// Inverse of [`read_cifar10_bin`]. Pixels must be integers in `[0, 255]`.
pub fn write_cifar10_bin(images: &[LabeledImage]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(images.len() * RECORD);
    for (i, im) in images.iter().enumerate() {
        if im.pixels.shape() != [3, SIDE, SIDE] {
            return Err(Error::shape(format!("image {i}: {:?} is not [3, 32, 32]", im.pixels.shape())));
        }
        if im.label >= CLASSES {
            return Err(Error::Format(format!("image {i}: label {} > 9", im.label)));
        }
        out.push(im.label as u8);
        for &v in im.pixels.data() {
            if !(0.0..=255.0).contains(&v) || v.fract() != 0.0 {
                return Err(Error::Format(format!("image {i}: pixel {v} is not a byte value")));
            }
            out.push(v as u8);
        }
    }
    Ok(out)
}

fn read_file(path: &Path) -> Result<Vec<LabeledImage>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_cifar10_bin(&bytes)
}

/// Loads `(train, test)`. A directory must hold `data_batch_{1..5}.bin`
/// (any present subset) and `test_batch.bin`; a single file is split with
/// its last sixth as the test set.
pub fn load_cifar10(path: &Path) -> Result<(Dataset, Dataset)> {
    if path.is_dir() {
        let mut train = Vec::new();
        for b in 1..=5 {
            let p = path.join(format!("data_batch_{b}.bin"));
            if p.exists() {
                train.extend(read_file(&p)?);
            }
        }
        if train.is_empty() {
            return Err(Error::Format(format!("{}: no data_batch_*.bin files", path.display())));
        }
        let test = read_file(&path.join("test_batch.bin"))?;
        Ok((Dataset::new(train, CLASSES)?, Dataset::new(test, CLASSES)?))
    } else {
        let mut all = read_file(path)?;
        if all.len() < 2 {
            return Err(Error::Format(format!("{}: need at least two records", path.display())));
        }
        let test = all.split_off(all.len() - (all.len() / 6).max(1));
        Ok((Dataset::new(all, CLASSES)?, Dataset::new(test, CLASSES)?))
    }
}
