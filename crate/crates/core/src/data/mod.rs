//! Datasets, preprocessing and augmentation.

pub mod augment;
pub mod cifar;
pub mod split;
pub mod stats;
pub mod synthetic;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use augment::{augment, hflip, shift_image, AugmentOps};
pub use cifar::{load_cifar10, read_cifar10_bin, write_cifar10_bin};
pub use split::{holdout_split, kfold};
pub use stats::{standardize, DatasetStats};
pub use synthetic::{synthetic_dataset, synthetic_from_prototypes, SyntheticKind, SyntheticSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    /// `[C, H, W]`.
    pub pixels: Tensor,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub images: Vec<LabeledImage>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(images: Vec<LabeledImage>, classes: usize) -> Result<Self> {
        if let Some(first) = images.first() {
            let shape = first.pixels.shape();
            for (i, im) in images.iter().enumerate() {
                if im.pixels.shape() != shape {
                    return Err(Error::shape(format!(
                        "image {i} has shape {:?}, expected {shape:?}",
                        im.pixels.shape()
                    )));
                }
                if im.label >= classes {
                    return Err(Error::invalid(format!(
                        "image {i} has label {} but only {classes} classes",
                        im.label
                    )));
                }
            }
        }
        Ok(Dataset { images, classes })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image_shape(&self) -> Option<&[usize]> {
        self.images.first().map(|im| im.pixels.shape())
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            classes: self.classes,
        }
    }

    pub fn labels(&self) -> Vec<usize> {
        self.images.iter().map(|im| im.label).collect()
    }

    /// Stacks the selected images into `[N, C, H, W]`.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let shape = self
            .image_shape()
            .ok_or_else(|| Error::invalid("cannot batch an empty dataset"))?
            .to_vec();
        let mut data = Vec::with_capacity(indices.len() * self.images[0].pixels.len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.images[i].pixels.data());
            labels.push(self.images[i].label);
        }
        let mut full = vec![indices.len()];
        full.extend(shape);
        Ok((Tensor::new(full, data)?, labels))
    }
}
