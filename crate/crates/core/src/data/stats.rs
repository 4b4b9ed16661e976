use crate::data::LabeledImage;
use crate::error::{Error, Result};

/// Per-channel mean and population standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl DatasetStats {
    pub fn compute(images: &[LabeledImage]) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| Error::invalid("statistics of an empty image set"))?;
        let c = first.pixels.shape()[0];
        let plane = first.pixels.len() / c;
        let count = (images.len() * plane) as f64;
        let mut mean = vec![0.0; c];
        for im in images {
            for (ch, p) in im.pixels.data().chunks(plane).enumerate() {
                mean[ch] += p.iter().sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0; c];
        for im in images {
            for (ch, p) in im.pixels.data().chunks(plane).enumerate() {
                var[ch] += p.iter().map(|v| (v - mean[ch]).powi(2)).sum::<f64>();
            }
        }
        let std: Vec<f64> = var.iter().map(|v| (v / count).sqrt()).collect();
        let stats = DatasetStats { mean, std };
        stats.check()?;
        Ok(stats)
    }

    fn check(&self) -> Result<()> {
        match self.std.iter().position(|&s| !(s > 0.0)) {
            Some(ch) => Err(Error::Degenerate(format!("channel {ch} has zero standard deviation"))),
            None => Ok(()),
        }
    }
}

/// `(x − μ_c)/σ_c` per channel.
pub fn standardize(images: &[LabeledImage], stats: &DatasetStats) -> Result<Vec<LabeledImage>> {
    stats.check()?;
    images
        .iter()
        .map(|im| {
            let c = im.pixels.shape()[0];
            if c != stats.mean.len() {
                return Err(Error::shape(format!(
                    "image has {c} channels, statistics have {}",
                    stats.mean.len()
                )));
            }
            let plane = im.pixels.len() / c;
            let mut pixels = im.pixels.clone();
            for (ch, p) in pixels.data_mut().chunks_mut(plane).enumerate() {
                p.iter_mut().for_each(|v| *v = (*v - stats.mean[ch]) / stats.std[ch]);
            }
            Ok(LabeledImage {
                pixels,
                label: im.label,
            })
        })
        .collect()
}
