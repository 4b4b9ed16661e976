//! Gaussian-blob classification tasks for desk-scale experiments.

use crate::data::augment::shift_image;
use crate::data::{Dataset, LabeledImage};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub channels: usize,
    pub size: usize,
    /// Blobs per channel of each prototype.
    pub blobs: usize,
    /// Standard deviation of the additive pixel noise; prototypes have unit RMS.
    pub noise: f64,
    /// Maximum random translation of a sample, per axis.
    pub jitter: usize,
    /// Pair classes as `p` and `−p`.
    pub antipodal: bool,
    pub kind: SyntheticKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntheticKind {
    /// Smooth Gaussian-blob prototypes.
    Blobs,
    /// One random `size×size` motif per class, stamped `copies` times at
    /// random positions with independent random signs.
    SignedMotifs { size: usize, copies: usize },
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            classes: 4,
            train_per_class: 100,
            test_per_class: 50,
            channels: 3,
            size: 8,
            blobs: 3,
            noise: 0.5,
            jitter: 1,
            antipodal: true,
            kind: SyntheticKind::Blobs,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub train: Dataset,
    pub test: Dataset,
    pub prototypes: Vec<Tensor>,
}

fn random_prototype(spec: &SyntheticSpec, rng: &mut RngStream) -> Tensor {
    let s = spec.size;
    let mut p = Tensor::zeros([spec.channels, s, s]);
    let data = p.data_mut();
    for ch in 0..spec.channels {
        for _ in 0..spec.blobs {
            let cy = rng.uniform() * (s as f64 - 1.0);
            let cx = rng.uniform() * (s as f64 - 1.0);
            let width = 0.5 + rng.uniform() * (s as f64 / 4.0).max(0.5);
            let amp = rng.gaussian();
            for y in 0..s {
                for x in 0..s {
                    let r2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                    data[(ch * s + y) * s + x] += amp * (-r2 / (2.0 * width * width)).exp();
                }
            }
        }
    }
    let rms = (p.data().iter().map(|v| v * v).sum::<f64>() / p.len() as f64).sqrt();
    if rms > 0.0 {
        p.scale(1.0 / rms)
    } else {
        p
    }
}

fn draw(prototypes: &[Tensor], per_class: usize, noise: f64, jitter: usize, rng: &mut RngStream) -> Vec<LabeledImage> {
    let mut out = Vec::with_capacity(prototypes.len() * per_class);
    for _ in 0..per_class {
        for (label, p) in prototypes.iter().enumerate() {
            let base = if jitter > 0 {
                let j = jitter as i64;
                let dy = rng.int_inclusive(-j, j);
                let dx = rng.int_inclusive(-j, j);
                shift_image(p, dy, dx)
            } else {
                p.clone()
            };
            let mut pixels = base;
            pixels.data_mut().iter_mut().for_each(|v| *v += noise * rng.gaussian());
            out.push(LabeledImage { pixels, label });
        }
    }
    out
}

/// Samples `prototype + noise·N(0,1)` (after an optional jitter shift) for
/// given prototypes, `per_class` each, interleaved by class.
pub fn synthetic_from_prototypes(
    prototypes: &[Tensor],
    per_class: usize,
    noise: f64,
    jitter: usize,
    rng: &mut RngStream,
) -> Result<Dataset> {
    if prototypes.is_empty() {
        return Err(Error::invalid("at least one prototype is required"));
    }
    if prototypes[0].rank() != 3 {
        return Err(Error::shape("prototypes must be [C, H, W]"));
    }
    Dataset::new(draw(prototypes, per_class, noise, jitter, rng), prototypes.len())
}

fn random_motif(channels: usize, size: usize, rng: &mut RngStream) -> Tensor {
    let m = rng.gaussian_tensor([channels, size, size]);
    let rms = (m.data().iter().map(|v| v * v).sum::<f64>() / m.len() as f64).sqrt();
    m.scale(1.0 / rms)
}

fn draw_motifs(motifs: &[Tensor], spec: &SyntheticSpec, per_class: usize, copies: usize, rng: &mut RngStream) -> Vec<LabeledImage> {
    let (c, s) = (spec.channels, spec.size);
    let mut out = Vec::with_capacity(motifs.len() * per_class);
    for _ in 0..per_class {
        for (label, m) in motifs.iter().enumerate() {
            let k = m.shape()[1];
            let mut pixels = Tensor::zeros([c, s, s]);
            let px = pixels.data_mut();
            for _ in 0..copies {
                let sign = if rng.bernoulli(0.5) { 1.0 } else { -1.0 };
                let (y0, x0) = (rng.below(s - k + 1), rng.below(s - k + 1));
                for ch in 0..c {
                    for i in 0..k {
                        for j in 0..k {
                            px[(ch * s + y0 + i) * s + x0 + j] += sign * m.data()[(ch * k + i) * k + j];
                        }
                    }
                }
            }
            px.iter_mut().for_each(|v| *v += spec.noise * rng.gaussian());
            out.push(LabeledImage { pixels, label });
        }
    }
    out
}

/// Builds prototypes (or motifs) and independent train/test draws. Every stage uses its
/// own split of `rng`, so the result depends only on the seed and spec.
pub fn synthetic_dataset(rng: &RngStream, spec: &SyntheticSpec) -> Result<SyntheticData> {
    if spec.classes < 2 || spec.size == 0 || spec.channels == 0 || spec.train_per_class == 0 {
        return Err(Error::invalid(format!("unusable synthetic spec {spec:?}")));
    }
    if spec.antipodal && spec.classes % 2 != 0 {
        return Err(Error::invalid("antipodal synthetic data needs an even class count"));
    }
    if let SyntheticKind::SignedMotifs { size, copies } = spec.kind {
        if size == 0 || size > spec.size || copies == 0 || spec.antipodal {
            return Err(Error::invalid(format!("unusable motif spec {spec:?}")));
        }
        let mut prng = rng.split(0);
        let motifs: Vec<Tensor> = (0..spec.classes).map(|_| random_motif(spec.channels, size, &mut prng)).collect();
        let train = draw_motifs(&motifs, spec, spec.train_per_class, copies, &mut rng.split(1));
        let test = draw_motifs(&motifs, spec, spec.test_per_class.max(1), copies, &mut rng.split(2));
        return Ok(SyntheticData {
            train: Dataset::new(train, spec.classes)?,
            test: Dataset::new(test, spec.classes)?,
            prototypes: motifs,
        });
    }
    let mut prng = rng.split(0);
    let mut prototypes = Vec::with_capacity(spec.classes);
    while prototypes.len() < spec.classes {
        let p = random_prototype(spec, &mut prng);
        if spec.antipodal {
            let negated = p.scale(-1.0);
            prototypes.push(p);
            prototypes.push(negated);
        } else {
            prototypes.push(p);
        }
    }
    let train = synthetic_from_prototypes(&prototypes, spec.train_per_class, spec.noise, spec.jitter, &mut rng.split(1))?;
    let test = synthetic_from_prototypes(
        &prototypes,
        spec.test_per_class.max(1),
        spec.noise,
        spec.jitter,
        &mut rng.split(2),
    )?;
    Ok(SyntheticData {
        train,
        test,
        prototypes,
    })
}

/// Index of the closest prototype in Euclidean distance.
pub fn nearest_prototype(prototypes: &[Tensor], x: &Tensor) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, p) in prototypes.iter().enumerate() {
        let d: f64 = p.data().iter().zip(x.data()).map(|(a, b)| (a - b).powi(2)).sum();
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_data_is_nearest_prototype_separable() {
        let spec = SyntheticSpec {
            noise: 0.0,
            jitter: 0,
            ..SyntheticSpec::default()
        };
        let d = synthetic_dataset(&RngStream::new(11), &spec).unwrap();
        for im in &d.test.images {
            assert_eq!(nearest_prototype(&d.prototypes, &im.pixels), im.label);
        }
    }

    #[test]
    fn antipodal_pairs() {
        let d = synthetic_dataset(&RngStream::new(12), &SyntheticSpec::default()).unwrap();
        let sum = d.prototypes[0].add(&d.prototypes[1]).unwrap();
        assert_eq!(sum.max_abs(), 0.0);
        assert!(d.prototypes[0].sub(&d.prototypes[2]).unwrap().max_abs() > 0.1);
    }

    #[test]
    fn seed_fixed_is_reproducible() {
        let spec = SyntheticSpec::default();
        let a = synthetic_dataset(&RngStream::new(13), &spec).unwrap();
        let b = synthetic_dataset(&RngStream::new(13), &spec).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn one_dimensional_bayes_error() {
        use statrs::distribution::{ContinuousCDF, Normal};
        let (p0, p1, sigma) = (-0.5, 0.5, 1.0);
        let protos = vec![
            Tensor::new([1, 1, 1], vec![p0]).unwrap(),
            Tensor::new([1, 1, 1], vec![p1]).unwrap(),
        ];
        let d = synthetic_from_prototypes(&protos, 10_000, sigma, 0, &mut RngStream::new(14)).unwrap();
        let errors = d
            .images
            .iter()
            .filter(|im| nearest_prototype(&protos, &im.pixels) != im.label)
            .count();
        let empirical = errors as f64 / d.len() as f64;
        let bayes = Normal::new(0.0, 1.0).unwrap().cdf(-(p1 - p0) / (2.0 * sigma));
        assert!((empirical - bayes).abs() < 0.02, "{empirical} vs {bayes}");
    }
}
