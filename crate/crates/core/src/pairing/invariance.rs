use std::fmt;

use crate::data::augment::{hflip, shift_image};
use crate::error::{Error, Result};
use crate::nn::{forward_prefix, ActivationKind, LayerSpec, NetworkConfig, Params};
use crate::parallel::ordered_map;
use crate::tensor::Tensor;

pub const FIRING_PERCENTILE: f64 = 0.99;
pub const MIN_RESPONSE_SAMPLES: usize = 100;

/// Nearest-rank 99th percentile of each filter's responses. A filter fires
/// on a response strictly above its threshold.
pub fn firing_thresholds(responses: &[Vec<f64>]) -> Result<Vec<f64>> {
    responses
        .iter()
        .enumerate()
        .map(|(f, r)| {
            if r.len() < MIN_RESPONSE_SAMPLES {
                return Err(Error::invalid(format!(
                    "filter {f} has {} response samples, at least {MIN_RESPONSE_SAMPLES} needed",
                    r.len()
                )));
            }
            let mut s = r.clone();
            s.sort_by(f64::total_cmp);
            let rank = (FIRING_PERCENTILE * s.len() as f64).ceil() as usize;
            Ok(s[rank.max(1) - 1])
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Transform {
    Identity,
    HFlip,
    /// Counter-clockwise rotation in degrees.
    Rotate(f64),
    Shift(i64, i64),
    Negate,
}

impl Transform {
    /// Flip, 15° rotations either way and `±shift` pixel translations.
    pub fn standard_set(shift: i64) -> Vec<Transform> {
        vec![
            Transform::HFlip,
            Transform::Rotate(15.0),
            Transform::Rotate(-15.0),
            Transform::Shift(shift, 0),
            Transform::Shift(-shift, 0),
            Transform::Shift(0, shift),
            Transform::Shift(0, -shift),
        ]
    }

    pub fn apply(&self, image: &Tensor) -> Tensor {
        match *self {
            Transform::Identity => image.clone(),
            Transform::HFlip => hflip(image),
            Transform::Rotate(deg) => rotate(image, deg),
            Transform::Shift(dy, dx) => shift_image(image, dy, dx),
            Transform::Negate => image.map(|v| -v),
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transform::Identity => write!(f, "identity"),
            Transform::HFlip => write!(f, "hflip"),
            Transform::Rotate(d) => write!(f, "rotate{d}"),
            Transform::Shift(dy, dx) => write!(f, "shift{dy},{dx}"),
            Transform::Negate => write!(f, "negate"),
        }
    }
}

/// Bilinear rotation of every `[C, H, W]` plane about the image centre.
/// Samples falling outside the image read as 0.
pub fn rotate(image: &Tensor, degrees: f64) -> Tensor {
    let s = image.shape();
    let (c, h, w) = (s[0], s[1], s[2]);
    let (sin, cos) = degrees.to_radians().sin_cos();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let src = image.data();
    let mut out = Tensor::zeros([c, h, w]);
    let dst = out.data_mut();
    let at = |ch: usize, y: isize, x: isize| -> f64 {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0.0
        } else {
            src[(ch * h + y as usize) * w + x as usize]
        }
    };
    for y in 0..h {
        for x in 0..w {
            // Inverse map with rows growing downward.
            let (dy, dx) = (y as f64 - cy, x as f64 - cx);
            let sy = cy + cos * dy + sin * dx;
            let sx = cx - sin * dy + cos * dx;
            let (y0, x0) = (sy.floor(), sx.floor());
            let (fy, fx) = (sy - y0, sx - x0);
            let (y0, x0) = (y0 as isize, x0 as isize);
            for ch in 0..c {
                dst[(ch * h + y) * w + x] = (1.0 - fy) * ((1.0 - fx) * at(ch, y0, x0) + fx * at(ch, y0, x0 + 1))
                    + fy * ((1.0 - fx) * at(ch, y0 + 1, x0) + fx * at(ch, y0 + 1, x0 + 1));
            }
        }
    }
    out
}

pub fn rotate_15(image: &Tensor) -> Tensor {
    rotate(image, 15.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvarianceReport {
    pub thresholds: Vec<f64>,
    /// Mean local firing rate per filter; `None` when the filter never fires.
    pub scores: Vec<Option<f64>>,
    /// Qualifying (image, location) events per filter.
    pub events: Vec<usize>,
    pub layer_score: f64,
    pub excluded: usize,
}

impl InvarianceReport {
    pub const CSV_HEADER: &'static str = "layer,invariance_score";

    pub fn csv_row(&self, layer: usize) -> String {
        format!("{layer},{:.6}", self.layer_score)
    }
}

/// Responses are `|x|` when the conv output feeds CReLU or AVR and `[x]₊`
/// otherwise.
fn response_rectifier(cfg: &NetworkConfig, layer: usize) -> Result<fn(f64) -> f64> {
    if !matches!(cfg.layers().get(layer), Some(LayerSpec::Conv2d { .. })) {
        return Err(Error::invalid(format!("layer {layer} is not a convolution")));
    }
    let next = cfg.layers()[layer + 1..].iter().find(|l| !matches!(l, LayerSpec::Dropout { .. }));
    Ok(match next {
        Some(LayerSpec::Activation(ActivationKind::Crelu | ActivationKind::Avr)) => f64::abs,
        _ => |v: f64| v.max(0.0),
    })
}

const BATCH: usize = 32;

/// Rectified responses of conv layer `layer`, one `F·H′·W′` vector per image.
fn layer_responses(
    cfg: &NetworkConfig,
    params: &Params,
    layer: usize,
    images: &[Tensor],
    rectify: fn(f64) -> f64,
) -> Result<Vec<Vec<f64>>> {
    let chunks: Vec<&[Tensor]> = images.chunks(BATCH).collect();
    let parts = ordered_map(&chunks, |_, chunk| -> Result<Vec<Vec<f64>>> {
        let per = chunk[0].len();
        let mut data = Vec::with_capacity(per * chunk.len());
        for im in chunk.iter() {
            data.extend_from_slice(im.data());
        }
        let mut shape = vec![chunk.len()];
        shape.extend_from_slice(chunk[0].shape());
        let y = forward_prefix(cfg, params, &Tensor::new(shape, data)?, layer + 1)?;
        let out_per = y.len() / chunk.len();
        Ok(y.data().chunks(out_per).map(|r| r.iter().map(|&v| rectify(v)).collect()).collect())
    });
    let mut out = Vec::with_capacity(images.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Thresholds pool each filter's responses over all images and locations.
/// Every location where a filter fires on an original image is an event;
/// its local rate is the fraction of transformed images firing the same
/// filter at the same location.
pub fn invariance_score(
    cfg: &NetworkConfig,
    params: &Params,
    layer: usize,
    images: &[Tensor],
    transforms: &[Transform],
) -> Result<InvarianceReport> {
    cfg.check_params(params)?;
    if images.is_empty() || transforms.is_empty() {
        return Err(Error::invalid("invariance needs images and at least one transform"));
    }
    let rectify = response_rectifier(cfg, layer)?;
    let filters = cfg.shape_before(layer + 1)[0];
    let base = layer_responses(cfg, params, layer, images, rectify)?;
    let positions = base[0].len() / filters;
    let mut per_filter = vec![Vec::with_capacity(images.len() * positions); filters];
    for r in &base {
        for (f, bucket) in per_filter.iter_mut().enumerate() {
            bucket.extend_from_slice(&r[f * positions..(f + 1) * positions]);
        }
    }
    let thresholds = firing_thresholds(&per_filter)?;
    drop(per_filter);
    let fired = |resp: &[f64], idx: usize| resp[idx] > thresholds[idx / positions];
    let mut events = vec![0usize; filters];
    for r in &base {
        for idx in 0..r.len() {
            if fired(r, idx) {
                events[idx / positions] += 1;
            }
        }
    }
    let mut refires = vec![0usize; filters];
    for t in transforms {
        let moved: Vec<Tensor> = images.iter().map(|im| t.apply(im)).collect();
        let resp = layer_responses(cfg, params, layer, &moved, rectify)?;
        for (orig, tr) in base.iter().zip(&resp) {
            for idx in 0..orig.len() {
                if fired(orig, idx) && fired(tr, idx) {
                    refires[idx / positions] += 1;
                }
            }
        }
    }
    let scores: Vec<Option<f64>> = events
        .iter()
        .zip(&refires)
        .map(|(&e, &r)| (e > 0).then(|| r as f64 / (e * transforms.len()) as f64))
        .collect();
    let valid: Vec<f64> = scores.iter().flatten().copied().collect();
    let layer_score = if valid.is_empty() {
        f64::NAN
    } else {
        valid.iter().sum::<f64>() / valid.len() as f64
    };
    Ok(InvarianceReport {
        thresholds,
        excluded: filters - valid.len(),
        scores,
        events,
        layer_score,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn nearest_rank_threshold() {
        let r: Vec<f64> = (1..=100).map(f64::from).collect();
        let t = firing_thresholds(&[r.clone()]).unwrap()[0];
        assert_eq!(t, 99.0);
        assert_eq!(r.iter().filter(|&&v| v > t).count(), 1);
    }

    #[test]
    fn constant_and_zero_responses() {
        let t = firing_thresholds(&[vec![2.5; 200], vec![0.0; 100]]).unwrap();
        assert_eq!(t, vec![2.5, 0.0]);
        assert!(firing_thresholds(&[vec![1.0; 99]]).is_err());
    }

    #[test]
    fn zero_degree_rotation_is_identity() {
        let im = RngStream::new(1).gaussian_tensor([2, 7, 7]);
        assert!(rotate(&im, 0.0).sub(&im).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn constant_interior_preserved() {
        let im = Tensor::filled([1, 16, 16], 3.0);
        let r = rotate_15(&im);
        for y in 4..12 {
            for x in 4..12 {
                assert!((r.data()[y * 16 + x] - 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bright_pixel_follows_analytic_rotation() {
        let n = 21;
        let c = 10.0;
        for (py, px) in [(10usize, 16usize), (4, 10), (14, 5)] {
            let mut im = Tensor::zeros([1, n, n]);
            im.data_mut()[py * n + px] = 1.0;
            let r = rotate_15(&im);
            let (mut by, mut bx, mut best) = (0, 0, f64::MIN);
            for y in 0..n {
                for x in 0..n {
                    if r.data()[y * n + x] > best {
                        best = r.data()[y * n + x];
                        (by, bx) = (y, x);
                    }
                }
            }
            // Counter-clockwise on screen, y pointing down.
            let t = 15f64.to_radians();
            let (dy, dx) = (py as f64 - c, px as f64 - c);
            let ay = c + t.cos() * dy - t.sin() * dx;
            let ax = c + t.cos() * dx + t.sin() * dy;
            assert!(((by as f64 - ay).powi(2) + (bx as f64 - ax).powi(2)).sqrt() <= 1.0, "({by},{bx}) vs ({ay},{ax})");
        }
    }

    fn toy_net(act: ActivationKind, filters: usize) -> NetworkConfig {
        NetworkConfig::new(
            vec![1, 8, 8],
            vec![
                LayerSpec::Conv2d {
                    out_channels: filters,
                    kh: 3,
                    kw: 3,
                    stride: 1,
                    pad: 1,
                },
                LayerSpec::Activation(act),
                LayerSpec::GlobalAvgPool,
            ],
            filters * act.channel_factor(),
        )
        .unwrap()
    }

    fn images(seed: u64, n: usize) -> Vec<Tensor> {
        let mut rng = RngStream::new(seed);
        (0..n).map(|_| rng.gaussian_tensor([1, 8, 8])).collect()
    }

    #[test]
    fn identity_scores_one() {
        let cfg = toy_net(ActivationKind::Crelu, 4);
        let params = cfg.init_params(&mut RngStream::new(1));
        let r = invariance_score(&cfg, &params, 0, &images(2, 20), &[Transform::Identity]).unwrap();
        assert!(r.scores.iter().flatten().all(|&s| s == 1.0));
        assert_eq!(r.layer_score, 1.0);
    }

    #[test]
    fn standard_set_is_strictly_between() {
        let cfg = toy_net(ActivationKind::Relu, 4);
        let params = cfg.init_params(&mut RngStream::new(3));
        let r = invariance_score(&cfg, &params, 0, &images(4, 40), &Transform::standard_set(1)).unwrap();
        assert!(r.layer_score > 0.0 && r.layer_score < 1.0, "{}", r.layer_score);
        assert!(r.scores.iter().flatten().all(|s| (0.0..=1.0).contains(s)));
    }

    #[test]
    fn negation_never_refires_relu() {
        let cfg = toy_net(ActivationKind::Relu, 3);
        let mut params = cfg.init_params(&mut RngStream::new(5));
        params.tensors[1] = Tensor::zeros([3]);
        let r = invariance_score(&cfg, &params, 0, &images(6, 20), &[Transform::Negate]).unwrap();
        assert_eq!(r.layer_score, 0.0);
    }

    #[test]
    fn matches_brute_force_enumeration() {
        let cfg = toy_net(ActivationKind::Crelu, 3);
        let params = cfg.init_params(&mut RngStream::new(7));
        let ims = images(8, 16);
        let ts = [Transform::HFlip, Transform::Shift(1, 0), Transform::Rotate(15.0)];
        let r = invariance_score(&cfg, &params, 0, &ims, &ts).unwrap();

        let (w, b) = (&params.tensors[0], &params.tensors[1]);
        let resp = |im: &Tensor, f: usize, y: usize, x: usize| -> f64 {
            let mut acc = b.data()[f];
            for i in 0..3 {
                for j in 0..3 {
                    let (yy, xx) = (y as isize + i as isize - 1, x as isize + j as isize - 1);
                    if (0..8).contains(&yy) && (0..8).contains(&xx) {
                        acc += w.data()[(f * 3 + i) * 3 + j] * im.data()[yy as usize * 8 + xx as usize];
                    }
                }
            }
            acc.abs()
        };
        for f in 0..3 {
            let mut all: Vec<f64> = Vec::new();
            for im in &ims {
                for y in 0..8 {
                    for x in 0..8 {
                        all.push(resp(im, f, y, x));
                    }
                }
            }
            all.sort_by(f64::total_cmp);
            let t = all[(0.99 * all.len() as f64).ceil() as usize - 1];
            assert!((t - r.thresholds[f]).abs() < 1e-12);
            let (mut events, mut rate_sum) = (0usize, 0.0);
            for im in &ims {
                let moved: Vec<Tensor> = ts.iter().map(|t| t.apply(im)).collect();
                for y in 0..8 {
                    for x in 0..8 {
                        if resp(im, f, y, x) > t {
                            events += 1;
                            let hits = moved.iter().filter(|m| resp(m, f, y, x) > t).count();
                            rate_sum += hits as f64 / ts.len() as f64;
                        }
                    }
                }
            }
            assert_eq!(events, r.events[f]);
            match r.scores[f] {
                Some(s) => assert!((s - rate_sum / events as f64).abs() < 1e-12),
                None => assert_eq!(events, 0),
            }
        }
    }

    #[test]
    fn non_conv_layer_rejected() {
        let cfg = toy_net(ActivationKind::Relu, 2);
        let params = cfg.init_params(&mut RngStream::new(9));
        assert!(invariance_score(&cfg, &params, 1, &images(1, 4), &[Transform::Identity]).is_err());
    }
}
