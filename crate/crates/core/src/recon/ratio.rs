//! Reconstruction ratios of a conv → CReLU → max-pool layer, computed one
//! pooling region at a time on 2D inputs.

use crate::error::{Error, Result};
use crate::nn::conv::{conv2d_forward, ConvGeometry};
use crate::nn::pool::pool_output_shape;
use crate::parallel::ordered_map;
use crate::recon::reconstruct::solve_transposed;
use crate::tensor::Tensor;

/// Geometry and weights of the analysed layer. Biases are not part of the
/// linear map being inverted and are left out.
#[derive(Clone, Debug, PartialEq)]
pub struct PooledConvLayer {
    /// `F × C × kh × kw`.
    pub weight: Tensor,
    pub stride: usize,
    pub pad: usize,
    pub pool_k: usize,
    pub pool_stride: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RatioSummary {
    pub ratios: Vec<f64>,
    pub mean: f64,
    pub stderr: f64,
}

impl RatioSummary {
    pub fn from_ratios(ratios: Vec<f64>) -> Result<Self> {
        if ratios.is_empty() {
            return Err(Error::invalid("no reconstruction ratios to summarise"));
        }
        let n = ratios.len() as f64;
        let mean = ratios.iter().sum::<f64>() / n;
        let stderr = if ratios.len() > 1 {
            (ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        Ok(RatioSummary { ratios, mean, stderr })
    }
}

impl PooledConvLayer {
    fn geometry(&self, input: [usize; 3]) -> Result<ConvGeometry> {
        let &[f, c, kh, kw] = self.weight.shape() else {
            return Err(Error::shape("pooled layer weight must be F×C×kh×kw"));
        };
        if c != input[0] {
            return Err(Error::shape(format!("layer reads {c} channels, input has {}", input[0])));
        }
        ConvGeometry::new(input, f, (kh, kw), self.stride, self.pad)
    }

    /// `(Σ‖x_r − x′_r‖², Σ‖x_r‖²)` over all pooling regions `r` of one `[C,H,W]` input.
    pub fn region_errors(&self, x: &Tensor) -> Result<(f64, f64)> {
        let &[c, h, w] = x.shape() else {
            return Err(Error::shape(format!("expected a [C,H,W] input, got {:?}", x.shape())));
        };
        let g = self.geometry([c, h, w])?;
        let (oh, ow) = (g.out_height(), g.out_width());
        let [_, ph, pw] = pool_output_shape(&[g.filters, oh, ow], self.pool_k, self.pool_stride)?;
        let batch = x.clone().reshape([1, c, h, w])?;
        let (resp, _) = conv2d_forward(&batch, &self.weight, &Tensor::zeros([g.filters]), g.stride, g.pad)?;
        let resp = resp.data();
        let (s, pad, pk, ps) = (g.stride as isize, g.pad as isize, self.pool_k, self.pool_stride);
        let (kh, kw) = (g.kh as isize, g.kw as isize);
        let mut err2 = 0.0;
        let mut norm2 = 0.0;
        for py in 0..ph {
            for px in 0..pw {
                let (oy0, ox0) = (py * ps, px * ps);
                // Input rows/cols covered by the region, clipped to the image.
                let y0 = (oy0 as isize * s - pad).max(0);
                let y1 = (((oy0 + pk - 1) as isize) * s - pad + kh).min(h as isize);
                let x0 = (ox0 as isize * s - pad).max(0);
                let x1 = (((ox0 + pk - 1) as isize) * s - pad + kw).min(w as isize);
                let (rh, rw) = ((y1 - y0) as usize, (x1 - x0) as usize);
                let d = c * rh * rw;
                let mut region = Vec::with_capacity(d);
                for ch in 0..c {
                    for yy in y0..y1 {
                        let row = (ch * h + yy as usize) * w;
                        region.extend_from_slice(&x.data()[row + x0 as usize..row + x1 as usize]);
                    }
                }
                let shifted = |f: usize, oy: usize, ox: usize| -> Vec<f64> {
                    let mut col = vec![0.0; d];
                    for ch in 0..c {
                        for i in 0..kh {
                            let yy = oy as isize * s - pad + i;
                            if yy < y0 || yy >= y1 {
                                continue;
                            }
                            for j in 0..kw {
                                let xx = ox as isize * s - pad + j;
                                if xx < x0 || xx >= x1 {
                                    continue;
                                }
                                let wv = self.weight.data()[((f * c + ch) * g.kh + i as usize) * g.kw + j as usize];
                                col[(ch * rh + (yy - y0) as usize) * rw + (xx - x0) as usize] = wv;
                            }
                        }
                    }
                    col
                };
                let mut cols = Vec::new();
                let mut z = Vec::new();
                let mut neg_cols = Vec::new();
                let mut neg_z = Vec::new();
                for f in 0..g.filters {
                    let mut best_pos = (0.0, None);
                    let mut best_neg = (0.0, None);
                    for a in 0..pk {
                        for b in 0..pk {
                            let (oy, ox) = (oy0 + a, ox0 + b);
                            let r = resp[(f * oh + oy) * ow + ox];
                            if r > best_pos.0 {
                                best_pos = (r, Some((oy, ox)));
                            }
                            if -r > best_neg.0 {
                                best_neg = (-r, Some((oy, ox)));
                            }
                        }
                    }
                    if let (v, Some((oy, ox))) = best_pos {
                        cols.push(shifted(f, oy, ox));
                        z.push(v);
                    }
                    if let (v, Some((oy, ox))) = best_neg {
                        neg_cols.push(shifted(f, oy, ox));
                        neg_z.push(-v);
                    }
                }
                cols.extend(neg_cols);
                z.extend(neg_z);
                let w_hat = if cols.is_empty() {
                    None
                } else {
                    Some(Tensor::from_columns(&cols)?)
                };
                let xr = solve_transposed(w_hat.as_ref(), &z, d)?;
                err2 += region.iter().zip(&xr).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
                norm2 += region.iter().map(|a| a * a).sum::<f64>();
            }
        }
        Ok((err2, norm2))
    }

    /// `sqrt(Σ_r ‖x_r − x′_r‖² / Σ_r ‖x_r‖²)` for one input.
    pub fn sample_ratio(&self, x: &Tensor) -> Result<f64> {
        let (e, n) = self.region_errors(x)?;
        if n == 0.0 {
            return Err(Error::Degenerate("input is zero on every pooling region".into()));
        }
        Ok((e / n).sqrt())
    }
}

/// Mean and standard error of per-input reconstruction ratios. Inputs that
/// vanish on every region are skipped.
pub fn reconstruction_ratio_experiment(layer: &PooledConvLayer, inputs: &[Tensor]) -> Result<RatioSummary> {
    if inputs.is_empty() {
        return Err(Error::invalid("reconstruction ratio experiment needs at least one input"));
    }
    let results = ordered_map(inputs, |_, x| layer.sample_ratio(x));
    let mut ratios = Vec::with_capacity(inputs.len());
    for r in results {
        match r {
            Ok(v) => ratios.push(v),
            Err(Error::Degenerate(_)) => {}
            Err(e) => return Err(e),
        }
    }
    RatioSummary::from_ratios(ratios)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn identity_layer(c: usize) -> PooledConvLayer {
        let mut w = Tensor::zeros([c, c, 1, 1]);
        for i in 0..c {
            w.data_mut()[i * c + i] = 1.0;
        }
        PooledConvLayer {
            weight: w,
            stride: 1,
            pad: 0,
            pool_k: 1,
            pool_stride: 1,
        }
    }

    #[test]
    fn identity_bank_reconstructs_exactly() {
        let mut rng = RngStream::new(3);
        let layer = identity_layer(3);
        let xs: Vec<Tensor> = (0..4).map(|_| rng.gaussian_tensor([3, 4, 4])).collect();
        let s = reconstruction_ratio_experiment(&layer, &xs).unwrap();
        assert!(s.ratios.iter().all(|&r| r < 1e-12));
    }

    #[test]
    fn input_in_winning_span_reconstructs_exactly() {
        // One 2×2 region covered by a single 2×2 filter: the input is the filter itself.
        let mut rng = RngStream::new(4);
        let w = rng.gaussian_tensor([1, 1, 2, 2]);
        let layer = PooledConvLayer {
            weight: w.clone(),
            stride: 1,
            pad: 0,
            pool_k: 1,
            pool_stride: 1,
        };
        let x = w.reshape([1, 2, 2]).unwrap();
        assert!(layer.sample_ratio(&x).unwrap() < 1e-12);
    }

    #[test]
    fn random_filters_lose_information() {
        let mut rng = RngStream::new(5);
        let layer = PooledConvLayer {
            weight: rng.gaussian_tensor([4, 3, 3, 3]),
            stride: 1,
            pad: 1,
            pool_k: 2,
            pool_stride: 2,
        };
        let xs: Vec<Tensor> = (0..3).map(|_| rng.gaussian_tensor([3, 6, 6])).collect();
        let s = reconstruction_ratio_experiment(&layer, &xs).unwrap();
        assert!(s.mean > 0.3 && s.mean < 1.0, "{}", s.mean);
    }

    #[test]
    fn empty_input_set_rejected() {
        assert!(reconstruction_ratio_experiment(&identity_layer(1), &[]).is_err());
    }
}
