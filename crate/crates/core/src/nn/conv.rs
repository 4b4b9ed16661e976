//! 2D cross-correlation with zero padding, implemented with im2col.

use crate::error::{Error, Result};
use crate::tensor::{gemm, gemm_a_bt, gemm_at_b, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub filters: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn new(
        input: [usize; 3],
        filters: usize,
        kernel: (usize, usize),
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        let [channels, height, width] = input;
        let (kh, kw) = kernel;
        let g = ConvGeometry {
            channels,
            height,
            width,
            filters,
            kh,
            kw,
            stride,
            pad,
        };
        if stride == 0 || filters == 0 || kh == 0 || kw == 0 {
            return Err(Error::shape("conv needs positive stride, filter count and kernel"));
        }
        for (extent, k, axis) in [(height, kh, "height"), (width, kw, "width")] {
            let padded = extent + 2 * pad;
            if padded < k {
                return Err(Error::shape(format!(
                    "conv {axis}: padded size {padded} smaller than kernel {k}"
                )));
            }
            if (padded - k) % stride != 0 {
                return Err(Error::shape(format!(
                    "conv {axis}: ({extent} + 2*{pad} - {k}) not divisible by stride {stride}"
                )));
            }
        }
        Ok(g)
    }

    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.pad - self.kh) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.pad - self.kw) / self.stride + 1
    }

    pub fn patch_len(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    pub fn out_positions(&self) -> usize {
        self.out_height() * self.out_width()
    }

    /// Input offset read by patch entry `(c, i, j)` at output `(oy, ox)`,
    /// or `None` when it falls in the padding.
    #[inline]
    fn source(&self, c: usize, i: usize, j: usize, oy: usize, ox: usize) -> Option<usize> {
        let y = (oy * self.stride + i).checked_sub(self.pad)?;
        let x = (ox * self.stride + j).checked_sub(self.pad)?;
        (y < self.height && x < self.width).then(|| (c * self.height + y) * self.width + x)
    }

    fn im2col(&self, image: &[f64], cols: &mut [f64]) {
        let (oh, ow) = (self.out_height(), self.out_width());
        let p = oh * ow;
        for c in 0..self.channels {
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let row = (c * self.kh + i) * self.kw + j;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oy in 0..oh {
                        for ox in 0..ow {
                            dst[oy * ow + ox] = self
                                .source(c, i, j, oy, ox)
                                .map_or(0.0, |s| image[s]);
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], image: &mut [f64]) {
        let (oh, ow) = (self.out_height(), self.out_width());
        let p = oh * ow;
        for c in 0..self.channels {
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let row = (c * self.kh + i) * self.kw + j;
                    let src = &cols[row * p..(row + 1) * p];
                    for oy in 0..oh {
                        for ox in 0..ow {
                            if let Some(s) = self.source(c, i, j, oy, ox) {
                                image[s] += src[oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// State kept by the forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct ConvCache {
    pub geometry: ConvGeometry,
    batch: usize,
    cols: Vec<f64>,
    weight: Tensor,
}

fn geometry_for(x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Result<ConvGeometry> {
    let (&[_, c, h, wd], &[f, wc, kh, kw]) = (x.shape(), w.shape()) else {
        return Err(Error::shape(format!(
            "conv2d expects x [N,C,H,W] and w [F,C,kh,kw], got {:?} and {:?}",
            x.shape(),
            w.shape()
        )));
    };
    if c != wc {
        return Err(Error::shape(format!("conv2d: input has {c} channels, weight expects {wc}")));
    }
    ConvGeometry::new([c, h, wd], f, (kh, kw), stride, pad)
}

pub fn conv2d_forward(
    x: &Tensor,
    w: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<(Tensor, ConvCache)> {
    let g = geometry_for(x, w, stride, pad)?;
    if bias.len() != g.filters {
        return Err(Error::shape(format!(
            "conv2d: bias has {} entries for {} filters",
            bias.len(),
            g.filters
        )));
    }
    let n = x.shape()[0];
    let (k, p) = (g.patch_len(), g.out_positions());
    let in_len = g.channels * g.height * g.width;
    let mut cols = vec![0.0; n * k * p];
    let mut out = vec![0.0; n * g.filters * p];
    for s in 0..n {
        let c = &mut cols[s * k * p..(s + 1) * k * p];
        g.im2col(&x.data()[s * in_len..(s + 1) * in_len], c);
        let o = &mut out[s * g.filters * p..(s + 1) * g.filters * p];
        for (f, row) in o.chunks_mut(p).enumerate() {
            row.fill(bias.data()[f]);
        }
        gemm(w.data(), c, o, g.filters, k, p);
    }
    let y = Tensor::new([n, g.filters, g.out_height(), g.out_width()], out)?;
    Ok((
        y,
        ConvCache {
            geometry: g,
            batch: n,
            cols,
            weight: w.clone(),
        },
    ))
}

/// Returns `(grad_x, grad_w, grad_bias)`.
pub fn conv2d_backward(cache: &ConvCache, grad_out: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let g = &cache.geometry;
    let n = cache.batch;
    let expected = [n, g.filters, g.out_height(), g.out_width()];
    if grad_out.shape() != expected {
        return Err(Error::shape(format!(
            "conv2d backward: grad {:?} vs output {expected:?}",
            grad_out.shape()
        )));
    }
    let (k, p) = (g.patch_len(), g.out_positions());
    let in_len = g.channels * g.height * g.width;
    let mut gx = vec![0.0; n * in_len];
    let mut gw = vec![0.0; g.filters * k];
    let mut gb = vec![0.0; g.filters];
    let mut gcols = vec![0.0; k * p];
    for s in 0..n {
        let go = &grad_out.data()[s * g.filters * p..(s + 1) * g.filters * p];
        let cols = &cache.cols[s * k * p..(s + 1) * k * p];
        gemm_a_bt(go, cols, &mut gw, g.filters, p, k);
        for (f, row) in go.chunks(p).enumerate() {
            gb[f] += row.iter().sum::<f64>();
        }
        gcols.fill(0.0);
        gemm_at_b(cache.weight.data(), go, &mut gcols, g.filters, k, p);
        g.col2im(&gcols, &mut gx[s * in_len..(s + 1) * in_len]);
    }
    Ok((
        Tensor::new([n, g.channels, g.height, g.width], gx)?,
        Tensor::new(cache.weight.shape().to_vec(), gw)?,
        Tensor::new([g.filters], gb)?,
    ))
}

/// The convolution as an explicit matrix `W` of shape
/// `(C·H·W) × (F·H′·W′)`, so that `Wᵀ·vec(x) + b = vec(conv(x))`.
/// Column `f·H′W′ + oy·W′ + ox` holds filter `f` shifted to output `(oy, ox)`.
pub fn conv_matrix(w: &Tensor, input: [usize; 3], stride: usize, pad: usize) -> Result<Tensor> {
    let &[f, c, kh, kw] = w.shape() else {
        return Err(Error::shape(format!("conv weight must be rank 4, got {:?}", w.shape())));
    };
    if c != input[0] {
        return Err(Error::shape("conv_matrix: channel mismatch"));
    }
    let g = ConvGeometry::new(input, f, (kh, kw), stride, pad)?;
    let (oh, ow) = (g.out_height(), g.out_width());
    let rows = c * g.height * g.width;
    let cols = f * oh * ow;
    let mut m = vec![0.0; rows * cols];
    for fi in 0..f {
        for oy in 0..oh {
            for ox in 0..ow {
                let col = (fi * oh + oy) * ow + ox;
                for ci in 0..c {
                    for i in 0..kh {
                        for j in 0..kw {
                            if let Some(src) = g.source(ci, i, j, oy, ox) {
                                m[src * cols + col] = w.data()[((fi * c + ci) * kh + i) * kw + j];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new([rows, cols], m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn one_dimensional_view_shifted_inner_products() {
        // x = [1,2,3], w = [1,0] as a 1×3 image and 1×2 kernel
        let x = Tensor::new([1, 1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let w = Tensor::new([1, 1, 1, 2], vec![1.0, 0.0]).unwrap();
        let (y, _) = conv2d_forward(&x, &w, &Tensor::zeros([1]), 1, 0).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);
    }

    #[test]
    fn identity_kernel_passthrough() {
        let mut rng = RngStream::new(1);
        let x = rng.gaussian_tensor([2, 1, 4, 5]);
        let w = Tensor::new([1, 1, 1, 1], vec![1.0]).unwrap();
        let (y, _) = conv2d_forward(&x, &w, &Tensor::zeros([1]), 1, 0).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn zero_kernel_gives_bias() {
        let mut rng = RngStream::new(2);
        let x = rng.gaussian_tensor([1, 3, 4, 4]);
        let w = Tensor::zeros([2, 3, 3, 3]);
        let b = Tensor::new([2], vec![0.5, -1.5]).unwrap();
        let (y, _) = conv2d_forward(&x, &w, &b, 1, 1).unwrap();
        assert!(y.data()[..16].iter().all(|&v| v == 0.5));
        assert!(y.data()[16..].iter().all(|&v| v == -1.5));
    }

    #[test]
    fn indivisible_stride_rejected() {
        let x = Tensor::zeros([1, 1, 6, 6]);
        let w = Tensor::zeros([1, 1, 3, 3]);
        assert!(matches!(
            conv2d_forward(&x, &w, &Tensor::zeros([1]), 2, 0),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn zero_grad_gives_zero_grads() {
        let mut rng = RngStream::new(3);
        let x = rng.gaussian_tensor([2, 2, 5, 5]);
        let w = rng.gaussian_tensor([3, 2, 3, 3]);
        let (y, cache) = conv2d_forward(&x, &w, &Tensor::zeros([3]), 1, 1).unwrap();
        let (gx, gw, gb) = conv2d_backward(&cache, &Tensor::zeros(y.shape().to_vec())).unwrap();
        assert!(gx.max_abs() == 0.0 && gw.max_abs() == 0.0 && gb.max_abs() == 0.0);
    }

    #[test]
    fn single_pixel_grad_recovers_input_patch() {
        let mut rng = RngStream::new(4);
        let x = rng.gaussian_tensor([1, 2, 5, 5]);
        let w = rng.gaussian_tensor([1, 2, 3, 3]);
        let (y, cache) = conv2d_forward(&x, &w, &Tensor::zeros([1]), 1, 0).unwrap();
        // output (oy, ox) = (1, 2)
        let mut g = Tensor::zeros(y.shape().to_vec());
        g.data_mut()[3 + 2] = 1.0;
        let (_, gw, _) = conv2d_backward(&cache, &g).unwrap();
        for c in 0..2 {
            for i in 0..3 {
                for j in 0..3 {
                    let patch = x.data()[(c * 5 + 1 + i) * 5 + 2 + j];
                    assert_eq!(gw.data()[(c * 3 + i) * 3 + j], patch);
                }
            }
        }
    }

    #[test]
    fn conv_matrix_matches_forward() {
        let mut rng = RngStream::new(5);
        let x = rng.gaussian_tensor([1, 2, 6, 6]);
        let w = rng.gaussian_tensor([3, 2, 3, 3]);
        let (y, _) = conv2d_forward(&x, &w, &Tensor::zeros([3]), 1, 1).unwrap();
        let m = conv_matrix(&w, [2, 6, 6], 1, 1).unwrap();
        let via = m.transpose().unwrap().matvec(x.data()).unwrap();
        for (a, b) in via.iter().zip(y.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
