//! Max and average pooling over `[N, C, H, W]` tensors.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn pooled_extent(extent: usize, k: usize, stride: usize, axis: &str) -> Result<usize> {
    if k == 0 || stride == 0 {
        return Err(Error::shape("pool window and stride must be positive"));
    }
    if extent < k || (extent - k) % stride != 0 {
        return Err(Error::shape(format!(
            "pool {axis}: extent {extent} incompatible with window {k} stride {stride}"
        )));
    }
    Ok((extent - k) / stride + 1)
}

pub fn pool_output_shape(input: &[usize], k: usize, stride: usize) -> Result<[usize; 3]> {
    let &[c, h, w] = input else {
        return Err(Error::shape(format!("pooling needs [C,H,W], got {input:?}")));
    };
    Ok([
        c,
        pooled_extent(h, k, stride, "height")?,
        pooled_extent(w, k, stride, "width")?,
    ])
}

fn batch_dims(x: &Tensor) -> Result<(usize, usize, usize, usize)> {
    match *x.shape() {
        [n, c, h, w] => Ok((n, c, h, w)),
        ref s => Err(Error::shape(format!("pooling needs [N,C,H,W], got {s:?}"))),
    }
}

#[derive(Clone, Debug)]
pub struct MaxPoolCache {
    input_shape: Vec<usize>,
    /// Flat input index of the winner for every output element.
    argmax: Vec<usize>,
}

impl MaxPoolCache {
    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

/// Window maximum. Ties go to the first element in row-major window order.
pub fn maxpool_forward(x: &Tensor, k: usize, stride: usize) -> Result<(Tensor, MaxPoolCache)> {
    let (n, c, h, w) = batch_dims(x)?;
    let [_, oh, ow] = pool_output_shape(&[c, h, w], k, stride)?;
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(out.capacity());
    let data = x.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * stride * w + ox * stride;
                for i in 0..k {
                    for j in 0..k {
                        let idx = base + (oy * stride + i) * w + ox * stride + j;
                        if data[idx] > data[best] {
                            best = idx;
                        }
                    }
                }
                out.push(data[best]);
                argmax.push(best);
            }
        }
    }
    Ok((
        Tensor::new([n, c, oh, ow], out)?,
        MaxPoolCache {
            input_shape: x.shape().to_vec(),
            argmax,
        },
    ))
}

pub fn maxpool_backward(cache: &MaxPoolCache, grad_out: &Tensor) -> Result<Tensor> {
    if grad_out.len() != cache.argmax.len() {
        return Err(Error::shape(format!(
            "maxpool backward: {} gradients for {} outputs",
            grad_out.len(),
            cache.argmax.len()
        )));
    }
    let mut g = Tensor::zeros(cache.input_shape.clone());
    let gd = g.data_mut();
    for (&idx, &v) in cache.argmax.iter().zip(grad_out.data()) {
        gd[idx] += v;
    }
    Ok(g)
}

pub fn avgpool_forward(x: &Tensor, k: usize, stride: usize) -> Result<Tensor> {
    let (n, c, h, w) = batch_dims(x)?;
    let [_, oh, ow] = pool_output_shape(&[c, h, w], k, stride)?;
    let inv = 1.0 / (k * k) as f64;
    let data = x.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut s = 0.0;
                for i in 0..k {
                    let row = base + (oy * stride + i) * w + ox * stride;
                    s += data[row..row + k].iter().sum::<f64>();
                }
                out.push(s * inv);
            }
        }
    }
    Tensor::new([n, c, oh, ow], out)
}

pub fn avgpool_backward(input_shape: &[usize], k: usize, stride: usize, grad_out: &Tensor) -> Result<Tensor> {
    let &[n, c, h, w] = input_shape else {
        return Err(Error::shape("avgpool backward needs [N,C,H,W]"));
    };
    let [_, oh, ow] = pool_output_shape(&[c, h, w], k, stride)?;
    if grad_out.len() != n * c * oh * ow {
        return Err(Error::shape("avgpool backward: gradient size mismatch"));
    }
    let inv = 1.0 / (k * k) as f64;
    let mut g = Tensor::zeros(input_shape.to_vec());
    let gd = g.data_mut();
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let v = grad_out.data()[(plane * oh + oy) * ow + ox] * inv;
                for i in 0..k {
                    let row = base + (oy * stride + i) * w + ox * stride;
                    gd[row..row + k].iter_mut().for_each(|x| *x += v);
                }
            }
        }
    }
    Ok(g)
}

/// Mean over each full `H×W` plane, giving `[N, C, 1, 1]`.
pub fn global_avgpool_forward(x: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = batch_dims(x)?;
    let inv = 1.0 / (h * w) as f64;
    let out = x.data().chunks(h * w).map(|p| p.iter().sum::<f64>() * inv).collect();
    Tensor::new([n, c, 1, 1], out)
}

pub fn global_avgpool_backward(input_shape: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    let &[n, c, h, w] = input_shape else {
        return Err(Error::shape("global avgpool backward needs [N,C,H,W]"));
    };
    if grad_out.len() != n * c {
        return Err(Error::shape("global avgpool backward: gradient size mismatch"));
    }
    let inv = 1.0 / (h * w) as f64;
    let mut data = Vec::with_capacity(n * c * h * w);
    for &g in grad_out.data() {
        data.extend(std::iter::repeat_n(g * inv, h * w));
    }
    Tensor::new(input_shape.to_vec(), data)
}
