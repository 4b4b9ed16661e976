use crate::error::{Error, Result};
use crate::tensor::{gemm_a_bt, gemm_at_b, Tensor};

/// Affine map on the flattened sample: `y = x·wᵀ + b` with `w` of shape
/// `[out, in]`.
pub fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let n = x.rows();
    let d = x.cols();
    let &[out, wd] = w.shape() else {
        return Err(Error::shape("dense weight must be a matrix"));
    };
    if wd != d || b.len() != out {
        return Err(Error::shape(format!(
            "dense: input width {d}, weight {:?}, bias {}",
            w.shape(),
            b.len()
        )));
    }
    let mut y = Vec::with_capacity(n * out);
    for _ in 0..n {
        y.extend_from_slice(b.data());
    }
    gemm_a_bt(x.data(), w.data(), &mut y, n, d, out);
    Tensor::new([n, out], y)
}

/// Returns `(grad_x, grad_w, grad_b)`; `grad_x` has the shape of `x`.
pub fn dense_backward(x: &Tensor, w: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let n = x.rows();
    let d = x.cols();
    let out = w.rows();
    if grad_out.shape() != [n, out] {
        return Err(Error::shape(format!(
            "dense backward: grad {:?} vs [{n}, {out}]",
            grad_out.shape()
        )));
    }
    let mut gw = vec![0.0; out * d];
    gemm_at_b(grad_out.data(), x.data(), &mut gw, n, out, d);
    let mut gb = vec![0.0; out];
    for row in grad_out.data().chunks(out) {
        gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
    }
    let mut gx = vec![0.0; n * d];
    crate::tensor::gemm(grad_out.data(), w.data(), &mut gx, n, out, d);
    Ok((
        Tensor::new(x.shape().to_vec(), gx)?,
        Tensor::new([out, d], gw)?,
        Tensor::new([out], gb)?,
    ))
}
