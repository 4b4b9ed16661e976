use crate::error::{Error, Result};
use crate::linalg::{column_space_basis, svd, DEFAULT_RCOND};
use crate::tensor::Tensor;

/// Optimal frame bounds of a column set over its own span.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameBounds {
    pub c1: f64,
    pub c2: f64,
}

/// With `U` an orthonormal basis of `range(W)`, `c1` and `c2` are the extreme
/// eigenvalues of `(WᵀU)ᵀ(WᵀU)`.
pub fn frame_bounds(columns: &Tensor) -> Result<FrameBounds> {
    if columns.rank() != 2 {
        return Err(Error::shape("frame_bounds needs a D×m matrix"));
    }
    let u = column_space_basis(columns, DEFAULT_RCOND)?
        .ok_or_else(|| Error::Degenerate("all frame vectors are zero".into()))?;
    let t = columns.transpose()?.matmul(&u)?;
    let gram = t.transpose()?.matmul(&t)?;
    // The Gram matrix is symmetric positive definite, so its singular values
    // are its eigenvalues.
    let s = svd(&gram)?;
    Ok(FrameBounds {
        c1: s.sigma_min(),
        c2: s.sigma_max(),
    })
}
