//! One-dimensional filter banks and their shift matrices.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `K` filters of length `ℓ` slid over a length-`D` signal with stride `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterBank {
    filters: Tensor,
    stride: usize,
    signal_len: usize,
}

impl FilterBank {
    /// `filters` is `K×ℓ`.
    pub fn new(filters: Tensor, stride: usize, signal_len: usize) -> Result<Self> {
        if filters.rank() != 2 {
            return Err(Error::shape(format!("filters must be K×ℓ, got {:?}", filters.shape())));
        }
        let l = filters.cols();
        if stride == 0 {
            return Err(Error::shape("stride must be positive"));
        }
        if signal_len < l || (signal_len - l) % stride != 0 {
            return Err(Error::shape(format!(
                "signal length {signal_len} incompatible with filter length {l} and stride {stride}"
            )));
        }
        Ok(FilterBank {
            filters,
            stride,
            signal_len,
        })
    }

    pub fn filters(&self) -> &Tensor {
        &self.filters
    }

    /// `K`.
    pub fn count(&self) -> usize {
        self.filters.rows()
    }

    /// `ℓ`.
    pub fn filter_len(&self) -> usize {
        self.filters.cols()
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// `D`.
    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    /// `n = (D − ℓ)/s + 1`.
    pub fn shifts(&self) -> usize {
        (self.signal_len - self.filter_len()) / self.stride + 1
    }

    /// Filter `i` placed at shift `j` (both 0-based) as a length-`D` vector.
    pub fn shifted(&self, i: usize, j: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.signal_len];
        let off = j * self.stride;
        v[off..off + self.filter_len()].copy_from_slice(self.filters.row(i));
        v
    }
}

/// The `D × nK` matrix of all shifts, one block of `n` columns per filter.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftMatrix {
    pub matrix: Tensor,
    pub filters: usize,
    pub shifts: usize,
}

impl ShiftMatrix {
    /// Column index of filter `i` at shift `j`.
    pub fn column_index(&self, i: usize, j: usize) -> usize {
        i * self.shifts + j
    }

    pub fn signal_len(&self) -> usize {
        self.matrix.rows()
    }

    /// Linear responses `Wᵀx`.
    pub fn responses(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.matrix.transpose()?.matvec(x)
    }
}

pub fn build_shift_matrix(bank: &FilterBank) -> ShiftMatrix {
    let (k, n, l, d) = (bank.count(), bank.shifts(), bank.filter_len(), bank.signal_len());
    let cols = k * n;
    let mut m = vec![0.0; d * cols];
    for i in 0..k {
        let w = bank.filters.row(i);
        for j in 0..n {
            let col = i * n + j;
            for (t, &v) in w.iter().enumerate().take(l) {
                m[(j * bank.stride + t) * cols + col] = v;
            }
        }
    }
    ShiftMatrix {
        matrix: Tensor::new([d, cols], m).expect("valid shape"),
        filters: k,
        shifts: n,
    }
}
