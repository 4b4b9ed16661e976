//! Shared fixtures for the criterion benchmarks.

use crelu_core::experiment::preset_layers;
use crelu_core::nn::{NetworkConfig, Params};
use crelu_core::recon::{build_shift_matrix, FilterBank, PooledConvLayer, ShiftMatrix};
use crelu_core::{gaussian_unit_filters, RngStream, Tensor};

pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Tensor {
    RngStream::new(seed).gaussian_tensor([rows, cols])
}

pub fn gaussian_batch(shape: [usize; 4], seed: u64) -> Tensor {
    RngStream::new(seed).gaussian_tensor(shape)
}

/// The toy preset with initial weights for 8×8 RGB inputs.
pub fn toy_network(classes: usize, seed: u64) -> (NetworkConfig, Params) {
    let cfg = NetworkConfig::new(vec![3, 8, 8], preset_layers("toy", classes).expect("toy preset"), classes)
        .expect("toy preset chains");
    let params = cfg.init_params(&mut RngStream::new(seed));
    (cfg, params)
}

pub fn shift_matrix(filters: usize, filter_len: usize, stride: usize, signal_len: usize, seed: u64) -> ShiftMatrix {
    let bank = FilterBank::new(
        gaussian_unit_filters(&mut RngStream::new(seed), filters, filter_len),
        stride,
        signal_len,
    )
    .expect("valid geometry");
    build_shift_matrix(&bank)
}

pub fn pooled_layer(filters: usize, channels: usize, seed: u64) -> PooledConvLayer {
    PooledConvLayer {
        weight: RngStream::new(seed).gaussian_tensor([filters, channels, 3, 3]),
        stride: 1,
        pad: 1,
        pool_k: 2,
        pool_stride: 2,
    }
}
