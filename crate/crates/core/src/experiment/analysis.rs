//! Glue between trained networks and the analysis routines. Conv layers
//! are addressed by 1-based ordinal (`conv1`, `conv2`, ...).

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{forward_prefix, ActivationKind, LayerSpec, NetworkConfig, Params};
use crate::pairing::{
    mu_histogram, outgoing_weight_correlation, pairing_baseline, pairing_mu, pairing_shift_test, CorrelationReport,
    PairingReport, ShiftTest, HISTOGRAM_BINS, PERMUTATION_RESAMPLES,
};
use crate::recon::PooledConvLayer;
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// Layer index of the `ordinal`-th convolution.
pub fn conv_layer_index(cfg: &NetworkConfig, ordinal: usize) -> Result<usize> {
    cfg.layers()
        .iter()
        .enumerate()
        .filter(|(_, l)| matches!(l, LayerSpec::Conv2d { .. }))
        .nth(ordinal.checked_sub(1).ok_or_else(|| Error::invalid("conv layers are numbered from 1"))?)
        .map(|(i, _)| i)
        .ok_or_else(|| Error::invalid(format!("network has no conv{ordinal}")))
}

pub fn conv_count(cfg: &NetworkConfig) -> usize {
    cfg.layers().iter().filter(|l| matches!(l, LayerSpec::Conv2d { .. })).count()
}

/// Index of the next non-dropout layer after `i`.
fn next_layer(cfg: &NetworkConfig, i: usize) -> Option<usize> {
    (i + 1..cfg.layers().len()).find(|&j| !matches!(cfg.layers()[j], LayerSpec::Dropout { .. }))
}

/// The conv weights as a `K × (C·kh·kw)` filter matrix.
pub fn conv_filters(cfg: &NetworkConfig, params: &Params, ordinal: usize) -> Result<Tensor> {
    let i = conv_layer_index(cfg, ordinal)?;
    let w = &params.tensors[cfg.param_slot(i).expect("conv has weights")];
    let k = w.shape()[0];
    w.clone().reshape([k, w.len() / k])
}

/// Activation applied directly after the `ordinal`-th convolution.
pub fn conv_activation(cfg: &NetworkConfig, ordinal: usize) -> Result<Option<ActivationKind>> {
    let i = conv_layer_index(cfg, ordinal)?;
    Ok(next_layer(cfg, i).and_then(|j| match cfg.layers()[j] {
        LayerSpec::Activation(a) => Some(a),
        _ => None,
    }))
}

/// A conv → activation → max-pool block as a reconstruction-ratio layer.
pub fn pooled_conv_layer(cfg: &NetworkConfig, params: &Params, ordinal: usize) -> Result<PooledConvLayer> {
    let i = conv_layer_index(cfg, ordinal)?;
    let LayerSpec::Conv2d { stride, pad, .. } = cfg.layers()[i] else { unreachable!() };
    let pool = next_layer(cfg, i).and_then(|a| next_layer(cfg, a)).map(|p| cfg.layers()[p]);
    match pool {
        Some(LayerSpec::MaxPool { k, stride: ps }) => Ok(PooledConvLayer {
            weight: params.tensors[cfg.param_slot(i).unwrap()].clone(),
            stride,
            pad,
            pool_k: k,
            pool_stride: ps,
        }),
        _ => Err(Error::UnsupportedLayer {
            index: i,
            message: format!("conv{ordinal} is not followed by an activation and max pooling"),
        }),
    }
}

/// Inputs seen by the `ordinal`-th convolution for the first `limit` images.
pub fn conv_inputs(cfg: &NetworkConfig, params: &Params, data: &Dataset, ordinal: usize, limit: usize) -> Result<Vec<Tensor>> {
    let i = conv_layer_index(cfg, ordinal)?;
    let n = limit.min(data.len());
    let idx: Vec<usize> = (0..n).collect();
    let shape = cfg.shape_before(i).to_vec();
    let mut out = Vec::with_capacity(n);
    for chunk in idx.chunks(64) {
        let (x, _) = data.batch(chunk)?;
        let h = forward_prefix(cfg, params, &x, i)?;
        let per = h.len() / chunk.len();
        for s in h.data().chunks(per) {
            out.push(Tensor::new(shape.clone(), s.to_vec())?);
        }
    }
    Ok(out)
}

/// The same layer with standard-normal weights.
pub fn random_like(layer: &PooledConvLayer, rng: &mut RngStream) -> PooledConvLayer {
    PooledConvLayer {
        weight: rng.gaussian_tensor(layer.weight.shape().to_vec()),
        ..layer.clone()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairingAnalysis {
    pub learned: PairingReport,
    pub random: PairingReport,
    pub learned_hist: Vec<usize>,
    pub random_hist: Vec<usize>,
    pub test: ShiftTest,
}

/// Learned `μ^w` against a size-matched random baseline `μ^r`.
pub fn pairing_analysis(cfg: &NetworkConfig, params: &Params, ordinal: usize, rng: &mut RngStream) -> Result<PairingAnalysis> {
    let filters = conv_filters(cfg, params, ordinal)?;
    let learned = pairing_mu(&filters)?;
    let random = pairing_baseline(filters.rows(), filters.cols(), rng)?;
    let test = pairing_shift_test(&learned.mu, &random.mu, PERMUTATION_RESAMPLES, rng)?;
    Ok(PairingAnalysis {
        learned_hist: mu_histogram(&learned.mu, HISTOGRAM_BINS)?,
        random_hist: mu_histogram(&random.mu, HISTOGRAM_BINS)?,
        learned,
        random,
        test,
    })
}

/// Pair/non-pair correlation of the weights leaving a CReLU conv layer.
pub fn crelu_correlation(cfg: &NetworkConfig, params: &Params, ordinal: usize) -> Result<CorrelationReport> {
    let i = conv_layer_index(cfg, ordinal)?;
    if conv_activation(cfg, ordinal)? != Some(ActivationKind::Crelu) {
        return Err(Error::UnsupportedLayer {
            index: i,
            message: format!("conv{ordinal} is not followed by CReLU"),
        });
    }
    let channels = cfg.shape_before(i + 1)[0];
    let next = (i + 1..cfg.layers().len())
        .find(|&j| cfg.layers()[j].has_weights())
        .ok_or_else(|| Error::UnsupportedLayer {
            index: i,
            message: "no weighted layer reads the CReLU output".into(),
        })?;
    outgoing_weight_correlation(&params.tensors[cfg.param_slot(next).unwrap()], channels)
}
