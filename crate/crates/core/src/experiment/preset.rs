use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::{ActivationKind, LayerSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Relu,
    Crelu,
    Avr,
    /// CReLU with every hidden filter count halved.
    CreluHalf,
    /// ReLU with every hidden filter count doubled.
    ReluDouble,
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "relu" => Scheme::Relu,
            "crelu" => Scheme::Crelu,
            "avr" => Scheme::Avr,
            "crelu_half" => Scheme::CreluHalf,
            "relu_double" => Scheme::ReluDouble,
            _ => return Err(Error::invalid(format!("unknown activation scheme {s:?}"))),
        })
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Relu => "relu",
            Scheme::Crelu => "crelu",
            Scheme::Avr => "avr",
            Scheme::CreluHalf => "crelu_half",
            Scheme::ReluDouble => "relu_double",
        })
    }
}

fn conv(out_channels: usize, k: usize, pad: usize) -> LayerSpec {
    LayerSpec::Conv2d {
        out_channels,
        kh: k,
        kw: k,
        stride: 1,
        pad,
    }
}

const RELU: LayerSpec = LayerSpec::Activation(ActivationKind::Relu);

pub const PRESETS: [&str; 2] = ["toy", "convpool_c"];

/// ReLU base architectures. `convpool_c` is the all-convolutional 32×32
/// model with 2×2 pools; `toy` is a four-conv miniature for 8×8 inputs.
pub fn preset_layers(name: &str, classes: usize) -> Result<Vec<LayerSpec>> {
    let mut l = Vec::new();
    match name {
        "toy" => {
            for spec in [conv(16, 3, 1), conv(16, 3, 1)] {
                l.extend([spec, RELU]);
            }
            l.push(LayerSpec::MaxPool { k: 2, stride: 2 });
            l.extend([conv(32, 3, 1), RELU, conv(classes, 1, 0), RELU, LayerSpec::GlobalAvgPool]);
        }
        "convpool_c" => {
            l.extend([conv(96, 3, 1), RELU, conv(96, 3, 1), RELU]);
            l.push(LayerSpec::MaxPool { k: 2, stride: 2 });
            for _ in 0..3 {
                l.extend([conv(192, 3, 1), RELU]);
            }
            l.push(LayerSpec::MaxPool { k: 2, stride: 2 });
            l.extend([conv(192, 3, 1), RELU, conv(192, 1, 1), RELU, conv(classes, 1, 0), RELU]);
            l.push(LayerSpec::AvgPool { k: 10, stride: 10 });
        }
        _ => {
            return Err(Error::invalid(format!(
                "unknown preset {name:?}; available: {}",
                PRESETS.join(", ")
            )))
        }
    }
    Ok(l)
}

/// Rewrites a ReLU base network. The last weighted layer keeps its width and
/// activation; every other ReLU becomes the scheme's activation and hidden
/// widths scale for the half/double variants.
pub fn apply_scheme(base: &[LayerSpec], scheme: Scheme) -> Vec<LayerSpec> {
    let last = base.iter().rposition(LayerSpec::has_weights);
    let (act, scale): (ActivationKind, fn(usize) -> usize) = match scheme {
        Scheme::Relu => (ActivationKind::Relu, |c| c),
        Scheme::Crelu => (ActivationKind::Crelu, |c| c),
        Scheme::Avr => (ActivationKind::Avr, |c| c),
        Scheme::CreluHalf => (ActivationKind::Crelu, |c| (c / 2).max(1)),
        Scheme::ReluDouble => (ActivationKind::Relu, |c| 2 * c),
    };
    base.iter()
        .enumerate()
        .map(|(i, l)| {
            if last.is_some_and(|k| i >= k) {
                return *l;
            }
            match *l {
                LayerSpec::Activation(ActivationKind::Relu) => LayerSpec::Activation(act),
                LayerSpec::Conv2d {
                    out_channels,
                    kh,
                    kw,
                    stride,
                    pad,
                } => LayerSpec::Conv2d {
                    out_channels: scale(out_channels),
                    kh,
                    kw,
                    stride,
                    pad,
                },
                LayerSpec::Dense { out_dim } => LayerSpec::Dense { out_dim: scale(out_dim) },
                other => other,
            }
        })
        .collect()
}
