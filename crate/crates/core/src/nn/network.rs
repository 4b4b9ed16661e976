//! Sequential networks described by a list of layer specs.

use std::fmt;

use crate::error::{Error, Result};
use crate::nn::activation::{activation_backward, activation_forward, ActivationKind};
use crate::nn::conv::{conv2d_backward, conv2d_forward, ConvCache, ConvGeometry};
use crate::nn::dense::{dense_backward, dense_forward};
use crate::nn::dropout::{dropout_backward, dropout_forward, validate_rate, DropoutMask};
use crate::nn::pool::{
    avgpool_backward, avgpool_forward, global_avgpool_backward, global_avgpool_forward,
    maxpool_backward, maxpool_forward, pool_output_shape, MaxPoolCache,
};
use crate::rng::RngStream;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LayerSpec {
    Conv2d {
        out_channels: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        pad: usize,
    },
    Dense {
        out_dim: usize,
    },
    MaxPool {
        k: usize,
        stride: usize,
    },
    AvgPool {
        k: usize,
        stride: usize,
    },
    GlobalAvgPool,
    Activation(ActivationKind),
    Dropout {
        rate: f64,
    },
}

impl LayerSpec {
    pub fn has_weights(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. })
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LayerSpec::Conv2d {
                out_channels,
                kh,
                kw,
                stride,
                pad,
            } => write!(f, "conv {kh}x{kw}x{out_channels} s{stride} p{pad}"),
            LayerSpec::Dense { out_dim } => write!(f, "dense {out_dim}"),
            LayerSpec::MaxPool { k, stride } => write!(f, "maxpool {k} s{stride}"),
            LayerSpec::AvgPool { k, stride } => write!(f, "avgpool {k} s{stride}"),
            LayerSpec::GlobalAvgPool => f.write_str("gap"),
            LayerSpec::Activation(kind) => write!(f, "{kind}"),
            LayerSpec::Dropout { rate } => write!(f, "dropout {rate}"),
        }
    }
}

/// A validated layer sequence. `shapes[i]` is the per-sample input shape of
/// layer `i`; the last entry is the network output shape.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    layers: Vec<LayerSpec>,
    classes: usize,
    shapes: Vec<Vec<usize>>,
    slots: Vec<Option<usize>>,
}

fn layer_output(index: usize, layer: &LayerSpec, input: &[usize]) -> Result<Vec<usize>> {
    let as_image = || -> Result<[usize; 3]> {
        match *input {
            [c, h, w] => Ok([c, h, w]),
            _ => Err(Error::shape(format!(
                "layer {index} ({layer}) needs a [C,H,W] input, got {input:?}"
            ))),
        }
    };
    let wrap = |e: Error| match e {
        Error::Shape(m) => Error::shape(format!("layer {index} ({layer}): {m}")),
        other => other,
    };
    Ok(match *layer {
        LayerSpec::Conv2d {
            out_channels,
            kh,
            kw,
            stride,
            pad,
        } => {
            let g = ConvGeometry::new(as_image()?, out_channels, (kh, kw), stride, pad).map_err(wrap)?;
            vec![out_channels, g.out_height(), g.out_width()]
        }
        LayerSpec::Dense { out_dim } => {
            if out_dim == 0 {
                return Err(Error::shape(format!("layer {index}: dense width must be positive")));
            }
            vec![out_dim]
        }
        LayerSpec::MaxPool { k, stride } | LayerSpec::AvgPool { k, stride } => {
            pool_output_shape(&as_image()?, k, stride).map_err(wrap)?.to_vec()
        }
        LayerSpec::GlobalAvgPool => vec![as_image()?[0], 1, 1],
        LayerSpec::Activation(kind) => {
            // A flat vector counts as `D` channels.
            let mut s = input.to_vec();
            s[0] *= kind.channel_factor();
            s
        }
        LayerSpec::Dropout { rate } => {
            validate_rate(rate)?;
            input.to_vec()
        }
    })
}

impl NetworkConfig {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>, classes: usize) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::shape(format!("invalid input shape {input_shape:?}")));
        }
        let mut shapes = vec![input_shape];
        let mut slots = Vec::with_capacity(layers.len());
        let mut next_slot = 0;
        for (i, layer) in layers.iter().enumerate() {
            let out = layer_output(i, layer, shapes.last().unwrap())?;
            shapes.push(out);
            if layer.has_weights() {
                slots.push(Some(next_slot));
                next_slot += 2;
            } else {
                slots.push(None);
            }
        }
        let out: usize = shapes.last().unwrap().iter().product();
        if out != classes {
            return Err(Error::shape(format!(
                "network ends with {out} outputs but {classes} classes were requested"
            )));
        }
        Ok(NetworkConfig {
            layers,
            classes,
            shapes,
            slots,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.shapes[0]
    }

    /// Per-sample input shape of layer `i` (`i == layers.len()` gives the output).
    pub fn shape_before(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    /// Index of the weight tensor of layer `i` in [`Params`]; the bias follows it.
    pub fn param_slot(&self, i: usize) -> Option<usize> {
        self.slots[i]
    }

    /// Expected `(name, shape)` of every parameter tensor.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let input = &self.shapes[i];
            match *layer {
                LayerSpec::Conv2d {
                    out_channels, kh, kw, ..
                } => {
                    out.push((format!("layer{i}.weight"), vec![out_channels, input[0], kh, kw]));
                    out.push((format!("layer{i}.bias"), vec![out_channels]));
                }
                LayerSpec::Dense { out_dim } => {
                    out.push((format!("layer{i}.weight"), vec![out_dim, input.iter().product()]));
                    out.push((format!("layer{i}.bias"), vec![out_dim]));
                }
                _ => {}
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.param_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }

    /// Gaussian weights with standard deviation `sqrt(2/fan_in)`, zero biases.
    pub fn init_params(&self, rng: &mut RngStream) -> Params {
        let mut tensors = Vec::new();
        let mut names = Vec::new();
        for (name, shape) in self.param_shapes() {
            let t = if name.ends_with(".weight") {
                let fan_in: usize = shape[1..].iter().product();
                rng.gaussian_tensor(shape).scale((2.0 / fan_in as f64).sqrt())
            } else {
                Tensor::zeros(shape)
            };
            tensors.push(t);
            names.push(name);
        }
        Params { names, tensors }
    }

    pub fn check_params(&self, params: &Params) -> Result<()> {
        let expected = self.param_shapes();
        if expected.len() != params.tensors.len() {
            return Err(Error::shape(format!(
                "network has {} parameter tensors, got {}",
                expected.len(),
                params.tensors.len()
            )));
        }
        for ((name, shape), t) in expected.iter().zip(&params.tensors) {
            if t.shape() != shape.as_slice() {
                return Err(Error::shape(format!("{name}: expected {shape:?}, got {:?}", t.shape())));
            }
        }
        Ok(())
    }
}

/// Named parameter tensors in layer order: weight then bias per weighted layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor>,
}

impl Params {
    pub fn zeros_like(&self) -> Params {
        Params {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| Tensor::zeros(t.shape().to_vec())).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn total_len(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// `self += scale · other`, elementwise over congruent tensors.
    pub fn add_scaled(&mut self, other: &Params, scale: f64) -> Result<()> {
        if self.tensors.len() != other.tensors.len() {
            return Err(Error::shape("parameter sets differ in length"));
        }
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            if a.shape() != b.shape() {
                return Err(Error::shape(format!("{:?} vs {:?}", a.shape(), b.shape())));
            }
            a.data_mut().iter_mut().zip(b.data()).for_each(|(x, y)| *x += scale * y);
        }
        Ok(())
    }
}

pub enum Mode<'a> {
    Eval,
    Train(&'a mut RngStream),
}

#[derive(Clone, Debug)]
enum LayerCache {
    Conv(ConvCache),
    Dense(Tensor),
    MaxPool(MaxPoolCache),
    AvgPool(Vec<usize>),
    GlobalAvgPool(Vec<usize>),
    Activation(Tensor),
    Dropout(Option<DropoutMask>),
}

/// Everything backward needs from one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    batch: usize,
    layers: Vec<LayerCache>,
}

impl ForwardCache {
    /// Inputs seen by every activation layer, in layer order.
    pub fn activation_inputs(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().filter_map(|c| match c {
            LayerCache::Activation(t) => Some(t),
            _ => None,
        })
    }

    /// Winning indices of every max-pooling layer, in layer order.
    pub fn maxpool_winners(&self) -> impl Iterator<Item = &[usize]> {
        self.layers.iter().filter_map(|c| match c {
            LayerCache::MaxPool(m) => Some(m.argmax()),
            _ => None,
        })
    }
}

fn batched(n: usize, shape: &[usize]) -> Vec<usize> {
    let mut s = Vec::with_capacity(shape.len() + 1);
    s.push(n);
    s.extend_from_slice(shape);
    s
}

fn check_input(cfg: &NetworkConfig, x: &Tensor) -> Result<usize> {
    let n = x.shape()[0];
    if x.rank() < 2 || x.shape()[1..] != *cfg.input_shape() {
        return Err(Error::shape(format!(
            "network input {:?} does not match [N, {:?}]",
            x.shape(),
            cfg.input_shape()
        )));
    }
    Ok(n)
}

fn run_layers(
    cfg: &NetworkConfig,
    params: &Params,
    x: &Tensor,
    upto: usize,
    mut mode: Mode<'_>,
    keep_cache: bool,
) -> Result<(Tensor, ForwardCache)> {
    cfg.check_params(params)?;
    let n = check_input(cfg, x)?;
    let mut h = x.clone();
    let mut caches = Vec::with_capacity(if keep_cache { upto } else { 0 });
    for (i, layer) in cfg.layers[..upto].iter().enumerate() {
        let (next, cache) = match *layer {
            LayerSpec::Conv2d { stride, pad, .. } => {
                let s = cfg.slots[i].unwrap();
                let (y, c) = conv2d_forward(&h, &params.tensors[s], &params.tensors[s + 1], stride, pad)?;
                (y, LayerCache::Conv(c))
            }
            LayerSpec::Dense { .. } => {
                let s = cfg.slots[i].unwrap();
                let y = dense_forward(&h, &params.tensors[s], &params.tensors[s + 1])?;
                let y = y.reshape(batched(n, &cfg.shapes[i + 1]))?;
                (y, LayerCache::Dense(h))
            }
            LayerSpec::MaxPool { k, stride } => {
                let (y, c) = maxpool_forward(&h, k, stride)?;
                (y, LayerCache::MaxPool(c))
            }
            LayerSpec::AvgPool { k, stride } => {
                let y = avgpool_forward(&h, k, stride)?;
                (y, LayerCache::AvgPool(h.shape().to_vec()))
            }
            LayerSpec::GlobalAvgPool => {
                let y = global_avgpool_forward(&h)?;
                (y, LayerCache::GlobalAvgPool(h.shape().to_vec()))
            }
            LayerSpec::Activation(kind) => {
                let y = activation_forward(kind, &h)?;
                (y, LayerCache::Activation(h))
            }
            LayerSpec::Dropout { rate } => match mode {
                Mode::Train(ref mut rng) if rate > 0.0 => {
                    let (y, m) = dropout_forward(&h, rate, rng)?;
                    (y, LayerCache::Dropout(Some(m)))
                }
                _ => (h, LayerCache::Dropout(None)),
            },
        };
        h = next;
        if keep_cache {
            caches.push(cache);
        }
    }
    Ok((
        h,
        ForwardCache {
            batch: n,
            layers: caches,
        },
    ))
}

/// Full forward pass. The output is `N × classes`.
pub fn network_forward(
    cfg: &NetworkConfig,
    params: &Params,
    x: &Tensor,
    mode: Mode<'_>,
) -> Result<(Tensor, ForwardCache)> {
    let (y, cache) = run_layers(cfg, params, x, cfg.layers.len(), mode, true)?;
    let n = cache.batch;
    Ok((y.reshape([n, cfg.classes])?, cache))
}

/// Evaluation-mode activations after the first `upto` layers.
pub fn forward_prefix(cfg: &NetworkConfig, params: &Params, x: &Tensor, upto: usize) -> Result<Tensor> {
    if upto > cfg.layers.len() {
        return Err(Error::invalid(format!(
            "prefix of {upto} layers requested from a {}-layer network",
            cfg.layers.len()
        )));
    }
    Ok(run_layers(cfg, params, x, upto, Mode::Eval, false)?.0)
}

/// Gradients for every parameter tensor and for the network input.
pub fn network_backward(
    cfg: &NetworkConfig,
    params: &Params,
    cache: &ForwardCache,
    grad_out: &Tensor,
) -> Result<(Params, Tensor)> {
    if cache.layers.len() != cfg.layers.len() {
        return Err(Error::invalid("forward cache does not belong to this network"));
    }
    let n = cache.batch;
    if grad_out.len() != n * cfg.classes {
        return Err(Error::shape(format!(
            "output gradient {:?} vs [{n}, {}]",
            grad_out.shape(),
            cfg.classes
        )));
    }
    let mut grads = params.zeros_like();
    let mut g = grad_out.clone().reshape(batched(n, cfg.shapes.last().unwrap()))?;
    for i in (0..cfg.layers.len()).rev() {
        g = match (&cfg.layers[i], &cache.layers[i]) {
            (LayerSpec::Conv2d { .. }, LayerCache::Conv(c)) => {
                let s = cfg.slots[i].unwrap();
                let (gx, gw, gb) = conv2d_backward(c, &g)?;
                grads.tensors[s] = gw;
                grads.tensors[s + 1] = gb;
                gx
            }
            (LayerSpec::Dense { .. }, LayerCache::Dense(input)) => {
                let s = cfg.slots[i].unwrap();
                let g2 = g.reshape([n, cfg.shapes[i + 1].iter().product::<usize>()])?;
                let (gx, gw, gb) = dense_backward(input, &params.tensors[s], &g2)?;
                grads.tensors[s] = gw;
                grads.tensors[s + 1] = gb;
                gx
            }
            (LayerSpec::MaxPool { .. }, LayerCache::MaxPool(c)) => maxpool_backward(c, &g)?,
            (LayerSpec::AvgPool { k, stride }, LayerCache::AvgPool(shape)) => {
                avgpool_backward(shape, *k, *stride, &g)?
            }
            (LayerSpec::GlobalAvgPool, LayerCache::GlobalAvgPool(shape)) => {
                global_avgpool_backward(shape, &g)?
            }
            (LayerSpec::Activation(kind), LayerCache::Activation(input)) => {
                activation_backward(*kind, input, &g)?
            }
            (LayerSpec::Dropout { .. }, LayerCache::Dropout(mask)) => match mask {
                Some(m) => dropout_backward(m, &g)?,
                None => g,
            },
            _ => return Err(Error::invalid("forward cache does not belong to this network")),
        };
    }
    Ok((grads, g))
}
