//! Layer-by-layer linear inversion of a conv/CReLU stack.

use crate::error::{Error, Result};
use crate::linalg::{pinv, DEFAULT_RCOND};
use crate::nn::conv::conv_matrix;
use crate::nn::{ActivationKind, LayerSpec, NetworkConfig, Params};
use crate::recon::reconstruct::crelu_inverse;
use crate::tensor::Tensor;

struct Stage {
    /// `(Wᵀ)⁺`, of shape `(C·H·W) × (F·H′·W′)`.
    inverse: Tensor,
    bias: Vec<f64>,
    positions: usize,
    input_shape: Vec<usize>,
}

fn stages(cfg: &NetworkConfig, params: &Params, depth: usize) -> Result<Vec<Stage>> {
    if depth == 0 {
        return Err(Error::invalid("inversion depth must be at least 1"));
    }
    let layers = cfg.layers();
    let mut out = Vec::with_capacity(depth);
    let mut i = 0;
    while out.len() < depth {
        let unsupported = |index: usize, message: &str| Error::UnsupportedLayer {
            index,
            message: message.to_string(),
        };
        let Some(layer) = layers.get(i) else {
            return Err(Error::invalid(format!(
                "network has only {} conv/CReLU stages, depth {depth} requested",
                out.len()
            )));
        };
        match *layer {
            LayerSpec::Dropout { .. } => {
                i += 1;
                continue;
            }
            LayerSpec::Conv2d { stride, pad, .. } => {
                let mut j = i + 1;
                while matches!(layers.get(j), Some(LayerSpec::Dropout { .. })) {
                    j += 1;
                }
                if layers.get(j) != Some(&LayerSpec::Activation(ActivationKind::Crelu)) {
                    return Err(unsupported(i, "conv layer is not followed by CReLU"));
                }
                let slot = cfg.param_slot(i).expect("conv has weights");
                let input = cfg.shape_before(i);
                let m = conv_matrix(&params.tensors[slot], [input[0], input[1], input[2]], stride, pad)?;
                let out_shape = cfg.shape_before(i + 1);
                out.push(Stage {
                    inverse: pinv(&m.transpose()?, DEFAULT_RCOND)?,
                    bias: params.tensors[slot + 1].data().to_vec(),
                    positions: out_shape[1] * out_shape[2],
                    input_shape: input.to_vec(),
                });
                i = j + 1;
            }
            _ => return Err(unsupported(i, &format!("{layer} cannot be inverted linearly"))),
        }
    }
    Ok(out)
}

/// Inverts the CReLU features after the `depth`-th conv/CReLU stage back to
/// an input-shaped estimate. Each stage undoes CReLU, removes the bias and
/// applies `(Wᵀ)⁺` for the unrolled convolution matrix `W`. Below the top
/// stage the incoming estimate need not be complementary, so it is folded as
/// `pos − neg` without the consistency check.
pub fn invert_conv_stack(cfg: &NetworkConfig, params: &Params, features: &Tensor, depth: usize) -> Result<Tensor> {
    cfg.check_params(params)?;
    let stages = stages(cfg, params, depth)?;
    let n = features.shape()[0];
    let per = features.len() / n;
    let expected = stages.last().unwrap().inverse.cols() * 2;
    if per != expected {
        return Err(Error::shape(format!(
            "features have {per} values per sample, stage {depth} produces {expected}"
        )));
    }
    let mut out = Vec::new();
    for sample in features.data().chunks(per) {
        let mut h = sample.to_vec();
        for (k, st) in stages.iter().enumerate().rev() {
            let (p, q) = h.split_at(h.len() / 2);
            let mut z = if k + 1 == stages.len() {
                crelu_inverse(p, q)?
            } else {
                p.iter().zip(q).map(|(a, b)| a - b).collect()
            };
            for (f, b) in st.bias.iter().enumerate() {
                z[f * st.positions..(f + 1) * st.positions].iter_mut().for_each(|v| *v -= b);
            }
            h = st.inverse.matvec(&z)?;
        }
        out.extend(h);
    }
    let mut shape = vec![n];
    shape.extend_from_slice(&stages[0].input_shape);
    Tensor::new(shape, out)
}
