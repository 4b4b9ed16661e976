//! Elementwise activation schemes. Dimension 1 of a batch tensor is the
//! channel axis; CReLU concatenates along it, positive block first.

use std::fmt;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ActivationKind {
    Relu,
    /// `x ↦ ([x]₊, [−x]₊)`, doubling the channel count.
    Crelu,
    /// Absolute value rectification.
    Avr,
    LeakyRelu(f64),
}

impl ActivationKind {
    pub fn leaky(slope: f64) -> Result<Self> {
        if slope > 0.0 && slope < 1.0 {
            Ok(ActivationKind::LeakyRelu(slope))
        } else {
            Err(Error::invalid(format!("leaky slope must be in (0, 1), got {slope}")))
        }
    }

    /// Multiplier applied to the channel dimension.
    pub fn channel_factor(self) -> usize {
        match self {
            ActivationKind::Crelu => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActivationKind::Relu => f.write_str("relu"),
            ActivationKind::Crelu => f.write_str("crelu"),
            ActivationKind::Avr => f.write_str("avr"),
            ActivationKind::LeakyRelu(s) => write!(f, "leaky{s}"),
        }
    }
}

#[inline]
fn pos(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

#[inline]
fn neg(x: f64) -> f64 {
    if x < 0.0 {
        -x
    } else {
        0.0
    }
}

/// (batch, channels, spatial) view of a tensor of rank >= 2.
fn split_dims(shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return Err(Error::shape(format!(
            "activation needs [N, C, ...], got {shape:?}"
        )));
    }
    Ok((shape[0], shape[1], shape[2..].iter().product()))
}

pub fn activation_forward(kind: ActivationKind, x: &Tensor) -> Result<Tensor> {
    let (n, c, s) = split_dims(x.shape())?;
    match kind {
        ActivationKind::Relu => Ok(x.map(pos)),
        ActivationKind::Avr => Ok(x.map(f64::abs)),
        ActivationKind::LeakyRelu(slope) => Ok(x.map(|v| if v > 0.0 { v } else { slope * v })),
        ActivationKind::Crelu => {
            let mut out = Vec::with_capacity(2 * x.len());
            for sample in x.data().chunks(c * s) {
                out.extend(sample.iter().map(|&v| pos(v)));
                out.extend(sample.iter().map(|&v| neg(v)));
            }
            let mut shape = x.shape().to_vec();
            shape[1] = 2 * c;
            debug_assert_eq!(out.len(), n * 2 * c * s);
            Tensor::new(shape, out)
        }
    }
}

/// Gradient with respect to the activation input. `input` is the tensor the
/// matching forward consumed. The subgradient at 0 is 0 for relu, crelu and avr.
pub fn activation_backward(kind: ActivationKind, input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    let (n, c, s) = split_dims(input.shape())?;
    let mut expected = input.shape().to_vec();
    expected[1] *= kind.channel_factor();
    if grad_out.shape() != expected.as_slice() {
        return Err(Error::shape(format!(
            "{kind} backward: grad {:?} vs expected {expected:?}",
            grad_out.shape()
        )));
    }
    match kind {
        ActivationKind::Relu => input.zip_map(grad_out, |x, g| if x > 0.0 { g } else { 0.0 }),
        ActivationKind::Avr => input.zip_map(grad_out, |x, g| {
            if x > 0.0 {
                g
            } else if x < 0.0 {
                -g
            } else {
                0.0
            }
        }),
        ActivationKind::LeakyRelu(slope) => {
            input.zip_map(grad_out, |x, g| if x > 0.0 { g } else { slope * g })
        }
        ActivationKind::Crelu => {
            let block = c * s;
            let mut out = Vec::with_capacity(input.len());
            for i in 0..n {
                let xs = &input.data()[i * block..(i + 1) * block];
                let g = &grad_out.data()[i * 2 * block..(i + 1) * 2 * block];
                let (gp, gn) = g.split_at(block);
                out.extend(xs.iter().zip(gp).zip(gn).map(|((&x, &gp), &gn)| {
                    if x > 0.0 {
                        gp
                    } else if x < 0.0 {
                        -gn
                    } else {
                        0.0
                    }
                }));
            }
            Tensor::new(input.shape().to_vec(), out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn t(shape: &[usize], v: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn crelu_scalar_cases() {
        let y = activation_forward(ActivationKind::Crelu, &t(&[1, 1], &[3.0])).unwrap();
        assert_eq!(y.data(), &[3.0, 0.0]);
        let y = activation_forward(ActivationKind::Crelu, &t(&[1, 1], &[-2.0])).unwrap();
        assert_eq!(y.data(), &[0.0, 2.0]);
    }

    #[test]
    fn crelu_layout_is_positive_block_then_negative_block() {
        let x = t(&[1, 2, 2], &[1.0, -2.0, -3.0, 4.0]);
        let y = activation_forward(ActivationKind::Crelu, &x).unwrap();
        assert_eq!(y.shape(), &[1, 4, 2]);
        assert_eq!(y.data(), &[1.0, 0.0, 0.0, 4.0, 0.0, 2.0, 3.0, 0.0]);
    }

    #[test]
    fn avr_is_absolute_value() {
        let y = activation_forward(ActivationKind::Avr, &t(&[1, 2], &[-3.0, 4.0])).unwrap();
        assert_eq!(y.data(), &[3.0, 4.0]);
    }

    #[test]
    fn crelu_backward_routes_by_sign() {
        let g = t(&[1, 2], &[2.0, 7.0]);
        let gi = activation_backward(ActivationKind::Crelu, &t(&[1, 1], &[5.0]), &g).unwrap();
        assert_eq!(gi.data(), &[2.0]);
        let gi = activation_backward(ActivationKind::Crelu, &t(&[1, 1], &[-1.0]), &g).unwrap();
        assert_eq!(gi.data(), &[-7.0]);
        let gi = activation_backward(ActivationKind::Crelu, &t(&[1, 1], &[0.0]), &g).unwrap();
        assert_eq!(gi.data(), &[0.0]);
    }

    #[test]
    fn backward_shape_mismatch() {
        let x = t(&[1, 2], &[1.0, 2.0]);
        let g = t(&[1, 2], &[1.0, 1.0]);
        assert!(activation_backward(ActivationKind::Crelu, &x, &g).is_err());
    }

    #[test]
    fn leaky_slope_validated() {
        assert!(ActivationKind::leaky(0.0).is_err());
        assert!(ActivationKind::leaky(1.0).is_err());
        assert!(ActivationKind::leaky(0.2).is_ok());
    }

    #[test]
    fn finite_differences_away_from_kinks() {
        let mut rng = RngStream::new(17);
        let h = 1e-5;
        for kind in [
            ActivationKind::Relu,
            ActivationKind::Crelu,
            ActivationKind::Avr,
            ActivationKind::LeakyRelu(0.1),
        ] {
            let x = rng.gaussian_tensor([2, 3, 4]);
            let y = activation_forward(kind, &x).unwrap();
            let w = rng.gaussian_tensor(y.shape().to_vec());
            let loss = |x: &Tensor| {
                let y = activation_forward(kind, x).unwrap();
                crate::tensor::dot(y.data(), w.data())
            };
            let g = activation_backward(kind, &x, &w).unwrap();
            for i in 0..x.len() {
                if x.data()[i].abs() < 1e-3 {
                    continue;
                }
                let mut xp = x.clone();
                xp.data_mut()[i] += h;
                let mut xm = x.clone();
                xm.data_mut()[i] -= h;
                let num = (loss(&xp) - loss(&xm)) / (2.0 * h);
                let ana = g.data()[i];
                let rel = (num - ana).abs() / num.abs().max(ana.abs()).max(1e-8);
                assert!(rel < 1e-6, "{kind}: {num} vs {ana}");
            }
        }
    }
}
