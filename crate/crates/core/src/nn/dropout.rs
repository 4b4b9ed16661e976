use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// Per-element multipliers of an inverted-dropout pass: `0` for dropped
/// units and `1/(1−rate)` for kept ones.
#[derive(Clone, Debug)]
pub struct DropoutMask(Vec<f64>);

pub fn validate_rate(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::invalid(format!("dropout rate must be in [0, 1), got {rate}")))
    }
}

/// Training-mode dropout. Evaluation mode is the identity and needs no call.
pub fn dropout_forward(x: &Tensor, rate: f64, rng: &mut RngStream) -> Result<(Tensor, DropoutMask)> {
    validate_rate(rate)?;
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rate > 0.0 && rng.bernoulli(rate) { 0.0 } else { keep })
        .collect();
    let y = x.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
    Ok((Tensor::new(x.shape().to_vec(), y)?, DropoutMask(mask)))
}

pub fn dropout_backward(mask: &DropoutMask, grad_out: &Tensor) -> Result<Tensor> {
    if mask.0.len() != grad_out.len() {
        return Err(Error::shape("dropout backward: mask and gradient differ in size"));
    }
    let g = grad_out.data().iter().zip(&mask.0).map(|(a, m)| a * m).collect();
    Tensor::new(grad_out.shape().to_vec(), g)
}
