use crate::error::{Error, Result};
use crate::linalg::orthonormalize_columns;
use crate::rng::RngStream;
use crate::tensor::norm;

/// Monte-Carlo statistics of projecting a random unit vector onto a random
/// `D_s`-dimensional subspace of `R^D`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubspaceEstimate {
    pub trials: usize,
    /// Mean of `‖x_s‖/‖x‖` and its standard error.
    pub projection_mean: f64,
    pub projection_se: f64,
    /// Mean of `‖x − x_s‖/‖x‖` and its standard error.
    pub residual_mean: f64,
    pub residual_se: f64,
    /// Root mean square of the two ratios.
    pub projection_rms: f64,
    pub residual_rms: f64,
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

pub fn random_subspace_expectation(d: usize, ds: usize, rng: &mut RngStream, trials: usize) -> Result<SubspaceEstimate> {
    if ds == 0 || ds > d || trials == 0 {
        return Err(Error::invalid(format!("need 1 ≤ D_s ≤ D and trials ≥ 1, got D={d}, D_s={ds}, trials={trials}")));
    }
    let mut proj = Vec::with_capacity(trials);
    let mut resid = Vec::with_capacity(trials);
    for _ in 0..trials {
        let mut x = rng.gaussian_vec(d);
        let nx = norm(&x);
        x.iter_mut().for_each(|v| *v /= nx);
        let (p, r) = if ds == d {
            (1.0, 0.0)
        } else {
            let basis = loop {
                if let Ok(u) = orthonormalize_columns(&rng.gaussian_tensor([d, ds])) {
                    break u;
                }
            };
            let coords = basis.transpose()?.matvec(&x)?;
            let p2: f64 = coords.iter().map(|c| c * c).sum();
            (p2.sqrt(), (1.0 - p2).max(0.0).sqrt())
        };
        proj.push(p);
        resid.push(r);
    }
    let (pm, pse) = mean_se(&proj);
    let (rm, rse) = mean_se(&resid);
    let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    Ok(SubspaceEstimate {
        trials,
        projection_mean: pm,
        projection_se: pse,
        residual_mean: rm,
        residual_se: rse,
        projection_rms: rms(&proj),
        residual_rms: rms(&resid),
    })
}
