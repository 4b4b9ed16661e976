use crate::error::{Error, Result};
use crate::rng::RngStream;

pub const PERMUTATION_RESAMPLES: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShiftTest {
    /// `mean(μ^w) − mean(μ^r)`.
    pub mean_difference: f64,
    /// One-sided p-value for `mean(μ^w) < mean(μ^r)`.
    pub p_value: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// One-sided two-sample permutation test on the difference of means,
/// `p = (1 + #{d_perm ≤ d_obs}) / (1 + R)`.
pub fn pairing_shift_test(mu_w: &[f64], mu_r: &[f64], resamples: usize, rng: &mut RngStream) -> Result<ShiftTest> {
    if mu_w.is_empty() || mu_r.is_empty() {
        return Err(Error::invalid("both samples must be nonempty"));
    }
    let observed = mean(mu_w) - mean(mu_r);
    let mut pooled: Vec<f64> = mu_w.iter().chain(mu_r).copied().collect();
    let total: f64 = pooled.iter().sum();
    let (nw, nr) = (mu_w.len(), mu_r.len());
    // Guards against spurious strict inequalities from summation order.
    let slack = 1e-12 * (1.0 + observed.abs());
    let mut hits = 0usize;
    for _ in 0..resamples {
        rng.shuffle(&mut pooled);
        let sw: f64 = pooled[..nw].iter().sum();
        let d = sw / nw as f64 - (total - sw) / nr as f64;
        if d <= observed + slack {
            hits += 1;
        }
    }
    Ok(ShiftTest {
        mean_difference: observed,
        p_value: (1 + hits) as f64 / (1 + resamples) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn identical_samples_near_half() {
        let mut rng = RngStream::new(1);
        let a = rng.gaussian_vec(40);
        let t = pairing_shift_test(&a, &a, PERMUTATION_RESAMPLES, &mut rng).unwrap();
        assert!((t.p_value - 0.5).abs() < 0.05, "{}", t.p_value);
    }

    #[test]
    fn maximal_separation() {
        let t = pairing_shift_test(&[-1.0; 20], &[0.0; 20], PERMUTATION_RESAMPLES, &mut RngStream::new(2)).unwrap();
        assert!(t.p_value < 1e-3);
        assert_eq!(t.mean_difference, -1.0);
    }

    #[test]
    fn agrees_with_z_test() {
        let mut rng = RngStream::new(3);
        let n = 60;
        let w: Vec<f64> = (0..n).map(|_| rng.gaussian() - 0.3).collect();
        let r: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
        let t = pairing_shift_test(&w, &r, PERMUTATION_RESAMPLES, &mut rng).unwrap();
        let var = |v: &[f64]| {
            let m = mean(v);
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
        };
        let se = (var(&w) / n as f64 + var(&r) / n as f64).sqrt();
        let p = Normal::new(0.0, 1.0).unwrap().cdf((mean(&w) - mean(&r)) / se);
        assert!((t.p_value - p).abs() < 0.02, "{} vs {p}", t.p_value);
    }

    #[test]
    fn empty_sample_rejected() {
        assert!(pairing_shift_test(&[], &[1.0], 10, &mut RngStream::new(4)).is_err());
    }
}
