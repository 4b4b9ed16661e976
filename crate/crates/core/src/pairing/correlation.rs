use crate::error::{Error, Result};
use crate::tensor::{dot, norm, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationReport {
    /// `|cos(u⁺_i, u⁻_i)|` for every filter whose outgoing vectors are nonzero.
    pub pair: Vec<f64>,
    pub pair_mean: f64,
    pub pair_std: f64,
    /// Statistics of `|cos(u⁺_i, u⁻_j)|` over `i ≠ j`.
    pub nonpair_mean: f64,
    pub nonpair_std: f64,
    pub nonpair_count: usize,
    /// Filters left out because an outgoing vector vanished.
    pub excluded: usize,
}

impl CorrelationReport {
    pub const CSV_HEADER: &'static str = "layer,pair_mean,pair_std,nonpair_mean,nonpair_std";

    pub fn csv_row(&self, layer: usize) -> String {
        format!(
            "{layer},{:.6},{:.6},{:.6},{:.6}",
            self.pair_mean, self.pair_std, self.nonpair_mean, self.nonpair_std
        )
    }
}

/// Splits the next layer's weights into one outgoing vector per input
/// channel. Conv weights are `F′ × 2C × kh × kw`; dense weights are
/// `out × (2C·S)` with channel-major inputs.
pub fn outgoing_vectors(next_weights: &Tensor, channels: usize) -> Result<Vec<Vec<f64>>> {
    let total = 2 * channels;
    let (rows, per_row) = match next_weights.shape() {
        &[f, c2, kh, kw] if c2 == total => (f, c2 * kh * kw),
        &[o, d] if d % total == 0 => (o, d),
        s => {
            return Err(Error::shape(format!(
                "next layer {s:?} does not read {total} channels"
            )))
        }
    };
    let chunk = per_row / total;
    let mut out = vec![Vec::with_capacity(rows * chunk); total];
    for r in 0..rows {
        let row = &next_weights.data()[r * per_row..(r + 1) * per_row];
        for (c, v) in out.iter_mut().enumerate() {
            v.extend_from_slice(&row[c * chunk..(c + 1) * chunk]);
        }
    }
    Ok(out)
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

/// Absolute cosines between the weights reading channel `i` (positive
/// phase) and channel `C + i` (negative phase) of a CReLU layer.
pub fn outgoing_weight_correlation(next_weights: &Tensor, channels: usize) -> Result<CorrelationReport> {
    let u = outgoing_vectors(next_weights, channels)?;
    let unit: Vec<Option<Vec<f64>>> = u
        .iter()
        .map(|v| {
            let n = norm(v);
            (n > 0.0).then(|| v.iter().map(|x| x / n).collect())
        })
        .collect();
    let valid: Vec<usize> = (0..channels).filter(|&i| unit[i].is_some() && unit[channels + i].is_some()).collect();
    let abs_cos = |a: usize, b: usize| dot(unit[a].as_ref().unwrap(), unit[b].as_ref().unwrap()).abs().min(1.0);
    let pair: Vec<f64> = valid.iter().map(|&i| abs_cos(i, channels + i)).collect();
    let mut nonpair = Vec::new();
    for &i in &valid {
        for &j in &valid {
            if i != j {
                nonpair.push(abs_cos(i, channels + j));
            }
        }
    }
    let (pair_mean, pair_std) = mean_std(&pair);
    let (nonpair_mean, nonpair_std) = mean_std(&nonpair);
    Ok(CorrelationReport {
        pair_mean,
        pair_std,
        nonpair_mean,
        nonpair_std,
        nonpair_count: nonpair.len(),
        excluded: channels - valid.len(),
        pair,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn negated_outgoing_weights_correlate_fully() {
        let mut rng = RngStream::new(1);
        let c = 3;
        let u = rng.gaussian_tensor([4, c, 2, 2]);
        let mut w = Vec::new();
        for f in 0..4 {
            let block = &u.data()[f * c * 4..(f + 1) * c * 4];
            w.extend_from_slice(block);
            w.extend(block.iter().map(|v| -v));
        }
        let r = outgoing_weight_correlation(&Tensor::new([4, 2 * c, 2, 2], w).unwrap(), c).unwrap();
        assert!(r.pair.iter().all(|&p| (p - 1.0).abs() < 1e-12));
        assert!((r.pair_mean - 1.0).abs() < 1e-12);
        assert!(r.nonpair_mean < 1.0);
    }

    #[test]
    fn orthogonal_outgoing_vectors() {
        // Dense weights reading [u⁺_0 | u⁻_0] with orthogonal halves.
        let w = Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        let r = outgoing_weight_correlation(&w, 1).unwrap();
        assert_eq!(r.pair, vec![0.0]);
    }

    #[test]
    fn zero_vectors_excluded() {
        let w = Tensor::from_rows(&[&[1.0, 0.0, 1.0, 1.0]]).unwrap();
        let r = outgoing_weight_correlation(&w, 2).unwrap();
        assert_eq!(r.excluded, 1);
        assert_eq!(r.pair.len(), 1);
    }

    #[test]
    fn random_layer_matches_sampling_oracle() {
        let mut rng = RngStream::new(2);
        let (c, fo) = (16, 12);
        let r = outgoing_weight_correlation(&rng.gaussian_tensor([fo, 2 * c, 3, 3]), c).unwrap();
        let dim = fo * 9;
        let trials = 20_000;
        let mut acc = 0.0;
        for _ in 0..trials {
            let a = rng.gaussian_vec(dim);
            let b = rng.gaussian_vec(dim);
            acc += (dot(&a, &b) / (norm(&a) * norm(&b))).abs();
        }
        let oracle = acc / trials as f64;
        assert!((r.nonpair_mean - oracle).abs() < 0.01, "{} vs {oracle}", r.nonpair_mean);
        assert!((r.pair_mean - oracle).abs() < 0.04, "{} vs {oracle}", r.pair_mean);
        assert!(r.pair.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }
}
