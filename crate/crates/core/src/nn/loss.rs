use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Row-wise softmax of an `N×K` matrix, log-sum-exp stabilized.
pub fn softmax(logits: &Tensor) -> Tensor {
    let k = logits.cols();
    let mut out = logits.data().to_vec();
    for row in out.chunks_mut(k) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
    Tensor::new(logits.shape().to_vec(), out).expect("same shape")
}

/// Mean softmax cross-entropy and its gradient `(softmax − onehot)/N`.
pub fn softmax_xent(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    if logits.rank() != 2 {
        return Err(Error::shape(format!("logits must be N×K, got {:?}", logits.shape())));
    }
    let (n, k) = (logits.rows(), logits.cols());
    if labels.len() != n {
        return Err(Error::shape(format!("{} labels for {n} rows", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::invalid(format!("label {bad} out of range for {k} classes")));
    }
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(n * k);
    for (row, &label) in logits.data().chunks(k).zip(labels) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - row[label];
        grad.extend(row.iter().enumerate().map(|(j, &v)| {
            let p = (v - lse).exp();
            (p - if j == label { 1.0 } else { 0.0 }) * inv_n
        }));
    }
    Ok((loss * inv_n, Tensor::new([n, k], grad)?))
}
