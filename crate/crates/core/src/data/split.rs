use crate::error::{Error, Result};
use crate::rng::RngStream;

fn permutation(n: usize, rng: &mut RngStream) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    idx
}

/// Shuffled partition of `0..n` into `k` folds whose sizes differ by at most one.
pub fn kfold(n: usize, k: usize, rng: &mut RngStream) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k > n {
        return Err(Error::invalid(format!("cannot split {n} samples into {k} folds")));
    }
    let idx = permutation(n, rng);
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

/// `(train, holdout)` with `round(n·fraction)` holdout samples.
pub fn holdout_split(n: usize, fraction: f64, rng: &mut RngStream) -> Result<(Vec<usize>, Vec<usize>)> {
    let h = (n as f64 * fraction).round() as usize;
    if !(0.0..1.0).contains(&fraction) || h == 0 || h >= n {
        return Err(Error::invalid(format!("holdout fraction {fraction} unusable for {n} samples")));
    }
    let mut idx = permutation(n, rng);
    let hold = idx.split_off(n - h);
    Ok((idx, hold))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_folds_of_hundred() {
        let mut rng = RngStream::new(4);
        let folds = kfold(100, 10, &mut rng).unwrap();
        assert!(folds.iter().all(|f| f.len() == 10));
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn holdout_is_disjoint() {
        let mut rng = RngStream::new(5);
        let (a, b) = holdout_split(50, 0.2, &mut rng).unwrap();
        assert_eq!((a.len(), b.len()), (40, 10));
        assert!(a.iter().all(|i| !b.contains(i)));
    }
}
