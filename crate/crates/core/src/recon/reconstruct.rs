//! Pseudoinverse reconstruction from CReLU features, with and without max-pooling.

use crate::error::{Error, Result};
use crate::linalg::{pinv, svd, DEFAULT_RCOND};
use crate::recon::shift::{FilterBank, ShiftMatrix};
use crate::rng::RngStream;
use crate::tensor::{norm, Tensor};

/// Largest value both phases may hold at one index and still count as complementary.
pub const COMPLEMENTARITY_TOL: f64 = 1e-9;

/// `z = pos − neg`, requiring at most one phase to be active per index.
pub fn crelu_inverse(pos: &[f64], neg: &[f64]) -> Result<Vec<f64>> {
    if pos.len() != neg.len() {
        return Err(Error::shape(format!(
            "crelu_inverse: {} positive vs {} negative entries",
            pos.len(),
            neg.len()
        )));
    }
    pos.iter()
        .zip(neg)
        .enumerate()
        .map(|(index, (&p, &n))| {
            if p < -COMPLEMENTARITY_TOL || n < -COMPLEMENTARITY_TOL || (p > COMPLEMENTARITY_TOL && n > COMPLEMENTARITY_TOL) {
                Err(Error::InconsistentActivation { index, pos: p, neg: n })
            } else {
                Ok(p - n)
            }
        })
        .collect()
}

/// Splits a CReLU feature vector `[pos ‖ neg]` and inverts it.
pub fn crelu_inverse_features(features: &[f64]) -> Result<Vec<f64>> {
    if features.len() % 2 != 0 {
        return Err(Error::shape("CReLU features must have even length"));
    }
    let (p, n) = features.split_at(features.len() / 2);
    crelu_inverse(p, n)
}

/// `(Wᵀ)⁺ z` for a `D×m` matrix `W`; zero when `W` has no columns.
pub fn solve_transposed(w: Option<&Tensor>, z: &[f64], signal_len: usize) -> Result<Vec<f64>> {
    match w {
        None => Ok(vec![0.0; signal_len]),
        Some(w) => {
            if w.cols() != z.len() {
                return Err(Error::shape(format!("{} responses for {} columns", z.len(), w.cols())));
            }
            pinv(&w.transpose()?, DEFAULT_RCOND)?.matvec(z)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconReport {
    pub x_prime: Vec<f64>,
    /// `‖x − x′‖ / ‖x‖`.
    pub ratio: f64,
    /// Present only when a sparse-combination certificate was supplied
    /// and `λ_min > 0`.
    pub bound: Option<f64>,
    pub lambda_min: Option<f64>,
    pub lambda_tilde_max: Option<f64>,
}

impl ReconReport {
    pub const CSV_HEADER: &'static str = "instance,ratio,bound,lambda_min,lambda_tilde_max";

    fn plain(original: &[f64], x_prime: Vec<f64>) -> Result<Self> {
        Ok(ReconReport {
            ratio: relative_error(original, &x_prime)?,
            x_prime,
            bound: None,
            lambda_min: None,
            lambda_tilde_max: None,
        })
    }

    pub fn csv_row(&self, id: usize) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.12e}"));
        format!(
            "{id},{:.12e},{},{},{}",
            self.ratio,
            opt(self.bound),
            opt(self.lambda_min),
            opt(self.lambda_tilde_max)
        )
    }
}

/// `‖x − y‖ / ‖x‖`; defined as 0 when both are zero.
pub fn relative_error(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape(format!("{} vs {} entries", x.len(), y.len())));
    }
    let diff: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let nx = norm(x);
    if nx == 0.0 {
        return Ok(if diff == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(diff / nx)
}

/// Reconstruction without pooling: `x′ = (Wᵀ)⁺ ρ_c⁻¹(features)`.
pub fn invert_no_pool(w: &Tensor, features: &[f64]) -> Result<Vec<f64>> {
    let z = crelu_inverse_features(features)?;
    solve_transposed(Some(w), &z, w.rows())
}

pub fn reconstruct_no_pool(w: &Tensor, features: &[f64], original: &[f64]) -> Result<ReconReport> {
    ReconReport::plain(original, invert_no_pool(w, features)?)
}

/// `crelu(Wᵀx)` laid out as `[pos ‖ neg]`.
pub fn crelu_features(w: &Tensor, x: &[f64]) -> Result<Vec<f64>> {
    let r = w.transpose()?.matvec(x)?;
    let mut f: Vec<f64> = r.iter().map(|&v| v.max(0.0)).collect();
    f.extend(r.iter().map(|&v| (-v).max(0.0)));
    Ok(f)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Positive,
    Negative,
}

/// One column of `Ŵ_x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WinningShift {
    pub filter: usize,
    pub shift: usize,
    pub phase: Phase,
}

/// Which shifts won max-pooling in each phase, and the matrices they induce.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionMatrices {
    /// Winning shift per filter in the positive phase (first index on ties).
    pub pos_winner: Vec<usize>,
    pub neg_winner: Vec<usize>,
    /// Columns of `Ŵ_x = [Ŵ⁺_x, Ŵ⁻_x]`: winners whose pooled value is positive.
    pub hat_columns: Vec<WinningShift>,
    /// `Ŵ_x`, or `None` when no unit is active.
    pub w_hat: Option<Tensor>,
    signal_len: usize,
    shift_columns: Tensor,
    shifts: usize,
}

impl SelectionMatrices {
    fn column(&self, filter: usize, shift: usize) -> Vec<f64> {
        self.shift_columns.column(filter * self.shifts + shift)
    }

    /// `W̃_x`: per filter, the positive-phase column when `c_i ≥ 0` (inactive
    /// filters count as `c_i = 0`), otherwise the negative one, skipping
    /// phases that are absent from `Ŵ_x`.
    pub fn w_tilde(&self, cert: &SparseCombination) -> Option<Tensor> {
        let mut cols = Vec::new();
        for i in 0..self.pos_winner.len() {
            let want = match cert.terms[i] {
                Some((_, c)) if c < 0.0 => Phase::Negative,
                _ => Phase::Positive,
            };
            if let Some(h) = self.hat_columns.iter().find(|h| h.filter == i && h.phase == want) {
                cols.push(self.column(h.filter, h.shift));
            }
        }
        if cols.is_empty() {
            None
        } else {
            Some(Tensor::from_columns(&cols).expect("equal lengths"))
        }
    }
}

/// `f_cnn(x) = pool(crelu(Wᵀx))` over a single pooling region covering all
/// `n` shifts. Features are `[max pos per filter ‖ max neg per filter]`.
pub fn conv_crelu_maxpool(w: &ShiftMatrix, x: &[f64]) -> Result<(Vec<f64>, SelectionMatrices)> {
    if x.len() != w.signal_len() {
        return Err(Error::shape(format!(
            "signal of length {} for shift matrix with D = {}",
            x.len(),
            w.signal_len()
        )));
    }
    let r = w.responses(x)?;
    let (k, n) = (w.filters, w.shifts);
    let mut pos = vec![0.0; k];
    let mut neg = vec![0.0; k];
    let mut pos_winner = vec![0; k];
    let mut neg_winner = vec![0; k];
    for i in 0..k {
        let block = &r[i * n..(i + 1) * n];
        for (j, &v) in block.iter().enumerate() {
            if v.max(0.0) > pos[i] {
                pos[i] = v;
                pos_winner[i] = j;
            }
            if (-v).max(0.0) > neg[i] {
                neg[i] = -v;
                neg_winner[i] = j;
            }
        }
    }
    let mut hat_columns = Vec::new();
    for (i, &p) in pos.iter().enumerate() {
        if p > 0.0 {
            hat_columns.push(WinningShift {
                filter: i,
                shift: pos_winner[i],
                phase: Phase::Positive,
            });
        }
    }
    for (i, &q) in neg.iter().enumerate() {
        if q > 0.0 {
            hat_columns.push(WinningShift {
                filter: i,
                shift: neg_winner[i],
                phase: Phase::Negative,
            });
        }
    }
    let w_hat = if hat_columns.is_empty() {
        None
    } else {
        let cols: Vec<Vec<f64>> = hat_columns
            .iter()
            .map(|h| w.matrix.column(w.column_index(h.filter, h.shift)))
            .collect();
        Some(Tensor::from_columns(&cols)?)
    };
    let mut features = pos;
    features.extend(neg);
    Ok((
        features,
        SelectionMatrices {
            pos_winner,
            neg_winner,
            hat_columns,
            w_hat,
            signal_len: x.len(),
            shift_columns: w.matrix.clone(),
            shifts: n,
        },
    ))
}

/// Reconstruction over one pooling region: `x′ = (Ŵ_xᵀ)⁺ z`, where `z` holds
/// the pooled responses of the columns of `Ŵ_x` with their signs restored.
pub fn invert_with_pool(features: &[f64], sel: &SelectionMatrices) -> Result<Vec<f64>> {
    let k = sel.pos_winner.len();
    if features.len() != 2 * k {
        return Err(Error::shape(format!("{} features for {k} filters", features.len())));
    }
    let z: Vec<f64> = sel
        .hat_columns
        .iter()
        .map(|h| match h.phase {
            Phase::Positive => features[h.filter],
            Phase::Negative => -features[k + h.filter],
        })
        .collect();
    solve_transposed(sel.w_hat.as_ref(), &z, sel.signal_len)
}

/// Ground-truth coefficients for an input satisfying the one-active-shift
/// assumption.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseCombination {
    /// Per filter, the active `(shift, coefficient)` if any.
    pub terms: Vec<Option<(usize, f64)>>,
    /// Active shift columns `W_x`, `None` when every coefficient is zero.
    pub w_x: Option<Tensor>,
    pub c_x: Vec<f64>,
}

impl SparseCombination {
    pub fn new(bank: &FilterBank, terms: Vec<Option<(usize, f64)>>) -> Result<Self> {
        if terms.len() != bank.count() {
            return Err(Error::shape(format!("{} terms for {} filters", terms.len(), bank.count())));
        }
        let mut cols = Vec::new();
        let mut c_x = Vec::new();
        for (i, t) in terms.iter().enumerate() {
            if let Some((j, c)) = *t {
                if j >= bank.shifts() {
                    return Err(Error::invalid(format!("shift {j} out of range for filter {i}")));
                }
                if c != 0.0 {
                    cols.push(bank.shifted(i, j));
                    c_x.push(c);
                }
            }
        }
        let w_x = if cols.is_empty() {
            None
        } else {
            Some(Tensor::from_columns(&cols)?)
        };
        Ok(SparseCombination { terms, w_x, c_x })
    }

    /// `W_x c_x`.
    pub fn signal(&self, signal_len: usize) -> Vec<f64> {
        match &self.w_x {
            Some(w) => w.matvec(&self.c_x).expect("congruent"),
            None => vec![0.0; signal_len],
        }
    }
}

/// Draws an input obeying the one-active-shift assumption: each filter is
/// active with probability ½ at a uniform shift with a standard-normal
/// coefficient. All-inactive draws are redrawn.
pub fn sample_assumption_input(bank: &FilterBank, rng: &mut RngStream) -> Result<(Vec<f64>, SparseCombination)> {
    loop {
        let terms: Vec<Option<(usize, f64)>> = (0..bank.count())
            .map(|_| {
                if rng.bernoulli(0.5) {
                    let j = rng.below(bank.shifts());
                    Some((j, rng.gaussian()))
                } else {
                    None
                }
            })
            .collect();
        if terms.iter().all(Option::is_none) {
            continue;
        }
        let cert = SparseCombination::new(bank, terms)?;
        return Ok((cert.signal(bank.signal_len()), cert));
    }
}

/// Algorithm-2 reconstruction plus, given a certificate, the bound
/// `sqrt((λ̃_max − λ_min)/λ_min)` with `λ_min = σ_min(W_x)²` and
/// `λ̃_max = σ_max(W̃_x)²`.
pub fn reconstruct_with_pool(
    features: &[f64],
    sel: &SelectionMatrices,
    original: &[f64],
    cert: Option<&SparseCombination>,
) -> Result<ReconReport> {
    let mut report = ReconReport::plain(original, invert_with_pool(features, sel)?)?;
    if let Some(cert) = cert {
        let lambda_min = match &cert.w_x {
            Some(w) => Some(svd(w)?.sigma_min().powi(2)),
            None => None,
        };
        let lambda_tilde_max = match sel.w_tilde(cert) {
            Some(w) => Some(svd(&w)?.sigma_max().powi(2)),
            None => None,
        };
        report.lambda_min = lambda_min;
        report.lambda_tilde_max = lambda_tilde_max;
        if let (Some(lm), Some(lt)) = (lambda_min, lambda_tilde_max) {
            if lm > 0.0 {
                report.bound = Some(((lt - lm) / lm).max(0.0).sqrt());
            }
        }
    }
    Ok(report)
}
