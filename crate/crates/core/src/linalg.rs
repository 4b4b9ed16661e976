//! One-sided Jacobi SVD and the Moore–Penrose pseudoinverse built on it.
//!
//! The Jacobi iteration orthogonalizes the columns of a working copy of the
//! (tall) input with plane rotations. A pair `(p, q)` is rotated while
//! `|⟨a_p, a_q⟩| > tol·‖a_p‖‖a_q‖` with `tol = √m·ε`; once a sweep performs no
//! rotation the column norms are the singular values. The relative test
//! implies the absolute one `|⟨a_p, a_q⟩| < 1e-14·‖A‖_F²` for every matrix
//! with fewer than ~2000 rows, and keeps small singular values accurate.

use crate::error::{Error, Result};
use crate::tensor::{dot, norm, Tensor};

pub const MAX_SWEEPS: usize = 60;
pub const DEFAULT_RCOND: f64 = 1e-12;
const TINY_COLUMN: f64 = 1e-150;

/// Thin SVD `A = u · diag(sigma) · vt` with `r = min(m, n)`.
#[derive(Clone, Debug)]
pub struct SvdResult {
    pub u: Tensor,
    pub sigma: Vec<f64>,
    pub vt: Tensor,
}

impl SvdResult {
    pub fn sigma_max(&self) -> f64 {
        self.sigma.first().copied().unwrap_or(0.0)
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma.last().copied().unwrap_or(0.0)
    }

    /// Numerical rank under the same cutoff `pinv` uses.
    pub fn rank(&self, rcond: f64) -> usize {
        let (m, n) = (self.u.rows(), self.vt.cols());
        let cutoff = rcond * self.sigma_max() * m.max(n) as f64;
        self.sigma.iter().filter(|&&s| s > cutoff).count()
    }

    pub fn reassemble(&self) -> Tensor {
        let r = self.sigma.len();
        let mut us = self.u.clone();
        let cols = us.cols();
        for row in us.data_mut().chunks_mut(cols) {
            for (v, s) in row.iter_mut().zip(&self.sigma[..r]) {
                *v *= s;
            }
        }
        us.matmul(&self.vt).expect("conformable factors")
    }
}

/// Column-major working matrix for the rotations.
struct Columns {
    rows: usize,
    data: Vec<f64>,
}

impl Columns {
    fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    fn rotate(&mut self, p: usize, q: usize, c: f64, s: f64) {
        let m = self.rows;
        let (lo, hi) = self.data.split_at_mut(q * m);
        let cp = &mut lo[p * m..(p + 1) * m];
        let cq = &mut hi[..m];
        for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
            let (a, b) = (*x, *y);
            *x = c * a - s * b;
            *y = s * a + c * b;
        }
    }
}

/// Jacobi on a tall matrix (`m >= n`), given column-major.
fn jacobi_tall(m: usize, n: usize, cols: Vec<f64>) -> Result<(Columns, Columns)> {
    let mut a = Columns { rows: m, data: cols };
    let mut v = Columns {
        rows: n,
        data: vec![0.0; n * n],
    };
    for j in 0..n {
        v.data[j * n + j] = 1.0;
    }
    let tol = (m as f64).sqrt() * f64::EPSILON;
    let mut norms: Vec<f64> = (0..n).map(|j| dot(a.col(j), a.col(j))).collect();

    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = dot(a.col(p), a.col(q));
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                a.rotate(p, q, c, s);
                v.rotate(p, q, c, s);
                norms[p] = dot(a.col(p), a.col(p));
                norms[q] = dot(a.col(q), a.col(q));
            }
        }
        if !rotated {
            return Ok((a, v));
        }
    }

    let mut worst: f64 = 0.0;
    for p in 0..n {
        for q in p + 1..n {
            let denom = (norms[p] * norms[q]).sqrt();
            if denom > 0.0 {
                worst = worst.max(dot(a.col(p), a.col(q)).abs() / denom);
            }
        }
    }
    Err(Error::Numerical {
        message: format!("Jacobi SVD did not converge in {MAX_SWEEPS} sweeps"),
        residual: worst,
    })
}

/// Extends `basis` (orthonormal, length-`m` vectors) so that slots marked
/// `None` receive unit vectors orthogonal to everything else.
fn complete_basis(m: usize, basis: &mut [Option<Vec<f64>>]) {
    let mut candidate = 0;
    for slot in 0..basis.len() {
        if basis[slot].is_some() {
            continue;
        }
        while candidate < m {
            let mut e = vec![0.0; m];
            e[candidate] = 1.0;
            candidate += 1;
            // two Gram–Schmidt passes for stability
            for _ in 0..2 {
                for b in basis.iter().flatten() {
                    let d = dot(&e, b);
                    e.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
                }
            }
            let n = norm(&e);
            if n > 1e-8 {
                e.iter_mut().for_each(|x| *x /= n);
                basis[slot] = Some(e);
                break;
            }
        }
    }
}

/// (u m×r column-major, sigma, v n×r column-major) for a tall matrix.
fn svd_tall(m: usize, n: usize, colmajor: Vec<f64>) -> Result<(Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>)> {
    let (a, v) = jacobi_tall(m, n, colmajor)?;
    let mut order: Vec<(usize, f64)> = (0..n).map(|j| (j, norm(a.col(j)))).collect();
    order.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));

    let mut u: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut vcols = Vec::with_capacity(n);
    for &(j, s) in &order {
        // below this the normalized direction is dominated by underflow
        if s > TINY_COLUMN {
            u.push(Some(a.col(j).iter().map(|x| x / s).collect()));
        } else {
            u.push(None);
        }
        sigma.push(s);
        vcols.push(v.col(j).to_vec());
    }
    complete_basis(m, &mut u);
    let u = u.into_iter().map(|c| c.expect("completed basis")).collect();
    Ok((u, sigma, vcols))
}

/// Thin singular value decomposition.
pub fn svd(a: &Tensor) -> Result<SvdResult> {
    if a.rank() != 2 {
        return Err(Error::shape(format!("svd needs a matrix, got {:?}", a.shape())));
    }
    if !a.is_finite() {
        return Err(Error::invalid("svd input has non-finite entries"));
    }
    let (m, n) = (a.rows(), a.cols());
    if m >= n {
        let colmajor = a.transpose()?.into_data();
        let (u, sigma, v) = svd_tall(m, n, colmajor)?;
        Ok(SvdResult {
            u: Tensor::from_columns(&u)?,
            sigma,
            vt: Tensor::from_columns(&v)?.transpose()?,
        })
    } else {
        // Aᵀ = U Σ Vᵀ  ⇒  A = V Σ Uᵀ
        let colmajor = a.data().to_vec();
        let (u, sigma, v) = svd_tall(n, m, colmajor)?;
        Ok(SvdResult {
            u: Tensor::from_columns(&v)?,
            sigma,
            vt: Tensor::from_columns(&u)?.transpose()?,
        })
    }
}

/// Moore–Penrose pseudoinverse. Singular values below
/// `rcond · σ_max · max(m, n)` are treated as zero.
pub fn pinv(a: &Tensor, rcond: f64) -> Result<Tensor> {
    if !(rcond >= 0.0) {
        return Err(Error::invalid(format!("rcond must be >= 0, got {rcond}")));
    }
    let s = svd(a)?;
    Ok(pinv_from_svd(&s, rcond))
}

pub fn pinv_from_svd(s: &SvdResult, rcond: f64) -> Tensor {
    let (m, n) = (s.u.rows(), s.vt.cols());
    let r = s.sigma.len();
    let cutoff = rcond * s.sigma_max() * m.max(n) as f64;
    // A⁺ = V Σ⁺ Uᵀ, assembled as (vt)ᵀ rows scaled then times uᵀ
    let mut out = vec![0.0; n * m];
    for k in 0..r {
        let sk = s.sigma[k];
        if !(sk > cutoff) || sk == 0.0 {
            continue;
        }
        let inv = 1.0 / sk;
        let vrow = s.vt.row(k);
        let ucol = s.u.column(k);
        for i in 0..n {
            let vi = vrow[i] * inv;
            if vi == 0.0 {
                continue;
            }
            let orow = &mut out[i * m..(i + 1) * m];
            for (o, &uj) in orow.iter_mut().zip(&ucol) {
                *o += vi * uj;
            }
        }
    }
    Tensor::new([n, m], out).expect("valid shape")
}

/// Orthonormal basis (as an m×d matrix) of the column span of `a`.
pub fn column_space_basis(a: &Tensor, rcond: f64) -> Result<Option<Tensor>> {
    let s = svd(a)?;
    let rank = s.rank(rcond);
    if rank == 0 {
        return Ok(None);
    }
    let idx: Vec<usize> = (0..rank).collect();
    Ok(Some(s.u.select_columns(&idx)?))
}

/// Orthonormalizes the columns of a full-column-rank matrix (modified
/// Gram–Schmidt, two passes).
pub fn orthonormalize_columns(a: &Tensor) -> Result<Tensor> {
    let (m, n) = (a.rows(), a.cols());
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    for j in 0..n {
        for _ in 0..2 {
            for k in 0..j {
                let (done, rest) = cols.split_at_mut(j);
                let d = dot(&rest[0], &done[k]);
                rest[0].iter_mut().zip(&done[k]).for_each(|(x, y)| *x -= d * y);
            }
        }
        let nn = norm(&cols[j]);
        if nn <= 1e-12 * m as f64 {
            return Err(Error::Degenerate(format!("column {j} is linearly dependent")));
        }
        cols[j].iter_mut().for_each(|x| *x /= nn);
    }
    Tensor::from_columns(&cols)
}
