//! Randomised sweeps checking the reconstruction results numerically.

use std::fmt;

use crate::error::Result;
use crate::parallel::ordered_map;
use crate::recon::frame::frame_bounds;
use crate::recon::reconstruct::{conv_crelu_maxpool, crelu_features, reconstruct_no_pool, reconstruct_with_pool, sample_assumption_input};
use crate::recon::shift::{build_shift_matrix, FilterBank};
use crate::recon::subspace::random_subspace_expectation;
use crate::rng::{gaussian_unit_filters, RngStream};
use crate::tensor::norm;

#[derive(Clone, Debug, PartialEq)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    /// The worst observed value of the checked quantity.
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

impl PropertyResult {
    pub const CSV_HEADER: &'static str = "property,status,measured,threshold,detail";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6e},{:.6e},{}",
            self.name,
            if self.passed { "pass" } else { "fail" },
            self.measured,
            self.threshold,
            self.detail
        )
    }
}

impl fmt::Display for PropertyResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: measured {:.3e}, threshold {:.3e} ({})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.threshold,
            self.detail
        )
    }
}

/// Exact recovery of inputs lying in `range(W)` without pooling.
pub fn check_range_exactness(rng: &RngStream, instances: usize) -> Result<PropertyResult> {
    let ids: Vec<usize> = (0..instances).collect();
    let errs = ordered_map(&ids, |_, &i| -> Result<f64> {
        let mut r = rng.split(i as u64);
        let d = 2 + r.below(23);
        let m = 1 + r.below(d + 4);
        let w = r.gaussian_tensor([d, m]);
        let x = w.matvec(&r.gaussian_vec(m))?;
        Ok(reconstruct_no_pool(&w, &crelu_features(&w, &x)?, &x)?.ratio)
    });
    let worst = errs.into_iter().collect::<Result<Vec<_>>>()?.into_iter().fold(0.0, f64::max);
    let threshold = 1e-8;
    Ok(PropertyResult {
        name: "range_exactness".into(),
        passed: worst < threshold,
        measured: worst,
        threshold,
        detail: format!("{instances} instances"),
    })
}

/// The pooled-reconstruction error bound on one-active-shift inputs.
pub fn check_pooling_bound(
    rng: &RngStream,
    instances: usize,
    signal_len: usize,
    filters: usize,
    filter_len: usize,
    stride: usize,
) -> Result<PropertyResult> {
    let tol = 1e-9;
    let ids: Vec<usize> = (0..instances).collect();
    let rows = ordered_map(&ids, |_, &i| -> Result<(f64, Option<f64>)> {
        let mut r = rng.split(i as u64);
        let bank = FilterBank::new(gaussian_unit_filters(&mut r, filters, filter_len), stride, signal_len)?;
        let w = build_shift_matrix(&bank);
        let (x, cert) = sample_assumption_input(&bank, &mut r)?;
        let (f, sel) = conv_crelu_maxpool(&w, &x)?;
        let rep = reconstruct_with_pool(&f, &sel, &x, Some(&cert))?;
        Ok((rep.ratio, rep.bound))
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut bounded = 0;
    for (ratio, bound) in rows {
        if let Some(b) = bound {
            bounded += 1;
            worst = worst.max(ratio - b);
            if ratio > b + tol {
                violations += 1;
            }
        }
    }
    Ok(PropertyResult {
        name: "pooling_error_bound".into(),
        passed: violations == 0 && bounded > 0,
        measured: worst,
        threshold: tol,
        detail: format!("{violations} violations over {bounded} bounded instances of {instances}"),
    })
}

/// `√c1‖x‖ ≤ ‖Wᵀx‖ ≤ √c2‖x‖` for `x ∈ range(W)`, including matrices with
/// repeated columns.
pub fn check_frame_inequality(rng: &RngStream, matrices: usize, samples: usize) -> Result<PropertyResult> {
    let tol = 1e-9;
    let ids: Vec<usize> = (0..matrices).collect();
    let rows = ordered_map(&ids, |_, &i| -> Result<(usize, f64)> {
        let mut r = rng.split(i as u64);
        let d = 2 + r.below(15);
        let m = 1 + r.below(2 * d);
        let mut w = r.gaussian_tensor([d, m]);
        if m > 1 && r.bernoulli(0.3) {
            let col = w.column(0);
            for (row, v) in col.iter().enumerate() {
                w.set(row, m - 1, *v);
            }
        }
        let b = frame_bounds(&w)?;
        let wt = w.transpose()?;
        let (mut bad, mut worst) = (0, f64::NEG_INFINITY);
        for _ in 0..samples {
            let x = w.matvec(&r.gaussian_vec(m))?;
            let nx = norm(&x);
            let nw = norm(&wt.matvec(&x)?);
            let scale = nx.max(1.0);
            let lo = b.c1.sqrt() * nx - nw;
            let hi = nw - b.c2.sqrt() * nx;
            let margin = lo.max(hi) / scale;
            worst = worst.max(margin);
            if margin > tol {
                bad += 1;
            }
        }
        Ok((bad, worst))
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let violations: usize = rows.iter().map(|r| r.0).sum();
    let worst = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(PropertyResult {
        name: "frame_inequality".into(),
        passed: violations == 0,
        measured: worst,
        threshold: tol,
        detail: format!("{violations} violations over {matrices}x{samples} samples"),
    })
}

/// Means of the projection and residual ratios within 3 standard errors of
/// `√(D_s/D)` and `√((D−D_s)/D)`.
pub fn check_random_subspace(rng: &RngStream, d: usize, ds: usize, trials: usize) -> Result<PropertyResult> {
    let mut r = rng.split(((d as u64) << 32) | ds as u64);
    let e = random_subspace_expectation(d, ds, &mut r, trials)?;
    let target_p = (ds as f64 / d as f64).sqrt();
    let target_r = ((d - ds) as f64 / d as f64).sqrt();
    let zp = (e.projection_mean - target_p) / e.projection_se;
    let zr = (e.residual_mean - target_r) / e.residual_se;
    let worst = zp.abs().max(zr.abs());
    Ok(PropertyResult {
        name: format!("random_subspace_D{d}_Ds{ds}"),
        passed: worst <= 3.0,
        measured: worst,
        threshold: 3.0,
        detail: format!(
            "proj mean {:.4} (target {target_p:.4} z {zp:.1}) resid mean {:.4} (target {target_r:.4} z {zr:.1}) rms {:.4}/{:.4}",
            e.projection_mean, e.residual_mean, e.projection_rms, e.residual_rms
        ),
    })
}

pub const SUBSPACE_CASES: [(usize, usize); 3] = [(4, 1), (16, 4), (64, 16)];

/// Every sweep at its reference size.
pub fn verify_theory(seed: u64) -> Result<Vec<PropertyResult>> {
    let root = RngStream::new(seed);
    let mut out = vec![
        check_range_exactness(&root.split(1), 200)?,
        check_pooling_bound(&root.split(2), 1000, 32, 4, 8, 4)?,
        check_frame_inequality(&root.split(3), 100, 100)?,
    ];
    for (d, ds) in SUBSPACE_CASES {
        out.push(check_random_subspace(&root.split(4), d, ds, 10_000)?);
    }
    Ok(out)
}
