use crate::error::{Error, Result};
use crate::rng::{gaussian_unit_filters, RngStream};
use crate::tensor::{dot, norm, Tensor};

/// Per-filter most negatively correlated partner.
#[derive(Clone, Debug, PartialEq)]
pub struct PairingReport {
    /// `argmin_{j≠i} ⟨φ_i, φ_j⟩` on unit-normalised filters.
    pub partner: Vec<usize>,
    /// The minimising cosine.
    pub mu: Vec<f64>,
}

impl PairingReport {
    pub const CSV_HEADER: &'static str = "filter,pair_index,mu";

    pub fn mean(&self) -> f64 {
        self.mu.iter().sum::<f64>() / self.mu.len() as f64
    }

    pub fn csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for (i, (p, m)) in self.partner.iter().zip(&self.mu).enumerate() {
            s.push_str(&format!("{i},{p},{m:.12}\n"));
        }
        s
    }
}

/// Rows of `filters` scaled to unit length.
pub fn normalize_rows(filters: &Tensor) -> Result<Vec<Vec<f64>>> {
    (0..filters.rows())
        .map(|i| {
            let r = filters.row(i);
            let n = norm(r);
            if n == 0.0 {
                Err(Error::Degenerate(format!("filter {i} has zero norm")))
            } else {
                Ok(r.iter().map(|v| v / n).collect())
            }
        })
        .collect()
}

/// Filters are the rows of a `K×d` matrix. Ties go to the smallest index.
pub fn pairing_mu(filters: &Tensor) -> Result<PairingReport> {
    if filters.rank() != 2 || filters.rows() < 2 {
        return Err(Error::invalid(format!("pairing needs at least two filters, got {:?}", filters.shape())));
    }
    let phi = normalize_rows(filters)?;
    let k = phi.len();
    let mut partner = Vec::with_capacity(k);
    let mut mu = Vec::with_capacity(k);
    for i in 0..k {
        let mut best = (usize::MAX, f64::INFINITY);
        for j in (0..k).filter(|&j| j != i) {
            let c = dot(&phi[i], &phi[j]).clamp(-1.0, 1.0);
            if c < best.1 {
                best = (j, c);
            }
        }
        partner.push(best.0);
        mu.push(best.1);
    }
    Ok(PairingReport { partner, mu })
}

/// `μ^r`: the same statistic on `count` random unit filters of length `dim`.
pub fn pairing_baseline(count: usize, dim: usize, rng: &mut RngStream) -> Result<PairingReport> {
    pairing_mu(&gaussian_unit_filters(rng, count, dim))
}

pub const HISTOGRAM_BINS: usize = 50;

/// Counts over uniform bins on `[−1, 1]`; bins are right-exclusive except the last.
pub fn mu_histogram(values: &[f64], bins: usize) -> Result<Vec<usize>> {
    if bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    let mut counts = vec![0; bins];
    for &v in values {
        if !(-1.0..=1.0).contains(&v) {
            return Err(Error::invalid(format!("value {v} outside [-1, 1]")));
        }
        let b = (((v + 1.0) / 2.0) * bins as f64).floor() as usize;
        counts[b.min(bins - 1)] += 1;
    }
    Ok(counts)
}

/// Overlaid bar chart of several histograms over `[−1, 1]` as SVG 1.1.
pub fn histogram_svg(title: &str, series: &[(&str, &[usize], &str)]) -> String {
    let (w, h, margin) = (600.0, 320.0, 40.0);
    let bins = series.iter().map(|s| s.1.len()).max().unwrap_or(1).max(1);
    let peak = series.iter().flat_map(|s| s.1.iter()).copied().max().unwrap_or(1).max(1) as f64;
    let bw = (w - 2.0 * margin) / bins as f64;
    let mut s = format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    );
    s.push_str(&format!("<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
        w / 2.0,
        escape(title)
    ));
    for (label, counts, color) in series {
        s.push_str(&format!("<g fill=\"{color}\" fill-opacity=\"0.5\"><title>{}</title>\n", escape(label)));
        for (i, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let bh = (h - 2.0 * margin) * c as f64 / peak;
            s.push_str(&format!(
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\"/>\n",
                margin + i as f64 * bw,
                h - margin - bh,
                bw,
                bh
            ));
        }
        s.push_str("</g>\n");
    }
    let base = h - margin;
    s.push_str(&format!(
        "<line x1=\"{margin}\" y1=\"{base}\" x2=\"{}\" y2=\"{base}\" stroke=\"black\"/>\n",
        w - margin
    ));
    for (v, x) in [(-1.0, margin), (0.0, w / 2.0), (1.0, w - margin)] {
        s.push_str(&format!(
            "<text x=\"{x}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{v}</text>\n",
            base + 15.0
        ));
    }
    for (k, (label, _, color)) in series.iter().enumerate() {
        let y = 40.0 + 16.0 * k as f64;
        s.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{color}\"/><text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            w - 150.0,
            y - 9.0,
            w - 135.0,
            y,
            escape(label)
        ));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
