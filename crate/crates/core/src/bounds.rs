//! Explained-variance bounds for blockwise PCA.
//!
//! For a covariance `S` over `p` features split into `k` blocks with retained
//! dimensions `q_i < p_i`, the mean of the per-block explained variances obeys
//!
//! ```text
//! k·λ_{p − min_i(p_i − q_i)} / Σλ  ≤  (1/k) Σ_i EV⁽ⁱ⁾  ≤  1 − k·λ_p / Σλ
//! ```
//!
//! with eigenvalues indexed from 1 in non-increasing order. The argument rests
//! on Cauchy interlacing for each principal sub-matrix `S_i` and on
//! `Σ_i Tr(S_i) = Tr(S)`; both are checked and reported as certificates.

use std::ops::Range;

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{covariance, principal_submatrix, psd_eig, sym_eig, trace};
use crate::monotone::CanonicalDataset;
use crate::pca::ev_ratio;

pub const INTERLACING_TOL: f64 = 1e-9;
pub const TRACE_TOL: f64 = 1e-10;
pub const EIGEN_SUM_TOL: f64 = 1e-8;

/// One row of an interlacing check: `upper ≥ inner ≥ lower`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterlacingRow {
    /// 1-based position within the block spectrum.
    pub j: usize,
    /// `λ_j` of the full matrix.
    pub upper: f64,
    /// `λ_j` of the sub-matrix.
    pub inner: f64,
    /// `λ_{j + p − p_i}` of the full matrix.
    pub lower: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterlacingCertificate {
    pub rows: Vec<InterlacingRow>,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceCertificate {
    pub block_traces: Vec<f64>,
    pub trace: f64,
    pub block_eigen_sum: f64,
    pub eigen_sum: f64,
    pub trace_pass: bool,
    pub eigen_pass: bool,
}

impl TraceCertificate {
    pub fn pass(&self) -> bool {
        self.trace_pass && self.eigen_pass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvBoundsReport {
    pub k: usize,
    pub p: usize,
    pub widths: Vec<usize>,
    pub q: Vec<usize>,
    pub full_spectrum: Vec<f64>,
    pub block_spectra: Vec<Vec<f64>>,
    pub block_ev: Vec<f64>,
    pub mean_ev: f64,
    /// EV of a single PCA on all features keeping `Σ q_i` components.
    pub total_ev_q: f64,
    pub eigen_sum: f64,
    /// 1-based index `p − min_i(p_i − q_i)`.
    pub lower_index: usize,
    pub lambda_lower_index: f64,
    pub lambda_p: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    /// False when some block keeps every component; the bounds are then
    /// reported but not guaranteed.
    pub applicable: bool,
    pub interlacing: Vec<InterlacingCertificate>,
    pub interlacing_ok: bool,
    pub trace: TraceCertificate,
    pub trace_ok: bool,
}

impl EvBoundsReport {
    /// `lower ≤ mean ≤ upper` within `slack`.
    pub fn bounds_hold(&self, slack: f64) -> bool {
        self.lower_bound - slack <= self.mean_ev && self.mean_ev <= self.upper_bound + slack
    }
}

/// Contiguous ranges as index sets.
pub fn blocks_from_ranges(ranges: &[Range<usize>]) -> Vec<Vec<usize>> {
    ranges.iter().map(|r| r.clone().collect()).collect()
}

/// Contiguous blocks of the given widths.
pub fn blocks_from_widths(widths: &[usize]) -> Vec<Vec<usize>> {
    let mut start = 0;
    widths
        .iter()
        .map(|&w| {
            let b = (start..start + w).collect();
            start += w;
            b
        })
        .collect()
}

fn check_partition(p: usize, blocks: &[Vec<usize>]) -> Result<()> {
    if blocks.is_empty() {
        return Err(Error::Config("no blocks given".into()));
    }
    let mut seen = vec![false; p];
    for (b, block) in blocks.iter().enumerate() {
        if block.is_empty() {
            return Err(Error::Config(format!("block {b} is empty")));
        }
        for &f in block {
            if f >= p {
                return Err(Error::Config(format!("block {b} has feature {f} beyond {p}")));
            }
            if seen[f] {
                return Err(Error::Config(format!("feature {f} appears in more than one block")));
            }
            seen[f] = true;
        }
    }
    if let Some(f) = seen.iter().position(|&s| !s) {
        return Err(Error::Config(format!("feature {f} is not covered by any block")));
    }
    Ok(())
}

fn interlace(full: &[f64], sub: &[f64]) -> InterlacingCertificate {
    let p = full.len();
    let pi = sub.len();
    let scale = full.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = INTERLACING_TOL * scale;
    let rows: Vec<InterlacingRow> = (0..pi)
        .map(|j| InterlacingRow { j: j + 1, upper: full[j], inner: sub[j], lower: full[j + (p - pi)] })
        .collect();
    let pass = rows.iter().all(|r| r.upper + tol >= r.inner && r.inner + tol >= r.lower);
    InterlacingCertificate { rows, tolerance: tol, pass }
}

/// Verifies `λ_j ≥ λ_j(S_block) ≥ λ_{j+p−p_i}` for every `j`.
pub fn check_interlacing(s: ArrayView2<'_, f64>, block: &[usize]) -> Result<InterlacingCertificate> {
    let full = sym_eig(s)?;
    let sub = sym_eig(principal_submatrix(s, block)?.view())?;
    Ok(interlace(full.eigenvalues.as_slice().expect("contiguous"), sub.eigenvalues.as_slice().expect("contiguous")))
}

fn trace_certificate(
    s: ArrayView2<'_, f64>,
    subs: &[Array2<f64>],
    full_eigs: &[f64],
    block_eigs: &[Vec<f64>],
) -> TraceCertificate {
    let block_traces: Vec<f64> = subs.iter().map(|m| trace(m.view())).collect();
    let tr = trace(s);
    let sum_tr: f64 = block_traces.iter().sum();
    let eigen_sum: f64 = full_eigs.iter().sum();
    let block_eigen_sum: f64 = block_eigs.iter().flatten().sum();
    TraceCertificate {
        trace_pass: (sum_tr - tr).abs() <= TRACE_TOL * tr.abs().max(1.0),
        eigen_pass: (block_eigen_sum - eigen_sum).abs() <= EIGEN_SUM_TOL * eigen_sum.abs().max(1.0),
        block_traces,
        trace: tr,
        block_eigen_sum,
        eigen_sum,
    }
}

/// Verifies `Σ Tr(S_i) = Tr(S)` and `Σ_i Σ_j λ_j(S_i) = Σ_j λ_j(S)`.
pub fn check_trace_identity(s: ArrayView2<'_, f64>, blocks: &[Vec<usize>]) -> Result<TraceCertificate> {
    check_partition(s.nrows(), blocks)?;
    let full = sym_eig(s)?;
    let subs = blocks.iter().map(|b| principal_submatrix(s, b)).collect::<Result<Vec<_>>>()?;
    let block_eigs =
        subs.iter().map(|m| sym_eig(m.view()).map(|sp| sp.eigenvalues.to_vec())).collect::<Result<Vec<_>>>()?;
    Ok(trace_certificate(s, &subs, full.eigenvalues.as_slice().expect("contiguous"), &block_eigs))
}

/// `1 − k·λ_p / Σλ`.
pub fn upper_bound_closed_form(k: usize, lambda_p: f64, eigen_sum: f64) -> f64 {
    1.0 - k as f64 * lambda_p / eigen_sum
}

/// Computes the explained-variance figures, both bounds and all certificates
/// for a PSD matrix, a partition of its features and per-block dimensions.
pub fn ev_bounds(s: ArrayView2<'_, f64>, blocks: &[Vec<usize>], q: &[usize]) -> Result<EvBoundsReport> {
    let p = s.nrows();
    check_partition(p, blocks)?;
    if q.len() != blocks.len() {
        return Err(Error::Config(format!("{} blocks but {} retained dimensions", blocks.len(), q.len())));
    }
    for (i, (b, &qi)) in blocks.iter().zip(q).enumerate() {
        if qi < 1 || qi > b.len() {
            return Err(Error::Config(format!("block {i}: q={qi} outside 1..={}", b.len())));
        }
    }

    let full = psd_eig(s)?;
    let full_spectrum = full.eigenvalues.to_vec();
    let eigen_sum: f64 = full_spectrum.iter().sum();
    if eigen_sum <= 0.0 {
        return Err(Error::Config("covariance has zero total variance".into()));
    }

    let subs = blocks.iter().map(|b| principal_submatrix(s, b)).collect::<Result<Vec<_>>>()?;
    let block_spectra =
        subs.iter().map(|m| psd_eig(m.view()).map(|sp| sp.eigenvalues.to_vec())).collect::<Result<Vec<_>>>()?;

    let k = blocks.len();
    let widths: Vec<usize> = blocks.iter().map(|b| b.len()).collect();
    let block_ev: Vec<f64> = block_spectra.iter().zip(q).map(|(sp, &qi)| ev_ratio(sp, qi)).collect();
    let mean_ev = block_ev.iter().sum::<f64>() / k as f64;
    let q_total: usize = q.iter().sum();
    let total_ev_q = ev_ratio(&full_spectrum, q_total.min(p));

    let min_gap = widths.iter().zip(q).map(|(&w, &qi)| w - qi).min().expect("k >= 1");
    let lower_index = p - min_gap;
    let lambda_lower_index = full_spectrum[lower_index - 1];
    let lambda_p = full_spectrum[p - 1];
    let lower_bound = k as f64 * lambda_lower_index / eigen_sum;
    let upper_bound = upper_bound_closed_form(k, lambda_p, eigen_sum);

    let interlacing: Vec<InterlacingCertificate> =
        block_spectra.iter().map(|sp| interlace(&full_spectrum, sp)).collect();
    let interlacing_ok = interlacing.iter().all(|c| c.pass);
    let trace = trace_certificate(s, &subs, &full_spectrum, &block_spectra);
    let trace_ok = trace.pass();

    Ok(EvBoundsReport {
        k,
        p,
        widths,
        q: q.to_vec(),
        full_spectrum,
        block_spectra,
        block_ev,
        mean_ev,
        total_ev_q,
        eigen_sum,
        lower_index,
        lambda_lower_index,
        lambda_p,
        lower_bound,
        upper_bound,
        applicable: min_gap > 0,
        interlacing,
        interlacing_ok,
        trace,
        trace_ok,
    })
}

/// Where the covariance for a bounds report comes from.
#[derive(Debug, Clone, Copy)]
pub enum CovarianceSource<'a> {
    /// The complete pre-masking data in original row/column order.
    GroundTruth(ArrayView2<'a, f64>),
    /// The `n_k` samples observed on every feature.
    CompleteCase,
}

/// Sample covariance in canonical feature order.
pub fn estimate_covariance_for_bounds(ds: &CanonicalDataset, source: CovarianceSource<'_>) -> Result<Array2<f64>> {
    match source {
        CovarianceSource::GroundTruth(x) => {
            if x.ncols() != ds.data.n_features() {
                return Err(Error::Dimension(format!(
                    "ground truth has {} features, dataset has {}",
                    x.ncols(),
                    ds.data.n_features()
                )));
            }
            covariance(ds.canonical_columns(x).view())
        }
        CovarianceSource::CompleteCase => {
            let nk = *ds.spec.observed_counts.last().expect("k >= 1");
            if nk < 2 {
                return Err(Error::InsufficientSamples {
                    context: "complete-case covariance".into(),
                    got: nk,
                    need: 2,
                });
            }
            covariance(ds.data.values().slice(s![..nk, ..]))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_equality_case() {
        let s = Array2::<f64>::eye(4);
        let r = ev_bounds(s.view(), &blocks_from_widths(&[2, 2]), &[1, 1]).unwrap();
        assert_eq!(r.mean_ev, 0.5);
        assert_eq!(r.lower_bound, 0.5);
        assert_eq!(r.upper_bound, 0.5);
        assert!(r.applicable);
    }

    #[test]
    fn diagonal_anchor() {
        let s = Array2::from_diag(&array![4.0, 3.0, 2.0, 1.0]);
        let r = ev_bounds(s.view(), &blocks_from_widths(&[2, 2]), &[1, 1]).unwrap();
        assert!((r.mean_ev - 13.0 / 21.0).abs() < 1e-15);
        assert!((r.lower_bound - 0.4).abs() < 1e-15);
        assert!((r.upper_bound - 0.8).abs() < 1e-15);
        assert_eq!(r.lower_index, 3);
        assert_eq!(r.lambda_lower_index, 2.0);
        assert_eq!(r.lambda_p, 1.0);
        assert!((r.total_ev_q - 0.7).abs() < 1e-15);
        assert!(r.interlacing_ok && r.trace_ok);
    }

    #[test]
    fn full_retention_is_not_applicable() {
        let s = Array2::from_diag(&array![4.0, 3.0, 2.0, 1.0]);
        let r = ev_bounds(s.view(), &blocks_from_widths(&[2, 2]), &[2, 1]).unwrap();
        assert!(!r.applicable);
    }

    #[test]
    fn interlacing_on_diagonal() {
        let s = Array2::from_diag(&array![4.0, 3.0, 2.0, 1.0]);
        let c = check_interlacing(s.view(), &[0, 1]).unwrap();
        assert!(c.pass);
        let triples: Vec<_> = c.rows.iter().map(|r| (r.upper, r.inner, r.lower)).collect();
        assert_eq!(triples, vec![(4.0, 4.0, 2.0), (3.0, 3.0, 1.0)]);

        let c = check_interlacing(s.view(), &[0, 1, 2, 3]).unwrap();
        assert!(c.pass);
        assert!(c.rows.iter().all(|r| r.upper == r.inner && r.inner == r.lower));
    }

    #[test]
    fn trace_on_diagonal() {
        let s = Array2::from_diag(&array![4.0, 3.0, 2.0, 1.0]);
        let c = check_trace_identity(s.view(), &blocks_from_widths(&[2, 2])).unwrap();
        assert_eq!(c.block_traces, vec![7.0, 3.0]);
        assert_eq!(c.trace, 10.0);
        assert!(c.pass());

        let c = check_trace_identity(s.view(), &blocks_from_widths(&[4])).unwrap();
        assert!(c.pass());
    }

    #[test]
    fn rejects_non_partitions() {
        let s = Array2::<f64>::eye(4);
        for blocks in [
            vec![vec![0, 1], vec![1, 2, 3]],
            vec![vec![0, 1], vec![2]],
            vec![vec![0, 1, 2, 3], vec![]],
            vec![vec![0, 1, 2, 3, 4]],
        ] {
            assert!(matches!(check_trace_identity(s.view(), &blocks), Err(Error::Config(_))));
        }
        assert!(matches!(ev_bounds(s.view(), &blocks_from_widths(&[2, 2]), &[0, 1]), Err(Error::Config(_))));
        assert!(matches!(ev_bounds(s.view(), &blocks_from_widths(&[2, 2]), &[1]), Err(Error::Config(_))));
        assert!(matches!(
            ev_bounds(Array2::<f64>::zeros((2, 2)).view(), &blocks_from_widths(&[1, 1]), &[1, 1]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn upper_bound_shrinks_with_more_blocks() {
        for k in 1..10 {
            assert!(upper_bound_closed_form(k + 1, 0.3, 10.0) < upper_bound_closed_form(k, 0.3, 10.0));
        }
    }

    #[test]
    fn symmetric_blocks_match_total_ev() {
        // Equal eigenvalues inside each block and q_i / p_i constant.
        let s = Array2::from_diag(&array![3.0, 3.0, 3.0, 3.0, 1.0, 1.0]);
        let r = ev_bounds(s.view(), &blocks_from_widths(&[4, 2]), &[2, 1]).unwrap();
        assert!((r.mean_ev - 0.5).abs() < 1e-12);
        // A single PCA with q = 3 keeps 9 of 14.
        assert!((r.total_ev_q - 9.0 / 14.0).abs() < 1e-12);

        let s = Array2::<f64>::eye(6) * 2.0;
        let r = ev_bounds(s.view(), &blocks_from_widths(&[4, 2]), &[2, 1]).unwrap();
        assert!((r.mean_ev - r.total_ev_q).abs() < 1e-12);
    }
}
