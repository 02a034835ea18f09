//! Monotone (staircase) missingness: detection, canonical ordering, block
//! partitioning and synthetic generation.
//!
//! Canonical form orders features by descending observed count and samples by
//! descending observed count, breaking ties by original index. A dataset is
//! monotone exactly when, in that order, every sample observes a prefix of the
//! features. Features sharing an observed count form one block.

use std::ops::Range;

use ndarray::{s, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::MaskedMatrix;

/// Block layout of a canonical staircase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonotoneBlockSpec {
    pub feature_ranges: Vec<Range<usize>>,
    /// `n_1 ≥ n_2 ≥ … ≥ n_k ≥ 1`.
    pub observed_counts: Vec<usize>,
}

impl MonotoneBlockSpec {
    pub fn new(widths: &[usize], observed_counts: &[usize]) -> Result<Self> {
        if widths.is_empty() || widths.len() != observed_counts.len() {
            return Err(Error::Config(format!(
                "need one observed count per block, got {} widths and {} counts",
                widths.len(),
                observed_counts.len()
            )));
        }
        if widths.contains(&0) {
            return Err(Error::Config("block widths must be positive".into()));
        }
        if observed_counts.contains(&0) {
            return Err(Error::Config("observed counts must be positive".into()));
        }
        if observed_counts.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Order(format!("{observed_counts:?}")));
        }
        let mut start = 0;
        let feature_ranges = widths
            .iter()
            .map(|&w| {
                let r = start..start + w;
                start += w;
                r
            })
            .collect();
        Ok(Self { feature_ranges, observed_counts: observed_counts.to_vec() })
    }

    pub fn k(&self) -> usize {
        self.feature_ranges.len()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.feature_ranges.iter().map(|r| r.len()).collect()
    }

    pub fn n_features(&self) -> usize {
        self.feature_ranges.last().map_or(0, |r| r.end)
    }

    /// Observed sample count of the block containing canonical feature `f`.
    pub fn observed_count_of_feature(&self, f: usize) -> usize {
        let block = self.feature_ranges.iter().position(|r| r.contains(&f)).expect("feature inside the layout");
        self.observed_counts[block]
    }

    /// The staircase mask this layout implies for `n_samples` canonical rows.
    pub fn staircase_mask(&self, n_samples: usize) -> Array2<bool> {
        let mut mask = Array2::from_elem((n_samples, self.n_features()), false);
        for (range, &n_i) in self.feature_ranges.iter().zip(&self.observed_counts) {
            mask.slice_mut(s![..n_i.min(n_samples), range.clone()]).fill(true);
        }
        mask
    }

    /// Number of missing cells in the `n_1 × p` staircase.
    pub fn missing_cells(&self) -> usize {
        let n1 = self.observed_counts[0];
        self.feature_ranges.iter().zip(&self.observed_counts).map(|(r, &n)| r.len() * (n1 - n)).sum()
    }
}

/// A monotone dataset reordered into canonical staircase form.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalDataset {
    pub data: MaskedMatrix,
    pub spec: MonotoneBlockSpec,
    /// `sample_perm[c]` is the original row of canonical row `c`.
    pub sample_perm: Vec<usize>,
    /// `feature_perm[c]` is the original column of canonical column `c`.
    pub feature_perm: Vec<usize>,
}

impl CanonicalDataset {
    /// Undoes the canonical reordering.
    pub fn to_original(&self) -> MaskedMatrix {
        let (n, p) = (self.data.n_samples(), self.data.n_features());
        let mut values = Array2::zeros((n, p));
        let mut mask = Array2::from_elem((n, p), false);
        for (ci, &oi) in self.sample_perm.iter().enumerate() {
            for (cj, &oj) in self.feature_perm.iter().enumerate() {
                values[[oi, oj]] = self.data.values()[[ci, cj]];
                mask[[oi, oj]] = self.data.mask()[[ci, cj]];
            }
        }
        MaskedMatrix::new(values, mask).expect("same shape")
    }

    /// Canonical row positions of the given original rows' inverse map:
    /// `inverse[original] = canonical`.
    pub fn sample_inverse(&self) -> Vec<usize> {
        invert(&self.sample_perm)
    }

    /// Reorders the columns of a complete original-order matrix into the
    /// canonical feature order.
    pub fn canonical_columns(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.select(ndarray::Axis(1), &self.feature_perm)
    }
}

fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (c, &o) in perm.iter().enumerate() {
        inv[o] = c;
    }
    inv
}

fn descending_by_count(counts: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    order
}

/// Detects a monotone pattern and returns the canonical form.
///
/// Violations are reported in original coordinates, scanning canonical rows
/// top to bottom and canonical columns left to right.
pub fn detect_monotone(m: &MaskedMatrix) -> Result<CanonicalDataset> {
    let (n, p) = (m.n_samples(), m.n_features());
    if n == 0 || p == 0 {
        return Err(Error::Dimension(format!("empty {n}x{p} dataset")));
    }
    let mask = m.mask();
    let feature_counts: Vec<usize> = (0..p).map(|j| mask.column(j).iter().filter(|&&b| b).count()).collect();
    let sample_counts: Vec<usize> = (0..n).map(|i| mask.row(i).iter().filter(|&&b| b).count()).collect();
    if let Some(j) = feature_counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyFeature(j));
    }
    if let Some(i) = sample_counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptySample(i));
    }

    let feature_perm = descending_by_count(&feature_counts);
    let sample_perm = descending_by_count(&sample_counts);

    for &oi in &sample_perm {
        let len = sample_counts[oi];
        for (cj, &oj) in feature_perm.iter().enumerate() {
            if mask[[oi, oj]] != (cj < len) {
                return Err(Error::NotMonotone { sample: oi, feature: oj });
            }
        }
    }

    // Prefix structure makes every sample's prefix end on a block boundary, so
    // maximal runs of equal feature counts are the blocks.
    let mut widths = Vec::new();
    let mut counts = Vec::new();
    for &oj in &feature_perm {
        let c = feature_counts[oj];
        if counts.last() == Some(&c) {
            *widths.last_mut().unwrap() += 1;
        } else {
            counts.push(c);
            widths.push(1);
        }
    }
    let spec = MonotoneBlockSpec::new(&widths, &counts)?;
    let data = m.select_rows(&sample_perm).select_columns(&feature_perm);
    debug_assert_eq!(data.mask(), &spec.staircase_mask(n));
    Ok(CanonicalDataset { data, spec, sample_perm, feature_perm })
}

/// The fully observed `n_i × p_i` sub-matrix of each block.
pub fn partition_blocks(ds: &CanonicalDataset) -> Vec<Array2<f64>> {
    ds.spec
        .feature_ranges
        .iter()
        .zip(&ds.spec.observed_counts)
        .map(|(r, &n_i)| ds.data.values().slice(s![..n_i, r.clone()]).to_owned())
        .collect()
}

/// Splits `n` samples into `parts` groups of equal size (remainder to the
/// first group) after a seeded shuffle. Returns the group of each sample.
pub fn partition_assignment(n: usize, parts: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let base = n / parts;
    let first = n - base * (parts - 1);
    let mut group = vec![0; n];
    for (pos, &sample) in order.iter().enumerate() {
        group[sample] = if pos < first { 0 } else { 1 + (pos - first) / base.max(1) };
    }
    group
}

/// Emulates monotone missingness by dropping trailing features.
///
/// Samples are split into `missing_counts.len() + 1` partitions. Partition 0
/// stays complete; partition `j` loses the last `missing_counts[0] + … +
/// missing_counts[j-1]` features, so later partitions miss supersets.
pub fn generate_monotone_missing(x: ArrayView2<'_, f64>, missing_counts: &[usize], seed: u64) -> Result<MaskedMatrix> {
    let (n, p) = x.dim();
    let parts = missing_counts.len() + 1;
    let total: usize = missing_counts.iter().sum();
    if total >= p {
        return Err(Error::Config(format!("cumulative missing features {total} must be below the feature count {p}")));
    }
    if n < parts {
        return Err(Error::Config(format!("{n} samples cannot fill {parts} partitions")));
    }
    let group = partition_assignment(n, parts, seed);
    let mut dropped = vec![0usize; parts];
    for j in 1..parts {
        dropped[j] = dropped[j - 1] + missing_counts[j - 1];
    }
    let mut mask = Array2::from_elem((n, p), true);
    for (i, &g) in group.iter().enumerate() {
        mask.slice_mut(s![i, p - dropped[g]..]).fill(false);
    }
    MaskedMatrix::new(x.to_owned(), mask)
}
