//! Blockwise PCA imputation and the impute-then-PCA baseline.

use std::collections::BTreeMap;
use std::ops::Range;
use std::time::Instant;

use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::impute::Imputer;
use crate::linalg::MaskedMatrix;
use crate::monotone::{partition_blocks, CanonicalDataset};
use crate::pca::{fit_pca_with, inverse_transform, transform, PcaModel, PcaOptions, RetentionRule};

/// Per-block retention policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRetention {
    #[serde(default)]
    pub default: RetentionRule,
    /// Block index → rule.
    #[serde(default)]
    pub overrides: BTreeMap<usize, RetentionRule>,
    /// Blocks no wider than this keep every component.
    #[serde(default = "default_keep_small")]
    pub keep_small_width: usize,
    #[serde(default)]
    pub standardize: bool,
}

fn default_keep_small() -> usize {
    4
}

impl Default for BlockRetention {
    fn default() -> Self {
        Self::uniform(RetentionRule::default())
    }
}

impl BlockRetention {
    /// The same rule on every block, no small-block exemption.
    pub fn exact(rule: RetentionRule) -> Self {
        Self { default: rule, overrides: BTreeMap::new(), keep_small_width: 0, standardize: false }
    }

    /// The same rule on every block, small blocks kept whole.
    pub fn uniform(rule: RetentionRule) -> Self {
        Self { keep_small_width: default_keep_small(), ..Self::exact(rule) }
    }

    /// One fixed dimension per block.
    pub fn fixed(q: &[usize]) -> Self {
        let mut r = Self::exact(RetentionRule::KeepAll);
        r.overrides = q.iter().enumerate().map(|(i, &q)| (i, RetentionRule::FixedDim(q))).collect();
        r
    }

    pub fn rule_for(&self, block: usize, width: usize) -> RetentionRule {
        if let Some(rule) = self.overrides.get(&block) {
            return *rule;
        }
        if width <= self.keep_small_width {
            return RetentionRule::KeepAll;
        }
        self.default
    }

    fn options(&self) -> PcaOptions {
        PcaOptions { standardize: self.standardize }
    }
}

/// Stacks per-block scores (`n_i × q_i`, `n_1 ≥ … ≥ n_k`) into an
/// `n_1 × Σq_i` staircase; cells below each block's `n_i` are missing.
pub fn stack_with_missing(scores: &[Array2<f64>]) -> Result<MaskedMatrix> {
    if scores.is_empty() {
        return Err(Error::Dimension("nothing to stack".into()));
    }
    let rows: Vec<usize> = scores.iter().map(|z| z.nrows()).collect();
    if rows.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::Order(format!("block row counts {rows:?}")));
    }
    let n1 = rows[0];
    let width: usize = scores.iter().map(|z| z.ncols()).sum();
    let mut values = Array2::from_elem((n1, width), f64::NAN);
    let mut mask = Array2::from_elem((n1, width), false);
    let mut col = 0;
    for z in scores {
        let (n, q) = z.dim();
        values.slice_mut(s![..n, col..col + q]).assign(z);
        mask.slice_mut(s![..n, col..col + q]).fill(true);
        col += q;
    }
    MaskedMatrix::new(values, mask)
}

/// Output of the blockwise reduction.
#[derive(Debug, Clone)]
pub struct ReducedStack {
    /// Stacked scores with staircase missingness, canonical sample order.
    pub z_star: MaskedMatrix,
    pub block_score_ranges: Vec<Range<usize>>,
    pub block_models: Vec<PcaModel>,
    /// Completed `z*`.
    pub z: Option<Array2<f64>>,
    /// Wall time of the imputer call alone.
    pub imputation_seconds: f64,
    pub imputer_calls: usize,
}

impl ReducedStack {
    pub fn q(&self) -> Vec<usize> {
        self.block_models.iter().map(|m| m.n_components()).collect()
    }

    pub fn block_ev(&self) -> Vec<f64> {
        self.block_models.iter().map(|m| m.retained_ev()).collect()
    }

    /// Projects fully observed rows (canonical feature order) through every
    /// block model, giving rows comparable to `z`.
    pub fn project_complete(&self, ds_ranges: &[Range<usize>], x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let width = self.block_score_ranges.last().map_or(0, |r| r.end);
        let mut out = Array2::zeros((x.nrows(), width));
        for ((model, fr), sr) in self.block_models.iter().zip(ds_ranges).zip(&self.block_score_ranges) {
            let scores = transform(model, x.slice(s![.., fr.clone()]))?;
            out.slice_mut(s![.., sr.clone()]).assign(&scores);
        }
        Ok(out)
    }

    /// Approximate feature-space data (canonical order) from the completed
    /// scores.
    pub fn reconstruct(&self) -> Result<Array2<f64>> {
        let z = self.z.as_ref().ok_or_else(|| Error::Config("stack has not been imputed".into()))?;
        let blocks = self
            .block_models
            .iter()
            .zip(&self.block_score_ranges)
            .map(|(m, r)| inverse_transform(m, z.slice(s![.., r.clone()])))
            .collect::<Result<Vec<_>>>()?;
        let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
        ndarray::concatenate(Axis(1), &views).map_err(|e| Error::Dimension(e.to_string()))
    }
}

/// Fits one PCA per block on its fully observed rows and stacks the scores.
pub fn bpi_reduce(ds: &CanonicalDataset, retention: &BlockRetention) -> Result<ReducedStack> {
    let blocks = partition_blocks(ds);
    let mut models = Vec::with_capacity(blocks.len());
    let mut scores = Vec::with_capacity(blocks.len());
    for (i, block) in blocks.iter().enumerate() {
        let rule = retention.rule_for(i, block.ncols());
        let model = fit_pca_with(block.view(), rule, retention.options()).map_err(|e| e.in_block(i))?;
        scores.push(transform(&model, block.view()).map_err(|e| e.in_block(i))?);
        models.push(model);
    }
    let z_star = stack_with_missing(&scores)?;
    let mut start = 0;
    let block_score_ranges = scores
        .iter()
        .map(|z| {
            let r = start..start + z.ncols();
            start += z.ncols();
            r
        })
        .collect();
    Ok(ReducedStack {
        z_star,
        block_score_ranges,
        block_models: models,
        z: None,
        imputation_seconds: 0.0,
        imputer_calls: 0,
    })
}

/// Algorithm: per-block PCA, stack with missing entries, impute the stack.
pub fn bpi_reduce_impute(
    ds: &CanonicalDataset,
    retention: &BlockRetention,
    imputer: &dyn Imputer,
) -> Result<ReducedStack> {
    let mut stack = bpi_reduce(ds, retention)?;
    if stack.z_star.is_complete() {
        stack.z = Some(stack.z_star.values().clone());
        return Ok(stack);
    }
    let started = Instant::now();
    let z = imputer.impute(&stack.z_star)?;
    stack.imputation_seconds = started.elapsed().as_secs_f64();
    stack.imputer_calls = 1;
    stack.z = Some(z);
    Ok(stack)
}

#[derive(Debug, Clone)]
pub struct BaselineResult {
    pub scores: Array2<f64>,
    pub model: PcaModel,
    /// The imputed feature-space matrix (canonical order).
    pub imputed: Array2<f64>,
    pub imputation_seconds: f64,
    pub pca_seconds: f64,
    pub imputer_calls: usize,
}

/// Impute the whole feature-space matrix, then one PCA on the result.
pub fn baseline_impute_then_pca(
    ds: &CanonicalDataset,
    imputer: &dyn Imputer,
    rule: RetentionRule,
) -> Result<BaselineResult> {
    baseline_with(ds, imputer, rule, PcaOptions::default())
}

pub fn baseline_with(
    ds: &CanonicalDataset,
    imputer: &dyn Imputer,
    rule: RetentionRule,
    opts: PcaOptions,
) -> Result<BaselineResult> {
    let (imputed, imputation_seconds, imputer_calls) = if ds.data.is_complete() {
        (ds.data.values().clone(), 0.0, 0)
    } else {
        let started = Instant::now();
        let out = imputer.impute(&ds.data)?;
        (out, started.elapsed().as_secs_f64(), 1)
    };
    let started = Instant::now();
    let model = fit_pca_with(imputed.view(), rule, opts)?;
    let scores = transform(&model, imputed.view())?;
    Ok(BaselineResult {
        scores,
        model,
        imputed,
        imputation_seconds,
        pca_seconds: started.elapsed().as_secs_f64(),
        imputer_calls,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvComparison {
    pub q: Vec<usize>,
    pub block_ev: Vec<f64>,
    pub mean_ev: f64,
}

/// Explained variance of each block's PCA at its retained dimension, and
/// their unweighted mean.
pub fn compare_ev(ds: &CanonicalDataset, retention: &BlockRetention) -> Result<EvComparison> {
    let stack = bpi_reduce(ds, retention)?;
    let block_ev = stack.block_ev();
    let mean_ev = block_ev.iter().sum::<f64>() / block_ev.len() as f64;
    Ok(EvComparison { q: stack.q(), block_ev, mean_ev })
}
