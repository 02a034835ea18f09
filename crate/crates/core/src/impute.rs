//! Imputation algorithms behind one interface.
//!
//! Every imputer returns a dense matrix that equals the input at each observed
//! cell, bit for bit, and contains no NaN.
//!
//! Other imputers (a GAIN-style generative model, for instance) plug in by
//! implementing [`Imputer`]; nothing else in the pipeline depends on the
//! concrete type.

use std::fmt;

use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frobenius_norm, truncated_svd_above, MaskedMatrix};

pub trait Imputer: Send + Sync {
    fn name(&self) -> &'static str;

    /// Hyperparameters as key/value pairs, for reports.
    fn settings(&self) -> Vec<(String, String)>;

    fn impute(&self, m: &MaskedMatrix) -> Result<Array2<f64>>;
}

/// The built-in imputers as a serializable choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImputerKind {
    Mean,
    Knn { k: usize },
    SoftImpute(SoftImputeParams),
}

impl Imputer for ImputerKind {
    fn name(&self) -> &'static str {
        match self {
            ImputerKind::Mean => "mean",
            ImputerKind::Knn { .. } => "knn",
            ImputerKind::SoftImpute(_) => "soft_impute",
        }
    }

    fn settings(&self) -> Vec<(String, String)> {
        match self {
            ImputerKind::Mean => Vec::new(),
            ImputerKind::Knn { k } => vec![("k".into(), k.to_string())],
            ImputerKind::SoftImpute(p) => p.settings(),
        }
    }

    fn impute(&self, m: &MaskedMatrix) -> Result<Array2<f64>> {
        match self {
            ImputerKind::Mean => impute_mean(m),
            ImputerKind::Knn { k } => impute_knn(m, *k),
            ImputerKind::SoftImpute(p) => soft_impute(m, p).map(|o| o.values),
        }
    }
}

impl fmt::Display for ImputerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())?;
        let settings = self.settings();
        if !settings.is_empty() {
            let parts: Vec<String> = settings.iter().map(|(k, v)| format!("{k}={v}")).collect();
            write!(f, "({})", parts.join(", "))?;
        }
        Ok(())
    }
}

fn column_means(m: &MaskedMatrix) -> Result<Array1<f64>> {
    let mut means = Array1::zeros(m.n_features());
    for j in 0..m.n_features() {
        let obs = m.observed_in_column(j);
        if obs.is_empty() {
            return Err(Error::AllMissingColumn(j));
        }
        means[j] = obs.iter().sum::<f64>() / obs.len() as f64;
    }
    Ok(means)
}

/// Observed cells from `m`, the rest from `fill`.
fn merge_observed(m: &MaskedMatrix, fill: &Array2<f64>) -> Array2<f64> {
    let mut out = fill.clone();
    Zip::from(&mut out).and(m.values()).and(m.mask()).for_each(|o, &v, &obs| {
        if obs {
            *o = v;
        }
    });
    out
}

/// Column-mean imputation.
pub fn impute_mean(m: &MaskedMatrix) -> Result<Array2<f64>> {
    let means = column_means(m)?;
    let mut out = m.values().clone();
    Zip::indexed(&mut out).and(m.mask()).for_each(|(_, j), v, &obs| {
        if !obs {
            *v = means[j];
        }
    });
    Ok(out)
}

/// Masked Euclidean distance rescaled by the fraction of shared coordinates:
/// `sqrt(p / |shared| · Σ_shared (a - b)²)`. `None` when nothing is shared.
pub fn masked_distance(m: &MaskedMatrix, a: usize, b: usize) -> Option<f64> {
    let p = m.n_features();
    let (va, vb) = (m.values().row(a), m.values().row(b));
    let (ma, mb) = (m.mask().row(a), m.mask().row(b));
    let mut shared = 0usize;
    let mut acc = 0.0;
    for j in 0..p {
        if ma[j] && mb[j] {
            let d = va[j] - vb[j];
            acc += d * d;
            shared += 1;
        }
    }
    (shared > 0).then(|| (p as f64 / shared as f64 * acc).sqrt())
}

/// k-nearest-neighbour imputation. Each missing cell is the unweighted mean
/// of that column over the `k` nearest samples observing it (fewer when fewer
/// exist; the column mean when none do). Distance ties go to the lower index.
pub fn impute_knn(m: &MaskedMatrix, k: usize) -> Result<Array2<f64>> {
    if k < 1 {
        return Err(Error::Config("KNN imputation needs k >= 1".into()));
    }
    let means = column_means(m)?;
    let (n, p) = (m.n_samples(), m.n_features());
    let mut out = m.values().clone();
    for i in 0..n {
        let missing: Vec<usize> = (0..p).filter(|&j| !m.is_observed(i, j)).collect();
        if missing.is_empty() {
            continue;
        }
        let mut neighbours: Vec<(f64, usize)> =
            (0..n).filter(|&j| j != i).filter_map(|j| masked_distance(m, i, j).map(|d| (d, j))).collect();
        neighbours.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &c in &missing {
            let mut sum = 0.0;
            let mut used = 0usize;
            for &(_, j) in &neighbours {
                if used == k {
                    break;
                }
                if m.is_observed(j, c) {
                    sum += m.values()[[j, c]];
                    used += 1;
                }
            }
            out[[i, c]] = if used > 0 { sum / used as f64 } else { means[c] };
        }
    }
    Ok(out)
}

/// Singular value shrinkage for SoftImpute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shrinkage {
    /// λ used as given.
    Absolute(f64),
    /// λ = fraction × largest singular value of the mean-filled start.
    Relative(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftImputeParams {
    pub shrinkage: Shrinkage,
    /// Rank cap; `None` means `min(n, p, 100)`.
    #[serde(default)]
    pub rank: Option<usize>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
}

fn default_tol() -> f64 {
    1e-5
}

fn default_max_iters() -> usize {
    200
}

impl Default for SoftImputeParams {
    fn default() -> Self {
        Self { shrinkage: Shrinkage::Absolute(0.0), rank: None, tol: default_tol(), max_iters: default_max_iters() }
    }
}

impl SoftImputeParams {
    pub fn absolute(lambda: f64) -> Self {
        Self { shrinkage: Shrinkage::Absolute(lambda), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let lambda = match self.shrinkage {
            Shrinkage::Absolute(l) | Shrinkage::Relative(l) => l,
        };
        if !(lambda >= 0.0) {
            return Err(Error::Config(format!("shrinkage must be >= 0, got {lambda}")));
        }
        if self.rank == Some(0) {
            return Err(Error::Config("rank cap must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tolerance must be > 0, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be >= 1".into()));
        }
        Ok(())
    }

    fn settings(&self) -> Vec<(String, String)> {
        let (key, val) = match self.shrinkage {
            Shrinkage::Absolute(l) => ("lambda", l),
            Shrinkage::Relative(l) => ("lambda_rel", l),
        };
        vec![
            (key.into(), val.to_string()),
            ("rank".into(), self.rank.map_or_else(|| "min(n,p,100)".to_string(), |r| r.to_string())),
            ("tol".into(), self.tol.to_string()),
            ("max_iters".into(), self.max_iters.to_string()),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct SoftImputeOutcome {
    pub values: Array2<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub lambda: f64,
    pub rank_cap: usize,
    /// `½‖P_Ω(X − Z_t)‖² + λ‖Z_t‖_*` after each iteration `t ≥ 1`.
    pub objective_history: Vec<f64>,
}

/// SoftImpute: iterate `Z ← SVT_λ(P_Ω(X) + P_Ω⊥(Z))` from the column-mean
/// fill until the relative change `‖Z_new − Z‖_F / max(1, ‖Z‖_F)` drops to
/// `tol`. Hitting `max_iters` is not an error; the outcome is flagged.
pub fn soft_impute(m: &MaskedMatrix, params: &SoftImputeParams) -> Result<SoftImputeOutcome> {
    params.validate()?;
    let (n, p) = (m.n_samples(), m.n_features());
    let rank_cap = params.rank.unwrap_or_else(|| n.min(p).min(100)).min(n.min(p));
    let start = impute_mean(m)?;
    if m.is_complete() {
        return Ok(SoftImputeOutcome {
            values: start,
            iterations: 0,
            converged: true,
            lambda: match params.shrinkage {
                Shrinkage::Absolute(l) => l,
                Shrinkage::Relative(_) => 0.0,
            },
            rank_cap,
            objective_history: Vec::new(),
        });
    }

    let mut z = start;
    let mut lambda = match params.shrinkage {
        Shrinkage::Absolute(l) => Some(l),
        Shrinkage::Relative(_) => None,
    };
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iters {
        iterations += 1;
        let filled = merge_observed(m, &z);
        // Triplets with σ <= λ vanish after shrinkage, so they are never computed.
        let svd = truncated_svd_above(filled.view(), rank_cap, |smax| {
            *lambda.get_or_insert_with(|| match params.shrinkage {
                Shrinkage::Relative(frac) => frac * smax,
                Shrinkage::Absolute(l) => l,
            })
        })?;
        let lam = lambda.unwrap_or(0.0);
        let shrunk = svd.singular_values.mapv(|s| (s - lam).max(0.0));
        let z_new = svd.reconstruct_with(&shrunk);

        let mut fit = 0.0;
        Zip::from(m.values()).and(m.mask()).and(&z_new).for_each(|&x, &obs, &zv| {
            if obs {
                fit += (x - zv) * (x - zv);
            }
        });
        history.push(0.5 * fit + lam * shrunk.sum());

        let delta = frobenius_norm((&z_new - &z).view()) / frobenius_norm(z.view()).max(1.0);
        z = z_new;
        if delta <= params.tol {
            converged = true;
            break;
        }
    }

    Ok(SoftImputeOutcome {
        values: merge_observed(m, &z),
        iterations,
        converged,
        lambda: lambda.unwrap_or(0.0),
        rank_cap,
        objective_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    const NAN: f64 = f64::NAN;

    #[test]
    fn mean_fills_column_average() {
        let m = MaskedMatrix::from_nan(array![[1.0, 5.0], [3.0, 6.0], [NAN, 7.0]]);
        let out = impute_mean(&m).unwrap();
        assert_eq!(out, array![[1.0, 5.0], [3.0, 6.0], [2.0, 7.0]]);
    }

    #[test]
    fn mean_is_identity_on_complete() {
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(impute_mean(&MaskedMatrix::complete(x.clone())).unwrap(), x);
    }

    #[test]
    fn all_missing_column_is_named() {
        let m = MaskedMatrix::from_nan(array![[1.0, NAN], [3.0, NAN]]);
        assert_eq!(impute_mean(&m), Err(Error::AllMissingColumn(1)));
        assert_eq!(impute_knn(&m, 1), Err(Error::AllMissingColumn(1)));
    }

    #[test]
    fn knn_copies_identical_neighbour() {
        let m = MaskedMatrix::from_nan(array![[1.0, 2.0, 3.0], [1.0, 2.0, NAN], [9.0, 9.0, 100.0]]);
        let out = impute_knn(&m, 1).unwrap();
        assert_eq!(out[[1, 2]], 3.0);
    }

    #[test]
    fn knn_falls_back_to_column_mean() {
        // Sample 0 is the only incomplete one; no sample sharing a coordinate
        // with it observes column 2 except through disjoint support.
        let m = MaskedMatrix::from_nan(array![[1.0, NAN, NAN], [NAN, 2.0, 5.0], [NAN, 4.0, 7.0], [3.0, NAN, NAN]]);
        let out = impute_knn(&m, 2).unwrap();
        let mean = impute_mean(&m).unwrap();
        assert_eq!(out[[0, 2]], mean[[0, 2]]);
    }

    #[test]
    fn knn_rejects_zero_k() {
        let m = MaskedMatrix::complete(array![[1.0]]);
        assert!(matches!(impute_knn(&m, 0), Err(Error::Config(_))));
    }

    #[test]
    fn masked_distance_rescales() {
        let m = MaskedMatrix::from_nan(array![[0.0, 0.0, NAN, 0.0], [3.0, 4.0, 1.0, NAN]]);
        // Shared coords 0 and 1: sqrt(4/2 * 25).
        assert!((masked_distance(&m, 0, 1).unwrap() - 50f64.sqrt()).abs() < 1e-15);
        let m = MaskedMatrix::from_nan(array![[0.0, NAN], [NAN, 1.0]]);
        assert_eq!(masked_distance(&m, 0, 1), None);
    }

    #[test]
    fn soft_impute_complete_is_identity() {
        let x = array![[1.0, 2.0], [3.0, 4.5]];
        let out = soft_impute(&MaskedMatrix::complete(x.clone()), &SoftImputeParams::absolute(3.0)).unwrap();
        assert_eq!(out.values, x);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn soft_impute_constant_fixed_point() {
        let mut x = Array2::from_elem((10, 6), 2.5);
        for i in 7..10 {
            for j in 3..6 {
                x[[i, j]] = NAN;
            }
        }
        let out = soft_impute(&MaskedMatrix::from_nan(x), &SoftImputeParams::absolute(0.0)).unwrap();
        assert!(out.values.iter().all(|v| (v - 2.5).abs() < 1e-8));
        assert!(out.converged);
    }

    #[test]
    fn soft_impute_param_validation() {
        let m = MaskedMatrix::complete(array![[1.0]]);
        let bad = [
            SoftImputeParams::absolute(-1.0),
            SoftImputeParams { rank: Some(0), ..Default::default() },
            SoftImputeParams { tol: 0.0, ..Default::default() },
            SoftImputeParams { max_iters: 0, ..Default::default() },
        ];
        for p in bad {
            assert!(matches!(soft_impute(&m, &p), Err(Error::Config(_))));
        }
    }

    #[test]
    fn soft_impute_flags_non_convergence() {
        let m = MaskedMatrix::from_nan(array![[1.0, 2.0, 3.0], [2.0, 4.1, 5.9], [3.0, 6.2, NAN], [4.0, NAN, NAN]]);
        let p = SoftImputeParams { shrinkage: Shrinkage::Absolute(0.01), rank: Some(1), tol: 1e-15, max_iters: 2 };
        let out = soft_impute(&m, &p).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 2);
        assert_eq!(out.objective_history.len(), 2);
    }

    #[test]
    fn imputer_kind_dispatch() {
        let m = MaskedMatrix::from_nan(array![[1.0, 2.0], [3.0, NAN], [5.0, 6.0]]);
        for kind in
            [ImputerKind::Mean, ImputerKind::Knn { k: 1 }, ImputerKind::SoftImpute(SoftImputeParams::absolute(0.1))]
        {
            let out = kind.impute(&m).unwrap();
            assert!(out.iter().all(|v| v.is_finite()), "{kind}");
            assert_eq!(out[[0, 1]], 2.0);
        }
        assert_eq!(ImputerKind::Knn { k: 3 }.to_string(), "knn(k=3)");
    }
}
