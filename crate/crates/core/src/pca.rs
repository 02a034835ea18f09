//! PCA on a fully observed block.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{covariance, psd_eig, row_major_view};

/// How many principal components to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetentionRule {
    /// Keep exactly this many (clamped to `min(p, n)`).
    FixedDim(usize),
    /// Smallest dimension whose explained variance reaches the ratio.
    VarianceTarget(f64),
    /// Keep `min(p, n)` components.
    KeepAll,
}

impl Default for RetentionRule {
    fn default() -> Self {
        RetentionRule::VarianceTarget(0.95)
    }
}

impl RetentionRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RetentionRule::FixedDim(0) => Err(Error::Config("fixed dimension must be at least 1".into())),
            RetentionRule::VarianceTarget(t) if !(t > 0.0 && t <= 1.0) => {
                Err(Error::Config(format!("variance target {t} is outside (0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PcaOptions {
    /// Scale each column to unit variance before the decomposition.
    pub standardize: bool,
}

/// A fitted PCA model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    /// Per-column scale when standardized.
    pub scale: Option<Array1<f64>>,
    /// `p × q`, orthonormal columns.
    pub components: Array2<f64>,
    /// Full spectrum of the (possibly standardized) covariance, non-increasing.
    pub eigenvalues: Array1<f64>,
    pub warnings: Vec<String>,
}

impl PcaModel {
    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.components.ncols()
    }

    /// Explained variance at the retained dimension.
    pub fn retained_ev(&self) -> f64 {
        explained_variance(self, self.n_components()).unwrap_or(1.0)
    }
}

pub fn fit_pca(x: ArrayView2<'_, f64>, rule: RetentionRule) -> Result<PcaModel> {
    fit_pca_with(x, rule, PcaOptions::default())
}

pub fn fit_pca_with(x: ArrayView2<'_, f64>, rule: RetentionRule, opts: PcaOptions) -> Result<PcaModel> {
    rule.validate()?;
    let (n, p) = x.dim();
    if n < 2 {
        return Err(Error::InsufficientSamples { context: "PCA fit".into(), got: n, need: 2 });
    }
    if p == 0 {
        return Err(Error::Dimension("PCA fit on a matrix with no columns".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("PCA input contains non-finite values".into()));
    }

    let x = row_major_view(x);
    let x = x.view();
    let mean = x.mean_axis(Axis(0)).expect("n >= 2");
    let scale = if opts.standardize {
        let sd = x.std_axis(Axis(0), 1.0).mapv(|s| if s > 0.0 { s } else { 1.0 });
        Some(sd)
    } else {
        None
    };
    let cov = match &scale {
        Some(sd) => covariance((&x / sd).view())?,
        None => covariance(x)?,
    };
    let spectrum = psd_eig(cov.view())?;
    let total: f64 = spectrum.eigenvalues.sum();
    let cap = p.min(n);
    let mut warnings = Vec::new();

    if total <= 0.0 {
        warnings.push("zero-variance block: explained variance set to 1 and q forced to 1".into());
        let mut components = Array2::zeros((p, 1));
        components[[0, 0]] = 1.0;
        return Ok(PcaModel { mean, scale, components, eigenvalues: spectrum.eigenvalues, warnings });
    }

    let q = match rule {
        RetentionRule::FixedDim(q) => {
            if q > cap {
                warnings.push(format!("requested q={q} exceeds min(p, n)={cap}; clamped"));
                cap
            } else {
                q
            }
        }
        RetentionRule::KeepAll => cap,
        RetentionRule::VarianceTarget(target) => {
            let mut acc = 0.0;
            let mut q = cap;
            for (j, &l) in spectrum.eigenvalues.iter().enumerate().take(cap) {
                acc += l;
                if acc >= target * total * (1.0 - 1e-12) {
                    q = j + 1;
                    break;
                }
            }
            q
        }
    };

    let components = spectrum.eigenvectors.slice(ndarray::s![.., ..q]).to_owned();
    Ok(PcaModel { mean, scale, components, eigenvalues: spectrum.eigenvalues, warnings })
}

fn prepare(model: &PcaModel, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if x.ncols() != model.n_features() {
        return Err(Error::Dimension(format!("model has {} features, input has {}", model.n_features(), x.ncols())));
    }
    let centered = &row_major_view(x) - &model.mean;
    Ok(match &model.scale {
        Some(sd) => centered / sd,
        None => centered,
    })
}

/// Scores `(X - mean) · components` (after scaling when standardized).
pub fn transform(model: &PcaModel, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    Ok(prepare(model, x)?.dot(&model.components))
}

/// Maps scores back to feature space: `Z · componentsᵀ + mean`.
pub fn inverse_transform(model: &PcaModel, z: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if z.ncols() != model.n_components() {
        return Err(Error::Dimension(format!(
            "model keeps {} components, scores have {}",
            model.n_components(),
            z.ncols()
        )));
    }
    let mut out = z.dot(&model.components.t());
    if let Some(sd) = &model.scale {
        out *= sd;
    }
    Ok(out + &model.mean)
}

/// Fraction of total variance carried by the first `q` eigenvalues. A block
/// with zero total variance reports 1.
pub fn explained_variance(model: &PcaModel, q: usize) -> Result<f64> {
    let p = model.eigenvalues.len();
    if q < 1 || q > p {
        return Err(Error::Index(format!("q={q} outside 1..={p}")));
    }
    Ok(ev_ratio(model.eigenvalues.as_slice().expect("contiguous"), q))
}

/// `Σ_{j<q} λ_j / Σ_j λ_j` over a non-increasing spectrum, 1 when the total is 0.
pub fn ev_ratio(eigenvalues: &[f64], q: usize) -> f64 {
    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        return 1.0;
    }
    let head: f64 = eigenvalues[..q].iter().sum();
    (head / total).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frobenius_norm;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, p: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, p), |_| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn rank_one_block() {
        let x = array![[-1.0, -2.0, 0.0], [0.0, 0.0, 0.0], [1.0, 2.0, 0.0]];
        let m = fit_pca(x.view(), RetentionRule::FixedDim(1)).unwrap();
        let r5 = 5f64.sqrt();
        let expect = array![1.0 / r5, 2.0 / r5, 0.0];
        for j in 0..3 {
            assert!((m.components[[j, 0]] - expect[j]).abs() < 1e-12);
        }
        assert!((m.eigenvalues[0] - 5.0).abs() < 1e-12);
        assert!(m.eigenvalues[1].abs() < 1e-12);
        assert!(m.eigenvalues[2].abs() < 1e-12);
    }

    #[test]
    fn equal_eigenvalues_give_linear_ev() {
        // ±e_j sample: covariance is a multiple of the identity.
        let p = 4;
        let mut x = Array2::zeros((2 * p, p));
        for j in 0..p {
            x[[2 * j, j]] = 1.0;
            x[[2 * j + 1, j]] = -1.0;
        }
        let m = fit_pca(x.view(), RetentionRule::KeepAll).unwrap();
        for q in 1..=p {
            let ev = explained_variance(&m, q).unwrap();
            assert!((ev - q as f64 / p as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn full_rank_round_trip() {
        let x = random(20, 5, 1);
        let m = fit_pca(x.view(), RetentionRule::FixedDim(5)).unwrap();
        let z = transform(&m, x.view()).unwrap();
        let back = inverse_transform(&m, z.view()).unwrap();
        assert!(frobenius_norm((&back - &x).view()) < 1e-8);

        let (xc, _) = crate::linalg::center_columns(x.view()).unwrap();
        for i in 0..20 {
            let a = z.row(i).dot(&z.row(i)).sqrt();
            let b = xc.row(i).dot(&xc.row(i)).sqrt();
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn mean_rows_score_zero() {
        let x = random(15, 4, 2);
        let m = fit_pca(x.view(), RetentionRule::FixedDim(2)).unwrap();
        let rows = Array2::from_shape_fn((3, 4), |(_, j)| m.mean[j]);
        let z = transform(&m, rows.view()).unwrap();
        assert!(z.iter().all(|v| v.abs() < 1e-12));

        let back = inverse_transform(&m, Array2::zeros((2, 2)).view()).unwrap();
        for row in back.rows() {
            assert_eq!(row, m.mean);
        }
    }

    #[test]
    fn truncated_residual_matches_tail_energy() {
        let x = random(30, 6, 3);
        let q = 2;
        let m = fit_pca(x.view(), RetentionRule::FixedDim(q)).unwrap();
        let back = inverse_transform(&m, transform(&m, x.view()).unwrap().view()).unwrap();
        let err: f64 = (&back - &x).mapv(|v| v * v).sum();
        let tail: f64 = m.eigenvalues.iter().skip(q).sum::<f64>() * 29.0;
        assert!((err - tail).abs() < 1e-8 * tail.max(1.0));
    }

    #[test]
    fn score_variances_match_eigenvalues() {
        let x = random(40, 5, 4);
        let m = fit_pca(x.view(), RetentionRule::KeepAll).unwrap();
        let z = transform(&m, x.view()).unwrap();
        let cov = crate::linalg::covariance(z.view()).unwrap();
        let l1 = m.eigenvalues[0];
        for a in 0..5 {
            assert!((cov[[a, a]] - m.eigenvalues[a]).abs() < 1e-8 * l1.max(1.0));
            for b in 0..5 {
                if a != b {
                    assert!(cov[[a, b]].abs() < 1e-8 * l1);
                }
            }
        }
    }

    #[test]
    fn explained_variance_arithmetic() {
        let m = PcaModel {
            mean: Array1::zeros(4),
            scale: None,
            components: Array2::eye(4),
            eigenvalues: array![4.0, 3.0, 2.0, 1.0],
            warnings: vec![],
        };
        assert!((explained_variance(&m, 2).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(explained_variance(&m, 4).unwrap(), 1.0);
        assert!(matches!(explained_variance(&m, 0), Err(Error::Index(_))));
        assert!(matches!(explained_variance(&m, 5), Err(Error::Index(_))));
    }

    #[test]
    fn diag_covariance_ev_half() {
        // Covariance diag(5, 5, 0): ±a e_1, ±a e_2 with a² = 7.5 over n = 4.
        let a = 7.5f64.sqrt();
        let x = array![[a, 0.0, 1.0], [-a, 0.0, 1.0], [0.0, a, 1.0], [0.0, -a, 1.0]];
        let m = fit_pca(x.view(), RetentionRule::FixedDim(1)).unwrap();
        assert!((m.eigenvalues[0] - 5.0).abs() < 1e-12);
        assert!((explained_variance(&m, 1).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn variance_target_picks_smallest_q() {
        // Column scales 3, 2, 1 on orthogonal directions: eigenvalues ∝ 9, 4, 1.
        let x = array![
            [3.0, 0.0, 0.0],
            [-3.0, 0.0, 0.0],
            [0.0, 2.0, 0.0],
            [0.0, -2.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0]
        ];
        let q = |t| fit_pca(x.view(), RetentionRule::VarianceTarget(t)).unwrap().n_components();
        assert_eq!(q(0.5), 1);
        assert_eq!(q(9.0 / 14.0), 1);
        assert_eq!(q(0.7), 2);
        assert_eq!(q(13.0 / 14.0), 2);
        assert_eq!(q(0.95), 3);
        assert_eq!(q(1.0), 3);
    }

    #[test]
    fn fixed_q_is_clamped_with_warning() {
        let x = random(3, 6, 5);
        let m = fit_pca(x.view(), RetentionRule::FixedDim(5)).unwrap();
        assert_eq!(m.n_components(), 3);
        assert_eq!(m.warnings.len(), 1);
    }

    #[test]
    fn config_and_sample_errors() {
        let x = random(5, 2, 6);
        assert!(matches!(fit_pca(x.view(), RetentionRule::VarianceTarget(0.0)), Err(Error::Config(_))));
        assert!(matches!(fit_pca(x.view(), RetentionRule::VarianceTarget(1.5)), Err(Error::Config(_))));
        assert!(matches!(
            fit_pca(x.slice(ndarray::s![..1, ..]), RetentionRule::KeepAll),
            Err(Error::InsufficientSamples { .. })
        ));
        let m = fit_pca(x.view(), RetentionRule::KeepAll).unwrap();
        assert!(matches!(transform(&m, random(2, 3, 1).view()), Err(Error::Dimension(_))));
        assert!(matches!(inverse_transform(&m, Array2::zeros((2, 3)).view()), Err(Error::Dimension(_))));
    }

    #[test]
    fn zero_variance_block() {
        let x = Array2::from_elem((4, 3), 2.5);
        let m = fit_pca(x.view(), RetentionRule::VarianceTarget(0.9)).unwrap();
        assert_eq!(m.n_components(), 1);
        assert_eq!(m.components.column(0), array![1.0, 0.0, 0.0]);
        assert_eq!(m.retained_ev(), 1.0);
        assert!(!m.warnings.is_empty());
    }

    #[test]
    fn standardized_fit_round_trips() {
        let mut x = random(25, 3, 7);
        x.column_mut(1).mapv_inplace(|v| v * 1000.0);
        let m = fit_pca_with(x.view(), RetentionRule::KeepAll, PcaOptions { standardize: true }).unwrap();
        let total: f64 = m.eigenvalues.sum();
        assert!((total - 3.0).abs() < 1e-9);
        let back = inverse_transform(&m, transform(&m, x.view()).unwrap().view()).unwrap();
        assert!(frobenius_norm((&back - &x).view()) < 1e-7);
    }

    #[test]
    fn fits_are_deterministic() {
        let x = random(30, 7, 9);
        let a = fit_pca(x.view(), RetentionRule::FixedDim(3)).unwrap();
        let b = fit_pca(x.view(), RetentionRule::FixedDim(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ev_is_monotone_in_q() {
        let x = random(30, 7, 10);
        let m = fit_pca(x.view(), RetentionRule::KeepAll).unwrap();
        let mut last = 0.0;
        for q in 1..=7 {
            let ev = explained_variance(&m, q).unwrap();
            assert!(ev >= last);
            last = ev;
        }
        assert!((last - 1.0).abs() < 1e-15);
    }
}
