//! Repeated-trial benchmark: blockwise PCA imputation against
//! impute-then-PCA, compared on imputation time and downstream accuracy.
//!
//! Per repeat the harness masks the data with a monotone pattern, holds out
//! test samples from the fully observed partition, reduces the training data
//! with both arms, projects the (complete) test samples through each arm's
//! fitted models, and classifies. Only the imputer call of each arm is timed.
//!
//! The classifiers are k-nearest-neighbours and nearest-centroid.

use std::path::PathBuf;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bounds::{blocks_from_ranges, estimate_covariance_for_bounds, ev_bounds, CovarianceSource, EvBoundsReport};
use crate::error::{Error, Result};
use crate::impute::{Imputer, ImputerKind};
use crate::linalg::MaskedMatrix;
use crate::monotone::{detect_monotone, generate_monotone_missing, partition_assignment};
use crate::pca::{transform, PcaOptions, RetentionRule};
use crate::pipeline::{baseline_with, bpi_reduce_impute, BlockRetention};

/// Samples with integer class labels `0..classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    pub x: Array2<f64>,
    pub labels: Vec<usize>,
}

/// Gaussian mixture on a random low-rank subspace plus isotropic noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub n_features: usize,
    pub classes: usize,
    pub rank: usize,
    /// Standard deviation of the isotropic feature noise.
    pub noise: f64,
    /// Standard deviation of class centres in the latent space (the
    /// within-class latent spread is 1).
    pub separation: f64,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// `x = W (μ_label + ε) + σ η`, `W` is `p × rank` with N(0, 1/rank) entries.
/// Labels are balanced and shuffled.
pub fn generate_mixture(spec: &SyntheticSpec, seed: u64) -> Result<LabeledData> {
    if spec.n_samples == 0 || spec.n_features == 0 || spec.classes == 0 || spec.rank == 0 {
        return Err(Error::Config(format!("degenerate synthetic spec {spec:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (spec.rank as f64).sqrt();
    let w = Array2::from_shape_simple_fn((spec.n_features, spec.rank), || normal(&mut rng) * scale);
    let centres = Array2::from_shape_simple_fn((spec.classes, spec.rank), || normal(&mut rng) * spec.separation);
    let mut labels: Vec<usize> = (0..spec.n_samples).map(|i| i % spec.classes).collect();
    labels.shuffle(&mut rng);
    let mut latent = Array2::from_shape_simple_fn((spec.n_samples, spec.rank), || normal(&mut rng));
    for (mut row, &l) in latent.rows_mut().into_iter().zip(&labels) {
        row += &centres.row(l);
    }
    let noise = Array2::from_shape_simple_fn((spec.n_samples, spec.n_features), || normal(&mut rng));
    let x = latent.dot(&w.t()) + noise * spec.noise;
    Ok(LabeledData { x, labels })
}

/// Product of two standard-normal factors, `n × rank` times `rank × p`.
pub fn low_rank_matrix(n: usize, p: usize, rank: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Array2::from_shape_simple_fn((n, rank), || normal(&mut rng));
    let b = Array2::from_shape_simple_fn((rank, p), || normal(&mut rng));
    a.dot(&b)
}

fn check_train(train_x: ArrayView2<'_, f64>, train_y: &[usize], test_x: ArrayView2<'_, f64>) -> Result<()> {
    if train_x.nrows() == 0 {
        return Err(Error::Config("empty training set".into()));
    }
    if train_x.nrows() != train_y.len() {
        return Err(Error::Dimension(format!("{} training rows but {} labels", train_x.nrows(), train_y.len())));
    }
    if train_x.ncols() != test_x.ncols() {
        return Err(Error::Dimension(format!("train has {} features, test has {}", train_x.ncols(), test_x.ncols())));
    }
    Ok(())
}

fn squared_distance(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Majority vote among the `k` Euclidean nearest training rows. Distance ties
/// go to the lower training index, vote ties to the smaller label.
pub fn knn_classify(
    train_x: ArrayView2<'_, f64>,
    train_y: &[usize],
    test_x: ArrayView2<'_, f64>,
    k: usize,
) -> Result<Vec<usize>> {
    if k < 1 {
        return Err(Error::Config("KNN classifier needs k >= 1".into()));
    }
    check_train(train_x, train_y, test_x)?;
    let n_labels = train_y.iter().max().map_or(0, |m| m + 1);
    let k = k.min(train_x.nrows());
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(train_x.nrows());
    let mut votes = vec![0usize; n_labels];
    Ok(test_x
        .rows()
        .into_iter()
        .map(|t| {
            dist.clear();
            dist.extend(train_x.rows().into_iter().enumerate().map(|(i, r)| (squared_distance(t, r), i)));
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k < dist.len() {
                dist.select_nth_unstable_by(k - 1, cmp);
            }
            votes.iter_mut().for_each(|v| *v = 0);
            for &(_, i) in &dist[..k] {
                votes[train_y[i]] += 1;
            }
            // max_by_key returns the last maximum; scan for the first instead.
            let mut best = 0;
            for (label, &v) in votes.iter().enumerate() {
                if v > votes[best] {
                    best = label;
                }
            }
            best
        })
        .collect())
}

/// Nearest class mean. Labels must be `0..c` with every class present.
pub fn nearest_centroid_classify(
    train_x: ArrayView2<'_, f64>,
    train_y: &[usize],
    test_x: ArrayView2<'_, f64>,
) -> Result<Vec<usize>> {
    check_train(train_x, train_y, test_x)?;
    let n_labels = train_y.iter().max().map_or(0, |m| m + 1);
    let mut sums = Array2::<f64>::zeros((n_labels, train_x.ncols()));
    let mut counts = vec![0usize; n_labels];
    for (row, &y) in train_x.rows().into_iter().zip(train_y) {
        let mut s = sums.row_mut(y);
        s += &row;
        counts[y] += 1;
    }
    if let Some(c) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Config(format!("class {c} has no training samples")));
    }
    for (mut s, &c) in sums.rows_mut().into_iter().zip(&counts) {
        s /= c as f64;
    }
    Ok(test_x
        .rows()
        .into_iter()
        .map(|t| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (label, c) in sums.rows().into_iter().enumerate() {
                let d = squared_distance(t, c);
                if d < best_d {
                    best_d = d;
                    best = label;
                }
            }
            best
        })
        .collect())
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len() as f64
}

/// RMSE over the cells that are missing under `mask`.
pub fn rmse_missing(
    imputed: ArrayView2<'_, f64>,
    truth: ArrayView2<'_, f64>,
    mask: ArrayView2<'_, bool>,
) -> Result<f64> {
    if imputed.dim() != truth.dim() || truth.dim() != mask.dim() {
        return Err(Error::Dimension(format!(
            "shapes {:?}, {:?}, {:?} differ",
            imputed.dim(),
            truth.dim(),
            mask.dim()
        )));
    }
    let mut acc = 0.0;
    let mut n = 0usize;
    ndarray::Zip::from(imputed).and(truth).and(mask).for_each(|&a, &b, &obs| {
        if !obs {
            acc += (a - b) * (a - b);
            n += 1;
        }
    });
    if n == 0 {
        return Err(Error::Config("no missing cells to score".into()));
    }
    Ok((acc / n as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierKind {
    Knn { k: usize },
    NearestCentroid,
}

impl ClassifierKind {
    pub fn classify(
        &self,
        train_x: ArrayView2<'_, f64>,
        train_y: &[usize],
        test_x: ArrayView2<'_, f64>,
    ) -> Result<Vec<usize>> {
        match self {
            ClassifierKind::Knn { k } => knn_classify(train_x, train_y, test_x, *k),
            ClassifierKind::NearestCentroid => nearest_centroid_classify(train_x, train_y, test_x),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ClassifierKind::Knn { k } => format!("knn(k={k})"),
            ClassifierKind::NearestCentroid => "nearest_centroid".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    /// A complete CSV; loaded by the caller and handed to
    /// [`run_experiment_on`].
    Csv {
        path: PathBuf,
        #[serde(default)]
        label_column: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub dataset: DatasetSource,
    /// Missing features added by each successive sample partition.
    pub missing_counts: Vec<usize>,
    pub imputer: ImputerKind,
    #[serde(default)]
    pub retention: BlockRetention,
    /// Rule for the baseline's single PCA; defaults to the block default.
    #[serde(default)]
    pub baseline_rule: Option<RetentionRule>,
    pub classifier: ClassifierKind,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_repeats() -> usize {
    10
}

fn default_train_fraction() -> f64 {
    0.8
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repeats < 1 {
            return Err(Error::Config("repeats must be >= 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!("train fraction {} is outside (0, 1)", self.train_fraction)));
        }
        self.retention.default.validate()?;
        for r in self.retention.overrides.values() {
            r.validate()?;
        }
        if let Some(r) = &self.baseline_rule {
            r.validate()?;
        }
        match &self.imputer {
            ImputerKind::Knn { k } if *k < 1 => return Err(Error::Config("imputer k must be >= 1".into())),
            ImputerKind::SoftImpute(p) => p.validate()?,
            _ => {}
        }
        if let ClassifierKind::Knn { k: 0 } = self.classifier {
            return Err(Error::Config("classifier k must be >= 1".into()));
        }
        Ok(())
    }

    /// Per-repeat seeds derived from the master seed. They are 63-bit so
    /// reports can store them as signed 64-bit integers.
    pub fn repeat_seeds(&self) -> Vec<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.repeats).map(|_| rng.next_u64() >> 1).collect()
    }

    fn baseline_rule(&self) -> RetentionRule {
        self.baseline_rule.unwrap_or(self.retention.default)
    }
}

/// Mean and sample standard deviation (divisor `n − 1`, zero for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub time_mean_seconds: f64,
    pub time_std_seconds: f64,
    pub rmse_mean: f64,
    pub accuracies: Vec<f64>,
    pub imputation_seconds: Vec<f64>,
    /// Feature-space RMSE on the masked training cells.
    pub rmse: Vec<f64>,
    /// Reduced dimension per repeat.
    pub dims: Vec<usize>,
}

impl ArmSummary {
    fn from_trials(trials: &[ArmTrial]) -> Self {
        let accuracies: Vec<f64> = trials.iter().map(|t| t.accuracy).collect();
        let times: Vec<f64> = trials.iter().map(|t| t.imputation_seconds).collect();
        let rmse: Vec<f64> = trials.iter().filter_map(|t| t.rmse).collect();
        let (accuracy_mean, accuracy_std) = mean_std(&accuracies);
        let (time_mean_seconds, time_std_seconds) = mean_std(&times);
        let (rmse_mean, _) = mean_std(&rmse);
        Self {
            accuracy_mean,
            accuracy_std,
            time_mean_seconds,
            time_std_seconds,
            rmse_mean,
            accuracies,
            imputation_seconds: times,
            rmse,
            dims: trials.iter().map(|t| t.dim).collect(),
        }
    }

    /// Median imputation time.
    pub fn median_seconds(&self) -> f64 {
        median(&self.imputation_seconds)
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub imputer: String,
    pub classifier: String,
    pub repeats: usize,
    pub seeds: Vec<u64>,
    pub n_train: usize,
    pub n_test: usize,
    pub block_widths: Vec<usize>,
    pub block_observed: Vec<usize>,
    pub block_q: Vec<usize>,
    pub block_ev: Vec<f64>,
    pub mean_ev: f64,
    pub baseline_q: usize,
    pub baseline: ArmSummary,
    pub bpi: ArmSummary,
    /// Computed on the first repeat from the complete training data.
    pub bounds: Option<EvBoundsReport>,
    pub notes: Vec<String>,
}

/// One row of the long-format export.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LongRow {
    pub arm: &'static str,
    pub repeat: usize,
    pub metric: &'static str,
    pub value: f64,
}

impl ExperimentReport {
    pub fn long_rows(&self) -> Vec<LongRow> {
        let mut rows = Vec::new();
        for (arm, s) in [("baseline", &self.baseline), ("bpi", &self.bpi)] {
            for r in 0..self.repeats {
                rows.push(LongRow { arm, repeat: r, metric: "accuracy", value: s.accuracies[r] });
                rows.push(LongRow { arm, repeat: r, metric: "imputation_seconds", value: s.imputation_seconds[r] });
                if let Some(&v) = s.rmse.get(r) {
                    rows.push(LongRow { arm, repeat: r, metric: "rmse", value: v });
                }
                rows.push(LongRow { arm, repeat: r, metric: "dims", value: s.dims[r] as f64 });
            }
        }
        rows
    }

    /// BPI median imputation time over the baseline's.
    pub fn median_time_ratio(&self) -> f64 {
        let base = self.baseline.median_seconds();
        if base == 0.0 {
            return f64::NAN;
        }
        self.bpi.median_seconds() / base
    }
}

#[derive(Debug, Clone)]
struct ArmTrial {
    accuracy: f64,
    imputation_seconds: f64,
    rmse: Option<f64>,
    dim: usize,
}

struct RepeatOutcome {
    baseline: ArmTrial,
    bpi: ArmTrial,
    n_train: usize,
    n_test: usize,
    widths: Vec<usize>,
    observed: Vec<usize>,
    q: Vec<usize>,
    block_ev: Vec<f64>,
    bounds: Option<EvBoundsReport>,
}

/// Runs a synthetic-source experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    match cfg.dataset {
        DatasetSource::Synthetic(_) => run_experiment_on(cfg, None),
        DatasetSource::Csv { .. } => {
            Err(Error::Config("CSV datasets must be loaded by the caller and passed to run_experiment_on".into()))
        }
    }
}

/// Runs an experiment. `data` is required for CSV sources and ignored for
/// synthetic ones, which are regenerated from each repeat's seed.
pub fn run_experiment_on(cfg: &ExperimentConfig, data: Option<&LabeledData>) -> Result<ExperimentReport> {
    cfg.validate()?;
    let seeds = cfg.repeat_seeds();
    let mut outcomes = Vec::with_capacity(cfg.repeats);
    for (r, &seed) in seeds.iter().enumerate() {
        let generated;
        let d = match (&cfg.dataset, data) {
            (DatasetSource::Synthetic(spec), _) => {
                generated = generate_mixture(spec, seed)?;
                &generated
            }
            (DatasetSource::Csv { .. }, Some(d)) => d,
            (DatasetSource::Csv { path, .. }, None) => {
                return Err(Error::Config(format!("dataset {} was not loaded", path.display())))
            }
        };
        outcomes.push(run_repeat(cfg, d, seed, r == 0)?);
    }

    let first = &outcomes[0];
    let base_trials: Vec<ArmTrial> = outcomes.iter().map(|o| o.baseline.clone()).collect();
    let bpi_trials: Vec<ArmTrial> = outcomes.iter().map(|o| o.bpi.clone()).collect();
    let mean_ev =
        if first.block_ev.is_empty() { 0.0 } else { first.block_ev.iter().sum::<f64>() / first.block_ev.len() as f64 };
    Ok(ExperimentReport {
        name: cfg.name.clone(),
        imputer: cfg.imputer.to_string(),
        classifier: cfg.classifier.describe(),
        repeats: cfg.repeats,
        seeds,
        n_train: first.n_train,
        n_test: first.n_test,
        block_widths: first.widths.clone(),
        block_observed: first.observed.clone(),
        block_q: first.q.clone(),
        block_ev: first.block_ev.clone(),
        mean_ev,
        baseline_q: first.baseline.dim,
        baseline: ArmSummary::from_trials(&base_trials),
        bpi: ArmSummary::from_trials(&bpi_trials),
        bounds: first.bounds.clone(),
        notes: vec![
            "downstream classifiers are KNN / nearest-centroid".into(),
            "imputation time wraps only the imputer call of each arm (monotonic clock)".into(),
            "test samples come from the fully observed partition; models are fit on training rows only".into(),
            "block structure, q and EV figures are from the first repeat".into(),
        ],
    })
}

fn run_repeat(cfg: &ExperimentConfig, data: &LabeledData, seed: u64, with_bounds: bool) -> Result<RepeatOutcome> {
    let (n, p) = data.x.dim();
    if data.labels.len() != n {
        return Err(Error::Dimension(format!("{n} rows but {} labels", data.labels.len())));
    }
    let parts = cfg.missing_counts.len() + 1;
    let mask_seed = seed ^ 0x9e37_79b9_7f4a_7c15;
    let masked = generate_monotone_missing(data.x.view(), &cfg.missing_counts, mask_seed)?;
    let groups = partition_assignment(n, parts, mask_seed);

    let mut complete: Vec<usize> = (0..n).filter(|&i| groups[i] == 0).collect();
    let n_test = ((1.0 - cfg.train_fraction) * n as f64).round() as usize;
    if n_test == 0 || n_test + 2 > complete.len() {
        return Err(Error::Config(format!(
            "cannot hold out {n_test} test samples from a fully observed partition of {}",
            complete.len()
        )));
    }
    complete.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5851_f42d_4c95_7f2d));
    let mut test_rows = complete[..n_test].to_vec();
    test_rows.sort_unstable();
    let mut is_test = vec![false; n];
    for &i in &test_rows {
        is_test[i] = true;
    }
    let train_rows: Vec<usize> = (0..n).filter(|&i| !is_test[i]).collect();

    let train = masked.select_rows(&train_rows);
    let train_truth = data.x.select(Axis(0), &train_rows);
    let train_labels: Vec<usize> = train_rows.iter().map(|&i| data.labels[i]).collect();
    let test_labels: Vec<usize> = test_rows.iter().map(|&i| data.labels[i]).collect();

    let ds = detect_monotone(&train).map_err(|e| e.in_arm("shared", "pattern detection"))?;
    let canon_labels: Vec<usize> = ds.sample_perm.iter().map(|&i| train_labels[i]).collect();
    let truth_canon = ds.canonical_columns(train_truth.view()).select(Axis(0), &ds.sample_perm);
    let test_x = ds.canonical_columns(data.x.select(Axis(0), &test_rows).view());
    let imputer: &dyn Imputer = &cfg.imputer;
    let opts = PcaOptions { standardize: cfg.retention.standardize };

    let base =
        baseline_with(&ds, imputer, cfg.baseline_rule(), opts).map_err(|e| e.in_arm("baseline", "impute+pca"))?;
    let base_test = transform(&base.model, test_x.view()).map_err(|e| e.in_arm("baseline", "test projection"))?;
    let base_pred = cfg
        .classifier
        .classify(base.scores.view(), &canon_labels, base_test.view())
        .map_err(|e| e.in_arm("baseline", "classification"))?;
    let base_rmse = score_rmse(&ds.data, &base.imputed, &truth_canon);

    let stack = bpi_reduce_impute(&ds, &cfg.retention, imputer).map_err(|e| e.in_arm("bpi", "reduce+impute"))?;
    let z = stack.z.as_ref().expect("imputed stack");
    let bpi_test = stack
        .project_complete(&ds.spec.feature_ranges, test_x.view())
        .map_err(|e| e.in_arm("bpi", "test projection"))?;
    let bpi_pred = cfg
        .classifier
        .classify(z.view(), &canon_labels, bpi_test.view())
        .map_err(|e| e.in_arm("bpi", "classification"))?;
    let bpi_rmse = stack.reconstruct().ok().and_then(|rec| score_rmse(&ds.data, &rec, &truth_canon));

    let bounds = if with_bounds {
        estimate_covariance_for_bounds(&ds, CovarianceSource::GroundTruth(train_truth.view()))
            .and_then(|s| ev_bounds(s.view(), &blocks_from_ranges(&ds.spec.feature_ranges), &stack.q()))
            .ok()
    } else {
        None
    };

    debug_assert_eq!(p, ds.data.n_features());
    Ok(RepeatOutcome {
        baseline: ArmTrial {
            accuracy: accuracy(&base_pred, &test_labels),
            imputation_seconds: base.imputation_seconds,
            rmse: base_rmse,
            dim: base.model.n_components(),
        },
        bpi: ArmTrial {
            accuracy: accuracy(&bpi_pred, &test_labels),
            imputation_seconds: stack.imputation_seconds,
            rmse: bpi_rmse,
            dim: z.ncols(),
        },
        n_train: train_rows.len(),
        n_test,
        widths: ds.spec.widths(),
        observed: ds.spec.observed_counts.clone(),
        q: stack.q(),
        block_ev: stack.block_ev(),
        bounds,
    })
}

fn score_rmse(data: &MaskedMatrix, imputed: &Array2<f64>, truth: &Array2<f64>) -> Option<f64> {
    rmse_missing(imputed.view(), truth.view(), data.mask().view()).ok()
}
