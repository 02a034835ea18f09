use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use bpi_core::bench::{run_experiment_on, DatasetSource, ExperimentConfig, ExperimentReport, LabeledData};
use bpi_core::bounds::{
    blocks_from_widths, estimate_covariance_for_bounds, ev_bounds, CovarianceSource, EvBoundsReport,
};
use bpi_core::impute::{Imputer, ImputerKind};
use bpi_core::monotone::{detect_monotone, generate_monotone_missing, CanonicalDataset};
use bpi_core::pca::{PcaOptions, RetentionRule};
use bpi_core::pipeline::{baseline_with, bpi_reduce};
use bpi_core::Error;
use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::args::{target_rule, BoundsMode, Format, ImputerArgs, InputArgs, RetentionArgs};
use crate::io::{check_input, check_output, fmt_f64, read_table, write_report, write_table, CsvOut, Table};

const VERSION: &str = env!("CARGO_PKG_VERSION");

fn meta_path(out: &Path, meta: Option<&Path>, format: Format) -> PathBuf {
    meta.map(Path::to_path_buf).unwrap_or_else(|| out.with_extension(format!("meta.{}", format.extension())))
}

fn load(input: &InputArgs) -> Result<Table> {
    check_input(&input.input)?;
    read_table(&input.input, input.label_col.as_deref()).context("reading input")
}

fn detect(table: &Table) -> Result<CanonicalDataset> {
    detect_monotone(&table.data)
        .map_err(|e| match e {
            Error::NotMonotone { sample, feature } => {
                anyhow!("{e} (data row {sample}, column {:?})", table.names[feature])
            }
            other => other.into(),
        })
        .context("pattern detection")
}

fn canonical_names(table: &Table, ds: &CanonicalDataset) -> Vec<String> {
    ds.feature_perm.iter().map(|&j| table.names[j].clone()).collect()
}

fn canonical_labels<'a>(table: &'a Table, ds: &CanonicalDataset) -> Option<(&'a str, Vec<&'a str>)> {
    let name = table.label_name.as_deref()?;
    let labels = table.labels.as_ref()?;
    Some((name, ds.sample_perm.iter().map(|&i| labels[i].as_str()).collect()))
}

fn validate_imputer(kind: &ImputerKind) -> Result<()> {
    match kind {
        ImputerKind::Knn { k: 0 } => bail!("--k must be at least 1"),
        ImputerKind::SoftImpute(p) => p.validate().map_err(Into::into),
        _ => Ok(()),
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

#[derive(Serialize)]
struct DetectSummary {
    monotone: bool,
    n_samples: usize,
    n_features: usize,
    k: usize,
    widths: Vec<usize>,
    observed_counts: Vec<usize>,
    missing_cells: usize,
    feature_order: Vec<String>,
}

pub fn detect_cmd(input: &InputArgs, out: Option<&Path>, format: Format) -> Result<()> {
    if let Some(o) = out {
        check_output(o)?;
    }
    let table = load(input)?;
    let ds = detect(&table)?;
    let names = canonical_names(&table, &ds);
    println!("monotone, k={}", ds.spec.k());
    println!("{:<6} {:>8} {:>9}  features", "block", "width", "observed");
    for (i, (r, n_i)) in ds.spec.feature_ranges.iter().zip(&ds.spec.observed_counts).enumerate() {
        println!("{:<6} {:>8} {:>9}  {}", i + 1, r.len(), n_i, names[r.clone()].join(" "));
    }
    println!("missing cells: {}", table.data.missing_count());
    if let Some(o) = out {
        let summary = DetectSummary {
            monotone: true,
            n_samples: table.data.n_samples(),
            n_features: table.data.n_features(),
            k: ds.spec.k(),
            widths: ds.spec.widths(),
            observed_counts: ds.spec.observed_counts.clone(),
            missing_cells: table.data.missing_count(),
            feature_order: names,
        };
        write_report(o, &summary, format)?;
    }
    Ok(())
}

pub fn generate_missing_cmd(input: &InputArgs, missing: &[usize], out: &Path, seed: u64) -> Result<()> {
    check_output(out)?;
    let table = load(input)?;
    if !table.data.is_complete() {
        bail!("input already has {} missing cells", table.data.missing_count());
    }
    let masked = generate_monotone_missing(table.data.values().view(), missing, seed).context("masking")?;
    let ds = detect_monotone(&masked).context("pattern detection")?;
    let label = table
        .label_name
        .as_deref()
        .zip(table.labels.as_ref())
        .map(|(name, labels)| (name, labels.iter().map(String::as_str).collect()));
    write_table(
        out,
        &CsvOut {
            row_ids: None,
            label,
            names: &table.names,
            values: masked.values().view(),
            mask: Some(masked.mask().view()),
        },
    )?;
    println!("masked {} of {} cells, seed {seed}", masked.missing_count(), masked.n_samples() * masked.n_features());
    println!("k={} widths={} observed={}", ds.spec.k(), join(&ds.spec.widths()), join(&ds.spec.observed_counts));
    Ok(())
}

#[derive(Serialize)]
struct ReduceMeta {
    tool_version: &'static str,
    command: &'static str,
    n_samples: usize,
    n_features: usize,
    k: usize,
    widths: Vec<usize>,
    observed_counts: Vec<usize>,
    q: Vec<usize>,
    block_ev: Vec<f64>,
    mean_ev: f64,
    x_missing_cells: usize,
    z_star_missing_cells: usize,
    z_rows: usize,
    z_cols: usize,
    imputer: String,
    imputer_calls: usize,
    imputation_seconds: f64,
    feature_order: Vec<String>,
}

pub fn reduce_cmd(
    input: &InputArgs,
    imputer: &ImputerArgs,
    retention: &RetentionArgs,
    out: &Path,
    meta: Option<&Path>,
    format: Format,
) -> Result<()> {
    check_output(out)?;
    let meta = meta_path(out, meta, format);
    check_output(&meta)?;
    let kind = imputer.kind();
    validate_imputer(&kind)?;
    if let Some(t) = retention.ev_target {
        target_rule(t).validate()?;
    }
    let table = load(input)?;
    let ds = detect(&table)?;
    if let Some(q) = &retention.q {
        if q.len() != ds.spec.k() {
            bail!("--q lists {} dimensions but the data has {} blocks", q.len(), ds.spec.k());
        }
    }
    let mut stack = bpi_reduce(&ds, &retention.retention()).context("block PCA")?;
    let z = if stack.z_star.is_complete() {
        stack.z_star.values().clone()
    } else {
        let started = Instant::now();
        let z = kind.impute(&stack.z_star).context("imputation")?;
        stack.imputation_seconds = started.elapsed().as_secs_f64();
        stack.imputer_calls = 1;
        z
    };

    let q = stack.q();
    let names: Vec<String> =
        q.iter().enumerate().flat_map(|(i, &qi)| (1..=qi).map(move |j| format!("b{}_pc{j}", i + 1))).collect();
    write_table(
        out,
        &CsvOut {
            row_ids: Some(&ds.sample_perm),
            label: canonical_labels(&table, &ds),
            names: &names,
            values: z.view(),
            mask: None,
        },
    )?;

    let block_ev = stack.block_ev();
    let mean_ev = block_ev.iter().sum::<f64>() / block_ev.len() as f64;
    println!("{:<6} {:>8} {:>9} {:>4}  explained variance", "block", "width", "observed", "q");
    for (i, ((r, n_i), (qi, ev))) in
        ds.spec.feature_ranges.iter().zip(&ds.spec.observed_counts).zip(q.iter().zip(&block_ev)).enumerate()
    {
        println!("{:<6} {:>8} {:>9} {:>4}  {:.6}", i + 1, r.len(), n_i, qi, ev);
    }
    println!(
        "z: {} x {}, missing cells {} (x had {})",
        z.nrows(),
        z.ncols(),
        stack.z_star.missing_count(),
        table.data.missing_count()
    );
    println!("imputer {kind}, calls {}", stack.imputer_calls);
    println!("imputation seconds {:.6}", stack.imputation_seconds);

    let m = ReduceMeta {
        tool_version: VERSION,
        command: "reduce",
        n_samples: table.data.n_samples(),
        n_features: table.data.n_features(),
        k: ds.spec.k(),
        widths: ds.spec.widths(),
        observed_counts: ds.spec.observed_counts.clone(),
        q,
        block_ev,
        mean_ev,
        x_missing_cells: table.data.missing_count(),
        z_star_missing_cells: stack.z_star.missing_count(),
        z_rows: z.nrows(),
        z_cols: z.ncols(),
        imputer: kind.to_string(),
        imputer_calls: stack.imputer_calls,
        imputation_seconds: stack.imputation_seconds,
        feature_order: canonical_names(&table, &ds),
    };
    write_report(&meta, &m, format)
}

#[derive(Serialize)]
struct BaselineMeta {
    tool_version: &'static str,
    command: &'static str,
    n_samples: usize,
    n_features: usize,
    q: usize,
    retained_ev: f64,
    x_missing_cells: usize,
    imputer: String,
    imputer_calls: usize,
    imputation_seconds: f64,
    pca_seconds: f64,
    feature_order: Vec<String>,
}

#[allow(clippy::too_many_arguments)]
pub fn baseline_cmd(
    input: &InputArgs,
    imputer: &ImputerArgs,
    q: Option<usize>,
    ev_target: Option<f64>,
    out: &Path,
    meta: Option<&Path>,
    format: Format,
) -> Result<()> {
    check_output(out)?;
    let meta = meta_path(out, meta, format);
    check_output(&meta)?;
    let kind = imputer.kind();
    validate_imputer(&kind)?;
    let rule = match (q, ev_target) {
        (Some(q), _) => RetentionRule::FixedDim(q),
        (None, Some(t)) => target_rule(t),
        (None, None) => RetentionRule::default(),
    };
    rule.validate()?;
    let table = load(input)?;
    let ds = detect(&table)?;
    let base = baseline_with(&ds, &kind, rule, PcaOptions::default()).context("imputation and PCA")?;
    let q = base.model.n_components();
    let names: Vec<String> = (1..=q).map(|j| format!("pc{j}")).collect();
    write_table(
        out,
        &CsvOut {
            row_ids: Some(&ds.sample_perm),
            label: canonical_labels(&table, &ds),
            names: &names,
            values: base.scores.view(),
            mask: None,
        },
    )?;
    println!("scores: {} x {q}, explained variance {:.6}", base.scores.nrows(), base.model.retained_ev());
    println!("imputer {kind}, calls {}", base.imputer_calls);
    println!("imputation seconds {:.6}, pca seconds {:.6}", base.imputation_seconds, base.pca_seconds);
    let m = BaselineMeta {
        tool_version: VERSION,
        command: "baseline",
        n_samples: table.data.n_samples(),
        n_features: table.data.n_features(),
        q,
        retained_ev: base.model.retained_ev(),
        x_missing_cells: table.data.missing_count(),
        imputer: kind.to_string(),
        imputer_calls: base.imputer_calls,
        imputation_seconds: base.imputation_seconds,
        pca_seconds: base.pca_seconds,
        feature_order: canonical_names(&table, &ds),
    };
    write_report(&meta, &m, format)
}

fn parse_synthetic(spec: &str) -> Result<Array2<f64>> {
    let (kind, arg) =
        spec.split_once(':').ok_or_else(|| anyhow!("expected identity:P or diag:a,b,..., got {spec:?}"))?;
    match kind {
        "identity" => {
            let p: usize = arg.trim().parse().with_context(|| format!("bad dimension {arg:?}"))?;
            if p == 0 {
                bail!("dimension must be positive");
            }
            Ok(Array2::eye(p))
        }
        "diag" => {
            let d = arg
                .split(',')
                .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad diagonal entry {v:?}")))
                .collect::<Result<Vec<_>>>()?;
            Ok(Array2::from_diag(&Array1::from(d)))
        }
        _ => bail!("unknown synthetic covariance {kind:?}; use identity or diag"),
    }
}

pub struct BoundsArgs<'a> {
    pub input: Option<&'a Path>,
    pub label_col: Option<&'a str>,
    pub synthetic: Option<&'a str>,
    pub blocks: Option<&'a [usize]>,
    pub q: &'a [usize],
    pub mode: BoundsMode,
    pub truth: Option<&'a Path>,
    pub out: Option<&'a Path>,
}

pub fn bounds_cmd(a: &BoundsArgs<'_>, format: Format) -> Result<()> {
    if let Some(o) = a.out {
        check_output(o)?;
    }
    let (s, detected) = match (a.synthetic, a.input) {
        (Some(spec), _) => (parse_synthetic(spec).context("synthetic covariance")?, None),
        (None, Some(path)) => {
            check_input(path)?;
            let table = read_table(path, a.label_col).context("reading input")?;
            let ds = detect(&table)?;
            let source = match a.mode {
                BoundsMode::CompleteCase => None,
                BoundsMode::GroundTruth => {
                    let truth = a.truth.ok_or_else(|| anyhow!("--mode ground-truth needs --truth"))?;
                    check_input(truth)?;
                    let t = read_table(truth, a.label_col).context("reading ground truth")?;
                    if !t.data.is_complete() {
                        bail!("ground truth {} has missing cells", truth.display());
                    }
                    Some(t.data.values().clone())
                }
            };
            let source = match &source {
                Some(x) => CovarianceSource::GroundTruth(x.view()),
                None => CovarianceSource::CompleteCase,
            };
            let s = estimate_covariance_for_bounds(&ds, source).context("covariance")?;
            (s, Some(ds.spec.widths()))
        }
        (None, None) => bail!("give a data file or --synthetic"),
    };
    let widths = match (a.blocks, detected) {
        (Some(b), _) => b.to_vec(),
        (None, Some(w)) => w,
        (None, None) => bail!("--blocks is required with --synthetic"),
    };
    if widths.iter().sum::<usize>() != s.nrows() || widths.contains(&0) {
        bail!("block widths {} do not partition {} features", join(&widths), s.nrows());
    }
    if a.q.len() != widths.len() {
        bail!("--q lists {} dimensions for {} blocks", a.q.len(), widths.len());
    }
    let report = ev_bounds(s.view(), &blocks_from_widths(&widths), a.q).context("bounds")?;
    print_bounds(&report);
    if let Some(o) = a.out {
        write_report(o, &report, format)?;
    }
    Ok(())
}

fn print_bounds(r: &EvBoundsReport) {
    println!("blocks {}  q {}", join(&r.widths), join(&r.q));
    println!("{:<16} {}", "lower bound", fmt_f64(r.lower_bound));
    println!("{:<16} {}", "mean EV", fmt_f64(r.mean_ev));
    println!("{:<16} {}", "upper bound", fmt_f64(r.upper_bound));
    println!("{:<16} {}", "total EV at Σq", fmt_f64(r.total_ev_q));
    println!("{:<16} {}", format!("lambda_{}", r.lower_index), fmt_f64(r.lambda_lower_index));
    println!("{:<16} {}", format!("lambda_{}", r.p), fmt_f64(r.lambda_p));
    println!("{:<16} {}", "interlacing", if r.interlacing_ok { "ok" } else { "VIOLATED" });
    println!("{:<16} {}", "trace identity", if r.trace_ok { "ok" } else { "VIOLATED" });
    if !r.applicable {
        println!("bound not-applicable: a block keeps all of its components");
    }
}

/// Maps label strings to `0..classes`, numerically when every label is an
/// integer and lexically otherwise.
fn encode_labels(raw: &[String]) -> Vec<usize> {
    let numeric: Option<Vec<i64>> = raw.iter().map(|l| l.parse().ok()).collect();
    match numeric {
        Some(vals) => {
            let uniq: Vec<i64> = vals.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
            vals.iter().map(|v| uniq.binary_search(v).expect("present")).collect()
        }
        None => {
            let uniq: Vec<&String> = raw.iter().collect::<BTreeSet<_>>().into_iter().collect();
            raw.iter().map(|v| uniq.binary_search(&v).expect("present")).collect()
        }
    }
}

fn load_bench_data(cfg: &ExperimentConfig, config_path: &Path, label_col: Option<&str>) -> Result<Option<LabeledData>> {
    let DatasetSource::Csv { path, label_column } = &cfg.dataset else {
        return Ok(None);
    };
    let path =
        if path.is_relative() { config_path.parent().unwrap_or(Path::new(".")).join(path) } else { path.clone() };
    let label = label_col
        .or(label_column.as_deref())
        .ok_or_else(|| anyhow!("a CSV dataset needs a label column (--label-col or label_column)"))?;
    check_input(&path)?;
    let table = read_table(&path, Some(label)).context("reading dataset")?;
    if !table.data.is_complete() {
        bail!("benchmark dataset {} must be complete; the harness applies its own masking", path.display());
    }
    let labels = encode_labels(table.labels.as_deref().unwrap_or_default());
    Ok(Some(LabeledData { x: table.data.values().clone(), labels }))
}

pub fn bench_cmd(
    config: &Path,
    out: Option<&Path>,
    long: Option<&Path>,
    label_col: Option<&str>,
    seed: Option<u64>,
    format: Format,
) -> Result<()> {
    check_input(config)?;
    let long = long.map(Path::to_path_buf).or_else(|| out.map(|o| o.with_extension("long.csv")));
    for p in out.into_iter().chain(long.as_deref()) {
        check_output(p)?;
    }
    let text = fs::read_to_string(config).with_context(|| format!("cannot read {}", config.display()))?;
    let mut cfg: ExperimentConfig = toml::from_str(&text).context("parsing config")?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let data = load_bench_data(&cfg, config, label_col)?;
    let report = run_experiment_on(&cfg, data.as_ref()).context("experiment")?;
    print_bench(&report);
    if let Some(o) = out {
        write_report(o, &report, format)?;
    }
    if let Some(l) = long {
        write_long(&l, &report)?;
    }
    Ok(())
}

fn print_bench(r: &ExperimentReport) {
    println!("{}: {} repeats, imputer {}, classifier {}", r.name, r.repeats, r.imputer, r.classifier);
    println!(
        "train {} / test {}; block widths {} observed {} q {}",
        r.n_train,
        r.n_test,
        join(&r.block_widths),
        join(&r.block_observed),
        join(&r.block_q)
    );
    println!("{:<9} {:>20} {:>6}", "arm", "accuracy", "dims");
    let arms = [("baseline", &r.baseline), ("bpi", &r.bpi)];
    for (name, arm) in arms {
        println!(
            "{:<9} {:>20} {:>6}",
            name,
            format!("{:.4} ± {:.4}", arm.accuracy_mean, arm.accuracy_std),
            arm.dims.first().copied().unwrap_or(0)
        );
    }
    for (name, arm) in arms {
        println!(
            "{name:<9} imputation seconds {:.4} ± {:.4} (median {:.4})",
            arm.time_mean_seconds,
            arm.time_std_seconds,
            arm.median_seconds()
        );
    }
    println!("median imputation seconds ratio (bpi / baseline): {:.4}", r.median_time_ratio());
    if let Some(b) = &r.bounds {
        println!(
            "EV bounds (first repeat, complete training data): {:.4} <= {:.4} <= {:.4}{}",
            b.lower_bound,
            b.mean_ev,
            b.upper_bound,
            if b.applicable { "" } else { " (not applicable)" }
        );
    }
    for note in &r.notes {
        println!("note: {note}");
    }
}

fn write_long(path: &Path, r: &ExperimentReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(["arm", "repeat", "metric", "value"])?;
    for row in r.long_rows() {
        w.write_record([row.arm.to_string(), row.repeat.to_string(), row.metric.to_string(), fmt_f64(row.value)])?;
    }
    w.flush()?;
    Ok(())
}
