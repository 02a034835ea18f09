use std::path::PathBuf;

use bpi_core::impute::{ImputerKind, Shrinkage, SoftImputeParams};
use bpi_core::pca::RetentionRule;
use bpi_core::pipeline::BlockRetention;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "bpi", version, about = "Blockwise PCA imputation for monotone missing data")]
pub struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Format of structured report files.
    #[arg(long, global = true, value_enum, default_value_t = Format::Toml)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// Nested plain-text key/value file.
    Toml,
    /// Long `key,value` rows.
    Csv,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Toml => "toml",
            Format::Csv => "csv",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check whether the missing pattern is monotone and list its blocks.
    Detect {
        #[command(flatten)]
        input: InputArgs,
        /// Structured summary file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mask trailing features of random sample partitions.
    GenerateMissing {
        #[command(flatten)]
        input: InputArgs,
        /// Features dropped by each successive partition, e.g. 75,150,225.
        #[arg(long, value_delimiter = ',', required = true)]
        missing: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Blockwise PCA, stack the scores, impute the stack.
    Reduce {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        imputer: ImputerArgs,
        #[command(flatten)]
        retention: RetentionArgs,
        /// Reduced data (CSV).
        #[arg(long)]
        out: PathBuf,
        /// Metadata file; defaults to the output path with a `.meta` extension.
        #[arg(long)]
        meta: Option<PathBuf>,
    },
    /// Impute the full matrix, then one PCA.
    Baseline {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        imputer: ImputerArgs,
        /// Number of components to keep.
        #[arg(long, conflicts_with = "ev_target")]
        q: Option<usize>,
        /// Smallest dimension reaching this explained variance.
        #[arg(long)]
        ev_target: Option<f64>,
        /// Scores (CSV).
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        meta: Option<PathBuf>,
    },
    /// Explained-variance bounds for a blockwise reduction.
    Bounds {
        /// Data file; omit when using --synthetic.
        #[arg(required_unless_present = "synthetic", conflicts_with = "synthetic")]
        input: Option<PathBuf>,
        #[arg(long)]
        label_col: Option<String>,
        /// Covariance given directly: `identity:P` or `diag:a,b,...`.
        #[arg(long)]
        synthetic: Option<String>,
        /// Block widths over the (canonical) feature order.
        #[arg(long, value_delimiter = ',')]
        blocks: Option<Vec<usize>>,
        /// Retained dimension per block.
        #[arg(long, value_delimiter = ',', required = true)]
        q: Vec<usize>,
        /// Covariance source for data files.
        #[arg(long, value_enum, default_value_t = BoundsMode::CompleteCase)]
        mode: BoundsMode,
        /// Complete pre-masking data for --mode ground-truth.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a benchmark described by a TOML config.
    Bench {
        config: PathBuf,
        /// Report file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Long-format `arm,repeat,metric,value` CSV; defaults next to the report.
        #[arg(long)]
        long: Option<PathBuf>,
        /// Label column of a CSV dataset (overrides the config).
        #[arg(long)]
        label_col: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundsMode {
    /// Rows observed on every feature.
    CompleteCase,
    /// Covariance of the --truth file.
    GroundTruth,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// CSV with a header row; empty fields and `NaN` are missing.
    pub input: PathBuf,
    /// Column holding labels; passed through untouched.
    #[arg(long)]
    pub label_col: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ImputerChoice {
    Mean,
    Knn,
    SoftImpute,
}

#[derive(Debug, Args)]
pub struct ImputerArgs {
    #[arg(long, value_enum, default_value_t = ImputerChoice::Mean)]
    pub imputer: ImputerChoice,
    /// Neighbours for the KNN imputer.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// SoftImpute shrinkage λ.
    #[arg(long, conflicts_with = "lambda_frac")]
    pub lambda: Option<f64>,
    /// SoftImpute shrinkage as a fraction of the largest singular value of
    /// the mean-filled matrix (default 0.1).
    #[arg(long)]
    pub lambda_frac: Option<f64>,
    /// SoftImpute rank cap.
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
}

impl ImputerArgs {
    pub fn kind(&self) -> ImputerKind {
        match self.imputer {
            ImputerChoice::Mean => ImputerKind::Mean,
            ImputerChoice::Knn => ImputerKind::Knn { k: self.k },
            ImputerChoice::SoftImpute => {
                let shrinkage = match (self.lambda, self.lambda_frac) {
                    (Some(l), _) => Shrinkage::Absolute(l),
                    (None, Some(f)) => Shrinkage::Relative(f),
                    (None, None) => Shrinkage::Relative(0.1),
                };
                ImputerKind::SoftImpute(SoftImputeParams {
                    shrinkage,
                    rank: self.rank,
                    tol: self.tol,
                    max_iters: self.max_iters,
                })
            }
        }
    }
}

#[derive(Debug, Args)]
pub struct RetentionArgs {
    /// Fixed dimension per block, e.g. 2,1,1.
    #[arg(long, value_delimiter = ',', conflicts_with = "ev_target")]
    pub q: Option<Vec<usize>>,
    /// Per-block explained-variance target; 1.0 keeps every component.
    #[arg(long)]
    pub ev_target: Option<f64>,
}

impl RetentionArgs {
    pub fn retention(&self) -> BlockRetention {
        match (&self.q, self.ev_target) {
            (Some(q), _) => BlockRetention::fixed(q),
            (None, Some(t)) => BlockRetention::exact(target_rule(t)),
            (None, None) => BlockRetention::default(),
        }
    }
}

pub fn target_rule(t: f64) -> RetentionRule {
    if t == 1.0 {
        RetentionRule::KeepAll
    } else {
        RetentionRule::VarianceTarget(t)
    }
}
