use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("insufficient samples: {context} has {got}, need at least {need}")]
    InsufficientSamples { context: String, got: usize, need: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("covariance has a negative eigenvalue {value:e} beyond tolerance")]
    NegativeEigenvalue { value: f64 },

    #[error("eigenvalue iteration did not converge after {0} sweeps")]
    NoConvergence(usize),

    #[error("index error: {0}")]
    Index(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing pattern is not monotone: first violating cell is (sample {sample}, feature {feature})")]
    NotMonotone { sample: usize, feature: usize },

    #[error("sample {0} has no observed features")]
    EmptySample(usize),

    #[error("feature {0} has no observed samples")]
    EmptyFeature(usize),

    #[error("column {0} is entirely missing")]
    AllMissingColumn(usize),

    #[error("block sizes are not non-increasing: {0}")]
    Order(String),

    #[error("block {block}: {source}")]
    Block {
        block: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{arm} arm failed during {stage}: {source}")]
    Arm {
        arm: String,
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn in_block(self, block: usize) -> Error {
        Error::Block { block, source: Box::new(self) }
    }

    pub(crate) fn in_arm(self, arm: &str, stage: &str) -> Error {
        Error::Arm { arm: arm.to_string(), stage: stage.to_string(), source: Box::new(self) }
    }
}
