//! Error type shared by every module in the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("more workers than rows: {workers} workers for {rows} rows")]
    MoreWorkersThanRows { workers: usize, rows: usize },

    #[error("worker group must have at least one worker")]
    EmptyWorkerGroup,

    #[error("mismatched buffer lengths across ranks in collective")]
    CollectiveLengthMismatch,

    #[error("collective root {root} out of range for {workers} workers")]
    RootOutOfRange { root: usize, workers: usize },

    #[error("partition mismatch: operand partitioned for {expected} workers, group has {actual}")]
    PartitionMismatch { expected: usize, actual: usize },

    #[error("non-finite feature in column {col}")]
    NonFiniteFeature { col: usize },

    #[error("degenerate row degree at row {row}")]
    DegenerateRowDegree { row: usize },

    #[error("rank-deficient landmark kernel")]
    RankDeficientKernel,

    #[error("sample count {requested} exceeds population {available}")]
    SampleTooLarge { requested: usize, available: usize },

    #[error("propagation diverged")]
    PropagationDiverged,

    #[error("Woodbury solve failed")]
    WoodburySolveFailed,

    #[error("dense LP refused: {rows} rows exceeds the {limit}-row guard")]
    DenseLpRefused { rows: usize, limit: usize },

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("binary tasks only: cannot reduce {classes} classes to two")]
    BinaryTasksOnly { classes: usize },

    #[error("impossible class coverage: no split leaves a labeled sample of each class")]
    ImpossibleClassCoverage,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("{phase}: {source}")]
    Phase {
        phase: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
