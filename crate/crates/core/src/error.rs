use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the library.
///
/// Variants carry enough context (task id, row, subset) to locate the
/// offending input without re-running the computation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("task {task_id}: {detail}")]
    DimensionMismatch { task_id: u32, detail: String },

    #[error("task {task_id}, row {row}: non-finite value")]
    NonFiniteValue { task_id: u32, row: usize },

    #[error("duplicate task id {task_id}")]
    DuplicateTaskId { task_id: u32 },

    #[error("task {task_id} has {rows} labeled rows, need at least {needed}")]
    TaskTooSmall { task_id: u32, rows: usize, needed: usize },

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("no labeled data available")]
    NoLabeledData,

    #[error("task {task_id} has no targets")]
    UnlabeledTask { task_id: u32 },

    #[error("invalid screening size k={k} for p={p}")]
    InvalidK { k: usize, p: usize },

    #[error("too few samples: have {have}, need at least {need}")]
    TooFewSamples { have: usize, need: usize },

    #[error("residual sample contains a single task")]
    SingleTask,

    #[error("subset enumeration too large: p={p} (set a maximum subset size)")]
    EnumerationTooLarge { p: usize },

    #[error("test task has {rows} labeled rows, need at least {needed}")]
    TestTaskTooSmall { rows: usize, needed: usize },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("no test task")]
    NoTestTask,

    #[error("no positive definite completion exists: {0}")]
    InfeasibleConstraints(String),

    #[error("optimal-coefficient system matrix is singular")]
    SingularM,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("closed-form denominator is zero")]
    DegenerateDenominator,
}
