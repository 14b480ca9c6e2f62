use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("estimation failed: {0}")]
    Estimation(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("record {0} has no swap annotation")]
    MissingAnnotation(usize),
    #[error("relevance grade {0} outside 0..=4")]
    GradeOutOfRange(i64),
    #[error("partition {0} has no records")]
    EmptyPartition(u32),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
}
