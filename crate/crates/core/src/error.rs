use thiserror::Error;

use crate::matgrp::Mat2;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("hensel precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("hensel lifting cannot start from the seed: {0}")]
    NoProgress(String),
    #[error("level {0} is out of range (supported 1..={max})", max = crate::matgrp::MAX_LEVEL)]
    BadLevel(u32),
    #[error("level mismatch: {0} vs {1}")]
    LevelMismatch(u8, u8),
    #[error("matrix {0} is not invertible")]
    NotInvertible(Mat2),
    #[error("scalar {0} is even")]
    EvenScalar(i64),
    #[error("invalid character: {0}")]
    InvalidCharacter(String),
    #[error("invalid discriminant {0}")]
    InvalidDiscriminant(i64),
    #[error("unknown group name `{0}`")]
    UnknownName(String),
    #[error("not stabilized: {0}")]
    NotStabilized(String),
    #[error("subgroup is not stable under the group: {0}")]
    NotStable(String),
    #[error("level exhausted: {0}")]
    LevelExhausted(String),
    #[error("Kenku bound violated: {0} cyclic 2-power subgroups")]
    KenkuViolation(usize),
    #[error("parse error: {0}")]
    ParseError(String),
    #[error("schema error: {0}")]
    SchemaError(String),
    #[error("refused: {0}")]
    TooLarge(String),
    #[error("io error: {0}")]
    Io(String),
}
