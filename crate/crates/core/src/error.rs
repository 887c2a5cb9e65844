use thiserror::Error;

use crate::domain::BinId;
use crate::engine::Violation;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("`{0}` is not a destination bin")]
    InvalidBin(BinId),
    #[error("a pair rule needs two distinct objects")]
    SelfPair,
    #[error("invalid object name `{0}`")]
    BadObjectName(String),
    #[error("{0} objects exceeds the supported maximum")]
    TooManyObjects(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unknown bin `{0}`")]
    UnknownBin(String),
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error("`{0}` is not a destination bin")]
    NotDestination(BinId),
    #[error("malformed text `{0}`")]
    Malformed(String),
    #[error("expected exactly one <ACTION> block, found {0}")]
    ActionBlocks(usize),
}

#[derive(Debug, Error)]
pub enum PuzzleError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{0} objects exceeds the enumeration cap")]
    CapacityExceeded(usize),
    #[error("no split leaves both players unable to solve alone")]
    SplitInfeasible,
    #[error("puzzle file is inconsistent: {0}")]
    Invalid(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InferenceError {
    #[error("knowledge is inconsistent")]
    InconsistentKnowledge,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("it is not {0}'s turn")]
    NotYourTurn(crate::domain::PlayerId),
    #[error("the game is over")]
    GameOver,
    #[error("illegal action: {0:?}")]
    Illegal(Vec<Violation>),
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("no solving trajectory within {0} steps")]
    Unsolvable(u32),
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("policy transport failed: {0}")]
    Transport(String),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("no valid episode records")]
    EmptyBatch,
    #[error("trajectory does not replay: {0}")]
    Replay(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Puzzle(#[from] PuzzleError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("not the participant's turn")]
    TurnViolation,
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("action rejected: {0:?}")]
    Illegal(Vec<Violation>),
    #[error("session log is corrupt: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
