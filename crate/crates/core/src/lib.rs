//! Collaborative Einstein-puzzle tabletop environment.
//!
//! Two players share a table with four destination bins. Each holds part of
//! a constraint set that pins a unique goal configuration, and they have to
//! communicate (or guess) to place every object. The crate covers puzzle
//! generation, the turn engine, knowledge expansion, action verifiers, an
//! optimal planner, scripted agents, evaluation metrics, dataset export and
//! a session manager for human play.

pub mod agents;
pub mod candidates;
pub mod domain;
pub mod engine;
pub mod error;
pub mod harness;
pub mod knowledge;
pub mod planner;
pub mod policy;
pub mod protocol;
pub mod puzzle;
pub mod session;
pub mod sft;
pub mod verifier;

/// Largest supported object count; enumeration is 4^n.
pub const MAX_OBJECTS: usize = 8;

/// Default per-episode step budget.
pub const DEFAULT_STEP_LIMIT: u32 = 30;

pub use domain::{Action, BinId, BinSet, Constraint, ObjectId, Objects, PlayerId, Relation};
pub use engine::{ActionSpaceConfig, GameState, GameStatus, Outcome, TurnRecord};
pub use knowledge::{ClosureResult, KnowledgeGraph};
pub use puzzle::{generate_puzzle, PuzzleInstance};
pub use verifier::{ErrorLabel, VerifierStack};
