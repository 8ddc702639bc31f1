//! Incremental exact model counting.
//!
//! A [`Session`] holds an evolving CNF formula that is edited by atomic
//! clause/variable operations and counted at checkpoints. The counter is a
//! DPLL-style search with component decomposition and a component cache that
//! survives across checkpoints, optionally keyed by a symmetry-reducing
//! canonical renaming.

pub mod argumentation;
pub mod cache;
pub mod cli;
pub mod dimacs;
pub mod engine;
pub mod formula;
pub mod heuristics;
pub mod session;
pub mod softcore;

pub use cache::{CacheKey, CacheMode, ComponentCache};
pub use dimacs::{parse_dimacs, Cnf};
pub use engine::{CountResult, Counter, EngineConfig, EngineError, SearchStats};
pub use formula::{brute_force_count, Clause, FormulaState, Lit, Var};
pub use heuristics::{Heuristic, TdMode};
pub use session::{Session, SessionError, UpdateBatch, UpdateOp};
