//! Open-world recognition pipeline.
//!
//! A shared autoencoder learns an embedding space on a labeled source
//! domain (triplet + reconstruction objectives) and keeps adapting online,
//! without labels, on a shifted target domain. Query/candidate encounters
//! are summarized by scale-free distance-shape features (coefficients of
//! variation of anchor-positive and anchor-negative distances), and a pair
//! of logistic evaluators — one per domain — decides whether a query
//! belongs to its nearest registered identity or must be enrolled as a new
//! one. Confidently scored target encounters flow back into both
//! evaluators, so knowledge moves across the domain gap in both directions.
//!
//! Layering: numeric kernels return `Result` at API boundaries and use
//! debug-style `assert!` only for internal shape invariants that indicate
//! caller bugs, never data-dependent failures.

pub mod commands;
pub mod config;
pub mod data;
pub mod engine;
pub mod error;
pub mod evaluator;
pub mod meta;
pub mod neural;
pub mod objectives;
pub mod report;
pub mod train;
pub mod types;

pub use error::{Error, Result};
pub use types::{Domain, Embedding, Split};
