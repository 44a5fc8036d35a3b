//! Text-to-SQL orchestration engine.
//!
//! The pipeline runs in four stages over a single-file SQLite database:
//!
//! 1. [`mining`] introspects the database and produces a [`SchemaCard`] with
//!    keys, inferred foreign keys, one-to-many relations and enum mappings.
//! 2. [`linking`] asks a model which schema items a question needs, parses
//!    the sectioned answer into a [`LinkedSchema`], then calibrates it.
//! 3. [`sqlgen`] renders a generation prompt, collects candidate SQL,
//!    repairs constant mismatches and re-prompts on execution errors.
//! 4. [`critic`] retrieves hindsight exemplars from a knowledge base and
//!    asks a model to pick the best candidate.
//!
//! Every model call goes through [`gateway::Gateway`], which has a remote
//! HTTP backend and a deterministic scripted backend for tests.

pub mod canonical;
pub mod critic;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod gateway;
pub mod linking;
pub mod mining;
pub mod pipeline;
pub mod schema;
pub mod similarity;
pub mod sql;
pub mod sqlgen;

pub use error::{Error, Result};
pub use linking::LinkedSchema;
pub use pipeline::{AblationFlags, Pipeline, PipelineConfig, QueryTrace};
pub use schema::{ColumnRef, SchemaCard};
pub use sql::{Database, ResultTable, SqlValue};
