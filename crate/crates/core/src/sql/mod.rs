//! SQLite access, result tables, and SQL AST helpers shared by the stages.

mod analyze;
mod exec;

pub use analyze::{
    extract_linking, first_statement, has_top_level_order_by, parse_query, statement_text,
    SqlFacts,
};
pub use exec::{Database, ExecutionOutcome, ResultTable, SqlValue, DEFAULT_STATEMENT_TIMEOUT};

pub(crate) use analyze::{for_each_select, is_comparison, shallow_exprs, span_range};
