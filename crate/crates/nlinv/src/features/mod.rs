//! Candidate term basis construction, growth-rate filtering, row
//! normalization, and dropout masks.
//!
//! The basis is every monomial over the program variables (plus frozen
//! initial-value variables under fractional sampling) up to a maximum total
//! degree, in graded lexicographic order, followed by one term per external
//! function and ordered variable pair. The growth-rate filter discards
//! monomials that grow strictly faster than every program variable along the
//! longest trace — such terms cannot appear in a linear relation — but never
//! discards a term that participates in an exact linear relation of the raw
//! matrix (established by an exact rank computation).

mod dropout;
mod filter;
mod matrix;
mod terms;

pub use dropout::{enumerate_inequality_masks, make_dropout_masks, DropoutMask};
pub use filter::{growth_rate_filter, rank_exact, FilterConfig, FilterOutcome};
pub use matrix::{build_raw_matrix, normalize_rows, RawMatrix, SampleMatrix};
pub use terms::{enumerate_terms, Term};

#[derive(Debug, Clone, thiserror::Error)]
pub enum FeatureError {
    #[error("term basis is empty")]
    EmptyBasis,
    #[error("no trace rows to build a matrix from")]
    NoRows,
    #[error("evaluating term `{term}`: {source}")]
    TermEval {
        term: String,
        source: crate::dsl::EvalError,
    },
}
