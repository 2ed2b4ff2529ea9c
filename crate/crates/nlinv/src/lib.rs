//! Nonlinear loop invariant inference from program traces.
//!
//! The pipeline has three stages, run in a counterexample-guided loop:
//!
//! 1. **Trace generation** ([`dsl`]): parse a single-loop program in a small
//!    C-like DSL, execute it with exact rational arithmetic over a set of
//!    initial valuations, and log the program state at every guard check.
//! 2. **Formula learning** ([`features`], [`dlogic`], [`gcln`]): expand the
//!    logged states into a monomial term basis, normalize, and fit a gated
//!    continuous logic network — a differentiable relaxation of an SMT
//!    formula in conjunctive normal form — by gradient descent. Inequality
//!    bounds are fit separately with the piecewise biased quadratic unit
//!    (PBQU) activation, which rewards tight bounds.
//! 3. **Extraction and checking** ([`extract`], [`checker`]): read an SMT
//!    formula back out of the trained network, round its coefficients to
//!    small rationals, drop candidates that do not fit the data exactly, and
//!    validate the three Hoare conditions with an external SMT solver.
//!    Counterexamples are replayed, appended to the training data, and the
//!    loop retries with a ladder of adjustments (lower dropout, then
//!    fractional sampling of initial values).
//!
//! The [`pipeline`] module ties the stages together behind the `nlinv`
//! command line tool; see the crate examples for guided tours of each stage.

pub mod checker;
pub mod config;
pub mod dlogic;
pub mod dsl;
pub mod extract;
pub mod features;
pub mod gcln;
pub mod pipeline;
pub mod poly;
pub mod rat;

pub use checker::{CondStatus, VerificationOutcome, VerificationProblem};
pub use config::RunConfig;
pub use dsl::{LoopProgram, Trace};
pub use extract::{Atom, Formula, Rel};
pub use features::{DropoutMask, SampleMatrix, Term};
pub use gcln::{GclnModel, TrainConfig, TrainReport};

/// Top-level error type; each stage keeps its own error enum and converts.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse: {0}")]
    Parse(#[from] dsl::ParseError),
    #[error("eval: {0}")]
    Eval(#[from] dsl::EvalError),
    #[error("features: {0}")]
    Features(#[from] features::FeatureError),
    #[error("train: {0}")]
    Train(#[from] gcln::TrainError),
    #[error("checker: {0}")]
    Checker(#[from] checker::CheckerError),
    #[error("config: {0}")]
    Config(#[from] config::ConfigError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, Error>;
