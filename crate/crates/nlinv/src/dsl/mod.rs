//! Parsing, interpretation, and instrumentation of single-loop programs.
//!
//! A `.loop` file holds one program in a small C-like language: straight-line
//! initialization assignments, exactly one `while` loop whose body is again
//! straight-line (conditionals only as ternary expressions inside
//! assignments), and `//pre:` / `//post:` annotation comments carrying the
//! specification. All arithmetic is exact rational arithmetic, so traces
//! replay bit-for-bit and extracted invariants can be filtered against them
//! without tolerance fudging.
//!
//! Grammar sketch (see the README for the full reference):
//!
//! ```text
//! program    := (annotation | statement)* while_loop ("return" ident ";"?)? annotation*
//! statement  := ident ("=" | "+=" | "-=" | "*=") expr ";"
//! while_loop := "while" "(" bexpr ")" "{" statement* "}"
//! expr       := "(" bexpr ")" "?" expr ":" expr | aexpr
//! aexpr      := ["-"] term (("+"|"-"|"*"|"/") term)*, with "^" natural powers
//! bexpr      := relations over aexpr combined with "&&", "||", "!"
//! annotation := "//pre:" bexpr | "//post:" bexpr | "//name:" ident
//! ```
//!
//! Variables read but never assigned are the program's parameters. External
//! functions are drawn from a fixed binary table (`gcd`, `mod`), defined on
//! integer arguments only.

mod ast;
mod interp;
mod lexer;
mod parser;
mod trace;

pub use ast::{AssignOp, BoolExpr, Expr, ExternalFn, ExternalKind, LoopProgram, RelOp, Stmt};
pub(crate) use ast::{collect_calls_bool, collect_calls_expr};
pub use interp::{
    enumerate_param_sets, eval_bool, eval_expr, fractional_runs, grid_points, EvalError,
    Valuation,
};
pub use parser::{parse_program, parse_program_named, ParseError};
pub use trace::{Trace, TraceAbort};
