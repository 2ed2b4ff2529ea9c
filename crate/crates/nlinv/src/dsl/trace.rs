use super::ast::LoopProgram;
use super::interp::{eval_bool, EvalError, Valuation};
use crate::rat::{fmt_rat, Rat};
use std::collections::BTreeMap;

/// Marker for a trace that stopped early because the body hit a runtime
/// error (non-integer external argument, division by zero).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceAbort {
    /// Index of the last logged row before the abort.
    pub row: usize,
    pub message: String,
}

/// One execution of a program: the state at every guard evaluation,
/// including the final failing check.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub program_name: String,
    pub init_values: Valuation,
    pub rows: Vec<Valuation>,
    pub truncated: bool,
    pub error: Option<TraceAbort>,
    pub fractional: bool,
    /// Frozen initial values of relaxed variables, keyed by the frozen
    /// column name (`y` -> `y0`). Empty for non-fractional traces.
    pub frozen_inits: BTreeMap<String, Rat>,
}

impl Trace {
    /// Row `i` extended with the frozen initial-value columns.
    pub fn augmented_row(&self, i: usize) -> Valuation {
        let mut row = self.rows[i].clone();
        for (name, value) in &self.frozen_inits {
            row.insert(name.clone(), value.clone());
        }
        row
    }

    /// Checks that the trace replays exactly: every row satisfies the guard
    /// except possibly the last, and each body execution reproduces the next
    /// row under exact rational arithmetic.
    pub fn verify_replay(&self, program: &LoopProgram) -> Result<bool, EvalError> {
        for i in 0..self.rows.len().saturating_sub(1) {
            if !eval_bool(&program.guard, &self.rows[i])? {
                return Ok(false);
            }
            let next = program.step_body(&self.rows[i])?;
            for var in &program.vars {
                if next.get(var) != self.rows[i + 1].get(var) {
                    return Ok(false);
                }
            }
        }
        if let Some(last) = self.rows.last() {
            if !self.truncated && self.error.is_none() && eval_bool(&program.guard, last)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// CSV dump: header of variable names (plus frozen-value columns for
    /// fractional traces), one row per logged state, exact rationals printed
    /// as `p/q`. Truncation and abort markers follow as `#` comment lines.
    pub fn to_csv(&self, program: &LoopProgram) -> String {
        let frozen_cols: Vec<&String> = self.frozen_inits.keys().collect();
        let mut header: Vec<String> = program.vars.clone();
        header.extend(frozen_cols.iter().map(|s| s.to_string()));
        let mut out = header.join(",");
        out.push('\n');
        for i in 0..self.rows.len() {
            let row = self.augmented_row(i);
            let line: Vec<String> = header
                .iter()
                .map(|v| row.get(v).map(fmt_rat).unwrap_or_default())
                .collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        if self.truncated {
            out.push_str("# truncated at max-iters\n");
        }
        if let Some(abort) = &self.error {
            out.push_str(&format!("# error at row {}: {}\n", abort.row, abort.message));
        }
        out
    }
}
