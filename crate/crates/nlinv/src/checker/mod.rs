//! Verification back end: SMT-LIB2 script emission for the three Hoare
//! conditions, the external solver process driver, and the
//! counterexample-guided retraining loop.

mod cegis;
mod smtlib;
mod solver;

pub use cegis::{cegis_loop, AuditEvent, AuditLog, CegisOutcome, InferStatus};
pub use smtlib::{emit_smtlib, formula_to_smt, Condition, EmittedScripts, GcdMode};
pub use solver::{
    discover_solver, run_solver, run_solver_batch, SatStatus, SolverCmd, SolverReply,
};

use crate::dsl::{EvalError, LoopProgram, Valuation};
use crate::extract::Formula;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CheckerError {
    #[error("no SMT solver available (set --solver, NLINV_SOLVER, or install z3)")]
    SolverUnavailable,
    #[error("solver failed: {0}")]
    SolverFailed(String),
    #[error("emission: {0}")]
    Emit(String),
    #[error("eval during replay: {0}")]
    Replay(#[from] EvalError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A program paired with a candidate invariant, ready for checking.
/// Variables are Int-sorted; fractional sampling only ever affects training
/// data, never the verified program.
#[derive(Debug, Clone)]
pub struct VerificationProblem {
    pub program: LoopProgram,
    pub invariant: Formula,
    pub gcd_mode: GcdMode,
}

/// Status of one Hoare condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CondStatus {
    Valid,
    Counterexample(Valuation),
    Unknown(String),
}

impl CondStatus {
    pub fn is_valid(&self) -> bool {
        matches!(self, CondStatus::Valid)
    }
}

/// Outcome of checking the three conditions.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationOutcome {
    pub initiation: CondStatus,
    pub consecution: CondStatus,
    pub sufficiency: CondStatus,
    pub solver_time_ms: u128,
}

impl VerificationOutcome {
    pub fn statuses(&self) -> [&CondStatus; 3] {
        [&self.initiation, &self.consecution, &self.sufficiency]
    }

    /// All three conditions solver-attested unsat.
    pub fn is_valid(&self) -> bool {
        self.statuses().iter().all(|s| s.is_valid())
    }

    /// Valid except for conditions skipped because gcd is not supported by
    /// the solver (reported distinctly, never as plain validity).
    pub fn is_valid_modulo_gcd(&self) -> bool {
        !self.is_valid()
            && self.statuses().iter().all(|s| match s {
                CondStatus::Valid => true,
                CondStatus::Unknown(msg) => msg.contains("gcd"),
                CondStatus::Counterexample(_) => false,
            })
    }

    pub fn first_counterexample(&self) -> Option<(Condition, &Valuation)> {
        let conds = [
            (Condition::Initiation, &self.initiation),
            (Condition::Consecution, &self.consecution),
            (Condition::Sufficiency, &self.sufficiency),
        ];
        for (c, s) in conds {
            if let CondStatus::Counterexample(v) = s {
                return Some((c, v));
            }
        }
        None
    }
}

pub use check::check_invariant;

mod check {
    use super::*;
    use crate::dsl::eval_bool;

    /// Emits the three condition scripts, runs the solver, and maps the
    /// results. A `sat` answer is only reported as a counterexample after
    /// the parsed model has been replayed through the exact-rational
    /// interpreter and confirmed to falsify its condition; anything else
    /// degrades to `Unknown`.
    pub fn check_invariant(
        problem: &VerificationProblem,
        solver: &SolverCmd,
        timeout: std::time::Duration,
    ) -> Result<VerificationOutcome, CheckerError> {
        let emitted = emit_smtlib(problem)?;
        let mut statuses: Vec<CondStatus> = Vec::new();
        let mut total_ms = 0u128;

        let runnable: Vec<(Condition, &String)> = emitted
            .scripts
            .iter()
            .filter_map(|(c, s)| s.as_ref().map(|s| (*c, s)))
            .collect();
        let texts: Vec<&str> = runnable.iter().map(|(_, s)| s.as_str()).collect();
        let replies = run_solver_batch(solver, &texts, timeout)?;

        let mut reply_iter = replies.into_iter();
        for (cond, script) in &emitted.scripts {
            let status = match script {
                None => CondStatus::Unknown(
                    "gcd unsupported by the solver; manual check required".into(),
                ),
                Some(_) => {
                    let reply = reply_iter.next().expect("one reply per script");
                    total_ms += reply.elapsed_ms;
                    match reply.status {
                        SatStatus::Unsat => CondStatus::Valid,
                        SatStatus::Unknown(reason) => CondStatus::Unknown(reason),
                        SatStatus::Sat => match reply.model {
                            None => CondStatus::Unknown("sat without a parsable model".into()),
                            Some(model) => {
                                let full = complete_valuation(problem, *cond, &model);
                                match replay_falsifies(problem, *cond, &full) {
                                    Ok(true) => CondStatus::Counterexample(full),
                                    Ok(false) => CondStatus::Unknown(
                                        "model failed the replay self-check".into(),
                                    ),
                                    Err(e) => CondStatus::Unknown(format!(
                                        "replay error: {e}"
                                    )),
                                }
                            }
                        },
                    }
                }
            };
            statuses.push(status);
        }

        let mut it = statuses.into_iter();
        Ok(VerificationOutcome {
            initiation: it.next().unwrap(),
            consecution: it.next().unwrap(),
            sufficiency: it.next().unwrap(),
            solver_time_ms: total_ms,
        })
    }

    /// Fills variables the model omitted (irrelevant to the solver) with 0.
    fn complete_valuation(
        problem: &VerificationProblem,
        cond: Condition,
        model: &Valuation,
    ) -> Valuation {
        let vars: Vec<&String> = match cond {
            Condition::Initiation => problem.program.params.iter().collect(),
            _ => problem.program.vars.iter().collect(),
        };
        vars.into_iter()
            .map(|v| {
                (
                    v.clone(),
                    model.get(v).cloned().unwrap_or_else(|| crate::rat::rat(0)),
                )
            })
            .collect()
    }

    /// Replays a candidate counterexample through the interpreter: does the
    /// valuation actually falsify the Hoare condition?
    pub(super) fn replay_falsifies(
        problem: &VerificationProblem,
        cond: Condition,
        valuation: &Valuation,
    ) -> Result<bool, EvalError> {
        let program = &problem.program;
        let inv = &problem.invariant;
        match cond {
            Condition::Initiation => {
                let state = program.init_state(valuation)?;
                Ok(eval_bool(&program.pre, &state)? && !inv.eval(&state)?)
            }
            Condition::Consecution => {
                let holds_pre = inv.eval(valuation)?;
                let guard = eval_bool(&program.guard, valuation)?;
                if !(holds_pre && guard) {
                    return Ok(false);
                }
                let next = program.step_body(valuation)?;
                Ok(!inv.eval(&next)?)
            }
            Condition::Sufficiency => {
                let holds = inv.eval(valuation)?;
                let guard = eval_bool(&program.guard, valuation)?;
                let post = eval_bool(&program.post, valuation)?;
                Ok(holds && !guard && !post)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_program;
    use crate::extract::{Atom, Rel};
    use crate::features::Term;
    use crate::rat::{rat, Rat};
    use std::collections::BTreeMap;

    pub(crate) fn sqrt_program() -> LoopProgram {
        parse_program(
            "//pre: n >= 0\na = 0; s = 1; t = 1;\nwhile (s <= n) { a += 1; t += 2; s += t; }\n//post: a * a <= n && n < (a + 1) * (a + 1)",
        )
        .unwrap()
    }

    pub(crate) fn atom(rel: Rel, pairs: &[(Term, i64)], constant: i64) -> Atom {
        let coeffs: BTreeMap<Term, Rat> = pairs
            .iter()
            .map(|(t, c)| (t.clone(), rat(*c)))
            .collect();
        Atom::new(rel, coeffs, rat(constant))
    }

    /// The known sqrt invariant (a^2 <= n) && (t = 2a+1) && (s = (a+1)^2).
    pub(crate) fn sqrt_invariant() -> Formula {
        let a2 = Term::monomial(&[("a", 2)]);
        Formula::and_all(vec![
            Formula::Atom(atom(
                Rel::Le,
                &[(a2.clone(), 1), (Term::var("n"), -1)],
                0,
            )),
            Formula::Atom(atom(
                Rel::Eq,
                &[(Term::var("t"), 1), (Term::var("a"), -2)],
                -1,
            )),
            Formula::Atom(atom(
                Rel::Eq,
                &[(Term::var("s"), 1), (a2, -1), (Term::var("a"), -2)],
                -1,
            )),
        ])
    }

    #[test]
    fn replay_confirms_a_true_consecution_counterexample() {
        // deliberately wrong invariant: a <= 2 is not inductive
        let program = sqrt_program();
        let bad = Formula::Atom(atom(Rel::Le, &[(Term::var("a"), 1)], -2));
        let problem = VerificationProblem {
            program,
            invariant: bad,
            gcd_mode: GcdMode::ManualCheck,
        };
        // state a=2, s=4, t=5, n=24: invariant holds, guard holds, step
        // breaks a <= 2
        let state: Valuation = [
            ("a".to_string(), rat(2)),
            ("s".to_string(), rat(4)),
            ("t".to_string(), rat(5)),
            ("n".to_string(), rat(24)),
        ]
        .into();
        assert!(check::replay_falsifies(&problem, Condition::Consecution, &state).unwrap());
        // but a state outside the guard does not falsify consecution
        let outside: Valuation = [
            ("a".to_string(), rat(2)),
            ("s".to_string(), rat(30)),
            ("t".to_string(), rat(5)),
            ("n".to_string(), rat(24)),
        ]
        .into();
        assert!(!check::replay_falsifies(&problem, Condition::Consecution, &outside).unwrap());
    }

    #[test]
    fn replay_confirms_sufficiency_counterexample_for_true_invariant() {
        let program = sqrt_program();
        let problem = VerificationProblem {
            program,
            invariant: Formula::True,
            gcd_mode: GcdMode::ManualCheck,
        };
        // n = 2, a = 5, s = 9, t = 11: guard fails (9 > 2), post fails
        // (25 > 2), and True trivially holds
        let state: Valuation = [
            ("a".to_string(), rat(5)),
            ("s".to_string(), rat(9)),
            ("t".to_string(), rat(11)),
            ("n".to_string(), rat(2)),
        ]
        .into();
        assert!(check::replay_falsifies(&problem, Condition::Sufficiency, &state).unwrap());
    }
}
