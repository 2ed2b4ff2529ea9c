use super::{CheckerError, VerificationProblem};
use crate::dsl::{AssignOp, BoolExpr, Expr, RelOp};
use crate::extract::{Atom, Formula, Rel};
use crate::features::Term;
use crate::rat::Rat;
use num_traits::{One, Signed, Zero};
use serde::Serialize;
use std::collections::BTreeMap;

/// How `gcd` terms are verified. The solver has no gcd theory; by default
/// any condition mentioning gcd is skipped and the outcome downgraded to
/// "valid modulo gcd" for manual checking. `Axiomatize` instead declares an
/// uninterpreted function with defining axioms (the solver may answer
/// unknown).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GcdMode {
    ManualCheck,
    Axiomatize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Condition {
    Initiation,
    Consecution,
    Sufficiency,
}

impl Condition {
    pub fn name(self) -> &'static str {
        match self {
            Condition::Initiation => "initiation",
            Condition::Consecution => "consecution",
            Condition::Sufficiency => "sufficiency",
        }
    }
}

/// The three emitted scripts; `None` means the condition was skipped in
/// `ManualCheck` mode because it mentions gcd.
#[derive(Debug, Clone)]
pub struct EmittedScripts {
    pub scripts: Vec<(Condition, Option<String>)>,
}

type Subst = BTreeMap<String, String>;

fn emit_rat(r: &Rat) -> Result<String, CheckerError> {
    if !r.denom().is_one() {
        return Err(CheckerError::Emit(format!(
            "non-integer constant {r} in Int context"
        )));
    }
    let n = r.numer();
    if n.is_negative() {
        Ok(format!("(- {})", -n))
    } else {
        Ok(n.to_string())
    }
}

fn emit_expr(e: &Expr, sub: &Subst) -> Result<String, CheckerError> {
    Ok(match e {
        Expr::Num(n) => emit_rat(n)?,
        Expr::Var(v) => sub.get(v).cloned().unwrap_or_else(|| v.clone()),
        Expr::Neg(a) => format!("(- {})", emit_expr(a, sub)?),
        Expr::Add(a, b) => format!("(+ {} {})", emit_expr(a, sub)?, emit_expr(b, sub)?),
        Expr::Sub(a, b) => format!("(- {} {})", emit_expr(a, sub)?, emit_expr(b, sub)?),
        Expr::Mul(a, b) => format!("(* {} {})", emit_expr(a, sub)?, emit_expr(b, sub)?),
        Expr::Div(a, b) => {
            // exact rational division: sound on Int sorts only when the
            // divisor is a constant +-1
            let d = match b.as_ref() {
                Expr::Num(n) if n.is_one() => 1,
                Expr::Num(n) if (-n.clone()).is_one() => -1,
                _ => {
                    return Err(CheckerError::Emit(
                        "exact division is not supported in Int verification".into(),
                    ))
                }
            };
            let a = emit_expr(a, sub)?;
            if d == 1 {
                a
            } else {
                format!("(- {a})")
            }
        }
        Expr::Pow(a, n) => {
            let a = emit_expr(a, sub)?;
            match n {
                0 => "1".to_string(),
                1 => a,
                _ => format!("(* {})", vec![a; *n as usize].join(" ")),
            }
        }
        Expr::Call(name, a, b) => {
            let a = emit_expr(a, sub)?;
            let b = emit_expr(b, sub)?;
            match name.as_str() {
                "mod" => format!("(mod {a} {b})"),
                other => format!("({other} {a} {b})"),
            }
        }
        Expr::Ite(c, a, b) => format!(
            "(ite {} {} {})",
            emit_bool(c, sub)?,
            emit_expr(a, sub)?,
            emit_expr(b, sub)?
        ),
    })
}

fn emit_bool(b: &BoolExpr, sub: &Subst) -> Result<String, CheckerError> {
    Ok(match b {
        BoolExpr::Lit(true) => "true".into(),
        BoolExpr::Lit(false) => "false".into(),
        BoolExpr::Rel(op, a, c) => {
            let a = emit_expr(a, sub)?;
            let c = emit_expr(c, sub)?;
            match op {
                RelOp::Eq => format!("(= {a} {c})"),
                RelOp::Ne => format!("(not (= {a} {c}))"),
                RelOp::Le => format!("(<= {a} {c})"),
                RelOp::Ge => format!("(>= {a} {c})"),
                RelOp::Lt => format!("(< {a} {c})"),
                RelOp::Gt => format!("(> {a} {c})"),
            }
        }
        BoolExpr::And(a, c) => format!("(and {} {})", emit_bool(a, sub)?, emit_bool(c, sub)?),
        BoolExpr::Or(a, c) => format!("(or {} {})", emit_bool(a, sub)?, emit_bool(c, sub)?),
        BoolExpr::Not(a) => format!("(not {})", emit_bool(a, sub)?),
    })
}

fn emit_term(t: &Term, sub: &Subst) -> String {
    let var_of = |v: &String| sub.get(v).cloned().unwrap_or_else(|| v.clone());
    match t {
        Term::Monomial(m) if m.is_empty() => "1".into(),
        Term::Monomial(m) => {
            let mut parts = Vec::new();
            for (v, e) in m {
                for _ in 0..*e {
                    parts.push(var_of(v));
                }
            }
            if parts.len() == 1 {
                parts.pop().unwrap()
            } else {
                format!("(* {})", parts.join(" "))
            }
        }
        Term::External { name, a, b } => {
            let fname = if name == "mod" { "mod" } else { name };
            format!("({fname} {} {})", var_of(a), var_of(b))
        }
    }
}

fn emit_atom(atom: &Atom, sub: &Subst) -> Result<String, CheckerError> {
    let mut parts = Vec::new();
    for (t, c) in &atom.coeffs {
        let te = emit_term(t, sub);
        if c.is_one() {
            parts.push(te);
        } else {
            parts.push(format!("(* {} {})", emit_rat(c)?, te));
        }
    }
    if !atom.constant.is_zero() || parts.is_empty() {
        parts.push(emit_rat(&atom.constant)?);
    }
    let lhs = if parts.len() == 1 {
        parts.pop().unwrap()
    } else {
        format!("(+ {})", parts.join(" "))
    };
    Ok(match atom.rel {
        Rel::Eq => format!("(= {lhs} 0)"),
        Rel::Ge => format!("(>= {lhs} 0)"),
        Rel::Le => format!("(<= {lhs} 0)"),
        Rel::Gt => format!("(> {lhs} 0)"),
        Rel::Lt => format!("(< {lhs} 0)"),
        Rel::Ne => format!("(not (= {lhs} 0))"),
    })
}

fn formula_to_smt_sub(f: &Formula, sub: &Subst) -> Result<String, CheckerError> {
    Ok(match f {
        Formula::True => "true".into(),
        Formula::False => "false".into(),
        Formula::Atom(a) => emit_atom(a, sub)?,
        Formula::And(xs) => {
            let parts: Result<Vec<_>, _> =
                xs.iter().map(|x| formula_to_smt_sub(x, sub)).collect();
            format!("(and {})", parts?.join(" "))
        }
        Formula::Or(xs) => {
            let parts: Result<Vec<_>, _> =
                xs.iter().map(|x| formula_to_smt_sub(x, sub)).collect();
            format!("(or {})", parts?.join(" "))
        }
        Formula::Not(x) => format!("(not {})", formula_to_smt_sub(x, sub)?),
    })
}

/// Serializes a formula to an SMT-LIB2 boolean term over Int variables.
pub fn formula_to_smt(f: &Formula) -> Result<String, CheckerError> {
    formula_to_smt_sub(f, &Subst::new())
}

/// Composes the straight-line statements into per-variable symbolic
/// post-state expressions.
fn compose_statements(stmts: &[crate::dsl::Stmt], sub: &mut Subst) -> Result<(), CheckerError> {
    for stmt in stmts {
        let rhs = match stmt.op {
            AssignOp::Set => emit_expr(&stmt.expr, sub)?,
            _ => emit_expr(&stmt.rhs_expr(), sub)?,
        };
        sub.insert(stmt.var.clone(), rhs);
    }
    Ok(())
}

fn uses_gcd_formula(f: &Formula) -> bool {
    f.atoms().iter().any(|a| {
        a.coeffs
            .keys()
            .any(|t| matches!(t, Term::External { name, .. } if name == "gcd"))
    })
}

fn uses_gcd_bool(b: &BoolExpr) -> bool {
    let mut calls = std::collections::BTreeSet::new();
    crate::dsl::collect_calls_bool(b, &mut calls);
    calls.contains("gcd")
}

fn uses_gcd_stmts(stmts: &[crate::dsl::Stmt]) -> bool {
    let mut calls = std::collections::BTreeSet::new();
    for s in stmts {
        crate::dsl::collect_calls_expr(&s.expr, &mut calls);
    }
    calls.contains("gcd")
}

const GCD_AXIOMS: &str = "\
(declare-fun gcd (Int Int) Int)
(assert (forall ((a Int) (b Int)) (= (gcd a b) (gcd b a))))
(assert (forall ((a Int)) (= (gcd a 0) (abs a))))
(assert (forall ((a Int) (b Int)) (= (gcd a b) (gcd (- a b) b))))
(assert (forall ((a Int) (b Int)) (>= (gcd a b) 0)))
";

/// Emits the three Hoare-condition scripts for a candidate invariant.
///
/// Each script asserts the negation of its condition over Int-sorted
/// variables and ends with `(check-sat)` / `(get-model)`, so `unsat` means
/// the condition holds. Initiation substitutes the composed initialization
/// into both the precondition and the invariant, consecution substitutes the
/// composed loop body into the invariant's primed copy, and sufficiency
/// pairs the invariant with the negated guard and postcondition.
pub fn emit_smtlib(problem: &VerificationProblem) -> Result<EmittedScripts, CheckerError> {
    let program = &problem.program;
    let inv = &problem.invariant;
    let gcd_mode = problem.gcd_mode;
    let inv_gcd = uses_gcd_formula(inv);
    // per-condition gcd usage decides which scripts get blocked or
    // axiomatized
    let gcd_in = [
        inv_gcd || uses_gcd_stmts(&program.inits) || uses_gcd_bool(&program.pre),
        inv_gcd || uses_gcd_stmts(&program.body) || uses_gcd_bool(&program.guard),
        inv_gcd || uses_gcd_bool(&program.guard) || uses_gcd_bool(&program.post),
    ];

    let header = |vars: &[String], with_gcd: bool| {
        let mut s = String::from("(set-logic ALL)\n");
        if with_gcd {
            s.push_str(GCD_AXIOMS);
        }
        for v in vars {
            s.push_str(&format!("(declare-const {v} Int)\n"));
        }
        s
    };
    let footer = "(check-sat)\n(get-model)\n";

    // initiation: pre[init] and not I[init], over the parameters
    let mut init_sub = Subst::new();
    compose_statements(&program.inits, &mut init_sub)?;
    let initiation = format!(
        "{}(assert {})\n(assert (not {}))\n{footer}",
        header(&program.params, gcd_in[0] && gcd_mode == GcdMode::Axiomatize),
        emit_bool(&program.pre, &init_sub)?,
        formula_to_smt_sub(inv, &init_sub)?,
    );

    // consecution: I and guard and not I[body]
    let mut body_sub = Subst::new();
    compose_statements(&program.body, &mut body_sub)?;
    let consecution = format!(
        "{}(assert {})\n(assert {})\n(assert (not {}))\n{footer}",
        header(&program.vars, gcd_in[1] && gcd_mode == GcdMode::Axiomatize),
        formula_to_smt(inv)?,
        emit_bool(&program.guard, &Subst::new())?,
        formula_to_smt_sub(inv, &body_sub)?,
    );

    // sufficiency: I and not guard and not post
    let sufficiency = format!(
        "{}(assert {})\n(assert (not {}))\n(assert (not {}))\n{footer}",
        header(&program.vars, gcd_in[2] && gcd_mode == GcdMode::Axiomatize),
        formula_to_smt(inv)?,
        emit_bool(&program.guard, &Subst::new())?,
        emit_bool(&program.post, &Subst::new())?,
    );

    let wrap = |cond: Condition, text: String, has_gcd: bool| {
        if has_gcd && gcd_mode == GcdMode::ManualCheck {
            (cond, None)
        } else {
            (cond, Some(text))
        }
    };
    Ok(EmittedScripts {
        scripts: vec![
            wrap(Condition::Initiation, initiation, gcd_in[0]),
            wrap(Condition::Consecution, consecution, gcd_in[1]),
            wrap(Condition::Sufficiency, sufficiency, gcd_in[2]),
        ],
    })
}
