use super::ast::*;
use super::trace::{Trace, TraceAbort};
use crate::rat::{rat, Rat};
use num_traits::{One, Signed, Zero};
use std::collections::{BTreeMap, BTreeSet};

/// Variable assignment, kept sorted for deterministic iteration.
pub type Valuation = BTreeMap<String, Rat>;

#[derive(Debug, Clone, thiserror::Error)]
pub enum EvalError {
    #[error("undefined variable `{0}`")]
    UndefinedVar(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("external function `{0}` applied to a non-integer argument")]
    ExternalNonInteger(String),
    #[error("unknown external function `{0}`")]
    UnknownExternal(String),
    #[error("initial valuation violates the precondition")]
    PreconditionViolated,
    #[error("relaxed variable `{0}` appears in a predicate or external call")]
    RelaxedVarRestricted(String),
    #[error("relaxed variable `{0}` is not initialized before the loop")]
    RelaxedVarNotInitialized(String),
    #[error("no sampling range configured for relaxed variable `{0}`")]
    MissingRange(String),
}

fn pow_rat(base: &Rat, exp: u32) -> Rat {
    let mut acc = Rat::one();
    for _ in 0..exp {
        acc *= base;
    }
    acc
}

pub fn eval_expr(e: &Expr, env: &Valuation) -> Result<Rat, EvalError> {
    match e {
        Expr::Num(n) => Ok(n.clone()),
        Expr::Var(v) => env
            .get(v)
            .cloned()
            .ok_or_else(|| EvalError::UndefinedVar(v.clone())),
        Expr::Neg(a) => Ok(-eval_expr(a, env)?),
        Expr::Add(a, b) => Ok(eval_expr(a, env)? + eval_expr(b, env)?),
        Expr::Sub(a, b) => Ok(eval_expr(a, env)? - eval_expr(b, env)?),
        Expr::Mul(a, b) => Ok(eval_expr(a, env)? * eval_expr(b, env)?),
        Expr::Div(a, b) => {
            let d = eval_expr(b, env)?;
            if d.is_zero() {
                return Err(EvalError::DivisionByZero);
            }
            Ok(eval_expr(a, env)? / d)
        }
        Expr::Pow(a, n) => Ok(pow_rat(&eval_expr(a, env)?, *n)),
        Expr::Call(name, a, b) => {
            let kind = ExternalFn::lookup(name)
                .ok_or_else(|| EvalError::UnknownExternal(name.clone()))?;
            let a = eval_expr(a, env)?;
            let b = eval_expr(b, env)?;
            ExternalFn::apply(kind, &a, &b)
                .ok_or_else(|| EvalError::ExternalNonInteger(name.clone()))
        }
        Expr::Ite(c, a, b) => {
            if eval_bool(c, env)? {
                eval_expr(a, env)
            } else {
                eval_expr(b, env)
            }
        }
    }
}

pub fn eval_bool(b: &BoolExpr, env: &Valuation) -> Result<bool, EvalError> {
    match b {
        BoolExpr::Lit(v) => Ok(*v),
        BoolExpr::Rel(op, a, c) => {
            let a = eval_expr(a, env)?;
            let c = eval_expr(c, env)?;
            Ok(match op {
                RelOp::Eq => a == c,
                RelOp::Ne => a != c,
                RelOp::Le => a <= c,
                RelOp::Ge => a >= c,
                RelOp::Lt => a < c,
                RelOp::Gt => a > c,
            })
        }
        BoolExpr::And(a, c) => Ok(eval_bool(a, env)? && eval_bool(c, env)?),
        BoolExpr::Or(a, c) => Ok(eval_bool(a, env)? || eval_bool(c, env)?),
        BoolExpr::Not(a) => Ok(!eval_bool(a, env)?),
    }
}

impl LoopProgram {
    /// Executes the loop body once, returning the new state.
    pub fn step_body(&self, env: &Valuation) -> Result<Valuation, EvalError> {
        let mut env = env.clone();
        for stmt in &self.body {
            let value = eval_expr(&stmt.rhs_expr(), &env)?;
            env.insert(stmt.var.clone(), value);
        }
        Ok(env)
    }

    /// State after the initialization assignments, given parameter values.
    pub fn init_state(&self, params: &Valuation) -> Result<Valuation, EvalError> {
        let mut env = params.clone();
        for stmt in &self.inits {
            let value = eval_expr(&stmt.rhs_expr(), &env)?;
            env.insert(stmt.var.clone(), value);
        }
        Ok(env)
    }

    /// Runs the program, logging the state at every guard evaluation
    /// (including the final failing one). Fails if the initial valuation
    /// violates the precondition; see [`LoopProgram::execute_trace_unchecked`]
    /// to override.
    pub fn execute_trace(&self, init: &Valuation, max_iters: usize) -> Result<Trace, EvalError> {
        let env = self.init_state(init)?;
        if !eval_bool(&self.pre, &env)? {
            return Err(EvalError::PreconditionViolated);
        }
        self.run_from(env, init.clone(), max_iters, false, BTreeMap::new())
    }

    /// [`LoopProgram::execute_trace`] without the precondition check.
    pub fn execute_trace_unchecked(
        &self,
        init: &Valuation,
        max_iters: usize,
    ) -> Result<Trace, EvalError> {
        let env = self.init_state(init)?;
        self.run_from(env, init.clone(), max_iters, false, BTreeMap::new())
    }

    fn snapshot(&self, env: &Valuation) -> Valuation {
        self.vars
            .iter()
            .filter_map(|v| env.get(v).map(|r| (v.clone(), r.clone())))
            .collect()
    }

    fn run_from(
        &self,
        mut env: Valuation,
        init_values: Valuation,
        max_iters: usize,
        fractional: bool,
        frozen_inits: BTreeMap<String, Rat>,
    ) -> Result<Trace, EvalError> {
        let mut rows = Vec::new();
        let mut truncated = false;
        let mut error = None;
        let mut iters = 0usize;
        loop {
            rows.push(self.snapshot(&env));
            match eval_bool(&self.guard, &env) {
                Ok(true) => {}
                Ok(false) => break,
                Err(e @ EvalError::ExternalNonInteger(_))
                | Err(e @ EvalError::DivisionByZero) => {
                    error = Some(TraceAbort {
                        row: rows.len() - 1,
                        message: e.to_string(),
                    });
                    break;
                }
                Err(e) => return Err(e),
            }
            if iters == max_iters {
                truncated = true;
                break;
            }
            match self.step_body(&env) {
                Ok(next) => env = next,
                Err(e @ EvalError::ExternalNonInteger(_))
                | Err(e @ EvalError::DivisionByZero) => {
                    error = Some(TraceAbort {
                        row: rows.len() - 1,
                        message: e.to_string(),
                    });
                    break;
                }
                Err(e) => return Err(e),
            }
            iters += 1;
        }
        Ok(Trace {
            program_name: self.name.clone(),
            init_values,
            rows,
            truncated,
            error,
            fractional,
            frozen_inits,
        })
    }
}

/// Inclusive arithmetic grid `lo, lo+step, ...` up to `hi`.
///
/// Halving the step yields a superset of the points.
pub fn grid_points(lo: &Rat, hi: &Rat, step: &Rat) -> Vec<Rat> {
    assert!(step.is_positive(), "grid step must be positive");
    let mut out = Vec::new();
    let mut v = lo.clone();
    while &v <= hi {
        out.push(v.clone());
        v += step;
    }
    out
}

/// Fractional sampling: one trace per grid point of initial values for the
/// relaxed variables, per base parameter valuation.
///
/// Each trace freezes the relaxed initial values so that terms over them can
/// be built downstream. Relaxed variables must be initialized before the
/// loop and must not occur in a body/init predicate or external call.
pub fn fractional_runs(
    program: &LoopProgram,
    relaxed: &BTreeSet<String>,
    grid_step: &Rat,
    ranges: &BTreeMap<String, (Rat, Rat)>,
    param_sets: &[Valuation],
    max_iters: usize,
) -> Result<Vec<Trace>, EvalError> {
    let initialized: BTreeSet<&String> = program.inits.iter().map(|s| &s.var).collect();
    let restricted = program.restricted_vars();
    for var in relaxed {
        if !initialized.contains(var) {
            return Err(EvalError::RelaxedVarNotInitialized(var.clone()));
        }
        if restricted.contains(var) {
            return Err(EvalError::RelaxedVarRestricted(var.clone()));
        }
    }

    let order: Vec<&String> = relaxed.iter().collect();
    let mut grids = Vec::new();
    for var in &order {
        let (lo, hi) = ranges
            .get(*var)
            .ok_or_else(|| EvalError::MissingRange((*var).clone()))?;
        grids.push(grid_points(lo, hi, grid_step));
    }

    let mut combos: Vec<Vec<Rat>> = vec![Vec::new()];
    for grid in &grids {
        let mut next = Vec::with_capacity(combos.len() * grid.len());
        for combo in &combos {
            for v in grid {
                let mut c = combo.clone();
                c.push(v.clone());
                next.push(c);
            }
        }
        combos = next;
    }

    let mut traces = Vec::new();
    for params in param_sets {
        for combo in &combos {
            let mut env = program.init_state(params)?;
            let mut frozen = BTreeMap::new();
            let mut init_values = params.clone();
            for (var, value) in order.iter().zip(combo) {
                env.insert((*var).clone(), value.clone());
                init_values.insert((*var).clone(), value.clone());
                frozen.insert(program.frozen_name(var), value.clone());
            }
            traces.push(program.run_from(env, init_values, max_iters, true, frozen)?);
        }
    }
    Ok(traces)
}

/// Enumerates integer parameter valuations satisfying the precondition, in
/// graded order (small values first), up to `budget` tuples. `probe_scales`
/// appends a few scaled-up copies of the largest accepted tuple so that
/// bounds which merely fit the small-value box get filtered out early.
pub fn enumerate_param_sets(
    program: &LoopProgram,
    budget: usize,
    probe_scales: &[u32],
) -> Result<Vec<Valuation>, EvalError> {
    let pre_ok = |params: &Valuation| -> Result<bool, EvalError> {
        let env = program.init_state(params)?;
        eval_bool(&program.pre, &env)
    };

    if program.params.is_empty() {
        let empty = Valuation::new();
        return Ok(if pre_ok(&empty)? { vec![empty] } else { vec![] });
    }

    let k = program.params.len();
    let max_v = (2 * budget).max(4) as i64;
    let mut accepted: Vec<Valuation> = Vec::new();

    'outer: for total in 0..=(k as i64) * max_v {
        // all k-tuples of non-negative integers summing to `total`
        let mut tuple = vec![0i64; k];
        fn rec(
            idx: usize,
            remaining: i64,
            max_v: i64,
            tuple: &mut Vec<i64>,
            program: &LoopProgram,
            pre_ok: &dyn Fn(&Valuation) -> Result<bool, EvalError>,
            accepted: &mut Vec<Valuation>,
            budget: usize,
        ) -> Result<bool, EvalError> {
            if accepted.len() >= budget {
                return Ok(true);
            }
            if idx == tuple.len() - 1 {
                if remaining > max_v {
                    return Ok(false);
                }
                tuple[idx] = remaining;
                let params: Valuation = program
                    .params
                    .iter()
                    .cloned()
                    .zip(tuple.iter().map(|&v| rat(v)))
                    .collect();
                if pre_ok(&params)? {
                    accepted.push(params);
                }
                return Ok(accepted.len() >= budget);
            }
            for v in 0..=remaining.min(max_v) {
                tuple[idx] = v;
                if rec(
                    idx + 1,
                    remaining - v,
                    max_v,
                    tuple,
                    program,
                    pre_ok,
                    accepted,
                    budget,
                )? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
        if rec(
            0,
            total,
            max_v,
            &mut tuple,
            program,
            &pre_ok,
            &mut accepted,
            budget,
        )? {
            break 'outer;
        }
    }

    if let Some(largest) = accepted.last().cloned() {
        for &scale in probe_scales {
            let probe: Valuation = largest
                .iter()
                .map(|(k, v)| (k.clone(), v * rat(scale as i64)))
                .collect();
            if !accepted.contains(&probe) && pre_ok(&probe)? {
                accepted.push(probe);
            }
        }
    }

    Ok(accepted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_program;
    use crate::rat::ratio;

    const SQRT: &str = "\
//pre: n >= 0
a = 0; s = 1; t = 1;
while (s <= n) {
  a += 1;
  t += 2;
  s += t;
}
//post: a^2 <= n && n < (a + 1)^2
";

    const PS4: &str = "\
//pre: x == 0 && y == 0 && k >= 0
x = 0; y = 0;
while (y < k) {
  y += 1;
  x += y * y * y;
}
//post: 4 * x == k^2 * (k + 1)^2
";

    fn vals(pairs: &[(&str, i64)]) -> Valuation {
        pairs.iter().map(|(k, v)| (k.to_string(), rat(*v))).collect()
    }

    #[test]
    fn sqrt_trace_matches_hand_simulation() {
        let p = parse_program(SQRT).unwrap();
        let t = p.execute_trace(&vals(&[("n", 4)]), 50).unwrap();
        let row = |i: usize, v: &str| t.rows[i][v].clone();
        assert_eq!(t.rows.len(), 3);
        for (i, (a, s, tt)) in [(0, (0, 1, 1)), (1, (1, 4, 3)), (2, (2, 9, 5))] {
            assert_eq!(row(i, "a"), rat(a));
            assert_eq!(row(i, "s"), rat(s));
            assert_eq!(row(i, "t"), rat(tt));
        }
        assert!(!t.truncated);
        assert!(t.error.is_none());
        assert!(t.verify_replay(&p).unwrap());
    }

    #[test]
    fn guard_initially_false_gives_one_row() {
        let p = parse_program(SQRT).unwrap();
        let t = p.execute_trace(&vals(&[("n", 0)]), 50).unwrap();
        assert_eq!(t.rows.len(), 1);
    }

    #[test]
    fn ps4_x_column_matches_reported_run() {
        let p = parse_program(PS4).unwrap();
        let t = p.execute_trace(&vals(&[("k", 5)]), 50).unwrap();
        let xs: Vec<Rat> = t.rows.iter().map(|r| r["x"].clone()).collect();
        assert_eq!(xs, [0, 1, 9, 36, 100, 225].map(rat).to_vec());
    }

    #[test]
    fn divergent_loop_truncates_without_error() {
        let p = parse_program("x = 0;\nwhile (x >= 0) { x += 1; }").unwrap();
        let t = p.execute_trace(&Valuation::new(), 7).unwrap();
        assert!(t.truncated);
        assert!(t.error.is_none());
        assert_eq!(t.rows.len(), 8); // initial state + 7 iterations
        assert!(t.verify_replay(&p).unwrap());
    }

    #[test]
    fn precondition_enforced_unless_overridden() {
        let p = parse_program(SQRT).unwrap();
        let err = p.execute_trace(&vals(&[("n", -3)]), 50).unwrap_err();
        assert!(matches!(err, EvalError::PreconditionViolated));
        let t = p.execute_trace_unchecked(&vals(&[("n", -3)]), 50).unwrap();
        assert_eq!(t.rows.len(), 1);
    }

    #[test]
    fn external_on_non_integer_aborts_trace_with_marker() {
        let src = "g = 4; d = 1;\nwhile (g > 0) { d = d / 2; g = gcd(g, d); }";
        let p = parse_program(src).unwrap();
        let t = p.execute_trace(&Valuation::new(), 50).unwrap();
        // d becomes 1/2 before the gcd call, aborting the first iteration
        let abort = t.error.expect("expected abort marker");
        assert!(abort.message.contains("gcd"));
        assert_eq!(abort.row, 0);
        assert_eq!(t.rows.len(), 1);
    }

    #[test]
    fn fractional_rows_match_reported_ps4_samples() {
        let p = parse_program(PS4).unwrap();
        let relaxed: BTreeSet<String> = ["x", "y"].map(String::from).into();
        let ranges: BTreeMap<String, (Rat, Rat)> = [
            ("x".to_string(), (rat(-1), rat(-1))),
            ("y".to_string(), (ratio(-3, 5), ratio(-3, 5))),
        ]
        .into();
        let traces = fractional_runs(
            &p,
            &relaxed,
            &ratio(1, 2),
            &ranges,
            &[vals(&[("k", 2)])],
            50,
        )
        .unwrap();
        assert_eq!(traces.len(), 1);
        let t = &traces[0];
        assert!(t.fractional);
        assert_eq!(t.frozen_inits["x0"], rat(-1));
        assert_eq!(t.frozen_inits["y0"], ratio(-3, 5));
        // (x, y) = (-1, -0.6) -> (-0.936, 0.4) -> (1.808, 1.4): the published
        // table prints these rounded to one decimal as (-0.9, 0.4), (1.8, 1.4)
        assert_eq!(t.rows[0]["y"], ratio(-3, 5));
        assert_eq!(t.rows[1]["x"], ratio(-117, 125));
        assert_eq!(t.rows[1]["y"], ratio(2, 5));
        assert_eq!(t.rows[2]["x"], ratio(226, 125));
        assert_eq!(t.rows[2]["y"], ratio(7, 5));
        assert!(t.verify_replay(&p).unwrap());

        // x0 = 0, y0 = -1.2 -> one iteration gives (x, y) = (-0.008, -0.2),
        // printed as (0, -0.2)
        let ranges2: BTreeMap<String, (Rat, Rat)> = [
            ("x".to_string(), (rat(0), rat(0))),
            ("y".to_string(), (ratio(-6, 5), ratio(-6, 5))),
        ]
        .into();
        let t2 = &fractional_runs(
            &p,
            &relaxed,
            &ratio(1, 2),
            &ranges2,
            &[vals(&[("k", 2)])],
            50,
        )
        .unwrap()[0];
        assert_eq!(t2.rows[1]["y"], ratio(-1, 5));
        assert_eq!(t2.rows[1]["x"], ratio(-1, 125));
    }

    #[test]
    fn degenerate_grid_equals_plain_execution() {
        let p = parse_program(PS4).unwrap();
        let relaxed: BTreeSet<String> = ["x", "y"].map(String::from).into();
        let ranges: BTreeMap<String, (Rat, Rat)> = [
            ("x".to_string(), (rat(0), rat(0))),
            ("y".to_string(), (rat(0), rat(0))),
        ]
        .into();
        let params = vals(&[("k", 3)]);
        let frac = fractional_runs(&p, &relaxed, &ratio(1, 2), &ranges, &[params.clone()], 50)
            .unwrap();
        assert_eq!(frac.len(), 1);
        let plain = p.execute_trace(&params, 50).unwrap();
        assert_eq!(frac[0].rows, plain.rows);
    }

    #[test]
    fn relaxed_variable_restrictions_are_enforced() {
        let src = "g = 10; s = 0;\nwhile (g > 1) { s += gcd(g, 2); g -= 1; }";
        let p = parse_program(src).unwrap();
        let relaxed: BTreeSet<String> = ["g"].map(String::from).into();
        let ranges: BTreeMap<String, (Rat, Rat)> =
            [("g".to_string(), (rat(0), rat(1)))].into();
        let err = fractional_runs(&p, &relaxed, &ratio(1, 2), &ranges, &[vals(&[])], 10)
            .unwrap_err();
        assert!(matches!(err, EvalError::RelaxedVarRestricted(v) if v == "g"));

        let p2 = parse_program(PS4).unwrap();
        let relaxed_param: BTreeSet<String> = ["k"].map(String::from).into();
        let err = fractional_runs(&p2, &relaxed_param, &ratio(1, 2), &ranges, &[vals(&[])], 10)
            .unwrap_err();
        assert!(matches!(err, EvalError::RelaxedVarNotInitialized(_)));
    }

    #[test]
    fn grid_halving_is_a_superset() {
        let full = grid_points(&rat(-1), &rat(1), &ratio(1, 2));
        let half = grid_points(&rat(-1), &rat(1), &ratio(1, 4));
        assert_eq!(full.len(), 5);
        assert_eq!(half.len(), 9);
        for p in &full {
            assert!(half.contains(p));
        }
    }

    #[test]
    fn param_enumeration_respects_precondition_and_budget() {
        let p = parse_program(
            "//pre: x1 >= 0 && x2 >= 1\ny = x1;\nwhile (y > 0) { y -= x2; }",
        )
        .unwrap();
        let sets = enumerate_param_sets(&p, 10, &[]).unwrap();
        assert_eq!(sets.len(), 10);
        for s in &sets {
            assert!(s["x2"] >= rat(1));
            assert!(s["x1"] >= rat(0));
        }
        // graded order: first tuple is the smallest admissible one
        assert_eq!(sets[0], vals(&[("x1", 0), ("x2", 1)]));
    }

    #[test]
    fn probe_scales_extend_enumeration() {
        let p = parse_program("//pre: k >= 0\nx = 0;\nwhile (x < k) { x += 1; }").unwrap();
        let sets = enumerate_param_sets(&p, 5, &[4]).unwrap();
        assert_eq!(sets.len(), 6);
        assert_eq!(sets[5]["k"], rat(16));
    }
}
