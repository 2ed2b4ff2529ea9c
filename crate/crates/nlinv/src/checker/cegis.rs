use super::{
    check_invariant, CondStatus, Condition, GcdMode, SolverCmd, VerificationOutcome,
    VerificationProblem,
};
use crate::config::RunConfig;
use crate::dsl::{
    enumerate_param_sets, eval_bool, eval_expr, fractional_runs, LoopProgram, Trace, Valuation,
};
use crate::extract::{
    atom_holds_on_matrix, bound_to_atom, extract_formula, harvest_equalities, Atom, Formula,
};
use crate::features::{
    build_raw_matrix, enumerate_terms, growth_rate_filter, make_dropout_masks, normalize_rows,
    DropoutMask, FilterConfig, RawMatrix, SampleMatrix, Term,
};
use crate::gcln::{fit_bounds, train, Activation, GclnModel, TrainReport};
use crate::rat::{from_f64, Rat};
use serde::Serialize;
use serde_json::json;
use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum InferStatus {
    Valid,
    ValidModuloGcd,
    NotFound,
}

/// One audit record: a pipeline stage within a CEGIS round.
#[derive(Debug, Clone, Serialize)]
pub struct AuditEvent {
    pub round: usize,
    pub stage: String,
    pub detail: serde_json::Value,
    pub ms: u128,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct AuditLog(pub Vec<AuditEvent>);

impl AuditLog {
    fn push(&mut self, round: usize, stage: &str, detail: serde_json::Value, ms: u128) {
        self.0.push(AuditEvent {
            round,
            stage: stage.to_string(),
            detail,
            ms,
        });
    }

    /// JSON lines, one record per stage per round.
    pub fn to_jsonl(&self) -> String {
        self.0
            .iter()
            .map(|e| serde_json::to_string(e).expect("audit serializes"))
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn stages(&self) -> Vec<&str> {
        self.0.iter().map(|e| e.stage.as_str()).collect()
    }
}

#[derive(Debug, Serialize)]
pub struct CegisOutcome {
    pub status: InferStatus,
    pub invariant: Option<Formula>,
    /// Highest-scoring candidate when no invariant was validated.
    pub best_candidate: Option<String>,
    pub rounds: usize,
    pub counterexamples: Vec<(String, Valuation)>,
    pub final_outcome: Option<VerificationOutcome>,
    pub train_report: Option<TrainReport>,
    /// Largest gate distance from {0,1} in the last trained model.
    pub gate_distance: Option<f64>,
    #[serde(skip)]
    pub audit: AuditLog,
}

/// Ladder stage for a round: the dropout probability and, once integer
/// sampling is exhausted, the fractional grid step.
fn ladder_stage(cfg: &RunConfig, round: usize) -> (f64, Option<f64>) {
    if !cfg.dropout_enabled {
        // dropout ablated: masks keep everything in every round
        let frac_round = round.checked_sub(1);
        return (0.0, frac_step(cfg, frac_round));
    }
    let steps_to_zero = (cfg.dropout / 0.1).ceil() as usize;
    let p = ((cfg.dropout - 0.1 * round as f64).max(0.0) * 1000.0).round() / 1000.0;
    let frac_round = round.checked_sub(steps_to_zero + 1);
    (p, frac_step(cfg, frac_round))
}

fn frac_step(cfg: &RunConfig, frac_round: Option<usize>) -> Option<f64> {
    if !cfg.frac.enabled {
        return None;
    }
    let idx = frac_round?;
    cfg.frac
        .steps
        .get(idx.min(cfg.frac.steps.len().saturating_sub(1)))
        .copied()
}

/// Variables eligible for fractional relaxation: initialized to a constant
/// and not involved in a predicate or external call.
fn relaxable_vars(program: &LoopProgram) -> BTreeSet<String> {
    let restricted = program.restricted_vars();
    program
        .inits
        .iter()
        .filter(|s| {
            matches!(s.op, crate::dsl::AssignOp::Set)
                && eval_expr(&s.expr, &Valuation::new()).is_ok()
                && !restricted.contains(&s.var)
        })
        .map(|s| s.var.clone())
        .collect()
}

/// Selects kept columns out of a matrix.
fn select_columns(matrix: &RawMatrix, kept: &[Term]) -> RawMatrix {
    let idx: Vec<usize> = kept
        .iter()
        .map(|t| matrix.basis.iter().position(|b| b == t).expect("kept term"))
        .collect();
    RawMatrix {
        basis: kept.to_vec(),
        rows: matrix
            .rows
            .iter()
            .map(|r| idx.iter().map(|&i| r[i].clone()).collect())
            .collect(),
    }
}

/// Evaluates the basis on raw program states (counterexample rows), filling
/// frozen columns from each state's own initialization.
fn rows_from_states(
    program: &LoopProgram,
    states: &[Valuation],
    basis: &[Term],
) -> Vec<Vec<Rat>> {
    let mut rows = Vec::new();
    for state in states {
        let mut env = state.clone();
        let params: Valuation = program
            .params
            .iter()
            .filter_map(|p| state.get(p).map(|v| (p.clone(), v.clone())))
            .collect();
        if let Ok(init) = program.init_state(&params) {
            for var in &program.vars {
                let name = program.frozen_name(var);
                if let Some(v) = init.get(var) {
                    env.entry(name).or_insert_with(|| v.clone());
                }
            }
        }
        let row: Option<Vec<Rat>> = basis.iter().map(|t| t.eval(&env).ok()).collect();
        if let Some(row) = row {
            rows.push(row);
        }
    }
    rows
}

/// A monomial purely over one alphabet (no mixing of live and frozen
/// variables); external terms count as live.
fn is_pure_term(term: &Term, frozen: &BTreeSet<String>) -> bool {
    match term {
        Term::Monomial(m) => {
            let frozen_count = m.keys().filter(|v| frozen.contains(*v)).count();
            frozen_count == 0 || frozen_count == m.len()
        }
        Term::External { .. } => true,
    }
}

pub(crate) struct RoundData {
    pub basis: Vec<Term>,
    /// Cumulative matrix: all traces plus counterexample rows.
    pub matrix: RawMatrix,
    /// Integer-trace + counterexample rows only (exact filtering of bound
    /// atoms and of substituted formulas).
    pub matrix_int: RawMatrix,
    pub sample: SampleMatrix,
    /// Base sample box only (no probe traces, no counterexample rows):
    /// bound fitting and activation pruning run here, where the PBQU
    /// constants are calibrated; the exact filter against `matrix_int`
    /// still sees everything.
    pub sample_bounds: SampleMatrix,
    pub frozen_values: BTreeMap<String, Rat>,
    pub n_frac_traces: usize,
    pub warnings: Vec<String>,
}

/// Builds per-round training data: traces, term basis, growth filtering,
/// normalization.
pub(crate) fn build_round_data(
    program: &LoopProgram,
    cfg: &RunConfig,
    param_sets: &[Valuation],
    cex_states: &[Valuation],
    frac_step_val: Option<f64>,
) -> Result<RoundData, crate::Error> {
    let max_deg = cfg.degree_for(program);
    let mut traces: Vec<Trace> = Vec::new();
    for params in param_sets {
        traces.push(program.execute_trace_unchecked(params, cfg.sampling.max_iters)?);
    }
    let n_int_traces = traces.len();
    let n_base_traces = n_int_traces.min(cfg.sampling.budget);

    let mut frozen_names: Vec<String> = Vec::new();
    let mut frozen_values: BTreeMap<String, Rat> = BTreeMap::new();
    if let Some(step) = frac_step_val {
        let relaxed = relaxable_vars(program);
        if !relaxed.is_empty() {
            let step_rat = from_f64(step).expect("finite step");
            let span = from_f64(cfg.frac.span).expect("finite span");
            let mut ranges = BTreeMap::new();
            for var in &relaxed {
                let init = program
                    .inits
                    .iter()
                    .rev()
                    .find(|s| &s.var == var)
                    .expect("relaxable is initialized");
                let center = eval_expr(&init.expr, &Valuation::new())?;
                ranges.insert(var.clone(), (center.clone() - &span, center.clone() + &span));
                frozen_names.push(program.frozen_name(var));
                frozen_values.insert(program.frozen_name(var), center);
            }
            let stride = (param_sets.len() / cfg.frac.param_budget.max(1)).max(1);
            let frac_params: Vec<Valuation> = param_sets
                .iter()
                .step_by(stride)
                .take(cfg.frac.param_budget.max(1))
                .cloned()
                .collect();
            let frac_traces = fractional_runs(
                program,
                &relaxed,
                &step_rat,
                &ranges,
                &frac_params,
                cfg.frac.max_iters,
            )?;
            traces.extend(frac_traces);
        }
    }
    let n_frac_traces = traces.len() - n_int_traces;

    let frozen_set: BTreeSet<String> = frozen_names.iter().cloned().collect();
    let mut basis_full = enumerate_terms(&program.vars, max_deg, &program.externals, &frozen_names);
    if !frozen_set.is_empty() {
        // relaxed invariants have the shape f(V) - f(V0): keep the two
        // alphabets unmixed
        basis_full.retain(|t| is_pure_term(t, &frozen_set));
    }

    let mut matrix_full = build_raw_matrix(program, &traces, &basis_full)?;
    let cex_rows = rows_from_states(program, cex_states, &basis_full);
    let n_cex_rows = cex_rows.len();
    matrix_full.rows.extend(cex_rows);

    let filter_out = growth_rate_filter(
        program,
        &traces,
        &basis_full,
        &matrix_full,
        &FilterConfig::default(),
    );
    let basis = filter_out.kept.clone();
    let matrix = select_columns(&matrix_full, &basis);

    // the integer-trace view never carries frozen-variable terms: bounds are
    // fit on it directly and substituted equality atoms are re-filtered on it
    let basis_int: Vec<Term> = basis
        .iter()
        .filter(|t| t.vars().iter().all(|v| !frozen_set.contains(*v)))
        .cloned()
        .collect();
    let int_rows: usize = traces[..n_int_traces]
        .iter()
        .map(|t| t.rows.len())
        .sum();
    let with_cex = |rows: &[Vec<Rat>]| {
        let mut out = rows[..int_rows].to_vec();
        out.extend(rows[rows.len() - n_cex_rows..].iter().cloned());
        out
    };
    let matrix_int = select_columns(
        &RawMatrix {
            basis: basis.clone(),
            rows: with_cex(&matrix.rows),
        },
        &basis_int,
    );

    let base_rows: usize = traces[..n_base_traces].iter().map(|t| t.rows.len()).sum();
    let matrix_bounds = select_columns(
        &RawMatrix {
            basis: basis.clone(),
            rows: matrix.rows[..base_rows].to_vec(),
        },
        &basis_int,
    );

    let l = if cfg.normalize { Some(cfg.l2_norm) } else { None };
    let sample = normalize_rows(&matrix, l);
    let sample_bounds = normalize_rows(&matrix_bounds, l);

    Ok(RoundData {
        basis,
        matrix,
        matrix_int,
        sample,
        sample_bounds,
        frozen_values,
        n_frac_traces,
        warnings: filter_out.warnings,
    })
}

/// Trains the equality model and extracts its data-filtered formula.
#[allow(clippy::too_many_arguments)]
pub(crate) fn learn_equalities(
    program: &LoopProgram,
    cfg: &RunConfig,
    data: &RoundData,
    dropout_p: f64,
    seed: u64,
) -> Result<(Formula, GclnModel, TrainReport, Vec<String>), crate::Error> {
    let _ = program;
    let n_literals = cfg.model_m * cfg.model_n;
    let masks: Vec<DropoutMask> = if cfg.dropout_enabled && dropout_p > 0.0 {
        make_dropout_masks(&data.basis, dropout_p, n_literals, seed)
    } else {
        (0..n_literals)
            .map(|_| DropoutMask::all_keep(data.basis.len(), seed))
            .collect()
    };
    let mut model = GclnModel::new_cnf(
        cfg.model_m,
        cfg.model_n,
        data.basis.len(),
        Activation::GaussEq,
        &masks,
        cfg.relax.clone(),
        cfg.gate_init_and,
        cfg.gate_init_or,
        seed,
    );
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = seed;
    train_cfg.project_weights = cfg.weight_reg;
    let report = train(&mut model, &data.sample.normalized, &train_cfg)?;

    let extraction = extract_formula(
        &model.to_tree(),
        &data.basis,
        cfg.gate_threshold,
        &cfg.rationalize,
        &data.matrix,
    );
    let mut warnings = extraction.warnings;

    // a literal often converges to a mixture of exact relations; harvest the
    // simple generators it is near as extra conjuncts
    let harvested = harvest_equalities(
        &model,
        &data.basis,
        &data.sample.normalized,
        &cfg.rationalize,
        &data.matrix,
        12,
    );

    // instantiate frozen initial values and re-filter on the original
    // program's data
    let instantiate = |f: Formula, warnings: &mut Vec<String>| -> Formula {
        if data.frozen_values.is_empty() {
            return f;
        }
        warnings.push(format!(
            "fractional run: instantiated {} frozen initial value(s)",
            data.frozen_values.len()
        ));
        f.substitute(&data.frozen_values).retain_conjuncts(|c| match c {
            Formula::Atom(a) => atom_holds_on_matrix(a, &data.matrix_int),
            _ => true,
        })
    };
    let structural = instantiate(extraction.formula, &mut warnings);
    let harvested = instantiate(
        Formula::and_all(harvested.into_iter().map(Formula::Atom).collect()),
        &mut warnings,
    );
    let formula = Formula::and_all(vec![structural, harvested]);
    Ok((formula, model, report, warnings))
}

/// Fits, prunes, rationalizes, and deduplicates inequality bounds.
///
/// Several restarts often settle on the same face; of the bounds sharing a
/// term support and coefficient-sign orientation only the tightest (highest
/// mean activation) survives, and the total is capped at the configured
/// budget, best first.
pub(crate) fn learn_bounds(cfg: &RunConfig, data: &RoundData, seed: u64) -> Vec<Atom> {
    let candidates = fit_bounds(&data.sample_bounds, &cfg.relax, &cfg.bounds, seed);
    type Orientation = Vec<(Term, std::cmp::Ordering)>;
    let mut best: BTreeMap<Orientation, (f64, Atom)> = BTreeMap::new();
    for cand in &candidates {
        let Some(atom) = bound_to_atom(
            cand,
            &data.matrix_int.basis,
            &cfg.rationalize,
            &data.matrix_int,
        ) else {
            continue;
        };
        let key: Orientation = atom
            .coeffs
            .iter()
            .map(|(t, c)| (t.clone(), c.cmp(&Rat::from_integer(0.into()))))
            .collect();
        let entry = best.entry(key).or_insert((f64::MIN, atom.clone()));
        if cand.mean_activation > entry.0 {
            *entry = (cand.mean_activation, atom);
        }
    }
    let mut ranked: Vec<(f64, Atom)> = best.into_values().collect();
    ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(&b.1)));
    ranked.truncate(cfg.bounds.max_kept);
    let atoms: BTreeSet<Atom> = ranked.into_iter().map(|(_, a)| a).collect();
    atoms.into_iter().collect()
}

fn assemble(formula_eq: &Formula, bound_atoms: &[Atom]) -> Formula {
    let mut parts: Vec<Formula> = Vec::new();
    let mut seen: BTreeSet<Formula> = BTreeSet::new();
    for c in formula_eq.conjuncts() {
        if seen.insert((*c).clone()) {
            parts.push((*c).clone());
        }
    }
    for a in bound_atoms {
        let f = Formula::Atom(a.clone());
        if seen.insert(f.clone()) {
            parts.push(f);
        }
    }
    Formula::and_all(parts)
}

/// The counterexample-guided loop: sample, train, extract, check; on a
/// counterexample, drop the falsified conjuncts and recheck, append the
/// counterexample's forward states to the training data, and retry with the
/// ladder (less dropout, then fractional sampling) until the solver accepts
/// or the attempt budget runs out.
pub fn cegis_loop(
    program: &LoopProgram,
    cfg: &RunConfig,
    solver: &SolverCmd,
) -> Result<CegisOutcome, crate::Error> {
    let timeout = std::time::Duration::from_secs(cfg.solver_timeout_secs);
    let gcd_mode = if cfg.gcd_axioms {
        GcdMode::Axiomatize
    } else {
        GcdMode::ManualCheck
    };
    let mut audit = AuditLog::default();
    let param_sets = enumerate_param_sets(program, cfg.sampling.budget, &cfg.sampling.probe_scales)?;
    let mut cex_states: Vec<Valuation> = Vec::new();
    let mut counterexamples: Vec<(String, Valuation)> = Vec::new();
    let mut best: Option<(usize, String)> = None;
    let mut last_outcome: Option<VerificationOutcome> = None;
    let mut last_report: Option<TrainReport> = None;
    let mut last_gate_distance = None;

    for round in 0..cfg.attempts {
        let seed = cfg.seed.wrapping_add((round as u64) * 0x9e3779b9);
        let (dropout_p, frac) = ladder_stage(cfg, round);
        let t0 = Instant::now();
        let data = build_round_data(program, cfg, &param_sets, &cex_states, frac)?;
        audit.push(
            round,
            "sample",
            json!({
                "param_sets": param_sets.len(),
                "rows": data.matrix.rows.len(),
                "fractional_traces": data.n_frac_traces,
                "frac_step": frac,
                "dropout": dropout_p,
            }),
            t0.elapsed().as_millis(),
        );
        let t0 = Instant::now();
        audit.push(
            round,
            "features",
            json!({
                "basis": data.basis.len(),
                "warnings": data.warnings,
            }),
            t0.elapsed().as_millis(),
        );

        let t0 = Instant::now();
        let (formula_eq, model, report, warnings) =
            learn_equalities(program, cfg, &data, dropout_p, seed)?;
        last_gate_distance = Some(model.max_gate_distance());
        audit.push(
            round,
            "train",
            json!({
                "epochs": report.epochs_run,
                "initial_loss": report.initial_loss,
                "final_loss": report.final_loss,
                "stop": report.stop_reason,
                "gate_distance": model.max_gate_distance(),
            }),
            t0.elapsed().as_millis(),
        );
        last_report = Some(report);

        let t0 = Instant::now();
        let bound_atoms = learn_bounds(cfg, &data, seed);
        audit.push(
            round,
            "bounds",
            json!({ "kept": bound_atoms.len() }),
            t0.elapsed().as_millis(),
        );

        let mut candidate = assemble(&formula_eq, &bound_atoms);
        audit.push(
            round,
            "extract",
            json!({
                "formula": candidate.to_string(),
                "warnings": warnings,
            }),
            0,
        );

        // check/repair loop
        for repair in 0..=cfg.max_repairs {
            let t0 = Instant::now();
            let problem = VerificationProblem {
                program: program.clone(),
                invariant: candidate.clone(),
                gcd_mode,
            };
            let outcome = check_invariant(&problem, solver, timeout)?;
            let statuses: Vec<String> = outcome
                .statuses()
                .iter()
                .map(|s| match s {
                    CondStatus::Valid => "valid".to_string(),
                    CondStatus::Counterexample(_) => "counterexample".to_string(),
                    CondStatus::Unknown(r) => format!("unknown: {r}"),
                })
                .collect();
            audit.push(
                round,
                "check",
                json!({
                    "repair": repair,
                    "invariant": candidate.to_string(),
                    "statuses": statuses,
                    "solver_ms": outcome.solver_time_ms,
                }),
                t0.elapsed().as_millis(),
            );

            let n_valid = outcome.statuses().iter().filter(|s| s.is_valid()).count();
            if best.as_ref().map(|(b, _)| n_valid > *b).unwrap_or(true) {
                best = Some((n_valid, candidate.to_string()));
            }

            if outcome.is_valid() || outcome.is_valid_modulo_gcd() {
                let status = if outcome.is_valid() {
                    InferStatus::Valid
                } else {
                    InferStatus::ValidModuloGcd
                };
                audit.push(round, "round_result", json!({ "result": "valid" }), 0);
                return Ok(CegisOutcome {
                    status,
                    invariant: Some(candidate),
                    best_candidate: best.map(|(_, f)| f),
                    rounds: round + 1,
                    counterexamples,
                    final_outcome: Some(outcome),
                    train_report: last_report,
                    gate_distance: last_gate_distance,
                    audit,
                });
            }

            let Some((cond, state)) = outcome
                .first_counterexample()
                .map(|(c, v)| (c, v.clone()))
            else {
                last_outcome = Some(outcome);
                break; // unknowns only: retrain on the next round
            };
            counterexamples.push((cond.name().to_string(), state.clone()));
            last_outcome = Some(outcome);

            // incorporate the counterexample into the training data and
            // remove the conjuncts it falsifies
            let mut falsifying_states: Vec<Valuation> = Vec::new();
            match cond {
                Condition::Initiation => {
                    // the whole trace from the offending parameters is real
                    // reachable data: any conjunct it violates is out
                    if let Ok(trace) =
                        program.execute_trace_unchecked(&state, cfg.sampling.max_iters)
                    {
                        falsifying_states.extend(trace.rows.iter().cloned());
                        cex_states.extend(trace.rows);
                    } else {
                        falsifying_states.push(program.init_state(&state)?);
                    }
                }
                Condition::Consecution => {
                    // the state itself satisfies the invariant; its forward
                    // orbit both retrains the model and prunes conjuncts
                    let mut s = state.clone();
                    cex_states.push(s.clone());
                    for _ in 0..cfg.cex_unroll {
                        if !eval_bool(&program.guard, &s)? {
                            break;
                        }
                        s = program.step_body(&s)?;
                        falsifying_states.push(s.clone());
                        cex_states.push(s.clone());
                    }
                }
                Condition::Sufficiency => {
                    // the invariant is too weak, not unsound; nothing to
                    // remove and no new reachable data
                }
            }

            let before = candidate.conjuncts().len();
            if !falsifying_states.is_empty() {
                candidate = candidate.retain_conjuncts(|c| {
                    falsifying_states
                        .iter()
                        .all(|st| c.eval(st).unwrap_or(false))
                });
            }
            let removed = before - candidate.conjuncts().len();
            if removed > 0 {
                audit.push(
                    round,
                    "repair",
                    json!({
                        "condition": cond.name(),
                        "removed_conjuncts": removed,
                    }),
                    0,
                );
                continue;
            }
            break; // nothing removable: retrain with the new data
        }
        audit.push(round, "round_result", json!({ "result": "retry" }), 0);
    }

    Ok(CegisOutcome {
        status: InferStatus::NotFound,
        invariant: None,
        best_candidate: best.map(|(_, f)| f),
        rounds: cfg.attempts,
        counterexamples,
        final_outcome: last_outcome,
        train_report: last_report,
        gate_distance: last_gate_distance,
        audit,
    })
}
