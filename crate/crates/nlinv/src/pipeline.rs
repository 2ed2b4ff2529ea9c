//! End-to-end orchestration: infer an invariant from a `.loop` file, sweep a
//! corpus, measure convergence stability, and check user-supplied
//! invariants.

use crate::checker::{
    cegis_loop, check_invariant, discover_solver, AuditLog, CegisOutcome, CondStatus, GcdMode,
    InferStatus, VerificationOutcome, VerificationProblem,
};
use crate::config::RunConfig;
use crate::dsl::{enumerate_param_sets, parse_program_named, BoolExpr, LoopProgram, RelOp};
use crate::extract::{Atom, Formula, Rel};
use crate::features::Term;
use crate::poly::{expr_to_poly, Poly, PolyAtom};
use crate::rat::Rat;
use crate::Error;
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

/// Ablation switches for the bench harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    Normalization,
    WeightReg,
    Dropout,
    FracSampling,
}

impl Ablation {
    pub fn parse(s: &str) -> Option<Ablation> {
        match s {
            "normalization" | "data-norm" => Some(Ablation::Normalization),
            "weight-reg" | "weight-regularization" => Some(Ablation::WeightReg),
            "dropout" => Some(Ablation::Dropout),
            "frac-sampling" | "fractional-sampling" => Some(Ablation::FracSampling),
            _ => None,
        }
    }

    pub fn apply(self, cfg: &mut RunConfig) {
        match self {
            Ablation::Normalization => cfg.normalize = false,
            Ablation::WeightReg => cfg.weight_reg = false,
            Ablation::Dropout => cfg.dropout_enabled = false,
            Ablation::FracSampling => cfg.frac.enabled = false,
        }
    }
}

/// Result record of one inference run. Serializes deterministically; the
/// `timings_ms` map and per-event audit times are the only fields that vary
/// across identical runs.
#[derive(Debug, Serialize)]
pub struct InferResult {
    pub problem: String,
    pub status: InferStatus,
    pub invariant: Option<String>,
    pub invariant_smt: Option<String>,
    pub rounds: usize,
    pub seed: u64,
    pub solver_statuses: Option<Vec<String>>,
    pub gate_distance: Option<f64>,
    pub counterexamples: usize,
    pub best_candidate: Option<String>,
    pub timings_ms: BTreeMap<String, u128>,
    pub config: RunConfig,
    pub audit: AuditLog,
}

impl InferResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    /// JSON with every timing field zeroed: identical (config, seed, corpus)
    /// runs must produce byte-identical comparable records.
    pub fn to_comparable_json(&self) -> String {
        let mut v: serde_json::Value = serde_json::to_value(self).expect("result serializes");
        v["timings_ms"] = serde_json::json!({});
        zero_ms(&mut v);
        serde_json::to_string_pretty(&v).expect("value serializes")
    }
}

fn zero_ms(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(map) => {
            for (k, val) in map.iter_mut() {
                if k == "ms" || k == "solver_ms" || k == "solver_time_ms" {
                    *val = serde_json::json!(0);
                } else {
                    zero_ms(val);
                }
            }
        }
        serde_json::Value::Array(items) => {
            for item in items.iter_mut() {
                zero_ms(item);
            }
        }
        _ => {}
    }
}

fn outcome_statuses(outcome: &VerificationOutcome) -> Vec<String> {
    outcome
        .statuses()
        .iter()
        .map(|s| match s {
            CondStatus::Valid => "valid".to_string(),
            CondStatus::Counterexample(_) => "counterexample".to_string(),
            CondStatus::Unknown(r) => format!("unknown: {r}"),
        })
        .collect()
}

pub fn load_program(path: &Path) -> Result<LoopProgram, Error> {
    let text = std::fs::read_to_string(path)?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "program".into());
    Ok(parse_program_named(&text, &stem)?)
}

fn finish_result(
    program: &LoopProgram,
    cfg: &RunConfig,
    outcome: CegisOutcome,
    wall: Instant,
) -> InferResult {
    let mut timings = BTreeMap::new();
    timings.insert("total".to_string(), wall.elapsed().as_millis());
    InferResult {
        problem: program.name.clone(),
        status: outcome.status,
        invariant: outcome.invariant.as_ref().map(|f| f.to_string()),
        invariant_smt: outcome
            .invariant
            .as_ref()
            .and_then(|f| crate::checker::formula_to_smt(f).ok()),
        rounds: outcome.rounds,
        seed: cfg.seed,
        solver_statuses: outcome.final_outcome.as_ref().map(outcome_statuses),
        gate_distance: outcome.gate_distance,
        counterexamples: outcome.counterexamples.len(),
        best_candidate: outcome.best_candidate,
        timings_ms: timings,
        config: cfg.clone(),
        audit: outcome.audit,
    }
}

/// Full pipeline on one program file.
pub fn infer(path: &Path, cfg: &RunConfig) -> Result<InferResult, Error> {
    let program = load_program(path)?;
    infer_program(&program, cfg)
}

pub fn infer_program(program: &LoopProgram, cfg: &RunConfig) -> Result<InferResult, Error> {
    cfg.validate()?;
    let solver = discover_solver(cfg.solver.as_deref())?;
    let wall = Instant::now();
    let outcome = cegis_loop(program, cfg, &solver)?;
    Ok(finish_result(program, cfg, outcome, wall))
}

/// Trace generation only: CSV of all sampled traces (shared header).
pub fn trace_csv(path: &Path, cfg: &RunConfig) -> Result<String, Error> {
    let program = load_program(path)?;
    let param_sets =
        enumerate_param_sets(&program, cfg.sampling.budget, &cfg.sampling.probe_scales)?;
    let mut out = String::new();
    for (i, params) in param_sets.iter().enumerate() {
        let trace = program.execute_trace_unchecked(params, cfg.sampling.max_iters)?;
        let csv = trace.to_csv(&program);
        if i == 0 {
            out.push_str(&csv);
        } else {
            // skip the repeated header
            if let Some(pos) = csv.find('\n') {
                out.push_str(&csv[pos + 1..]);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct BenchRow {
    pub problem: String,
    pub status: String,
    pub rounds: usize,
    pub wall_ms: u128,
    pub invariant: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub solved: usize,
    pub total: usize,
}

impl BenchReport {
    /// Fixed-width status table.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<12} {:<18} {:>6} {:>9}\n",
            "problem", "status", "rounds", "time"
        ));
        for row in &self.rows {
            out.push_str(&format!(
                "{:<12} {:<18} {:>6} {:>8.1}s\n",
                row.problem,
                row.status,
                row.rounds,
                row.wall_ms as f64 / 1000.0
            ));
        }
        out.push_str(&format!("solved {}/{}\n", self.solved, self.total));
        out
    }
}

/// Runs `infer` on every `.loop` file in a directory; per-problem failures
/// become table rows instead of aborting the sweep.
pub fn bench(dir: &Path, cfg: &RunConfig, ablate: Option<Ablation>) -> Result<BenchReport, Error> {
    let mut cfg = cfg.clone();
    if let Some(a) = ablate {
        a.apply(&mut cfg);
    }
    let mut files: Vec<std::path::PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map(|x| x == "loop").unwrap_or(false))
        .collect();
    files.sort();

    let mut rows = Vec::new();
    let mut solved = 0usize;
    for file in &files {
        let wall = Instant::now();
        match infer(file, &cfg) {
            Ok(res) => {
                let ok = matches!(res.status, InferStatus::Valid | InferStatus::ValidModuloGcd);
                if ok {
                    solved += 1;
                }
                rows.push(BenchRow {
                    problem: res.problem,
                    status: match res.status {
                        InferStatus::Valid => "valid".into(),
                        InferStatus::ValidModuloGcd => "valid-modulo-gcd".into(),
                        InferStatus::NotFound => "not-found".into(),
                    },
                    rounds: res.rounds,
                    wall_ms: wall.elapsed().as_millis(),
                    invariant: res.invariant,
                });
            }
            Err(e) => rows.push(BenchRow {
                problem: file
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                status: format!("error: {e}"),
                rounds: 0,
                wall_ms: wall.elapsed().as_millis(),
                invariant: None,
            }),
        }
    }
    let total = rows.len();
    Ok(BenchReport {
        rows,
        solved,
        total,
    })
}

#[derive(Debug, Serialize)]
pub struct StabilityReport {
    pub problem: String,
    pub runs: usize,
    pub per_seed: Vec<(u64, bool)>,
    pub rate: f64,
    /// Ungated baseline (gates frozen at 1, no gate regularization) on the
    /// same seeds, when requested.
    pub baseline_per_seed: Option<Vec<(u64, bool)>>,
    pub baseline_rate: Option<f64>,
}

/// Convergence rate over seeded single-attempt runs (no retry ladder).
pub fn stability(
    path: &Path,
    runs: usize,
    cfg: &RunConfig,
    with_baseline: bool,
) -> Result<StabilityReport, Error> {
    assert!(runs >= 1);
    let program = load_program(path)?;
    let solver = discover_solver(cfg.solver.as_deref())?;

    let single = |seed: u64, baseline: bool| -> Result<bool, Error> {
        let mut run_cfg = cfg.clone();
        run_cfg.attempts = 1;
        run_cfg.seed = seed;
        run_cfg.train.freeze_gates = baseline;
        let outcome = cegis_loop(&program, &run_cfg, &solver)?;
        Ok(matches!(
            outcome.status,
            InferStatus::Valid | InferStatus::ValidModuloGcd
        ))
    };

    let seeds: Vec<u64> = (0..runs as u64)
        .map(|i| cfg.seed.wrapping_add(i.wrapping_mul(7919)))
        .collect();
    let mut per_seed = Vec::new();
    for &s in &seeds {
        per_seed.push((s, single(s, false)?));
    }
    let rate = per_seed.iter().filter(|(_, ok)| *ok).count() as f64 / runs as f64;

    let (baseline_per_seed, baseline_rate) = if with_baseline {
        let mut b = Vec::new();
        for &s in &seeds {
            b.push((s, single(s, true)?));
        }
        let r = b.iter().filter(|(_, ok)| *ok).count() as f64 / runs as f64;
        (Some(b), Some(r))
    } else {
        (None, None)
    };

    Ok(StabilityReport {
        problem: program.name,
        runs,
        per_seed,
        rate,
        baseline_per_seed,
        baseline_rate,
    })
}

/// Converts an annotation-style boolean expression into a formula over
/// basis terms (used by the `check` verb).
pub fn formula_from_bool(b: &BoolExpr) -> Result<Formula, Error> {
    Ok(match b {
        BoolExpr::Lit(true) => Formula::True,
        BoolExpr::Lit(false) => Formula::False,
        BoolExpr::Rel(op, lhs, rhs) => {
            let poly = expr_to_poly(lhs)
                .and_then(|l| Ok(l.sub(&expr_to_poly(rhs)?)))
                .map_err(|e| Error::Other(format!("invariant expression: {e}")))?;
            let rel = match op {
                RelOp::Eq => Rel::Eq,
                RelOp::Ne => Rel::Ne,
                RelOp::Le => Rel::Le,
                RelOp::Ge => Rel::Ge,
                RelOp::Lt => Rel::Lt,
                RelOp::Gt => Rel::Gt,
            };
            Formula::Atom(atom_from_poly(&poly, rel)?)
        }
        BoolExpr::And(a, b) => {
            Formula::and_all(vec![formula_from_bool(a)?, formula_from_bool(b)?])
        }
        BoolExpr::Or(a, b) => Formula::Or(vec![formula_from_bool(a)?, formula_from_bool(b)?]),
        BoolExpr::Not(a) => Formula::Not(Box::new(formula_from_bool(a)?)),
    })
}

fn atom_from_poly(poly: &Poly, rel: Rel) -> Result<Atom, Error> {
    let mut coeffs: BTreeMap<Term, Rat> = BTreeMap::new();
    let mut constant = Rat::from_integer(0.into());
    for (monomial, coeff) in &poly.0 {
        if monomial.is_empty() {
            constant += coeff;
            continue;
        }
        let mut vars: BTreeMap<String, u32> = BTreeMap::new();
        let mut ext: Option<(String, String, String)> = None;
        for (atom, exp) in monomial {
            match atom {
                PolyAtom::Var(v) => {
                    vars.insert(v.clone(), *exp);
                }
                PolyAtom::Ext(name, a, b) => {
                    if *exp > 1 || ext.is_some() {
                        return Err(Error::Other(
                            "external calls may appear at most linearly per atom".into(),
                        ));
                    }
                    ext = Some((name.clone(), a.clone(), b.clone()));
                }
            }
        }
        let term = match (ext, vars.is_empty()) {
            (Some((name, a, b)), true) => Term::External { name, a, b },
            (Some(_), false) => {
                return Err(Error::Other(
                    "external calls cannot be multiplied by variables".into(),
                ))
            }
            (None, _) => Term::Monomial(vars),
        };
        *coeffs.entry(term).or_insert_with(|| Rat::from_integer(0.into())) += coeff;
    }
    Ok(Atom::new(rel, coeffs, constant))
}

#[derive(Debug, Serialize)]
pub struct CheckResult {
    pub problem: String,
    pub invariant: String,
    pub statuses: Vec<String>,
    pub valid: bool,
    pub valid_modulo_gcd: bool,
}

/// Verifies a user-supplied invariant (annotation syntax) against a program.
pub fn check_file(path: &Path, invariant_text: &str, cfg: &RunConfig) -> Result<CheckResult, Error> {
    let program = load_program(path)?;
    let parsed = crate::dsl::parse_program_named(
        &format!("//pre: {invariant_text}\nwhile (1 < 0) {{ }}"),
        "inv",
    )
    .map_err(|e| Error::Other(format!("invariant parse: {e}")))?;
    let formula = formula_from_bool(&parsed.pre)?;
    let solver = discover_solver(cfg.solver.as_deref())?;
    let problem = VerificationProblem {
        program: program.clone(),
        invariant: formula.clone(),
        gcd_mode: if cfg.gcd_axioms {
            GcdMode::Axiomatize
        } else {
            GcdMode::ManualCheck
        },
    };
    let outcome = check_invariant(
        &problem,
        &solver,
        std::time::Duration::from_secs(cfg.solver_timeout_secs),
    )?;
    Ok(CheckResult {
        problem: program.name,
        invariant: formula.to_string(),
        statuses: outcome_statuses(&outcome),
        valid: outcome.is_valid(),
        valid_modulo_gcd: outcome.is_valid_modulo_gcd(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ablation_parsing_and_switches() {
        let mut cfg = RunConfig::default();
        Ablation::parse("normalization").unwrap().apply(&mut cfg);
        assert!(!cfg.normalize);
        Ablation::parse("dropout").unwrap().apply(&mut cfg);
        assert!(!cfg.dropout_enabled);
        Ablation::parse("weight-reg").unwrap().apply(&mut cfg);
        assert!(!cfg.weight_reg);
        Ablation::parse("frac-sampling").unwrap().apply(&mut cfg);
        assert!(!cfg.frac.enabled);
        assert!(Ablation::parse("nonsense").is_none());
    }

    #[test]
    fn formula_from_annotation_expands_polynomials() {
        let p = crate::dsl::parse_program(
            "//pre: s == (a + 1) * (a + 1) && t == 2 * a + 1\nx = 0;\nwhile (x < 1) { x += 1; }",
        )
        .unwrap();
        let f = formula_from_bool(&p.pre).unwrap();
        let s = f.to_string();
        assert!(s.contains("a^2"), "{s}");
        let atoms = f.atoms();
        assert_eq!(atoms.len(), 2);
    }

    #[test]
    fn external_atoms_convert() {
        let p = crate::dsl::parse_program(
            "//pre: g == gcd(a, b)\nx = 0;\nwhile (x < 1) { x += 1; }",
        )
        .unwrap();
        let f = formula_from_bool(&p.pre).unwrap();
        assert!(f.to_string().contains("gcd(a,b)"), "{f}");
    }
}
