use super::data_filter::atom_holds_on_matrix;
use super::formula::{Atom, Formula, Rel};
use super::rationalize::{rationalize, RationalizationConfig};
use crate::features::{RawMatrix, Term};
use crate::gcln::{Activation, BoundCandidate, GatedNode};
use crate::rat::Rat;
use std::collections::BTreeMap;

/// Structural extraction result before coefficient rationalization.
#[derive(Debug, Clone)]
pub enum RawFormula {
    True,
    False,
    Atom {
        weights: Vec<f64>,
        bias: f64,
        activation: Activation,
    },
    And(Vec<RawFormula>),
    Or(Vec<RawFormula>),
    Not(Box<RawFormula>),
}

/// Recursive-descent extraction over the gated tree.
///
/// A gated conjunction keeps the children whose gates clear the threshold
/// (none at all yields `True`), a gated disjunction likewise (none yields
/// `False`), negations pass through, and leaves become raw atoms carrying
/// the literal's weights, bias, and activation kind.
pub fn extract_raw(node: &GatedNode, gate_threshold: f64) -> RawFormula {
    match node {
        GatedNode::TNorm { children, gates } => {
            let kept: Vec<RawFormula> = children
                .iter()
                .zip(gates)
                .filter(|(_, &g)| g > gate_threshold)
                .map(|(c, _)| extract_raw(c, gate_threshold))
                .collect();
            if kept.is_empty() {
                RawFormula::True
            } else {
                RawFormula::And(kept)
            }
        }
        GatedNode::TConorm { children, gates } => {
            let kept: Vec<RawFormula> = children
                .iter()
                .zip(gates)
                .filter(|(_, &g)| g > gate_threshold)
                .map(|(c, _)| extract_raw(c, gate_threshold))
                .collect();
            if kept.is_empty() {
                RawFormula::False
            } else {
                RawFormula::Or(kept)
            }
        }
        GatedNode::Negation(inner) => {
            RawFormula::Not(Box::new(extract_raw(inner, gate_threshold)))
        }
        GatedNode::Literal(lit) => RawFormula::Atom {
            weights: lit.weights.clone(),
            bias: lit.bias,
            activation: lit.activation,
        },
    }
}

#[derive(Debug, Clone)]
pub struct ExtractionOutcome {
    pub formula: Formula,
    pub warnings: Vec<String>,
}

fn activation_rel(activation: Activation) -> Rel {
    match activation {
        Activation::GaussEq => Rel::Eq,
        Activation::PbquGe => Rel::Ge,
        Activation::PbquLe => Rel::Le,
    }
}

fn candidate_atom(weights: &[Rat], constant: Rat, rel: Rel, basis: &[Term]) -> Atom {
    let mut coeffs: BTreeMap<Term, Rat> = BTreeMap::new();
    let mut constant = constant;
    for (term, w) in basis.iter().zip(weights) {
        if term.is_constant() {
            constant += w.clone();
        } else if let Some(existing) = coeffs.get_mut(term) {
            *existing += w.clone();
        } else {
            coeffs.insert(term.clone(), w.clone());
        }
    }
    Atom::new(rel, coeffs, constant)
}

/// Whether the atom's data-fit test targets every row (conjunctive
/// position) or the best-covered subset of rows (disjunctive position,
/// where only the whole clause has to cover every row).
#[derive(Clone, Copy, PartialEq)]
enum AtomCtx {
    Conjunctive,
    Disjunctive,
}

fn atom_truth_on_row(atom: &Atom, raw: &RawMatrix, row: usize) -> bool {
    let probe = RawMatrix {
        basis: raw.basis.clone(),
        rows: vec![raw.rows[row].clone()],
    };
    atom_holds_on_matrix(atom, &probe)
}

fn formula_truth_on_row(f: &Formula, raw: &RawMatrix, row: usize) -> bool {
    match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Atom(a) => atom_truth_on_row(a, raw, row),
        Formula::And(xs) => xs.iter().all(|x| formula_truth_on_row(x, raw, row)),
        Formula::Or(xs) => xs.iter().any(|x| formula_truth_on_row(x, raw, row)),
        Formula::Not(x) => !formula_truth_on_row(x, raw, row),
    }
}

/// Rounds a raw atom against the data. In conjunctive position the first
/// candidate (smallest maximum denominator) that holds exactly on every raw
/// row wins; under a negation the atom must instead fail on every row. In
/// disjunctive position the candidate covering the most rows wins, and the
/// enclosing clause is checked for full coverage afterwards.
pub fn finalize_atom(
    weights: &[f64],
    bias: f64,
    activation: Activation,
    basis: &[Term],
    rat_cfg: &RationalizationConfig,
    raw: &RawMatrix,
    negated: bool,
) -> Option<Atom> {
    finalize_atom_ctx(
        weights,
        bias,
        activation,
        basis,
        rat_cfg,
        raw,
        negated,
        AtomCtx::Conjunctive,
    )
}

#[allow(clippy::too_many_arguments)]
fn finalize_atom_ctx(
    weights: &[f64],
    bias: f64,
    activation: Activation,
    basis: &[Term],
    rat_cfg: &RationalizationConfig,
    raw: &RawMatrix,
    negated: bool,
    ctx: AtomCtx,
) -> Option<Atom> {
    let rel = activation_rel(activation);
    let mut best: Option<(usize, Atom)> = None;
    for (ws, b) in rationalize(weights, bias, rat_cfg) {
        let atom = candidate_atom(&ws, b, rel, basis);
        if atom.is_degenerate() {
            continue;
        }
        let covered = (0..raw.rows.len())
            .filter(|&i| atom_truth_on_row(&atom, raw, i) != negated)
            .count();
        match ctx {
            AtomCtx::Conjunctive => {
                if covered == raw.rows.len() {
                    return Some(atom);
                }
            }
            AtomCtx::Disjunctive => {
                if covered == raw.rows.len() {
                    return Some(atom);
                }
                if covered > 0 && best.as_ref().map(|(c, _)| covered > *c).unwrap_or(true) {
                    best = Some((covered, atom));
                }
            }
        }
    }
    best.map(|(_, a)| a)
}

fn finalize(
    raw_formula: &RawFormula,
    basis: &[Term],
    rat_cfg: &RationalizationConfig,
    raw: &RawMatrix,
    warnings: &mut Vec<String>,
    negated: bool,
    ctx: AtomCtx,
) -> Option<Formula> {
    match raw_formula {
        RawFormula::True => Some(Formula::True),
        RawFormula::False => Some(Formula::False),
        RawFormula::Atom {
            weights,
            bias,
            activation,
        } => match finalize_atom_ctx(
            weights, *bias, *activation, basis, rat_cfg, raw, negated, ctx,
        ) {
            Some(atom) => Some(Formula::Atom(atom)),
            None => {
                warnings.push("literal dropped: no rounded candidate fits the data".into());
                None
            }
        },
        RawFormula::And(children) => {
            let kept: Vec<Formula> = children
                .iter()
                .filter_map(|c| {
                    finalize(c, basis, rat_cfg, raw, warnings, negated, AtomCtx::Conjunctive)
                })
                .collect();
            Some(Formula::and_all(kept))
        }
        RawFormula::Or(children) => {
            let kept: Vec<Formula> = children
                .iter()
                .filter_map(|c| {
                    finalize(c, basis, rat_cfg, raw, warnings, negated, AtomCtx::Disjunctive)
                })
                .collect();
            if kept.is_empty() {
                warnings.push("disjunction dropped: no disjunct fits the data".into());
                return None;
            }
            let clause = if kept.len() == 1 {
                kept.into_iter().next().unwrap()
            } else {
                Formula::Or(kept)
            };
            // the clause as a whole must cover every row
            let covered = (0..raw.rows.len())
                .all(|i| formula_truth_on_row(&clause, raw, i) != negated);
            if covered {
                Some(clause)
            } else {
                warnings.push("disjunction dropped: clause does not cover the data".into());
                None
            }
        }
        RawFormula::Not(inner) => finalize(inner, basis, rat_cfg, raw, warnings, !negated, ctx)
            .map(|f| Formula::Not(Box::new(f))),
    }
}

/// Full extraction: Algorithm-1 descent with gate threshold 0.5, followed by
/// coefficient rationalization and exact data filtering of every atom.
///
/// Warns about half-open gates (in `(0.1, 0.9)`) and returns `True` with a
/// warning for a vacuous model (every gate below threshold).
pub fn extract_formula(
    tree: &GatedNode,
    basis: &[Term],
    gate_threshold: f64,
    rat_cfg: &RationalizationConfig,
    raw: &RawMatrix,
) -> ExtractionOutcome {
    let mut warnings = Vec::new();
    let mut open_gates = 0usize;
    collect_open_gates(tree, &mut open_gates);
    if open_gates > 0 {
        warnings.push(format!(
            "{open_gates} gate(s) not saturated (value in (0.1, 0.9))"
        ));
    }
    let raw_formula = extract_raw(tree, gate_threshold);
    if matches!(raw_formula, RawFormula::True) {
        warnings.push("vacuous model: no gate above the extraction threshold".into());
    }
    let formula = finalize(
        &raw_formula,
        basis,
        rat_cfg,
        raw,
        &mut warnings,
        false,
        AtomCtx::Conjunctive,
    )
    .unwrap_or(Formula::True);
    ExtractionOutcome { formula, warnings }
}

fn collect_open_gates(node: &GatedNode, open: &mut usize) {
    match node {
        GatedNode::TNorm { children, gates } | GatedNode::TConorm { children, gates } => {
            for &g in gates {
                if g > 0.1 && g < 0.9 {
                    *open += 1;
                }
            }
            for c in children {
                collect_open_gates(c, open);
            }
        }
        GatedNode::Negation(inner) => collect_open_gates(inner, open),
        GatedNode::Literal(_) => {}
    }
}

/// Converts a fitted bound into a data-checked atom (`w . terms + b >= 0`).
pub fn bound_to_atom(
    bound: &BoundCandidate,
    basis: &[Term],
    rat_cfg: &RationalizationConfig,
    raw: &RawMatrix,
) -> Option<Atom> {
    let mut weights = vec![0.0; basis.len()];
    for (w, &i) in bound.weights.iter().zip(&bound.term_indices) {
        weights[i] = *w;
    }
    finalize_atom(
        &weights,
        bound.bias,
        Activation::PbquGe,
        basis,
        rat_cfg,
        raw,
        false,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dlogic::RelaxationConfig;
    use crate::features::DropoutMask;
    use crate::gcln::{Clause, GclnModel, Literal};
    use crate::rat::rat;

    fn lit(dim: usize, weights: &[(usize, f64)], bias: f64, activation: Activation) -> Literal {
        let mut l = Literal::new(dim, activation, &DropoutMask::all_keep(dim, 0));
        for &(i, w) in weights {
            l.weights[i] = w;
        }
        l.bias = bias;
        l
    }

    fn basis_1xyz() -> Vec<Term> {
        vec![Term::one(), Term::var("x"), Term::var("y"), Term::var("z")]
    }

    /// Data rows satisfying (3y - 3z - 2 = 0) and (x - 3z = 0 or x+y+z = 0).
    fn golden_matrix() -> RawMatrix {
        let mut rows = Vec::new();
        for i in -5..=5i64 {
            let z = crate::rat::ratio(i, 3);
            let y = crate::rat::ratio(i + 2, 3); // 3y - 3z - 2 = 0
            let x = rat(i); // x - 3z = 0
            rows.push(vec![rat(1), x, y, z]);
        }
        for i in -5..=5i64 {
            let z = crate::rat::ratio(i, 3);
            let y = crate::rat::ratio(i + 2, 3);
            let x = -(y.clone() + z.clone()); // x + y + z = 0
            rows.push(vec![rat(1), x, y, z]);
        }
        RawMatrix {
            basis: basis_1xyz(),
            rows,
        }
    }

    fn golden_model(scale: f64) -> GclnModel {
        // weights stored scaled (as a trained model would have them)
        let a1 = lit(
            4,
            &[(0, -2.0 * scale), (2, 3.0 * scale), (3, -3.0 * scale)],
            0.0,
            Activation::GaussEq,
        );
        let dead = lit(4, &[(1, 0.3)], 0.1, Activation::GaussEq);
        let a2 = lit(4, &[(1, scale), (3, -3.0 * scale)], 0.0, Activation::GaussEq);
        let a3 = lit(
            4,
            &[(1, scale), (2, scale), (3, scale)],
            0.0,
            Activation::GaussEq,
        );
        GclnModel {
            clauses: vec![
                Clause {
                    literals: vec![a1, dead],
                    or_gates: vec![0.97, 0.02],
                },
                Clause {
                    literals: vec![a2, a3],
                    or_gates: vec![0.93, 0.99],
                },
            ],
            and_gates: vec![0.98, 0.96],
            relax: RelaxationConfig::default(),
            learn_bias: false,
        }
    }

    #[test]
    fn extracts_the_two_level_golden_formula() {
        let model = golden_model(0.41);
        let out = extract_formula(
            &model.to_tree(),
            &basis_1xyz(),
            0.5,
            &RationalizationConfig::default(),
            &golden_matrix(),
        );
        let Formula::And(parts) = &out.formula else {
            panic!("expected conjunction: {}", out.formula)
        };
        assert_eq!(parts.len(), 2);
        let Formula::Atom(eq) = &parts[0] else {
            panic!("expected atom first")
        };
        assert_eq!(eq.to_string(), "3*y = 3*z + 2");
        let Formula::Or(disj) = &parts[1] else {
            panic!("expected disjunction second: {}", parts[1])
        };
        let strs: Vec<String> = disj.iter().map(|d| d.to_string()).collect();
        assert_eq!(strs, vec!["x = 3*z", "x + y + z = 0"]);
    }

    #[test]
    fn all_gates_low_extracts_true_with_warning() {
        let mut model = golden_model(0.4);
        model.and_gates = vec![0.01, 0.03];
        let out = extract_formula(
            &model.to_tree(),
            &basis_1xyz(),
            0.5,
            &RationalizationConfig::default(),
            &golden_matrix(),
        );
        assert_eq!(out.formula, Formula::True);
        assert!(out.warnings.iter().any(|w| w.contains("vacuous")));
    }

    #[test]
    fn single_pbqu_literal_extracts_a_bound_atom() {
        // weights (1, 0, ...), bias -c: term1 - c >= 0, i.e. x >= c
        let basis = vec![Term::one(), Term::var("x")];
        let raw = RawMatrix {
            basis: basis.clone(),
            rows: (3..10).map(|i| vec![rat(1), rat(i)]).collect(),
        };
        let l = lit(2, &[(1, 1.0)], -3.0, Activation::PbquGe);
        let node = GatedNode::TNorm {
            children: vec![GatedNode::Literal(l)],
            gates: vec![1.0],
        };
        let out = extract_formula(
            &node,
            &basis,
            0.5,
            &RationalizationConfig::default(),
            &raw,
        );
        assert_eq!(out.formula.to_string(), "x >= 3");
    }

    #[test]
    fn negation_nodes_extract_for_hand_built_models() {
        let inner = lit(2, &[(1, 1.0)], 0.0, Activation::GaussEq);
        let node = GatedNode::TNorm {
            children: vec![GatedNode::Negation(Box::new(GatedNode::Literal(inner)))],
            gates: vec![1.0],
        };
        let basis = vec![Term::one(), Term::var("x")];
        // data never touches x = 0, so !(x = 0) fits and survives
        let raw = RawMatrix {
            basis: basis.clone(),
            rows: vec![vec![rat(1), rat(4)], vec![rat(1), rat(7)]],
        };
        let out = extract_formula(
            &node,
            &basis,
            0.5,
            &RationalizationConfig::default(),
            &raw,
        );
        assert_eq!(out.formula.to_string(), "!(x = 0)");

        // a row on the hyperplane falsifies the negation, dropping it
        let raw_on = RawMatrix {
            basis: basis.clone(),
            rows: vec![vec![rat(1), rat(0)]],
        };
        let out = extract_formula(
            &node,
            &basis,
            0.5,
            &RationalizationConfig::default(),
            &raw_on,
        );
        assert!(matches!(out.formula, Formula::True));
    }
}
