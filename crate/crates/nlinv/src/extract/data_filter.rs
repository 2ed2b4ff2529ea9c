use super::formula::{Atom, Rel};
use crate::features::{RawMatrix, SampleMatrix};
use crate::gcln::{Activation, GclnModel};
use crate::rat::{to_f64, Rat};
use num_traits::{Signed, Zero};

/// Evaluates an atom on one raw row via basis column lookup.
///
/// Returns `None` when the atom references a term outside the basis.
fn lhs_on_row(atom: &Atom, basis_cols: &[(usize, Rat)], constant: &Rat, row: &[Rat]) -> Rat {
    let _ = atom;
    let mut acc = constant.clone();
    for (col, coeff) in basis_cols {
        acc += coeff * &row[*col];
    }
    acc
}

fn atom_columns(atom: &Atom, raw: &RawMatrix) -> Option<Vec<(usize, Rat)>> {
    atom.coeffs
        .iter()
        .map(|(t, c)| {
            raw.basis
                .iter()
                .position(|bt| bt == t)
                .map(|i| (i, c.clone()))
        })
        .collect()
}

fn rel_holds(rel: Rel, v: &Rat) -> bool {
    match rel {
        Rel::Eq => v.is_zero(),
        Rel::Ge => !v.is_negative(),
        Rel::Le => !v.is_positive(),
        Rel::Gt => v.is_positive(),
        Rel::Lt => v.is_negative(),
        Rel::Ne => !v.is_zero(),
    }
}

/// Exact universal check of an atom over every raw row: equalities must be
/// exactly zero, inequalities must have the exact sign.
pub fn atom_holds_on_matrix(atom: &Atom, raw: &RawMatrix) -> bool {
    let Some(cols) = atom_columns(atom, raw) else {
        return false;
    };
    raw.rows
        .iter()
        .all(|row| rel_holds(atom.rel, &lhs_on_row(atom, &cols, &atom.constant, row)))
}

/// Keeps the atoms that hold exactly on every raw row.
///
/// Monotone in the data: rows can only remove atoms, never add them.
pub fn filter_against_data(atoms: &[Atom], raw: &RawMatrix) -> Vec<Atom> {
    atoms
        .iter()
        .filter(|a| atom_holds_on_matrix(a, raw))
        .cloned()
        .collect()
}

/// Removes inequality literals whose mean PBQU activation over the raw-scale
/// data falls below the threshold (loose fits), by closing their OR gate.
/// Equality literals are untouched; tight bounds survive.
pub fn prune_loose_bounds(model: &GclnModel, matrix: &SampleMatrix, threshold: f64) -> GclnModel {
    let rows: Vec<Vec<f64>> = matrix
        .raw
        .iter()
        .map(|r| r.iter().map(to_f64).collect())
        .collect();
    let mut out = model.clone();
    for clause in out.clauses.iter_mut() {
        for (k, lit) in clause.literals.iter().enumerate() {
            if matches!(lit.activation, Activation::GaussEq) {
                continue;
            }
            let mean = rows
                .iter()
                .map(|r| lit.activate(lit.linear(r), &model.relax, model.relax.sigma))
                .sum::<f64>()
                / rows.len().max(1) as f64;
            if mean < threshold {
                clause.or_gates[k] = 0.0;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dlogic::RelaxationConfig;
    use crate::extract::Formula;
    use crate::features::{normalize_rows, DropoutMask, Term};
    use crate::gcln::{Clause, Literal};
    use crate::rat::rat;
    use std::collections::BTreeMap;

    fn atom(rel: Rel, pairs: &[(Term, i64)], constant: i64) -> Atom {
        let coeffs: BTreeMap<Term, Rat> = pairs
            .iter()
            .map(|(t, c)| (t.clone(), rat(*c)))
            .collect();
        Atom::new(rel, coeffs, rat(constant))
    }

    /// Rows generated from 2*t1 - t2 = 0.
    fn relation_matrix() -> RawMatrix {
        RawMatrix {
            basis: vec![Term::one(), Term::var("t1"), Term::var("t2")],
            rows: (0..10).map(|i| vec![rat(1), rat(i), rat(2 * i)]).collect(),
        }
    }

    #[test]
    fn keeps_atoms_that_generated_the_data() {
        let m = relation_matrix();
        let good = atom(Rel::Eq, &[(Term::var("t1"), 2), (Term::var("t2"), -1)], 0);
        let bad = atom(Rel::Eq, &[(Term::var("t1"), 2), (Term::var("t2"), -1)], 1);
        let kept = filter_against_data(&[good.clone(), bad], &m);
        assert_eq!(kept, vec![good]);
    }

    #[test]
    fn one_violating_row_discards_the_atom() {
        let mut m = relation_matrix();
        let good = atom(Rel::Ge, &[(Term::var("t1"), 1)], 0);
        assert!(atom_holds_on_matrix(&good, &m));
        m.rows.push(vec![rat(1), rat(-1), rat(-2)]);
        assert!(!atom_holds_on_matrix(&good, &m));
    }

    #[test]
    fn filtering_is_monotone_in_rows() {
        let m = relation_matrix();
        let atoms = vec![
            atom(Rel::Eq, &[(Term::var("t1"), 2), (Term::var("t2"), -1)], 0),
            atom(Rel::Ge, &[(Term::var("t1"), 1)], 0),
            atom(Rel::Le, &[(Term::var("t1"), 1)], -100),
        ];
        let before = filter_against_data(&atoms, &m);
        let mut extended = m.clone();
        extended.rows.push(vec![rat(1), rat(200), rat(400)]);
        let after = filter_against_data(&atoms, &extended);
        for a in &after {
            assert!(before.contains(a), "new rows may only remove atoms");
        }
    }

    #[test]
    fn sqrt_candidates_keep_lower_bound_discard_inflated_one() {
        // rows of (1, a, a^2, n) from the integer-sqrt loop with n = 24
        let p = crate::dsl::parse_program(
            "//pre: n >= 0\na = 0; s = 1; t = 1;\nwhile (s <= n) { a += 1; t += 2; s += t; }",
        )
        .unwrap();
        let basis = vec![
            Term::one(),
            Term::var("a"),
            Term::monomial(&[("a", 2)]),
            Term::var("n"),
        ];
        let traces: Vec<_> = (0..25)
            .map(|n| {
                p.execute_trace(&[("n".to_string(), rat(n))].into(), 50)
                    .unwrap()
            })
            .collect();
        let m = crate::features::build_raw_matrix(&p, &traces, &basis).unwrap();
        let a2 = Term::monomial(&[("a", 2)]);
        // a^2 <= n holds on every logged state; a^2 >= n + 1 does not
        let tight = atom(Rel::Le, &[(a2.clone(), 1), (Term::var("n"), -1)], 0);
        let artifact = atom(Rel::Ge, &[(a2, 1), (Term::var("n"), -1)], -1);
        let kept = filter_against_data(&[tight.clone(), artifact], &m);
        assert_eq!(kept, vec![tight]);
    }

    #[test]
    fn loose_bound_pruning_by_mean_activation() {
        // data on [0, 20]: a literal supporting the face x >= 0 stays, one
        // offset by 10*c2 has activation ~1/101 < 0.04 and is pruned
        let basis = vec![Term::one(), Term::var("x")];
        let raw = RawMatrix {
            basis: basis.clone(),
            rows: (0..=20).map(|i| vec![rat(1), rat(i)]).collect(),
        };
        let sm = normalize_rows(&raw, None);
        let relax = RelaxationConfig::default();
        let mk = |bias: f64| {
            let mut l = Literal::new(2, Activation::PbquGe, &DropoutMask::all_keep(2, 0));
            l.weights[1] = 1.0;
            l.bias = bias;
            l
        };
        let model = GclnModel {
            clauses: vec![Clause {
                literals: vec![mk(0.0), mk(10.0 * relax.c2)],
                or_gates: vec![1.0, 1.0],
            }],
            and_gates: vec![1.0],
            relax,
            learn_bias: true,
        };
        let pruned = prune_loose_bounds(&model, &sm, 0.8);
        assert_eq!(pruned.clauses[0].or_gates[0], 1.0, "tight bound kept");
        assert_eq!(pruned.clauses[0].or_gates[1], 0.0, "loose bound pruned");
        // threshold 0 prunes nothing
        let untouched = prune_loose_bounds(&model, &sm, 0.0);
        assert_eq!(untouched.clauses[0].or_gates, vec![1.0, 1.0]);
    }

    #[test]
    fn formula_retain_conjuncts_drops_failed_parts() {
        let m = relation_matrix();
        let good = atom(Rel::Eq, &[(Term::var("t1"), 2), (Term::var("t2"), -1)], 0);
        let bad = atom(Rel::Ge, &[(Term::var("t1"), 1)], -100);
        let f = Formula::and_all(vec![Formula::Atom(good.clone()), Formula::Atom(bad)]);
        let filtered = f.retain_conjuncts(|c| match c {
            Formula::Atom(a) => atom_holds_on_matrix(a, &m),
            _ => true,
        });
        assert_eq!(filtered, Formula::Atom(good));
    }
}
