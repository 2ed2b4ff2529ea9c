use crate::dsl::{EvalError, ExternalFn, Valuation};
use crate::rat::Rat;
use num_traits::One;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// A candidate basis term: a monomial over program variables or a binary
/// external-function application. The constant term 1 is the empty monomial.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Term {
    /// Variable -> exponent; entries always positive, empty map is the
    /// constant term.
    Monomial(BTreeMap<String, u32>),
    External { name: String, a: String, b: String },
}

impl Term {
    pub fn one() -> Term {
        Term::Monomial(BTreeMap::new())
    }

    pub fn var(name: &str) -> Term {
        Term::Monomial([(name.to_string(), 1)].into())
    }

    pub fn monomial(pairs: &[(&str, u32)]) -> Term {
        Term::Monomial(
            pairs
                .iter()
                .filter(|(_, e)| *e > 0)
                .map(|(v, e)| (v.to_string(), *e))
                .collect(),
        )
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Term::Monomial(m) if m.is_empty())
    }

    pub fn degree(&self) -> u32 {
        match self {
            Term::Monomial(m) => m.values().sum(),
            Term::External { .. } => 1,
        }
    }

    /// Variables the term mentions.
    pub fn vars(&self) -> Vec<&str> {
        match self {
            Term::Monomial(m) => m.keys().map(|s| s.as_str()).collect(),
            Term::External { a, b, .. } => vec![a.as_str(), b.as_str()],
        }
    }

    pub fn eval(&self, row: &Valuation) -> Result<Rat, EvalError> {
        match self {
            Term::Monomial(m) => {
                let mut acc = Rat::one();
                for (var, exp) in m {
                    let v = row
                        .get(var)
                        .ok_or_else(|| EvalError::UndefinedVar(var.clone()))?;
                    for _ in 0..*exp {
                        acc *= v;
                    }
                }
                Ok(acc)
            }
            Term::External { name, a, b } => {
                let kind = ExternalFn::lookup(name)
                    .ok_or_else(|| EvalError::UnknownExternal(name.clone()))?;
                let av = row
                    .get(a)
                    .ok_or_else(|| EvalError::UndefinedVar(a.clone()))?;
                let bv = row
                    .get(b)
                    .ok_or_else(|| EvalError::UndefinedVar(b.clone()))?;
                ExternalFn::apply(kind, av, bv)
                    .ok_or_else(|| EvalError::ExternalNonInteger(name.clone()))
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Monomial(m) if m.is_empty() => write!(f, "1"),
            Term::Monomial(m) => {
                let parts: Vec<String> = m
                    .iter()
                    .map(|(v, e)| if *e == 1 { v.clone() } else { format!("{v}^{e}") })
                    .collect();
                write!(f, "{}", parts.join("*"))
            }
            Term::External { name, a, b } => write!(f, "{name}({a},{b})"),
        }
    }
}

/// All monomials of total degree <= `max_deg` over `vars` followed by the
/// frozen initial-value variables, in graded lexicographic order (degree
/// ascending; within a degree, earlier variables carry higher exponents
/// first), plus one external term per ordered in-scope variable pair per
/// external function.
pub fn enumerate_terms(
    vars: &[String],
    max_deg: u32,
    externals: &[ExternalFn],
    frozen_init_vars: &[String],
) -> Vec<Term> {
    assert!(max_deg >= 1, "max_deg must be at least 1");
    let mut all_vars: Vec<String> = vars.to_vec();
    all_vars.extend(frozen_init_vars.iter().cloned());

    let mut out = Vec::new();
    let mut exps = vec![0u32; all_vars.len()];
    for d in 0..=max_deg {
        gen_monomials(&all_vars, d, 0, &mut exps, &mut out);
    }

    for ext in externals {
        for a in vars {
            for b in vars {
                if a != b {
                    out.push(Term::External {
                        name: ext.name.clone(),
                        a: a.clone(),
                        b: b.clone(),
                    });
                }
            }
        }
    }
    out
}

fn gen_monomials(
    vars: &[String],
    remaining: u32,
    idx: usize,
    exps: &mut Vec<u32>,
    out: &mut Vec<Term>,
) {
    if idx == vars.len() {
        if remaining == 0 {
            let m: BTreeMap<String, u32> = vars
                .iter()
                .zip(exps.iter())
                .filter(|(_, &e)| e > 0)
                .map(|(v, &e)| (v.clone(), e))
                .collect();
            out.push(Term::Monomial(m));
        }
        return;
    }
    for e in (0..=remaining).rev() {
        exps[idx] = e;
        gen_monomials(vars, remaining - e, idx + 1, exps, out);
    }
    exps[idx] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::ExternalKind;
    use crate::rat::rat;

    fn names(terms: &[Term]) -> Vec<String> {
        terms.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn ten_terms_for_three_vars_degree_two() {
        let vars: Vec<String> = ["x", "y", "z"].map(String::from).to_vec();
        let terms = enumerate_terms(&vars, 2, &[], &[]);
        assert_eq!(terms.len(), 10);
        assert_eq!(
            names(&terms),
            ["1", "x", "y", "z", "x^2", "x*y", "x*z", "y^2", "y*z", "z^2"]
        );
    }

    #[test]
    fn smallest_basis() {
        let terms = enumerate_terms(&["a".to_string()], 1, &[], &[]);
        assert_eq!(names(&terms), ["1", "a"]);
    }

    #[test]
    fn degree_four_single_variable_pair_contains_ps4_terms() {
        let vars: Vec<String> = ["x", "y"].map(String::from).to_vec();
        let terms = enumerate_terms(&vars, 4, &[], &[]);
        for want in ["1", "y", "y^2", "y^3", "y^4", "x"] {
            assert!(names(&terms).iter().any(|n| n == want), "missing {want}");
        }
    }

    #[test]
    fn external_terms_are_ordered_pairs() {
        let vars: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        let gcd = ExternalFn {
            name: "gcd".into(),
            kind: ExternalKind::Gcd,
        };
        let terms = enumerate_terms(&vars, 1, &[gcd], &[]);
        let ext: Vec<String> = terms
            .iter()
            .filter(|t| matches!(t, Term::External { .. }))
            .map(|t| t.to_string())
            .collect();
        assert_eq!(
            ext,
            ["gcd(a,b)", "gcd(a,c)", "gcd(b,a)", "gcd(b,c)", "gcd(c,a)", "gcd(c,b)"]
        );
    }

    #[test]
    fn frozen_vars_extend_the_monomial_alphabet() {
        let vars: Vec<String> = ["x"].map(String::from).to_vec();
        let frozen: Vec<String> = ["x0"].map(String::from).to_vec();
        let terms = enumerate_terms(&vars, 2, &[], &frozen);
        assert_eq!(names(&terms), ["1", "x", "x0", "x^2", "x*x0", "x0^2"]);
    }

    #[test]
    fn term_eval_is_exact() {
        let row: Valuation = [("x".to_string(), rat(3)), ("y".to_string(), rat(-2))].into();
        assert_eq!(Term::monomial(&[("x", 2), ("y", 1)]).eval(&row).unwrap(), rat(-18));
        assert_eq!(Term::one().eval(&row).unwrap(), rat(1));
    }
}
