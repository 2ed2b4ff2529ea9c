use crate::dsl::{EvalError, Valuation};
use crate::features::Term;
use crate::rat::{fmt_rat, Rat};
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt;

/// Atom relation symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Rel {
    Eq,
    Ge,
    Le,
    Gt,
    Lt,
    Ne,
}

impl Rel {
    pub fn flip(self) -> Rel {
        match self {
            Rel::Ge => Rel::Le,
            Rel::Le => Rel::Ge,
            Rel::Gt => Rel::Lt,
            Rel::Lt => Rel::Gt,
            r => r,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Rel::Eq => "=",
            Rel::Ge => ">=",
            Rel::Le => "<=",
            Rel::Gt => ">",
            Rel::Lt => "<",
            Rel::Ne => "!=",
        }
    }
}

/// A linear constraint over basis terms: `sum coeffs[t]*t + constant REL 0`.
///
/// Stored in canonical form: integer coefficients in lowest terms (their gcd
/// is 1), non-constant terms only in the map, and a sign convention that
/// makes the leading coefficient positive (flipping the relation as needed).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Atom {
    pub rel: Rel,
    pub coeffs: BTreeMap<Term, Rat>,
    pub constant: Rat,
}

impl Atom {
    /// Builds the canonical form. Coefficients on a constant term fold into
    /// `constant`; zero coefficients disappear; denominators are cleared and
    /// the gcd divided out; `Le`/`Lt` flip to `Ge`/`Gt`, and equalities get
    /// a positive leading coefficient.
    pub fn new(rel: Rel, coeffs: BTreeMap<Term, Rat>, constant: Rat) -> Atom {
        let mut c = BTreeMap::new();
        let mut constant = constant;
        for (t, v) in coeffs {
            if v.is_zero() {
                continue;
            }
            if t.is_constant() {
                constant += v;
            } else {
                c.insert(t, v);
            }
        }
        // clear denominators
        let mut lcm = BigInt::one();
        for v in c.values().chain(std::iter::once(&constant)) {
            lcm = num_integer::Integer::lcm(&lcm, v.denom());
        }
        let scale = Rat::from_integer(lcm);
        for v in c.values_mut() {
            *v *= &scale;
        }
        constant *= &scale;
        // divide by the gcd of all numerators
        let mut g = BigInt::zero();
        for v in c.values().chain(std::iter::once(&constant)) {
            g = num_integer::Integer::gcd(&g, v.numer());
        }
        if !g.is_zero() && !g.is_one() {
            let inv = Rat::from_integer(g);
            for v in c.values_mut() {
                *v /= &inv;
            }
            constant /= &inv;
        }
        // orient: leading (first in term order) coefficient positive
        let mut rel = rel;
        let leading_negative = c
            .values()
            .next()
            .map(|v| v.is_negative())
            .unwrap_or_else(|| constant.is_negative());
        let flip_for_rel = matches!(rel, Rel::Le | Rel::Lt);
        if flip_for_rel || (leading_negative && matches!(rel, Rel::Eq | Rel::Ne)) {
            for v in c.values_mut() {
                *v = -v.clone();
            }
            constant = -constant;
            rel = rel.flip();
        }
        Atom {
            rel,
            coeffs: c,
            constant,
        }
    }

    /// True when every coefficient (not counting the constant) is zero.
    pub fn is_degenerate(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Left-hand side value on a variable assignment, in exact arithmetic.
    pub fn lhs(&self, env: &Valuation) -> Result<Rat, EvalError> {
        let mut acc = self.constant.clone();
        for (t, cf) in &self.coeffs {
            acc += cf * t.eval(env)?;
        }
        Ok(acc)
    }

    pub fn eval(&self, env: &Valuation) -> Result<bool, EvalError> {
        let v = self.lhs(env)?;
        Ok(match self.rel {
            Rel::Eq => v.is_zero(),
            Rel::Ge => !v.is_negative(),
            Rel::Le => !v.is_positive(),
            Rel::Gt => v.is_positive(),
            Rel::Lt => v.is_negative(),
            Rel::Ne => !v.is_zero(),
        })
    }

    /// Substitutes fixed rational values for variables (used to instantiate
    /// frozen initial-value variables after fractional-sampling runs).
    pub fn substitute(&self, values: &BTreeMap<String, Rat>) -> Atom {
        let mut coeffs: BTreeMap<Term, Rat> = BTreeMap::new();
        let mut constant = self.constant.clone();
        for (t, cf) in &self.coeffs {
            match t {
                Term::Monomial(m) => {
                    let mut scalar = cf.clone();
                    let mut rest: BTreeMap<String, u32> = BTreeMap::new();
                    for (v, e) in m {
                        match values.get(v) {
                            Some(val) => {
                                for _ in 0..*e {
                                    scalar *= val;
                                }
                            }
                            None => {
                                rest.insert(v.clone(), *e);
                            }
                        }
                    }
                    if rest.is_empty() {
                        constant += scalar;
                    } else {
                        *coeffs.entry(Term::Monomial(rest)).or_insert_with(Rat::zero) +=
                            scalar;
                    }
                }
                ext => {
                    *coeffs.entry(ext.clone()).or_insert_with(Rat::zero) += cf.clone();
                }
            }
        }
        Atom::new(self.rel, coeffs, constant)
    }

    /// Terms sorted for display: by degree, then term order.
    fn display_terms(&self) -> Vec<(&Term, &Rat)> {
        let mut ts: Vec<(&Term, &Rat)> = self.coeffs.iter().collect();
        ts.sort_by_key(|(t, _)| (t.degree(), (*t).clone()));
        ts
    }
}

impl fmt::Display for Atom {
    /// Two-sided rendering: positively signed terms stay left, the rest move
    /// right (`3*y - 3*z - 2 = 0` prints as `3*y = 3*z + 2`).
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut left = Vec::new();
        let mut right = Vec::new();
        for (t, c) in self.display_terms() {
            if c.is_positive() {
                left.push((c.clone(), t.to_string()));
            } else {
                right.push((-c.clone(), t.to_string()));
            }
        }
        if self.constant.is_positive() {
            left.push((self.constant.clone(), String::new()));
        } else if self.constant.is_negative() {
            right.push((-self.constant.clone(), String::new()));
        }
        let side = |parts: &[(Rat, String)]| -> String {
            if parts.is_empty() {
                return "0".into();
            }
            parts
                .iter()
                .map(|(c, t)| {
                    if t.is_empty() {
                        fmt_rat(c)
                    } else if c.is_one() {
                        t.clone()
                    } else {
                        format!("{}*{}", fmt_rat(c), t)
                    }
                })
                .collect::<Vec<_>>()
                .join(" + ")
        };
        write!(f, "{} {} {}", side(&left), self.rel.symbol(), side(&right))
    }
}

/// Quantifier-free formula over linear atoms.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Formula {
    True,
    False,
    Atom(Atom),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Not(Box<Formula>),
}

impl Formula {
    /// Conjunction that flattens nested `And`s and drops `True`s.
    pub fn and_all(parts: Vec<Formula>) -> Formula {
        let mut out = Vec::new();
        for p in parts {
            match p {
                Formula::True => {}
                Formula::And(xs) => out.extend(xs),
                Formula::False => return Formula::False,
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Formula::True,
            1 => out.into_iter().next().unwrap(),
            _ => Formula::And(out),
        }
    }

    pub fn eval(&self, env: &Valuation) -> Result<bool, EvalError> {
        Ok(match self {
            Formula::True => true,
            Formula::False => false,
            Formula::Atom(a) => a.eval(env)?,
            Formula::And(xs) => {
                for x in xs {
                    if !x.eval(env)? {
                        return Ok(false);
                    }
                }
                true
            }
            Formula::Or(xs) => {
                let mut any = false;
                for x in xs {
                    if x.eval(env)? {
                        any = true;
                        break;
                    }
                }
                any
            }
            Formula::Not(x) => !x.eval(env)?,
        })
    }

    /// Top-level conjuncts (the formula itself when it is not a conjunction).
    pub fn conjuncts(&self) -> Vec<&Formula> {
        match self {
            Formula::And(xs) => xs.iter().collect(),
            other => vec![other],
        }
    }

    /// Rebuilds the formula keeping only top-level conjuncts that pass the
    /// predicate.
    pub fn retain_conjuncts(&self, mut keep: impl FnMut(&Formula) -> bool) -> Formula {
        let parts: Vec<Formula> = self
            .conjuncts()
            .into_iter()
            .filter(|c| keep(c))
            .cloned()
            .collect();
        Formula::and_all(parts)
    }

    pub fn substitute(&self, values: &BTreeMap<String, Rat>) -> Formula {
        match self {
            Formula::True => Formula::True,
            Formula::False => Formula::False,
            Formula::Atom(a) => Formula::Atom(a.substitute(values)),
            Formula::And(xs) => {
                Formula::And(xs.iter().map(|x| x.substitute(values)).collect())
            }
            Formula::Or(xs) => Formula::Or(xs.iter().map(|x| x.substitute(values)).collect()),
            Formula::Not(x) => Formula::Not(Box::new(x.substitute(values))),
        }
    }

    pub fn atoms(&self) -> Vec<&Atom> {
        match self {
            Formula::Atom(a) => vec![a],
            Formula::And(xs) | Formula::Or(xs) => xs.iter().flat_map(|x| x.atoms()).collect(),
            Formula::Not(x) => x.atoms(),
            _ => vec![],
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::False => write!(f, "false"),
            Formula::Atom(a) => write!(f, "{a}"),
            Formula::And(xs) => {
                let parts: Vec<String> = xs.iter().map(|x| format!("({x})")).collect();
                write!(f, "{}", parts.join(" && "))
            }
            Formula::Or(xs) => {
                let parts: Vec<String> = xs.iter().map(|x| format!("({x})")).collect();
                write!(f, "{}", parts.join(" || "))
            }
            Formula::Not(x) => write!(f, "!({x})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::{rat, ratio};

    fn atom(rel: Rel, pairs: &[(&str, i64)], constant: i64) -> Atom {
        let coeffs: BTreeMap<Term, Rat> = pairs
            .iter()
            .map(|(v, c)| (Term::var(v), rat(*c)))
            .collect();
        Atom::new(rel, coeffs, rat(constant))
    }

    #[test]
    fn canonicalization_clears_denominators_and_signs() {
        let coeffs: BTreeMap<Term, Rat> =
            [(Term::var("x"), ratio(-1, 2)), (Term::var("y"), ratio(1, 4))].into();
        let a = Atom::new(Rel::Eq, coeffs, ratio(3, 4));
        // -x/2 + y/4 + 3/4 = 0 -> -2x + y + 3 = 0 -> leading positive: 2x - y - 3 = 0
        assert_eq!(a.coeffs[&Term::var("x")], rat(2));
        assert_eq!(a.coeffs[&Term::var("y")], rat(-1));
        assert_eq!(a.constant, rat(-3));
    }

    #[test]
    fn le_flips_to_ge() {
        let a = atom(Rel::Le, &[("x", 1)], -5);
        assert_eq!(a.rel, Rel::Ge);
        assert_eq!(a.coeffs[&Term::var("x")], rat(-1));
        assert_eq!(a.constant, rat(5));
        // display is two-sided: 5 >= x
        assert_eq!(a.to_string(), "5 >= x");
    }

    #[test]
    fn display_moves_negative_terms_right() {
        let coeffs: BTreeMap<Term, Rat> =
            [(Term::var("y"), rat(3)), (Term::var("z"), rat(-3))].into();
        let a = Atom::new(Rel::Eq, coeffs, rat(-2));
        assert_eq!(a.to_string(), "3*y = 3*z + 2");
    }

    #[test]
    fn atom_eval_is_exact() {
        let a = atom(Rel::Ge, &[("n", 1), ("a2", 0)], 0);
        let mut env = Valuation::new();
        env.insert("n".into(), rat(0));
        assert!(a.eval(&env).unwrap());
        env.insert("n".into(), ratio(-1, 1_000_000_000));
        assert!(!a.eval(&env).unwrap());
    }

    #[test]
    fn substitution_folds_frozen_variables() {
        // 4x - y^4 - 4*x0 + y0^4 = 0 at x0 = 0, y0 = 0 -> 4x - y^4 = 0
        let coeffs: BTreeMap<Term, Rat> = [
            (Term::var("x"), rat(4)),
            (Term::monomial(&[("y", 4)]), rat(-1)),
            (Term::var("x0"), rat(-4)),
            (Term::monomial(&[("y0", 4)]), rat(1)),
        ]
        .into();
        let a = Atom::new(Rel::Eq, coeffs, rat(0));
        let sub: BTreeMap<String, Rat> =
            [("x0".to_string(), rat(0)), ("y0".to_string(), rat(0))].into();
        let b = a.substitute(&sub);
        assert_eq!(b.coeffs.len(), 2);
        assert_eq!(b.coeffs[&Term::var("x")], rat(4));
        assert_eq!(b.constant, rat(0));

        // nonzero instantiation folds into the constant
        let sub2: BTreeMap<String, Rat> =
            [("x0".to_string(), rat(2)), ("y0".to_string(), rat(1))].into();
        let c = a.substitute(&sub2);
        assert_eq!(c.constant, rat(-7)); // -4*2 + 1
    }

    #[test]
    fn formula_eval_and_flattening() {
        let f = Formula::and_all(vec![
            Formula::True,
            Formula::Atom(atom(Rel::Ge, &[("x", 1)], 0)),
            Formula::and_all(vec![Formula::Atom(atom(Rel::Le, &[("x", 1)], -10))]),
        ]);
        assert_eq!(f.conjuncts().len(), 2);
        let mut env = Valuation::new();
        env.insert("x".into(), rat(5));
        assert!(f.eval(&env).unwrap());
        env.insert("x".into(), rat(11));
        assert!(!f.eval(&env).unwrap());
        assert_eq!(Formula::and_all(vec![]), Formula::True);
    }
}
