//! Expansion of DSL expressions into multivariate polynomials.
//!
//! Used to convert user-supplied invariant annotations into linear atoms
//! over monomial terms, and to estimate the degree a term basis needs.

use crate::dsl::{BoolExpr, Expr};
use crate::rat::Rat;
use num_traits::{One, Zero};
use std::collections::BTreeMap;

/// An opaque multiplicand: a variable or an external call over variables.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum PolyAtom {
    Var(String),
    Ext(String, String, String),
}

/// Monomial as atom -> exponent (no zero exponents; empty map = 1).
pub type Monomial = BTreeMap<PolyAtom, u32>;

/// Polynomial as monomial -> coefficient (no zero coefficients).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly(pub BTreeMap<Monomial, Rat>);

#[derive(Debug, Clone, thiserror::Error)]
pub enum PolyError {
    #[error("division is only supported by a nonzero constant here")]
    NonConstantDivision,
    #[error("conditional expressions cannot be expanded to a polynomial")]
    Conditional,
    #[error("external call arguments must be plain variables here")]
    ExternalArgs,
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn constant(c: Rat) -> Self {
        let mut p = Poly::default();
        if !c.is_zero() {
            p.0.insert(Monomial::new(), c);
        }
        p
    }

    pub fn var(name: &str) -> Self {
        let mut m = Monomial::new();
        m.insert(PolyAtom::Var(name.to_string()), 1);
        let mut p = Poly::default();
        p.0.insert(m, Rat::one());
        p
    }

    fn add_term(&mut self, m: Monomial, c: Rat) {
        let entry = self.0.entry(m).or_insert_with(Rat::zero);
        *entry += c;
        if entry.is_zero() {
            let key: Vec<Monomial> = self
                .0
                .iter()
                .filter(|(_, v)| v.is_zero())
                .map(|(k, _)| k.clone())
                .collect();
            for k in key {
                self.0.remove(&k);
            }
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.0 {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn neg(&self) -> Poly {
        Poly(self.0.iter().map(|(m, c)| (m.clone(), -c.clone())).collect())
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::default();
        for (ma, ca) in &self.0 {
            for (mb, cb) in &other.0 {
                let mut m = ma.clone();
                for (atom, e) in mb {
                    *m.entry(atom.clone()).or_insert(0) += e;
                }
                out.add_term(m, ca * cb);
            }
        }
        out
    }

    pub fn scale(&self, c: &Rat) -> Poly {
        if c.is_zero() {
            return Poly::default();
        }
        Poly(self.0.iter().map(|(m, v)| (m.clone(), v * c)).collect())
    }

    pub fn pow(&self, n: u32) -> Poly {
        let mut acc = Poly::constant(Rat::one());
        for _ in 0..n {
            acc = acc.mul(self);
        }
        acc
    }

    pub fn degree(&self) -> u32 {
        self.0
            .keys()
            .map(|m| m.values().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    pub fn as_constant(&self) -> Option<Rat> {
        match self.0.len() {
            0 => Some(Rat::zero()),
            1 => self.0.get(&Monomial::new()).cloned(),
            _ => None,
        }
    }
}

/// Expands an expression into a polynomial over variables and external-call
/// atoms. Conditionals are rejected; division only by a nonzero constant.
pub fn expr_to_poly(e: &Expr) -> Result<Poly, PolyError> {
    match e {
        Expr::Num(n) => Ok(Poly::constant(n.clone())),
        Expr::Var(v) => Ok(Poly::var(v)),
        Expr::Neg(a) => Ok(expr_to_poly(a)?.neg()),
        Expr::Add(a, b) => Ok(expr_to_poly(a)?.add(&expr_to_poly(b)?)),
        Expr::Sub(a, b) => Ok(expr_to_poly(a)?.sub(&expr_to_poly(b)?)),
        Expr::Mul(a, b) => Ok(expr_to_poly(a)?.mul(&expr_to_poly(b)?)),
        Expr::Div(a, b) => {
            let d = expr_to_poly(b)?
                .as_constant()
                .ok_or(PolyError::NonConstantDivision)?;
            if d.is_zero() {
                return Err(PolyError::NonConstantDivision);
            }
            Ok(expr_to_poly(a)?.scale(&(Rat::one() / d)))
        }
        Expr::Pow(a, n) => Ok(expr_to_poly(a)?.pow(*n)),
        Expr::Call(name, a, b) => {
            let (Expr::Var(va), Expr::Var(vb)) = (a.as_ref(), b.as_ref()) else {
                return Err(PolyError::ExternalArgs);
            };
            let mut m = Monomial::new();
            m.insert(PolyAtom::Ext(name.clone(), va.clone(), vb.clone()), 1);
            let mut p = Poly::default();
            p.0.insert(m, Rat::one());
            Ok(p)
        }
        Expr::Ite(..) => Err(PolyError::Conditional),
    }
}

/// Syntactic degree estimate of an expression (conditionals take the max of
/// their branches, external calls count as degree-1 atoms).
pub fn expr_degree(e: &Expr) -> u32 {
    match e {
        Expr::Num(_) => 0,
        Expr::Var(_) => 1,
        Expr::Neg(a) => expr_degree(a),
        Expr::Add(a, b) | Expr::Sub(a, b) => expr_degree(a).max(expr_degree(b)),
        Expr::Mul(a, b) => expr_degree(a) + expr_degree(b),
        Expr::Div(a, _) => expr_degree(a),
        Expr::Pow(a, n) => expr_degree(a) * n,
        Expr::Call(..) => 1,
        Expr::Ite(_, a, b) => expr_degree(a).max(expr_degree(b)),
    }
}

pub fn bool_degree(b: &BoolExpr) -> u32 {
    match b {
        BoolExpr::Lit(_) => 0,
        BoolExpr::Rel(_, a, c) => expr_degree(a).max(expr_degree(c)),
        BoolExpr::And(a, c) | BoolExpr::Or(a, c) => bool_degree(a).max(bool_degree(c)),
        BoolExpr::Not(a) => bool_degree(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_program;
    use crate::rat::rat;

    fn poly_of(src_expr: &str) -> Poly {
        let src = format!("q = {src_expr};\nwhile (q > 0) {{ q -= 1; }}");
        let p = parse_program(&src).unwrap();
        expr_to_poly(&p.inits[0].expr).unwrap()
    }

    #[test]
    fn expands_products_and_powers() {
        // (k+1)^2 = k^2 + 2k + 1
        let p = poly_of("(k + 1)^2");
        assert_eq!(p.degree(), 2);
        let mut k2 = Monomial::new();
        k2.insert(PolyAtom::Var("k".into()), 2);
        assert_eq!(p.0[&k2], rat(1));
        let mut k1 = Monomial::new();
        k1.insert(PolyAtom::Var("k".into()), 1);
        assert_eq!(p.0[&k1], rat(2));
        assert_eq!(p.0[&Monomial::new()], rat(1));
    }

    #[test]
    fn cancellation_removes_terms() {
        let p = poly_of("(x + y) * (x - y) - x * x");
        // = -y^2
        assert_eq!(p.0.len(), 1);
        let mut y2 = Monomial::new();
        y2.insert(PolyAtom::Var("y".into()), 2);
        assert_eq!(p.0[&y2], rat(-1));
    }

    #[test]
    fn degree_estimates() {
        let prog = parse_program(
            "//pre: k >= 0\nx = 0; y = 0;\nwhile (y < k) { y += 1; x += y * y * y; }\n//post: 4 * x == k^2 * (k + 1)^2",
        )
        .unwrap();
        assert_eq!(bool_degree(&prog.post), 4);
        assert_eq!(expr_degree(&prog.body[1].rhs_expr()), 3);
    }
}
