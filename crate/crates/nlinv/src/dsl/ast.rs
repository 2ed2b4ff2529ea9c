use crate::rat::{int_gcd, int_mod, Rat};
use std::collections::BTreeSet;
use std::fmt;

/// Arithmetic expression over program variables and rational constants.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(Rat),
    Var(String),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    /// Binary external function call (`gcd`, `mod`).
    Call(String, Box<Expr>, Box<Expr>),
    /// C-style conditional: `(cond) ? a : b`.
    Ite(Box<BoolExpr>, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelOp {
    Eq,
    Ne,
    Le,
    Ge,
    Lt,
    Gt,
}

impl fmt::Display for RelOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RelOp::Eq => "==",
            RelOp::Ne => "!=",
            RelOp::Le => "<=",
            RelOp::Ge => ">=",
            RelOp::Lt => "<",
            RelOp::Gt => ">",
        };
        f.write_str(s)
    }
}

/// Boolean expression: relations combined with `&&`, `||`, `!`.
#[derive(Debug, Clone, PartialEq)]
pub enum BoolExpr {
    Lit(bool),
    Rel(RelOp, Expr, Expr),
    And(Box<BoolExpr>, Box<BoolExpr>),
    Or(Box<BoolExpr>, Box<BoolExpr>),
    Not(Box<BoolExpr>),
}

impl BoolExpr {
    pub fn and(self, other: BoolExpr) -> BoolExpr {
        match (self, other) {
            (BoolExpr::Lit(true), b) => b,
            (a, BoolExpr::Lit(true)) => a,
            (a, b) => BoolExpr::And(Box::new(a), Box::new(b)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignOp {
    Set,
    AddAssign,
    SubAssign,
    MulAssign,
}

/// One assignment statement; `line` points back into the source for
/// diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub var: String,
    pub op: AssignOp,
    pub expr: Expr,
    pub line: usize,
}

impl Stmt {
    /// The statement's right-hand side as a plain expression over the
    /// pre-statement state (compound assignments expanded).
    pub fn rhs_expr(&self) -> Expr {
        let var = Expr::Var(self.var.clone());
        match self.op {
            AssignOp::Set => self.expr.clone(),
            AssignOp::AddAssign => Expr::Add(Box::new(var), Box::new(self.expr.clone())),
            AssignOp::SubAssign => Expr::Sub(Box::new(var), Box::new(self.expr.clone())),
            AssignOp::MulAssign => Expr::Mul(Box::new(var), Box::new(self.expr.clone())),
        }
    }
}

/// The fixed table of supported external functions. Both are binary and
/// defined on integer arguments only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExternalKind {
    Gcd,
    Mod,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalFn {
    pub name: String,
    pub kind: ExternalKind,
}

impl ExternalFn {
    pub fn lookup(name: &str) -> Option<ExternalKind> {
        match name {
            "gcd" => Some(ExternalKind::Gcd),
            "mod" => Some(ExternalKind::Mod),
            _ => None,
        }
    }

    /// Total on integer pairs; `None` when an argument is not an integer or
    /// `mod` divides by zero.
    pub fn apply(kind: ExternalKind, a: &Rat, b: &Rat) -> Option<Rat> {
        use num_traits::One;
        if !a.denom().is_one() || !b.denom().is_one() {
            return None;
        }
        match kind {
            ExternalKind::Gcd => Some(Rat::from_integer(int_gcd(a.numer(), b.numer()))),
            ExternalKind::Mod => int_mod(a.numer(), b.numer()).map(Rat::from_integer),
        }
    }
}

/// A parsed single-loop program.
///
/// `vars` is the variable table: assigned variables in order of first
/// assignment, then parameters in order of first occurrence. Trace rows and
/// CSV dumps follow this order.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopProgram {
    pub name: String,
    pub params: Vec<String>,
    pub inits: Vec<Stmt>,
    pub guard: BoolExpr,
    pub body: Vec<Stmt>,
    pub pre: BoolExpr,
    pub post: BoolExpr,
    pub externals: Vec<ExternalFn>,
    pub vars: Vec<String>,
}

impl LoopProgram {
    /// Variables appearing inside body/init conditional tests or as external
    /// call arguments. Fractional sampling must not relax these: a relaxed
    /// (non-integer) value would change which branch a predicate takes or
    /// feed a non-integer into `gcd`/`mod`.
    pub fn restricted_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let stmts = self.inits.iter().chain(self.body.iter());
        for stmt in stmts {
            collect_restricted_expr(&stmt.expr, &mut out);
        }
        collect_restricted_bool_calls(&self.guard, &mut out);
        out
    }

    /// Column name for the frozen initial value of `var` in fractional
    /// traces (`y` becomes `y0`, avoiding collisions with program variables).
    pub fn frozen_name(&self, var: &str) -> String {
        let mut name = format!("{var}0");
        while self.vars.iter().any(|v| v == &name) {
            name.push('0');
        }
        name
    }
}

fn collect_restricted_expr(e: &Expr, out: &mut BTreeSet<String>) {
    match e {
        Expr::Num(_) | Expr::Var(_) => {}
        Expr::Neg(a) | Expr::Pow(a, _) => collect_restricted_expr(a, out),
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
            collect_restricted_expr(a, out);
            collect_restricted_expr(b, out);
        }
        Expr::Call(_, a, b) => {
            collect_vars_expr(a, out);
            collect_vars_expr(b, out);
            collect_restricted_expr(a, out);
            collect_restricted_expr(b, out);
        }
        Expr::Ite(c, a, b) => {
            collect_vars_bool(c, out);
            collect_restricted_expr(a, out);
            collect_restricted_expr(b, out);
        }
    }
}

fn collect_restricted_bool_calls(b: &BoolExpr, out: &mut BTreeSet<String>) {
    // Only external-call arguments are restricted in the guard; plain guard
    // comparisons stay valid under the relaxed (real-valued) semantics.
    match b {
        BoolExpr::Lit(_) => {}
        BoolExpr::Rel(_, a, c) => {
            collect_call_args_expr(a, out);
            collect_call_args_expr(c, out);
        }
        BoolExpr::And(a, c) | BoolExpr::Or(a, c) => {
            collect_restricted_bool_calls(a, out);
            collect_restricted_bool_calls(c, out);
        }
        BoolExpr::Not(a) => collect_restricted_bool_calls(a, out),
    }
}

fn collect_call_args_expr(e: &Expr, out: &mut BTreeSet<String>) {
    match e {
        Expr::Num(_) | Expr::Var(_) => {}
        Expr::Neg(a) | Expr::Pow(a, _) => collect_call_args_expr(a, out),
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
            collect_call_args_expr(a, out);
            collect_call_args_expr(b, out);
        }
        Expr::Call(_, a, b) => {
            collect_vars_expr(a, out);
            collect_vars_expr(b, out);
        }
        Expr::Ite(c, a, b) => {
            collect_vars_bool(c, out);
            collect_call_args_expr(a, out);
            collect_call_args_expr(b, out);
        }
    }
}

pub(crate) fn collect_vars_expr(e: &Expr, out: &mut BTreeSet<String>) {
    match e {
        Expr::Num(_) => {}
        Expr::Var(v) => {
            out.insert(v.clone());
        }
        Expr::Neg(a) | Expr::Pow(a, _) => collect_vars_expr(a, out),
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b)
        | Expr::Call(_, a, b) => {
            collect_vars_expr(a, out);
            collect_vars_expr(b, out);
        }
        Expr::Ite(c, a, b) => {
            collect_vars_bool(c, out);
            collect_vars_expr(a, out);
            collect_vars_expr(b, out);
        }
    }
}

pub(crate) fn collect_vars_bool(b: &BoolExpr, out: &mut BTreeSet<String>) {
    match b {
        BoolExpr::Lit(_) => {}
        BoolExpr::Rel(_, a, c) => {
            collect_vars_expr(a, out);
            collect_vars_expr(c, out);
        }
        BoolExpr::And(a, c) | BoolExpr::Or(a, c) => {
            collect_vars_bool(a, out);
            collect_vars_bool(c, out);
        }
        BoolExpr::Not(a) => collect_vars_bool(a, out),
    }
}

pub(crate) fn collect_calls_expr(e: &Expr, out: &mut BTreeSet<String>) {
    match e {
        Expr::Num(_) | Expr::Var(_) => {}
        Expr::Neg(a) | Expr::Pow(a, _) => collect_calls_expr(a, out),
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
            collect_calls_expr(a, out);
            collect_calls_expr(b, out);
        }
        Expr::Call(name, a, b) => {
            out.insert(name.clone());
            collect_calls_expr(a, out);
            collect_calls_expr(b, out);
        }
        Expr::Ite(c, a, b) => {
            collect_calls_bool(c, out);
            collect_calls_expr(a, out);
            collect_calls_expr(b, out);
        }
    }
}

pub(crate) fn collect_calls_bool(b: &BoolExpr, out: &mut BTreeSet<String>) {
    match b {
        BoolExpr::Lit(_) => {}
        BoolExpr::Rel(_, a, c) => {
            collect_calls_expr(a, out);
            collect_calls_expr(c, out);
        }
        BoolExpr::And(a, c) | BoolExpr::Or(a, c) => {
            collect_calls_bool(a, out);
            collect_calls_bool(c, out);
        }
        BoolExpr::Not(a) => collect_calls_bool(a, out),
    }
}
