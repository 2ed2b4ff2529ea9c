use super::ast::*;
use super::lexer::{lex, Annotation, AnnotationKind, Spanned, Tok};
use std::collections::BTreeSet;

/// Syntax or structural error with source position.
#[derive(Debug, Clone, thiserror::Error)]
#[error("line {line}, column {col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

impl ParseError {
    pub fn new(line: usize, col: usize, msg: impl Into<String>) -> Self {
        ParseError {
            line,
            col,
            msg: msg.into(),
        }
    }
}

type PResult<T> = Result<T, ParseError>;

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map(|s| (s.line, s.col))
            .unwrap_or((1, 1))
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        let (line, col) = self.here();
        Err(ParseError::new(line, col, msg))
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|s| s.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> PResult<()> {
        if self.eat(&tok) {
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn parse_ident(&mut self, what: &str) -> PResult<String> {
        match self.peek() {
            Some(Tok::Ident(name)) => {
                let name = name.clone();
                self.pos += 1;
                Ok(name)
            }
            _ => self.err(format!("expected {what}")),
        }
    }

    // ---- arithmetic expressions ----

    fn parse_expr(&mut self) -> PResult<Expr> {
        if self.peek() == Some(&Tok::LParen) {
            let save = self.pos;
            if let Ok(ite) = self.try_ternary() {
                return Ok(ite);
            }
            self.pos = save;
        }
        self.parse_aexpr()
    }

    fn try_ternary(&mut self) -> PResult<Expr> {
        self.expect(Tok::LParen, "`(`")?;
        let cond = self.parse_bexpr()?;
        self.expect(Tok::RParen, "`)`")?;
        self.expect(Tok::Question, "`?`")?;
        let then = self.parse_expr()?;
        self.expect(Tok::Colon, "`:`")?;
        let els = self.parse_expr()?;
        Ok(Expr::Ite(Box::new(cond), Box::new(then), Box::new(els)))
    }

    fn parse_aexpr(&mut self) -> PResult<Expr> {
        let mut lhs = self.parse_mul()?;
        loop {
            if self.eat(&Tok::Plus) {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.parse_mul()?));
            } else if self.eat(&Tok::Minus) {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.parse_mul()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn parse_mul(&mut self) -> PResult<Expr> {
        let mut lhs = self.parse_unary()?;
        loop {
            if self.eat(&Tok::Star) {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.parse_unary()?));
            } else if self.eat(&Tok::Slash) {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.parse_unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn parse_unary(&mut self) -> PResult<Expr> {
        if self.eat(&Tok::Minus) {
            Ok(Expr::Neg(Box::new(self.parse_unary()?)))
        } else {
            self.parse_postfix()
        }
    }

    fn parse_postfix(&mut self) -> PResult<Expr> {
        let base = self.parse_primary()?;
        if self.eat(&Tok::Caret) {
            match self.bump() {
                Some(Tok::Num(n)) if n.is_integer() && !num_traits::Signed::is_negative(n.numer()) => {
                    let exp: u32 = n
                        .numer()
                        .to_string()
                        .parse()
                        .map_err(|_| {
                            let (line, col) = self.here();
                            ParseError::new(line, col, "exponent too large")
                        })?;
                    Ok(Expr::Pow(Box::new(base), exp))
                }
                _ => self.err("expected a natural number exponent after `^`"),
            }
        } else {
            Ok(base)
        }
    }

    fn parse_primary(&mut self) -> PResult<Expr> {
        match self.peek().cloned() {
            Some(Tok::Num(n)) => {
                self.pos += 1;
                Ok(Expr::Num(n))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if self.eat(&Tok::LParen) {
                    if ExternalFn::lookup(&name).is_none() {
                        return self.err(format!(
                            "unknown function `{name}` (supported: gcd, mod)"
                        ));
                    }
                    let a = self.parse_aexpr()?;
                    self.expect(Tok::Comma, "`,` (external functions are binary)")?;
                    let b = self.parse_aexpr()?;
                    self.expect(Tok::RParen, "`)`")?;
                    Ok(Expr::Call(name, Box::new(a), Box::new(b)))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.parse_aexpr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            _ => self.err("expected an expression"),
        }
    }

    // ---- boolean expressions ----

    fn parse_bexpr(&mut self) -> PResult<BoolExpr> {
        let mut lhs = self.parse_band()?;
        while self.eat(&Tok::OrOr) {
            lhs = BoolExpr::Or(Box::new(lhs), Box::new(self.parse_band()?));
        }
        Ok(lhs)
    }

    fn parse_band(&mut self) -> PResult<BoolExpr> {
        let mut lhs = self.parse_bfactor()?;
        while self.eat(&Tok::AndAnd) {
            lhs = BoolExpr::And(Box::new(lhs), Box::new(self.parse_bfactor()?));
        }
        Ok(lhs)
    }

    fn parse_bfactor(&mut self) -> PResult<BoolExpr> {
        match self.peek() {
            Some(Tok::Bang) => {
                self.pos += 1;
                Ok(BoolExpr::Not(Box::new(self.parse_bfactor()?)))
            }
            Some(Tok::KwTrue) => {
                self.pos += 1;
                Ok(BoolExpr::Lit(true))
            }
            Some(Tok::KwFalse) => {
                self.pos += 1;
                Ok(BoolExpr::Lit(false))
            }
            _ => {
                let save = self.pos;
                match self.parse_relation() {
                    Ok(rel) => Ok(rel),
                    Err(_) => {
                        self.pos = save;
                        self.expect(Tok::LParen, "a comparison or `(`")?;
                        let b = self.parse_bexpr()?;
                        self.expect(Tok::RParen, "`)`")?;
                        Ok(b)
                    }
                }
            }
        }
    }

    fn parse_relation(&mut self) -> PResult<BoolExpr> {
        let lhs = self.parse_aexpr()?;
        let op = match self.peek() {
            Some(Tok::EqEq) | Some(Tok::Assign) => RelOp::Eq,
            Some(Tok::Ne) => RelOp::Ne,
            Some(Tok::Le) => RelOp::Le,
            Some(Tok::Ge) => RelOp::Ge,
            Some(Tok::Lt) => RelOp::Lt,
            Some(Tok::Gt) => RelOp::Gt,
            _ => return self.err("expected a comparison operator"),
        };
        self.pos += 1;
        let rhs = self.parse_aexpr()?;
        Ok(BoolExpr::Rel(op, lhs, rhs))
    }

    // ---- statements and program structure ----

    fn parse_stmt(&mut self) -> PResult<Stmt> {
        let (line, _) = self.here();
        let var = self.parse_ident("a variable name")?;
        let op = match self.bump() {
            Some(Tok::Assign) => AssignOp::Set,
            Some(Tok::PlusAssign) => AssignOp::AddAssign,
            Some(Tok::MinusAssign) => AssignOp::SubAssign,
            Some(Tok::StarAssign) => AssignOp::MulAssign,
            _ => return self.err("expected `=`, `+=`, `-=`, or `*=`"),
        };
        let expr = self.parse_expr()?;
        self.expect(Tok::Semi, "`;`")?;
        Ok(Stmt {
            var,
            op,
            expr,
            line,
        })
    }
}

fn parse_annotation_bexpr(ann: &Annotation) -> PResult<BoolExpr> {
    let lexed = lex(&ann.text).map_err(|e| ParseError::new(ann.line, e.col, e.msg))?;
    let mut p = Parser {
        toks: lexed.tokens,
        pos: 0,
    };
    let b = p.parse_bexpr().map_err(|e| ParseError::new(ann.line, e.col, e.msg))?;
    if p.peek().is_some() {
        return Err(ParseError::new(
            ann.line,
            p.here().1,
            "trailing input in annotation",
        ));
    }
    Ok(b)
}

/// Parses a `.loop` program. The program name comes from a `//name:`
/// annotation when present, otherwise `default_name`.
pub fn parse_program_named(text: &str, default_name: &str) -> Result<LoopProgram, ParseError> {
    let lexed = lex(text)?;
    let mut p = Parser {
        toks: lexed.tokens,
        pos: 0,
    };

    let mut inits = Vec::new();
    loop {
        match p.peek() {
            None => return p.err("no `while` loop found"),
            Some(Tok::KwWhile) => break,
            Some(Tok::Ident(_)) => inits.push(p.parse_stmt()?),
            Some(Tok::KwReturn) => return p.err("`return` before the loop"),
            _ => return p.err("expected an assignment or `while`"),
        }
    }

    p.expect(Tok::KwWhile, "`while`")?;
    p.expect(Tok::LParen, "`(`")?;
    let guard = p.parse_bexpr()?;
    p.expect(Tok::RParen, "`)`")?;
    p.expect(Tok::LBrace, "`{`")?;
    let mut body = Vec::new();
    loop {
        match p.peek() {
            Some(Tok::RBrace) => {
                p.pos += 1;
                break;
            }
            Some(Tok::KwWhile) => return p.err("nested/multiple loops unsupported"),
            Some(Tok::Ident(_)) => body.push(p.parse_stmt()?),
            _ => return p.err("expected an assignment or `}`"),
        }
    }

    if p.eat(&Tok::KwReturn) {
        p.parse_ident("a variable name after `return`")?;
        p.eat(&Tok::Semi);
    }
    match p.peek() {
        None => {}
        Some(Tok::KwWhile) => return p.err("nested/multiple loops unsupported"),
        Some(_) => return p.err("unexpected input after the loop"),
    }

    let mut pre = BoolExpr::Lit(true);
    let mut post = BoolExpr::Lit(true);
    let mut name = default_name.to_string();
    for ann in &lexed.annotations {
        match ann.kind {
            AnnotationKind::Pre => pre = pre.and(parse_annotation_bexpr(ann)?),
            AnnotationKind::Post => post = post.and(parse_annotation_bexpr(ann)?),
            AnnotationKind::Name => name = ann.text.clone(),
        }
    }

    build_program(name, inits, guard, body, pre, post)
}

/// Parses a `.loop` program with the default name `program`.
pub fn parse_program(text: &str) -> Result<LoopProgram, ParseError> {
    parse_program_named(text, "program")
}

fn ordered_vars_expr(e: &Expr, out: &mut Vec<String>) {
    fn walk(e: &Expr, out: &mut Vec<String>) {
        match e {
            Expr::Num(_) => {}
            Expr::Var(v) => {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
            Expr::Neg(a) | Expr::Pow(a, _) => walk(a, out),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Call(_, a, b) => {
                walk(a, out);
                walk(b, out);
            }
            Expr::Ite(c, a, b) => {
                walk_bool(c, out);
                walk(a, out);
                walk(b, out);
            }
        }
    }
    fn walk_bool(b: &BoolExpr, out: &mut Vec<String>) {
        match b {
            BoolExpr::Lit(_) => {}
            BoolExpr::Rel(_, a, c) => {
                walk(a, out);
                walk(c, out);
            }
            BoolExpr::And(a, c) | BoolExpr::Or(a, c) => {
                walk_bool(a, out);
                walk_bool(c, out);
            }
            BoolExpr::Not(a) => walk_bool(a, out),
        }
    }
    walk(e, out);
}

fn ordered_vars_bool(b: &BoolExpr, out: &mut Vec<String>) {
    match b {
        BoolExpr::Lit(_) => {}
        BoolExpr::Rel(_, a, c) => {
            ordered_vars_expr(a, out);
            ordered_vars_expr(c, out);
        }
        BoolExpr::And(a, c) | BoolExpr::Or(a, c) => {
            ordered_vars_bool(a, out);
            ordered_vars_bool(c, out);
        }
        BoolExpr::Not(a) => ordered_vars_bool(a, out),
    }
}

fn build_program(
    name: String,
    inits: Vec<Stmt>,
    guard: BoolExpr,
    body: Vec<Stmt>,
    pre: BoolExpr,
    post: BoolExpr,
) -> Result<LoopProgram, ParseError> {
    let mut assigned: Vec<String> = Vec::new();
    let mut params: Vec<String> = Vec::new();

    let note_reads = |e: &Expr, assigned: &Vec<String>, params: &mut Vec<String>| {
        let mut reads = Vec::new();
        ordered_vars_expr(e, &mut reads);
        for v in reads {
            if !assigned.contains(&v) && !params.contains(&v) {
                params.push(v);
            }
        }
    };

    for stmt in &inits {
        note_reads(&stmt.rhs_expr(), &assigned, &mut params);
        if params.contains(&stmt.var) {
            return Err(ParseError::new(
                stmt.line,
                1,
                format!("parameter `{}` reassigned before the loop", stmt.var),
            ));
        }
        if !assigned.contains(&stmt.var) {
            assigned.push(stmt.var.clone());
        }
    }

    let mut later_reads = Vec::new();
    ordered_vars_bool(&guard, &mut later_reads);
    for stmt in &body {
        ordered_vars_expr(&stmt.rhs_expr(), &mut later_reads);
    }
    ordered_vars_bool(&pre, &mut later_reads);
    ordered_vars_bool(&post, &mut later_reads);
    for v in later_reads {
        if !assigned.contains(&v) && !params.contains(&v) {
            params.push(v);
        }
    }

    for stmt in &body {
        if !assigned.contains(&stmt.var) {
            return Err(ParseError::new(
                stmt.line,
                1,
                format!(
                    "variable `{}` is assigned in the loop body but never initialized",
                    stmt.var
                ),
            ));
        }
    }

    let mut call_names = BTreeSet::new();
    for stmt in inits.iter().chain(body.iter()) {
        collect_calls_expr(&stmt.expr, &mut call_names);
    }
    collect_calls_bool(&guard, &mut call_names);
    collect_calls_bool(&pre, &mut call_names);
    collect_calls_bool(&post, &mut call_names);
    let externals = call_names
        .into_iter()
        .map(|n| {
            let kind = ExternalFn::lookup(&n).expect("validated during parse");
            ExternalFn { name: n, kind }
        })
        .collect();

    let mut vars = assigned;
    vars.extend(params.iter().cloned());

    Ok(LoopProgram {
        name,
        params,
        inits,
        guard,
        body,
        pre,
        post,
        externals,
        vars,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::rat;

    const SQRT: &str = "\
//name: sqrt1
//pre: n >= 0
a = 0; s = 1; t = 1;
while (s <= n) {
  a += 1;
  t += 2;
  s += t;
}
return a;
//post: a^2 <= n && n < (a + 1)^2
";

    #[test]
    fn parses_sqrt_program() {
        let p = parse_program(SQRT).unwrap();
        assert_eq!(p.name, "sqrt1");
        assert_eq!(p.params, vec!["n"]);
        assert_eq!(p.vars, vec!["a", "s", "t", "n"]);
        assert_eq!(p.inits.len(), 3);
        assert_eq!(p.body.len(), 3);
        assert_eq!(
            p.guard,
            BoolExpr::Rel(
                RelOp::Le,
                Expr::Var("s".into()),
                Expr::Var("n".into())
            )
        );
        assert_eq!(p.body[0].var, "a");
        assert_eq!(p.body[0].op, AssignOp::AddAssign);
        assert!(p.externals.is_empty());
    }

    #[test]
    fn parses_empty_body() {
        let p = parse_program("while (x < 0) { }").unwrap();
        assert_eq!(p.body.len(), 0);
        assert_eq!(p.params, vec!["x"]);
    }

    #[test]
    fn rejects_multiple_and_nested_loops() {
        let two = "x = 0; while (x < 2) { x += 1; } while (x < 4) { x += 1; }";
        let err = parse_program(two).unwrap_err();
        assert!(err.msg.contains("nested/multiple loops unsupported"), "{err}");

        let nested = "x = 0; while (x < 2) { while (x < 1) { x += 1; } }";
        let err = parse_program(nested).unwrap_err();
        assert!(err.msg.contains("nested/multiple loops unsupported"), "{err}");
    }

    #[test]
    fn rejects_uninitialized_body_assignment() {
        let err = parse_program("while (x < 2) { y = x; x = y; }").unwrap_err();
        assert!(err.msg.contains("never initialized"), "{err}");
    }

    #[test]
    fn reports_position_on_syntax_error() {
        let err = parse_program("x = ;\nwhile (x < 1) { }").unwrap_err();
        assert_eq!(err.line, 1);
        assert!(err.col >= 5);
    }

    #[test]
    fn parses_ternary_and_increment_sugar() {
        let src = "\
y1 = 0; y2 = 0; y3 = x1;
while (y3 != 0) {
  y1 = (y2 + 1 == x2) ? y1 + 1 : y1;
  y2 = (y2 + 1 == x2) ? 0 : y2 + 1;
  y3--;
}
";
        let p = parse_program(src).unwrap();
        assert_eq!(p.params, vec!["x1", "x2"]);
        assert!(matches!(p.body[0].expr, Expr::Ite(..)));
        assert_eq!(p.body[2].op, AssignOp::SubAssign);
        assert_eq!(p.body[2].expr, Expr::Num(rat(1)));
    }

    #[test]
    fn parses_externals_and_rejects_unknown_functions() {
        let p = parse_program("g = gcd(a, b);\nwhile (g > 1) { g = mod(g, 2); }").unwrap();
        assert_eq!(p.externals.len(), 2);
        assert_eq!(p.externals[0].name, "gcd");

        let err = parse_program("g = foo(a, b);\nwhile (g > 1) { }").unwrap_err();
        assert!(err.msg.contains("unknown function"), "{err}");
    }

    #[test]
    fn annotation_conjunction_and_power_syntax() {
        let src = "//pre: k >= 0\n//pre: k <= 10\nx = 0;\nwhile (x < k) { x += 1; }\n//post: x^2 >= 0";
        let p = parse_program(src).unwrap();
        assert!(matches!(p.pre, BoolExpr::And(..)));
        assert!(matches!(p.post, BoolExpr::Rel(RelOp::Ge, Expr::Pow(..), _)));
    }
}
