use crate::rat::{parse_rat, Rat};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Num(Rat),
    KwWhile,
    KwReturn,
    KwTrue,
    KwFalse,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Semi,
    Comma,
    Question,
    Colon,
    Assign,
    PlusAssign,
    MinusAssign,
    StarAssign,
    EqEq,
    Ne,
    Le,
    Ge,
    Lt,
    Gt,
    AndAnd,
    OrOr,
    Bang,
}

#[derive(Debug, Clone)]
pub struct Spanned {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

/// Annotation comment (`//pre:`, `//post:`, `//name:`).
#[derive(Debug, Clone)]
pub struct Annotation {
    pub kind: AnnotationKind,
    pub text: String,
    pub line: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnnotationKind {
    Pre,
    Post,
    Name,
}

#[derive(Debug)]
pub struct LexOutput {
    pub tokens: Vec<Spanned>,
    pub annotations: Vec<Annotation>,
}

pub fn lex(src: &str) -> Result<LexOutput, super::ParseError> {
    let mut tokens = Vec::new();
    let mut annotations = Vec::new();
    let bytes = src.as_bytes();
    let mut i = 0;
    let mut line = 1;
    let mut line_start = 0usize;

    macro_rules! err {
        ($col:expr, $($arg:tt)*) => {
            return Err(super::ParseError::new(line, $col, format!($($arg)*)))
        };
    }

    while i < bytes.len() {
        let c = bytes[i] as char;
        let col = i - line_start + 1;
        match c {
            '\n' => {
                line += 1;
                i += 1;
                line_start = i;
            }
            ' ' | '\t' | '\r' => i += 1,
            '/' if i + 1 < bytes.len() && bytes[i + 1] == b'/' => {
                let end = src[i..].find('\n').map(|p| i + p).unwrap_or(bytes.len());
                let comment = src[i + 2..end].trim();
                let ann = comment
                    .strip_prefix("pre:")
                    .map(|t| (AnnotationKind::Pre, t))
                    .or_else(|| comment.strip_prefix("post:").map(|t| (AnnotationKind::Post, t)))
                    .or_else(|| comment.strip_prefix("name:").map(|t| (AnnotationKind::Name, t)));
                if let Some((kind, text)) = ann {
                    annotations.push(Annotation {
                        kind,
                        text: text.trim().to_string(),
                        line,
                    });
                }
                i = end;
            }
            '0'..='9' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                let text = &src[start..i];
                match parse_rat(text) {
                    Some(r) => tokens.push(Spanned {
                        tok: Tok::Num(r),
                        line,
                        col,
                    }),
                    None => err!(col, "malformed number literal `{text}`"),
                }
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                let word = &src[start..i];
                let tok = match word {
                    "while" => Tok::KwWhile,
                    "return" => Tok::KwReturn,
                    "true" => Tok::KwTrue,
                    "false" => Tok::KwFalse,
                    "if" | "for" | "do" => {
                        err!(col, "`{word}` is not supported; the loop body is straight-line")
                    }
                    _ => Tok::Ident(word.to_string()),
                };
                tokens.push(Spanned { tok, line, col });
            }
            _ => {
                let two = if i + 1 < bytes.len() {
                    &src[i..i + 2]
                } else {
                    ""
                };
                let (tok, len) = match two {
                    "+=" => (Tok::PlusAssign, 2),
                    "-=" => (Tok::MinusAssign, 2),
                    "*=" => (Tok::StarAssign, 2),
                    "==" => (Tok::EqEq, 2),
                    "!=" => (Tok::Ne, 2),
                    "<=" => (Tok::Le, 2),
                    ">=" => (Tok::Ge, 2),
                    "&&" => (Tok::AndAnd, 2),
                    "||" => (Tok::OrOr, 2),
                    "++" => (Tok::PlusAssign, 0), // handled below
                    "--" => (Tok::MinusAssign, 0),
                    _ => match c {
                        '+' => (Tok::Plus, 1),
                        '-' => (Tok::Minus, 1),
                        '*' => (Tok::Star, 1),
                        '/' => (Tok::Slash, 1),
                        '^' => (Tok::Caret, 1),
                        '(' => (Tok::LParen, 1),
                        ')' => (Tok::RParen, 1),
                        '{' => (Tok::LBrace, 1),
                        '}' => (Tok::RBrace, 1),
                        ';' => (Tok::Semi, 1),
                        ',' => (Tok::Comma, 1),
                        '?' => (Tok::Question, 1),
                        ':' => (Tok::Colon, 1),
                        '=' => (Tok::Assign, 1),
                        '<' => (Tok::Lt, 1),
                        '>' => (Tok::Gt, 1),
                        '!' => (Tok::Bang, 1),
                        _ => err!(col, "unexpected character `{c}`"),
                    },
                };
                if len == 0 {
                    // x++ / x-- sugar: emit `+= 1` / `-= 1`
                    tokens.push(Spanned {
                        tok: tok.clone(),
                        line,
                        col,
                    });
                    tokens.push(Spanned {
                        tok: Tok::Num(crate::rat::rat(1)),
                        line,
                        col,
                    });
                    i += 2;
                } else {
                    tokens.push(Spanned { tok, line, col });
                    i += len;
                }
            }
        }
    }
    Ok(LexOutput {
        tokens,
        annotations,
    })
}
