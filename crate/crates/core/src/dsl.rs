//! A small differentiable expression language for user-defined log joints.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := atom ('^' int)? | '-' factor
//! atom   := number
//!         | 'theta' '[' index ']'          index: integer or 'i' inside sum
//!         | func '(' expr ')'              func: neg exp log sqrt sinh cosh asinh tanh abs
//!         | 'dot' '(' 'theta' ',' 'theta' ')'
//!         | 'sum' '(' expr ')'             body evaluated for i = 0..dim and summed
//!         | '(' expr ')'
//! ```
//!
//! `+ - * /` are left-associative; `^` binds tighter than unary minus and its
//! exponent is a constant integer in `[-8, 8]`. The dimension is declared at
//! parse time, not in the program text. Gradients are exact, computed with
//! forward-mode dual numbers, one pass per coordinate.

use nalgebra::DVector;
use thiserror::Error;

/// Byte range into the program text, for error reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceSpan {
    pub start: usize,
    pub end: usize,
}

impl SourceSpan {
    fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    fn merge(self, other: SourceSpan) -> Self {
        Self::new(self.start.min(other.start), self.end.max(other.end))
    }
}

impl std::fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

#[derive(Debug, Error)]
pub enum DslError {
    #[error("lexical error at {span}: {message}")]
    Lex { span: SourceSpan, message: String },
    #[error("parse error at {span}: expected {expected}")]
    UnexpectedToken {
        span: SourceSpan,
        expected: &'static str,
    },
    #[error("unknown identifier `{name}` at {span}")]
    UnknownIdentifier { span: SourceSpan, name: String },
    #[error("arity error at {span}: `{name}` {message}")]
    Arity {
        span: SourceSpan,
        name: &'static str,
        message: &'static str,
    },
    #[error("index {index} out of range at {span}: dimension is {dim}")]
    IndexOutOfRange {
        span: SourceSpan,
        index: usize,
        dim: usize,
    },
    #[error("index variable `i` outside sum at {span}")]
    IndexVarOutsideSum { span: SourceSpan },
    #[error("nested sum at {span} is not supported")]
    NestedSum { span: SourceSpan },
    #[error("exponent at {span} must be a constant integer in [-8, 8]")]
    ExponentRange { span: SourceSpan },
    #[error("dimension must be at least 1")]
    InvalidDimension,
    #[error("domain error at {span}: {message}")]
    Domain {
        span: SourceSpan,
        message: &'static str,
    },
    #[error("non-finite value produced at {span}")]
    NonFinite { span: SourceSpan },
    #[error("dimension mismatch: expression was parsed for dimension {expected}, point has {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryFn {
    Neg,
    Exp,
    Log,
    Sqrt,
    Sinh,
    Cosh,
    Asinh,
    Tanh,
    Abs,
}

impl UnaryFn {
    fn name(self) -> &'static str {
        match self {
            UnaryFn::Neg => "neg",
            UnaryFn::Exp => "exp",
            UnaryFn::Log => "log",
            UnaryFn::Sqrt => "sqrt",
            UnaryFn::Sinh => "sinh",
            UnaryFn::Cosh => "cosh",
            UnaryFn::Asinh => "asinh",
            UnaryFn::Tanh => "tanh",
            UnaryFn::Abs => "abs",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "neg" => UnaryFn::Neg,
            "exp" => UnaryFn::Exp,
            "log" => UnaryFn::Log,
            "sqrt" => UnaryFn::Sqrt,
            "sinh" => UnaryFn::Sinh,
            "cosh" => UnaryFn::Cosh,
            "asinh" => UnaryFn::Asinh,
            "tanh" => UnaryFn::Tanh,
            "abs" => UnaryFn::Abs,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Number(f64),
    /// `theta[j]` with a literal index.
    Coord(usize),
    /// `theta[i]` inside a `sum(...)` body.
    SumCoord,
    /// `dot(theta, theta)`.
    Dot,
    Unary(UnaryFn, Box<ExprNode>),
    Binary(BinOp, Box<ExprNode>, Box<ExprNode>),
    Pow(Box<ExprNode>, i32),
    Sum(Box<ExprNode>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExprNode {
    pub kind: ExprKind,
    pub span: SourceSpan,
}

impl ExprNode {
    /// Structural equality, ignoring source spans (printing normalizes
    /// whitespace, so spans shift across a print/parse roundtrip).
    pub fn same_structure(&self, other: &ExprNode) -> bool {
        match (&self.kind, &other.kind) {
            (ExprKind::Number(a), ExprKind::Number(b)) => a == b,
            (ExprKind::Coord(a), ExprKind::Coord(b)) => a == b,
            (ExprKind::SumCoord, ExprKind::SumCoord) => true,
            (ExprKind::Dot, ExprKind::Dot) => true,
            (ExprKind::Unary(fa, a), ExprKind::Unary(fb, b)) => fa == fb && a.same_structure(b),
            (ExprKind::Binary(oa, la, ra), ExprKind::Binary(ob, lb, rb)) => {
                oa == ob && la.same_structure(lb) && ra.same_structure(rb)
            }
            (ExprKind::Pow(a, na), ExprKind::Pow(b, nb)) => na == nb && a.same_structure(b),
            (ExprKind::Sum(a), ExprKind::Sum(b)) => a.same_structure(b),
            _ => false,
        }
    }
}

/// A parsed expression together with the dimension it was parsed against.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprAst {
    dim: usize,
    root: ExprNode,
}

impl ExprAst {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn root(&self) -> &ExprNode {
        &self.root
    }

    /// Canonical text form; reparsing yields a structurally identical AST.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        print_node(&self.root, 0, &mut out);
        out
    }
}

impl std::fmt::Display for ExprAst {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.to_text())
    }
}

// ---------------------------------------------------------------------------
// lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    span: SourceSpan,
}

fn lex(text: &str) -> Result<Vec<Token>, DslError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let c = bytes[pos] as char;
        if c.is_ascii_whitespace() {
            pos += 1;
            continue;
        }
        let start = pos;
        let tok = match c {
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '^' => Tok::Caret,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            ',' => Tok::Comma,
            c if c.is_ascii_digit() => {
                while pos < bytes.len() && (bytes[pos] as char).is_ascii_digit() {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'.' {
                    pos += 1;
                    while pos < bytes.len() && (bytes[pos] as char).is_ascii_digit() {
                        pos += 1;
                    }
                }
                if pos < bytes.len() && (bytes[pos] == b'e' || bytes[pos] == b'E') {
                    let mut probe = pos + 1;
                    if probe < bytes.len() && (bytes[probe] == b'+' || bytes[probe] == b'-') {
                        probe += 1;
                    }
                    if probe < bytes.len() && (bytes[probe] as char).is_ascii_digit() {
                        pos = probe;
                        while pos < bytes.len() && (bytes[pos] as char).is_ascii_digit() {
                            pos += 1;
                        }
                    }
                }
                let span = SourceSpan::new(start, pos);
                let value: f64 = text[start..pos].parse().map_err(|_| DslError::Lex {
                    span,
                    message: format!("malformed number `{}`", &text[start..pos]),
                })?;
                tokens.push(Token {
                    tok: Tok::Num(value),
                    span,
                });
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while pos < bytes.len() {
                    let c = bytes[pos] as char;
                    if c.is_ascii_alphanumeric() || c == '_' {
                        pos += 1;
                    } else {
                        break;
                    }
                }
                tokens.push(Token {
                    tok: Tok::Ident(text[start..pos].to_string()),
                    span: SourceSpan::new(start, pos),
                });
                continue;
            }
            other => {
                return Err(DslError::Lex {
                    span: SourceSpan::new(start, start + 1),
                    message: format!("unexpected character `{other}`"),
                })
            }
        };
        pos += 1;
        tokens.push(Token {
            tok,
            span: SourceSpan::new(start, pos),
        });
    }
    Ok(tokens)
}

// ---------------------------------------------------------------------------
// parser

struct Parser<'a> {
    text: &'a str,
    tokens: Vec<Token>,
    pos: usize,
    dim: usize,
    in_sum: bool,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn eof_span(&self) -> SourceSpan {
        SourceSpan::new(self.text.len(), self.text.len())
    }

    fn here(&self) -> SourceSpan {
        self.peek().map(|t| t.span).unwrap_or_else(|| self.eof_span())
    }

    fn advance(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok, expected: &'static str) -> Result<SourceSpan, DslError> {
        match self.peek() {
            Some(t) if t.tok == tok => Ok(self.advance().unwrap().span),
            _ => Err(DslError::UnexpectedToken {
                span: self.here(),
                expected,
            }),
        }
    }

    fn parse_expr(&mut self) -> Result<ExprNode, DslError> {
        let mut lhs = self.parse_term()?;
        loop {
            let op = match self.peek().map(|t| &t.tok) {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => break,
            };
            self.advance();
            let rhs = self.parse_term()?;
            let span = lhs.span.merge(rhs.span);
            lhs = ExprNode {
                kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)),
                span,
            };
        }
        Ok(lhs)
    }

    fn parse_term(&mut self) -> Result<ExprNode, DslError> {
        let mut lhs = self.parse_factor()?;
        loop {
            let op = match self.peek().map(|t| &t.tok) {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => break,
            };
            self.advance();
            let rhs = self.parse_factor()?;
            let span = lhs.span.merge(rhs.span);
            lhs = ExprNode {
                kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)),
                span,
            };
        }
        Ok(lhs)
    }

    fn parse_factor(&mut self) -> Result<ExprNode, DslError> {
        if let Some(Tok::Minus) = self.peek().map(|t| &t.tok) {
            let minus_span = self.advance().unwrap().span;
            let operand = self.parse_factor()?;
            let span = minus_span.merge(operand.span);
            return Ok(ExprNode {
                kind: ExprKind::Unary(UnaryFn::Neg, Box::new(operand)),
                span,
            });
        }
        let atom = self.parse_atom()?;
        if let Some(Tok::Caret) = self.peek().map(|t| &t.tok) {
            self.advance();
            let (exponent, exp_span) = self.parse_int_exponent()?;
            if !(-8..=8).contains(&exponent) {
                return Err(DslError::ExponentRange { span: exp_span });
            }
            let span = atom.span.merge(exp_span);
            return Ok(ExprNode {
                kind: ExprKind::Pow(Box::new(atom), exponent),
                span,
            });
        }
        Ok(atom)
    }

    fn parse_int_exponent(&mut self) -> Result<(i32, SourceSpan), DslError> {
        let mut negative = false;
        let mut span = self.here();
        if let Some(Tok::Minus) = self.peek().map(|t| &t.tok) {
            negative = true;
            span = self.advance().unwrap().span;
        }
        match self.advance() {
            Some(Token {
                tok: Tok::Num(v),
                span: num_span,
            }) => {
                if v.fract() != 0.0 || v.abs() > i32::MAX as f64 {
                    return Err(DslError::ExponentRange {
                        span: span.merge(num_span),
                    });
                }
                let n = v as i32;
                Ok((if negative { -n } else { n }, span.merge(num_span)))
            }
            Some(t) => Err(DslError::UnexpectedToken {
                span: t.span,
                expected: "integer exponent",
            }),
            None => Err(DslError::UnexpectedToken {
                span: self.eof_span(),
                expected: "integer exponent",
            }),
        }
    }

    fn parse_atom(&mut self) -> Result<ExprNode, DslError> {
        let token = match self.advance() {
            Some(t) => t,
            None => {
                return Err(DslError::UnexpectedToken {
                    span: self.eof_span(),
                    expected: "expression",
                })
            }
        };
        match token.tok {
            Tok::Num(v) => Ok(ExprNode {
                kind: ExprKind::Number(v),
                span: token.span,
            }),
            Tok::LParen => {
                let inner = self.parse_expr()?;
                let close = self.expect(Tok::RParen, "`)`")?;
                Ok(ExprNode {
                    kind: inner.kind,
                    span: token.span.merge(close),
                })
            }
            Tok::Ident(name) => self.parse_ident(name, token.span),
            _ => Err(DslError::UnexpectedToken {
                span: token.span,
                expected: "expression",
            }),
        }
    }

    fn parse_ident(&mut self, name: String, span: SourceSpan) -> Result<ExprNode, DslError> {
        match name.as_str() {
            "theta" => self.parse_coord(span),
            "dot" => self.parse_dot(span),
            "sum" => self.parse_sum(span),
            "i" => Err(if self.in_sum {
                // `i` is only valid inside brackets: theta[i]
                DslError::UnexpectedToken {
                    span,
                    expected: "expression (`i` can only appear as `theta[i]`)",
                }
            } else {
                DslError::IndexVarOutsideSum { span }
            }),
            other => match UnaryFn::from_name(other) {
                Some(func) => self.parse_func(func, span),
                None => Err(DslError::UnknownIdentifier {
                    span,
                    name: other.to_string(),
                }),
            },
        }
    }

    fn parse_coord(&mut self, theta_span: SourceSpan) -> Result<ExprNode, DslError> {
        let open = self.expect(Tok::LBracket, "`[`")?;
        let index_token = self.advance().ok_or(DslError::UnexpectedToken {
            span: self.eof_span(),
            expected: "coordinate index",
        })?;
        let kind = match index_token.tok {
            Tok::Num(v) => {
                if v.fract() != 0.0 || v < 0.0 {
                    return Err(DslError::UnexpectedToken {
                        span: index_token.span,
                        expected: "non-negative integer index",
                    });
                }
                let index = v as usize;
                let close = self.expect(Tok::RBracket, "`]`")?;
                if index >= self.dim {
                    return Err(DslError::IndexOutOfRange {
                        span: open.merge(close),
                        index,
                        dim: self.dim,
                    });
                }
                return Ok(ExprNode {
                    kind: ExprKind::Coord(index),
                    span: theta_span.merge(close),
                });
            }
            Tok::Ident(ref name) if name == "i" => {
                if !self.in_sum {
                    return Err(DslError::IndexVarOutsideSum {
                        span: index_token.span,
                    });
                }
                ExprKind::SumCoord
            }
            _ => {
                return Err(DslError::UnexpectedToken {
                    span: index_token.span,
                    expected: "integer index or `i`",
                })
            }
        };
        let close = self.expect(Tok::RBracket, "`]`")?;
        Ok(ExprNode {
            kind,
            span: theta_span.merge(close),
        })
    }

    fn parse_dot(&mut self, dot_span: SourceSpan) -> Result<ExprNode, DslError> {
        self.expect(Tok::LParen, "`(`")?;
        for want_comma in [true, false] {
            match self.advance() {
                Some(Token {
                    tok: Tok::Ident(ref name),
                    ..
                }) if name == "theta" => {}
                Some(t) => {
                    return Err(DslError::Arity {
                        span: t.span,
                        name: "dot",
                        message: "expects exactly `dot(theta, theta)`",
                    });
                }
                None => {
                    return Err(DslError::Arity {
                        span: self.eof_span(),
                        name: "dot",
                        message: "expects exactly `dot(theta, theta)`",
                    })
                }
            }
            if want_comma && self.expect(Tok::Comma, "`,`").is_err() {
                return Err(DslError::Arity {
                    span: self.here(),
                    name: "dot",
                    message: "expects exactly `dot(theta, theta)`",
                });
            }
        }
        let close = self.expect(Tok::RParen, "`)`")?;
        Ok(ExprNode {
            kind: ExprKind::Dot,
            span: dot_span.merge(close),
        })
    }

    fn parse_sum(&mut self, sum_span: SourceSpan) -> Result<ExprNode, DslError> {
        if self.in_sum {
            return Err(DslError::NestedSum { span: sum_span });
        }
        self.expect(Tok::LParen, "`(`")?;
        self.in_sum = true;
        let body = self.parse_expr();
        self.in_sum = false;
        let body = body?;
        if let Some(Tok::Comma) = self.peek().map(|t| &t.tok) {
            return Err(DslError::Arity {
                span: self.here(),
                name: "sum",
                message: "takes one argument",
            });
        }
        let close = self.expect(Tok::RParen, "`)`")?;
        Ok(ExprNode {
            kind: ExprKind::Sum(Box::new(body)),
            span: sum_span.merge(close),
        })
    }

    fn parse_func(&mut self, func: UnaryFn, name_span: SourceSpan) -> Result<ExprNode, DslError> {
        self.expect(Tok::LParen, "`(`")?;
        let arg = self.parse_expr()?;
        if let Some(Tok::Comma) = self.peek().map(|t| &t.tok) {
            return Err(DslError::Arity {
                span: self.here(),
                name: func.name(),
                message: "takes one argument",
            });
        }
        let close = self.expect(Tok::RParen, "`)`")?;
        Ok(ExprNode {
            kind: ExprKind::Unary(func, Box::new(arg)),
            span: name_span.merge(close),
        })
    }
}

/// Parses `text` against a declared dimension.
pub fn parse(text: &str, dim: usize) -> Result<ExprAst, DslError> {
    if dim == 0 {
        return Err(DslError::InvalidDimension);
    }
    let tokens = lex(text)?;
    let mut parser = Parser {
        text,
        tokens,
        pos: 0,
        dim,
        in_sum: false,
    };
    let root = parser.parse_expr()?;
    if parser.peek().is_some() {
        return Err(DslError::UnexpectedToken {
            span: parser.here(),
            expected: "end of input",
        });
    }
    Ok(ExprAst { dim, root })
}

// ---------------------------------------------------------------------------
// evaluation (dual numbers; plain evaluation reuses the same pass with an
// out-of-range seed coordinate so values and derivatives cannot diverge)

#[derive(Debug, Clone, Copy)]
struct Dual {
    v: f64,
    d: f64,
}

fn eval_node(
    node: &ExprNode,
    theta: &[f64],
    seed: usize,
    sum_index: Option<usize>,
) -> Result<Dual, DslError> {
    let out = match &node.kind {
        ExprKind::Number(c) => Dual { v: *c, d: 0.0 },
        ExprKind::Coord(j) => Dual {
            v: theta[*j],
            d: if *j == seed { 1.0 } else { 0.0 },
        },
        ExprKind::SumCoord => {
            let j = sum_index.expect("parser only allows theta[i] inside sum");
            Dual {
                v: theta[j],
                d: if j == seed { 1.0 } else { 0.0 },
            }
        }
        ExprKind::Dot => Dual {
            v: theta.iter().map(|x| x * x).sum(),
            d: if seed < theta.len() {
                2.0 * theta[seed]
            } else {
                0.0
            },
        },
        ExprKind::Sum(body) => {
            let mut acc = Dual { v: 0.0, d: 0.0 };
            for j in 0..theta.len() {
                let term = eval_node(body, theta, seed, Some(j))?;
                acc.v += term.v;
                acc.d += term.d;
            }
            acc
        }
        ExprKind::Unary(func, arg) => {
            let a = eval_node(arg, theta, seed, sum_index)?;
            match func {
                UnaryFn::Neg => Dual { v: -a.v, d: -a.d },
                UnaryFn::Exp => {
                    let e = a.v.exp();
                    Dual { v: e, d: a.d * e }
                }
                UnaryFn::Log => {
                    if a.v <= 0.0 {
                        return Err(DslError::Domain {
                            span: node.span,
                            message: "logarithm of a non-positive argument",
                        });
                    }
                    Dual {
                        v: a.v.ln(),
                        d: a.d / a.v,
                    }
                }
                UnaryFn::Sqrt => {
                    if a.v < 0.0 {
                        return Err(DslError::Domain {
                            span: node.span,
                            message: "square root of a negative argument",
                        });
                    }
                    let s = a.v.sqrt();
                    Dual {
                        v: s,
                        d: if a.d == 0.0 { 0.0 } else { a.d / (2.0 * s) },
                    }
                }
                UnaryFn::Sinh => Dual {
                    v: a.v.sinh(),
                    d: a.d * a.v.cosh(),
                },
                UnaryFn::Cosh => Dual {
                    v: a.v.cosh(),
                    d: a.d * a.v.sinh(),
                },
                UnaryFn::Asinh => Dual {
                    v: a.v.asinh(),
                    d: a.d / (1.0 + a.v * a.v).sqrt(),
                },
                UnaryFn::Tanh => {
                    let t = a.v.tanh();
                    Dual {
                        v: t,
                        d: a.d * (1.0 - t * t),
                    }
                }
                UnaryFn::Abs => Dual {
                    v: a.v.abs(),
                    d: if a.v == 0.0 {
                        0.0
                    } else {
                        a.d * a.v.signum()
                    },
                },
            }
        }
        ExprKind::Binary(op, lhs, rhs) => {
            let a = eval_node(lhs, theta, seed, sum_index)?;
            let b = eval_node(rhs, theta, seed, sum_index)?;
            match op {
                BinOp::Add => Dual {
                    v: a.v + b.v,
                    d: a.d + b.d,
                },
                BinOp::Sub => Dual {
                    v: a.v - b.v,
                    d: a.d - b.d,
                },
                BinOp::Mul => Dual {
                    v: a.v * b.v,
                    d: a.d * b.v + a.v * b.d,
                },
                BinOp::Div => {
                    if b.v == 0.0 {
                        return Err(DslError::Domain {
                            span: node.span,
                            message: "division by zero",
                        });
                    }
                    Dual {
                        v: a.v / b.v,
                        d: (a.d * b.v - a.v * b.d) / (b.v * b.v),
                    }
                }
            }
        }
        ExprKind::Pow(base, n) => {
            let a = eval_node(base, theta, seed, sum_index)?;
            if *n < 0 && a.v == 0.0 {
                return Err(DslError::Domain {
                    span: node.span,
                    message: "zero raised to a negative power",
                });
            }
            let v = a.v.powi(*n);
            let d = if *n == 0 {
                0.0
            } else {
                f64::from(*n) * a.v.powi(*n - 1) * a.d
            };
            Dual { v, d }
        }
    };
    if !out.v.is_finite() {
        return Err(DslError::NonFinite { span: node.span });
    }
    Ok(out)
}

fn check_dim(ast: &ExprAst, theta: &DVector<f64>) -> Result<(), DslError> {
    if theta.len() != ast.dim {
        return Err(DslError::DimensionMismatch {
            expected: ast.dim,
            got: theta.len(),
        });
    }
    Ok(())
}

/// Evaluates the expression at `theta`.
pub fn evaluate(ast: &ExprAst, theta: &DVector<f64>) -> Result<f64, DslError> {
    check_dim(ast, theta)?;
    // seed = dim never matches a coordinate, so the derivative lane is inert
    Ok(eval_node(&ast.root, theta.as_slice(), ast.dim, None)?.v)
}

/// Exact gradient at `theta`, one forward-mode pass per coordinate.
pub fn differentiate(ast: &ExprAst, theta: &DVector<f64>) -> Result<DVector<f64>, DslError> {
    check_dim(ast, theta)?;
    let mut grad = DVector::zeros(ast.dim);
    for k in 0..ast.dim {
        let dual = eval_node(&ast.root, theta.as_slice(), k, None)?;
        if !dual.d.is_finite() {
            return Err(DslError::NonFinite {
                span: ast.root.span,
            });
        }
        grad[k] = dual.d;
    }
    Ok(grad)
}

// ---------------------------------------------------------------------------
// canonical printer

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

fn node_prec(node: &ExprNode) -> u8 {
    match &node.kind {
        ExprKind::Binary(BinOp::Add | BinOp::Sub, ..) => PREC_ADD,
        ExprKind::Binary(BinOp::Mul | BinOp::Div, ..) => PREC_MUL,
        ExprKind::Unary(UnaryFn::Neg, _) => PREC_NEG,
        ExprKind::Pow(..) => PREC_POW,
        _ => PREC_ATOM,
    }
}

fn print_node(node: &ExprNode, parent_prec: u8, out: &mut String) {
    let prec = node_prec(node);
    let parens = prec < parent_prec;
    if parens {
        out.push('(');
    }
    match &node.kind {
        ExprKind::Number(v) => out.push_str(&format!("{v}")),
        ExprKind::Coord(j) => out.push_str(&format!("theta[{j}]")),
        ExprKind::SumCoord => out.push_str("theta[i]"),
        ExprKind::Dot => out.push_str("dot(theta, theta)"),
        ExprKind::Sum(body) => {
            out.push_str("sum(");
            print_node(body, 0, out);
            out.push(')');
        }
        ExprKind::Unary(UnaryFn::Neg, arg) => {
            out.push('-');
            print_node(arg, PREC_NEG, out);
        }
        ExprKind::Unary(func, arg) => {
            out.push_str(func.name());
            out.push('(');
            print_node(arg, 0, out);
            out.push(')');
        }
        ExprKind::Binary(op, lhs, rhs) => {
            print_node(lhs, prec, out);
            out.push(' ');
            out.push(op.symbol());
            out.push(' ');
            // left-associative: right operand needs strictly higher binding
            print_node(rhs, prec + 1, out);
        }
        ExprKind::Pow(base, n) => {
            print_node(base, PREC_ATOM, out);
            out.push_str(&format!("^{n}"));
        }
    }
    if parens {
        out.push(')');
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn vec(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn parses_canonical_program() {
        let ast = parse("-0.5*dot(theta,theta)", 3).unwrap();
        assert_eq!(ast.dim(), 3);
        match &ast.root().kind {
            ExprKind::Binary(BinOp::Mul, lhs, rhs) => {
                assert!(matches!(lhs.kind, ExprKind::Unary(UnaryFn::Neg, _)));
                assert!(matches!(rhs.kind, ExprKind::Dot));
            }
            other => panic!("unexpected shape: {other:?}"),
        }
    }

    #[test]
    fn index_out_of_range_points_at_bracket() {
        let err = parse("theta[3]", 3).unwrap_err();
        match err {
            DslError::IndexOutOfRange { span, index, dim } => {
                assert_eq!(index, 3);
                assert_eq!(dim, 3);
                assert_eq!(span, SourceSpan::new(5, 8));
            }
            other => panic!("wrong error: {other:?}"),
        }
    }

    #[test]
    fn malformed_input_errors_at_offending_token() {
        let err = parse("1 + * 2", 1).unwrap_err();
        match err {
            DslError::UnexpectedToken { span, .. } => assert_eq!(span.start, 4),
            other => panic!("wrong error: {other:?}"),
        }
    }

    #[test]
    fn distinct_error_kinds() {
        assert!(matches!(parse("1 $ 2", 1), Err(DslError::Lex { .. })));
        assert!(matches!(
            parse("foo(theta[0])", 1),
            Err(DslError::UnknownIdentifier { .. })
        ));
        assert!(matches!(
            parse("exp(theta[0], theta[0])", 1),
            Err(DslError::Arity { .. })
        ));
        assert!(matches!(
            parse("dot(theta, 3)", 1),
            Err(DslError::Arity { .. })
        ));
        assert!(matches!(
            parse("theta[5]", 2),
            Err(DslError::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            parse("theta[i]", 2),
            Err(DslError::IndexVarOutsideSum { .. })
        ));
        assert!(matches!(
            parse("sum(sum(theta[i]))", 2),
            Err(DslError::NestedSum { .. })
        ));
        assert!(matches!(
            parse("theta[0]^9", 1),
            Err(DslError::ExponentRange { .. })
        ));
    }

    #[test]
    fn evaluates_examples() {
        let ast = parse("-0.5*dot(theta,theta)", 2).unwrap();
        assert_abs_diff_eq!(evaluate(&ast, &vec(&[1.0, 2.0])).unwrap(), -2.5);

        let ast = parse("sum(-(theta[i]^2)/2)", 1).unwrap();
        assert_abs_diff_eq!(evaluate(&ast, &vec(&[3.0])).unwrap(), -4.5);

        let ast = parse("log(theta[0])", 1).unwrap();
        assert!(matches!(
            evaluate(&ast, &vec(&[-1.0])),
            Err(DslError::Domain { .. })
        ));
    }

    #[test]
    fn evaluation_domain_errors() {
        let ast = parse("1/theta[0]", 1).unwrap();
        assert!(matches!(
            evaluate(&ast, &vec(&[0.0])),
            Err(DslError::Domain { .. })
        ));
        let ast = parse("sqrt(theta[0])", 1).unwrap();
        assert!(matches!(
            evaluate(&ast, &vec(&[-4.0])),
            Err(DslError::Domain { .. })
        ));
        let ast = parse("exp(theta[0])", 1).unwrap();
        assert!(matches!(
            evaluate(&ast, &vec(&[1000.0])),
            Err(DslError::NonFinite { .. })
        ));
    }

    #[test]
    fn gradient_examples() {
        let ast = parse("-0.5*dot(theta,theta)", 2).unwrap();
        let g = differentiate(&ast, &vec(&[1.0, 2.0])).unwrap();
        assert_abs_diff_eq!(g[0], -1.0);
        assert_abs_diff_eq!(g[1], -2.0);

        let ast = parse("theta[0]*theta[1]", 2).unwrap();
        let g = differentiate(&ast, &vec(&[3.0, 4.0])).unwrap();
        assert_abs_diff_eq!(g[0], 4.0);
        assert_abs_diff_eq!(g[1], 3.0);

        let ast = parse("-0.25*theta[0]^4", 1).unwrap();
        let g = differentiate(&ast, &vec(&[2.0])).unwrap();
        assert_abs_diff_eq!(g[0], -8.0);
    }

    #[test]
    fn gradient_of_guarded_functions() {
        let ast = parse("log(2 + theta[0]^2)", 1).unwrap();
        let g = differentiate(&ast, &vec(&[1.5])).unwrap();
        // d/dx log(2 + x²) = 2x/(2 + x²)
        assert_abs_diff_eq!(g[0], 3.0 / 4.25, epsilon = 1e-14);

        let ast = parse("sqrt(1 + theta[0]^2)", 1).unwrap();
        let g = differentiate(&ast, &vec(&[0.8])).unwrap();
        assert_abs_diff_eq!(g[0], 0.8 / (1.64f64).sqrt(), epsilon = 1e-14);

        let ast = parse("1/(1 + theta[0]^2)", 1).unwrap();
        let g = differentiate(&ast, &vec(&[0.5])).unwrap();
        assert_abs_diff_eq!(g[0], -1.0 / 1.5625, epsilon = 1e-14);

        let ast = parse("abs(theta[0])^3", 1).unwrap();
        let g = differentiate(&ast, &vec(&[-1.2])).unwrap();
        assert_abs_diff_eq!(g[0], -3.0 * 1.44, epsilon = 1e-12);
    }

    #[test]
    fn evaluation_is_pure() {
        let ast = parse("sinh(theta[0]) + cosh(theta[1]) * asinh(theta[0])", 2).unwrap();
        let point = vec(&[0.3, -1.7]);
        let a = evaluate(&ast, &point).unwrap();
        let b = evaluate(&ast, &point).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn print_parse_roundtrip_hand_cases() {
        for text in [
            "-0.5*dot(theta,theta)",
            "sum(-(theta[i]^2)/2)",
            "1 - 2 - 3",
            "1 - (2 - 3)",
            "2*theta[0]^-2 + exp(-theta[1])",
            "-(theta[0] + 1)^2",
            "abs(theta[0])/tanh(1 + theta[1]^2)",
        ] {
            let ast = parse(text, 2).unwrap();
            let printed = ast.to_text();
            let reparsed = parse(&printed, 2).unwrap();
            assert!(
                ast.root().same_structure(reparsed.root()),
                "roundtrip failed: {text} -> {printed}"
            );
            assert_eq!(printed, reparsed.to_text());
        }
    }
}
