//! Expression mini-language used by GEN/APPLY and by the `pipeline-expr`
//! backend.
//!
//! Two dialects share one grammar. The transform dialect (what GEN bodies
//! may use) knows the input variable `value`, `src.<path>` references,
//! scalar literals, arithmetic, comparisons, boolean connectives, `if` and
//! a fixed builtin set. The pipeline dialect additionally allows `null`,
//! `let x = e in body`, record constructors `{a: e, ...}`, `#` line comments
//! and the runtime helpers the assembler emits.

use std::fmt;

use thiserror::Error;

use crate::path::FieldPath;
use crate::record::{format_float, Record};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dialect {
    Transform,
    Pipeline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 6,
        }
    }

    pub fn is_comparison(self) -> bool {
        self.precedence() == 4
    }
}

const PREC_NOT: u8 = 3;
const PREC_UNARY: u8 = 7;
const PREC_ATOM: u8 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Builtin {
    Round,
    Floor,
    Ceil,
    Abs,
    Min,
    Max,
    Concat,
    Lower,
    Upper,
    Substr,
    ToString,
    ToNumber,
    ToBoolean,
    // pipeline dialect only
    IsNull,
    Coalesce,
    Cast,
    CastEnum,
    Scale,
    Shift,
    Link,
    Fail,
}

/// Accepted argument counts: exact, or "at least".
#[derive(Debug, Clone, Copy)]
pub enum Arity {
    Exactly(usize),
    AtLeast(usize),
}

impl Builtin {
    pub const TRANSFORM: [Builtin; 13] = [
        Builtin::Round,
        Builtin::Floor,
        Builtin::Ceil,
        Builtin::Abs,
        Builtin::Min,
        Builtin::Max,
        Builtin::Concat,
        Builtin::Lower,
        Builtin::Upper,
        Builtin::Substr,
        Builtin::ToString,
        Builtin::ToNumber,
        Builtin::ToBoolean,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Round => "round",
            Builtin::Floor => "floor",
            Builtin::Ceil => "ceil",
            Builtin::Abs => "abs",
            Builtin::Min => "min",
            Builtin::Max => "max",
            Builtin::Concat => "concat",
            Builtin::Lower => "lower",
            Builtin::Upper => "upper",
            Builtin::Substr => "substr",
            Builtin::ToString => "to_string",
            Builtin::ToNumber => "to_number",
            Builtin::ToBoolean => "to_boolean",
            Builtin::IsNull => "is_null",
            Builtin::Coalesce => "coalesce",
            Builtin::Cast => "cast",
            Builtin::CastEnum => "cast_enum",
            Builtin::Scale => "scale",
            Builtin::Shift => "shift",
            Builtin::Link => "link",
            Builtin::Fail => "fail",
        }
    }

    pub fn arity(self) -> Arity {
        match self {
            Builtin::Min | Builtin::Max | Builtin::Coalesce | Builtin::Cast => Arity::Exactly(2),
            Builtin::Scale | Builtin::Shift | Builtin::Fail => Arity::Exactly(2),
            Builtin::Substr => Arity::Exactly(3),
            Builtin::Concat => Arity::AtLeast(2),
            Builtin::CastEnum => Arity::AtLeast(2),
            Builtin::Link => Arity::AtLeast(4),
            _ => Arity::Exactly(1),
        }
    }

    pub fn pipeline_only(self) -> bool {
        !Self::TRANSFORM.contains(&self)
    }

    pub fn lookup(name: &str, dialect: Dialect) -> Option<Builtin> {
        const ALL: [Builtin; 21] = [
            Builtin::Round,
            Builtin::Floor,
            Builtin::Ceil,
            Builtin::Abs,
            Builtin::Min,
            Builtin::Max,
            Builtin::Concat,
            Builtin::Lower,
            Builtin::Upper,
            Builtin::Substr,
            Builtin::ToString,
            Builtin::ToNumber,
            Builtin::ToBoolean,
            Builtin::IsNull,
            Builtin::Coalesce,
            Builtin::Cast,
            Builtin::CastEnum,
            Builtin::Scale,
            Builtin::Shift,
            Builtin::Link,
            Builtin::Fail,
        ];
        ALL.into_iter()
            .find(|b| b.name() == name)
            .filter(|b| dialect == Dialect::Pipeline || !b.pipeline_only())
    }

    /// Single-argument transform builtins that APPLY may name directly.
    pub fn unary_by_name(name: &str) -> Option<Builtin> {
        Builtin::lookup(name, Dialect::Transform).filter(|b| matches!(b.arity(), Arity::Exactly(1)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Var(String),
    Src(FieldPath),
    Lit(Record),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    Call(Builtin, Vec<Expr>),
    Let(String, Box<Expr>, Box<Expr>),
    Record(Vec<(String, Expr)>),
}

pub const INPUT_VAR: &str = "value";

const KEYWORDS: [&str; 10] = ["and", "or", "not", "if", "let", "in", "true", "false", "null", "src"];

/// Words that cannot name a GEN function or a let binding.
pub fn is_reserved(word: &str) -> bool {
    KEYWORDS.contains(&word) || word == INPUT_VAR
}

impl Expr {
    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    pub fn value() -> Expr {
        Expr::Var(INPUT_VAR.to_string())
    }

    pub fn int(i: i64) -> Expr {
        Expr::Lit(Record::Int(i))
    }

    pub fn float(x: f64) -> Expr {
        Expr::Lit(Record::Float(x))
    }

    pub fn str(s: &str) -> Expr {
        Expr::Lit(Record::Str(s.to_string()))
    }

    pub fn call(b: Builtin, args: Vec<Expr>) -> Expr {
        Expr::Call(b, args)
    }

    /// Source paths referenced anywhere in the expression.
    pub fn source_paths(&self) -> Vec<FieldPath> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Src(p) = e {
                out.push(p.clone());
            }
        });
        out
    }

    fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Unary(_, e) => e.visit(f),
            Expr::Binary(_, a, b) | Expr::Let(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Expr::If(c, a, b) => {
                c.visit(f);
                a.visit(f);
                b.visit(f);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.visit(f)),
            Expr::Record(fields) => fields.iter().for_each(|(_, e)| e.visit(f)),
            Expr::Var(_) | Expr::Src(_) | Expr::Lit(_) => {}
        }
    }

    /// Renders every compound node inside its own parentheses.
    pub fn fully_parenthesized(&self) -> String {
        let mut out = String::new();
        self.write_full(&mut out);
        out
    }

    fn write_full(&self, out: &mut String) {
        match self {
            Expr::Var(_) | Expr::Src(_) | Expr::Lit(_) => self.write_min(out, 0),
            Expr::Unary(op, e) => {
                out.push_str(match op {
                    UnaryOp::Neg => "(-",
                    UnaryOp::Not => "(not ",
                });
                e.write_full(out);
                out.push(')');
            }
            Expr::Binary(op, a, b) => {
                out.push('(');
                a.write_full(out);
                out.push(' ');
                out.push_str(op.symbol());
                out.push(' ');
                b.write_full(out);
                out.push(')');
            }
            Expr::If(c, a, b) => {
                out.push_str("if(");
                c.write_full(out);
                out.push_str(", ");
                a.write_full(out);
                out.push_str(", ");
                b.write_full(out);
                out.push(')');
            }
            Expr::Call(f, args) => {
                out.push_str(f.name());
                out.push('(');
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    a.write_full(out);
                }
                out.push(')');
            }
            Expr::Let(name, v, body) => {
                out.push_str("(let ");
                out.push_str(name);
                out.push_str(" = ");
                v.write_full(out);
                out.push_str(" in ");
                body.write_full(out);
                out.push(')');
            }
            Expr::Record(fields) => {
                out.push('{');
                for (i, (k, e)) in fields.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    out.push_str(k);
                    out.push_str(": ");
                    e.write_full(out);
                }
                out.push('}');
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Let(..) => 0,
            Expr::Binary(op, ..) => op.precedence(),
            Expr::Unary(UnaryOp::Not, _) => PREC_NOT,
            Expr::Unary(UnaryOp::Neg, _) => PREC_UNARY,
            Expr::Lit(Record::Int(i)) if *i < 0 => PREC_UNARY,
            Expr::Lit(Record::Float(x)) if x.is_sign_negative() => PREC_UNARY,
            _ => PREC_ATOM,
        }
    }

    /// Minimal-parenthesis rendering; wraps itself when its precedence is
    /// below `min`.
    fn write_min(&self, out: &mut String, min: u8) {
        let wrap = self.precedence() < min;
        if wrap {
            out.push('(');
        }
        match self {
            Expr::Var(name) => out.push_str(name),
            Expr::Src(p) => {
                out.push_str("src.");
                out.push_str(&p.to_string());
            }
            Expr::Lit(r) => out.push_str(&literal_text(r)),
            Expr::Unary(UnaryOp::Neg, e) => {
                out.push('-');
                e.write_min(out, PREC_UNARY + 1);
            }
            Expr::Unary(UnaryOp::Not, e) => {
                out.push_str("not ");
                e.write_min(out, PREC_NOT);
            }
            Expr::Binary(op, a, b) => {
                let p = op.precedence();
                let (lmin, rmin) = if op.is_comparison() { (p + 1, p + 1) } else { (p, p + 1) };
                a.write_min(out, lmin);
                out.push(' ');
                out.push_str(op.symbol());
                out.push(' ');
                b.write_min(out, rmin);
            }
            Expr::If(c, a, b) => {
                out.push_str("if(");
                c.write_min(out, 0);
                out.push_str(", ");
                a.write_min(out, 0);
                out.push_str(", ");
                b.write_min(out, 0);
                out.push(')');
            }
            Expr::Call(f, args) => {
                out.push_str(f.name());
                out.push('(');
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    a.write_min(out, 0);
                }
                out.push(')');
            }
            Expr::Let(name, v, body) => {
                out.push_str("let ");
                out.push_str(name);
                out.push_str(" = ");
                v.write_min(out, 1);
                out.push_str(" in ");
                body.write_min(out, 0);
            }
            Expr::Record(fields) => {
                out.push('{');
                for (i, (k, e)) in fields.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    out.push_str(k);
                    out.push_str(": ");
                    e.write_min(out, 0);
                }
                out.push('}');
            }
        }
        if wrap {
            out.push(')');
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        self.write_min(&mut out, 0);
        f.write_str(&out)
    }
}

fn literal_text(r: &Record) -> String {
    match r {
        Record::Null => "null".into(),
        Record::Bool(b) => b.to_string(),
        Record::Int(i) => i.to_string(),
        Record::Float(x) => format_float(*x),
        Record::Str(s) | Record::Enum(s) => serde_json::Value::String(s.clone()).to_string(),
        Record::Object(_) => r.to_line(),
    }
}

// ---------------------------------------------------------------------------
// lexer

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExprErrorKind {
    Syntax,
    UnknownFunction,
    Arity,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message} (at offset {offset})")]
pub struct ExprError {
    pub kind: ExprErrorKind,
    pub message: String,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(i64),
    Float(f64),
    Str(String),
    Ident(String),
    Sym(&'static str),
    Eof,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

const SYMBOLS: [&str; 17] = [
    "==", "!=", "<=", ">=", "<", ">", "+", "-", "*", "/", "%", "(", ")", ",", "{", "}", ":",
];

impl<'a> Lexer<'a> {
    fn err(&self, offset: usize, message: impl Into<String>) -> ExprError {
        ExprError {
            kind: ExprErrorKind::Syntax,
            message: message.into(),
            offset,
        }
    }

    fn tokens(mut self) -> Result<Vec<(Tok, usize)>, ExprError> {
        let mut out = Vec::new();
        loop {
            self.skip_ws();
            let start = self.pos;
            let rest = &self.src[self.pos..];
            let Some(c) = rest.chars().next() else {
                out.push((Tok::Eof, start));
                return Ok(out);
            };
            let tok = if c.is_ascii_digit() || (c == '.' && rest[1..].starts_with(|d: char| d.is_ascii_digit())) {
                self.number()?
            } else if c == '"' {
                self.string()?
            } else if c.is_ascii_alphabetic() || c == '_' {
                let len = rest
                    .find(|ch: char| !(ch.is_ascii_alphanumeric() || ch == '_'))
                    .unwrap_or(rest.len());
                self.pos += len;
                Tok::Ident(rest[..len].to_string())
            } else if rest.starts_with('=') && !rest.starts_with("==") {
                self.pos += 1;
                Tok::Sym("=")
            } else if rest.starts_with('.') {
                self.pos += 1;
                Tok::Sym(".")
            } else if let Some(sym) = SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
                self.pos += sym.len();
                Tok::Sym(sym)
            } else {
                return Err(self.err(start, format!("unexpected character `{c}`")));
            };
            out.push((tok, start));
        }
    }

    fn skip_ws(&mut self) {
        loop {
            let rest = &self.src[self.pos..];
            let trimmed = rest.trim_start();
            self.pos += rest.len() - trimmed.len();
            if trimmed.starts_with('#') {
                self.pos += trimmed.find('\n').unwrap_or(trimmed.len());
            } else {
                return;
            }
        }
    }

    fn number(&mut self) -> Result<Tok, ExprError> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut i = self.pos;
        let mut is_float = false;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'.' {
            is_float = true;
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
        }
        if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
            let mut j = i + 1;
            if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                j += 1;
            }
            if j < bytes.len() && bytes[j].is_ascii_digit() {
                is_float = true;
                i = j;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
        }
        self.pos = i;
        let text = &self.src[start..i];
        if is_float {
            text.parse::<f64>()
                .map(Tok::Float)
                .map_err(|_| self.err(start, format!("bad number `{text}`")))
        } else {
            text.parse::<i64>()
                .map(Tok::Int)
                .map_err(|_| self.err(start, format!("integer literal `{text}` out of range")))
        }
    }

    fn string(&mut self) -> Result<Tok, ExprError> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut i = self.pos + 1;
        while i < bytes.len() {
            match bytes[i] {
                b'\\' => i += 2,
                b'"' => {
                    let lit = &self.src[start..=i];
                    self.pos = i + 1;
                    return serde_json::from_str::<String>(lit)
                        .map(Tok::Str)
                        .map_err(|e| self.err(start, format!("bad string literal: {e}")));
                }
                _ => i += 1,
            }
        }
        Err(self.err(start, "unterminated string literal"))
    }
}

// ---------------------------------------------------------------------------
// parser

struct Parser {
    toks: Vec<(Tok, usize)>,
    i: usize,
    dialect: Dialect,
}

type PResult = Result<Expr, ExprError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].0
    }

    fn offset(&self) -> usize {
        self.toks[self.i].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.i].0.clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn err(&self, message: impl Into<String>) -> ExprError {
        ExprError {
            kind: ExprErrorKind::Syntax,
            message: message.into(),
            offset: self.offset(),
        }
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == kw)
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), ExprError> {
        if self.is_sym(s) {
            self.bump();
            Ok(())
        } else {
            Err(self.err(format!("expected `{s}`, found {}", describe(self.peek()))))
        }
    }

    fn pipeline_only(&self, what: &str) -> Result<(), ExprError> {
        if self.dialect == Dialect::Pipeline {
            Ok(())
        } else {
            Err(self.err(format!("{what} is not allowed in transform expressions")))
        }
    }

    fn expr(&mut self) -> PResult {
        if self.is_kw("let") {
            self.pipeline_only("`let`")?;
            self.bump();
            let name = match self.bump() {
                Tok::Ident(n) if !is_reserved(&n) || n == INPUT_VAR => n,
                other => return Err(self.err(format!("expected binding name, found {}", describe(&other)))),
            };
            self.expect_sym("=")?;
            let value = self.or_expr()?;
            if !self.is_kw("in") {
                return Err(self.err("expected `in`"));
            }
            self.bump();
            let body = self.expr()?;
            return Ok(Expr::Let(name, Box::new(value), Box::new(body)));
        }
        self.or_expr()
    }

    fn or_expr(&mut self) -> PResult {
        let mut lhs = self.and_expr()?;
        while self.is_kw("or") {
            self.bump();
            let rhs = self.and_expr()?;
            lhs = Expr::bin(BinOp::Or, lhs, rhs);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> PResult {
        let mut lhs = self.not_expr()?;
        while self.is_kw("and") {
            self.bump();
            let rhs = self.not_expr()?;
            lhs = Expr::bin(BinOp::And, lhs, rhs);
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> PResult {
        if self.is_kw("not") {
            self.bump();
            let e = self.not_expr()?;
            return Ok(Expr::Unary(UnaryOp::Not, Box::new(e)));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> PResult {
        let lhs = self.additive()?;
        let op = match self.peek() {
            Tok::Sym("==") => BinOp::Eq,
            Tok::Sym("!=") => BinOp::Ne,
            Tok::Sym("<") => BinOp::Lt,
            Tok::Sym("<=") => BinOp::Le,
            Tok::Sym(">") => BinOp::Gt,
            Tok::Sym(">=") => BinOp::Ge,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.additive()?;
        if matches!(self.peek(), Tok::Sym("==" | "!=" | "<" | "<=" | ">" | ">=")) {
            return Err(self.err("comparisons do not chain; add parentheses"));
        }
        Ok(Expr::bin(op, lhs, rhs))
    }

    fn additive(&mut self) -> PResult {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("+") => BinOp::Add,
                Tok::Sym("-") => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.multiplicative()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn multiplicative(&mut self) -> PResult {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("*") => BinOp::Mul,
                Tok::Sym("/") => BinOp::Div,
                Tok::Sym("%") => BinOp::Rem,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> PResult {
        if self.is_sym("-") {
            self.bump();
            // fold negative numeric literals so that printing and re-parsing agree
            return Ok(match self.peek().clone() {
                Tok::Int(i) => {
                    self.bump();
                    Expr::Lit(Record::Int(-i))
                }
                Tok::Float(x) => {
                    self.bump();
                    Expr::Lit(Record::Float(-x))
                }
                _ => Expr::Unary(UnaryOp::Neg, Box::new(self.unary()?)),
            });
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult {
        let offset = self.offset();
        match self.bump() {
            Tok::Int(i) => Ok(Expr::Lit(Record::Int(i))),
            Tok::Float(x) => Ok(Expr::Lit(Record::Float(x))),
            Tok::Str(s) => Ok(Expr::Lit(Record::Str(s))),
            Tok::Sym("(") => {
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Sym("{") => {
                self.i -= 1;
                self.pipeline_only("record constructor")?;
                self.bump();
                let mut fields = Vec::new();
                if !self.is_sym("}") {
                    loop {
                        let name = match self.bump() {
                            Tok::Ident(n) => n,
                            other => return Err(self.err(format!("expected field name, found {}", describe(&other)))),
                        };
                        if fields.iter().any(|(k, _)| *k == name) {
                            return Err(self.err(format!("duplicate field `{name}` in record")));
                        }
                        self.expect_sym(":")?;
                        fields.push((name, self.expr()?));
                        if self.is_sym(",") {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                }
                self.expect_sym("}")?;
                Ok(Expr::Record(fields))
            }
            Tok::Ident(word) => self.word(word, offset),
            other => Err(ExprError {
                kind: ExprErrorKind::Syntax,
                message: format!("unexpected {}", describe(&other)),
                offset,
            }),
        }
    }

    fn word(&mut self, word: String, offset: usize) -> PResult {
        match word.as_str() {
            "true" => return Ok(Expr::Lit(Record::Bool(true))),
            "false" => return Ok(Expr::Lit(Record::Bool(false))),
            "null" => {
                self.i -= 1;
                self.pipeline_only("`null`")?;
                self.bump();
                return Ok(Expr::Lit(Record::Null));
            }
            "src" => {
                self.expect_sym(".")?;
                let mut segments = Vec::new();
                loop {
                    match self.bump() {
                        Tok::Ident(s) => segments.push(s),
                        other => return Err(self.err(format!("expected field name, found {}", describe(&other)))),
                    }
                    if self.is_sym(".") {
                        self.bump();
                    } else {
                        break;
                    }
                }
                let path = FieldPath::new(segments).map_err(|e| self.err(e.to_string()))?;
                return Ok(Expr::Src(path));
            }
            "if" if self.is_sym("(") => {
                let args = self.args()?;
                if args.len() != 3 {
                    return Err(ExprError {
                        kind: ExprErrorKind::Arity,
                        message: format!("if takes 3 arguments, got {}", args.len()),
                        offset,
                    });
                }
                let mut it = args.into_iter();
                let (c, a, b) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
                return Ok(Expr::If(Box::new(c), Box::new(a), Box::new(b)));
            }
            _ => {}
        }
        if self.is_sym("(") {
            let Some(builtin) = Builtin::lookup(&word, self.dialect) else {
                return Err(ExprError {
                    kind: ExprErrorKind::UnknownFunction,
                    message: format!("unknown function `{word}`"),
                    offset,
                });
            };
            let args = self.args()?;
            let ok = match builtin.arity() {
                Arity::Exactly(n) => args.len() == n,
                Arity::AtLeast(n) => args.len() >= n,
            };
            if !ok {
                let expected = match builtin.arity() {
                    Arity::Exactly(n) => format!("{n}"),
                    Arity::AtLeast(n) => format!("at least {n}"),
                };
                return Err(ExprError {
                    kind: ExprErrorKind::Arity,
                    message: format!("{word} takes {expected} arguments, got {}", args.len()),
                    offset,
                });
            }
            return Ok(Expr::Call(builtin, args));
        }
        if word == INPUT_VAR {
            return Ok(Expr::Var(word));
        }
        if KEYWORDS.contains(&word.as_str()) {
            return Err(ExprError {
                kind: ExprErrorKind::Syntax,
                message: format!("unexpected keyword `{word}`"),
                offset,
            });
        }
        if self.dialect == Dialect::Pipeline {
            return Ok(Expr::Var(word));
        }
        Err(ExprError {
            kind: ExprErrorKind::Syntax,
            message: format!("unknown variable `{word}`; only `value` and `src.<path>` are in scope"),
            offset,
        })
    }

    fn args(&mut self) -> Result<Vec<Expr>, ExprError> {
        self.expect_sym("(")?;
        let mut args = Vec::new();
        if !self.is_sym(")") {
            loop {
                args.push(self.expr()?);
                if self.is_sym(",") {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect_sym(")")?;
        Ok(args)
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Int(i) => format!("number `{i}`"),
        Tok::Float(x) => format!("number `{x}`"),
        Tok::Str(s) => format!("string {s:?}"),
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Sym(s) => format!("`{s}`"),
        Tok::Eof => "end of input".into(),
    }
}

pub fn parse_in(text: &str, dialect: Dialect) -> Result<Expr, ExprError> {
    let toks = Lexer { src: text, pos: 0 }.tokens()?;
    let mut p = Parser { toks, i: 0, dialect };
    let e = p.expr()?;
    if *p.peek() != Tok::Eof {
        return Err(p.err(format!("unexpected trailing {}", describe(p.peek()))));
    }
    Ok(e)
}

/// Parses a transform expression (the GEN/APPLY dialect).
pub fn parse_expr(text: &str) -> Result<Expr, ExprError> {
    parse_in(text, Dialect::Transform)
}
