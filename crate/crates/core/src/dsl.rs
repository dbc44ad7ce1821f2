//! Text front end: finite-domain variables, a state predicate and guarded
//! relation blocks, elaborated into an explicit [`Model`].
//!
//! ```text
//! model m {
//!     var x: 0..3;
//!     var on: bool;
//!     invariant: x == 0;
//!     program { x > 0 && x' == x - 1 && on' == on; }
//!     environment { on' == !on && x' == x; }
//!     bad {}
//!     restricted {}
//!     faults {}
//!     k: 2;
//! }
//! ```
//!
//! See `docs/format.md` for the full grammar.

use crate::model::{Model, ModelError, Predicate, Relation, StateId, StateSpace};
use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

pub const DEFAULT_STATE_CAP: u128 = 10_000_000;
/// Environment variable overriding [`DEFAULT_STATE_CAP`].
pub const STATE_CAP_VAR: &str = "FTREPAIR_STATE_CAP";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Range { lo: i64, hi: i64 },
    Bool,
}

impl Domain {
    pub fn size(&self) -> u128 {
        match *self {
            Domain::Range { lo, hi } => (hi as i128 - lo as i128 + 1) as u128,
            Domain::Bool => 2,
        }
    }

    fn lo(&self) -> i64 {
        match *self {
            Domain::Range { lo, .. } => lo,
            Domain::Bool => 0,
        }
    }

    fn ty(&self) -> Ty {
        match self {
            Domain::Range { .. } => Ty::Int,
            Domain::Bool => Ty::Bool,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarDecl {
    pub name: String,
    pub domain: Domain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Imp,
    Or,
    Xor,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Imp => "=>",
            BinOp::Or => "||",
            BinOp::Xor => "xor",
            BinOp::And => "&&",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Add => "+",
            BinOp::Sub => "-",
        }
    }

    fn prec(self) -> u8 {
        match self {
            BinOp::Imp => 1,
            BinOp::Or => 2,
            BinOp::Xor => 3,
            BinOp::And => 4,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 6,
            BinOp::Add | BinOp::Sub => 7,
        }
    }
}

/// Integer literals are non-negative; `-3` parses as a negation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Int(i64),
    Bool(bool),
    Var { name: String, primed: bool },
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var {
            name: name.into(),
            primed: false,
        }
    }

    pub fn next(name: &str) -> Expr {
        Expr::Var {
            name: name.into(),
            primed: true,
        }
    }

    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn not(e: Expr) -> Expr {
        Expr::Unary(UnOp::Not, Box::new(e))
    }

    /// Conjunction of `parts`; `true` when empty.
    pub fn all(parts: impl IntoIterator<Item = Expr>) -> Expr {
        parts
            .into_iter()
            .reduce(|a, b| Expr::bin(BinOp::And, a, b))
            .unwrap_or(Expr::Bool(true))
    }

    /// Disjunction of `parts`; `false` when empty.
    pub fn any(parts: impl IntoIterator<Item = Expr>) -> Expr {
        parts
            .into_iter()
            .reduce(|a, b| Expr::bin(BinOp::Or, a, b))
            .unwrap_or(Expr::Bool(false))
    }

    pub fn has_primed(&self) -> bool {
        match self {
            Expr::Int(_) | Expr::Bool(_) => false,
            Expr::Var { primed, .. } => *primed,
            Expr::Unary(_, a) => a.has_primed(),
            Expr::Binary(_, a, b) => a.has_primed() || b.has_primed(),
        }
    }

    fn prec(&self) -> u8 {
        match self {
            Expr::Binary(op, ..) => op.prec(),
            Expr::Unary(UnOp::Not, _) => 5,
            Expr::Unary(UnOp::Neg, _) => 8,
            _ => 9,
        }
    }

    fn write(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let paren = self.prec() < min;
        if paren {
            f.write_str("(")?;
        }
        match self {
            Expr::Int(v) => write!(f, "{v}")?,
            Expr::Bool(b) => write!(f, "{b}")?,
            Expr::Var { name, primed } => {
                f.write_str(name)?;
                if *primed {
                    f.write_str("'")?;
                }
            }
            Expr::Unary(UnOp::Not, a) => {
                f.write_str("!")?;
                a.write(f, 5)?;
            }
            Expr::Unary(UnOp::Neg, a) => {
                f.write_str("-")?;
                a.write(f, 8)?;
            }
            Expr::Binary(op, a, b) => {
                let p = op.prec();
                let (l, r) = match op {
                    BinOp::Imp => (p + 1, p),
                    _ if p == 6 => (p + 1, p + 1),
                    _ => (p, p + 1),
                };
                a.write(f, l)?;
                write!(f, " {} ", op.symbol())?;
                b.write(f, r)?;
            }
        }
        if paren {
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub name: String,
    pub variables: Vec<VarDecl>,
    pub invariant: Expr,
    pub program: Vec<Expr>,
    pub environment: Vec<Expr>,
    pub bad: Vec<Expr>,
    pub restricted: Vec<Expr>,
    pub faults: Vec<Expr>,
    pub k: usize,
}

const SECTIONS: [&str; 5] = ["program", "environment", "bad", "restricted", "faults"];

impl ModelSpec {
    fn section(&self, i: usize) -> &[Expr] {
        match i {
            0 => &self.program,
            1 => &self.environment,
            2 => &self.bad,
            3 => &self.restricted,
            _ => &self.faults,
        }
    }

    fn section_mut(&mut self, i: usize) -> &mut Vec<Expr> {
        match i {
            0 => &mut self.program,
            1 => &mut self.environment,
            2 => &mut self.bad,
            3 => &mut self.restricted,
            _ => &mut self.faults,
        }
    }

    /// Number of states, saturating.
    pub fn state_count(&self) -> u128 {
        self.variables
            .iter()
            .fold(1u128, |acc, v| acc.saturating_mul(v.domain.size()))
    }
}

pub fn pretty_print(spec: &ModelSpec) -> String {
    let mut out = format!("model {} {{\n", spec.name);
    for v in &spec.variables {
        match v.domain {
            Domain::Range { lo, hi } => out += &format!("    var {}: {lo}..{hi};\n", v.name),
            Domain::Bool => out += &format!("    var {}: bool;\n", v.name),
        }
    }
    out += &format!("    invariant: {};\n", spec.invariant);
    for (i, name) in SECTIONS.iter().enumerate() {
        let exprs = spec.section(i);
        if exprs.is_empty() {
            out += &format!("    {name} {{}}\n");
        } else {
            out += &format!("    {name} {{\n");
            for e in exprs {
                out += &format!("        {e};\n");
            }
            out += "    }\n";
        }
    }
    out += &format!("    k: {};\n}}\n", spec.k);
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("unexpected character `{0}`")]
    Lexical(char),
    #[error("integer literal out of range")]
    IntOverflow,
    #[error("{0}")]
    Syntax(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("primed read in predicate")]
    PrimedInPredicate,
    #[error("type error: {0}")]
    Type(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ElaborateError {
    #[error("model has {states} states, above the cap of {cap} (raise it with {STATE_CAP_VAR})")]
    StateCap { states: u128, cap: u128 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(i64),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Semi,
    Colon,
    DotDot,
    Prime,
    Not,
    Minus,
    Plus,
    AndAnd,
    OrOr,
    Imp,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::Ident(s) => return write!(f, "`{s}`"),
            Tok::Int(v) => return write!(f, "`{v}`"),
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::Semi => ";",
            Tok::Colon => ":",
            Tok::DotDot => "..",
            Tok::Prime => "'",
            Tok::Not => "!",
            Tok::Minus => "-",
            Tok::Plus => "+",
            Tok::AndAnd => "&&",
            Tok::OrOr => "||",
            Tok::Imp => "=>",
            Tok::Eq => "==",
            Tok::Ne => "!=",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::Eof => return f.write_str("end of input"),
        };
        write!(f, "`{s}`")
    }
}

#[derive(Debug, Clone, Copy)]
struct Pos {
    line: usize,
    col: usize,
}

fn err(pos: Pos, kind: ParseErrorKind) -> ParseError {
    ParseError {
        line: pos.line,
        col: pos.col,
        kind,
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, Pos)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        let peek = chars.get(i + 1).copied();
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && peek == Some('/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            out.push((Tok::Ident(chars[start..i].iter().collect()), pos));
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            col += i - start;
            let s: String = chars[start..i].iter().collect();
            let v = s
                .parse()
                .map_err(|_| err(pos, ParseErrorKind::IntOverflow))?;
            out.push((Tok::Int(v), pos));
            continue;
        }
        let (tok, len) = match (c, peek) {
            ('.', Some('.')) => (Tok::DotDot, 2),
            ('&', Some('&')) => (Tok::AndAnd, 2),
            ('|', Some('|')) => (Tok::OrOr, 2),
            ('=', Some('>')) => (Tok::Imp, 2),
            ('=', Some('=')) => (Tok::Eq, 2),
            ('!', Some('=')) => (Tok::Ne, 2),
            ('<', Some('=')) => (Tok::Le, 2),
            ('>', Some('=')) => (Tok::Ge, 2),
            ('{', _) => (Tok::LBrace, 1),
            ('}', _) => (Tok::RBrace, 1),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            (';', _) => (Tok::Semi, 1),
            (':', _) => (Tok::Colon, 1),
            ('\'', _) => (Tok::Prime, 1),
            ('!', _) => (Tok::Not, 1),
            ('-', _) => (Tok::Minus, 1),
            ('+', _) => (Tok::Plus, 1),
            ('<', _) => (Tok::Lt, 1),
            ('>', _) => (Tok::Gt, 1),
            _ => return Err(err(pos, ParseErrorKind::Lexical(c))),
        };
        out.push((tok, pos));
        i += len;
        col += len;
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ty {
    Int,
    Bool,
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ty::Int => "integer",
            Ty::Bool => "boolean",
        })
    }
}

const RESERVED: [&str; 3] = ["true", "false", "xor"];

struct Parser<'a> {
    toks: Vec<(Tok, Pos)>,
    at: usize,
    vars: &'a mut Vec<VarDecl>,
    primed_ok: bool,
}

type PResult<T> = Result<T, ParseError>;

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if matches!(self.peek(), Tok::Ident(s) if s == w) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn syntax<T>(&self, what: &str) -> PResult<T> {
        Err(err(
            self.pos(),
            ParseErrorKind::Syntax(format!("expected {what}, found {}", self.peek())),
        ))
    }

    fn expect(&mut self, t: Tok) -> PResult<()> {
        if self.eat(&t) {
            Ok(())
        } else {
            self.syntax(&t.to_string())
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.syntax("an identifier"),
        }
    }

    fn signed_int(&mut self) -> PResult<i64> {
        let neg = self.eat(&Tok::Minus);
        match *self.peek() {
            Tok::Int(v) => {
                self.bump();
                Ok(if neg { -v } else { v })
            }
            _ => self.syntax("an integer"),
        }
    }

    fn model(&mut self) -> PResult<ModelSpec> {
        if !self.eat_word("model") {
            return self.syntax("`model`");
        }
        let name = self.ident()?;
        self.expect(Tok::LBrace)?;
        let mut invariant = None;
        let mut k = None;
        let mut sections: [Option<Vec<Expr>>; 5] = Default::default();
        loop {
            let pos = self.pos();
            let word = match self.bump().0 {
                Tok::RBrace => break,
                Tok::Ident(w) => w,
                t => {
                    return Err(err(
                        pos,
                        ParseErrorKind::Syntax(format!("expected a section, found {t}")),
                    ))
                }
            };
            let dup = |what: &str| err(pos, ParseErrorKind::Invalid(format!("duplicate {what}")));
            match word.as_str() {
                "var" => self.var_decl()?,
                "invariant" => {
                    self.expect(Tok::Colon)?;
                    let e = self.typed(false, Ty::Bool)?;
                    self.expect(Tok::Semi)?;
                    if invariant.replace(e).is_some() {
                        return Err(dup("`invariant`"));
                    }
                }
                "k" => {
                    self.expect(Tok::Colon)?;
                    let p = self.pos();
                    let v = self.signed_int()?;
                    self.expect(Tok::Semi)?;
                    if v < 2 {
                        return Err(err(
                            p,
                            ParseErrorKind::Invalid(format!("k must be greater than 1, got {v}")),
                        ));
                    }
                    if k.replace(v as usize).is_some() {
                        return Err(dup("`k`"));
                    }
                }
                w => match SECTIONS.iter().position(|s| *s == w) {
                    Some(i) => {
                        let block = self.block()?;
                        if sections[i].replace(block).is_some() {
                            return Err(dup(&format!("`{w}` block")));
                        }
                    }
                    None => {
                        return Err(err(
                            pos,
                            ParseErrorKind::Syntax(format!("expected a section, found `{w}`")),
                        ))
                    }
                },
            }
        }
        let end = self.pos();
        if !matches!(self.peek(), Tok::Eof) {
            return self.syntax("end of input");
        }
        let missing = |what: &str| err(end, ParseErrorKind::Invalid(format!("missing {what}")));
        if self.vars.is_empty() {
            return Err(missing("variable declarations"));
        }
        let mut spec = ModelSpec {
            name,
            variables: self.vars.clone(),
            invariant: invariant.ok_or_else(|| missing("`invariant`"))?,
            program: vec![],
            environment: vec![],
            bad: vec![],
            restricted: vec![],
            faults: vec![],
            k: k.ok_or_else(|| missing("`k`"))?,
        };
        for (i, s) in sections.into_iter().enumerate() {
            *spec.section_mut(i) = s.unwrap_or_default();
        }
        Ok(spec)
    }

    fn var_decl(&mut self) -> PResult<()> {
        let pos = self.pos();
        let name = self.ident()?;
        if RESERVED.contains(&name.as_str()) {
            return Err(err(
                pos,
                ParseErrorKind::Syntax(format!("`{name}` is reserved")),
            ));
        }
        if self.vars.iter().any(|v| v.name == name) {
            return Err(err(
                pos,
                ParseErrorKind::Invalid(format!("duplicate variable `{name}`")),
            ));
        }
        self.expect(Tok::Colon)?;
        let domain = if self.eat_word("bool") {
            Domain::Bool
        } else {
            let dpos = self.pos();
            let lo = self.signed_int()?;
            self.expect(Tok::DotDot)?;
            let hi = self.signed_int()?;
            if lo > hi {
                return Err(err(
                    dpos,
                    ParseErrorKind::Invalid(format!("empty domain {lo}..{hi}")),
                ));
            }
            Domain::Range { lo, hi }
        };
        self.expect(Tok::Semi)?;
        self.vars.push(VarDecl { name, domain });
        Ok(())
    }

    fn block(&mut self) -> PResult<Vec<Expr>> {
        self.expect(Tok::LBrace)?;
        let mut out = Vec::new();
        while !self.eat(&Tok::RBrace) {
            out.push(self.typed(true, Ty::Bool)?);
            if !self.eat(&Tok::Semi) && self.peek() != &Tok::RBrace {
                return self.syntax("`;` or `}`");
            }
        }
        self.eat(&Tok::Semi);
        Ok(out)
    }

    fn typed(&mut self, primed_ok: bool, want: Ty) -> PResult<Expr> {
        self.primed_ok = primed_ok;
        let pos = self.pos();
        let (e, ty) = self.imp()?;
        if ty != want {
            return Err(err(
                pos,
                ParseErrorKind::Type(format!("expected a {want} expression, found {ty}")),
            ));
        }
        Ok(e)
    }

    fn check(pos: Pos, op: &str, got: Ty, want: Ty) -> PResult<()> {
        if got == want {
            Ok(())
        } else {
            Err(err(
                pos,
                ParseErrorKind::Type(format!("`{op}` needs {want} operands, found {got}")),
            ))
        }
    }

    fn logical(
        &mut self,
        op: BinOp,
        lhs: (Expr, Ty),
        pos: Pos,
        rhs: (Expr, Ty),
    ) -> PResult<(Expr, Ty)> {
        Self::check(pos, op.symbol(), lhs.1, Ty::Bool)?;
        Self::check(pos, op.symbol(), rhs.1, Ty::Bool)?;
        Ok((Expr::bin(op, lhs.0, rhs.0), Ty::Bool))
    }

    fn imp(&mut self) -> PResult<(Expr, Ty)> {
        let lhs = self.or()?;
        let pos = self.pos();
        if self.eat(&Tok::Imp) {
            let rhs = self.imp()?;
            return self.logical(BinOp::Imp, lhs, pos, rhs);
        }
        Ok(lhs)
    }

    fn or(&mut self) -> PResult<(Expr, Ty)> {
        let mut lhs = self.xor()?;
        loop {
            let pos = self.pos();
            if !self.eat(&Tok::OrOr) {
                return Ok(lhs);
            }
            let rhs = self.xor()?;
            lhs = self.logical(BinOp::Or, lhs, pos, rhs)?;
        }
    }

    fn xor(&mut self) -> PResult<(Expr, Ty)> {
        let mut lhs = self.and()?;
        loop {
            let pos = self.pos();
            if !self.eat_word("xor") {
                return Ok(lhs);
            }
            let rhs = self.and()?;
            lhs = self.logical(BinOp::Xor, lhs, pos, rhs)?;
        }
    }

    fn and(&mut self) -> PResult<(Expr, Ty)> {
        let mut lhs = self.not()?;
        loop {
            let pos = self.pos();
            if !self.eat(&Tok::AndAnd) {
                return Ok(lhs);
            }
            let rhs = self.not()?;
            lhs = self.logical(BinOp::And, lhs, pos, rhs)?;
        }
    }

    fn not(&mut self) -> PResult<(Expr, Ty)> {
        let pos = self.pos();
        if self.eat(&Tok::Not) {
            let (e, ty) = self.not()?;
            Self::check(pos, "!", ty, Ty::Bool)?;
            return Ok((Expr::not(e), Ty::Bool));
        }
        self.cmp()
    }

    fn cmp_op(&self) -> Option<BinOp> {
        Some(match self.peek() {
            Tok::Eq => BinOp::Eq,
            Tok::Ne => BinOp::Ne,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            _ => return None,
        })
    }

    fn cmp(&mut self) -> PResult<(Expr, Ty)> {
        let lhs = self.sum()?;
        let Some(op) = self.cmp_op() else {
            return Ok(lhs);
        };
        let pos = self.pos();
        self.bump();
        let rhs = self.sum()?;
        match op {
            BinOp::Eq | BinOp::Ne if lhs.1 != rhs.1 => {
                return Err(err(
                    pos,
                    ParseErrorKind::Type(format!(
                        "`{}` compares {} with {}",
                        op.symbol(),
                        lhs.1,
                        rhs.1
                    )),
                ))
            }
            BinOp::Eq | BinOp::Ne => {}
            _ => {
                Self::check(pos, op.symbol(), lhs.1, Ty::Int)?;
                Self::check(pos, op.symbol(), rhs.1, Ty::Int)?;
            }
        }
        if self.cmp_op().is_some() {
            return Err(err(
                self.pos(),
                ParseErrorKind::Syntax("comparisons do not chain; add parentheses".into()),
            ));
        }
        Ok((Expr::bin(op, lhs.0, rhs.0), Ty::Bool))
    }

    fn sum(&mut self) -> PResult<(Expr, Ty)> {
        let mut lhs = self.neg()?;
        loop {
            let pos = self.pos();
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.neg()?;
            Self::check(pos, op.symbol(), lhs.1, Ty::Int)?;
            Self::check(pos, op.symbol(), rhs.1, Ty::Int)?;
            lhs = (Expr::bin(op, lhs.0, rhs.0), Ty::Int);
        }
    }

    fn neg(&mut self) -> PResult<(Expr, Ty)> {
        let pos = self.pos();
        if self.eat(&Tok::Minus) {
            let (e, ty) = self.neg()?;
            Self::check(pos, "-", ty, Ty::Int)?;
            return Ok((Expr::Unary(UnOp::Neg, Box::new(e)), Ty::Int));
        }
        self.atom()
    }

    fn atom(&mut self) -> PResult<(Expr, Ty)> {
        let (tok, pos) = self.bump();
        match tok {
            Tok::Int(v) => Ok((Expr::Int(v), Ty::Int)),
            Tok::LParen => {
                let e = self.imp()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            // `!` also binds tightly here so that `x' == !x` parses
            Tok::Not => {
                let (e, ty) = self.atom()?;
                Self::check(pos, "!", ty, Ty::Bool)?;
                Ok((Expr::not(e), Ty::Bool))
            }
            Tok::Ident(w) if w == "true" => Ok((Expr::Bool(true), Ty::Bool)),
            Tok::Ident(w) if w == "false" => Ok((Expr::Bool(false), Ty::Bool)),
            Tok::Ident(name) if name != "xor" => {
                let primed = self.eat(&Tok::Prime);
                let Some(v) = self.vars.iter().find(|v| v.name == name) else {
                    return Err(err(pos, ParseErrorKind::UnknownVariable(name)));
                };
                if primed && !self.primed_ok {
                    return Err(err(pos, ParseErrorKind::PrimedInPredicate));
                }
                Ok((Expr::Var { name, primed }, v.domain.ty()))
            }
            t => Err(err(
                pos,
                ParseErrorKind::Syntax(format!("expected an expression, found {t}")),
            )),
        }
    }
}

/// Parses and type-checks a model file.
pub fn parse_model(text: &str) -> Result<ModelSpec, ParseError> {
    let mut vars = Vec::new();
    Parser {
        toks: lex(text)?,
        at: 0,
        vars: &mut vars,
        primed_ok: false,
    }
    .model()
}

/// Parses a state predicate over the variables of `spec`.
pub fn parse_predicate(text: &str, spec: &ModelSpec) -> Result<Expr, ParseError> {
    let mut vars = spec.variables.clone();
    let mut p = Parser {
        toks: lex(text)?,
        at: 0,
        vars: &mut vars,
        primed_ok: false,
    };
    let e = p.typed(false, Ty::Bool)?;
    if !matches!(p.peek(), Tok::Eof) {
        return p.syntax("end of input");
    }
    Ok(e)
}

/// Expression with variables resolved to indices. Booleans are 0 and 1.
enum Code {
    Const(i64),
    Cur(usize),
    Next(usize),
    Un(UnOp, Box<Code>),
    Bin(BinOp, Box<Code>, Box<Code>),
}

impl Code {
    fn compile(e: &Expr, index: &HashMap<&str, usize>) -> Code {
        match e {
            Expr::Int(v) => Code::Const(*v),
            Expr::Bool(b) => Code::Const(*b as i64),
            Expr::Var { name, primed } => {
                let i = index[name.as_str()];
                if *primed {
                    Code::Next(i)
                } else {
                    Code::Cur(i)
                }
            }
            Expr::Unary(op, a) => Code::Un(*op, Box::new(Code::compile(a, index))),
            Expr::Binary(op, a, b) => Code::Bin(
                *op,
                Box::new(Code::compile(a, index)),
                Box::new(Code::compile(b, index)),
            ),
        }
    }

    fn eval(&self, cur: &[i64], next: &[i64]) -> i64 {
        match self {
            Code::Const(v) => *v,
            Code::Cur(i) => cur[*i],
            Code::Next(i) => next[*i],
            Code::Un(UnOp::Not, a) => (a.eval(cur, next) == 0) as i64,
            Code::Un(UnOp::Neg, a) => a.eval(cur, next).wrapping_neg(),
            Code::Bin(op, a, b) => {
                let x = a.eval(cur, next);
                match op {
                    BinOp::And => (x != 0 && b.eval(cur, next) != 0) as i64,
                    BinOp::Or => (x != 0 || b.eval(cur, next) != 0) as i64,
                    BinOp::Imp => (x == 0 || b.eval(cur, next) != 0) as i64,
                    _ => {
                        let y = b.eval(cur, next);
                        match op {
                            BinOp::Xor => ((x != 0) != (y != 0)) as i64,
                            BinOp::Eq => (x == y) as i64,
                            BinOp::Ne => (x != y) as i64,
                            BinOp::Lt => (x < y) as i64,
                            BinOp::Le => (x <= y) as i64,
                            BinOp::Gt => (x > y) as i64,
                            BinOp::Ge => (x >= y) as i64,
                            BinOp::Add => x.wrapping_add(y),
                            BinOp::Sub => x.wrapping_sub(y),
                            BinOp::And | BinOp::Or | BinOp::Imp => unreachable!(),
                        }
                    }
                }
            }
        }
    }
}

fn conjuncts<'e>(e: &'e Expr, out: &mut Vec<&'e Expr>) {
    match e {
        Expr::Binary(BinOp::And, a, b) => {
            conjuncts(a, out);
            conjuncts(b, out);
        }
        _ => out.push(e),
    }
}

/// Explicit enumeration of a spec's state space.
pub struct Elaborator<'s> {
    spec: &'s ModelSpec,
    index: HashMap<&'s str, usize>,
    sizes: Vec<i64>,
    n: usize,
}

impl<'s> Elaborator<'s> {
    pub fn new(spec: &'s ModelSpec, cap: u128) -> Result<Self, ElaborateError> {
        let states = spec.state_count();
        if states > cap || states > usize::MAX as u128 {
            return Err(ElaborateError::StateCap { states, cap });
        }
        Ok(Elaborator {
            spec,
            index: spec
                .variables
                .iter()
                .enumerate()
                .map(|(i, v)| (v.name.as_str(), i))
                .collect(),
            sizes: spec
                .variables
                .iter()
                .map(|v| v.domain.size() as i64)
                .collect(),
            n: states as usize,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Row-major: the first declared variable varies slowest.
    pub fn decode(&self, mut id: StateId, out: &mut [i64]) {
        for i in (0..self.sizes.len()).rev() {
            let size = self.sizes[i] as usize;
            out[i] = self.spec.variables[i].domain.lo() + (id % size) as i64;
            id /= size;
        }
    }

    pub fn encode(&self, vals: &[i64]) -> Option<StateId> {
        let mut id = 0usize;
        for (i, v) in self.spec.variables.iter().enumerate() {
            let off = vals[i] - v.domain.lo();
            if off < 0 || off >= self.sizes[i] {
                return None;
            }
            id = id * self.sizes[i] as usize + off as usize;
        }
        Some(id)
    }

    pub fn label(&self, id: StateId) -> String {
        let mut vals = vec![0; self.sizes.len()];
        self.decode(id, &mut vals);
        self.spec
            .variables
            .iter()
            .zip(&vals)
            .map(|(v, x)| match v.domain {
                Domain::Bool => format!("{}={}", v.name, *x != 0),
                Domain::Range { .. } => format!("{}={x}", v.name),
            })
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn predicate(&self, e: &Expr) -> Predicate {
        let code = Code::compile(e, &self.index);
        let mut vals = vec![0; self.sizes.len()];
        Predicate::from_fn(self.n, |s| {
            self.decode(s, &mut vals);
            code.eval(&vals, &vals) != 0
        })
    }

    /// Union of the pairs satisfying each expression. Conjuncts of the form
    /// `v' == e` with `e` unprimed fix `v'` directly instead of enumerating.
    pub fn relation(&self, exprs: &[Expr]) -> Relation {
        let mut rel = Relation::empty(self.n);
        let nv = self.sizes.len();
        let mut cur = vec![0; nv];
        let mut next = vec![0; nv];
        for e in exprs {
            let code = Code::compile(e, &self.index);
            let mut parts = Vec::new();
            conjuncts(e, &mut parts);
            let mut fixed: Vec<Option<Code>> = (0..nv).map(|_| None).collect();
            for part in parts {
                if let Expr::Binary(BinOp::Eq, a, b) = part {
                    for (lhs, rhs) in [(a, b), (b, a)] {
                        if let Expr::Var { name, primed: true } = &**lhs {
                            let i = self.index[name.as_str()];
                            if fixed[i].is_none() && !rhs.has_primed() {
                                fixed[i] = Some(Code::compile(rhs, &self.index));
                                break;
                            }
                        }
                    }
                }
            }
            let free: Vec<usize> = (0..nv).filter(|&i| fixed[i].is_none()).collect();
            'source: for s in 0..self.n {
                self.decode(s, &mut cur);
                for (i, f) in fixed.iter().enumerate() {
                    if let Some(c) = f {
                        next[i] = c.eval(&cur, &cur);
                        let off = next[i] - self.spec.variables[i].domain.lo();
                        if off < 0 || off >= self.sizes[i] {
                            continue 'source;
                        }
                    }
                }
                for &i in &free {
                    next[i] = self.spec.variables[i].domain.lo();
                }
                loop {
                    if code.eval(&cur, &next) != 0 {
                        rel.insert(s, self.encode(&next).expect("in domain"));
                    }
                    // odometer over the free variables
                    let mut j = free.len();
                    loop {
                        if j == 0 {
                            continue 'source;
                        }
                        j -= 1;
                        let i = free[j];
                        let lo = self.spec.variables[i].domain.lo();
                        if next[i] - lo + 1 < self.sizes[i] {
                            next[i] += 1;
                            break;
                        }
                        next[i] = lo;
                    }
                }
            }
        }
        rel
    }

    pub fn model(&self) -> Result<Model, ElaborateError> {
        let space = StateSpace::with_labels((0..self.n).map(|s| self.label(s)).collect())?;
        let spec = self.spec;
        let model = Model {
            space,
            delta_p: self.relation(&spec.program),
            delta_e: self.relation(&spec.environment),
            delta_b: self.relation(&spec.bad),
            delta_r: self.relation(&spec.restricted),
            faults: self.relation(&spec.faults),
            invariant: self.predicate(&spec.invariant),
            k: spec.k,
        };
        model.validate()?;
        Ok(model)
    }
}

/// The state cap from [`STATE_CAP_VAR`], or the default.
pub fn state_cap() -> u128 {
    std::env::var(STATE_CAP_VAR)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_STATE_CAP)
}

pub fn elaborate(spec: &ModelSpec) -> Result<Model, ElaborateError> {
    elaborate_with_cap(spec, state_cap())
}

pub fn elaborate_with_cap(spec: &ModelSpec, cap: u128) -> Result<Model, ElaborateError> {
    Elaborator::new(spec, cap)?.model()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "model m { var x: 0..1; invariant: x == 0; program {}; environment {}; bad {}; restricted {}; faults {}; k: 2; }";

    #[test]
    fn minimal_file() {
        let spec = parse_model(MINIMAL).unwrap();
        assert_eq!(spec.variables.len(), 1);
        assert_eq!(spec.k, 2);
        let m = elaborate(&spec).unwrap();
        assert_eq!(m.n(), 2);
        assert_eq!(m.invariant, Predicate::from_states(2, [0]));
    }

    #[test]
    fn primed_read_in_invariant() {
        let text = MINIMAL.replace("invariant: x == 0", "invariant: x' == 0");
        let e = parse_model(&text).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::PrimedInPredicate);
        assert_eq!((e.line, e.col), (1, 35));
        assert!(e.to_string().contains("primed read in predicate"));
    }

    #[test]
    fn diagnostics_carry_locations() {
        let cases = [
            (
                "model m {\n  var x: 0..1;\n  invariant: y == 0;\n  k: 2;\n}",
                (3, 14),
                "unknown variable",
            ),
            (
                "model m {\n  var x: 0..1;\n  invariant: x + true;\n  k: 2;\n}",
                (3, 16),
                "type error",
            ),
            (
                "model m {\n  var x: 0..1;\n  invariant: x == 0\n  k: 2;\n}",
                (4, 3),
                "expected `;`",
            ),
            (
                "model m {\n  var x: 0..1;\n  invariant: x # 0;\n}",
                (3, 16),
                "unexpected character",
            ),
            ("model m {\n  var x: 2..1;\n}", (2, 10), "empty domain"),
            (
                "model m {\n  var x: 0..1;\n  invariant: true;\n}",
                (4, 2),
                "missing `k`",
            ),
            (
                "model m {\n  var x: 0..1;\n  invariant: 0 < x < 1;\n  k: 2;\n}",
                (3, 20),
                "do not chain",
            ),
        ];
        for (text, (line, col), msg) in cases {
            let e = parse_model(text).unwrap_err();
            assert_eq!((e.line, e.col), (line, col), "{text}: {e}");
            assert!(e.to_string().contains(msg), "{e}");
        }
    }

    #[test]
    fn comments_and_whitespace() {
        let text = "// header\nmodel   m{var x:0..1;// trailing\ninvariant:x==0;k:2;}";
        assert_eq!(parse_model(text).unwrap().variables.len(), 1);
    }

    #[test]
    fn boolean_flip_environment() {
        let text = "model m { var x: bool; invariant: x; environment { x' == !x } k: 2; }";
        let m = elaborate(&parse_model(text).unwrap()).unwrap();
        assert_eq!(m.delta_e, Relation::from_pairs(2, [(0, 1), (1, 0)]));
        assert_eq!(m.space.label(1), "x=true");
    }

    #[test]
    fn frame_self_loops() {
        let text = "model m { var x: 0..2; invariant: true; program { x' == x; } k: 2; }";
        let m = elaborate(&parse_model(text).unwrap()).unwrap();
        assert_eq!(m.delta_p, Relation::from_pairs(3, [(0, 0), (1, 1), (2, 2)]));
    }

    #[test]
    fn unconstrained_next_matches_every_completion() {
        let text = "model m { var x: 0..1; var y: 0..2; invariant: true; program { x == 0 && x' == 1 } k: 2; }";
        let m = elaborate(&parse_model(text).unwrap()).unwrap();
        // states (x,y) -> id 3x + y
        let want: Vec<_> = (0..3)
            .flat_map(|y| (0..3).map(move |y2| (y, 3 + y2)))
            .collect();
        assert_eq!(m.delta_p, Relation::from_pairs(6, want));
    }

    #[test]
    fn fixed_value_out_of_domain_drops_source() {
        let text = "model m { var x: 0..2; invariant: true; program { x' == x + 1 } k: 2; }";
        let m = elaborate(&parse_model(text).unwrap()).unwrap();
        assert_eq!(m.delta_p, Relation::from_pairs(3, [(0, 1), (1, 2)]));
    }

    #[test]
    fn precedence() {
        let spec = parse_model(MINIMAL).unwrap();
        let p = |s: &str| parse_predicate(s, &spec).unwrap();
        assert_eq!(p("true => false => true"), p("true => (false => true)"));
        assert_eq!(
            p("true || false && x == 0"),
            p("true || (false && (x == 0))")
        );
        assert_eq!(p("true xor false || true"), p("(true xor false) || true"));
        assert_eq!(p("!x == 0"), p("!(x == 0)"));
        assert_eq!(p("-x + 1 == 0"), p("((-x) + 1) == 0"));
        assert_eq!(p("x - 1 - 1 == 0"), p("(x - 1) - 1 == 0"));
    }

    #[test]
    fn state_cap_refuses() {
        let text = "model m { var a: 0..999; var b: 0..999; invariant: true; k: 2; }";
        let spec = parse_model(text).unwrap();
        assert!(matches!(
            elaborate_with_cap(&spec, 10_000),
            Err(ElaborateError::StateCap {
                states: 1_000_000,
                ..
            })
        ));
    }

    #[test]
    fn negative_domains_and_row_major_order() {
        let text = "model m { var a: -1..0; var b: bool; invariant: a == -1 && b; k: 3; }";
        let m = elaborate(&parse_model(text).unwrap()).unwrap();
        let labels: Vec<_> = (0..4).map(|s| m.space.label(s)).collect();
        assert_eq!(
            labels,
            ["a=-1,b=false", "a=-1,b=true", "a=0,b=false", "a=0,b=true"]
        );
        assert_eq!(m.invariant, Predicate::from_states(4, [1]));
        assert_eq!(m.k, 3);
    }

    #[test]
    fn pretty_print_round_trip() {
        let text =
            "model m { var x: -2..3; var b: bool; invariant: !(x == 0) => b xor (x < 1 || !b);
            program { x' == -(x - 1) && b' == !b; x > 0 } faults { (x' == x) == b } k: 4; }";
        let spec = parse_model(text).unwrap();
        let printed = pretty_print(&spec);
        assert_eq!(parse_model(&printed).unwrap(), spec);
    }
}
