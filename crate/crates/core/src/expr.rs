//! Parameter expressions and the second-quantized operator grammar.
//!
//! ```text
//! expr    := ['+'|'-'] term (('+'|'-') term)* ['+' 'h.c.']
//! term    := item (['*' | '/'] item)*        juxtaposition multiplies
//! item    := ladder | coef
//! ladder  := "a'(" k ")" | "a(" k ")" | "n(" k ")" | "sp(" j ")" | "sm(" j ")"
//! coef    := number | number'i' | 'i' | name | func '(' cexpr ')' | '(' cexpr ')'
//! cexpr   := coefficient arithmetic with + - * / and unary minus
//! func    := cos | sin | exp | sqrt | conj
//! ```
//!
//! Boson indices `k` and two-level indices `j` are 1-based in the text and
//! 0-based in memory.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{Jet, JetSpace};
use crate::linalg::C64;

/// Real- or complex-valued expression over real named parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamExpr {
    Num(C64),
    Param(String),
    Neg(Box<ParamExpr>),
    Add(Box<ParamExpr>, Box<ParamExpr>),
    Sub(Box<ParamExpr>, Box<ParamExpr>),
    Mul(Box<ParamExpr>, Box<ParamExpr>),
    Div(Box<ParamExpr>, Box<ParamExpr>),
    Func(Func, Box<ParamExpr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Cos,
    Sin,
    Exp,
    Sqrt,
    Conj,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Cos => "cos",
            Func::Sin => "sin",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Conj => "conj",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "cos" => Func::Cos,
            "sin" => Func::Sin,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "conj" => Func::Conj,
            _ => return None,
        })
    }
}

impl ParamExpr {
    pub fn real(x: f64) -> Self {
        ParamExpr::Num(C64::new(x, 0.0))
    }

    pub fn param(name: &str) -> Self {
        ParamExpr::Param(name.to_string())
    }

    pub fn mul(a: ParamExpr, b: ParamExpr) -> Self {
        ParamExpr::Mul(Box::new(a), Box::new(b))
    }

    pub fn func(f: Func, a: ParamExpr) -> Self {
        ParamExpr::Func(f, Box::new(a))
    }

    /// `exp(i * name)`.
    pub fn phase(name: &str) -> Self {
        Self::func(Func::Exp, Self::mul(ParamExpr::Num(C64::new(0.0, 1.0)), Self::param(name)))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let toks = lex(text)?;
        let mut p = Parser { toks, pos: 0, text };
        let e = p.cexpr()?;
        p.expect_end()?;
        Ok(e)
    }

    pub fn params(&self, out: &mut BTreeSet<String>) {
        match self {
            ParamExpr::Num(_) => {}
            ParamExpr::Param(n) => {
                out.insert(n.clone());
            }
            ParamExpr::Neg(a) | ParamExpr::Func(_, a) => a.params(out),
            ParamExpr::Add(a, b) | ParamExpr::Sub(a, b) | ParamExpr::Mul(a, b) | ParamExpr::Div(a, b) => {
                a.params(out);
                b.params(out);
            }
        }
    }

    /// Complex conjugate, valid because every parameter is real.
    pub fn conj(&self) -> Self {
        match self {
            ParamExpr::Num(z) => ParamExpr::Num(z.conj()),
            ParamExpr::Param(_) => self.clone(),
            ParamExpr::Neg(a) => ParamExpr::Neg(Box::new(a.conj())),
            ParamExpr::Add(a, b) => ParamExpr::Add(Box::new(a.conj()), Box::new(b.conj())),
            ParamExpr::Sub(a, b) => ParamExpr::Sub(Box::new(a.conj()), Box::new(b.conj())),
            ParamExpr::Mul(a, b) => ParamExpr::Mul(Box::new(a.conj()), Box::new(b.conj())),
            ParamExpr::Div(a, b) => ParamExpr::Div(Box::new(a.conj()), Box::new(b.conj())),
            ParamExpr::Func(Func::Conj, a) => (**a).clone(),
            ParamExpr::Func(f, a) => ParamExpr::Func(*f, Box::new(a.conj())),
        }
    }

    pub fn eval(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<C64> {
        Ok(match self {
            ParamExpr::Num(z) => *z,
            ParamExpr::Param(n) => C64::new(lookup(n).ok_or_else(|| Error::UnboundParameter(n.clone()))?, 0.0),
            ParamExpr::Neg(a) => -a.eval(lookup)?,
            ParamExpr::Add(a, b) => a.eval(lookup)? + b.eval(lookup)?,
            ParamExpr::Sub(a, b) => a.eval(lookup)? - b.eval(lookup)?,
            ParamExpr::Mul(a, b) => a.eval(lookup)? * b.eval(lookup)?,
            ParamExpr::Div(a, b) => a.eval(lookup)? / b.eval(lookup)?,
            ParamExpr::Func(f, a) => {
                let x = a.eval(lookup)?;
                match f {
                    Func::Cos => x.cos(),
                    Func::Sin => x.sin(),
                    Func::Exp => x.exp(),
                    Func::Sqrt => x.sqrt(),
                    Func::Conj => x.conj(),
                }
            }
        })
    }

    /// Taylor expansion; `var` maps a parameter to (variable index, value).
    pub fn eval_jet(
        &self,
        sp: &JetSpace,
        k: usize,
        var: &dyn Fn(&str) -> Option<(Option<usize>, f64)>,
    ) -> Result<Jet> {
        Ok(match self {
            ParamExpr::Num(z) => Jet::constant(sp, k, *z),
            ParamExpr::Param(n) => match var(n).ok_or_else(|| Error::UnboundParameter(n.clone()))? {
                (Some(v), x) => Jet::variable(sp, k, v, x),
                (None, x) => Jet::constant(sp, k, C64::new(x, 0.0)),
            },
            ParamExpr::Neg(a) => a.eval_jet(sp, k, var)?.scale(C64::new(-1.0, 0.0)),
            ParamExpr::Add(a, b) => a.eval_jet(sp, k, var)?.add(&b.eval_jet(sp, k, var)?),
            ParamExpr::Sub(a, b) => a.eval_jet(sp, k, var)?.sub(&b.eval_jet(sp, k, var)?),
            ParamExpr::Mul(a, b) => a.eval_jet(sp, k, var)?.mul(sp, &b.eval_jet(sp, k, var)?),
            ParamExpr::Div(a, b) => {
                let d = b.eval_jet(sp, k, var)?;
                if d.value().norm() == 0.0 {
                    return Err(Error::Numerical("division by zero in parameter expression".into()));
                }
                a.eval_jet(sp, k, var)?.mul(sp, &d.recip(sp))
            }
            ParamExpr::Func(f, a) => {
                let x = a.eval_jet(sp, k, var)?;
                match f {
                    Func::Cos => x.cos(sp),
                    Func::Sin => x.sin(sp),
                    Func::Exp => x.exp(sp),
                    Func::Sqrt => x.sqrt(sp),
                    Func::Conj => x.conj(),
                }
            }
        })
    }

    fn precedence(&self) -> u8 {
        match self {
            ParamExpr::Add(..) | ParamExpr::Sub(..) => 1,
            ParamExpr::Mul(..) | ParamExpr::Div(..) => 2,
            ParamExpr::Neg(_) => 3,
            ParamExpr::Num(z) if z.re != 0.0 && z.im != 0.0 => 1,
            ParamExpr::Num(z) if z.re < 0.0 || z.im < 0.0 => 3,
            _ => 4,
        }
    }
}

fn fmt_f64(x: f64) -> String {
    let s = format!("{x}");
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

impl fmt::Display for ParamExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |f: &mut fmt::Formatter<'_>, e: &ParamExpr, min: u8| {
            if e.precedence() < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            ParamExpr::Num(z) => {
                if z.im == 0.0 {
                    write!(f, "{}", fmt_f64(z.re))
                } else if z.re == 0.0 {
                    write!(f, "{}i", fmt_f64(z.im))
                } else if z.im < 0.0 {
                    write!(f, "{} - {}i", fmt_f64(z.re), fmt_f64(-z.im))
                } else {
                    write!(f, "{} + {}i", fmt_f64(z.re), fmt_f64(z.im))
                }
            }
            ParamExpr::Param(n) => write!(f, "{n}"),
            ParamExpr::Neg(a) => {
                write!(f, "-")?;
                wrap(f, a, 3)
            }
            ParamExpr::Add(a, b) => {
                wrap(f, a, 1)?;
                write!(f, " + ")?;
                wrap(f, b, 2)
            }
            ParamExpr::Sub(a, b) => {
                wrap(f, a, 1)?;
                write!(f, " - ")?;
                wrap(f, b, 2)
            }
            ParamExpr::Mul(a, b) => {
                wrap(f, a, 2)?;
                write!(f, " * ")?;
                wrap(f, b, 3)
            }
            ParamExpr::Div(a, b) => {
                wrap(f, a, 2)?;
                write!(f, " / ")?;
                wrap(f, b, 3)
            }
            ParamExpr::Func(g, a) => write!(f, "{}({a})", g.name()),
        }
    }
}

/// One ladder symbol with a 0-based mode index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ladder {
    Create(usize),
    Annihilate(usize),
    Raise(usize),
    Lower(usize),
}

impl Ladder {
    pub fn dagger(self) -> Ladder {
        match self {
            Ladder::Create(k) => Ladder::Annihilate(k),
            Ladder::Annihilate(k) => Ladder::Create(k),
            Ladder::Raise(j) => Ladder::Lower(j),
            Ladder::Lower(j) => Ladder::Raise(j),
        }
    }
}

impl fmt::Display for Ladder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ladder::Create(k) => write!(f, "a'({})", k + 1),
            Ladder::Annihilate(k) => write!(f, "a({})", k + 1),
            Ladder::Raise(j) => write!(f, "sp({})", j + 1),
            Ladder::Lower(j) => write!(f, "sm({})", j + 1),
        }
    }
}

/// `coef × factors[0] factors[1] …` (rightmost factor acts first).
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub coef: ParamExpr,
    pub factors: Vec<Ladder>,
}

impl Term {
    pub fn new(coef: ParamExpr, factors: Vec<Ladder>) -> Self {
        Term { coef, factors }
    }

    pub fn dagger(&self) -> Term {
        Term { coef: self.coef.conj(), factors: self.factors.iter().rev().map(|l| l.dagger()).collect() }
    }
}

/// Polynomial in ladder operators with parameter-dependent coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorExpression {
    pub terms: Vec<Term>,
    /// Set when the term list is closed under conjugate transpose.
    pub hermitian: bool,
}

impl OperatorExpression {
    pub fn new(terms: Vec<Term>) -> Self {
        OperatorExpression { terms, hermitian: false }
    }

    /// Append the Hermitian conjugate of every term and flag as Hermitian.
    pub fn plus_hc(mut self) -> Self {
        let hc: Vec<Term> = self.terms.iter().map(Term::dagger).collect();
        self.terms.extend(hc);
        self.hermitian = true;
        self
    }

    pub fn dagger(&self) -> Self {
        OperatorExpression { terms: self.terms.iter().map(Term::dagger).collect(), hermitian: self.hermitian }
    }

    pub fn sum(mut self, other: &OperatorExpression) -> Self {
        self.hermitian = self.hermitian && other.hermitian;
        self.terms.extend(other.terms.iter().cloned());
        self
    }

    /// Number operator `n(k)` as a single term.
    pub fn number(k: usize, coef: ParamExpr) -> Term {
        Term::new(coef, vec![Ladder::Create(k), Ladder::Annihilate(k)])
    }

    pub fn parse(text: &str) -> Result<Self> {
        let toks = lex(text)?;
        let mut p = Parser { toks, pos: 0, text };
        let e = p.operator()?;
        p.expect_end()?;
        Ok(e)
    }

    pub fn params(&self) -> BTreeSet<String> {
        let mut s = BTreeSet::new();
        for t in &self.terms {
            t.coef.params(&mut s);
        }
        s
    }

    /// Shift boson and two-level indices (used when composing systems).
    pub fn shifted(&self, boson_offset: usize, level_offset: usize) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| Term {
                coef: t.coef.clone(),
                factors: t
                    .factors
                    .iter()
                    .map(|l| match *l {
                        Ladder::Create(k) => Ladder::Create(k + boson_offset),
                        Ladder::Annihilate(k) => Ladder::Annihilate(k + boson_offset),
                        Ladder::Raise(j) => Ladder::Raise(j + level_offset),
                        Ladder::Lower(j) => Ladder::Lower(j + level_offset),
                    })
                    .collect(),
            })
            .collect();
        OperatorExpression { terms, hermitian: self.hermitian }
    }

    pub fn renamed(&self, rename: &dyn Fn(&str) -> String) -> Self {
        let terms = self.terms.iter().map(|t| Term { coef: rename_expr(&t.coef, rename), factors: t.factors.clone() }).collect();
        OperatorExpression { terms, hermitian: self.hermitian }
    }
}

pub fn rename_expr(e: &ParamExpr, rename: &dyn Fn(&str) -> String) -> ParamExpr {
    match e {
        ParamExpr::Num(_) => e.clone(),
        ParamExpr::Param(n) => ParamExpr::Param(rename(n)),
        ParamExpr::Neg(a) => ParamExpr::Neg(Box::new(rename_expr(a, rename))),
        ParamExpr::Add(a, b) => ParamExpr::Add(Box::new(rename_expr(a, rename)), Box::new(rename_expr(b, rename))),
        ParamExpr::Sub(a, b) => ParamExpr::Sub(Box::new(rename_expr(a, rename)), Box::new(rename_expr(b, rename))),
        ParamExpr::Mul(a, b) => ParamExpr::Mul(Box::new(rename_expr(a, rename)), Box::new(rename_expr(b, rename))),
        ParamExpr::Div(a, b) => ParamExpr::Div(Box::new(rename_expr(a, rename)), Box::new(rename_expr(b, rename))),
        ParamExpr::Func(f, a) => ParamExpr::Func(*f, Box::new(rename_expr(a, rename))),
    }
}

impl fmt::Display for OperatorExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (n, t) in self.terms.iter().enumerate() {
            if n > 0 {
                write!(f, " + ")?;
            }
            let coef = match &t.coef {
                ParamExpr::Num(z) if z.im == 0.0 && z.re >= 0.0 => fmt_f64(z.re).to_string(),
                ParamExpr::Num(z) if z.im == 0.0 => format!("({})", fmt_f64(z.re)),
                e if e.precedence() >= 4 => format!("{e}"),
                e => format!("({e})"),
            };
            write!(f, "{coef}")?;
            for l in &t.factors {
                write!(f, " {l}")?;
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------- lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Imag(f64),
    Ident(String),
    Prime,
    LParen,
    RParen,
    Plus,
    Minus,
    Star,
    Slash,
    HermConj,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |pos: usize, msg: &str| Error::Parse { line: 1, column: pos + 1, message: msg.to_string() };
    while i < chars.len() {
        let ch = chars[i];
        let start = i;
        if ch.is_whitespace() {
            i += 1;
            continue;
        }
        if ch.is_ascii_digit() || (ch == '.' && chars.get(i + 1).is_some_and(|c| c.is_ascii_digit())) {
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v: f64 = s.parse().map_err(|_| err(start, &format!("bad number `{s}`")))?;
            let imag = i < chars.len()
                && chars[i] == 'i'
                && !chars.get(i + 1).is_some_and(|c| c.is_alphanumeric() || *c == '_');
            if imag {
                i += 1;
                out.push((Tok::Imag(v), start));
            } else {
                out.push((Tok::Num(v), start));
            }
            continue;
        }
        if (ch == 'h' || ch == 'H') && chars[i..].iter().take(4).collect::<String>().eq_ignore_ascii_case("h.c.") {
            i += 4;
            out.push((Tok::HermConj, start));
            continue;
        }
        if ch.is_alphabetic() || ch == '_' {
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), start));
            continue;
        }
        let t = match ch {
            '\'' | '†' => Tok::Prime,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            _ => return Err(err(start, &format!("unexpected character `{ch}`"))),
        };
        i += 1;
        out.push((t, start));
    }
    Ok(out)
}

// ---------------------------------------------------------------- parser

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    text: &'a str,
}

enum Item {
    Coef(ParamExpr),
    Ladders(Vec<Ladder>),
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|(t, _)| t)
    }

    fn column(&self) -> usize {
        self.toks.get(self.pos).map_or(self.text.chars().count(), |(_, p)| *p) + 1
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse { line: 1, column: self.column(), message: msg.into() })
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<()> {
        if self.peek() == Some(&t) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn expect_end(&self) -> Result<()> {
        if self.pos < self.toks.len() {
            self.err("unexpected trailing input")
        } else {
            Ok(())
        }
    }

    fn cexpr(&mut self) -> Result<ParamExpr> {
        let mut lhs = self.cterm()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    lhs = ParamExpr::Add(Box::new(lhs), Box::new(self.cterm()?));
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    lhs = ParamExpr::Sub(Box::new(lhs), Box::new(self.cterm()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn cterm(&mut self) -> Result<ParamExpr> {
        let mut lhs = self.cunary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    lhs = ParamExpr::Mul(Box::new(lhs), Box::new(self.cunary()?));
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    lhs = ParamExpr::Div(Box::new(lhs), Box::new(self.cunary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn cunary(&mut self) -> Result<ParamExpr> {
        if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            return Ok(ParamExpr::Neg(Box::new(self.cunary()?)));
        }
        if self.peek() == Some(&Tok::Plus) {
            self.pos += 1;
        }
        self.catom()
    }

    fn catom(&mut self) -> Result<ParamExpr> {
        match self.bump() {
            Some(Tok::Num(v)) => Ok(ParamExpr::real(v)),
            Some(Tok::Imag(v)) => Ok(ParamExpr::Num(C64::new(0.0, v))),
            Some(Tok::LParen) => {
                let e = self.cexpr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                if let Some(f) = Func::from_name(&name) {
                    self.expect(Tok::LParen, "`(` after function name")?;
                    let e = self.cexpr()?;
                    self.expect(Tok::RParen, "`)`")?;
                    return Ok(ParamExpr::Func(f, Box::new(e)));
                }
                if is_ladder_name(&name) && matches!(self.peek(), Some(Tok::LParen) | Some(Tok::Prime)) {
                    self.pos -= 1;
                    return self.err("ladder operator inside a coefficient");
                }
                if name == "i" {
                    return Ok(ParamExpr::Num(C64::new(0.0, 1.0)));
                }
                Ok(ParamExpr::Param(name))
            }
            _ => {
                self.pos = self.pos.saturating_sub(1);
                self.err("expected a number, parameter, or `(`")
            }
        }
    }

    fn index(&mut self) -> Result<usize> {
        self.expect(Tok::LParen, "`(`")?;
        let k = match self.bump() {
            Some(Tok::Num(v)) if v.fract() == 0.0 && v >= 1.0 => v as usize - 1,
            _ => {
                self.pos -= 1;
                return self.err("expected a positive integer mode index");
            }
        };
        self.expect(Tok::RParen, "`)`")?;
        Ok(k)
    }

    fn item(&mut self) -> Result<Item> {
        if let Some(Tok::Ident(name)) = self.peek().cloned() {
            let next = self.peek_at(1);
            let ladder = match name.as_str() {
                "a" if next == Some(&Tok::Prime) => {
                    self.pos += 2;
                    Some(vec![Ladder::Create(self.index()?)])
                }
                "a" if next == Some(&Tok::LParen) => {
                    self.pos += 1;
                    Some(vec![Ladder::Annihilate(self.index()?)])
                }
                "n" if next == Some(&Tok::LParen) => {
                    self.pos += 1;
                    let k = self.index()?;
                    Some(vec![Ladder::Create(k), Ladder::Annihilate(k)])
                }
                "sp" if next == Some(&Tok::LParen) => {
                    self.pos += 1;
                    Some(vec![Ladder::Raise(self.index()?)])
                }
                "sm" if next == Some(&Tok::LParen) => {
                    self.pos += 1;
                    Some(vec![Ladder::Lower(self.index()?)])
                }
                _ => None,
            };
            if let Some(l) = ladder {
                return Ok(Item::Ladders(l));
            }
        }
        Ok(Item::Coef(self.catom()?))
    }

    fn starts_item(&self) -> bool {
        matches!(self.peek(), Some(Tok::Num(_)) | Some(Tok::Imag(_)) | Some(Tok::Ident(_)) | Some(Tok::LParen))
    }

    fn term(&mut self, negate: bool) -> Result<Term> {
        let mut coef: Option<ParamExpr> = if negate { Some(ParamExpr::real(-1.0)) } else { None };
        let mut factors = Vec::new();
        let mut first = true;
        loop {
            let divide = if first {
                false
            } else {
                match self.peek() {
                    Some(Tok::Star) => {
                        self.pos += 1;
                        false
                    }
                    Some(Tok::Slash) => {
                        self.pos += 1;
                        true
                    }
                    _ if self.starts_item() => false,
                    _ => break,
                }
            };
            first = false;
            match self.item()? {
                Item::Coef(e) => {
                    coef = Some(match (coef, divide) {
                        (None, false) => e,
                        (None, true) => ParamExpr::Div(Box::new(ParamExpr::real(1.0)), Box::new(e)),
                        (Some(c), false) => ParamExpr::Mul(Box::new(c), Box::new(e)),
                        (Some(c), true) => ParamExpr::Div(Box::new(c), Box::new(e)),
                    });
                }
                Item::Ladders(l) => {
                    if divide {
                        return self.err("cannot divide by a ladder operator");
                    }
                    factors.extend(l);
                }
            }
        }
        Ok(Term { coef: coef.unwrap_or(ParamExpr::real(1.0)), factors })
    }

    fn operator(&mut self) -> Result<OperatorExpression> {
        let mut terms = Vec::new();
        let mut hc = false;
        let mut negate = match self.peek() {
            Some(Tok::Minus) => {
                self.pos += 1;
                true
            }
            Some(Tok::Plus) => {
                self.pos += 1;
                false
            }
            _ => false,
        };
        if self.pos >= self.toks.len() {
            return self.err("empty operator expression");
        }
        loop {
            if self.peek() == Some(&Tok::HermConj) {
                if negate {
                    return self.err("`h.c.` cannot be subtracted");
                }
                self.pos += 1;
                hc = true;
                if self.pos < self.toks.len() {
                    return self.err("`h.c.` must be the final term");
                }
                break;
            }
            terms.push(self.term(negate)?);
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    negate = false;
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    negate = true;
                }
                None => break,
                _ => return self.err("expected `+`, `-`, or end of expression"),
            }
        }
        let e = OperatorExpression::new(terms);
        Ok(if hc { e.plus_hc() } else { e })
    }
}

fn is_ladder_name(s: &str) -> bool {
    matches!(s, "a" | "n" | "sp" | "sm")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_ladder_products() {
        let e = OperatorExpression::parse("2 * a'(1) a(2) + n(3) - 0.5i sp(1) sm(1)").unwrap();
        assert_eq!(e.terms.len(), 3);
        assert_eq!(e.terms[0].factors, vec![Ladder::Create(0), Ladder::Annihilate(1)]);
        assert_eq!(e.terms[1].factors, vec![Ladder::Create(2), Ladder::Annihilate(2)]);
        assert_eq!(e.terms[2].factors, vec![Ladder::Raise(0), Ladder::Lower(0)]);
        let c = e.terms[2].coef.eval(&|_| None).unwrap();
        assert!((c - C64::new(0.0, -0.5)).norm() < 1e-15);
    }

    #[test]
    fn parses_parametrized_coefficients_and_hc() {
        let e = OperatorExpression::parse("cos(theta)*exp(i*phi) a'(2) a(1) + h.c.").unwrap();
        assert!(e.hermitian);
        assert_eq!(e.terms.len(), 2);
        let v = e.terms[1].coef.eval(&|n| if n == "theta" { Some(0.0) } else { Some(0.5) }).unwrap();
        assert!((v - C64::new(0.0, -0.5).exp()).norm() < 1e-15);
        assert_eq!(e.params().into_iter().collect::<Vec<_>>(), vec!["phi".to_string(), "theta".to_string()]);
    }

    #[test]
    fn rejects_garbage_with_column() {
        match OperatorExpression::parse("a'(1) a(2) + $") {
            Err(Error::Parse { column, .. }) => assert_eq!(column, 14),
            other => panic!("unexpected {other:?}"),
        }
        assert!(OperatorExpression::parse("a(0)").is_err());
        assert!(OperatorExpression::parse("").is_err());
        assert!(OperatorExpression::parse("a'(1) +").is_err());
    }

    #[test]
    fn display_round_trips() {
        for s in ["2 * a'(1) a(2) + n(3)", "(cos(theta) * exp(1i * phi)) a'(2) a(1) + h.c.", "-a'(1) a'(1) + a(1) a(1)"] {
            let e = OperatorExpression::parse(s).unwrap();
            let again = OperatorExpression::parse(&e.to_string()).unwrap();
            assert_eq!(e.terms.len(), again.terms.len());
            for (a, b) in e.terms.iter().zip(&again.terms) {
                assert_eq!(a.factors, b.factors);
                let f = |_: &str| Some(0.37);
                assert!((a.coef.eval(&f).unwrap() - b.coef.eval(&f).unwrap()).norm() < 1e-15);
            }
        }
    }
}
