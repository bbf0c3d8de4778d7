//! Closed-form expression DSL and jet propagation through it.
//!
//! Grammar (whitespace insignificant, variables 1-based):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | base ('^' INT)?
//! base   := NUMBER | VAR | FUNC '(' expr ')' | '(' expr ')'
//! VAR    := 'x' INT
//! FUNC   := sin | cos | exp | log | sqrt
//! NUMBER := decimal | INT '/' INT
//! ```
//!
//! Maps are evaluated on any [`Scalar`]; feeding truncated series yields
//! Taylor coefficients, and [`DerivativeTower`] recovers the full symmetric
//! derivative tensors from directional probes by polarization.

use std::collections::HashMap;
use std::fmt;

use num_integer::binomial;
use thiserror::Error;

use crate::error::{Error, Result};
use crate::scalar::{factorial_s, parse_rational, Backend, MathError, Rational, Scalar};
use crate::series::Series;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn apply<S: Scalar>(self, v: &S) -> Result<S, MathError> {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Log => v.ln(),
            Func::Sqrt => v.sqrt(),
        }
    }
}

/// Expression tree. Variable indices are 0-based internally and print 1-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Var(usize),
    Const(Rational),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, u32),
    Func(Func, Box<Expr>),
}

impl Expr {
    pub fn eval<S: Scalar>(&self, vars: &[S]) -> Result<S, MathError> {
        Ok(match self {
            Expr::Var(i) => vars[*i].clone(),
            Expr::Const(c) => S::from_rational(c),
            Expr::Add(a, b) => a.eval(vars)? + b.eval(vars)?,
            Expr::Sub(a, b) => a.eval(vars)? - b.eval(vars)?,
            Expr::Mul(a, b) => a.eval(vars)? * b.eval(vars)?,
            Expr::Div(a, b) => a.eval(vars)?.try_div(&b.eval(vars)?)?,
            Expr::Neg(a) => -a.eval(vars)?,
            Expr::Pow(a, e) => a.eval(vars)?.powi(*e),
            Expr::Func(f, a) => f.apply(&a.eval(vars)?)?,
        })
    }

    /// Largest variable index used, plus one.
    pub fn arity_used(&self) -> usize {
        match self {
            Expr::Var(i) => i + 1,
            Expr::Const(_) => 0,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.arity_used().max(b.arity_used())
            }
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Func(_, a) => a.arity_used(),
        }
    }

    /// First transcendental function in the tree, if any.
    pub fn transcendental(&self) -> Option<Func> {
        match self {
            Expr::Var(_) | Expr::Const(_) => None,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.transcendental().or_else(|| b.transcendental())
            }
            Expr::Neg(a) | Expr::Pow(a, _) => a.transcendental(),
            Expr::Func(f, _) => Some(*f),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            Expr::Const(c) if c < &Rational::from_integer(0.into()) || !c.is_integer() => 2,
            _ => 5,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
            if e.precedence() < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Add(a, b) => {
                child(f, a, 1)?;
                write!(f, " + ")?;
                child(f, b, 2)
            }
            Expr::Sub(a, b) => {
                child(f, a, 1)?;
                write!(f, " - ")?;
                child(f, b, 2)
            }
            Expr::Mul(a, b) => {
                child(f, a, 2)?;
                write!(f, "*")?;
                child(f, b, 3)
            }
            Expr::Div(a, b) => {
                child(f, a, 2)?;
                write!(f, "/")?;
                child(f, b, 3)
            }
            Expr::Neg(a) => {
                write!(f, "-")?;
                child(f, a, 3)
            }
            Expr::Pow(a, e) => {
                child(f, a, 5)?;
                write!(f, "^{e}")
            }
            Expr::Func(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("variable x{index} exceeds arity {arity}")]
    ArityViolation { index: usize, arity: usize },
    #[error("`{0}` is not allowed with the exact backend")]
    NotExact(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("at byte {offset}: {kind}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(Rational),
    Int(u32),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(Tok, usize)>, ParseError> {
        let mut lx = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        loop {
            let (tok, at) = lx.next()?;
            let end = tok == Tok::End;
            out.push((tok, at));
            if end {
                return Ok(out);
            }
        }
    }

    fn next(&mut self) -> Result<(Tok, usize), ParseError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&b) = bytes.get(self.pos) else {
            return Ok((Tok::End, start));
        };
        let single = match b {
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(tok) = single {
            self.pos += 1;
            return Ok((tok, start));
        }
        if b.is_ascii_digit() || b == b'.' {
            return self.number(start);
        }
        if b.is_ascii_alphabetic() {
            while self.pos < bytes.len() && bytes[self.pos].is_ascii_alphanumeric() {
                self.pos += 1;
            }
            return Ok((Tok::Ident(self.src[start..self.pos].to_string()), start));
        }
        let ch = self.src[start..].chars().next().unwrap_or('?');
        Err(ParseError {
            offset: start,
            kind: ParseErrorKind::Syntax(format!("unexpected character `{ch}`")),
        })
    }

    fn number(&mut self, start: usize) -> Result<(Tok, usize), ParseError> {
        let bytes = self.src.as_bytes();
        let digits = |pos: &mut usize| {
            while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
                *pos += 1;
            }
        };
        digits(&mut self.pos);
        let mut integral = true;
        if self.pos < bytes.len() && bytes[self.pos] == b'.' {
            integral = false;
            self.pos += 1;
            digits(&mut self.pos);
        }
        if self.pos < bytes.len() && (bytes[self.pos] == b'e' || bytes[self.pos] == b'E') {
            let mut look = self.pos + 1;
            if look < bytes.len() && (bytes[look] == b'+' || bytes[look] == b'-') {
                look += 1;
            }
            if look < bytes.len() && bytes[look].is_ascii_digit() {
                integral = false;
                self.pos = look;
                digits(&mut self.pos);
            }
        }
        let text = &self.src[start..self.pos];
        let bad = || ParseError {
            offset: start,
            kind: ParseErrorKind::Syntax(format!("malformed number `{text}`")),
        };
        if integral {
            if let Ok(v) = text.parse::<u32>() {
                return Ok((Tok::Int(v), start));
            }
        }
        parse_rational(text).map(|r| (Tok::Num(r), start)).ok_or_else(bad)
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    arity: usize,
    backend: Backend,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, kind: ParseErrorKind) -> Result<T, ParseError> {
        Err(ParseError {
            offset: self.offset(),
            kind,
        })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Tok::Slash => {
                    self.bump();
                    let at = self.offset();
                    let rhs = self.factor()?;
                    lhs = match (lhs, rhs) {
                        // p/q literals fold into one rational constant
                        (Expr::Const(p), Expr::Const(q)) => {
                            if num_traits::Zero::is_zero(&q) {
                                return Err(ParseError {
                                    offset: at,
                                    kind: ParseErrorKind::Syntax("division by literal zero".into()),
                                });
                            }
                            Expr::Const(p / q)
                        }
                        (l, r) => Expr::Div(Box::new(l), Box::new(r)),
                    };
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(match self.factor()? {
                Expr::Const(c) => Expr::Const(-c),
                e => Expr::Neg(Box::new(e)),
            });
        }
        let base = self.base()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            return match self.bump() {
                Tok::Int(e) => Ok(match base {
                    Expr::Const(c) => {
                        let mut v = Rational::from_integer(1.into());
                        for _ in 0..e {
                            v *= &c;
                        }
                        Expr::Const(v)
                    }
                    b => Expr::Pow(Box::new(b), e),
                }),
                _ => {
                    self.pos -= 1;
                    self.err(ParseErrorKind::Syntax(
                        "exponent must be a non-negative integer".into(),
                    ))
                }
            };
        }
        Ok(base)
    }

    fn base(&mut self) -> Result<Expr, ParseError> {
        let at = self.offset();
        match self.bump() {
            Tok::Int(v) => Ok(Expr::Const(Rational::from_integer(v.into()))),
            Tok::Num(r) => Ok(Expr::Const(r)),
            Tok::LParen => {
                let e = self.expr()?;
                if self.bump() != Tok::RParen {
                    self.pos -= 1;
                    return self.err(ParseErrorKind::Syntax("expected `)`".into()));
                }
                Ok(e)
            }
            Tok::Ident(name) => {
                if let Some(idx) = name.strip_prefix('x') {
                    if let Ok(i) = idx.parse::<usize>() {
                        if i == 0 || i > self.arity {
                            return Err(ParseError {
                                offset: at,
                                kind: ParseErrorKind::ArityViolation {
                                    index: i,
                                    arity: self.arity,
                                },
                            });
                        }
                        return Ok(Expr::Var(i - 1));
                    }
                }
                let Some(func) = Func::from_name(&name) else {
                    return Err(ParseError {
                        offset: at,
                        kind: ParseErrorKind::UnknownIdentifier(name),
                    });
                };
                if self.backend == Backend::Exact {
                    return Err(ParseError {
                        offset: at,
                        kind: ParseErrorKind::NotExact(func.name()),
                    });
                }
                if self.bump() != Tok::LParen {
                    self.pos -= 1;
                    return self.err(ParseErrorKind::Syntax(format!(
                        "expected `(` after `{}`",
                        func.name()
                    )));
                }
                let arg = self.expr()?;
                if self.bump() != Tok::RParen {
                    self.pos -= 1;
                    return self.err(ParseErrorKind::Syntax("expected `)`".into()));
                }
                Ok(Expr::Func(func, Box::new(arg)))
            }
            Tok::End => Err(ParseError {
                offset: at,
                kind: ParseErrorKind::Syntax("unexpected end of input".into()),
            }),
            other => Err(ParseError {
                offset: at,
                kind: ParseErrorKind::Syntax(format!("unexpected token {other:?}")),
            }),
        }
    }
}

/// Parses with the float backend (all functions allowed).
pub fn parse_expr(source: &str, arity: usize) -> Result<Expr, ParseError> {
    parse_expr_with(source, arity, Backend::Float)
}

pub fn parse_expr_with(source: &str, arity: usize, backend: Backend) -> Result<Expr, ParseError> {
    let toks = Lexer::tokens(source)?;
    let mut p = Parser {
        toks,
        pos: 0,
        arity,
        backend,
    };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return p.err(ParseErrorKind::Syntax("trailing input".into()));
    }
    Ok(e)
}

/// Axis-aligned closed box `[lo_i, hi_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DomainBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                found: hi.len(),
            });
        }
        if let Some(i) = (0..lo.len()).find(|&i| !(hi[i] > lo[i])) {
            return Err(Error::DegenerateDomain(i));
        }
        Ok(DomainBox { lo, hi })
    }

    pub fn from_intervals(intervals: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            intervals.iter().map(|i| i.0).collect(),
            intervals.iter().map(|i| i.1).collect(),
        )
    }

    /// The whole of `R^n`.
    pub fn unbounded(n: usize) -> Self {
        DomainBox {
            lo: vec![f64::NEG_INFINITY; n],
            hi: vec![f64::INFINITY; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| *v >= *l && *v <= *h)
    }

    /// Box shrunk by `frac` of its width on each side (finite boxes only).
    pub fn shrink(&self, frac: f64) -> DomainBox {
        let mut lo = self.lo.clone();
        let mut hi = self.hi.clone();
        for i in 0..lo.len() {
            let w = hi[i] - lo[i];
            if w.is_finite() {
                lo[i] += frac * w;
                hi[i] -= frac * w;
            }
        }
        DomainBox { lo, hi }
    }
}

/// A chart-represented map `R^n -> R^m` given by `m` expressions.
#[derive(Debug, Clone, PartialEq)]
pub struct MapSpec {
    input_dim: usize,
    exprs: Vec<Expr>,
    domain: DomainBox,
}

impl MapSpec {
    pub fn new(input_dim: usize, exprs: Vec<Expr>, domain: DomainBox) -> Result<Self> {
        if domain.dim() != input_dim {
            return Err(Error::DimensionMismatch {
                expected: input_dim,
                found: domain.dim(),
            });
        }
        if let Some(e) = exprs.iter().find(|e| e.arity_used() > input_dim) {
            return Err(Error::Invalid(format!(
                "expression `{e}` uses more than {input_dim} variables"
            )));
        }
        Ok(MapSpec {
            input_dim,
            exprs,
            domain,
        })
    }

    pub fn parse(sources: &[&str], input_dim: usize, domain: DomainBox, backend: Backend) -> Result<Self> {
        let exprs = sources
            .iter()
            .map(|s| parse_expr_with(s, input_dim, backend))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(input_dim, exprs, domain)
    }

    pub fn identity(n: usize, domain: DomainBox) -> Self {
        MapSpec {
            input_dim: n,
            exprs: (0..n).map(Expr::Var).collect(),
            domain,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.exprs.len()
    }

    pub fn exprs(&self) -> &[Expr] {
        &self.exprs
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn with_domain(&self, domain: DomainBox) -> Result<Self> {
        Self::new(self.input_dim, self.exprs.clone(), domain)
    }

    pub fn check_domain<S: Scalar>(&self, x: &[S]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                found: x.len(),
            });
        }
        let point: Vec<f64> = x.iter().map(Scalar::to_f64).collect();
        if self.domain.contains(&point) {
            Ok(())
        } else {
            Err(Error::OutsideDomain { point })
        }
    }

    /// Evaluates without the domain check (series arguments, internal use).
    pub fn eval_raw<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        Ok(self
            .exprs
            .iter()
            .map(|e| e.eval(x))
            .collect::<Result<Vec<_>, _>>()?)
    }
}

pub fn eval_map<S: Scalar>(m: &MapSpec, x: &[S]) -> Result<Vec<S>> {
    m.check_domain(x)?;
    m.eval_raw(x)
}

/// Raw derivatives `(m ∘ c)^{(i)}(0)`, `i = 0..=k`, for the polynomial curve
/// `c(t) = Σ c_i t^i` (one coefficient vector per power).
pub fn taylor_push<S: Scalar>(m: &MapSpec, curve: &[Vec<S>], k: usize) -> Result<Vec<Vec<S>>> {
    if k == 0 {
        return Err(Error::InvalidOrder(0));
    }
    let Some(c0) = curve.first() else {
        return Err(Error::InvalidOrder(0));
    };
    m.check_domain(c0)?;
    let coeffs = push_coefficients(m, curve, k)?;
    Ok(coeffs
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let f: S = factorial_s(i);
            v.into_iter().map(|c| c * f.clone()).collect()
        })
        .collect())
}

/// Taylor coefficients (not derivatives) of `m ∘ c` up to `t^k`.
fn push_coefficients<S: Scalar>(m: &MapSpec, curve: &[Vec<S>], k: usize) -> Result<Vec<Vec<S>>> {
    let n = m.input_dim();
    for c in curve {
        if c.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: c.len(),
            });
        }
    }
    let args: Vec<Series<S>> = (0..n)
        .map(|a| Series::new(curve.iter().take(k + 1).map(|c| c[a].clone()).collect(), k))
        .collect();
    let out = m.eval_raw(&args)?;
    Ok((0..=k)
        .map(|i| out.iter().map(|s| s.coeff(i)).collect())
        .collect())
}

/// Dense symmetric tensor `(R^n)^r -> R^m`, stored with every permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTensor<S> {
    order: usize,
    n_in: usize,
    n_out: usize,
    data: Vec<S>,
}

impl<S: Scalar> SymTensor<S> {
    /// Wraps dense data laid out as `data[out * n^r + flat(idx)]`, with the
    /// last index varying fastest. Symmetry is the caller's responsibility.
    pub fn from_data(order: usize, n_in: usize, n_out: usize, data: Vec<S>) -> Result<Self> {
        let expected = n_out * n_in.pow(order as u32);
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: data.len(),
            });
        }
        Ok(SymTensor {
            order,
            n_in,
            n_out,
            data,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn input_dim(&self) -> usize {
        self.n_in
    }

    pub fn output_dim(&self) -> usize {
        self.n_out
    }

    pub fn entry(&self, out: usize, idx: &[usize]) -> S {
        let flat = idx.iter().fold(0, |acc, &i| acc * self.n_in + i);
        self.data[out * self.n_in.pow(self.order as u32) + flat].clone()
    }

    /// Evaluates the multilinear map on `order` argument vectors.
    pub fn apply(&self, args: &[&[S]]) -> Vec<S> {
        assert_eq!(args.len(), self.order, "tensor order");
        let n = self.n_in;
        let mut cur = self.data.clone();
        for v in args.iter().rev() {
            debug_assert_eq!(v.len(), n);
            let next_len = cur.len() / n;
            let mut next = Vec::with_capacity(next_len);
            for p in 0..next_len {
                let mut acc = S::zero();
                for (b, vb) in v.iter().enumerate() {
                    let c = &cur[p * n + b];
                    if !c.is_zero() && !vb.is_zero() {
                        acc = acc + c.clone() * vb.clone();
                    }
                }
                next.push(acc);
            }
            cur = next;
        }
        cur
    }

    /// Jacobian rows for an order-1 tensor.
    pub fn as_matrix(&self) -> Vec<Vec<S>> {
        assert_eq!(self.order, 1);
        (0..self.n_out)
            .map(|o| (0..self.n_in).map(|i| self.entry(o, &[i])).collect())
            .collect()
    }
}

/// Directional probes `t ↦ m(x + t w)` with `w = Σ c_b e_b`, cached by `c`.
struct Probes<'a, S> {
    map: &'a MapSpec,
    base: &'a [S],
    order: usize,
    cache: HashMap<Vec<usize>, Vec<Vec<S>>>,
}

impl<'a, S: Scalar> Probes<'a, S> {
    fn coefficients(&mut self, c: &[usize]) -> Result<&Vec<Vec<S>>> {
        if !self.cache.contains_key(c) {
            let dir: Vec<S> = c.iter().map(|&v| S::from_i64(v as i64)).collect();
            let curve = vec![self.base.to_vec(), dir];
            let coeffs = push_coefficients(self.map, &curve, self.order)?;
            self.cache.insert(c.to_vec(), coeffs);
        }
        Ok(&self.cache[c])
    }

    /// Polarization: entry for the multiset of basis directions `idx`.
    fn polarized(&mut self, idx: &[usize]) -> Result<Vec<S>> {
        let n = self.base.len();
        let r = idx.len();
        let mut mult = vec![0usize; n];
        for &i in idx {
            mult[i] += 1;
        }
        let mut acc = vec![S::zero(); self.map.output_dim()];
        let mut c = vec![0usize; n];
        loop {
            let total: usize = c.iter().sum();
            if total > 0 {
                let mut weight: i64 = if (r - total) % 2 == 0 { 1 } else { -1 };
                for b in 0..n {
                    weight *= binomial(mult[b], c[b]) as i64;
                }
                let w = S::from_i64(weight);
                let coeffs = self.coefficients(&c)?;
                for (a, v) in acc.iter_mut().zip(&coeffs[r]) {
                    *a = a.clone() + w.clone() * v.clone();
                }
            }
            // odometer over 0 ≤ c_b ≤ mult_b
            let mut b = 0;
            loop {
                if b == n {
                    return Ok(acc);
                }
                if c[b] < mult[b] {
                    c[b] += 1;
                    break;
                }
                c[b] = 0;
                b += 1;
            }
        }
    }

    fn tensor(&mut self, r: usize) -> Result<SymTensor<S>> {
        let n = self.base.len();
        let m = self.map.output_dim();
        let size = n.pow(r as u32);
        let mut entries: HashMap<Vec<usize>, Vec<S>> = HashMap::new();
        let mut data = vec![S::zero(); m * size];
        for flat in 0..size {
            let mut idx = Vec::with_capacity(r);
            let mut rem = flat;
            for _ in 0..r {
                idx.push(rem % n);
                rem /= n;
            }
            idx.sort_unstable();
            if !entries.contains_key(&idx) {
                let v = self.polarized(&idx)?;
                entries.insert(idx.clone(), v);
            }
            for (o, v) in entries[&idx].iter().enumerate() {
                data[o * size + flat] = v.clone();
            }
        }
        Ok(SymTensor {
            order: r,
            n_in: n,
            n_out: m,
            data,
        })
    }
}

/// `d^i m(x)` for `i ≥ 1`, reconstructed by polarization over directional jets.
pub fn derivative_tensor<S: Scalar>(m: &MapSpec, x: &[S], order: usize) -> Result<SymTensor<S>> {
    if order == 0 {
        return Err(Error::InvalidOrder(0));
    }
    m.check_domain(x)?;
    Probes {
        map: m,
        base: x,
        order,
        cache: HashMap::new(),
    }
    .tensor(order)
}

/// Value and derivative tensors `d^1 .. d^k` of a map at one base point.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeTower<S> {
    base: Vec<S>,
    value: Vec<S>,
    tensors: Vec<SymTensor<S>>,
}

impl<S: Scalar> DerivativeTower<S> {
    pub fn compute(m: &MapSpec, x: &[S], order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidOrder(0));
        }
        m.check_domain(x)?;
        let mut probes = Probes {
            map: m,
            base: x,
            order,
            cache: HashMap::new(),
        };
        let tensors = (1..=order)
            .map(|r| probes.tensor(r))
            .collect::<Result<Vec<_>>>()?;
        Ok(DerivativeTower {
            base: x.to_vec(),
            value: m.eval_raw(x)?,
            tensors,
        })
    }

    /// Builds a tower from explicit tensors (orders 1..=k in sequence).
    pub fn from_parts(base: Vec<S>, value: Vec<S>, tensors: Vec<SymTensor<S>>) -> Result<Self> {
        for (i, t) in tensors.iter().enumerate() {
            if t.order() != i + 1 {
                return Err(Error::OrderMismatch {
                    expected: i + 1,
                    found: t.order(),
                });
            }
        }
        Ok(DerivativeTower {
            base,
            value,
            tensors,
        })
    }

    pub fn order(&self) -> usize {
        self.tensors.len()
    }

    pub fn base(&self) -> &[S] {
        &self.base
    }

    pub fn value(&self) -> &[S] {
        &self.value
    }

    pub fn input_dim(&self) -> usize {
        self.base.len()
    }

    pub fn output_dim(&self) -> usize {
        self.value.len()
    }

    /// `d^i m(x)`, `1 ≤ i ≤ order`.
    pub fn tensor(&self, i: usize) -> &SymTensor<S> {
        &self.tensors[i - 1]
    }

    /// Keeps only `d^1 .. d^i`.
    pub fn truncate(&self, i: usize) -> Self {
        DerivativeTower {
            base: self.base.clone(),
            value: self.value.clone(),
            tensors: self.tensors[..i.min(self.tensors.len())].to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(p: i64, d: i64) -> Rational {
        Rational::new(p.into(), d.into())
    }

    fn var(i: usize) -> Box<Expr> {
        Box::new(Expr::Var(i))
    }

    #[test]
    fn parses_grammar_cases() {
        assert_eq!(
            parse_expr("x1 + x2^2", 2).unwrap(),
            Expr::Add(var(0), Box::new(Expr::Pow(var(1), 2)))
        );
        assert_eq!(
            parse_expr("sin(x1)*x1", 1).unwrap(),
            Expr::Mul(Box::new(Expr::Func(Func::Sin, var(0))), var(0))
        );
        assert_eq!(parse_expr("3/4", 1).unwrap(), Expr::Const(q(3, 4)));
        assert_eq!(parse_expr("-0.5", 1).unwrap(), Expr::Const(q(-1, 2)));
        assert_eq!(
            parse_expr("x1 - x1/2", 1).unwrap(),
            Expr::Sub(var(0), Box::new(Expr::Div(var(0), Box::new(Expr::Const(q(2, 1))))))
        );
    }

    #[test]
    fn rejects_out_of_grammar_input() {
        let e = parse_expr("x3", 2).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::ArityViolation { index: 3, arity: 2 });
        assert_eq!(e.offset, 0);
        let e = parse_expr("x1 + tan(x1)", 1).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownIdentifier("tan".into()));
        assert_eq!(e.offset, 5);
        assert!(matches!(parse_expr("x1 +", 1).unwrap_err().kind, ParseErrorKind::Syntax(_)));
        assert!(matches!(parse_expr("x1^-2", 1).unwrap_err().kind, ParseErrorKind::Syntax(_)));
        assert!(matches!(parse_expr("x1^0.5", 1).unwrap_err().kind, ParseErrorKind::Syntax(_)));
        assert!(matches!(parse_expr("(x1", 1).unwrap_err().kind, ParseErrorKind::Syntax(_)));
        assert!(matches!(parse_expr("x1 x1", 1).unwrap_err().kind, ParseErrorKind::Syntax(_)));
        assert!(matches!(parse_expr("x1 # 2", 1).unwrap_err().kind, ParseErrorKind::Syntax(_)));
        assert_eq!(
            parse_expr_with("sqrt(x1)", 1, Backend::Exact).unwrap_err().kind,
            ParseErrorKind::NotExact("sqrt")
        );
    }

    #[test]
    fn display_round_trips_through_parser() {
        for src in ["x1 + x2^2", "-(x1 - x2)*3/4", "sin(x1)*cos(x2) - exp(x1/2)", "(x1 + 1)^3"] {
            let e = parse_expr(src, 2).unwrap();
            let again = parse_expr(&e.to_string(), 2).unwrap();
            assert_eq!(e, again, "{src} -> {e}");
        }
    }

    #[test]
    fn eval_map_cases() {
        let dom = DomainBox::unbounded(2);
        let m = MapSpec::parse(&["x1^2", "x1+x2"], 2, dom.clone(), Backend::Exact).unwrap();
        assert_eq!(eval_map(&m, &[q(2, 1), q(1, 1)]).unwrap(), vec![q(4, 1), q(3, 1)]);
        let id = MapSpec::identity(2, dom);
        assert_eq!(eval_map(&id, &[0.3, -2.0]).unwrap(), vec![0.3, -2.0]);
        let lg = MapSpec::parse(&["log(x1)"], 1, DomainBox::unbounded(1), Backend::Float).unwrap();
        assert_eq!(eval_map(&lg, &[-1.0]), Err(Error::Math(MathError::LogDomain)));
        let boxed = MapSpec::parse(&["x1"], 1, DomainBox::new(vec![0.0], vec![1.0]).unwrap(), Backend::Float).unwrap();
        assert!(matches!(eval_map(&boxed, &[2.0]), Err(Error::OutsideDomain { .. })));
    }

    #[test]
    fn domain_must_have_volume() {
        assert_eq!(DomainBox::new(vec![0.0, 1.0], vec![1.0, 1.0]), Err(Error::DegenerateDomain(1)));
    }

    #[test]
    fn taylor_push_square_of_curve() {
        // (t + t^2)^2 = t^2 + 2t^3 + t^4 → raw derivatives 0, 0, 2, 12
        let m = MapSpec::parse(&["x1^2"], 1, DomainBox::unbounded(1), Backend::Exact).unwrap();
        let curve = vec![vec![q(0, 1)], vec![q(1, 1)], vec![q(1, 1)]];
        let d = taylor_push(&m, &curve, 3).unwrap();
        assert_eq!(d, vec![vec![q(0, 1)], vec![q(0, 1)], vec![q(2, 1)], vec![q(12, 1)]]);
    }

    #[test]
    fn taylor_push_identity_and_linear() {
        let dom = DomainBox::unbounded(2);
        let id = MapSpec::identity(2, dom.clone());
        let curve = vec![vec![q(1, 1), q(2, 1)], vec![q(3, 1), q(-1, 1)], vec![q(1, 2), q(0, 1)], vec![q(1, 3), q(5, 1)]];
        let d = taylor_push(&id, &curve, 3).unwrap();
        assert_eq!(d[2], vec![q(1, 1), q(0, 1)]);
        assert_eq!(d[3], vec![q(2, 1), q(30, 1)]);
        let lin = MapSpec::parse(&["2*x1 - x2", "x2/3"], 2, dom, Backend::Exact).unwrap();
        let d = taylor_push(&lin, &curve, 3).unwrap();
        // A (3! c_3) with c_3 = (1/3, 5)
        assert_eq!(d[3], vec![q(-26, 1), q(10, 1)]);
    }

    #[test]
    fn hessian_of_product() {
        let m = MapSpec::parse(&["x1*x2"], 2, DomainBox::unbounded(2), Backend::Exact).unwrap();
        let t = derivative_tensor(&m, &[q(3, 1), q(-2, 1)], 2).unwrap();
        assert_eq!(t.entry(0, &[0, 1]), q(1, 1));
        assert_eq!(t.entry(0, &[1, 0]), q(1, 1));
        assert_eq!(t.entry(0, &[0, 0]), q(0, 1));
        assert_eq!(t.entry(0, &[1, 1]), q(0, 1));
    }

    #[test]
    fn linear_map_has_zero_second_derivative() {
        let m = MapSpec::parse(&["3*x1 - x2", "x1 + 7*x2"], 2, DomainBox::unbounded(2), Backend::Exact).unwrap();
        let t = derivative_tensor(&m, &[q(1, 1), q(1, 5)], 2).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                for o in 0..2 {
                    assert_eq!(t.entry(o, &[a, b]), q(0, 1));
                }
            }
        }
        let j = derivative_tensor(&m, &[q(1, 1), q(1, 5)], 1).unwrap().as_matrix();
        assert_eq!(j, vec![vec![q(3, 1), q(-1, 1)], vec![q(1, 1), q(7, 1)]]);
    }

    #[test]
    fn polarization_recovers_mixed_third_derivative() {
        // d^3 (x1^2 x2)(e1, e1, e2) = 2
        let m = MapSpec::parse(&["x1^2*x2 + x2^3"], 2, DomainBox::unbounded(2), Backend::Exact).unwrap();
        let t = derivative_tensor(&m, &[q(1, 2), q(2, 1)], 3).unwrap();
        assert_eq!(t.entry(0, &[0, 0, 1]), q(2, 1));
        assert_eq!(t.entry(0, &[1, 0, 0]), q(2, 1));
        assert_eq!(t.entry(0, &[1, 1, 1]), q(6, 1));
        assert_eq!(t.entry(0, &[0, 1, 1]), q(0, 1));
    }
}
