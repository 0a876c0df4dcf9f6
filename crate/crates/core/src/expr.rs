//! Closed-form scalar expressions over chart coordinates.
//!
//! Grammar: `+ - * / ^`, unary minus, parentheses, numeric literals, the
//! constants `pi` and `e`, the functions `sin cos exp log sqrt`, and the
//! coordinates `x0 .. x{n-1}`. Domain predicates add comparisons
//! (`< <= > >=`, chainable as `0 < x0 < pi`), `&&`, `||` and `!`.
//!
//! Expressions are evaluated through an [`Algebra`], so the same tree yields
//! plain values, gradients (dual numbers) or full Taylor jets.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::taylor::{MonomialBasis, TaylorPoly};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    True,
    Compare(Expr, Cmp, Expr),
    And(Box<Predicate>, Box<Predicate>),
    Or(Box<Predicate>, Box<Predicate>),
    Not(Box<Predicate>),
}

impl Expr {
    pub fn parse(input: &str, nvars: usize) -> Result<Self> {
        let mut p = Parser::new(input, nvars)?;
        let e = p.expr()?;
        p.expect_end()?;
        Ok(e)
    }

    /// Largest coordinate index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Num(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(a) | Expr::Call(_, a) => a.max_var(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                match (a.max_var(), b.max_var()) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                }
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        self.max_var().is_none()
    }

    pub fn eval<A: Algebra>(&self, alg: &A) -> A::Value {
        match self {
            Expr::Num(c) => alg.constant(*c),
            Expr::Var(i) => alg.variable(*i),
            Expr::Neg(a) => alg.neg(&a.eval(alg)),
            Expr::Add(a, b) => alg.add(&a.eval(alg), &b.eval(alg)),
            Expr::Sub(a, b) => alg.sub(&a.eval(alg), &b.eval(alg)),
            Expr::Mul(a, b) => alg.mul(&a.eval(alg), &b.eval(alg)),
            Expr::Div(a, b) => alg.div(&a.eval(alg), &b.eval(alg)),
            Expr::Pow(a, b) => {
                let base = a.eval(alg);
                if b.is_constant() {
                    let c = b.eval(&F64Algebra { x: &[] });
                    if c.fract() == 0.0 && c.abs() <= i32::MAX as f64 {
                        alg.powi(&base, c as i32)
                    } else {
                        alg.powf(&base, c)
                    }
                } else {
                    let exponent = b.eval(alg);
                    let log = alg.call(Func::Log, &base);
                    alg.call(Func::Exp, &alg.mul(&exponent, &log))
                }
            }
            Expr::Call(f, a) => alg.call(*f, &a.eval(alg)),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.eval(&F64Algebra { x })
    }
}

impl Predicate {
    pub fn parse(input: &str, nvars: usize) -> Result<Self> {
        if input.trim().is_empty() {
            return Ok(Predicate::True);
        }
        let mut p = Parser::new(input, nvars)?;
        let pred = p.predicate()?;
        p.expect_end()?;
        Ok(pred)
    }

    pub fn holds(&self, x: &[f64]) -> bool {
        match self {
            Predicate::True => true,
            Predicate::Compare(a, op, b) => {
                let (a, b) = (a.value(x), b.value(x));
                match op {
                    Cmp::Lt => a < b,
                    Cmp::Le => a <= b,
                    Cmp::Gt => a > b,
                    Cmp::Ge => a >= b,
                }
            }
            Predicate::And(a, b) => a.holds(x) && b.holds(x),
            Predicate::Or(a, b) => a.holds(x) || b.holds(x),
            Predicate::Not(a) => !a.holds(x),
        }
    }
}

/// Evaluation target for [`Expr`].
pub trait Algebra {
    type Value: Clone;
    fn constant(&self, c: f64) -> Self::Value;
    fn variable(&self, i: usize) -> Self::Value;
    fn neg(&self, a: &Self::Value) -> Self::Value;
    fn add(&self, a: &Self::Value, b: &Self::Value) -> Self::Value;
    fn sub(&self, a: &Self::Value, b: &Self::Value) -> Self::Value;
    fn mul(&self, a: &Self::Value, b: &Self::Value) -> Self::Value;
    fn div(&self, a: &Self::Value, b: &Self::Value) -> Self::Value;
    fn powi(&self, a: &Self::Value, n: i32) -> Self::Value;
    fn powf(&self, a: &Self::Value, c: f64) -> Self::Value;
    fn call(&self, f: Func, a: &Self::Value) -> Self::Value;
}

pub struct F64Algebra<'a> {
    pub x: &'a [f64],
}

impl Algebra for F64Algebra<'_> {
    type Value = f64;
    fn constant(&self, c: f64) -> f64 {
        c
    }
    fn variable(&self, i: usize) -> f64 {
        self.x[i]
    }
    fn neg(&self, a: &f64) -> f64 {
        -a
    }
    fn add(&self, a: &f64, b: &f64) -> f64 {
        a + b
    }
    fn sub(&self, a: &f64, b: &f64) -> f64 {
        a - b
    }
    fn mul(&self, a: &f64, b: &f64) -> f64 {
        a * b
    }
    fn div(&self, a: &f64, b: &f64) -> f64 {
        a / b
    }
    fn powi(&self, a: &f64, n: i32) -> f64 {
        a.powi(n)
    }
    fn powf(&self, a: &f64, c: f64) -> f64 {
        a.powf(c)
    }
    fn call(&self, f: Func, a: &f64) -> f64 {
        match f {
            Func::Sin => a.sin(),
            Func::Cos => a.cos(),
            Func::Exp => a.exp(),
            Func::Log => a.ln(),
            Func::Sqrt => a.sqrt(),
        }
    }
}

/// Largest dimension served by the dual-number fast path.
pub const DUAL_CAPACITY: usize = 8;

/// Value plus gradient with respect to the chart coordinates.
#[derive(Debug, Clone, Copy)]
pub struct Dual {
    pub v: f64,
    pub d: [f64; DUAL_CAPACITY],
}

impl Dual {
    fn constant(v: f64) -> Self {
        Self {
            v,
            d: [0.0; DUAL_CAPACITY],
        }
    }

    fn chain(&self, v: f64, dv: f64) -> Self {
        let mut d = self.d;
        for g in &mut d {
            *g *= dv;
        }
        Self { v, d }
    }
}

pub struct DualAlgebra<'a> {
    pub x: &'a [f64],
}

impl Algebra for DualAlgebra<'_> {
    type Value = Dual;
    fn constant(&self, c: f64) -> Dual {
        Dual::constant(c)
    }
    fn variable(&self, i: usize) -> Dual {
        let mut d = Dual::constant(self.x[i]);
        d.d[i] = 1.0;
        d
    }
    fn neg(&self, a: &Dual) -> Dual {
        a.chain(-a.v, -1.0)
    }
    fn add(&self, a: &Dual, b: &Dual) -> Dual {
        let mut d = a.d;
        for (x, y) in d.iter_mut().zip(&b.d) {
            *x += y;
        }
        Dual { v: a.v + b.v, d }
    }
    fn sub(&self, a: &Dual, b: &Dual) -> Dual {
        let mut d = a.d;
        for (x, y) in d.iter_mut().zip(&b.d) {
            *x -= y;
        }
        Dual { v: a.v - b.v, d }
    }
    fn mul(&self, a: &Dual, b: &Dual) -> Dual {
        let mut d = [0.0; DUAL_CAPACITY];
        for i in 0..DUAL_CAPACITY {
            d[i] = a.d[i] * b.v + a.v * b.d[i];
        }
        Dual { v: a.v * b.v, d }
    }
    fn div(&self, a: &Dual, b: &Dual) -> Dual {
        let inv = 1.0 / b.v;
        let v = a.v * inv;
        let mut d = [0.0; DUAL_CAPACITY];
        for i in 0..DUAL_CAPACITY {
            d[i] = (a.d[i] - v * b.d[i]) * inv;
        }
        Dual { v, d }
    }
    fn powi(&self, a: &Dual, n: i32) -> Dual {
        if n == 0 {
            return Dual::constant(1.0);
        }
        a.chain(a.v.powi(n), n as f64 * a.v.powi(n - 1))
    }
    fn powf(&self, a: &Dual, c: f64) -> Dual {
        a.chain(a.v.powf(c), c * a.v.powf(c - 1.0))
    }
    fn call(&self, f: Func, a: &Dual) -> Dual {
        match f {
            Func::Sin => a.chain(a.v.sin(), a.v.cos()),
            Func::Cos => a.chain(a.v.cos(), -a.v.sin()),
            Func::Exp => {
                let e = a.v.exp();
                a.chain(e, e)
            }
            Func::Log => a.chain(a.v.ln(), 1.0 / a.v),
            Func::Sqrt => {
                let s = a.v.sqrt();
                a.chain(s, 0.5 / s)
            }
        }
    }
}

/// Evaluates on `x + t` as a truncated Taylor series in `t`.
pub struct TaylorAlgebra<'a> {
    pub basis: &'a Arc<MonomialBasis>,
    pub x: &'a [f64],
}

impl Algebra for TaylorAlgebra<'_> {
    type Value = TaylorPoly;
    fn constant(&self, c: f64) -> TaylorPoly {
        TaylorPoly::constant(self.basis, c)
    }
    fn variable(&self, i: usize) -> TaylorPoly {
        TaylorPoly::variable(self.basis, i, self.x[i])
    }
    fn neg(&self, a: &TaylorPoly) -> TaylorPoly {
        a.neg()
    }
    fn add(&self, a: &TaylorPoly, b: &TaylorPoly) -> TaylorPoly {
        a.add(b)
    }
    fn sub(&self, a: &TaylorPoly, b: &TaylorPoly) -> TaylorPoly {
        a.sub(b)
    }
    fn mul(&self, a: &TaylorPoly, b: &TaylorPoly) -> TaylorPoly {
        a.mul(b)
    }
    fn div(&self, a: &TaylorPoly, b: &TaylorPoly) -> TaylorPoly {
        a.div(b)
    }
    fn powi(&self, a: &TaylorPoly, n: i32) -> TaylorPoly {
        a.powi(n)
    }
    fn powf(&self, a: &TaylorPoly, c: f64) -> TaylorPoly {
        a.powf(c)
    }
    fn call(&self, f: Func, a: &TaylorPoly) -> TaylorPoly {
        match f {
            Func::Sin => a.sin(),
            Func::Cos => a.cos(),
            Func::Exp => a.exp(),
            Func::Log => a.ln(),
            Func::Sqrt => a.sqrt(),
        }
    }
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(&'static str),
}

struct Parser<'a> {
    input: &'a str,
    tokens: Vec<(usize, Token)>,
    pos: usize,
    nvars: usize,
}

const OPERATORS: [&str; 15] = [
    "&&", "||", "<=", ">=", "<", ">", "!", "+", "-", "*", "/", "^", "(", ")", ",",
];

fn tokenize(input: &str) -> Result<Vec<(usize, Token)>> {
    let bytes = input.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &input[start..i];
            let v: f64 = text.parse().map_err(|_| parse_error(input, start, "bad number"))?;
            out.push((start, Token::Num(v)));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Token::Ident(input[start..i].to_string())));
            continue;
        }
        let rest = &input[i..];
        match OPERATORS.iter().find(|op| rest.starts_with(**op)) {
            Some(op) => {
                out.push((i, Token::Op(op)));
                i += op.len();
            }
            None => return Err(parse_error(input, i, "unexpected character")),
        }
    }
    Ok(out)
}

fn parse_error(input: &str, position: usize, message: &str) -> Error {
    Error::Parse {
        input: input.to_string(),
        position,
        message: message.to_string(),
    }
}

impl<'a> Parser<'a> {
    fn new(input: &'a str, nvars: usize) -> Result<Self> {
        Ok(Self {
            input,
            tokens: tokenize(input)?,
            pos: 0,
            nvars,
        })
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map(|(o, _)| *o).unwrap_or(self.input.len())
    }

    fn error(&self, message: &str) -> Error {
        parse_error(self.input, self.offset(), message)
    }

    fn eat(&mut self, op: &str) -> bool {
        if matches!(self.peek(), Some(Token::Op(o)) if *o == op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, op: &str) -> Result<()> {
        if self.eat(op) {
            Ok(())
        } else {
            Err(self.error(&format!("expected '{op}'")))
        }
    }

    fn expect_end(&self) -> Result<()> {
        if self.pos == self.tokens.len() {
            Ok(())
        } else {
            Err(self.error("unexpected trailing input"))
        }
    }

    fn predicate(&mut self) -> Result<Predicate> {
        let mut left = self.conjunction()?;
        while self.eat("||") {
            let right = self.conjunction()?;
            left = Predicate::Or(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn conjunction(&mut self) -> Result<Predicate> {
        let mut left = self.negation()?;
        while self.eat("&&") {
            let right = self.negation()?;
            left = Predicate::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn negation(&mut self) -> Result<Predicate> {
        if self.eat("!") {
            return Ok(Predicate::Not(Box::new(self.negation()?)));
        }
        let saved = self.pos;
        match self.comparison() {
            Ok(p) => Ok(p),
            Err(first) => {
                self.pos = saved;
                if self.eat("(") {
                    let p = self.predicate()?;
                    self.expect(")")?;
                    Ok(p)
                } else {
                    Err(first)
                }
            }
        }
    }

    fn comparison(&mut self) -> Result<Predicate> {
        let mut left = self.expr()?;
        let mut result: Option<Predicate> = None;
        while let Some(op) = self.cmp_op() {
            let right = self.expr()?;
            let cmp = Predicate::Compare(left, op, right.clone());
            result = Some(match result {
                None => cmp,
                Some(prev) => Predicate::And(Box::new(prev), Box::new(cmp)),
            });
            left = right;
        }
        result.ok_or_else(|| self.error("expected comparison"))
    }

    fn cmp_op(&mut self) -> Option<Cmp> {
        let op = match self.peek() {
            Some(Token::Op("<")) => Cmp::Lt,
            Some(Token::Op("<=")) => Cmp::Le,
            Some(Token::Op(">")) => Cmp::Gt,
            Some(Token::Op(">=")) => Cmp::Ge,
            _ => return None,
        };
        self.pos += 1;
        Some(op)
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut left = self.term()?;
        loop {
            if self.eat("+") {
                left = Expr::Add(Box::new(left), Box::new(self.term()?));
            } else if self.eat("-") {
                left = Expr::Sub(Box::new(left), Box::new(self.term()?));
            } else {
                return Ok(left);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut left = self.unary()?;
        loop {
            if self.eat("*") {
                left = Expr::Mul(Box::new(left), Box::new(self.unary()?));
            } else if self.eat("/") {
                left = Expr::Div(Box::new(left), Box::new(self.unary()?));
            } else {
                return Ok(left);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat("-") {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat("+") {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat("^") {
            let exponent = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let token = self.peek().cloned();
        match token {
            Some(Token::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Some(Token::Op("(")) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            Some(Token::Ident(name)) => {
                self.pos += 1;
                let func = match name.as_str() {
                    "pi" => return Ok(Expr::Num(std::f64::consts::PI)),
                    "e" => return Ok(Expr::Num(std::f64::consts::E)),
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "exp" => Func::Exp,
                    "log" | "ln" => Func::Log,
                    "sqrt" => Func::Sqrt,
                    _ => {
                        if let Some(idx) = name.strip_prefix('x') {
                            if let Ok(i) = idx.parse::<usize>() {
                                if i < self.nvars {
                                    return Ok(Expr::Var(i));
                                }
                                self.pos -= 1;
                                return Err(
                                    self.error(&format!("coordinate {name} out of range for dimension {}", self.nvars))
                                );
                            }
                        }
                        self.pos -= 1;
                        return Err(self.error(&format!("unknown identifier '{name}'")));
                    }
                };
                self.expect("(")?;
                let arg = self.expr()?;
                self.expect(")")?;
                Ok(Expr::Call(func, Box::new(arg)))
            }
            _ => Err(self.error("expected a number, coordinate, function or '('")),
        }
    }
}
