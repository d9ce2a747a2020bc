//! A tiny arithmetic language for the dynamics and cost functions of a game.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | primary
//! primary := number | variable | func '(' expr ')' | feature '(' name [',' k] ')' | '(' expr ')'
//! ```
//!
//! Variables are `t`, `x1..xn`, `u1..um1`, `v1..vm2`, `z1..zn`; functions are
//! `sin`, `cos`, `exp`, `sqrt` and `abs`; `feature(mean | second_moment |
//! mean_sin [, k])` reads a registered statistic of the current law (`k`
//! selects the coordinate of the vector valued mean, default 1).

use std::fmt;

use crate::error::{Error, Result};
use crate::measure::{Feature, FeatureValues};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    X(usize),
    U(usize),
    V(usize),
    Z(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Feature(Feature, usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Which identifiers an expression may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scope {
    pub dim: usize,
    pub u_dim: usize,
    pub v_dim: usize,
    pub allow_t: bool,
    pub allow_z: bool,
    pub allow_features: bool,
}

impl Scope {
    /// Dynamics and running cost: `(t, x, features, u, v)`.
    pub fn running(dim: usize, u_dim: usize, v_dim: usize) -> Self {
        Self {
            dim,
            u_dim,
            v_dim,
            allow_t: true,
            allow_z: false,
            allow_features: true,
        }
    }

    /// Terminal cost: `(x, z, features of the terminal law)`.
    pub fn terminal(dim: usize) -> Self {
        Self {
            dim,
            u_dim: 0,
            v_dim: 0,
            allow_t: false,
            allow_z: true,
            allow_features: true,
        }
    }

    /// A function of the state only.
    pub fn state(dim: usize) -> Self {
        Self {
            dim,
            u_dim: 0,
            v_dim: 0,
            allow_t: false,
            allow_z: false,
            allow_features: false,
        }
    }
}

/// Values of every variable at one evaluation point.
#[derive(Debug, Clone, Copy)]
pub struct Env<'a> {
    pub t: f64,
    pub x: &'a [f64],
    pub u: &'a [f64],
    pub v: &'a [f64],
    pub z: &'a [f64],
    pub features: &'a FeatureValues,
}

impl Expr {
    pub fn parse(source: &str, scope: &Scope) -> Result<Expr> {
        let tokens = lex(source)?;
        let mut p = Parser { tokens, pos: 0, scope };
        let e = p.expr()?;
        if let Some(tok) = p.peek() {
            return Err(syntax(tok.line, tok.column, format!("unexpected `{}`", tok.kind)));
        }
        Ok(e)
    }

    pub fn eval(&self, env: &Env<'_>) -> Result<f64> {
        let fast = self.eval_nan(env);
        if fast.is_finite() {
            return Ok(fast);
        }
        let value = self.eval_raw(env)?;
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::Eval(format!("non-finite result {value} from `{self}`")))
        }
    }

    /// Every error condition of [`Expr::eval_raw`] yields NaN here, and NaN
    /// survives all later operations, so a finite result is one that
    /// `eval_raw` would return unchanged.
    fn eval_nan(&self, env: &Env<'_>) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => match *v {
                Var::T => env.t,
                Var::X(i) => env.x[i],
                Var::U(i) => env.u[i],
                Var::V(i) => env.v[i],
                Var::Z(i) => env.z[i],
            },
            Expr::Feature(f, k) => match f {
                Feature::Mean => env.features.mean[*k],
                Feature::SecondMoment => env.features.second_moment,
                Feature::MeanSin => env.features.mean_sin.unwrap_or(f64::NAN),
            },
            Expr::Neg(a) => -a.eval_nan(env),
            Expr::Add(a, b) => a.eval_nan(env) + b.eval_nan(env),
            Expr::Sub(a, b) => a.eval_nan(env) - b.eval_nan(env),
            Expr::Mul(a, b) => a.eval_nan(env) * b.eval_nan(env),
            Expr::Div(a, b) => {
                let num = a.eval_nan(env);
                let den = b.eval_nan(env);
                if den == 0.0 {
                    f64::NAN
                } else {
                    num / den
                }
            }
            Expr::Call(f, a) => {
                let x = a.eval_nan(env);
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Sqrt => x.sqrt(),
                    Func::Abs => x.abs(),
                }
            }
        }
    }

    fn eval_raw(&self, env: &Env<'_>) -> Result<f64> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => match *v {
                Var::T => env.t,
                Var::X(i) => env.x[i],
                Var::U(i) => env.u[i],
                Var::V(i) => env.v[i],
                Var::Z(i) => env.z[i],
            },
            Expr::Feature(f, k) => match f {
                Feature::Mean => env.features.mean[*k],
                Feature::SecondMoment => env.features.second_moment,
                Feature::MeanSin => env
                    .features
                    .mean_sin
                    .ok_or_else(|| Error::UnsupportedFeature("mean_sin requires dim 1".into()))?,
            },
            Expr::Neg(a) => -a.eval_raw(env)?,
            Expr::Add(a, b) => a.eval_raw(env)? + b.eval_raw(env)?,
            Expr::Sub(a, b) => a.eval_raw(env)? - b.eval_raw(env)?,
            Expr::Mul(a, b) => a.eval_raw(env)? * b.eval_raw(env)?,
            Expr::Div(a, b) => {
                let num = a.eval_raw(env)?;
                let den = b.eval_raw(env)?;
                if den == 0.0 {
                    return Err(Error::Eval(format!("division by zero in `{self}`")));
                }
                num / den
            }
            Expr::Call(f, a) => {
                let x = a.eval_raw(env)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Sqrt => {
                        if x < 0.0 {
                            return Err(Error::Eval(format!("sqrt of negative value {x}")));
                        }
                        x.sqrt()
                    }
                    Func::Abs => x.abs(),
                }
            }
        })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    /// True when the expression reads `t`.
    pub fn uses_time(&self) -> bool {
        self.any(&|e| matches!(e, Expr::Var(Var::T)))
    }

    /// True when the expression reads any control.
    pub fn uses_controls(&self) -> bool {
        self.any(&|e| matches!(e, Expr::Var(Var::U(_)) | Expr::Var(Var::V(_))))
    }

    pub fn uses_features(&self) -> bool {
        self.any(&|e| matches!(e, Expr::Feature(..)))
    }

    fn any(&self, pred: &dyn Fn(&Expr) -> bool) -> bool {
        if pred(self) {
            return true;
        }
        match self {
            Expr::Const(_) | Expr::Var(_) | Expr::Feature(..) => false,
            Expr::Neg(a) | Expr::Call(_, a) => a.any(pred),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => a.any(pred) || b.any(pred),
        }
    }

    /// Symbolic partial derivative with respect to `x_{k+1}` (0-based `k`),
    /// holding measure features fixed is not allowed: feature nodes and `abs`
    /// are rejected as non-differentiable.
    pub fn derivative_x(&self, k: usize) -> Result<Expr> {
        use Expr::*;
        Ok(match self {
            Const(_) => Const(0.0),
            Var(v) => Const(if *v == self::Var::X(k) { 1.0 } else { 0.0 }),
            Feature(f, _) => {
                return Err(Error::NotDifferentiable(format!(
                    "feature({}) depends on the law, not on the point",
                    f.name()
                )))
            }
            Neg(a) => neg(a.derivative_x(k)?),
            Add(a, b) => add(a.derivative_x(k)?, b.derivative_x(k)?),
            Sub(a, b) => sub(a.derivative_x(k)?, b.derivative_x(k)?),
            Mul(a, b) => add(
                mul(a.derivative_x(k)?, (**b).clone()),
                mul((**a).clone(), b.derivative_x(k)?),
            ),
            Div(a, b) => {
                // (a'b - ab') / b²
                let num = sub(
                    mul(a.derivative_x(k)?, (**b).clone()),
                    mul((**a).clone(), b.derivative_x(k)?),
                );
                if num.is_zero() {
                    Const(0.0)
                } else {
                    Div(Box::new(num), Box::new(mul((**b).clone(), (**b).clone())))
                }
            }
            Call(f, a) => {
                let inner = a.derivative_x(k)?;
                if inner.is_zero() {
                    return Ok(Const(0.0));
                }
                let outer = match f {
                    Func::Sin => Call(Func::Cos, a.clone()),
                    Func::Cos => neg(Call(Func::Sin, a.clone())),
                    Func::Exp => Call(Func::Exp, a.clone()),
                    Func::Sqrt => Div(Box::new(Const(0.5)), Box::new(Call(Func::Sqrt, a.clone()))),
                    Func::Abs => {
                        return Err(Error::NotDifferentiable(format!("abs({a})")));
                    }
                };
                mul(outer, inner)
            }
        })
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        a => Expr::Neg(Box::new(a)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (a.is_zero(), b.is_zero()) {
        (true, _) => b,
        (_, true) => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (a.is_zero(), b.is_zero()) {
        (_, true) => a,
        (true, _) => neg(b),
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    if a.is_zero() || b.is_zero() {
        return Expr::Const(0.0);
    }
    match (&a, &b) {
        (Expr::Const(c), _) if *c == 1.0 => b,
        (_, Expr::Const(c)) if *c == 1.0 => a,
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(Var::T) => write!(f, "t"),
            Expr::Var(Var::X(i)) => write!(f, "x{}", i + 1),
            Expr::Var(Var::U(i)) => write!(f, "u{}", i + 1),
            Expr::Var(Var::V(i)) => write!(f, "v{}", i + 1),
            Expr::Var(Var::Z(i)) => write!(f, "z{}", i + 1),
            Expr::Feature(ft, 0) => write!(f, "feature({})", ft.name()),
            Expr::Feature(ft, k) => write!(f, "feature({}, {})", ft.name(), k + 1),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Number(f64),
    Ident(String),
    Op(char),
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Number(n) => write!(f, "{n}"),
            TokenKind::Ident(s) => write!(f, "{s}"),
            TokenKind::Op(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    line: usize,
    column: usize,
}

fn syntax(line: usize, column: usize, message: String) -> Error {
    Error::Syntax { line, column, message }
}

fn lex(source: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = source.chars().collect();
    let mut tokens = Vec::new();
    let (mut line, mut col) = (1, 1);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let start = i;
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
            let text: String = chars[start..i].iter().collect();
            let value = text
                .parse::<f64>()
                .map_err(|_| syntax(tl, tc, format!("malformed number `{text}`")))?;
            col += i - start;
            tokens.push(Token {
                kind: TokenKind::Number(value),
                line: tl,
                column: tc,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            tokens.push(Token {
                kind: TokenKind::Ident(chars[start..i].iter().collect()),
                line: tl,
                column: tc,
            });
            continue;
        }
        if "+-*/(),".contains(c) {
            tokens.push(Token {
                kind: TokenKind::Op(c),
                line: tl,
                column: tc,
            });
            i += 1;
            col += 1;
            continue;
        }
        return Err(syntax(tl, tc, format!("unexpected character `{c}`")));
    }
    Ok(tokens)
}

struct Parser<'s> {
    tokens: Vec<Token>,
    pos: usize,
    scope: &'s Scope,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_op(&self) -> Option<char> {
        match self.peek() {
            Some(Token {
                kind: TokenKind::Op(c), ..
            }) => Some(*c),
            _ => None,
        }
    }

    fn end_position(&self) -> (usize, usize) {
        self.tokens.last().map(|t| (t.line, t.column + 1)).unwrap_or((1, 1))
    }

    fn expect(&mut self, op: char) -> Result<()> {
        match self.peek() {
            Some(Token {
                kind: TokenKind::Op(c), ..
            }) if *c == op => {
                self.pos += 1;
                Ok(())
            }
            Some(tok) => Err(syntax(
                tok.line,
                tok.column,
                format!("expected `{op}`, found `{}`", tok.kind),
            )),
            None => {
                let (l, c) = self.end_position();
                Err(syntax(l, c, format!("expected `{op}`, found end of input")))
            }
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(op) = self.peek_op() {
            if op != '+' && op != '-' {
                break;
            }
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.peek_op() {
            if op != '*' && op != '/' {
                break;
            }
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek_op() == Some('-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.peek_op() == Some('+') {
            self.pos += 1;
            return self.unary();
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr> {
        let Some(tok) = self.peek().cloned() else {
            let (l, c) = self.end_position();
            return Err(syntax(l, c, "unexpected end of input".into()));
        };
        self.pos += 1;
        match tok.kind {
            TokenKind::Number(v) => Ok(Expr::Const(v)),
            TokenKind::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            TokenKind::Op(c) => Err(syntax(tok.line, tok.column, format!("unexpected `{c}`"))),
            TokenKind::Ident(name) => {
                if self.peek_op() == Some('(') {
                    self.call(&name, tok.line, tok.column)
                } else {
                    self.variable(&name, tok.line, tok.column)
                }
            }
        }
    }

    fn arguments(&mut self) -> Result<Vec<Expr>> {
        self.expect('(')?;
        let mut args = Vec::new();
        if self.peek_op() == Some(')') {
            self.pos += 1;
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            match self.peek_op() {
                Some(',') => self.pos += 1,
                _ => break,
            }
        }
        self.expect(')')?;
        Ok(args)
    }

    fn call(&mut self, name: &str, line: usize, column: usize) -> Result<Expr> {
        if name == "feature" {
            return self.feature(line, column);
        }
        let func = match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => {
                return Err(Error::UnknownIdentifier {
                    name: name.to_string(),
                    line,
                    column,
                })
            }
        };
        let mut args = self.arguments()?;
        if args.len() != 1 {
            return Err(Error::Arity {
                name: name.to_string(),
                expected: "1".into(),
                got: args.len(),
            });
        }
        Ok(Expr::Call(func, Box::new(args.remove(0))))
    }

    fn feature(&mut self, line: usize, column: usize) -> Result<Expr> {
        if !self.scope.allow_features {
            return Err(Error::UnknownIdentifier {
                name: "feature".into(),
                line,
                column,
            });
        }
        self.expect('(')?;
        let name = match self.peek().cloned() {
            Some(Token {
                kind: TokenKind::Ident(s),
                ..
            }) => {
                self.pos += 1;
                s
            }
            Some(t) => {
                return Err(syntax(t.line, t.column, "expected a feature name".into()));
            }
            None => {
                let (l, c) = self.end_position();
                return Err(syntax(l, c, "expected a feature name".into()));
            }
        };
        let feature = Feature::parse(&name)?;
        let mut component = 0;
        let mut nargs = 1;
        while self.peek_op() == Some(',') {
            self.pos += 1;
            nargs += 1;
            match self.peek().cloned() {
                Some(Token {
                    kind: TokenKind::Number(k),
                    line,
                    column,
                }) => {
                    self.pos += 1;
                    if k.fract() != 0.0 || k < 1.0 || k as usize > self.scope.dim {
                        return Err(syntax(line, column, format!("component {k} out of range")));
                    }
                    component = k as usize - 1;
                }
                Some(t) => {
                    return Err(syntax(t.line, t.column, "expected a component index".into()));
                }
                None => {
                    let (l, c) = self.end_position();
                    return Err(syntax(l, c, "expected a component index".into()));
                }
            }
        }
        self.expect(')')?;
        if nargs > 2 || (nargs == 2 && feature != Feature::Mean) {
            return Err(Error::Arity {
                name: format!("feature({name})"),
                expected: if feature == Feature::Mean { "1 or 2" } else { "1" }.into(),
                got: nargs,
            });
        }
        if feature == Feature::MeanSin && self.scope.dim != 1 {
            return Err(Error::UnsupportedFeature(
                "mean_sin requires a one-dimensional state".into(),
            ));
        }
        Ok(Expr::Feature(feature, component))
    }

    fn variable(&mut self, name: &str, line: usize, column: usize) -> Result<Expr> {
        let unknown = || Error::UnknownIdentifier {
            name: name.to_string(),
            line,
            column,
        };
        if name == "t" {
            return if self.scope.allow_t {
                Ok(Expr::Var(Var::T))
            } else {
                Err(unknown())
            };
        }
        if name == "pi" {
            return Ok(Expr::Const(std::f64::consts::PI));
        }
        let (head, tail) = name.split_at(1);
        let index: usize = match tail.parse() {
            Ok(i) if i >= 1 && !tail.starts_with('0') => i,
            _ => return Err(unknown()),
        };
        let (limit, make): (usize, fn(usize) -> Var) = match head {
            "x" => (self.scope.dim, Var::X),
            "u" => (self.scope.u_dim, Var::U),
            "v" => (self.scope.v_dim, Var::V),
            "z" if self.scope.allow_z => (self.scope.dim, Var::Z),
            _ => return Err(unknown()),
        };
        if index > limit {
            return Err(unknown());
        }
        Ok(Expr::Var(make(index - 1)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env<'a>(x: &'a [f64], u: &'a [f64], v: &'a [f64], z: &'a [f64], fv: &'a FeatureValues) -> Env<'a> {
        Env {
            t: 0.25,
            x,
            u,
            v,
            z,
            features: fv,
        }
    }

    #[test]
    fn parses_the_drift_of_the_shipped_game() {
        let scope = Scope::running(1, 1, 1);
        let e = Expr::parse("1/(1+x1*x1) + feature(mean_sin) + u1 - 0.1*v1", &scope).unwrap();
        let mut fv = FeatureValues::zeros(1);
        fv.mean_sin = Some(0.3);
        let got = e.eval(&env(&[2.0], &[0.5], &[1.0], &[], &fv)).unwrap();
        let want = 1.0 / (1.0 + 4.0) + 0.3 + 0.5 - 0.1;
        assert!((got - want).abs() < 1e-15);
        let zero = Expr::parse("0", &scope).unwrap();
        assert_eq!(zero, Expr::Const(0.0));
    }

    #[test]
    fn terminal_cost_and_precedence() {
        let m = Expr::parse("sin(x1) - z1", &Scope::terminal(1)).unwrap();
        let fv = FeatureValues::zeros(1);
        let v = m
            .eval(&env(&[std::f64::consts::FRAC_PI_2], &[], &[], &[0.0], &fv))
            .unwrap();
        assert_eq!(v, 1.0);
        let p = Expr::parse("2 + 3 * -4 / 2 - -1", &Scope::state(1)).unwrap();
        assert_eq!(p.eval(&env(&[0.0], &[], &[], &[], &fv)).unwrap(), -3.0);
        let sci = Expr::parse("1.5e-1 * 2E1", &Scope::state(1)).unwrap();
        assert!((sci.eval(&env(&[0.0], &[], &[], &[], &fv)).unwrap() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn reports_errors_with_positions() {
        let scope = Scope::running(1, 1, 1);
        match Expr::parse("x1 +\n  * 2", &scope) {
            Err(Error::Syntax { line, column, .. }) => assert_eq!((line, column), (2, 3)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            Expr::parse("y1 + 1", &scope),
            Err(Error::UnknownIdentifier { .. })
        ));
        assert!(matches!(
            Expr::parse("x2", &scope),
            Err(Error::UnknownIdentifier { .. })
        ));
        assert!(matches!(
            Expr::parse("z1", &scope),
            Err(Error::UnknownIdentifier { .. })
        ));
        assert!(matches!(
            Expr::parse("t", &Scope::terminal(1)),
            Err(Error::UnknownIdentifier { .. })
        ));
        assert!(matches!(Expr::parse("sin(x1, u1)", &scope), Err(Error::Arity { .. })));
        assert!(matches!(
            Expr::parse("feature(median)", &scope),
            Err(Error::UnsupportedFeature(_))
        ));
        assert!(Expr::parse("(x1", &scope).is_err());
        assert!(Expr::parse("x1 $ 2", &scope).is_err());
        assert!(Expr::parse("", &scope).is_err());
        assert!(matches!(
            Expr::parse("feature(mean_sin)", &Scope::running(2, 1, 1)),
            Err(Error::UnsupportedFeature(_))
        ));
    }

    #[test]
    fn division_by_zero_is_an_error() {
        let e = Expr::parse("1 / x1", &Scope::state(1)).unwrap();
        let fv = FeatureValues::zeros(1);
        assert!(matches!(e.eval(&env(&[0.0], &[], &[], &[], &fv)), Err(Error::Eval(_))));
        let big = Expr::parse("exp(x1)", &Scope::state(1)).unwrap();
        assert!(big.eval(&env(&[1000.0], &[], &[], &[], &fv)).is_err());
        // -1/0 would be -inf and exp(-inf) = 0 without the check
        let hidden = Expr::parse("exp(-1 / x1) + abs(sqrt(x1 - 1) * 0)", &Scope::state(1)).unwrap();
        assert!(matches!(
            hidden.eval(&env(&[0.0], &[], &[], &[], &fv)),
            Err(Error::Eval(_))
        ));
        let overflow = Expr::parse("1 / exp(x1)", &Scope::state(1)).unwrap();
        assert_eq!(overflow.eval(&env(&[1000.0], &[], &[], &[], &fv)).unwrap(), 0.0);
    }

    #[test]
    fn feature_components() {
        let e = Expr::parse("feature(mean, 2) + feature(second_moment)", &Scope::running(2, 0, 0)).unwrap();
        let fv = FeatureValues {
            mean: vec![1.0, 5.0],
            second_moment: 2.0,
            mean_sin: None,
        };
        assert_eq!(e.eval(&env(&[0.0, 0.0], &[], &[], &[], &fv)).unwrap(), 7.0);
        assert!(Expr::parse("feature(mean, 3)", &Scope::running(2, 0, 0)).is_err());
        assert!(Expr::parse("feature(second_moment, 1)", &Scope::running(2, 0, 0)).is_err());
    }

    #[test]
    fn symbolic_derivative_matches_central_difference() {
        let scope = Scope::state(2);
        let fv = FeatureValues::zeros(2);
        for src in [
            "sin(x1)",
            "x1*x1*x2",
            "1/(1+x1*x1)",
            "exp(cos(x1)) - sqrt(x1*x1 + 1)",
            "x2 / (2 + sin(x1))",
        ] {
            let e = Expr::parse(src, &scope).unwrap();
            let d = e.derivative_x(0).unwrap();
            for &x in &[-1.3, 0.0, 0.4, 2.1] {
                let h = 1e-6;
                let at = |x1: f64| e.eval(&env(&[x1, 0.7], &[], &[], &[], &fv)).unwrap();
                let fd = (at(x + h) - at(x - h)) / (2.0 * h);
                let sym = d.eval(&env(&[x, 0.7], &[], &[], &[], &fv)).unwrap();
                assert!((fd - sym).abs() < 1e-7, "{src} at {x}: {fd} vs {sym}");
            }
        }
        let e = Expr::parse("abs(x1)", &scope).unwrap();
        assert!(matches!(e.derivative_x(0), Err(Error::NotDifferentiable(_))));
        assert_eq!(
            Expr::parse("abs(x2)", &scope).unwrap().derivative_x(0).unwrap(),
            Expr::Const(0.0)
        );
    }

    #[test]
    fn display_round_trips() {
        let scope = Scope::running(1, 1, 1);
        let e = Expr::parse("-(x1 + 2) * feature(mean) / exp(t) - u1", &scope).unwrap();
        let again = Expr::parse(&e.to_string(), &scope).unwrap();
        assert_eq!(e, again);
    }
}
