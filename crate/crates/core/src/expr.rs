//! Scalar expressions in `x` and `y` for metrics, directions and potentials.
//!
//! Grammar: numbers, `pi`, `x`, `y`, `+ - * / ^`, parentheses and the functions
//! `exp log sqrt sin cos`. `^` is right-associative and binds tighter than unary minus.

use std::fmt;

use crate::error::{Error, Result};
use crate::geom::Point;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    X,
    Y,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Sin => "sin",
            Func::Cos => "cos",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Exp => v.exp(),
            Func::Log => v.ln(),
            Func::Sqrt => v.sqrt(),
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
}

fn bx(e: Expr) -> Box<Expr> {
    Box::new(e)
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self> {
        let mut p = Parser { tokens: tokenize(src)?, pos: 0 };
        let e = p.sum()?;
        match p.peek() {
            None => Ok(e),
            Some(t) => Err(err(format!("unexpected '{t}'"))),
        }
    }

    pub fn eval(&self, p: Point) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::X => p[0],
            Expr::Y => p[1],
            Expr::Neg(a) => -a.eval(p),
            Expr::Add(a, b) => a.eval(p) + b.eval(p),
            Expr::Sub(a, b) => a.eval(p) - b.eval(p),
            Expr::Mul(a, b) => a.eval(p) * b.eval(p),
            Expr::Div(a, b) => a.eval(p) / b.eval(p),
            Expr::Pow(a, b) => match **b {
                Expr::Num(n) if n.fract() == 0.0 && n.abs() < i32::MAX as f64 => a.eval(p).powi(n as i32),
                _ => a.eval(p).powf(b.eval(p)),
            },
            Expr::Call(f, a) => f.apply(a.eval(p)),
        }
    }

    fn is_const(&self) -> bool {
        match self {
            Expr::Num(_) => true,
            Expr::X | Expr::Y => false,
            Expr::Neg(a) | Expr::Call(_, a) => a.is_const(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.is_const() && b.is_const()
            }
        }
    }

    /// Symbolic partial derivative.
    pub fn derivative(&self, v: Var) -> Expr {
        use Expr::*;
        match self {
            Num(_) => Num(0.0),
            X => Num(if v == Var::X { 1.0 } else { 0.0 }),
            Y => Num(if v == Var::Y { 1.0 } else { 0.0 }),
            Neg(a) => neg(a.derivative(v)),
            Add(a, b) => add(a.derivative(v), b.derivative(v)),
            Sub(a, b) => sub(a.derivative(v), b.derivative(v)),
            Mul(a, b) => add(mul(a.derivative(v), (**b).clone()), mul((**a).clone(), b.derivative(v))),
            Div(a, b) => div(
                sub(mul(a.derivative(v), (**b).clone()), mul((**a).clone(), b.derivative(v))),
                pow((**b).clone(), Num(2.0)),
            ),
            Pow(a, b) if b.is_const() => {
                let n = (**b).clone();
                mul(mul(n.clone(), pow((**a).clone(), sub(n, Num(1.0)))), a.derivative(v))
            }
            Pow(a, b) => mul(
                self.clone(),
                add(
                    mul(b.derivative(v), Call(Func::Log, a.clone())),
                    div(mul((**b).clone(), a.derivative(v)), (**a).clone()),
                ),
            ),
            Call(f, a) => {
                let inner = (**a).clone();
                let outer = match f {
                    Func::Exp => self.clone(),
                    Func::Log => div(Num(1.0), inner),
                    Func::Sqrt => div(Num(0.5), self.clone()),
                    Func::Sin => Call(Func::Cos, a.clone()),
                    Func::Cos => neg(Call(Func::Sin, a.clone())),
                };
                mul(outer, a.derivative(v))
            }
        }
    }

    pub fn gradient(&self) -> [Expr; 2] {
        [self.derivative(Var::X), self.derivative(Var::Y)]
    }
}

fn num(e: &Expr) -> Option<f64> {
    match e {
        Expr::Num(v) => Some(*v),
        _ => None,
    }
}

fn neg(a: Expr) -> Expr {
    match num(&a) {
        Some(v) => Expr::Num(-v),
        None => Expr::Neg(bx(a)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (num(&a), num(&b)) {
        (Some(x), Some(y)) => Expr::Num(x + y),
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => Expr::Add(bx(a), bx(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (num(&a), num(&b)) {
        (Some(x), Some(y)) => Expr::Num(x - y),
        (Some(x), _) if x == 0.0 => neg(b),
        (_, Some(y)) if y == 0.0 => a,
        _ => Expr::Sub(bx(a), bx(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (num(&a), num(&b)) {
        (Some(x), Some(y)) => Expr::Num(x * y),
        (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::Num(0.0),
        (Some(x), _) if x == 1.0 => b,
        (_, Some(y)) if y == 1.0 => a,
        _ => Expr::Mul(bx(a), bx(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (num(&a), num(&b)) {
        (Some(x), _) if x == 0.0 => Expr::Num(0.0),
        (_, Some(y)) if y == 1.0 => a,
        _ => Expr::Div(bx(a), bx(b)),
    }
}

fn pow(a: Expr, b: Expr) -> Expr {
    match num(&b) {
        Some(y) if y == 0.0 => Expr::Num(1.0),
        Some(y) if y == 1.0 => a,
        _ => Expr::Pow(bx(a), bx(b)),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::X => write!(f, "x"),
            Expr::Y => write!(f, "y"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Call(g, a) => write!(f, "{}({a})", g.name()),
        }
    }
}

fn err(msg: String) -> Error {
    Error::Config(format!("expression: {msg}"))
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Num(v) => write!(f, "{v}"),
            Token::Ident(s) => write!(f, "{s}"),
            Token::Op(c) => write!(f, "{c}"),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
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
            let s: String = chars[start..i].iter().collect();
            out.push(Token::Num(s.parse().map_err(|_| err(format!("bad number '{s}'")))?));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^()".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else {
            return Err(err(format!("unexpected character '{c}'")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn eat(&mut self, op: char) -> bool {
        if self.peek() == Some(&Token::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn sum(&mut self) -> Result<Expr> {
        let mut e = self.product()?;
        loop {
            if self.eat('+') {
                e = Expr::Add(bx(e), bx(self.product()?));
            } else if self.eat('-') {
                e = Expr::Sub(bx(e), bx(self.product()?));
            } else {
                return Ok(e);
            }
        }
    }

    fn product(&mut self) -> Result<Expr> {
        let mut e = self.unary()?;
        loop {
            if self.eat('*') {
                e = Expr::Mul(bx(e), bx(self.unary()?));
            } else if self.eat('/') {
                e = Expr::Div(bx(e), bx(self.unary()?));
            } else {
                return Ok(e);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            Ok(Expr::Neg(bx(self.unary()?)))
        } else if self.eat('+') {
            self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat('^') {
            Ok(Expr::Pow(bx(base), bx(self.unary()?)))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        let t = self.peek().cloned().ok_or_else(|| err("unexpected end of input".into()))?;
        self.pos += 1;
        match t {
            Token::Num(v) => Ok(Expr::Num(v)),
            Token::Op('(') => {
                let e = self.sum()?;
                if !self.eat(')') {
                    return Err(err("missing ')'".into()));
                }
                Ok(e)
            }
            Token::Ident(name) => match name.as_str() {
                "x" => Ok(Expr::X),
                "y" => Ok(Expr::Y),
                "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                _ => {
                    let f = [Func::Exp, Func::Log, Func::Sqrt, Func::Sin, Func::Cos]
                        .into_iter()
                        .find(|f| f.name() == name)
                        .ok_or_else(|| err(format!("unknown name '{name}'")))?;
                    if !self.eat('(') {
                        return Err(err(format!("'{name}' needs parentheses")));
                    }
                    let a = self.sum()?;
                    if !self.eat(')') {
                        return Err(err("missing ')'".into()));
                    }
                    Ok(Expr::Call(f, bx(a)))
                }
            },
            Token::Op(c) => Err(err(format!("unexpected '{c}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let p = [2.0, 3.0];
        assert_eq!(Expr::parse("1 + 2 * x ^ 2").unwrap().eval(p), 9.0);
        assert_eq!(Expr::parse("-x^2").unwrap().eval(p), -4.0);
        assert_eq!(Expr::parse("2^3^2").unwrap().eval(p), 512.0);
        assert_eq!(Expr::parse("(x - y) / 2").unwrap().eval(p), -0.5);
        assert_eq!(Expr::parse("1.5e-1*y").unwrap().eval(p), 0.15 * 3.0);
        assert!((Expr::parse("exp(log(x)) + sqrt(y*y)").unwrap().eval(p) - 5.0).abs() < 1e-14);
    }

    #[test]
    fn derivatives_match_differences() {
        let e = Expr::parse("1 + 0.3*x + exp(-(x^2 + y^2)) * sin(2*y) / (2 + cos(x)) + x^y").unwrap();
        let [gx, gy] = e.gradient();
        let p = [0.4, 0.7];
        let h = 1e-6;
        let dx = (e.eval([p[0] + h, p[1]]) - e.eval([p[0] - h, p[1]])) / (2.0 * h);
        let dy = (e.eval([p[0], p[1] + h]) - e.eval([p[0], p[1] - h])) / (2.0 * h);
        assert!((gx.eval(p) - dx).abs() < 1e-8 && (gy.eval(p) - dy).abs() < 1e-8);
    }

    #[test]
    fn simplifies_constants() {
        assert_eq!(Expr::parse("3*x").unwrap().derivative(Var::X), Expr::Num(3.0));
        assert_eq!(Expr::parse("x^2").unwrap().derivative(Var::Y), Expr::Num(0.0));
    }

    #[test]
    fn rejects_malformed_input() {
        for s in ["1 +", "(x", "foo(x)", "x $ y", "exp x", "x y"] {
            assert!(matches!(Expr::parse(s), Err(Error::Config(_))), "{s}");
        }
    }
}
