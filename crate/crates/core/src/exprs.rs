//! Arithmetic expressions over `x`, `y` and `r = sqrt(x² + y²)`, used to give
//! coefficient fields, boundary data and reference solutions in config text.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := primary ('^' unary)?          right associative
//! primary := number | 'x' | 'y' | 'r' | 'pi' | func '(' expr (',' expr)* ')' | '(' expr ')'
//! func    := sin | cos | exp | sqrt | abs | min | max
//! ```
//!
//! So `-2^2 = -4` and `2^3^2 = 512`. The Unicode minus sign is accepted as `-`.

use std::fmt;

use thiserror::Error;

use crate::grid::Grid;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("syntax error at position {pos}: {message}")]
pub struct ParseError {
    /// 0-based character offset
    pub pos: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("sqrt of negative value {0}")]
    SqrtOfNegative(f64),
    #[error("non-finite result in {0}")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
    R,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
    Min,
    Max,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    pub fn eval(&self, x: f64, y: f64) -> Result<f64, EvalError> {
        let r = x.hypot(y);
        self.eval_at(x, y, r)
    }

    fn eval_at(&self, x: f64, y: f64, r: f64) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::X) => x,
            Expr::Var(Var::Y) => y,
            Expr::Var(Var::R) => r,
            Expr::Neg(e) => -e.eval_at(x, y, r)?,
            Expr::Bin(op, a, b) => {
                let a = a.eval_at(x, y, r)?;
                let b = b.eval_at(x, y, r)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        a / b
                    }
                    BinOp::Pow => pow(a, b),
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval_at(x, y, r)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(EvalError::SqrtOfNegative(a));
                        }
                        a.sqrt()
                    }
                    Func::Abs => a.abs(),
                    Func::Min => a.min(args[1].eval_at(x, y, r)?),
                    Func::Max => a.max(args[1].eval_at(x, y, r)?),
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite(self.kind_name()))
        }
    }

    fn kind_name(&self) -> &'static str {
        match self {
            Expr::Num(_) => "literal",
            Expr::Var(_) => "variable",
            Expr::Neg(_) => "negation",
            Expr::Bin(BinOp::Pow, ..) => "power",
            Expr::Bin(..) => "arithmetic",
            Expr::Call(f, _) => f.name(),
        }
    }
}

fn pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

impl fmt::Display for Expr {
    /// Fully parenthesised, so printing and re-parsing gives the same tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(Var::X) => f.write_str("x"),
            Expr::Var(Var::Y) => f.write_str("y"),
            Expr::Var(Var::R) => f.write_str("r"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, a, b) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a} {sym} {b})")
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl std::str::FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text
                .parse::<f64>()
                .map_err(|_| ParseError { pos: start, message: format!("bad number '{text}'") })?;
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), start));
        } else if "+-*/^(),".contains(c) || c == '\u{2212}' {
            out.push((Tok::Sym(if c == '\u{2212}' { '-' } else { c }), start));
            i += 1;
        } else {
            return Err(ParseError { pos: start, message: format!("unexpected character '{c}'") });
        }
    }
    out.push((Tok::End, chars.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError { pos: self.pos(), message: message.into() })
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if *self.peek() == Tok::Sym(c) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected '{c}'"))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('+') => BinOp::Add,
                Tok::Sym('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('*') => BinOp::Mul,
                Tok::Sym('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Tok::Sym('-') => {
                self.bump();
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Tok::Sym('+') => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if *self.peek() == Tok::Sym('^') {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let pos = self.pos();
        match self.bump() {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => match name.as_str() {
                "x" => Ok(Expr::Var(Var::X)),
                "y" => Ok(Expr::Var(Var::Y)),
                "r" => Ok(Expr::Var(Var::R)),
                "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                _ => {
                    let Some(func) = Func::from_name(&name) else {
                        return Err(ParseError { pos, message: format!("unknown identifier '{name}'") });
                    };
                    self.expect('(')?;
                    let mut args = vec![self.expr()?];
                    while *self.peek() == Tok::Sym(',') {
                        self.bump();
                        args.push(self.expr()?);
                    }
                    self.expect(')')?;
                    if args.len() != func.arity() {
                        return Err(ParseError {
                            pos,
                            message: format!(
                                "{} takes {} argument(s), got {}",
                                func.name(),
                                func.arity(),
                                args.len()
                            ),
                        });
                    }
                    Ok(Expr::Call(func, args))
                }
            },
            Tok::End => Err(ParseError { pos, message: "unexpected end of input".into() }),
            Tok::Sym(c) => Err(ParseError { pos, message: format!("unexpected '{c}'") }),
        }
    }
}

pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let mut p = Parser { toks: tokenize(src)?, at: 0 };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return p.err("trailing input");
    }
    Ok(e)
}

/// A scalar function of position.
pub trait ScalarField: Send + Sync {
    fn value(&self, p: [f64; 2]) -> Result<f64, EvalError>;
}

impl ScalarField for Expr {
    fn value(&self, p: [f64; 2]) -> Result<f64, EvalError> {
        self.eval(p[0], p[1])
    }
}

impl ScalarField for f64 {
    fn value(&self, _p: [f64; 2]) -> Result<f64, EvalError> {
        Ok(*self)
    }
}

/// Adapter for infallible closures.
pub struct FnField<F>(pub F);

impl<F: Fn([f64; 2]) -> f64 + Send + Sync> ScalarField for FnField<F> {
    fn value(&self, p: [f64; 2]) -> Result<f64, EvalError> {
        Ok((self.0)(p))
    }
}

/// Smallest value of `field` over every unknown node and every boundary
/// projection point of `grid`, with its location.
pub fn positivity_scan(field: &dyn ScalarField, grid: &Grid) -> Result<(f64, [f64; 2]), EvalError> {
    let mut best = (f64::INFINITY, [f64::NAN; 2]);
    let nodes = grid.unknown_points();
    let boundary = grid.boundary().iter().map(|b| b.point);
    for p in nodes.chain(boundary) {
        let v = field.value(p)?;
        if v < best.0 {
            best = (v, p);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, x: f64, y: f64) -> Result<f64, EvalError> {
        parse(s).unwrap().eval(x, y)
    }

    #[test]
    fn spec_examples() {
        assert!((ev("0.5 − 0.36*r^2", 1.0, 0.0).unwrap() - 0.14).abs() < 1e-15);
        assert_eq!(ev("x*y", 2.0, 3.0).unwrap(), 6.0);
        assert_eq!(ev("1/(x-x)", 0.3, 0.0), Err(EvalError::DivisionByZero));
        assert_eq!(ev("r", 3.0, 4.0).unwrap(), 5.0);
        assert_eq!(ev("sin(0)", 0.0, 0.0).unwrap(), 0.0);
        assert_eq!(ev("exp(1)", 0.0, 0.0).unwrap(), std::f64::consts::E);
        assert!(matches!(ev("sqrt(x)", -1.0, 0.0), Err(EvalError::SqrtOfNegative(_))));
    }

    #[test]
    fn precedence_table() {
        let cases: [(&str, f64); 20] = [
            ("1 + 2 * 3", 7.0),
            ("(1 + 2) * 3", 9.0),
            ("2 ^ 3 ^ 2", 512.0),
            ("(2 ^ 3) ^ 2", 64.0),
            ("-2 ^ 2", -4.0),
            ("(-2) ^ 2", 4.0),
            ("2 ^ -1", 0.5),
            ("8 / 4 / 2", 1.0),
            ("8 - 4 - 2", 2.0),
            ("2 * 3 ^ 2", 18.0),
            ("-3 * -2", 6.0),
            ("--3", 3.0),
            ("1 - -1", 2.0),
            ("+4 - 1", 3.0),
            ("6 / 2 * 3", 9.0),
            ("2 ^ 2 * 3", 12.0),
            ("min(3, 2) + max(1, 5)", 7.0),
            ("abs(-2) ^ 3", 8.0),
            ("1e2 + 2.5E-1", 100.25),
            ("-(1 + 2) ^ 2", -9.0),
        ];
        for (src, want) in cases {
            let got = ev(src, 0.0, 0.0).unwrap();
            assert_eq!(got, want, "{src}");
        }
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let e = parse("1 + * 2").unwrap_err();
        assert_eq!(e.pos, 4);
        assert_eq!(parse("foo(1)").unwrap_err().pos, 0);
        assert_eq!(parse("(1 + 2").unwrap_err().pos, 6);
        assert_eq!(parse("1 2").unwrap_err().pos, 2);
        assert_eq!(parse("min(1)").unwrap_err().pos, 0);
        assert_eq!(parse("1 $ 2").unwrap_err().pos, 2);
        assert!(parse("").is_err());
    }

    #[test]
    fn print_parse_roundtrip() {
        for src in ["0.5 - 0.36*r^2", "-x^2 + sin(y)/3", "max(x, -y) ^ 2 ^ 0.5", "1e-7 * exp(-r)"] {
            let e = parse(src).unwrap();
            assert_eq!(parse(&e.to_string()).unwrap(), e, "{src}");
        }
    }
}
