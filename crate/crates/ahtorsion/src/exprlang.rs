//! Scalar expressions over chart coordinates `x1..x{2n}`.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := unary (("*" | "/") unary)*
//! unary   := "-" unary | power
//! power   := primary ("^" "-"? integer)*
//! primary := number | "pi" | "e" | x<k> | func "(" expr ")" | "(" expr ")"
//! ```

use std::fmt;

use thiserror::Error;

use crate::jets::{Jet, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
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

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// 1-based coordinate index.
    Var(usize),
    Pi,
    E,
    Neg(Box<Expr>),
    Call(Func, Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {expected}")]
    Syntax { offset: usize, expected: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { offset: usize, name: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("variable x{index} exceeds chart dimension {dim}")]
    VariableOutOfRange { index: usize, dim: usize },
    #[error("{func} of non-positive value {value} in `{expr}`")]
    Domain {
        func: &'static str,
        value: f64,
        expr: String,
    },
    #[error("division by zero in `{expr}`")]
    DivisionByZero { expr: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Int(i64),
    Ident(String),
    Sym(char),
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    /// Next token and its starting offset.
    fn next(&mut self) -> Result<(Tok, usize), ParseError> {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.src[start..];
        let Some(c) = rest.chars().next() else {
            return Ok((Tok::End, start));
        };
        if c.is_ascii_digit() || (c == '.' && rest[1..].starts_with(|d: char| d.is_ascii_digit())) {
            let bytes = rest.as_bytes();
            let mut i = 0;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let mut integral = true;
            if i < bytes.len() && bytes[i] == b'.' {
                integral = false;
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
                    integral = false;
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &rest[..i];
            self.pos += i;
            let tok = match (integral, text.parse::<i64>()) {
                (true, Ok(v)) => Tok::Int(v),
                _ => Tok::Num(text.parse::<f64>().map_err(|_| ParseError::Syntax {
                    offset: start,
                    expected: "a number".into(),
                })?),
            };
            return Ok((tok, start));
        }
        if c.is_ascii_alphabetic() {
            let len = rest
                .find(|d: char| !d.is_ascii_alphanumeric() && d != '_')
                .unwrap_or(rest.len());
            self.pos += len;
            return Ok((Tok::Ident(rest[..len].to_string()), start));
        }
        if "+-*/^()".contains(c) {
            self.pos += 1;
            return Ok((Tok::Sym(c), start));
        }
        Err(ParseError::Syntax {
            offset: start,
            expected: format!("unexpected character `{c}`"),
        })
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Tok,
    at: usize,
}

impl<'a> Parser<'a> {
    fn bump(&mut self) -> Result<(), ParseError> {
        let (t, at) = self.lexer.next()?;
        self.tok = t;
        self.at = at;
        Ok(())
    }

    fn fail<T>(&self, expected: &str) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            offset: self.at,
            expected: format!("expected {expected}"),
        })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.tok {
                Tok::Sym('+') => BinOp::Add,
                Tok::Sym('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump()?;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.tok {
                Tok::Sym('*') => BinOp::Mul,
                Tok::Sym('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump()?;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.tok == Tok::Sym('-') {
            self.bump()?;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let mut base = self.primary()?;
        while self.tok == Tok::Sym('^') {
            self.bump()?;
            let negative = self.tok == Tok::Sym('-');
            if negative {
                self.bump()?;
            }
            let Tok::Int(k) = self.tok else {
                return self.fail("integer exponent");
            };
            let k = i32::try_from(k).or_else(|_| self.fail("exponent within i32 range"))?;
            self.bump()?;
            base = Expr::Pow(Box::new(base), if negative { -k } else { k });
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.tok.clone() {
            Tok::Num(v) => {
                self.bump()?;
                Ok(Expr::Num(v))
            }
            Tok::Int(v) => {
                self.bump()?;
                Ok(Expr::Num(v as f64))
            }
            Tok::Sym('(') => {
                self.bump()?;
                let e = self.expr()?;
                if self.tok != Tok::Sym(')') {
                    return self.fail("`)`");
                }
                self.bump()?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let offset = self.at;
                self.bump()?;
                if let Some(f) = Func::from_name(&name) {
                    if self.tok != Tok::Sym('(') {
                        return self.fail("`(` after function name");
                    }
                    self.bump()?;
                    let arg = self.expr()?;
                    if self.tok != Tok::Sym(')') {
                        return self.fail("`)`");
                    }
                    self.bump()?;
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                match name.as_str() {
                    "pi" => Ok(Expr::Pi),
                    "e" => Ok(Expr::E),
                    _ => match name.strip_prefix('x').and_then(|d| d.parse::<usize>().ok()) {
                        Some(k) if k >= 1 && !name[1..].starts_with('0') => Ok(Expr::Var(k)),
                        _ => Err(ParseError::UnknownIdentifier { offset, name }),
                    },
                }
            }
            _ => self.fail("expression"),
        }
    }
}

pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let mut p = Parser {
        lexer: Lexer { src, pos: 0 },
        tok: Tok::End,
        at: 0,
    };
    p.bump()?;
    let e = p.expr()?;
    if p.tok != Tok::End {
        return p.fail("operator or end of input");
    }
    Ok(e)
}

impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            _ => 5,
        }
    }

    /// Largest variable index used, 0 if none.
    pub fn max_var(&self) -> usize {
        match self {
            Expr::Var(k) => *k,
            Expr::Num(_) | Expr::Pi | Expr::E => 0,
            Expr::Neg(a) | Expr::Call(_, a) | Expr::Pow(a, _) => a.max_var(),
            Expr::Bin(_, a, b) => a.max_var().max(b.max_var()),
        }
    }

    /// Evaluate at `x` (index `k - 1` holds `x_k`).
    pub fn eval<S: Scalar>(&self, x: &[S]) -> Result<S, EvalError> {
        let seed = x.first().ok_or(EvalError::VariableOutOfRange {
            index: self.max_var().max(1),
            dim: 0,
        })?;
        self.eval_in(x, seed)
    }

    fn eval_in<S: Scalar>(&self, x: &[S], seed: &S) -> Result<S, EvalError> {
        Ok(match self {
            Expr::Num(v) => seed.lift(*v),
            Expr::Pi => seed.lift(std::f64::consts::PI),
            Expr::E => seed.lift(std::f64::consts::E),
            Expr::Var(k) => x
                .get(k - 1)
                .cloned()
                .ok_or(EvalError::VariableOutOfRange {
                    index: *k,
                    dim: x.len(),
                })?,
            Expr::Neg(a) => -a.eval_in(x, seed)?,
            Expr::Call(f, a) => {
                let v = a.eval_in(x, seed)?;
                let domain = |func| {
                    if v.value() > 0.0 {
                        Ok(())
                    } else {
                        Err(EvalError::Domain {
                            func,
                            value: v.value(),
                            expr: self.to_string(),
                        })
                    }
                };
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Log => {
                        domain("log")?;
                        v.ln()
                    }
                    Func::Sqrt => {
                        domain("sqrt")?;
                        v.sqrt()
                    }
                }
            }
            Expr::Bin(op, a, b) => {
                let u = a.eval_in(x, seed)?;
                let w = b.eval_in(x, seed)?;
                match op {
                    BinOp::Add => u + w,
                    BinOp::Sub => u - w,
                    BinOp::Mul => u * w,
                    BinOp::Div => {
                        if w.value() == 0.0 {
                            return Err(EvalError::DivisionByZero {
                                expr: self.to_string(),
                            });
                        }
                        u / w
                    }
                }
            }
            Expr::Pow(a, k) => {
                let base = a.eval_in(x, seed)?;
                if *k < 0 && base.value() == 0.0 {
                    return Err(EvalError::DivisionByZero {
                        expr: self.to_string(),
                    });
                }
                let mut acc = seed.lift(1.0);
                for _ in 0..k.unsigned_abs() {
                    acc = acc * base.clone();
                }
                if *k < 0 {
                    seed.lift(1.0) / acc
                } else {
                    acc
                }
            }
        })
    }
}

/// Evaluate `e` as a jet of the given degree at `point`.
pub fn eval_expr(e: &Expr, point: &[f64], degree: usize) -> Result<Jet, EvalError> {
    if e.max_var() > point.len() {
        return Err(EvalError::VariableOutOfRange {
            index: e.max_var(),
            dim: point.len(),
        });
    }
    e.eval(&Jet::point(point, degree))
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool| {
            if parens {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(k) => write!(f, "x{k}"),
            Expr::Pi => f.write_str("pi"),
            Expr::E => f.write_str("e"),
            Expr::Neg(a) => {
                f.write_str("-")?;
                wrap(f, a, a.precedence() < 3)
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Bin(op, a, b) => {
                let p = self.precedence();
                wrap(f, a, a.precedence() < p)?;
                f.write_str(match op {
                    BinOp::Add => " + ",
                    BinOp::Sub => " - ",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                })?;
                wrap(f, b, b.precedence() <= p)
            }
            Expr::Pow(a, k) => {
                wrap(f, a, a.precedence() < 4)?;
                write!(f, "^{k}")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_call() {
        assert_eq!(
            parse("sin(x1)").unwrap(),
            Expr::Call(Func::Sin, Box::new(Expr::Var(1)))
        );
    }

    #[test]
    fn hopf_factor_parses() {
        let e = parse("-2*log(sqrt(x1^2+x2^2))").unwrap();
        assert_eq!(e.max_var(), 2);
        assert!(matches!(e, Expr::Bin(BinOp::Mul, ..)));
    }

    #[test]
    fn dangling_operator() {
        assert_eq!(
            parse("x1 +").unwrap_err(),
            ParseError::Syntax {
                offset: 4,
                expected: "expected expression".into()
            }
        );
    }

    #[test]
    fn unknown_identifier() {
        assert!(matches!(
            parse("2*y1").unwrap_err(),
            ParseError::UnknownIdentifier { offset: 2, .. }
        ));
        assert!(matches!(
            parse("x0").unwrap_err(),
            ParseError::UnknownIdentifier { offset: 0, .. }
        ));
    }

    #[test]
    fn precedence() {
        // ^ binds tighter than unary minus, which binds tighter than *
        let e = parse("-x1^2*3").unwrap();
        let want = Expr::Bin(
            BinOp::Mul,
            Box::new(Expr::Neg(Box::new(Expr::Pow(Box::new(Expr::Var(1)), 2)))),
            Box::new(Expr::Num(3.0)),
        );
        assert_eq!(e, want);
        let s = parse("x1 - x2 - x3").unwrap();
        assert!(matches!(s, Expr::Bin(BinOp::Sub, ref a, _) if matches!(**a, Expr::Bin(BinOp::Sub, ..))));
        assert!(parse("x1^1.5").is_err());
    }

    #[test]
    fn product_jet() {
        let j = eval_expr(&parse("x1*x2").unwrap(), &[1.0, 2.0], 2).unwrap();
        assert_eq!(j.value(), 2.0);
        assert_eq!(j.partial(&[1, 0]).unwrap(), 2.0);
        assert_eq!(j.partial(&[0, 1]).unwrap(), 1.0);
        assert_eq!(j.coeff(&[1, 1]).unwrap(), 1.0);
    }

    #[test]
    fn hopf_factor_gradient() {
        let e = parse("-2*log(sqrt(x1^2+x2^2+x3^2+x4^2))").unwrap();
        let j = eval_expr(&e, &[1.0, 0.0, 0.0, 0.0], 2).unwrap();
        assert!(j.value().abs() < 1e-15);
        assert!((j.partial(&[1, 0, 0, 0]).unwrap() + 2.0).abs() < 1e-14);
        for k in 1..4 {
            let mut a = [0u8; 4];
            a[k] = 1;
            assert!(j.partial(&a).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn domain_error_names_subexpression() {
        let e = parse("1 + log(x1 - 2)").unwrap();
        match eval_expr(&e, &[1.0], 1).unwrap_err() {
            EvalError::Domain { func, expr, .. } => {
                assert_eq!(func, "log");
                assert_eq!(expr, "log(x1 - 2.0)");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            eval_expr(&parse("x3").unwrap(), &[0.0, 0.0], 1),
            Err(EvalError::VariableOutOfRange { index: 3, dim: 2 })
        ));
    }

    #[test]
    fn constants_and_scientific() {
        let v: f64 = parse("pi + e + 1e-3 + .5").unwrap().eval(&[0.0]).unwrap();
        assert!((v - (std::f64::consts::PI + std::f64::consts::E + 0.501)).abs() < 1e-15);
        assert!(parse("2e").is_err());
    }
}
