//! A small expression language in one variable `x`, used for user-defined
//! observables.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | 'x' | func '(' args ')' | '(' expr ')'
//! func  := abs | exp | min | max | pow
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-x^2`
//! is `-(x^2)`. The printer emits the minimal parenthesization, and its
//! output parses back to the same tree.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var,
    Neg(Box<Expr>),
    Abs(Box<Expr>),
    Exp(Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("{message} at position {position}\n  {source_text}\n  {caret}")]
    Parse {
        message: String,
        position: usize,
        source_text: String,
        caret: String,
    },
    #[error("division by zero")]
    DivisionByZero,
}

impl ExprError {
    fn parse(text: &str, position: usize, message: impl Into<String>) -> Self {
        let column = text[..position.min(text.len())].chars().count();
        ExprError::Parse {
            message: message.into(),
            position,
            source_text: text.to_string(),
            caret: format!("{}^", " ".repeat(column)),
        }
    }
}

impl Expr {
    pub fn parse(text: &str) -> Result<Expr, ExprError> {
        let mut parser = Parser { text, pos: 0 };
        let expr = parser.expr()?;
        parser.skip_ws();
        if parser.pos < text.len() {
            return Err(ExprError::parse(text, parser.pos, "unexpected trailing input"));
        }
        Ok(expr)
    }

    pub fn eval(&self, x: f64) -> Result<f64, ExprError> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var => x,
            Expr::Neg(e) => -e.eval(x)?,
            Expr::Abs(e) => e.eval(x)?.abs(),
            Expr::Exp(e) => e.eval(x)?.exp(),
            Expr::Binary(op, a, b) => {
                let a = a.eval(x)?;
                let b = b.eval(x)?;
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => {
                        if b == 0.0 {
                            return Err(ExprError::DivisionByZero);
                        }
                        a / b
                    }
                    BinaryOp::Pow => a.powf(b),
                    BinaryOp::Min => a.min(b),
                    BinaryOp::Max => a.max(b),
                }
            }
        })
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => 1,
            Expr::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Binary(BinaryOp::Pow, ..) => 4,
            _ => 5,
        }
    }

    fn write_with(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        let paren = self.precedence() < min_prec;
        if paren {
            f.write_str("(")?;
        }
        match self {
            Expr::Const(c) => write!(f, "{c}")?,
            Expr::Var => f.write_str("x")?,
            Expr::Neg(e) => {
                f.write_str("-")?;
                e.write_with(f, 3)?;
            }
            Expr::Abs(e) => {
                f.write_str("abs(")?;
                e.write_with(f, 0)?;
                f.write_str(")")?;
            }
            Expr::Exp(e) => {
                f.write_str("exp(")?;
                e.write_with(f, 0)?;
                f.write_str(")")?;
            }
            Expr::Binary(op @ (BinaryOp::Min | BinaryOp::Max), a, b) => {
                f.write_str(if *op == BinaryOp::Min { "min(" } else { "max(" })?;
                a.write_with(f, 0)?;
                f.write_str(", ")?;
                b.write_with(f, 0)?;
                f.write_str(")")?;
            }
            Expr::Binary(BinaryOp::Pow, a, b) => {
                a.write_with(f, 5)?;
                f.write_str("^")?;
                b.write_with(f, 3)?;
            }
            Expr::Binary(op, a, b) => {
                let (sym, prec) = match op {
                    BinaryOp::Add => (" + ", 1),
                    BinaryOp::Sub => (" - ", 1),
                    BinaryOp::Mul => (" * ", 2),
                    _ => (" / ", 2),
                };
                a.write_with(f, prec)?;
                f.write_str(sym)?;
                b.write_with(f, prec + 1)?;
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
        self.write_with(f, 0)
    }
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ExprError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(ExprError::parse(self.text, self.pos, format!("expected '{c}'")))
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                BinaryOp::Add
            } else if self.eat('-') {
                BinaryOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                BinaryOp::Mul
            } else if self.eat('/') {
                BinaryOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.eat('^') {
            let exponent = self.unary()?;
            return Ok(Expr::Binary(BinaryOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            None => Err(ExprError::parse(self.text, start, "unexpected end of expression")),
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let ident: String = self.text[start..]
                    .chars()
                    .take_while(|c| c.is_ascii_alphanumeric() || *c == '_')
                    .collect();
                self.pos += ident.len();
                match ident.as_str() {
                    "x" => Ok(Expr::Var),
                    "abs" | "exp" => {
                        self.expect('(')?;
                        let arg = self.expr()?;
                        self.expect(')')?;
                        Ok(if ident == "abs" {
                            Expr::Abs(Box::new(arg))
                        } else {
                            Expr::Exp(Box::new(arg))
                        })
                    }
                    "min" | "max" | "pow" => {
                        self.expect('(')?;
                        let a = self.expr()?;
                        self.expect(',')?;
                        let b = self.expr()?;
                        self.expect(')')?;
                        let op = match ident.as_str() {
                            "min" => BinaryOp::Min,
                            "max" => BinaryOp::Max,
                            _ => BinaryOp::Pow,
                        };
                        Ok(Expr::Binary(op, Box::new(a), Box::new(b)))
                    }
                    _ => Err(ExprError::parse(
                        self.text,
                        start,
                        format!("unknown identifier `{ident}`"),
                    )),
                }
            }
            Some(c) => Err(ExprError::parse(self.text, start, format!("unexpected character '{c}'"))),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        let bytes = self.text.as_bytes();
        let mut end = start;
        while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
            end += 1;
        }
        if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
            let mut exp_end = end + 1;
            if exp_end < bytes.len() && (bytes[exp_end] == b'+' || bytes[exp_end] == b'-') {
                exp_end += 1;
            }
            let digits_start = exp_end;
            while exp_end < bytes.len() && bytes[exp_end].is_ascii_digit() {
                exp_end += 1;
            }
            if exp_end > digits_start {
                end = exp_end;
            }
        }
        let literal = &self.text[start..end];
        let value: f64 = literal
            .parse()
            .map_err(|_| ExprError::parse(self.text, start, format!("malformed number `{literal}`")))?;
        self.pos = end;
        Ok(Expr::Const(value))
    }
}
