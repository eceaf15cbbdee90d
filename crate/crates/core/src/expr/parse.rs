//! Recursive-descent parser for the expression grammar:
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := ('-')? power
//! power  := atom ('^' factor)?
//! atom   := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'
//! ```
//!
//! `^` binds tightest and associates right. There is no implicit
//! multiplication: `2x` is a syntax error, not `2*x`.

use super::{Ex, Func, Var};
use crate::number::Number;
use num_bigint::BigInt;
use num_rational::BigRational;
use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    /// 1-based column of the offending character or token start.
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "syntax error at column {}: {}", self.column, self.message)
    }
}

impl std::error::Error for ParseError {}

/// Parse a coefficient expression in `x`, `y` and the declared parameters.
pub fn parse_expr(source: &str, params: &BTreeSet<String>) -> Result<Ex, ParseError> {
    Parser::new(source, params, false).run()
}

/// Parse a raw right-hand side, which may also mention the derivative
/// symbols `y1`, `y2`, `y3`.
pub fn parse_rhs(source: &str, params: &BTreeSet<String>) -> Result<Ex, ParseError> {
    Parser::new(source, params, true).run()
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(Number),
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

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    tok: Tok,
    tok_col: usize,
    params: &'a BTreeSet<String>,
    allow_derivs: bool,
}

impl<'a> Parser<'a> {
    fn new(source: &'a str, params: &'a BTreeSet<String>, allow_derivs: bool) -> Self {
        Parser {
            src: source.as_bytes(),
            pos: 0,
            tok: Tok::End,
            tok_col: 1,
            params,
            allow_derivs,
        }
    }

    fn run(mut self) -> Result<Ex, ParseError> {
        self.advance()?;
        let e = self.expr()?;
        if self.tok != Tok::End {
            return Err(self.err_here(&format!(
                "unexpected {} (implicit multiplication is not supported)",
                self.describe_tok()
            )));
        }
        Ok(e)
    }

    fn describe_tok(&self) -> String {
        match &self.tok {
            Tok::Num(n) => format!("number `{}`", n),
            Tok::Ident(s) => format!("identifier `{}`", s),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::End => "end of input".into(),
        }
    }

    fn err_here(&self, msg: &str) -> ParseError {
        ParseError {
            column: self.tok_col,
            message: msg.to_string(),
        }
    }

    fn advance(&mut self) -> Result<(), ParseError> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        self.tok_col = self.pos + 1;
        if self.pos >= self.src.len() {
            self.tok = Tok::End;
            return Ok(());
        }
        let c = self.src[self.pos];
        self.tok = match c {
            b'+' => {
                self.pos += 1;
                Tok::Plus
            }
            b'-' => {
                self.pos += 1;
                Tok::Minus
            }
            b'*' => {
                self.pos += 1;
                Tok::Star
            }
            b'/' => {
                self.pos += 1;
                Tok::Slash
            }
            b'^' => {
                self.pos += 1;
                Tok::Caret
            }
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b'0'..=b'9' | b'.' => self.lex_number()?,
            c if c == b'_' || c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos] == b'_' || self.src[self.pos].is_ascii_alphanumeric())
                {
                    self.pos += 1;
                }
                Tok::Ident(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
            }
            other => {
                return Err(ParseError {
                    column: self.pos + 1,
                    message: format!("unexpected character `{}`", other as char),
                })
            }
        };
        Ok(())
    }

    fn lex_number(&mut self) -> Result<Tok, ParseError> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let mut frac_digits: u32 = 0;
        if self.pos < self.src.len() && self.src[self.pos] == b'.' {
            self.pos += 1;
            let fs = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            frac_digits = (self.pos - fs) as u32;
            if frac_digits == 0 && self.pos - start == 1 {
                return Err(ParseError {
                    column: start + 1,
                    message: "malformed number".into(),
                });
            }
        }
        let mantissa_end = self.pos;
        let mut exponent: i64 = 0;
        if self.pos < self.src.len() && (self.src[self.pos] | 32) == b'e' {
            let save = self.pos;
            let mut q = self.pos + 1;
            let mut sign = 1i64;
            if q < self.src.len() && (self.src[q] == b'+' || self.src[q] == b'-') {
                if self.src[q] == b'-' {
                    sign = -1;
                }
                q += 1;
            }
            let ds = q;
            while q < self.src.len() && self.src[q].is_ascii_digit() {
                q += 1;
            }
            if q > ds {
                let digits = std::str::from_utf8(&self.src[ds..q]).unwrap();
                exponent = sign
                    * digits.parse::<i64>().map_err(|_| ParseError {
                        column: ds + 1,
                        message: "exponent out of range".into(),
                    })?;
                self.pos = q;
            } else {
                self.pos = save; // bare `e` belongs to a following identifier: error later
            }
        }
        let text = std::str::from_utf8(&self.src[start..mantissa_end]).unwrap();
        let digits: String = text.chars().filter(|c| *c != '.').collect();
        if digits.is_empty() {
            return Err(ParseError {
                column: start + 1,
                message: "malformed number".into(),
            });
        }
        let mantissa: BigInt = digits.parse().unwrap();
        let mut value = BigRational::from_integer(mantissa);
        let shift = exponent - frac_digits as i64;
        if shift != 0 {
            let ten = BigInt::from(10);
            let p = ten.pow(shift.unsigned_abs() as u32);
            if shift > 0 {
                value *= BigRational::from_integer(p);
            } else {
                value /= BigRational::from_integer(p);
            }
        }
        Ok(Tok::Num(Number::Rat(value)))
    }

    fn expr(&mut self) -> Result<Ex, ParseError> {
        let mut e = self.term()?;
        loop {
            match self.tok {
                Tok::Plus => {
                    self.advance()?;
                    e = e + self.term()?;
                }
                Tok::Minus => {
                    self.advance()?;
                    e = e - self.term()?;
                }
                _ => return Ok(e),
            }
        }
    }

    fn term(&mut self) -> Result<Ex, ParseError> {
        let mut e = self.factor()?;
        loop {
            match self.tok {
                Tok::Star => {
                    self.advance()?;
                    e = e * self.factor()?;
                }
                Tok::Slash => {
                    self.advance()?;
                    let d = self.factor()?;
                    if let Some(c) = d.as_const() {
                        if c.is_zero() {
                            return Err(self.err_here("division by constant zero"));
                        }
                    }
                    e = e / d;
                }
                _ => return Ok(e),
            }
        }
    }

    fn factor(&mut self) -> Result<Ex, ParseError> {
        if self.tok == Tok::Minus {
            self.advance()?;
            Ok(-self.power()?)
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Ex, ParseError> {
        let base = self.atom()?;
        if self.tok == Tok::Caret {
            self.advance()?;
            let exp = self.factor()?;
            Ok(base.pow(&exp))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Ex, ParseError> {
        match self.tok.clone() {
            Tok::Num(n) => {
                self.advance()?;
                Ok(Ex::constant(n))
            }
            Tok::LParen => {
                self.advance()?;
                let e = self.expr()?;
                if self.tok != Tok::RParen {
                    return Err(self.err_here("expected `)`"));
                }
                self.advance()?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let col = self.tok_col;
                self.advance()?;
                if self.tok == Tok::LParen {
                    let Some(f) = Func::from_name(&name) else {
                        return Err(ParseError {
                            column: col,
                            message: format!("unknown function `{}`", name),
                        });
                    };
                    self.advance()?;
                    let arg = self.expr()?;
                    if self.tok != Tok::RParen {
                        return Err(self.err_here("expected `)`"));
                    }
                    self.advance()?;
                    return Ok(Ex::func(f, &arg));
                }
                match name.as_str() {
                    "x" => Ok(Ex::x()),
                    "y" => Ok(Ex::y()),
                    "y1" | "y2" | "y3" => {
                        if self.allow_derivs {
                            Ok(Ex::var(match name.as_str() {
                                "y1" => Var::D1,
                                "y2" => Var::D2,
                                _ => Var::D3,
                            }))
                        } else {
                            Err(ParseError {
                                column: col,
                                message: format!(
                                    "derivative symbol `{}` is not allowed in a coefficient expression",
                                    name
                                ),
                            })
                        }
                    }
                    _ => {
                        if Func::from_name(&name).is_some() {
                            Err(ParseError {
                                column: col,
                                message: format!("function `{}` used without arguments", name),
                            })
                        } else if self.params.contains(&name) {
                            Ok(Ex(Arc::new(super::Expr::Var(Var::Param(Arc::from(
                                name.as_str(),
                            ))))))
                        } else {
                            Err(ParseError {
                                column: col,
                                message: format!(
                                    "unknown identifier `{}` (not x, y, a declared parameter, or a function)",
                                    name
                                ),
                            })
                        }
                    }
                }
            }
            _ => Err(self.err_here(&format!("expected expression, found {}", self.describe_tok()))),
        }
    }
}
