//! Expression grammar:
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := base ('^' factor)?
//! base   := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')' | '-' base
//! ```
//!
//! `NUMBER` is an integer or decimal literal; integer fractions like `3/4`
//! reduce to exact rationals through the division operator. `IDENT` is
//! `[A-Za-z][A-Za-z0-9_]*`. Known functions: `sqrt` (desugared to a 1/2
//! power), `exp`, `log`, `sin`, `cos`.

use super::{Expr, Func};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::pow::Pow;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("syntax error at byte {at}: {msg}")]
    Syntax { at: usize, msg: String },
    #[error("unknown function '{name}' at byte {at}")]
    UnknownFunction { at: usize, name: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(BigRational),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Eof,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src: src.as_bytes(), pos: 0 }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn next_tok(&mut self) -> Result<(usize, Tok), ParseError> {
        self.skip_ws();
        let at = self.pos;
        if self.pos >= self.src.len() {
            return Ok((at, Tok::Eof));
        }
        let c = self.src[self.pos];
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'0'..=b'9' | b'.' => return self.lex_number(),
            c if c.is_ascii_alphabetic() => return self.lex_ident(),
            other => {
                return Err(ParseError::Syntax {
                    at,
                    msg: format!("unexpected character '{}'", other as char),
                })
            }
        };
        self.pos += 1;
        Ok((at, tok))
    }

    fn lex_number(&mut self) -> Result<(usize, Tok), ParseError> {
        let at = self.pos;
        let mut int_part = String::new();
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            int_part.push(self.src[self.pos] as char);
            self.pos += 1;
        }
        let mut frac_part = String::new();
        if self.pos < self.src.len() && self.src[self.pos] == b'.' {
            self.pos += 1;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                frac_part.push(self.src[self.pos] as char);
                self.pos += 1;
            }
            if int_part.is_empty() && frac_part.is_empty() {
                return Err(ParseError::Syntax { at, msg: "malformed number".into() });
            }
        } else if int_part.is_empty() {
            return Err(ParseError::Syntax { at, msg: "malformed number".into() });
        }
        let int_val: BigInt = if int_part.is_empty() {
            BigInt::from(0)
        } else {
            int_part.parse().expect("digits")
        };
        let mut q = BigRational::from_integer(int_val);
        if !frac_part.is_empty() {
            let digits: BigInt = frac_part.parse().expect("digits");
            let scale = BigInt::from(10u32).pow(frac_part.len() as u32);
            q += BigRational::new(digits, scale);
        }
        Ok((at, Tok::Num(q)))
    }

    fn lex_ident(&mut self) -> Result<(usize, Tok), ParseError> {
        let at = self.pos;
        let mut s = String::new();
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            s.push(self.src[self.pos] as char);
            self.pos += 1;
        }
        Ok((at, Tok::Ident(s)))
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    look: (usize, Tok),
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self, ParseError> {
        let mut lexer = Lexer::new(src);
        let look = lexer.next_tok()?;
        Ok(Parser { lexer, look })
    }

    fn bump(&mut self) -> Result<(usize, Tok), ParseError> {
        let next = self.lexer.next_tok()?;
        Ok(std::mem::replace(&mut self.look, next))
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut terms = vec![self.term()?];
        loop {
            match self.look.1 {
                Tok::Plus => {
                    self.bump()?;
                    terms.push(self.term()?);
                }
                Tok::Minus => {
                    self.bump()?;
                    terms.push(self.term()?.neg());
                }
                _ => break,
            }
        }
        Ok(Expr::add(terms))
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut factors = vec![self.factor()?];
        loop {
            match self.look.1 {
                Tok::Star => {
                    self.bump()?;
                    factors.push(self.factor()?);
                }
                Tok::Slash => {
                    self.bump()?;
                    factors.push(self.factor()?.recip());
                }
                _ => break,
            }
        }
        Ok(Expr::mul(factors))
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let base = self.base()?;
        if self.look.1 == Tok::Caret {
            self.bump()?;
            let exp = self.factor()?;
            return Ok(Expr::pow(base, exp));
        }
        Ok(base)
    }

    fn base(&mut self) -> Result<Expr, ParseError> {
        let (at, tok) = self.bump()?;
        match tok {
            Tok::Num(q) => Ok(Expr::big_rational(q)),
            Tok::Minus => Ok(self.base()?.neg()),
            Tok::LParen => {
                let e = self.expr()?;
                let (at2, close) = self.bump()?;
                if close != Tok::RParen {
                    return Err(ParseError::Syntax { at: at2, msg: "expected ')'".into() });
                }
                Ok(e)
            }
            Tok::Ident(name) => {
                if self.look.1 == Tok::LParen {
                    self.bump()?;
                    let arg = self.expr()?;
                    let (at2, close) = self.bump()?;
                    if close != Tok::RParen {
                        return Err(ParseError::Syntax { at: at2, msg: "expected ')'".into() });
                    }
                    match name.as_str() {
                        "sqrt" => Ok(Expr::sqrt(arg)),
                        "exp" => Ok(Expr::func(Func::Exp, arg)),
                        "log" => Ok(Expr::func(Func::Log, arg)),
                        "sin" => Ok(Expr::func(Func::Sin, arg)),
                        "cos" => Ok(Expr::func(Func::Cos, arg)),
                        _ => Err(ParseError::UnknownFunction { at, name }),
                    }
                } else {
                    Ok(Expr::sym(name))
                }
            }
            other => Err(ParseError::Syntax {
                at,
                msg: format!("unexpected token {other:?}"),
            }),
        }
    }
}

/// Parses an expression; see the module docs for the grammar.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let mut p = Parser::new(text)?;
    let e = p.expr()?;
    let (at, tok) = p.bump()?;
    if tok != Tok::Eof {
        return Err(ParseError::Syntax { at, msg: format!("trailing input {tok:?}") });
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symexpr::Node;

    #[test]
    fn flat_defining_function() {
        let e = parse("z - a*t - b").unwrap();
        assert_eq!(e, Expr::sym("z") - Expr::sym("a") * Expr::sym("t") - Expr::sym("b"));
        match e.node() {
            Node::Sum(xs) => assert_eq!(xs.len(), 3),
            _ => panic!("expected sum"),
        }
    }

    #[test]
    fn sqrt_desugars_to_half_power() {
        let e = parse("sqrt(zp)").unwrap();
        assert_eq!(e, Expr::pow(Expr::sym("zp"), Expr::rational(1, 2)));
    }

    #[test]
    fn exact_arithmetic_power_before_division() {
        assert_eq!(parse("2^3/4").unwrap(), Expr::int(2));
    }

    #[test]
    fn decimal_literals_are_exact() {
        assert_eq!(parse("1.5").unwrap(), Expr::rational(3, 2));
        assert_eq!(parse("0.125").unwrap(), Expr::rational(1, 8));
    }

    #[test]
    fn errors_carry_positions() {
        match parse("x + $") {
            Err(ParseError::Syntax { at, .. }) => assert_eq!(at, 4),
            other => panic!("expected syntax error, got {other:?}"),
        }
        match parse("tan(x)") {
            Err(ParseError::UnknownFunction { name, .. }) => assert_eq!(name, "tan"),
            other => panic!("expected unknown function, got {other:?}"),
        }
    }

    #[test]
    fn render_parse_round_trip() {
        for s in [
            "z - a*t - b",
            "x^(-7/2)",
            "sqrt(x + y)*sin(t)^2",
            "-2*bp^2*(zp - b)^(-1)",
            "1/2*x + 3/4",
        ] {
            let e = parse(s).unwrap();
            let back = parse(&e.render()).unwrap();
            assert_eq!(e, back, "round trip failed for {s}: rendered {}", e.render());
        }
    }
}
