//! Recursive-descent parser. Precedence, tightest first: `^` (right
//! associative), unary minus, `*` `/`, `+` `-`. Identifiers must be function
//! names, the constants `pi`/`e`, or variables from the alphabet; anything
//! else is an `UnknownIdentifier` carrying its byte offset.

use crate::error::{Error, Result};

use super::{add, call, cnum, div, mul, neg, pow, sub, var, Alphabet, Expr, Func};

pub fn parse(source: &str, alphabet: &Alphabet) -> Result<Expr> {
    let mut p = Parser {
        bytes: source.as_bytes(),
        pos: 0,
        alphabet,
    };
    p.skip_ws();
    if p.at_end() {
        return Err(Error::Syntax {
            pos: 0,
            msg: "empty expression".into(),
        });
    }
    let e = p.expr()?;
    p.skip_ws();
    if !p.at_end() {
        return Err(Error::Syntax {
            pos: p.pos,
            msg: "unexpected trailing input".into(),
        });
    }
    Ok(e)
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    alphabet: &'a Alphabet,
}

impl<'a> Parser<'a> {
    fn at_end(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\n' | b'\r')) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            self.skip_ws();
            if self.eat(b'+') {
                lhs = add(lhs, self.term()?);
            } else if self.eat(b'-') {
                lhs = sub(lhs, self.term()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            self.skip_ws();
            if self.eat(b'*') {
                lhs = mul(lhs, self.unary()?);
            } else if self.eat(b'/') {
                lhs = div(lhs, self.unary()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        self.skip_ws();
        if self.eat(b'-') {
            Ok(neg(self.unary()?))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        self.skip_ws();
        if self.eat(b'^') {
            // exponent re-enters at unary level: right-associative, and
            // `a^-b` works without parentheses
            Ok(pow(base, self.unary()?))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        self.skip_ws();
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.skip_ws();
                if !self.eat(b')') {
                    return Err(Error::Syntax {
                        pos: self.pos,
                        msg: "expected `)`".into(),
                    });
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(c) => Err(Error::Syntax {
                pos: self.pos,
                msg: format!("unexpected character `{}`", c as char),
            }),
            None => Err(Error::Syntax {
                pos: self.pos,
                msg: "expected a value".into(),
            }),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.eat(b'.') {
            if !matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                return Err(Error::Syntax {
                    pos: self.pos,
                    msg: "expected digits after decimal point".into(),
                });
            }
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.pos += 1;
            }
        }
        // exponent part only when digits actually follow, so `2*e` works
        if matches!(self.peek(), Some(b'e' | b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii");
        match text.parse::<f64>() {
            Ok(v) => Ok(cnum(v)),
            Err(_) => Err(Error::Syntax {
                pos: start,
                msg: format!("bad number literal `{text}`"),
            }),
        }
    }

    fn identifier(&mut self) -> Result<Expr> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii");
        if let Some(f) = Func::from_name(name) {
            self.skip_ws();
            if !self.eat(b'(') {
                return Err(Error::Syntax {
                    pos: self.pos,
                    msg: format!("expected `(` after function `{name}`"),
                });
            }
            let arg = self.expr()?;
            self.skip_ws();
            if !self.eat(b')') {
                return Err(Error::Syntax {
                    pos: self.pos,
                    msg: "expected `)`".into(),
                });
            }
            return Ok(call(f, arg));
        }
        match name {
            "pi" => Ok(cnum(std::f64::consts::PI)),
            "e" => Ok(cnum(std::f64::consts::E)),
            _ => match self.alphabet.index_of(name) {
                Some(id) => Ok(var(id)),
                None => Err(Error::UnknownIdentifier {
                    name: name.to_string(),
                    pos: start,
                }),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar() -> Alphabet {
        Alphabet::scalar_vector(1)
    }

    #[test]
    fn parses_the_basic_lagrangian() {
        let a = scalar();
        let e = parse("v1^2 + z", &a).unwrap();
        let v1 = a.index_of("v1").unwrap();
        let z = a.index_of("z").unwrap();
        assert_eq!(e, add(pow(var(v1), cnum(2.0)), var(z)));
    }

    #[test]
    fn parses_calls_and_precedence() {
        let a = scalar();
        let t = a.index_of("t").unwrap();
        let x = a.index_of("x1").unwrap();
        assert_eq!(
            parse("sin(t)*x1", &a).unwrap(),
            mul(call(Func::Sin, var(t)), var(x))
        );
        // ^ binds tighter than unary minus, which binds tighter than *
        assert_eq!(
            parse("-t^2*x1", &a).unwrap(),
            mul(neg(pow(var(t), cnum(2.0))), var(x))
        );
        // right-associative exponent
        assert_eq!(
            parse("t^x1^2", &a).unwrap(),
            pow(var(t), pow(var(x), cnum(2.0)))
        );
    }

    #[test]
    fn trailing_operator_is_a_positioned_error() {
        let a = scalar();
        let err = parse("v1^2 -", &a).unwrap_err();
        match err {
            Error::Syntax { pos, .. } => assert_eq!(pos, 6),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_names_carry_their_offset() {
        let a = scalar();
        let err = parse("t + q7", &a).unwrap_err();
        match err {
            Error::UnknownIdentifier { name, pos } => {
                assert_eq!(name, "q7");
                assert_eq!(pos, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn numbers_and_constants() {
        let a = scalar();
        assert_eq!(parse("1.5e2", &a).unwrap(), cnum(150.0));
        assert_eq!(parse("2*pi", &a).unwrap(), cnum(2.0 * std::f64::consts::PI));
        assert_eq!(parse("e", &a).unwrap(), cnum(std::f64::consts::E));
        // `e` not followed by digits is not an exponent
        assert_eq!(parse("2*e", &a).unwrap(), cnum(2.0 * std::f64::consts::E));
        assert!(parse("2.", &a).is_err());
    }

    #[test]
    fn empty_and_malformed_inputs() {
        let a = scalar();
        assert!(matches!(parse("", &a), Err(Error::Syntax { pos: 0, .. })));
        assert!(matches!(parse("  ", &a), Err(Error::Syntax { .. })));
        assert!(parse("(t", &a).is_err());
        assert!(parse("t )", &a).is_err());
        assert!(parse("sin t", &a).is_err());
    }
}
