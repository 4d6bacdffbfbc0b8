//! The shared bracket syntax: `(head,item,item,...)` where items are lists
//! or bare atoms. Whitespace between tokens is ignored.

use super::ParseError;
use super::ParseErrorKind::*;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum SExpr<'a> {
    Atom { text: &'a str, at: usize },
    List { items: Vec<SExpr<'a>>, at: usize },
}

impl<'a> SExpr<'a> {
    pub fn offset(&self) -> usize {
        match self {
            SExpr::Atom { at, .. } | SExpr::List { at, .. } => *at,
        }
    }
}

/// Nesting limit; deeper input is rejected instead of overflowing the stack.
const MAX_NESTING: usize = 256;

pub(crate) fn parse(text: &str) -> Result<SExpr<'_>, ParseError> {
    let mut p = Parser { src: text, pos: 0, depth: 0 };
    p.skip_ws();
    let expr = p.list()?;
    p.skip_ws();
    if p.pos < text.len() {
        return Err(ParseError::new(p.pos, TrailingInput));
    }
    Ok(expr)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    depth: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<u8> {
        self.src.as_bytes().get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\n' | b'\r')) {
            self.pos += 1;
        }
    }

    fn list(&mut self) -> Result<SExpr<'a>, ParseError> {
        let at = self.pos;
        match self.peek() {
            Some(b'(') => self.pos += 1,
            Some(_) => return Err(ParseError::new(at, Expected("'('"))),
            None => return Err(ParseError::new(at, UnexpectedEnd)),
        }
        self.depth += 1;
        if self.depth > MAX_NESTING {
            return Err(ParseError::new(at, TooDeep));
        }
        let mut items = vec![self.item()?];
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b',') => {
                    self.pos += 1;
                    items.push(self.item()?);
                }
                Some(b')') => {
                    self.pos += 1;
                    self.depth -= 1;
                    return Ok(SExpr::List { items, at });
                }
                Some(_) => return Err(ParseError::new(self.pos, Expected("',' or ')'"))),
                None => return Err(ParseError::new(self.pos, UnexpectedEnd)),
            }
        }
    }

    fn item(&mut self) -> Result<SExpr<'a>, ParseError> {
        self.skip_ws();
        match self.peek() {
            Some(b'(') => self.list(),
            Some(c) if c.is_ascii_alphanumeric() => {
                let start = self.pos;
                while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric()) {
                    self.pos += 1;
                }
                Ok(SExpr::Atom { text: &self.src[start..self.pos], at: start })
            }
            Some(b')') => Err(ParseError::new(self.pos, Expected("an item"))),
            Some(_) => Err(ParseError::new(self.pos, UnexpectedChar)),
            None => Err(ParseError::new(self.pos, UnexpectedEnd)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_and_atoms() {
        let e = parse("(p, (e))").unwrap();
        match e {
            SExpr::List { items, at: 0 } => {
                assert_eq!(items[0], SExpr::Atom { text: "p", at: 1 });
                assert!(matches!(items[1], SExpr::List { at: 4, .. }));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn errors_carry_offsets() {
        assert_eq!(parse("(p,(e)").unwrap_err(), ParseError::new(6, UnexpectedEnd));
        assert_eq!(parse("(p,(e)))").unwrap_err(), ParseError::new(7, TrailingInput));
        assert_eq!(parse("").unwrap_err(), ParseError::new(0, UnexpectedEnd));
        assert_eq!(parse("(p,#)").unwrap_err(), ParseError::new(3, UnexpectedChar));
        let deep = "(".repeat(400);
        assert_eq!(parse(&deep).unwrap_err().kind, TooDeep);
    }
}
