//! Lexer and recursive-descent parser for predicate text.

use thiserror::Error;

use super::{CompareOp, Literal, Predicate};

#[derive(Debug, Error, PartialEq)]
#[error("syntax error at byte {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

fn err<T>(offset: usize, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        offset,
        message: message.into(),
    })
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Str(String),
    And,
    Or,
    Not,
    Op(CompareOp),
    LParen,
    RParen,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Number(x) => format!("number `{x}`"),
            Tok::Str(s) => format!("string '{s}'"),
            Tok::And => "`AND`".into(),
            Tok::Or => "`OR`".into(),
            Tok::Not => "`NOT`".into(),
            Tok::Op(op) => format!("`{op}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
        }
    }
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.' | b'+')
}

/// A word is a number when it looks like one from its first byte and the
/// whole word parses as a finite float; everything else is a keyword or an
/// identifier. Words like "NaN" or "inf" therefore stay identifiers.
fn classify_word(word: &str, offset: usize) -> Result<Tok, ParseError> {
    let first = word.as_bytes()[0];
    if matches!(first, b'0'..=b'9' | b'.' | b'+' | b'-') {
        if let Some(x) = word.parse::<f64>().ok().filter(|x| x.is_finite()) {
            return Ok(Tok::Number(x));
        }
        if !first.is_ascii_digit() {
            return err(offset, format!("`{word}` is not a valid number"));
        }
        // Digit-initial but not numeric: fall through to an identifier,
        // since column names may contain digits.
    }
    Ok(match word {
        w if w.eq_ignore_ascii_case("and") => Tok::And,
        w if w.eq_ignore_ascii_case("or") => Tok::Or,
        w if w.eq_ignore_ascii_case("not") => Tok::Not,
        _ => Tok::Ident(word.to_owned()),
    })
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'(' => {
                toks.push((Tok::LParen, i));
                i += 1;
            }
            b')' => {
                toks.push((Tok::RParen, i));
                i += 1;
            }
            b'<' | b'>' => {
                let eq = bytes.get(i + 1) == Some(&b'=');
                let op = match (b, eq) {
                    (b'<', false) => CompareOp::Lt,
                    (b'<', true) => CompareOp::Le,
                    (b'>', false) => CompareOp::Gt,
                    (b'>', true) => CompareOp::Ge,
                    _ => unreachable!(),
                };
                toks.push((Tok::Op(op), i));
                i += if eq { 2 } else { 1 };
            }
            b'=' | b'!' => {
                if bytes.get(i + 1) != Some(&b'=') {
                    return err(
                        i,
                        format!(
                            "unexpected `{}`; comparison operators are <, <=, >, >=, ==, !=",
                            b as char
                        ),
                    );
                }
                let op = if b == b'=' {
                    CompareOp::Eq
                } else {
                    CompareOp::Ne
                };
                toks.push((Tok::Op(op), i));
                i += 2;
            }
            b'\'' | b'"' => {
                let close = bytes[i + 1..].iter().position(|&c| c == b);
                match close {
                    Some(len) => {
                        toks.push((Tok::Str(text[i + 1..i + 1 + len].to_owned()), i));
                        i += len + 2;
                    }
                    None => return err(i, "unterminated string literal"),
                }
            }
            _ if is_word_byte(b) => {
                let start = i;
                while i < bytes.len() && is_word_byte(bytes[i]) {
                    i += 1;
                }
                toks.push((classify_word(&text[start..i], start)?, start));
            }
            _ => {
                let ch = text[i..].chars().next().unwrap();
                return err(i, format!("unexpected character `{ch}`"));
            }
        }
    }
    Ok(toks)
}

struct Parser<'a> {
    toks: &'a [(Tok, usize)],
    pos: usize,
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(_, o)| *o)
    }

    fn bump(&mut self) -> Option<&Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t);
        self.pos += 1;
        t
    }

    fn expected(&self, what: &str) -> ParseError {
        let found = match self.toks.get(self.pos) {
            Some((t, _)) => format!("found {}", t.describe()),
            None => "found end of input".into(),
        };
        ParseError {
            offset: self.offset(),
            message: format!("expected {what}, {found}"),
        }
    }

    fn expr(&mut self) -> Result<Predicate, ParseError> {
        let mut node = self.term()?;
        while self.peek() == Some(&Tok::Or) {
            self.bump();
            node = Predicate::or(node, self.term()?);
        }
        Ok(node)
    }

    fn term(&mut self) -> Result<Predicate, ParseError> {
        let mut node = self.factor()?;
        while self.peek() == Some(&Tok::And) {
            self.bump();
            node = Predicate::and(node, self.factor()?);
        }
        Ok(node)
    }

    fn factor(&mut self) -> Result<Predicate, ParseError> {
        match self.peek() {
            Some(Tok::Not) => {
                self.bump();
                Ok(Predicate::not(self.factor()?))
            }
            Some(Tok::LParen) => {
                self.bump();
                let inner = self.expr()?;
                match self.peek() {
                    Some(Tok::RParen) => {
                        self.bump();
                        Ok(inner)
                    }
                    _ => Err(self.expected("`)`")),
                }
            }
            Some(Tok::Ident(_)) => self.comparison(),
            _ => Err(self.expected("`NOT`, `(`, or a column name")),
        }
    }

    fn comparison(&mut self) -> Result<Predicate, ParseError> {
        let column = match self.bump() {
            Some(Tok::Ident(name)) => name.clone(),
            _ => unreachable!("caller checked for an identifier"),
        };
        let op = match self.peek() {
            Some(&Tok::Op(op)) => {
                self.bump();
                op
            }
            _ => return Err(self.expected("a comparison operator")),
        };
        let literal = match self.peek() {
            Some(Tok::Number(x)) => Literal::Number(*x),
            Some(Tok::Str(s)) => Literal::Str(s.clone()),
            _ => return Err(self.expected("a number or quoted string")),
        };
        self.bump();
        Ok(Predicate::cmp(column, op, literal))
    }
}

/// Parse predicate text into an AST. Errors carry the byte offset of the
/// offending token and what was expected there; no partial AST escapes.
pub fn parse_predicate(text: &str) -> Result<Predicate, ParseError> {
    let toks = tokenize(text)?;
    let mut parser = Parser {
        toks: &toks,
        pos: 0,
        end: text.len(),
    };
    if toks.is_empty() {
        return Err(parser.expected("a predicate"));
    }
    let pred = parser.expr()?;
    if parser.peek().is_some() {
        return Err(parser.expected("`AND`, `OR`, or end of input"));
    }
    Ok(pred)
}
