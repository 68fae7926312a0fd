//! Recursive-descent parser for the textual LTL syntax.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! or      := and ( '|' and )*
//! and     := temporal ( '&' temporal )*
//! temporal:= unary ( ('U' | 'R') temporal )?        -- right associative
//! unary   := ('!' | 'X' | 'F' | 'G') unary | primary
//! primary := atom | 'true' | 'false' | '(' or ')'
//! atom    := [a-z][a-z0-9_]*
//! ```

use std::fmt;

use thiserror::Error;

use super::Formula;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    /// Byte offset of the offending token.
    pub offset: usize,
    pub expected: Vec<&'static str>,
    /// The token found instead, or `None` at end of input.
    pub found: Option<String>,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let found = self.found.as_deref().unwrap_or("end of input");
        write!(
            f,
            "syntax error at byte {}: expected one of [{}], found {found}",
            self.offset,
            self.expected.join(", ")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Atom(String),
    True,
    False,
    Not,
    Next,
    Eventually,
    Always,
    And,
    Or,
    Until,
    Release,
    LParen,
    RParen,
}

impl Tok {
    fn text(&self) -> String {
        match self {
            Tok::Atom(a) => a.clone(),
            Tok::True => "true".into(),
            Tok::False => "false".into(),
            Tok::Not => "!".into(),
            Tok::Next => "X".into(),
            Tok::Eventually => "F".into(),
            Tok::Always => "G".into(),
            Tok::And => "&".into(),
            Tok::Or => "|".into(),
            Tok::Until => "U".into(),
            Tok::Release => "R".into(),
            Tok::LParen => "(".into(),
            Tok::RParen => ")".into(),
        }
    }
}

const OPERAND: &[&str] = &["atom", "true", "false", "(", "!", "X", "F", "G"];

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let tok = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'!' => Tok::Not,
            b'&' => Tok::And,
            b'|' => Tok::Or,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'X' => Tok::Next,
            b'F' => Tok::Eventually,
            b'G' => Tok::Always,
            b'U' => Tok::Until,
            b'R' => Tok::Release,
            b'a'..=b'z' => {
                let mut j = i + 1;
                while j < bytes.len()
                    && (bytes[j].is_ascii_lowercase() || bytes[j].is_ascii_digit() || bytes[j] == b'_')
                {
                    j += 1;
                }
                let word = &text[i..j];
                i = j;
                out.push((
                    start,
                    match word {
                        "true" => Tok::True,
                        "false" => Tok::False,
                        _ => Tok::Atom(word.to_string()),
                    },
                ));
                continue;
            }
            _ => {
                let found = text[i..].chars().next().map(|c| c.to_string());
                return Err(ParseError {
                    offset: i,
                    expected: OPERAND.iter().copied().chain(["&", "|", "U", "R", ")"]).collect(),
                    found,
                });
            }
        };
        i += 1;
        out.push((start, tok));
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn error(&self, expected: &[&'static str]) -> ParseError {
        let (offset, found) = match self.toks.get(self.pos) {
            Some((o, t)) => (*o, Some(t.text())),
            None => (self.end, None),
        };
        ParseError { offset, expected: expected.to_vec(), found }
    }

    fn or(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.and()?;
        while self.peek() == Some(&Tok::Or) {
            self.pos += 1;
            lhs = Formula::or(lhs, self.and()?);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.temporal()?;
        while self.peek() == Some(&Tok::And) {
            self.pos += 1;
            lhs = Formula::and(lhs, self.temporal()?);
        }
        Ok(lhs)
    }

    fn temporal(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.unary()?;
        match self.peek() {
            Some(Tok::Until) => {
                self.pos += 1;
                Ok(Formula::until(lhs, self.temporal()?))
            }
            Some(Tok::Release) => {
                self.pos += 1;
                Ok(Formula::release(lhs, self.temporal()?))
            }
            _ => Ok(lhs),
        }
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        let wrap: fn(Formula) -> Formula = match self.peek() {
            Some(Tok::Not) => Formula::not,
            Some(Tok::Next) => Formula::next,
            Some(Tok::Eventually) => Formula::eventually,
            Some(Tok::Always) => Formula::always,
            _ => return self.primary(),
        };
        self.pos += 1;
        Ok(wrap(self.unary()?))
    }

    fn primary(&mut self) -> Result<Formula, ParseError> {
        let f = match self.peek() {
            Some(Tok::Atom(a)) => Formula::Atom(a.clone()),
            Some(Tok::True) => Formula::True,
            Some(Tok::False) => Formula::False,
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.or()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(self.error(&["&", "|", "U", "R", ")"]));
                }
                self.pos += 1;
                return Ok(inner);
            }
            _ => return Err(self.error(OPERAND)),
        };
        self.pos += 1;
        Ok(f)
    }
}

/// Parses an LTL formula such as `F G all_obj_in_r2` or `p U (q | X p)`.
pub fn parse_formula(text: &str) -> Result<Formula, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, end: text.len() };
    let f = p.or()?;
    if p.pos != p.toks.len() {
        return Err(p.error(&["&", "|", "U", "R", "end of input"]));
    }
    Ok(f)
}

impl std::str::FromStr for Formula {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_formula(s)
    }
}
