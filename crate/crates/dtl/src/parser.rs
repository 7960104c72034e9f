//! Recursive-descent parser for the concrete formula syntax.
//!
//! Grammar (ASCII forms, with accepted UTF-8 aliases in parentheses):
//!
//! ```text
//! formula := impl
//! impl    := or ( ("->" | "<->") impl )?      right-associative
//! or      := and ( "|" and )*                  (∨)
//! and     := unary ( "&" unary )*              (∧)
//! unary   := ("!" | "[]" | "<>" | "X" | "*") unary | atom
//! atom    := ident | "(" formula ")"
//! ident   := [a-z][a-zA-Z0-9_]*
//! ```
//!
//! Aliases: `¬` for `!`, `□` for `[]`, `◇` for `<>`, `○` for `X`,
//! `∗` for `*`, `∧`, `∨`, `→`.
//!
//! `a -> b`, `a | b`, `a <-> b` and `<>a` are desugared during parsing
//! to `!(a & !b)`, `!(!a & !b)`, `!(a & !b) & !(b & !a)` and `![]!a`,
//! so the returned tree only uses the five internal constructors.

use std::fmt;

use thiserror::Error;

use crate::formula::Formula;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Ident(String),
    Not,
    Box,
    Diamond,
    Next,
    Star,
    And,
    Or,
    Implies,
    Iff,
    LParen,
    RParen,
}

impl Token {
    fn describe(&self) -> String {
        match self {
            Token::Ident(name) => format!("identifier `{name}`"),
            Token::Not => "`!`".into(),
            Token::Box => "`[]`".into(),
            Token::Diamond => "`<>`".into(),
            Token::Next => "`X`".into(),
            Token::Star => "`*`".into(),
            Token::And => "`&`".into(),
            Token::Or => "`|`".into(),
            Token::Implies => "`->`".into(),
            Token::Iff => "`<->`".into(),
            Token::LParen => "`(`".into(),
            Token::RParen => "`)`".into(),
        }
    }
}

/// Syntax error with the byte offset of the offending input and the
/// set of tokens that would have been accepted there.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub struct ParseError {
    pub offset: usize,
    pub expected: Vec<String>,
    pub found: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            out,
            "syntax error at byte {}: found {}, expected {}",
            self.offset,
            self.found,
            self.expected.join(" or ")
        )
    }
}

struct Lexer<'a> {
    src: &'a str,
    tokens: Vec<(usize, Token)>,
}

fn lex(src: &str) -> Result<Vec<(usize, Token)>, ParseError> {
    let mut tokens = Vec::new();
    let bytes = src.as_bytes();
    let mut iter = src.char_indices().peekable();
    while let Some(&(at, ch)) = iter.peek() {
        match ch {
            c if c.is_whitespace() => {
                iter.next();
            }
            '!' | '¬' => {
                iter.next();
                tokens.push((at, Token::Not));
            }
            '□' => {
                iter.next();
                tokens.push((at, Token::Box));
            }
            '◇' => {
                iter.next();
                tokens.push((at, Token::Diamond));
            }
            '○' => {
                iter.next();
                tokens.push((at, Token::Next));
            }
            'X' => {
                iter.next();
                tokens.push((at, Token::Next));
            }
            '*' | '∗' => {
                iter.next();
                tokens.push((at, Token::Star));
            }
            '&' | '∧' => {
                iter.next();
                tokens.push((at, Token::And));
            }
            '|' | '∨' => {
                iter.next();
                tokens.push((at, Token::Or));
            }
            '→' => {
                iter.next();
                tokens.push((at, Token::Implies));
            }
            '(' => {
                iter.next();
                tokens.push((at, Token::LParen));
            }
            ')' => {
                iter.next();
                tokens.push((at, Token::RParen));
            }
            '[' => {
                iter.next();
                if iter.peek().map(|&(_, c)| c) == Some(']') {
                    iter.next();
                    tokens.push((at, Token::Box));
                } else {
                    return Err(unexpected_char(src, at, "`]`"));
                }
            }
            '<' => {
                iter.next();
                match iter.peek().map(|&(_, c)| c) {
                    Some('>') => {
                        iter.next();
                        tokens.push((at, Token::Diamond));
                    }
                    Some('-') => {
                        iter.next();
                        if iter.peek().map(|&(_, c)| c) == Some('>') {
                            iter.next();
                            tokens.push((at, Token::Iff));
                        } else {
                            return Err(unexpected_char(src, at, "`<->`"));
                        }
                    }
                    _ => return Err(unexpected_char(src, at, "`<>` or `<->`")),
                }
            }
            '-' => {
                iter.next();
                if iter.peek().map(|&(_, c)| c) == Some('>') {
                    iter.next();
                    tokens.push((at, Token::Implies));
                } else {
                    return Err(unexpected_char(src, at, "`->`"));
                }
            }
            c if c.is_ascii_lowercase() => {
                let start = at;
                let mut end = at + 1;
                iter.next();
                while let Some(&(i, c)) = iter.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        iter.next();
                        end = i + c.len_utf8();
                    } else {
                        break;
                    }
                }
                tokens.push((start, Token::Ident(src[start..end].to_string())));
                let _ = bytes;
            }
            other => {
                return Err(ParseError {
                    offset: at,
                    expected: vec!["a token".into()],
                    found: format!("character `{other}`"),
                })
            }
        }
    }
    Ok(tokens)
}

fn unexpected_char(src: &str, at: usize, expected: &str) -> ParseError {
    let found = src[at..].chars().next().map_or("end of input".to_string(), |c| {
        format!("character `{c}`")
    });
    ParseError {
        offset: at,
        expected: vec![expected.to_string()],
        found,
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    pos: usize,
}

const UNARY_EXPECTED: &[&str] = &[
    "`!`",
    "`[]`",
    "`<>`",
    "`X`",
    "`*`",
    "`(`",
    "an identifier",
];

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.lexer.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn advance(&mut self) -> Option<Token> {
        let t = self.lexer.tokens.get(self.pos).map(|(_, t)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn here(&self) -> usize {
        self.lexer
            .tokens
            .get(self.pos)
            .map(|&(at, _)| at)
            .unwrap_or(self.lexer.src.len())
    }

    fn found(&self) -> String {
        self.peek()
            .map(|t| t.describe())
            .unwrap_or_else(|| "end of input".into())
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        ParseError {
            offset: self.here(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.found(),
        }
    }

    fn formula(&mut self) -> Result<Formula, ParseError> {
        let left = self.or_level()?;
        match self.peek() {
            Some(Token::Implies) => {
                self.advance();
                let right = self.formula()?;
                Ok(Formula::implies(left, right))
            }
            Some(Token::Iff) => {
                self.advance();
                let right = self.formula()?;
                Ok(Formula::and(
                    Formula::implies(left.clone(), right.clone()),
                    Formula::implies(right, left),
                ))
            }
            _ => Ok(left),
        }
    }

    fn or_level(&mut self) -> Result<Formula, ParseError> {
        let mut left = self.and_level()?;
        while self.peek() == Some(&Token::Or) {
            self.advance();
            let right = self.and_level()?;
            left = Formula::or(left, right);
        }
        Ok(left)
    }

    fn and_level(&mut self) -> Result<Formula, ParseError> {
        let mut left = self.unary()?;
        while self.peek() == Some(&Token::And) {
            self.advance();
            let right = self.unary()?;
            left = Formula::and(left, right);
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        match self.peek() {
            Some(Token::Not) => {
                self.advance();
                Ok(Formula::not(self.unary()?))
            }
            Some(Token::Box) => {
                self.advance();
                Ok(Formula::boxed(self.unary()?))
            }
            Some(Token::Diamond) => {
                self.advance();
                Ok(Formula::diamond(self.unary()?))
            }
            Some(Token::Next) => {
                self.advance();
                Ok(Formula::next(self.unary()?))
            }
            Some(Token::Star) => {
                self.advance();
                Ok(Formula::henceforth(self.unary()?))
            }
            Some(Token::Ident(_)) => {
                let Some(Token::Ident(name)) = self.advance() else {
                    unreachable!()
                };
                Ok(Formula::var(name))
            }
            Some(Token::LParen) => {
                self.advance();
                let inner = self.formula()?;
                if self.peek() == Some(&Token::RParen) {
                    self.advance();
                    Ok(inner)
                } else {
                    Err(self.error(&["`)`", "`&`", "`|`", "`->`", "`<->`"]))
                }
            }
            _ => Err(self.error(UNARY_EXPECTED)),
        }
    }
}

/// Parses a formula; the result uses only the five internal
/// constructors (sugar is desugared eagerly).
pub fn parse(src: &str) -> Result<Formula, ParseError> {
    let tokens = lex(src)?;
    let mut parser = Parser {
        lexer: Lexer { src, tokens },
        pos: 0,
    };
    let f = parser.formula()?;
    if parser.peek().is_some() {
        return Err(parser.error(&["`&`", "`|`", "`->`", "`<->`", "end of input"]));
    }
    Ok(f)
}
