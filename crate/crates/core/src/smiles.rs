//! SMILES strings and atom-level tokenization.
//!
//! Tokens are the smallest units the substructure miner works with:
//!
//! - bracket expressions such as `[N+]`, `[C@@H]` or `[nH]` are one token,
//! - the two-letter organic atoms `Cl` and `Br` are one token,
//! - `%nn` ring labels are one token,
//! - every other accepted character is its own token.
//!
//! Concatenating the tokens of a string always gives back the string.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Lexical class of an atom-level token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    BracketAtom,
    TwoLetterAtom,
    Atom,
    Bond,
    RingDigit,
    RingLabel,
    Branch,
    Dot,
}

impl TokenKind {
    /// Classify a single token produced by [`atom_tokenize`].
    pub fn of(token: &str) -> Option<TokenKind> {
        let bytes = token.as_bytes();
        match bytes {
            [b'[', .., b']'] if bytes.len() >= 3 => Some(TokenKind::BracketAtom),
            b"Cl" | b"Br" => Some(TokenKind::TwoLetterAtom),
            [b'%', a, b] if a.is_ascii_digit() && b.is_ascii_digit() => Some(TokenKind::RingLabel),
            [c] => single_char_kind(*c),
            _ => None,
        }
    }
}

fn single_char_kind(c: u8) -> Option<TokenKind> {
    match c {
        b'B' | b'C' | b'N' | b'O' | b'P' | b'S' | b'F' | b'I' | b'b' | b'c' | b'n' | b'o'
        | b'p' | b's' | b'*' => Some(TokenKind::Atom),
        b'-' | b'=' | b'#' | b'$' | b':' | b'/' | b'\\' => Some(TokenKind::Bond),
        b'0'..=b'9' => Some(TokenKind::RingDigit),
        b'(' | b')' => Some(TokenKind::Branch),
        b'.' => Some(TokenKind::Dot),
        _ => None,
    }
}

/// A syntactically valid SMILES string.
///
/// Validation is lexical only: the alphabet, bracket and parenthesis balance.
/// Valence and aromaticity are not checked.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SmilesString(Arc<str>);

impl SmilesString {
    pub fn parse(text: &str) -> Result<Self> {
        scan(text)?;
        Ok(SmilesString(Arc::from(text)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn tokenize(&self) -> AtomTokenSequence {
        let tokens = scan(&self.0)
            .expect("SmilesString is validated on construction")
            .into_iter()
            .map(|(start, end)| self.0[start..end].to_string())
            .collect();
        AtomTokenSequence {
            tokens,
            source: self.clone(),
        }
    }
}

impl fmt::Debug for SmilesString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Smiles({:?})", &*self.0)
    }
}

impl fmt::Display for SmilesString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for SmilesString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SmilesString::parse(s)
    }
}

/// Atom-level tokens of a SMILES string, in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtomTokenSequence {
    pub tokens: Vec<String>,
    pub source: SmilesString,
}

impl AtomTokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn concat(&self) -> String {
        self.tokens.concat()
    }
}

/// Parse and tokenize in one step.
pub fn atom_tokenize(text: &str) -> Result<AtomTokenSequence> {
    Ok(SmilesString::parse(text)?.tokenize())
}

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}

/// Split a token string that need not be a whole molecule (for example a
/// mined fragment such as `C(=O`) into atom-level tokens. Branch balance is
/// not checked.
pub fn lex_fragment(text: &str) -> Result<Vec<&str>> {
    Ok(lex(text, false)?
        .into_iter()
        .map(|(a, b)| &text[a..b])
        .collect())
}

fn scan(text: &str) -> Result<Vec<(usize, usize)>> {
    lex(text, true)
}

/// Lex `text` into token byte ranges, validating as we go.
fn lex(text: &str, balanced: bool) -> Result<Vec<(usize, usize)>> {
    if text.is_empty() {
        return Err(parse_err(0, "empty SMILES string"));
    }
    let bytes = text.as_bytes();
    let mut spans = Vec::with_capacity(bytes.len());
    let mut open_branches: Vec<usize> = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let end = match c {
            b'[' => {
                let close = bytes[i + 1..]
                    .iter()
                    .position(|&b| b == b']' || b == b'[')
                    .map(|p| p + i + 1);
                match close {
                    Some(j) if bytes[j] == b']' => {
                        if j == i + 1 {
                            return Err(parse_err(i, "empty bracket atom"));
                        }
                        if let Some(bad) = bytes[i + 1..j]
                            .iter()
                            .position(|b| !b.is_ascii_graphic())
                        {
                            return Err(parse_err(
                                i + 1 + bad,
                                "invalid character inside bracket atom",
                            ));
                        }
                        j + 1
                    }
                    Some(j) => return Err(parse_err(j, "nested `[` inside bracket atom")),
                    None => return Err(parse_err(i, "unclosed `[`")),
                }
            }
            b']' => return Err(parse_err(i, "`]` without matching `[`")),
            b'C' if bytes.get(i + 1) == Some(&b'l') => i + 2,
            b'B' if bytes.get(i + 1) == Some(&b'r') => i + 2,
            b'%' => match (bytes.get(i + 1), bytes.get(i + 2)) {
                (Some(a), Some(b)) if a.is_ascii_digit() && b.is_ascii_digit() => i + 3,
                _ => return Err(parse_err(i, "`%` must be followed by two digits")),
            },
            b'(' => {
                open_branches.push(i);
                i + 1
            }
            b')' => {
                if open_branches.pop().is_none() && balanced {
                    return Err(parse_err(i, "`)` without matching `(`"));
                }
                i + 1
            }
            _ if single_char_kind(c).is_some() => i + 1,
            _ => {
                let ch = text[i..].chars().next().unwrap_or('?');
                return Err(parse_err(i, format!("character {ch:?} is not in the SMILES alphabet")));
            }
        };
        spans.push((i, end));
        i = end;
    }
    if let Some(&open) = open_branches.first().filter(|_| balanced) {
        return Err(parse_err(open, "unclosed `(`"));
    }
    Ok(spans)
}
