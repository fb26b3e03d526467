//! Basename glob patterns: `*`, `?`, `[...]` classes (`!`/`^` negation,
//! `a-z` ranges, leading `]` literal) and `\` escapes.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Char(char),
    Any,
    Star,
    Class { negated: bool, ranges: Vec<(char, char)> },
}

impl Token {
    fn accepts(&self, c: char) -> bool {
        match self {
            Token::Char(x) => *x == c,
            Token::Any => true,
            Token::Star => unreachable!("stars are handled by the matcher"),
            Token::Class { negated, ranges } => {
                ranges.iter().any(|&(lo, hi)| lo <= c && c <= hi) != *negated
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobError {
    pub reason: String,
}

impl fmt::Display for GlobError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.reason)
    }
}

impl std::error::Error for GlobError {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobPattern {
    tokens: Vec<Token>,
}

impl GlobPattern {
    pub fn new(pattern: &str) -> Result<Self, GlobError> {
        let err = |reason: &str| GlobError {
            reason: reason.to_string(),
        };
        let mut tokens = Vec::new();
        let mut chars = pattern.chars().peekable();
        while let Some(c) = chars.next() {
            let token = match c {
                '*' => {
                    if tokens.last() == Some(&Token::Star) {
                        continue;
                    }
                    Token::Star
                }
                '?' => Token::Any,
                '\\' => Token::Char(chars.next().ok_or_else(|| err("dangling `\\` at end of pattern"))?),
                '[' => {
                    let negated = matches!(chars.peek(), Some('!' | '^'));
                    if negated {
                        chars.next();
                    }
                    let mut ranges = Vec::new();
                    let mut first = true;
                    loop {
                        let lo = match chars.next() {
                            None => return Err(err("unterminated character class")),
                            Some(']') if !first => break,
                            Some('\\') => chars.next().ok_or_else(|| err("unterminated character class"))?,
                            Some(c) => c,
                        };
                        first = false;
                        let mut lookahead = chars.clone();
                        if lookahead.next() == Some('-') && !matches!(lookahead.peek(), Some(']') | None) {
                            chars.next();
                            let hi = match chars.next() {
                                Some('\\') => chars.next().ok_or_else(|| err("unterminated character class"))?,
                                Some(c) => c,
                                None => return Err(err("unterminated character class")),
                            };
                            if hi < lo {
                                return Err(err("character class range is reversed"));
                            }
                            ranges.push((lo, hi));
                        } else {
                            ranges.push((lo, lo));
                        }
                    }
                    Token::Class { negated, ranges }
                }
                c => Token::Char(c),
            };
            tokens.push(token);
        }
        Ok(GlobPattern { tokens })
    }

    pub fn matches(&self, name: &str) -> bool {
        let name: Vec<char> = name.chars().collect();
        let toks = &self.tokens;
        let (mut p, mut n) = (0, 0);
        // Position of the last star and the name index it is currently absorbing up to.
        let mut resume: Option<(usize, usize)> = None;
        while n < name.len() {
            if p < toks.len() {
                if toks[p] == Token::Star {
                    resume = Some((p, n));
                    p += 1;
                    continue;
                }
                if toks[p].accepts(name[n]) {
                    p += 1;
                    n += 1;
                    continue;
                }
            }
            match resume {
                Some((star, absorbed)) => {
                    p = star + 1;
                    n = absorbed + 1;
                    resume = Some((star, absorbed + 1));
                }
                None => return false,
            }
        }
        toks[p..].iter().all(|t| *t == Token::Star)
    }
}
