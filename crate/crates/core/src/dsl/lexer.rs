//! Tokenizer shared by every document kind.

use std::fmt;

use super::{ParseError, SourceSpan};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    /// `?name`, stored without the `?`.
    Var(String),
    Int(u64),
    Str(String),
    Punct(char),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "'{s}'"),
            Tok::Var(s) => write!(f, "'?{s}'"),
            Tok::Int(n) => write!(f, "'{n}'"),
            Tok::Str(s) => write!(f, "{s:?}"),
            Tok::Punct(c) => write!(f, "'{c}'"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub span: SourceSpan,
}

const PUNCT: &str = "{}()[]<>;,=:/+*";

pub fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut column) = (1usize, 1usize);
    let advance = |c: char, line: &mut usize, column: &mut usize| {
        if c == '\n' {
            *line += 1;
            *column = 1;
        } else {
            *column += 1;
        }
    };
    while let Some(&c) = chars.peek() {
        let span = SourceSpan::new(line, column);
        if c.is_whitespace() {
            chars.next();
            advance(c, &mut line, &mut column);
        } else if c == '#' {
            while let Some(&c) = chars.peek() {
                if c == '\n' {
                    break;
                }
                chars.next();
                advance(c, &mut line, &mut column);
            }
        } else if c.is_ascii_alphabetic() || c == '_' || c == '?' {
            let is_var = c == '?';
            if is_var {
                chars.next();
                advance(c, &mut line, &mut column);
            }
            let mut s = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    s.push(c);
                    chars.next();
                    advance(c, &mut line, &mut column);
                } else {
                    break;
                }
            }
            if s.is_empty() {
                return Err(ParseError::new(span, "expected a name after '?'"));
            }
            out.push(Token {
                tok: if is_var { Tok::Var(s) } else { Tok::Ident(s) },
                span,
            });
        } else if c.is_ascii_digit() {
            let mut s = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_ascii_digit() {
                    s.push(c);
                    chars.next();
                    advance(c, &mut line, &mut column);
                } else {
                    break;
                }
            }
            let n = s
                .parse()
                .map_err(|_| ParseError::new(span.clone(), format!("integer {s} out of range")))?;
            out.push(Token {
                tok: Tok::Int(n),
                span,
            });
        } else if c == '"' {
            chars.next();
            advance(c, &mut line, &mut column);
            let mut s = String::new();
            loop {
                let Some(c) = chars.next() else {
                    return Err(ParseError::new(span, "unterminated string"));
                };
                advance(c, &mut line, &mut column);
                match c {
                    '"' => break,
                    '\\' => {
                        let Some(e) = chars.next() else {
                            return Err(ParseError::new(span, "unterminated string"));
                        };
                        advance(e, &mut line, &mut column);
                        s.push(match e {
                            'n' => '\n',
                            't' => '\t',
                            '"' => '"',
                            '\\' => '\\',
                            other => {
                                return Err(ParseError::new(
                                    SourceSpan::new(line, column - 1),
                                    format!("unknown escape '\\{other}'"),
                                ))
                            }
                        });
                    }
                    c => s.push(c),
                }
            }
            out.push(Token {
                tok: Tok::Str(s),
                span,
            });
        } else if PUNCT.contains(c) {
            chars.next();
            advance(c, &mut line, &mut column);
            out.push(Token {
                tok: Tok::Punct(c),
                span,
            });
        } else {
            return Err(ParseError::new(span, format!("unexpected character '{c}'")));
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        span: SourceSpan::new(line, column),
    });
    Ok(out)
}

/// Quote a string for output, escaping what the lexer unescapes.
pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}
