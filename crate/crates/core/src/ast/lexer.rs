//! Token stream shared by the program, net, environment-script and
//! constraint parsers.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Char(char),
    Str(String),
    // punctuation and operators
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Dot,
    DotDot,
    ColonColon,
    ColonEq,
    Plus,
    PlusPlus,
    Minus,
    Eq,
    Lt,
    Le,
    Gt,
    LArrow,    // <-
    BangLt,    // <!
    Bang,      // !
    FatArrow,  // =>
    Pipe,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(n) => write!(f, "integer {n}"),
            Tok::Char(c) => write!(f, "character {c:?}"),
            Tok::Str(s) => write!(f, "string {s:?}"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::LBrace => write!(f, "`{{`"),
            Tok::RBrace => write!(f, "`}}`"),
            Tok::LBracket => write!(f, "`[`"),
            Tok::RBracket => write!(f, "`]`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Semi => write!(f, "`;`"),
            Tok::Dot => write!(f, "`.`"),
            Tok::DotDot => write!(f, "`..`"),
            Tok::ColonColon => write!(f, "`::`"),
            Tok::ColonEq => write!(f, "`:=`"),
            Tok::Plus => write!(f, "`+`"),
            Tok::PlusPlus => write!(f, "`++`"),
            Tok::Minus => write!(f, "`-`"),
            Tok::Eq => write!(f, "`=`"),
            Tok::Lt => write!(f, "`<`"),
            Tok::Le => write!(f, "`<=`"),
            Tok::Gt => write!(f, "`>`"),
            Tok::LArrow => write!(f, "`<-`"),
            Tok::BangLt => write!(f, "`<!`"),
            Tok::Bang => write!(f, "`!`"),
            Tok::FatArrow => write!(f, "`=>`"),
            Tok::Pipe => write!(f, "`|`"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexError {
    #[error("{span}: unexpected character {c:?}")]
    UnexpectedChar { c: char, span: Span },
    #[error("{span}: unterminated {what} literal")]
    Unterminated { what: &'static str, span: Span },
    #[error("{span}: invalid escape sequence `\\{c}`")]
    BadEscape { c: char, span: Span },
    #[error("{span}: integer literal out of range")]
    IntOverflow { span: Span },
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, LexError> {
    let mut out = Vec::new();
    let mut chars = src.chars().peekable();
    let mut line = 1usize;
    let mut col = 1usize;

    macro_rules! bump {
        () => {{
            let c = chars.next();
            if let Some(c) = c {
                if c == '\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
            }
            c
        }};
    }

    loop {
        let span = Span { line, col };
        let c = match chars.peek().copied() {
            Some(c) => c,
            None => break,
        };
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                bump!();
            }
            '/' => {
                bump!();
                if chars.peek() == Some(&'/') {
                    while let Some(&c) = chars.peek() {
                        if c == '\n' {
                            break;
                        }
                        bump!();
                    }
                } else {
                    return Err(LexError::UnexpectedChar { c: '/', span });
                }
            }
            '#' => {
                // env scripts use shell-style comments
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    bump!();
                }
            }
            '(' => {
                bump!();
                out.push(Token { tok: Tok::LParen, span });
            }
            ')' => {
                bump!();
                out.push(Token { tok: Tok::RParen, span });
            }
            '{' => {
                bump!();
                out.push(Token { tok: Tok::LBrace, span });
            }
            '}' => {
                bump!();
                out.push(Token { tok: Tok::RBrace, span });
            }
            '[' => {
                bump!();
                out.push(Token { tok: Tok::LBracket, span });
            }
            ']' => {
                bump!();
                out.push(Token { tok: Tok::RBracket, span });
            }
            ',' => {
                bump!();
                out.push(Token { tok: Tok::Comma, span });
            }
            ';' => {
                bump!();
                out.push(Token { tok: Tok::Semi, span });
            }
            '|' => {
                bump!();
                out.push(Token { tok: Tok::Pipe, span });
            }
            '.' => {
                bump!();
                if chars.peek() == Some(&'.') {
                    bump!();
                    out.push(Token { tok: Tok::DotDot, span });
                } else {
                    out.push(Token { tok: Tok::Dot, span });
                }
            }
            ':' => {
                bump!();
                match chars.peek() {
                    Some(':') => {
                        bump!();
                        out.push(Token { tok: Tok::ColonColon, span });
                    }
                    Some('=') => {
                        bump!();
                        out.push(Token { tok: Tok::ColonEq, span });
                    }
                    _ => return Err(LexError::UnexpectedChar { c: ':', span }),
                }
            }
            '+' => {
                bump!();
                if chars.peek() == Some(&'+') {
                    bump!();
                    out.push(Token { tok: Tok::PlusPlus, span });
                } else {
                    out.push(Token { tok: Tok::Plus, span });
                }
            }
            '-' => {
                bump!();
                out.push(Token { tok: Tok::Minus, span });
            }
            '=' => {
                bump!();
                if chars.peek() == Some(&'>') {
                    bump!();
                    out.push(Token { tok: Tok::FatArrow, span });
                } else {
                    out.push(Token { tok: Tok::Eq, span });
                }
            }
            '>' => {
                bump!();
                out.push(Token { tok: Tok::Gt, span });
            }
            '<' => {
                bump!();
                match chars.peek() {
                    Some('=') => {
                        bump!();
                        out.push(Token { tok: Tok::Le, span });
                    }
                    Some('-') => {
                        bump!();
                        out.push(Token { tok: Tok::LArrow, span });
                    }
                    Some('!') => {
                        bump!();
                        out.push(Token { tok: Tok::BangLt, span });
                    }
                    _ => out.push(Token { tok: Tok::Lt, span }),
                }
            }
            '!' => {
                bump!();
                out.push(Token { tok: Tok::Bang, span });
            }
            '\'' => {
                bump!();
                let c = match bump!() {
                    Some('\\') => match bump!() {
                        Some('n') => '\n',
                        Some('t') => '\t',
                        Some('\\') => '\\',
                        Some('\'') => '\'',
                        Some('"') => '"',
                        Some('0') => '\0',
                        Some(e) => return Err(LexError::BadEscape { c: e, span }),
                        None => return Err(LexError::Unterminated { what: "character", span }),
                    },
                    Some(c) => c,
                    None => return Err(LexError::Unterminated { what: "character", span }),
                };
                match bump!() {
                    Some('\'') => out.push(Token { tok: Tok::Char(c), span }),
                    _ => return Err(LexError::Unterminated { what: "character", span }),
                }
            }
            '"' => {
                bump!();
                let mut s = String::new();
                loop {
                    match bump!() {
                        Some('"') => break,
                        Some('\\') => match bump!() {
                            Some('n') => s.push('\n'),
                            Some('t') => s.push('\t'),
                            Some('\\') => s.push('\\'),
                            Some('\'') => s.push('\''),
                            Some('"') => s.push('"'),
                            Some(e) => return Err(LexError::BadEscape { c: e, span }),
                            None => {
                                return Err(LexError::Unterminated { what: "string", span })
                            }
                        },
                        Some(c) => s.push(c),
                        None => return Err(LexError::Unterminated { what: "string", span }),
                    }
                }
                out.push(Token { tok: Tok::Str(s), span });
            }
            c if c.is_ascii_digit() => {
                let mut n: i64 = 0;
                while let Some(&d) = chars.peek() {
                    if !d.is_ascii_digit() {
                        break;
                    }
                    bump!();
                    n = n
                        .checked_mul(10)
                        .and_then(|n| n.checked_add((d as u8 - b'0') as i64))
                        .ok_or(LexError::IntOverflow { span })?;
                }
                out.push(Token { tok: Tok::Int(n), span });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&d) = chars.peek() {
                    if !(d.is_ascii_alphanumeric() || d == '_') {
                        break;
                    }
                    bump!();
                    s.push(d);
                }
                out.push(Token { tok: Tok::Ident(s), span });
            }
            other => return Err(LexError::UnexpectedChar { c: other, span }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_tokens() {
        let toks = tokenize("let x := 'h' in putchar(x); y <- <!z>").unwrap();
        let kinds: Vec<&Tok> = toks.iter().map(|t| &t.tok).collect();
        assert!(matches!(kinds[0], Tok::Ident(s) if s == "let"));
        assert!(kinds.contains(&&Tok::ColonEq));
        assert!(kinds.contains(&&Tok::Char('h')));
        assert!(kinds.contains(&&Tok::LArrow));
        assert!(kinds.contains(&&Tok::BangLt));
        assert!(kinds.contains(&&Tok::Gt));
    }

    #[test]
    fn comments_are_skipped() {
        let toks = tokenize("x // rest\ny").unwrap();
        assert_eq!(toks.len(), 2);
        assert_eq!(toks[1].span.line, 2);
    }

    #[test]
    fn string_escapes() {
        let toks = tokenize(r#""a\n'b'""#).unwrap();
        assert_eq!(toks[0].tok, Tok::Str("a\n'b'".into()));
    }

    #[test]
    fn rejects_stray_colon() {
        assert!(tokenize("a : b").is_err());
    }
}
