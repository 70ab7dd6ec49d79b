//! Surface syntax: parser and desugarer.
//!
//! The surface language is parsed into a small sugared tree which is then
//! desugared into [`CoreExpr`]. Desugaring definitions:
//!
//! - `let x := e in e'` is `(fun (x) { e' })(e)`; `e; e'` is a `let` with a
//!   fresh variable.
//! - `true` is `inl(())`, `false` is `inr(())`; `if e then e1 else e2` is
//!   `cases(e, fun (_) { e1 }, fun (_) { e2 })`; a missing `else` means
//!   `else ()`.
//! - `nil` is `inl(())`, `cons(h, t)` is `inr((h, t))`; `[a, b]` and string
//!   literals build cons chains; `match` expands to `cases` with pair
//!   projections substituted for the arm binders.
//! - `loop { e }` and recursive `fn f(x) { e }` expand through a
//!   call-by-value fixed-point combinator.
//! - Two-parameter functions take a single pair argument; the body sees
//!   `fst`/`snd` projections of it. Calls with two arguments build the pair.
//! - Record literals `{a := e1; b := e2}` become nested pairs in field-name
//!   order, and `r.a` becomes the matching projection chain. Field names are
//!   resolved against the record shapes appearing in the program; a field
//!   that appears in no shape, or in several, is a parse error.
//! - `not e` is `if e then false else true`; `length(e)` applies a
//!   recursively defined list-length function.
//!
//! I/O tags are not part of the grammar: an application `name(args)` where
//! `name` is not in scope is an I/O call if `name` is a declared tag and an
//! error otherwise.

use std::collections::BTreeSet;
use std::sync::Arc;

use thiserror::Error;

use super::lexer::{tokenize, LexError, Span, Tok, Token};
use super::{CoreExpr, PrimOp, Value};
use crate::prophecy::{Constraint, SeqLit};

/// Declared I/O tag names, normally taken from the net file.
pub type TagSet = BTreeSet<String>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error("{span}: expected {expected}, found {found}")]
    Unexpected {
        expected: String,
        found: String,
        span: Span,
    },
    #[error("unexpected end of input: expected {expected}")]
    Eof { expected: String },
    #[error("{span}: `{name}` is not a declared I/O tag and is not in scope")]
    UndeclaredTag { name: String, span: Span },
    #[error("{span}: unbound variable `{name}`")]
    UnboundVariable { name: String, span: Span },
    #[error("{span}: `{name}` is a reserved word")]
    Reserved { name: String, span: Span },
    #[error("{span}: {msg}")]
    Invalid { msg: String, span: Span },
}

const KEYWORDS: &[&str] = &[
    "let", "in", "fn", "fun", "if", "then", "else", "loop", "match", "nil", "cons", "true",
    "false", "not", "fork", "ref", "assert", "cases", "fst", "snd", "inl", "inr", "cas",
    "create_pvar", "cpvar", "assign_pvar", "length", "unit", "any", "interleave", "prefix",
];

fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

/// Sugared surface tree. Every node carries the span of its first token.
#[derive(Debug, Clone)]
struct Sur {
    node: SurNode,
    span: Span,
}

#[derive(Debug, Clone)]
enum SurNode {
    Unit,
    Char(char),
    Int(i64),
    Str(String),
    List(Vec<Sur>),
    True,
    False,
    Nil,
    Var(String),
    Let(String, Box<Sur>, Box<Sur>),
    FnDecl {
        name: String,
        params: Vec<String>,
        body: Box<Sur>,
        rest: Box<Sur>,
    },
    Fun {
        params: Vec<String>,
        body: Box<Sur>,
    },
    If(Box<Sur>, Box<Sur>, Option<Box<Sur>>),
    Loop(Box<Sur>),
    Match {
        scrutinee: Box<Sur>,
        nil_arm: Box<Sur>,
        cons_arm: (String, String, Box<Sur>),
    },
    Seq(Box<Sur>, Box<Sur>),
    Not(Box<Sur>),
    Deref(Box<Sur>),
    AtomicDeref(Box<Sur>),
    Assign(Box<Sur>, Box<Sur>),
    Prim(PrimOp, Box<Sur>, Box<Sur>),
    Pair(Box<Sur>, Box<Sur>),
    Record(Vec<(String, Sur)>),
    Field(Box<Sur>, String),
    Call(Box<Sur>, Vec<Sur>),
    Inl(Box<Sur>),
    Inr(Box<Sur>),
    Cons(Box<Sur>, Box<Sur>),
    Fst(Box<Sur>),
    Snd(Box<Sur>),
    Cases(Box<Sur>, Box<Sur>, Box<Sur>),
    Assert(Box<Sur>),
    Ref(Box<Sur>),
    Fork(Box<Sur>),
    Cas(Box<Sur>, Box<Sur>, Box<Sur>),
    CreatePvar(Constraint),
    AssignPvar(Box<Sur>, Box<Sur>),
    Length(Box<Sur>),
}

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
    /// Field-name sets of all record literals seen, for projection lookup.
    shapes: BTreeSet<Vec<String>>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.pos + 1).map(|t| &t.tok)
    }

    fn span(&self) -> Span {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map(|t| t.span)
            .unwrap_or(Span { line: 1, col: 1 })
    }

    fn next(&mut self, expected: &str) -> Result<Token, ParseError> {
        let t = self
            .toks
            .get(self.pos)
            .cloned()
            .ok_or_else(|| ParseError::Eof {
                expected: expected.to_string(),
            })?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, tok: Tok) -> Result<Span, ParseError> {
        let t = self.next(&tok.to_string())?;
        if t.tok == tok {
            Ok(t.span)
        } else {
            Err(ParseError::Unexpected {
                expected: tok.to_string(),
                found: t.tok.to_string(),
                span: t.span,
            })
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if let Some(Tok::Ident(s)) = self.peek() {
            if s == w {
                self.pos += 1;
                return true;
            }
        }
        false
    }

    fn expect_word(&mut self, w: &str) -> Result<(), ParseError> {
        let t = self.next(&format!("`{w}`"))?;
        match &t.tok {
            Tok::Ident(s) if s == w => Ok(()),
            other => Err(ParseError::Unexpected {
                expected: format!("`{w}`"),
                found: other.to_string(),
                span: t.span,
            }),
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Span), ParseError> {
        let t = self.next(what)?;
        match t.tok {
            Tok::Ident(s) => {
                if is_keyword(&s) {
                    Err(ParseError::Reserved { name: s, span: t.span })
                } else {
                    Ok((s, t.span))
                }
            }
            other => Err(ParseError::Unexpected {
                expected: what.to_string(),
                found: other.to_string(),
                span: t.span,
            }),
        }
    }

    fn expr(&mut self) -> Result<Sur, ParseError> {
        let span = self.span();
        if self.eat_word("let") {
            let (x, _) = self.ident("binder")?;
            self.expect(Tok::ColonEq)?;
            let rhs = self.expr()?;
            self.expect_word("in")?;
            let body = self.expr()?;
            return Ok(Sur {
                node: SurNode::Let(x, Box::new(rhs), Box::new(body)),
                span,
            });
        }
        if self.eat_word("fn") {
            let (name, _) = self.ident("function name")?;
            self.expect(Tok::LParen)?;
            let mut params = Vec::new();
            if self.peek() != Some(&Tok::RParen) {
                loop {
                    let (p, _) = self.ident("parameter")?;
                    params.push(p);
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
            }
            self.expect(Tok::RParen)?;
            if params.len() > 2 {
                return Err(ParseError::Invalid {
                    msg: "functions take at most two parameters (pass a pair instead)"
                        .to_string(),
                    span,
                });
            }
            self.expect(Tok::LBrace)?;
            let body = self.expr()?;
            self.expect(Tok::RBrace)?;
            let rest = self.expr()?;
            return Ok(Sur {
                node: SurNode::FnDecl {
                    name,
                    params,
                    body: Box::new(body),
                    rest: Box::new(rest),
                },
                span,
            });
        }
        self.seq()
    }

    fn seq(&mut self) -> Result<Sur, ParseError> {
        let first = self.ctrl()?;
        if self.eat(&Tok::Semi) {
            let span = first.span;
            let rest = self.expr()?;
            Ok(Sur {
                node: SurNode::Seq(Box::new(first), Box::new(rest)),
                span,
            })
        } else {
            Ok(first)
        }
    }

    fn ctrl(&mut self) -> Result<Sur, ParseError> {
        let span = self.span();
        if self.eat_word("if") {
            let cond = self.expr()?;
            self.expect_word("then")?;
            let then = self.ctrl()?;
            let els = if self.eat_word("else") {
                Some(Box::new(self.ctrl()?))
            } else {
                None
            };
            return Ok(Sur {
                node: SurNode::If(Box::new(cond), Box::new(then), els),
                span,
            });
        }
        if self.eat_word("loop") {
            self.expect(Tok::LBrace)?;
            let body = self.expr()?;
            self.expect(Tok::RBrace)?;
            return Ok(Sur {
                node: SurNode::Loop(Box::new(body)),
                span,
            });
        }
        if self.eat_word("match") {
            let scrut = self.expr()?;
            self.expect(Tok::LBrace)?;
            let mut nil_arm = None;
            let mut cons_arm = None;
            loop {
                self.eat(&Tok::Pipe);
                if self.eat_word("nil") {
                    self.expect(Tok::FatArrow)?;
                    nil_arm = Some(self.ctrl()?);
                } else if self.eat_word("cons") {
                    self.expect(Tok::LParen)?;
                    let (h, _) = self.ident("head binder")?;
                    self.expect(Tok::Comma)?;
                    let (t, _) = self.ident("tail binder")?;
                    self.expect(Tok::RParen)?;
                    self.expect(Tok::FatArrow)?;
                    cons_arm = Some((h, t, self.ctrl()?));
                } else {
                    let t = self.next("`nil` or `cons` arm")?;
                    return Err(ParseError::Unexpected {
                        expected: "`nil` or `cons` arm".to_string(),
                        found: t.tok.to_string(),
                        span: t.span,
                    });
                }
                if !self.eat(&Tok::Comma) {
                    break;
                }
                if self.peek() == Some(&Tok::RBrace) {
                    break;
                }
            }
            self.expect(Tok::RBrace)?;
            match (nil_arm, cons_arm) {
                (Some(n), Some((h, t, c))) => {
                    return Ok(Sur {
                        node: SurNode::Match {
                            scrutinee: Box::new(scrut),
                            nil_arm: Box::new(n),
                            cons_arm: (h, t, Box::new(c)),
                        },
                        span,
                    })
                }
                _ => {
                    return Err(ParseError::Invalid {
                        msg: "match needs both a `nil` and a `cons` arm".to_string(),
                        span,
                    })
                }
            }
        }
        if self.eat_word("fun") {
            self.expect(Tok::LParen)?;
            let mut params = Vec::new();
            if self.peek() != Some(&Tok::RParen) {
                loop {
                    let (p, _) = self.ident("parameter")?;
                    params.push(p);
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
            }
            self.expect(Tok::RParen)?;
            if params.len() > 2 {
                return Err(ParseError::Invalid {
                    msg: "functions take at most two parameters (pass a pair instead)"
                        .to_string(),
                    span,
                });
            }
            self.expect(Tok::LBrace)?;
            let body = self.expr()?;
            self.expect(Tok::RBrace)?;
            return Ok(Sur {
                node: SurNode::Fun {
                    params,
                    body: Box::new(body),
                },
                span,
            });
        }
        self.assign()
    }

    fn assign(&mut self) -> Result<Sur, ParseError> {
        let lhs = self.cmp()?;
        if self.eat(&Tok::LArrow) {
            let span = lhs.span;
            let rhs = self.assign()?;
            Ok(Sur {
                node: SurNode::Assign(Box::new(lhs), Box::new(rhs)),
                span,
            })
        } else {
            Ok(lhs)
        }
    }

    fn cmp(&mut self) -> Result<Sur, ParseError> {
        let lhs = self.add()?;
        let op = match self.peek() {
            Some(Tok::Eq) => Some(PrimOp::Eq),
            Some(Tok::Lt) => Some(PrimOp::Lt),
            Some(Tok::Le) => Some(PrimOp::Le),
            _ => None,
        };
        if let Some(op) = op {
            self.pos += 1;
            let span = lhs.span;
            let rhs = self.add()?;
            Ok(Sur {
                node: SurNode::Prim(op, Box::new(lhs), Box::new(rhs)),
                span,
            })
        } else {
            Ok(lhs)
        }
    }

    fn add(&mut self) -> Result<Sur, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => PrimOp::Add,
                Some(Tok::Minus) => PrimOp::Sub,
                Some(Tok::PlusPlus) => PrimOp::Append,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.unary()?;
            let span = lhs.span;
            lhs = Sur {
                node: SurNode::Prim(op, Box::new(lhs), Box::new(rhs)),
                span,
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Sur, ParseError> {
        let span = self.span();
        if self.eat(&Tok::Bang) {
            let e = self.unary()?;
            return Ok(Sur {
                node: SurNode::Deref(Box::new(e)),
                span,
            });
        }
        if let Some(Tok::Ident(s)) = self.peek() {
            if s == "not" {
                self.pos += 1;
                let e = self.unary()?;
                return Ok(Sur {
                    node: SurNode::Not(Box::new(e)),
                    span,
                });
            }
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Sur, ParseError> {
        let mut e = self.atom()?;
        loop {
            match self.peek() {
                Some(Tok::LParen) => {
                    let span = e.span;
                    self.pos += 1;
                    let mut args = Vec::new();
                    if self.peek() != Some(&Tok::RParen) {
                        loop {
                            args.push(self.expr()?);
                            if !self.eat(&Tok::Comma) {
                                break;
                            }
                        }
                    }
                    self.expect(Tok::RParen)?;
                    if args.len() > 2 {
                        return Err(ParseError::Invalid {
                            msg: "calls take at most two arguments (pass a pair instead)"
                                .to_string(),
                            span,
                        });
                    }
                    e = Sur {
                        node: SurNode::Call(Box::new(e), args),
                        span,
                    };
                }
                Some(Tok::Dot) => {
                    let span = e.span;
                    self.pos += 1;
                    let (f, _) = self.ident("field name")?;
                    e = Sur {
                        node: SurNode::Field(Box::new(e), f),
                        span,
                    };
                }
                _ => break,
            }
        }
        Ok(e)
    }

    fn atom(&mut self) -> Result<Sur, ParseError> {
        let t = self.next("expression")?;
        let span = t.span;
        let node = match t.tok {
            Tok::LParen => {
                if self.eat(&Tok::RParen) {
                    SurNode::Unit
                } else {
                    let first = self.expr()?;
                    if self.eat(&Tok::Comma) {
                        let second = self.expr()?;
                        self.expect(Tok::RParen)?;
                        SurNode::Pair(Box::new(first), Box::new(second))
                    } else {
                        self.expect(Tok::RParen)?;
                        return Ok(first);
                    }
                }
            }
            Tok::LBracket => {
                let mut items = Vec::new();
                if self.peek() != Some(&Tok::RBracket) {
                    loop {
                        items.push(self.expr()?);
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                }
                self.expect(Tok::RBracket)?;
                SurNode::List(items)
            }
            Tok::LBrace => {
                // Record literal if we see `ident :=`, otherwise a block.
                let is_record = matches!(self.peek(), Some(Tok::Ident(s)) if !is_keyword(s))
                    && self.peek2() == Some(&Tok::ColonEq);
                if is_record {
                    let mut fields = Vec::new();
                    loop {
                        let (f, fspan) = self.ident("field name")?;
                        if fields.iter().any(|(g, _)| *g == f) {
                            return Err(ParseError::Invalid {
                                msg: format!("duplicate record field `{f}`"),
                                span: fspan,
                            });
                        }
                        self.expect(Tok::ColonEq)?;
                        // ctrl level: `;` separates fields, not sequences
                        let v = self.ctrl()?;
                        fields.push((f, v));
                        if !self.eat(&Tok::Semi) {
                            break;
                        }
                        if self.peek() == Some(&Tok::RBrace) {
                            break;
                        }
                    }
                    self.expect(Tok::RBrace)?;
                    let mut shape: Vec<String> =
                        fields.iter().map(|(f, _)| f.clone()).collect();
                    shape.sort();
                    self.shapes.insert(shape);
                    SurNode::Record(fields)
                } else {
                    let e = self.expr()?;
                    self.expect(Tok::RBrace)?;
                    return Ok(e);
                }
            }
            Tok::BangLt => {
                let e = self.expr()?;
                self.expect(Tok::Gt)?;
                SurNode::AtomicDeref(Box::new(e))
            }
            Tok::Char(c) => SurNode::Char(c),
            Tok::Int(n) => SurNode::Int(n),
            Tok::Minus => {
                let t2 = self.next("integer literal")?;
                match t2.tok {
                    Tok::Int(n) => SurNode::Int(-n),
                    other => {
                        return Err(ParseError::Unexpected {
                            expected: "integer literal".to_string(),
                            found: other.to_string(),
                            span: t2.span,
                        })
                    }
                }
            }
            Tok::Str(s) => SurNode::Str(s),
            Tok::Ident(w) => match w.as_str() {
                "true" => SurNode::True,
                "false" => SurNode::False,
                "nil" => SurNode::Nil,
                "unit" => SurNode::Unit,
                "inl" => SurNode::Inl(Box::new(self.paren_arg()?)),
                "inr" => SurNode::Inr(Box::new(self.paren_arg()?)),
                "fst" => SurNode::Fst(Box::new(self.paren_arg()?)),
                "snd" => SurNode::Snd(Box::new(self.paren_arg()?)),
                "assert" => SurNode::Assert(Box::new(self.paren_arg()?)),
                "ref" => SurNode::Ref(Box::new(self.paren_arg()?)),
                "fork" => SurNode::Fork(Box::new(self.paren_arg()?)),
                "length" => SurNode::Length(Box::new(self.paren_arg()?)),
                "cons" => {
                    let (a, b) = self.paren_args2()?;
                    SurNode::Cons(Box::new(a), Box::new(b))
                }
                "cases" => {
                    self.expect(Tok::LParen)?;
                    let a = self.expr()?;
                    self.expect(Tok::Comma)?;
                    let b = self.expr()?;
                    self.expect(Tok::Comma)?;
                    let c = self.expr()?;
                    self.expect(Tok::RParen)?;
                    SurNode::Cases(Box::new(a), Box::new(b), Box::new(c))
                }
                "cas" => {
                    self.expect(Tok::LParen)?;
                    let a = self.expr()?;
                    self.expect(Tok::Comma)?;
                    let b = self.expr()?;
                    self.expect(Tok::Comma)?;
                    let c = self.expr()?;
                    self.expect(Tok::RParen)?;
                    SurNode::Cas(Box::new(a), Box::new(b), Box::new(c))
                }
                "create_pvar" => {
                    self.expect(Tok::LParen)?;
                    self.expect(Tok::RParen)?;
                    SurNode::CreatePvar(Constraint::Universal)
                }
                "cpvar" => {
                    self.expect(Tok::LParen)?;
                    let c = self.constraint()?;
                    self.expect(Tok::RParen)?;
                    SurNode::CreatePvar(c)
                }
                "assign_pvar" => {
                    let (a, b) = self.paren_args2()?;
                    SurNode::AssignPvar(Box::new(a), Box::new(b))
                }
                _ if is_keyword(&w) => {
                    return Err(ParseError::Unexpected {
                        expected: "expression".to_string(),
                        found: format!("`{w}`"),
                        span,
                    })
                }
                _ => SurNode::Var(w),
            },
            other => {
                return Err(ParseError::Unexpected {
                    expected: "expression".to_string(),
                    found: other.to_string(),
                    span,
                })
            }
        };
        Ok(Sur { node, span })
    }

    fn paren_arg(&mut self) -> Result<Sur, ParseError> {
        self.expect(Tok::LParen)?;
        let e = self.expr()?;
        self.expect(Tok::RParen)?;
        Ok(e)
    }

    fn paren_args2(&mut self) -> Result<(Sur, Sur), ParseError> {
        self.expect(Tok::LParen)?;
        let a = self.expr()?;
        self.expect(Tok::Comma)?;
        let b = self.expr()?;
        self.expect(Tok::RParen)?;
        Ok((a, b))
    }

    /// Constraint literal, used by `cpvar(...)`.
    pub(super) fn constraint(&mut self) -> Result<Constraint, ParseError> {
        let t = self.next("constraint")?;
        match &t.tok {
            Tok::Ident(w) if w == "any" => Ok(Constraint::Universal),
            Tok::Ident(w) if w == "interleave" => {
                self.expect(Tok::LParen)?;
                let a = self.constraint()?;
                self.expect(Tok::Comma)?;
                let b = self.constraint()?;
                self.expect(Tok::RParen)?;
                Ok(Constraint::Interleave(Box::new(a), Box::new(b)))
            }
            Tok::Ident(w) if w == "prefix" => {
                self.expect(Tok::LBrace)?;
                let mut prefixes = BTreeSet::new();
                if self.peek() != Some(&Tok::RBrace) {
                    loop {
                        let s = self.seq_literal()?;
                        if s.open {
                            return Err(ParseError::Invalid {
                                msg: "prefix sequences are closed by definition".to_string(),
                                span: t.span,
                            });
                        }
                        prefixes.insert(s.elems);
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                }
                self.expect(Tok::RBrace)?;
                Ok(Constraint::SuffixAny(prefixes))
            }
            Tok::LBrace => {
                let mut seqs = BTreeSet::new();
                if self.peek() != Some(&Tok::RBrace) {
                    loop {
                        seqs.insert(self.seq_literal()?);
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                }
                self.expect(Tok::RBrace)?;
                Ok(Constraint::Literal(seqs))
            }
            other => Err(ParseError::Unexpected {
                expected: "constraint (`any`, `{...}`, `interleave(...)` or `prefix{...}`)"
                    .to_string(),
                found: other.to_string(),
                span: t.span,
            }),
        }
    }

    fn seq_literal(&mut self) -> Result<SeqLit, ParseError> {
        let t = self.next("value sequence")?;
        let elems = match &t.tok {
            Tok::LBracket => {
                let mut elems = Vec::new();
                if self.peek() != Some(&Tok::RBracket) {
                    loop {
                        elems.push(self.value_literal()?);
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                }
                self.expect(Tok::RBracket)?;
                elems
            }
            Tok::Str(s) => s.chars().map(Value::Char).collect(),
            other => {
                return Err(ParseError::Unexpected {
                    expected: "`[...]` or string sequence".to_string(),
                    found: other.to_string(),
                    span: t.span,
                })
            }
        };
        let open = self.eat(&Tok::DotDot);
        Ok(SeqLit { elems, open })
    }

    /// Ground data value literal (also used for env scripts and nets).
    pub(super) fn value_literal(&mut self) -> Result<Value, ParseError> {
        let t = self.next("value literal")?;
        match &t.tok {
            Tok::Char(c) => Ok(Value::Char(*c)),
            Tok::Int(n) => Ok(Value::Int(*n)),
            Tok::Minus => {
                let t2 = self.next("integer")?;
                match t2.tok {
                    Tok::Int(n) => Ok(Value::Int(-n)),
                    other => Err(ParseError::Unexpected {
                        expected: "integer".to_string(),
                        found: other.to_string(),
                        span: t2.span,
                    }),
                }
            }
            Tok::Str(s) => Ok(Value::string(s)),
            Tok::Ident(w) if w == "true" => Ok(Value::truth(true)),
            Tok::Ident(w) if w == "false" => Ok(Value::truth(false)),
            Tok::Ident(w) if w == "nil" => Ok(Value::nil()),
            Tok::Ident(w) if w == "unit" => Ok(Value::Unit),
            Tok::Ident(w) if w == "inl" => {
                self.expect(Tok::LParen)?;
                let v = self.value_literal()?;
                self.expect(Tok::RParen)?;
                Ok(Value::Inl(Box::new(v)))
            }
            Tok::Ident(w) if w == "inr" => {
                self.expect(Tok::LParen)?;
                let v = self.value_literal()?;
                self.expect(Tok::RParen)?;
                Ok(Value::Inr(Box::new(v)))
            }
            Tok::LParen => {
                if self.eat(&Tok::RParen) {
                    Ok(Value::Unit)
                } else {
                    let a = self.value_literal()?;
                    self.expect(Tok::Comma)?;
                    let b = self.value_literal()?;
                    self.expect(Tok::RParen)?;
                    Ok(Value::Pair(Box::new(a), Box::new(b)))
                }
            }
            Tok::LBracket => {
                let mut items = Vec::new();
                if self.peek() != Some(&Tok::RBracket) {
                    loop {
                        items.push(self.value_literal()?);
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                }
                self.expect(Tok::RBracket)?;
                Ok(Value::list(items))
            }
            other => Err(ParseError::Unexpected {
                expected: "value literal".to_string(),
                found: other.to_string(),
                span: t.span,
            }),
        }
    }
}

/// Desugaring context.
struct Desugar<'a> {
    tags: &'a TagSet,
    scope: Vec<String>,
    shapes: BTreeSet<Vec<String>>,
    /// Every identifier appearing in the source; gensym avoids them so
    /// introduced binders can never capture user variables.
    taken: BTreeSet<String>,
    fresh: usize,
}

impl<'a> Desugar<'a> {
    fn gensym(&mut self, base: &str) -> String {
        loop {
            let candidate = format!("_{base}{}", self.fresh);
            self.fresh += 1;
            if !self.taken.contains(&candidate) {
                self.taken.insert(candidate.clone());
                return candidate;
            }
        }
    }

    fn in_scope(&self, x: &str) -> bool {
        self.scope.iter().any(|s| s == x)
    }

    fn field_projection(
        &self,
        field: &str,
        span: Span,
        record: CoreExpr,
    ) -> Result<CoreExpr, ParseError> {
        let shapes: Vec<&Vec<String>> = self
            .shapes
            .iter()
            .filter(|s| s.iter().any(|f| f == field))
            .collect();
        match shapes.as_slice() {
            [] => Err(ParseError::Invalid {
                msg: format!("field `{field}` appears in no record literal"),
                span,
            }),
            [shape] => {
                let idx = shape.iter().position(|f| f == field).unwrap();
                let k = shape.len();
                let mut e = record;
                for _ in 0..idx {
                    e = CoreExpr::Snd(Arc::new(e));
                }
                if idx < k - 1 {
                    e = CoreExpr::Fst(Arc::new(e));
                }
                Ok(e)
            }
            _ => Err(ParseError::Invalid {
                msg: format!("field `{field}` is ambiguous between record shapes"),
                span,
            }),
        }
    }

    fn lambda(&mut self, param: &str, body: CoreExpr) -> CoreExpr {
        CoreExpr::Lambda(param.to_string(), Arc::new(body))
    }

    /// `let x := rhs in body` via beta.
    fn let_in(&mut self, x: &str, rhs: CoreExpr, body: CoreExpr) -> CoreExpr {
        CoreExpr::App(Arc::new(self.lambda(x, body)), Arc::new(rhs))
    }

    /// Call-by-value fixed-point combinator
    /// `Z = λg. (λx. g (λv. (x x) v)) (λx. g (λv. (x x) v))`.
    /// A closed term, so its internal binder names cannot capture anything.
    fn z_combinator(&mut self) -> CoreExpr {
        let g = "_zg".to_string();
        let x = "_zx".to_string();
        let v = "_zv".to_string();
        let eta = CoreExpr::Lambda(
            v.clone(),
            Arc::new(CoreExpr::App(
                Arc::new(CoreExpr::App(
                    Arc::new(CoreExpr::Var(x.clone())),
                    Arc::new(CoreExpr::Var(x.clone())),
                )),
                Arc::new(CoreExpr::Var(v)),
            )),
        );
        let inner = CoreExpr::Lambda(
            x,
            Arc::new(CoreExpr::App(Arc::new(CoreExpr::Var(g.clone())), Arc::new(eta))),
        );
        CoreExpr::Lambda(g, Arc::new(CoreExpr::App(Arc::new(inner.clone()), Arc::new(inner))))
    }

    /// Function value for `params` and desugared `body`; two parameters are
    /// passed as one pair and projected in the body.
    fn function_value(&mut self, params: &[String], body: CoreExpr) -> CoreExpr {
        match params {
            [] => {
                let u = self.gensym("u");
                self.lambda(&u, body)
            }
            [x] => self.lambda(x, body),
            [x, y] => {
                let a = self.gensym("a");
                let body = super::subst_expr(&body, x, &CoreExpr::Fst(Arc::new(CoreExpr::Var(a.clone()))));
                let body = super::subst_expr(&body, y, &CoreExpr::Snd(Arc::new(CoreExpr::Var(a.clone()))));
                self.lambda(&a, body)
            }
            _ => unreachable!("parser rejects >2 parameters"),
        }
    }

    fn pairify_args(&mut self, mut args: Vec<CoreExpr>) -> CoreExpr {
        match args.len() {
            0 => CoreExpr::Unit,
            1 => args.pop().unwrap(),
            2 => {
                let b = args.pop().unwrap();
                let a = args.pop().unwrap();
                CoreExpr::Pair(Arc::new(a), Arc::new(b))
            }
            _ => unreachable!("parser rejects >2 arguments"),
        }
    }

    fn go(&mut self, s: &Sur) -> Result<CoreExpr, ParseError> {
        let span = s.span;
        Ok(match &s.node {
            SurNode::Unit => CoreExpr::Unit,
            SurNode::Char(c) => CoreExpr::Char(*c),
            SurNode::Int(n) => CoreExpr::Int(*n),
            SurNode::Str(st) => Value::string(st).into_expr(),
            SurNode::True => Value::truth(true).into_expr(),
            SurNode::False => Value::truth(false).into_expr(),
            SurNode::Nil => Value::nil().into_expr(),
            SurNode::List(items) => {
                let mut e = Value::nil().into_expr();
                for item in items.iter().rev() {
                    let hd = self.go(item)?;
                    e = CoreExpr::Inr(Arc::new(CoreExpr::Pair(Arc::new(hd), Arc::new(e))));
                }
                e
            }
            SurNode::Var(x) => {
                if self.in_scope(x) {
                    CoreExpr::Var(x.clone())
                } else if self.tags.contains(x) {
                    return Err(ParseError::Invalid {
                        msg: format!("I/O tag `{x}` must be applied to an argument"),
                        span,
                    });
                } else {
                    return Err(ParseError::UnboundVariable { name: x.clone(), span });
                }
            }
            SurNode::Let(x, rhs, body) => {
                let rhs = self.go(rhs)?;
                self.scope.push(x.clone());
                let body = self.go(body)?;
                self.scope.pop();
                self.let_in(x, rhs, body)
            }
            SurNode::FnDecl { name, params, body, rest } => {
                self.scope.push(name.clone());
                for p in params {
                    self.scope.push(p.clone());
                }
                let body_core = self.go(body)?;
                for _ in params {
                    self.scope.pop();
                }
                let fval = self.function_value(params, body_core);
                let recursive = fval.free_vars().contains(name);
                let bound = if recursive {
                    let z = self.z_combinator();
                    CoreExpr::App(Arc::new(z), Arc::new(self.lambda(name, fval)))
                } else {
                    fval
                };
                let rest = self.go(rest)?;
                self.scope.pop();
                self.let_in(name, bound, rest)
            }
            SurNode::Fun { params, body } => {
                for p in params {
                    self.scope.push(p.clone());
                }
                let body = self.go(body)?;
                for _ in params {
                    self.scope.pop();
                }
                self.function_value(params, body)
            }
            SurNode::If(c, t, e) => {
                let c = self.go(c)?;
                let t = self.go(t)?;
                let e = match e {
                    Some(e) => self.go(e)?,
                    None => CoreExpr::Unit,
                };
                let b1 = self.gensym("if");
                let b2 = self.gensym("if");
                CoreExpr::Cases(
                    Arc::new(c),
                    Arc::new(self.lambda(&b1, t)),
                    Arc::new(self.lambda(&b2, e)),
                )
            }
            SurNode::Loop(body) => {
                let body = self.go(body)?;
                let slf = self.gensym("loop");
                let d = self.gensym("d");
                let seq = self.gensym("s");
                // λself. λd. (body; self ())
                let again = CoreExpr::App(Arc::new(CoreExpr::Var(slf.clone())), Arc::new(CoreExpr::Unit));
                let iter_body = self.let_in(&seq, body, again);
                let iter = self.lambda(&d, iter_body);
                let gen = self.lambda(&slf, iter);
                let z = self.z_combinator();
                CoreExpr::App(
                    Arc::new(CoreExpr::App(Arc::new(z), Arc::new(gen))),
                    Arc::new(CoreExpr::Unit),
                )
            }
            SurNode::Match { scrutinee, nil_arm, cons_arm } => {
                let scrut = self.go(scrutinee)?;
                let nil_core = self.go(nil_arm)?;
                let (h, t, cons_body) = cons_arm;
                self.scope.push(h.clone());
                self.scope.push(t.clone());
                let cons_core = self.go(cons_body)?;
                self.scope.pop();
                self.scope.pop();
                let p = self.gensym("p");
                let cons_core = super::subst_expr(
                    &cons_core,
                    h,
                    &CoreExpr::Fst(Arc::new(CoreExpr::Var(p.clone()))),
                );
                let cons_core = super::subst_expr(
                    &cons_core,
                    t,
                    &CoreExpr::Snd(Arc::new(CoreExpr::Var(p.clone()))),
                );
                let n = self.gensym("n");
                CoreExpr::Cases(
                    Arc::new(scrut),
                    Arc::new(self.lambda(&n, nil_core)),
                    Arc::new(self.lambda(&p, cons_core)),
                )
            }
            SurNode::Seq(a, b) => {
                let a = self.go(a)?;
                let b = self.go(b)?;
                let x = self.gensym("s");
                self.let_in(&x, a, b)
            }
            SurNode::Not(e) => {
                let e = self.go(e)?;
                let b1 = self.gensym("n");
                let b2 = self.gensym("n");
                let f = Value::truth(false).into_expr();
                let t = Value::truth(true).into_expr();
                CoreExpr::Cases(
                    Arc::new(e),
                    Arc::new(self.lambda(&b1, f)),
                    Arc::new(self.lambda(&b2, t)),
                )
            }
            SurNode::Deref(e) => CoreExpr::Deref(Arc::new(self.go(e)?)),
            SurNode::AtomicDeref(e) => CoreExpr::AtomicDeref(Arc::new(self.go(e)?)),
            SurNode::Assign(a, b) => {
                CoreExpr::Assign(Arc::new(self.go(a)?), Arc::new(self.go(b)?))
            }
            SurNode::Prim(op, a, b) => {
                CoreExpr::Prim(*op, Arc::new(self.go(a)?), Arc::new(self.go(b)?))
            }
            SurNode::Pair(a, b) => CoreExpr::Pair(Arc::new(self.go(a)?), Arc::new(self.go(b)?)),
            SurNode::Record(fields) => {
                let mut sorted: Vec<(String, &Sur)> =
                    fields.iter().map(|(f, e)| (f.clone(), e)).collect();
                sorted.sort_by(|a, b| a.0.cmp(&b.0));
                let mut cores = Vec::new();
                for (_, e) in &sorted {
                    cores.push(self.go(e)?);
                }
                let mut it = cores.into_iter().rev();
                let last = it.next().expect("parser requires at least one field");
                it.fold(last, |acc, e| CoreExpr::Pair(Arc::new(e), Arc::new(acc)))
            }
            SurNode::Field(e, f) => {
                let rec = self.go(e)?;
                self.field_projection(f, span, rec)?
            }
            SurNode::Call(f, args) => {
                // An application of an out-of-scope name is an I/O call if
                // the name is a declared tag.
                if let SurNode::Var(name) = &f.node {
                    if !self.in_scope(name) {
                        let mut cores = Vec::new();
                        for a in args {
                            cores.push(self.go(a)?);
                        }
                        let arg = self.pairify_args(cores);
                        if self.tags.contains(name) {
                            return Ok(CoreExpr::Io(name.clone(), Arc::new(arg)));
                        }
                        return Err(ParseError::UndeclaredTag {
                            name: name.clone(),
                            span,
                        });
                    }
                }
                let fe = self.go(f)?;
                let mut cores = Vec::new();
                for a in args {
                    cores.push(self.go(a)?);
                }
                let arg = self.pairify_args(cores);
                CoreExpr::App(Arc::new(fe), Arc::new(arg))
            }
            SurNode::Inl(e) => CoreExpr::Inl(Arc::new(self.go(e)?)),
            SurNode::Inr(e) => CoreExpr::Inr(Arc::new(self.go(e)?)),
            SurNode::Cons(h, t) => {
                let h = self.go(h)?;
                let t = self.go(t)?;
                CoreExpr::Inr(Arc::new(CoreExpr::Pair(Arc::new(h), Arc::new(t))))
            }
            SurNode::Fst(e) => CoreExpr::Fst(Arc::new(self.go(e)?)),
            SurNode::Snd(e) => CoreExpr::Snd(Arc::new(self.go(e)?)),
            SurNode::Cases(a, b, c) => CoreExpr::Cases(
                Arc::new(self.go(a)?),
                Arc::new(self.go(b)?),
                Arc::new(self.go(c)?),
            ),
            SurNode::Assert(e) => CoreExpr::Assert(Arc::new(self.go(e)?)),
            SurNode::Ref(e) => CoreExpr::Ref(Arc::new(self.go(e)?)),
            SurNode::Fork(e) => CoreExpr::Fork(Arc::new(self.go(e)?)),
            SurNode::Cas(a, b, c) => CoreExpr::Cas(
                Arc::new(self.go(a)?),
                Arc::new(self.go(b)?),
                Arc::new(self.go(c)?),
            ),
            SurNode::CreatePvar(c) => CoreExpr::CreatePvar(c.clone()),
            SurNode::AssignPvar(a, b) => {
                CoreExpr::AssignPvar(Arc::new(self.go(a)?), Arc::new(self.go(b)?))
            }
            SurNode::Length(e) => {
                let e = self.go(e)?;
                // Z (λlen. λl. cases(l, λ_. 0, λp. 1 + len(snd(p))))
                let len = self.gensym("len");
                let l = self.gensym("l");
                let u = self.gensym("u");
                let p = self.gensym("p");
                let rec = CoreExpr::Prim(
                    PrimOp::Add,
                    Arc::new(CoreExpr::Int(1)),
                    Arc::new(CoreExpr::App(
                        Arc::new(CoreExpr::Var(len.clone())),
                        Arc::new(CoreExpr::Snd(Arc::new(CoreExpr::Var(p.clone())))),
                    )),
                );
                let body = CoreExpr::Cases(
                    Arc::new(CoreExpr::Var(l.clone())),
                    Arc::new(self.lambda(&u, CoreExpr::Int(0))),
                    Arc::new(self.lambda(&p, rec)),
                );
                let gen_inner = self.lambda(&l, body);
                let gen = self.lambda(&len, gen_inner);
                let z = self.z_combinator();
                CoreExpr::App(
                    Arc::new(CoreExpr::App(Arc::new(z), Arc::new(gen))),
                    Arc::new(e),
                )
            }
        })
    }
}

/// Parses and desugars a whole program. `tags` is the set of I/O tag names
/// declared by the accompanying net.
pub fn parse_program(text: &str, tags: &TagSet) -> Result<CoreExpr, ParseError> {
    let toks = tokenize(text)?;
    let mut p = Parser {
        toks: &toks,
        pos: 0,
        shapes: BTreeSet::new(),
    };
    let sur = p.expr()?;
    if p.pos < toks.len() {
        let t = &toks[p.pos];
        return Err(ParseError::Unexpected {
            expected: "end of input".to_string(),
            found: t.tok.to_string(),
            span: t.span,
        });
    }
    let taken: BTreeSet<String> = toks
        .iter()
        .filter_map(|t| match &t.tok {
            Tok::Ident(s) => Some(s.clone()),
            _ => None,
        })
        .collect();
    let mut d = Desugar {
        tags,
        scope: Vec::new(),
        shapes: p.shapes,
        taken,
        fresh: 0,
    };
    let core = d.go(&sur)?;
    debug_assert!(core.free_vars().is_empty(), "desugared program is closed");
    Ok(core)
}

/// Parses a single ground value literal, as used in env scripts.
pub fn parse_value_literal(text: &str) -> Result<Value, ParseError> {
    let toks = tokenize(text)?;
    let mut p = Parser {
        toks: &toks,
        pos: 0,
        shapes: BTreeSet::new(),
    };
    let v = p.value_literal()?;
    if p.pos < toks.len() {
        let t = &toks[p.pos];
        return Err(ParseError::Unexpected {
            expected: "end of input".to_string(),
            found: t.tok.to_string(),
            span: t.span,
        });
    }
    Ok(v)
}

/// Token-level parsing hooks shared with the net parser.
pub(crate) mod raw {
    use super::*;

    pub(crate) fn value_at(toks: &[Token], pos: &mut usize) -> Result<Value, ParseError> {
        let mut p = Parser {
            toks,
            pos: *pos,
            shapes: BTreeSet::new(),
        };
        let v = p.value_literal()?;
        *pos = p.pos;
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{decompose, print_expr, substitute, Decomposed};

    fn tagset(tags: &[&str]) -> TagSet {
        tags.iter().map(|s| s.to_string()).collect()
    }

    fn parse(text: &str, tags: &[&str]) -> CoreExpr {
        parse_program(text, &tagset(tags)).unwrap()
    }

    #[test]
    fn unit_parses() {
        assert_eq!(parse("()", &[]), CoreExpr::Unit);
    }

    #[test]
    fn hi_program_desugars_to_app_of_lambda() {
        // e; e' is let-expansion through beta
        let e = parse("putchar('h'); putchar('i')", &["putchar"]);
        match &e {
            CoreExpr::App(f, a) => {
                match &**f {
                    CoreExpr::Lambda(_, body) => {
                        assert_eq!(
                            **body,
                            CoreExpr::Io("putchar".into(), Arc::new(CoreExpr::Char('i')))
                        );
                    }
                    other => panic!("expected lambda, got {other:?}"),
                }
                assert_eq!(
                    **a,
                    CoreExpr::Io("putchar".into(), Arc::new(CoreExpr::Char('h')))
                );
            }
            other => panic!("expected app, got {other:?}"),
        }
    }

    #[test]
    fn if_desugars_to_cases_of_lambdas() {
        let e = parse("let b := true in if b then () else ()", &[]);
        // outermost is the let-beta; the body is the cases
        match &e {
            CoreExpr::App(f, _) => match &**f {
                CoreExpr::Lambda(_, body) => {
                    assert!(matches!(&**body, CoreExpr::Cases(_, t, e)
                        if matches!(&**t, CoreExpr::Lambda(..)) && matches!(&**e, CoreExpr::Lambda(..))));
                }
                other => panic!("expected lambda, got {other:?}"),
            },
            other => panic!("expected app, got {other:?}"),
        }
    }

    #[test]
    fn undeclared_tag_is_distinct_error() {
        let err = parse_program("putchar('h')", &tagset(&[])).unwrap_err();
        assert!(matches!(err, ParseError::UndeclaredTag { name, .. } if name == "putchar"));
    }

    #[test]
    fn unbound_variable_is_error() {
        let err = parse_program("x", &tagset(&[])).unwrap_err();
        assert!(matches!(err, ParseError::UnboundVariable { name, .. } if name == "x"));
    }

    #[test]
    fn syntax_error_carries_position() {
        let err = parse_program("let x := in ()", &tagset(&[])).unwrap_err();
        match err {
            ParseError::Unexpected { span, .. } => assert_eq!(span.line, 1),
            other => panic!("expected unexpected-token, got {other:?}"),
        }
    }

    #[test]
    fn let_of_value_beta_reduces_in_one_step() {
        let e = parse("let x := () in x", &[]);
        match decompose(&e) {
            Decomposed::Redex(frames, _) => assert!(frames.is_empty()),
            other => panic!("expected redex, got {other:?}"),
        }
    }

    #[test]
    fn records_project_in_field_name_order() {
        let e = parse("let r := {queue := 1; pvar := 2} in r.pvar", &[]);
        let printed = print_expr(&e);
        // pvar sorts before queue, so r.pvar is fst(r)
        assert!(printed.contains("fst"), "{printed}");
    }

    #[test]
    fn shadowed_binder_is_untouched() {
        let e = parse("fun (x) { fun (x) { x } }", &[]);
        if let CoreExpr::Lambda(x, body) = &e {
            let inner = substitute(body, x, &Value::Unit);
            assert_eq!(*body.as_ref(), inner);
        } else {
            panic!("expected lambda");
        }
    }

    #[test]
    fn string_literals_are_char_lists() {
        let e = parse("\"hi\"", &[]);
        let v = e.as_value().unwrap();
        assert_eq!(v, Value::string("hi"));
    }

    #[test]
    fn keywords_cannot_bind() {
        assert!(parse_program("let loop := () in ()", &tagset(&[])).is_err());
    }

    #[test]
    fn two_argument_call_builds_pair() {
        let e = parse("fn f(a, b) { a } f(1, 2)", &[]);
        let printed = print_expr(&e);
        assert!(printed.contains("(1, 2)"), "{printed}");
    }

    #[test]
    fn value_literal_round_trip() {
        assert_eq!(parse_value_literal("'c'").unwrap(), Value::Char('c'));
        assert_eq!(parse_value_literal("()").unwrap(), Value::Unit);
        assert_eq!(
            parse_value_literal("(1, \"a\")").unwrap(),
            Value::Pair(Box::new(Value::Int(1)), Box::new(Value::string("a")))
        );
        assert_eq!(parse_value_literal("-3").unwrap(), Value::Int(-3));
    }
}
