//! The net description language.
//!
//! ```text
//! tags putchar, getchar;            // declared I/O tags
//! place pc(1);                      // optional arity declarations
//! init p1 + pc("hi");               // initial marking (may repeat; `where`
//! init q(C) where 'a' <= C <= 'b';  // guards enumerate candidates)
//! accept p3;                        // accepting places, reporting only
//!
//! io putchar(pc(C :: Cs), C, unit, pc(Cs));
//! io getchar(p1, unit, C, p2(C)) where 'a' <= C <= 'z';
//! split(p1, p2, p5);
//! join(p4, p7, p8);
//! noop(p, q);
//! ```
//!
//! Identifiers starting uppercase are pattern variables; everything else
//! names a place constructor or a literal. A string or list literal with a
//! `..` suffix is an open-ended script. Guards are `,`-separated range or
//! equation atoms over `+`/`-` arithmetic.

use std::collections::{BTreeMap, BTreeSet};

use crate::ast::lexer::{tokenize, Tok, Token};
use crate::ast::Value;

use super::{GuardAtom, GuardTerm, Marking, Net, NetError, Pat, PlaceTerm, Rule, RuleKind};

struct P<'a> {
    toks: &'a [Token],
    pos: usize,
}

type R<T> = Result<T, NetError>;

fn err(msg: impl Into<String>) -> NetError {
    NetError::Load(msg.into())
}

impl<'a> P<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn at(&self) -> String {
        match self.toks.get(self.pos) {
            Some(t) => format!("{}", t.span),
            None => "end of input".to_string(),
        }
    }

    fn next(&mut self, expected: &str) -> R<Token> {
        let t = self
            .toks
            .get(self.pos)
            .cloned()
            .ok_or_else(|| err(format!("unexpected end of input, expected {expected}")))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, tok: Tok) -> R<()> {
        let at = self.at();
        let t = self.next(&tok.to_string())?;
        if t.tok == tok {
            Ok(())
        } else {
            Err(err(format!("{at}: expected {tok}, found {}", t.tok)))
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

    fn ident(&mut self, what: &str) -> R<String> {
        let at = self.at();
        let t = self.next(what)?;
        match t.tok {
            Tok::Ident(s) => Ok(s),
            other => Err(err(format!("{at}: expected {what}, found {other}"))),
        }
    }

    fn is_upper(s: &str) -> bool {
        s.chars().next().is_some_and(|c| c.is_ascii_uppercase())
    }

    fn value(&mut self) -> R<Value> {
        let mut pos = self.pos;
        let v = crate::ast::parser::raw::value_at(self.toks, &mut pos)
            .map_err(|e| err(e.to_string()))?;
        self.pos = pos;
        Ok(v)
    }

    /// `pat := conspat`; `conspat := atom ["::" conspat]`
    fn pat(&mut self) -> R<Pat> {
        let head = self.pat_atom()?;
        if self.eat(&Tok::ColonColon) {
            let tail = self.pat()?;
            Ok(Pat::Cons(Box::new(head), Box::new(tail)))
        } else {
            Ok(head)
        }
    }

    fn pat_atom(&mut self) -> R<Pat> {
        let at = self.at();
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                if Self::is_upper(&s) {
                    return Ok(Pat::Var(s));
                }
                match s.as_str() {
                    "unit" => Ok(Pat::Val(Value::Unit)),
                    "true" => Ok(Pat::Val(Value::truth(true))),
                    "false" => Ok(Pat::Val(Value::truth(false))),
                    "nil" => Ok(Pat::Val(Value::nil())),
                    "inl" => {
                        self.expect(Tok::LParen)?;
                        let p = self.pat()?;
                        self.expect(Tok::RParen)?;
                        Ok(Pat::Inl(Box::new(p)))
                    }
                    "inr" => {
                        self.expect(Tok::LParen)?;
                        let p = self.pat()?;
                        self.expect(Tok::RParen)?;
                        Ok(Pat::Inr(Box::new(p)))
                    }
                    _ => {
                        let mut args = Vec::new();
                        if self.eat(&Tok::LParen) {
                            if self.peek() != Some(&Tok::RParen) {
                                loop {
                                    args.push(self.pat()?);
                                    if !self.eat(&Tok::Comma) {
                                        break;
                                    }
                                }
                            }
                            self.expect(Tok::RParen)?;
                        }
                        Ok(Pat::Place(s, args))
                    }
                }
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                if self.eat(&Tok::RParen) {
                    return Ok(Pat::Val(Value::Unit));
                }
                let a = self.pat()?;
                self.expect(Tok::Comma)?;
                let b = self.pat()?;
                self.expect(Tok::RParen)?;
                Ok(Pat::Pair(Box::new(a), Box::new(b)))
            }
            Some(Tok::Str(_)) | Some(Tok::LBracket) | Some(Tok::Char(_)) | Some(Tok::Int(_))
            | Some(Tok::Minus) => {
                let v = self.value()?;
                if self.eat(&Tok::DotDot) {
                    match v.as_list() {
                        Some(items) => {
                            Ok(Pat::OpenList(items.into_iter().cloned().collect()))
                        }
                        None => Err(err(format!(
                            "{at}: `..` only applies to string or list scripts"
                        ))),
                    }
                } else {
                    Ok(Pat::Val(v))
                }
            }
            Some(other) => Err(err(format!("{at}: expected pattern, found {other}"))),
            None => Err(err("unexpected end of input, expected pattern")),
        }
    }

    /// `gterm := gatom { ("+"|"-") gatom }`
    fn guard_term(&mut self) -> R<GuardTerm> {
        let mut t = self.guard_atom()?;
        loop {
            if self.eat(&Tok::Plus) {
                let rhs = self.guard_atom()?;
                t = GuardTerm::Add(Box::new(t), Box::new(rhs));
            } else if matches!(self.peek(), Some(Tok::Minus))
                && !matches!(
                    self.toks.get(self.pos + 1).map(|t| &t.tok),
                    Some(Tok::Int(_))
                )
            {
                self.pos += 1;
                let rhs = self.guard_atom()?;
                t = GuardTerm::Sub(Box::new(t), Box::new(rhs));
            } else if matches!(self.peek(), Some(Tok::Minus)) {
                // `- 3` here is subtraction of a positive literal
                self.pos += 1;
                let at = self.at();
                match self.next("integer")?.tok {
                    Tok::Int(n) => {
                        t = GuardTerm::Sub(Box::new(t), Box::new(GuardTerm::Lit(Value::Int(n))))
                    }
                    other => return Err(err(format!("{at}: expected integer, found {other}"))),
                }
            } else {
                break;
            }
        }
        Ok(t)
    }

    fn guard_atom(&mut self) -> R<GuardTerm> {
        let at = self.at();
        match self.peek() {
            Some(Tok::Ident(s)) if Self::is_upper(s) => {
                let s = s.clone();
                self.pos += 1;
                Ok(GuardTerm::Var(s))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let t = self.guard_term()?;
                self.expect(Tok::RParen)?;
                Ok(t)
            }
            Some(Tok::Char(_) | Tok::Int(_) | Tok::Str(_) | Tok::LBracket) => {
                Ok(GuardTerm::Lit(self.value()?))
            }
            Some(Tok::Ident(s)) if s == "unit" || s == "true" || s == "false" || s == "nil" => {
                Ok(GuardTerm::Lit(self.value()?))
            }
            Some(other) => Err(err(format!("{at}: expected guard term, found {other}"))),
            None => Err(err("unexpected end of input in guard")),
        }
    }

    /// `guard := gterm "<=" VAR "<=" gterm | gterm "=" gterm`
    fn guard(&mut self) -> R<GuardAtom> {
        let at = self.at();
        let first = self.guard_term()?;
        match self.peek() {
            Some(Tok::Le) => {
                self.pos += 1;
                let mid = self.guard_term()?;
                let var = match mid {
                    GuardTerm::Var(x) => x,
                    _ => {
                        return Err(err(format!(
                            "{at}: the middle of a range guard must be a variable"
                        )))
                    }
                };
                self.expect(Tok::Le)?;
                let hi = self.guard_term()?;
                Ok(GuardAtom::Range { lo: first, var, hi })
            }
            Some(Tok::Eq) => {
                self.pos += 1;
                let rhs = self.guard_term()?;
                Ok(GuardAtom::Eq { lhs: first, rhs })
            }
            Some(other) => Err(err(format!("{at}: expected `<=` or `=`, found {other}"))),
            None => Err(err("unexpected end of input in guard")),
        }
    }

    fn guards_opt(&mut self) -> R<Vec<GuardAtom>> {
        let mut gs = Vec::new();
        if let Some(Tok::Ident(s)) = self.peek() {
            if s == "where" {
                self.pos += 1;
                loop {
                    gs.push(self.guard()?);
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
            }
        }
        Ok(gs)
    }

    fn marking_pats(&mut self) -> R<Vec<Pat>> {
        let mut pats = vec![self.pat()?];
        while self.eat(&Tok::Plus) {
            pats.push(self.pat()?);
        }
        Ok(pats)
    }
}

/// Parses and validates a net description.
pub fn parse_net(text: &str) -> Result<Net, NetError> {
    let toks = tokenize(text).map_err(|e| err(e.to_string()))?;
    let mut p = P { toks: &toks, pos: 0 };
    let mut net = Net::default();
    let mut init_decls: Vec<(Vec<Pat>, Vec<GuardAtom>)> = Vec::new();

    while p.peek().is_some() {
        let at = p.at();
        let word = p.ident("declaration (`tags`, `place`, `init`, `accept`, `io`, `split`, `join` or `noop`)")?;
        match word.as_str() {
            "tags" => {
                if p.peek() != Some(&Tok::Semi) {
                    loop {
                        let t = p.ident("tag name")?;
                        net.tags.insert(t);
                        if !p.eat(&Tok::Comma) {
                            break;
                        }
                    }
                }
                p.expect(Tok::Semi)?;
            }
            "place" => {
                let name = p.ident("place name")?;
                let mut arity = 0usize;
                if p.eat(&Tok::LParen) {
                    let at = p.at();
                    match p.next("arity")?.tok {
                        Tok::Int(n) if n >= 0 => arity = n as usize,
                        other => {
                            return Err(err(format!("{at}: expected arity, found {other}")))
                        }
                    }
                    p.expect(Tok::RParen)?;
                }
                net.place_arities.insert(name, arity);
                p.expect(Tok::Semi)?;
            }
            "init" => {
                let pats = p.marking_pats()?;
                let guards = p.guards_opt()?;
                p.expect(Tok::Semi)?;
                init_decls.push((pats, guards));
            }
            "accept" => {
                let pats = p.marking_pats()?;
                p.expect(Tok::Semi)?;
                for pat in pats {
                    let g = super::instantiate(&pat, &BTreeMap::new())
                        .map_err(|_| err(format!("{at}: accept places must be ground")))?;
                    match g {
                        super::Ground::Place(pt) => {
                            net.accepting.insert(pt);
                        }
                        _ => return Err(err(format!("{at}: accept entries must be places"))),
                    }
                }
            }
            "io" => {
                let tag = p.ident("tag name")?;
                p.expect(Tok::LParen)?;
                let pre = p.pat()?;
                p.expect(Tok::Comma)?;
                let arg = p.pat()?;
                p.expect(Tok::Comma)?;
                let result = p.pat()?;
                p.expect(Tok::Comma)?;
                let post = p.pat()?;
                p.expect(Tok::RParen)?;
                let guards = p.guards_opt()?;
                p.expect(Tok::Semi)?;
                net.rules.push(Rule {
                    kind: RuleKind::Io {
                        tag,
                        pre,
                        arg,
                        result,
                        post,
                    },
                    guards,
                });
            }
            "split" => {
                p.expect(Tok::LParen)?;
                let pre = p.pat()?;
                p.expect(Tok::Comma)?;
                let post1 = p.pat()?;
                p.expect(Tok::Comma)?;
                let post2 = p.pat()?;
                p.expect(Tok::RParen)?;
                let guards = p.guards_opt()?;
                p.expect(Tok::Semi)?;
                net.rules.push(Rule {
                    kind: RuleKind::Split { pre, post1, post2 },
                    guards,
                });
            }
            "join" => {
                p.expect(Tok::LParen)?;
                let pre1 = p.pat()?;
                p.expect(Tok::Comma)?;
                let pre2 = p.pat()?;
                p.expect(Tok::Comma)?;
                let post = p.pat()?;
                p.expect(Tok::RParen)?;
                let guards = p.guards_opt()?;
                p.expect(Tok::Semi)?;
                net.rules.push(Rule {
                    kind: RuleKind::Join { pre1, pre2, post },
                    guards,
                });
            }
            "noop" => {
                p.expect(Tok::LParen)?;
                let pre = p.pat()?;
                p.expect(Tok::Comma)?;
                let post = p.pat()?;
                p.expect(Tok::RParen)?;
                let guards = p.guards_opt()?;
                p.expect(Tok::Semi)?;
                net.rules.push(Rule {
                    kind: RuleKind::Noop { pre, post },
                    guards,
                });
            }
            other => {
                return Err(err(format!("{at}: unknown declaration `{other}`")));
            }
        }
    }

    // enumerate initial candidate markings
    for (pats, guards) in init_decls {
        let base = super::Bindings::default();
        let sols = super::solve_guards(&guards, &base)?;
        if sols.is_empty() {
            return Err(err("init guards admit no solution"));
        }
        for sol in sols {
            let env = super::merged_env(&base, &sol);
            let mut places = Vec::new();
            for pat in &pats {
                let g = super::instantiate(pat, &env)
                    .map_err(|_| err("init marking must be ground (guards bind all variables)"))?;
                match g {
                    super::Ground::Place(pt) => places.push(pt),
                    _ => return Err(err("init entries must be places")),
                }
            }
            net.init.push(Marking::from_places(places));
        }
    }
    if net.init.is_empty() {
        net.init.push(Marking::empty());
    }

    validate(&net)?;
    Ok(net)
}

/// Load-time checks: tags declared, rules well-scoped, declared arities
/// respected.
fn validate(net: &Net) -> Result<(), NetError> {
    for rule in &net.rules {
        // tag declared
        if let RuleKind::Io { tag, .. } = &rule.kind {
            if !net.tags.contains(tag) {
                return Err(err(format!("io rule uses undeclared tag `{tag}`")));
            }
        }
        // scope check: every variable of the post-places, the result
        // pattern, and the guards must be derivable from the pre-places,
        // the argument pattern, or guard fixpoint.
        let (sources, targets): (Vec<&Pat>, Vec<&Pat>) = match &rule.kind {
            RuleKind::Io {
                pre, arg, result, post, ..
            } => (vec![pre, arg], vec![result, post]),
            RuleKind::Split { pre, post1, post2 } => (vec![pre], vec![post1, post2]),
            RuleKind::Join { pre1, pre2, post } => (vec![pre1, pre2], vec![post]),
            RuleKind::Noop { pre, post } => (vec![pre], vec![post]),
        };
        let mut boundable: BTreeSet<String> = BTreeSet::new();
        for s in &sources {
            boundable.extend(s.var_set());
        }
        loop {
            let mut changed = false;
            for g in &rule.guards {
                match g {
                    GuardAtom::Range { lo, var, hi } => {
                        let mut deps = BTreeSet::new();
                        lo.vars(&mut deps);
                        hi.vars(&mut deps);
                        if deps.is_subset(&boundable) && boundable.insert(var.clone()) {
                            changed = true;
                        }
                    }
                    GuardAtom::Eq { lhs, rhs } => {
                        for (a, b) in [(lhs, rhs), (rhs, lhs)] {
                            if let GuardTerm::Var(x) = a {
                                let mut deps = BTreeSet::new();
                                b.vars(&mut deps);
                                if deps.is_subset(&boundable) && boundable.insert(x.clone()) {
                                    changed = true;
                                }
                            }
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        for t in targets {
            for v in t.var_set() {
                if !boundable.contains(&v) {
                    return Err(NetError::IllScoped {
                        var: v,
                        place: "a post-place or result pattern".to_string(),
                    });
                }
            }
        }
        for g in &rule.guards {
            for v in guard_vars_of(g) {
                if !boundable.contains(&v) {
                    return Err(NetError::IllScoped {
                        var: v,
                        place: "a guard".to_string(),
                    });
                }
            }
        }
        // declared arities
        let all_pats: Vec<&Pat> = match &rule.kind {
            RuleKind::Io {
                pre, arg, result, post, ..
            } => vec![pre, arg, result, post],
            RuleKind::Split { pre, post1, post2 } => vec![pre, post1, post2],
            RuleKind::Join { pre1, pre2, post } => vec![pre1, pre2, post],
            RuleKind::Noop { pre, post } => vec![pre, post],
        };
        for pat in all_pats {
            check_arities(pat, &net.place_arities)?;
        }
    }
    for m in &net.init {
        for (pt, _) in m.places() {
            check_place_arity(pt, &net.place_arities)?;
        }
    }
    Ok(())
}

fn guard_vars_of(g: &GuardAtom) -> BTreeSet<String> {
    super::guard_vars(g)
}

fn check_arities(pat: &Pat, arities: &BTreeMap<String, usize>) -> Result<(), NetError> {
    match pat {
        Pat::Place(name, args) => {
            if let Some(&k) = arities.get(name) {
                if args.len() != k {
                    return Err(err(format!(
                        "place `{name}` declared with arity {k} but used with {}",
                        args.len()
                    )));
                }
            }
            for a in args {
                check_arities(a, arities)?;
            }
            Ok(())
        }
        Pat::Pair(a, b) | Pat::Cons(a, b) => {
            check_arities(a, arities)?;
            check_arities(b, arities)
        }
        Pat::Inl(a) | Pat::Inr(a) => check_arities(a, arities),
        Pat::Var(_) | Pat::Val(_) | Pat::OpenList(_) => Ok(()),
    }
}

fn check_place_arity(
    pt: &PlaceTerm,
    arities: &BTreeMap<String, usize>,
) -> Result<(), NetError> {
    if let Some(&k) = arities.get(&pt.name) {
        if pt.args.len() != k {
            return Err(err(format!(
                "place `{}` declared with arity {k} but used with {}",
                pt.name,
                pt.args.len()
            )));
        }
    }
    for a in &pt.args {
        if let super::Ground::Place(p) = a {
            check_place_arity(p, arities)?;
        }
    }
    Ok(())
}
