//! Petri nets over term-shaped places.
//!
//! A net denotes the prefix-closed trace set `Traces_N(V)`: the I/O action
//! sequences fireable from a marking `V`. Places are ground terms
//! (constructor name plus arguments), which lets a finite rule schema
//! present an infinite net: a rule like
//! `io putchar(pc(C :: Cs), C, unit, pc(Cs))` is the whole family of
//! transitions walking a character script.
//!
//! Rule patterns bind variables by matching the pre-place and (for I/O
//! rules) the argument; guards check or finitely enumerate the rest. A
//! load-time scope check guarantees every rule has finitely many instances
//! per query.
//!
//! Scripts may be flagged open-ended (`"ab"..`): once the listed prefix is
//! consumed the family keeps generating, with guard enumeration supplying
//! the values the script no longer pins down.

mod netparse;

pub use netparse::parse_net;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::ast::{print_value, IoAction, Value};

/// Argument slot of a place term: a data value, a nested place term, or an
/// open-ended list script.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Ground {
    Val(Value),
    Place(PlaceTerm),
    /// Known prefix of a conceptually infinite script.
    OpenList(Vec<Value>),
}

impl fmt::Display for Ground {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ground::Val(v) => write!(f, "{}", print_value(v)),
            Ground::Place(p) => write!(f, "{p}"),
            Ground::OpenList(vs) => {
                write!(f, "[")?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{}", print_value(v))?;
                }
                write!(f, "]..")
            }
        }
    }
}

/// A place: constructor name plus ground arguments. Structural equality is
/// place identity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct PlaceTerm {
    pub name: String,
    pub args: Vec<Ground>,
}

impl PlaceTerm {
    pub fn atom(name: impl Into<String>) -> Self {
        PlaceTerm {
            name: name.into(),
            args: Vec::new(),
        }
    }
}

impl fmt::Display for PlaceTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        if !self.args.is_empty() {
            write!(f, "(")?;
            for (i, a) in self.args.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{a}")?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

/// Finite multiset of place terms.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Marking(BTreeMap<PlaceTerm, u32>);

impl Marking {
    pub fn empty() -> Self {
        Marking::default()
    }

    pub fn singleton(p: PlaceTerm) -> Self {
        let mut m = BTreeMap::new();
        m.insert(p, 1);
        Marking(m)
    }

    pub fn from_places(ps: impl IntoIterator<Item = PlaceTerm>) -> Self {
        let mut m = Marking::empty();
        for p in ps {
            m.add(&p);
        }
        m
    }

    pub fn count(&self, p: &PlaceTerm) -> u32 {
        self.0.get(p).copied().unwrap_or(0)
    }

    pub fn places(&self) -> impl Iterator<Item = (&PlaceTerm, u32)> {
        self.0.iter().map(|(p, c)| (p, *c))
    }

    /// Total token count.
    pub fn size(&self) -> u32 {
        self.0.values().sum()
    }

    pub fn add(&mut self, p: &PlaceTerm) {
        *self.0.entry(p.clone()).or_insert(0) += 1;
    }

    /// Removes one token; `false` if the place is empty.
    pub fn remove(&mut self, p: &PlaceTerm) -> bool {
        match self.0.get_mut(p) {
            Some(c) if *c > 1 => {
                *c -= 1;
                true
            }
            Some(_) => {
                self.0.remove(p);
                true
            }
            None => false,
        }
    }

    /// Multiset union `V ⊎ V'`.
    pub fn uplus(&self, other: &Marking) -> Marking {
        let mut out = self.clone();
        for (p, c) in other.places() {
            *out.0.entry(p.clone()).or_insert(0) += c;
        }
        out
    }
}

impl fmt::Display for Marking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        let mut first = true;
        for (p, c) in self.places() {
            for _ in 0..c {
                if !first {
                    write!(f, ", ")?;
                }
                first = false;
                write!(f, "{p}")?;
            }
        }
        write!(f, "}}")
    }
}

/// Rule patterns. Uppercase identifiers in the net DSL become `Var`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Pat {
    Var(String),
    Val(Value),
    OpenList(Vec<Value>),
    Place(String, Vec<Pat>),
    Pair(Box<Pat>, Box<Pat>),
    Inl(Box<Pat>),
    Inr(Box<Pat>),
    /// List head/tail split `h :: t`.
    Cons(Box<Pat>, Box<Pat>),
}

impl Pat {
    pub fn place(name: &str, args: Vec<Pat>) -> Pat {
        Pat::Place(name.to_string(), args)
    }

    fn vars(&self, acc: &mut BTreeSet<String>) {
        match self {
            Pat::Var(x) => {
                acc.insert(x.clone());
            }
            Pat::Val(_) | Pat::OpenList(_) => {}
            Pat::Place(_, args) => {
                for a in args {
                    a.vars(acc);
                }
            }
            Pat::Pair(a, b) | Pat::Cons(a, b) => {
                a.vars(acc);
                b.vars(acc);
            }
            Pat::Inl(a) | Pat::Inr(a) => a.vars(acc),
        }
    }

    pub fn var_set(&self) -> BTreeSet<String> {
        let mut s = BTreeSet::new();
        self.vars(&mut s);
        s
    }
}

/// Guard terms: literals, variables and character/integer arithmetic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum GuardTerm {
    Var(String),
    Lit(Value),
    Add(Box<GuardTerm>, Box<GuardTerm>),
    Sub(Box<GuardTerm>, Box<GuardTerm>),
}

impl GuardTerm {
    fn vars(&self, acc: &mut BTreeSet<String>) {
        match self {
            GuardTerm::Var(x) => {
                acc.insert(x.clone());
            }
            GuardTerm::Lit(_) => {}
            GuardTerm::Add(a, b) | GuardTerm::Sub(a, b) => {
                a.vars(acc);
                b.vars(acc);
            }
        }
    }
}

/// One guard atom. Ranges can bind their variable by enumeration; equations
/// can bind a bare variable on one side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum GuardAtom {
    Range {
        lo: GuardTerm,
        var: String,
        hi: GuardTerm,
    },
    Eq {
        lhs: GuardTerm,
        rhs: GuardTerm,
    },
}

/// Transition rule kinds. I/O rules carry a tag and argument/result
/// patterns; split/join/noop are silent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum RuleKind {
    Io {
        tag: String,
        pre: Pat,
        arg: Pat,
        result: Pat,
        post: Pat,
    },
    Split {
        pre: Pat,
        post1: Pat,
        post2: Pat,
    },
    Join {
        pre1: Pat,
        pre2: Pat,
        post: Pat,
    },
    Noop {
        pre: Pat,
        post: Pat,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rule {
    pub kind: RuleKind,
    pub guards: Vec<GuardAtom>,
}

/// A loaded net: declared tags, rules, candidate initial markings and
/// optional accepting places (reporting only).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Net {
    pub tags: BTreeSet<String>,
    pub rules: Vec<Rule>,
    pub init: Vec<Marking>,
    pub accepting: BTreeSet<PlaceTerm>,
    pub place_arities: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetError {
    #[error("net load error: {0}")]
    Load(String),
    #[error("rule is ill-scoped: variable `{var}` in {place} is not bound by the pre-place, the argument, or an enumerable guard")]
    IllScoped { var: String, place: String },
    #[error("guard range with more than {max} values cannot be enumerated")]
    RangeTooLarge { max: u64 },
    #[error("guard over non-enumerable operands: {0}")]
    GuardStuck(String),
    #[error("rule instance does not produce a ground {0}")]
    NotGround(&'static str),
    #[error("silent closure still growing at depth bound {bound}")]
    ClosureTruncated { bound: usize },
    #[error("enumeration hit an open-ended script without a bounding guard")]
    OpenEnumeration,
}

const MAX_RANGE: u64 = 4096;

// ---------------------------------------------------------------------------
// pattern matching

#[derive(Debug, Clone)]
enum Target {
    G(Ground),
    /// Value beyond the known prefix of an open script: anything.
    Unknown,
}

#[derive(Debug, Clone, Default)]
struct Bindings {
    map: BTreeMap<String, Ground>,
    /// Variables matched against `Unknown`; guards must pin them down.
    unbound: BTreeSet<String>,
}

fn match_pat(pat: &Pat, target: &Target, b: &mut Bindings) -> bool {
    match target {
        Target::Unknown => {
            // anything could be here; record the pattern's variables as
            // unbound and succeed
            for v in pat.var_set() {
                if !b.map.contains_key(&v) {
                    b.unbound.insert(v);
                }
            }
            true
        }
        Target::G(g) => match (pat, g) {
            (Pat::Var(x), g) => {
                if let Some(prev) = b.map.get(x) {
                    prev == g
                } else {
                    b.unbound.remove(x);
                    b.map.insert(x.clone(), g.clone());
                    true
                }
            }
            (Pat::Val(v), Ground::Val(w)) => v == w,
            (Pat::Val(_), _) => false,
            (Pat::OpenList(vs), Ground::OpenList(ws)) => vs == ws,
            (Pat::OpenList(_), _) => false,
            (Pat::Place(name, args), Ground::Place(pt)) => {
                pt.name == *name
                    && pt.args.len() == args.len()
                    && args
                        .iter()
                        .zip(&pt.args)
                        .all(|(p, a)| match_pat(p, &Target::G(a.clone()), b))
            }
            (Pat::Place(..), _) => false,
            (Pat::Pair(pa, pb), Ground::Val(Value::Pair(a, bb))) => {
                match_pat(pa, &Target::G(Ground::Val((**a).clone())), b)
                    && match_pat(pb, &Target::G(Ground::Val((**bb).clone())), b)
            }
            (Pat::Pair(..), _) => false,
            (Pat::Inl(p), Ground::Val(Value::Inl(v))) => {
                match_pat(p, &Target::G(Ground::Val((**v).clone())), b)
            }
            (Pat::Inl(_), _) => false,
            (Pat::Inr(p), Ground::Val(Value::Inr(v))) => {
                match_pat(p, &Target::G(Ground::Val((**v).clone())), b)
            }
            (Pat::Inr(_), _) => false,
            (Pat::Cons(ph, pt), Ground::Val(v)) => match v {
                Value::Inr(p) => match &**p {
                    Value::Pair(h, t) => {
                        match_pat(ph, &Target::G(Ground::Val((**h).clone())), b)
                            && match_pat(pt, &Target::G(Ground::Val((**t).clone())), b)
                    }
                    _ => false,
                },
                _ => false,
            },
            (Pat::Cons(ph, pt), Ground::OpenList(vs)) => match vs.split_first() {
                Some((h, rest)) => {
                    match_pat(ph, &Target::G(Ground::Val(h.clone())), b)
                        && match_pat(pt, &Target::G(Ground::OpenList(rest.to_vec())), b)
                }
                None => {
                    // prefix exhausted: the head is arbitrary, the tail
                    // stays open-ended
                    match_pat(ph, &Target::Unknown, b)
                        && match_pat(pt, &Target::G(Ground::OpenList(Vec::new())), b)
                }
            },
            (Pat::Cons(..), Ground::Place(_)) => false,
        },
    }
}

// ---------------------------------------------------------------------------
// guard solving

fn guard_vars(g: &GuardAtom) -> BTreeSet<String> {
    let mut s = BTreeSet::new();
    match g {
        GuardAtom::Range { lo, var, hi } => {
            lo.vars(&mut s);
            hi.vars(&mut s);
            s.insert(var.clone());
        }
        GuardAtom::Eq { lhs, rhs } => {
            lhs.vars(&mut s);
            rhs.vars(&mut s);
        }
    }
    s
}

fn eval_term(t: &GuardTerm, env: &BTreeMap<String, Value>) -> Option<Value> {
    match t {
        GuardTerm::Var(x) => env.get(x).cloned(),
        GuardTerm::Lit(v) => Some(v.clone()),
        GuardTerm::Add(a, b) => {
            let (a, b) = (eval_term(a, env)?, eval_term(b, env)?);
            crate::interp::prim_add(&a, &b)
        }
        GuardTerm::Sub(a, b) => {
            let (a, b) = (eval_term(a, env)?, eval_term(b, env)?);
            crate::interp::prim_sub(&a, &b)
        }
    }
}

fn enumerate_range(lo: &Value, hi: &Value) -> Result<Vec<Value>, NetError> {
    match (lo, hi) {
        (Value::Char(a), Value::Char(b)) => {
            let (a, b) = (*a as u32, *b as u32);
            if a > b {
                return Ok(Vec::new());
            }
            if (b - a) as u64 >= MAX_RANGE {
                return Err(NetError::RangeTooLarge { max: MAX_RANGE });
            }
            Ok((a..=b).filter_map(char::from_u32).map(Value::Char).collect())
        }
        (Value::Int(a), Value::Int(b)) => {
            if a > b {
                return Ok(Vec::new());
            }
            if (*b - *a) as u64 >= MAX_RANGE {
                return Err(NetError::RangeTooLarge { max: MAX_RANGE });
            }
            Ok((*a..=*b).map(Value::Int).collect())
        }
        _ => Err(NetError::GuardStuck(format!(
            "range bounds {} and {} are not both characters or both integers",
            print_value(lo),
            print_value(hi)
        ))),
    }
}

fn in_range(lo: &Value, v: &Value, hi: &Value) -> bool {
    match (lo, v, hi) {
        (Value::Char(a), Value::Char(x), Value::Char(b)) => a <= x && x <= b,
        (Value::Int(a), Value::Int(x), Value::Int(b)) => a <= x && x <= b,
        _ => false,
    }
}

/// Extends partial bindings to every complete guard solution, in canonical
/// value order. Value-bindings only: a guard variable already bound to a
/// place or open script fails the guard.
fn solve_guards(
    guards: &[GuardAtom],
    base: &Bindings,
) -> Result<Vec<BTreeMap<String, Value>>, NetError> {
    // seed with the value bindings from structural matching
    let mut seed: BTreeMap<String, Value> = BTreeMap::new();
    for (x, g) in &base.map {
        if let Ground::Val(v) = g {
            seed.insert(x.clone(), v.clone());
        }
    }
    let non_value: BTreeSet<&String> = base
        .map
        .iter()
        .filter(|(_, g)| !matches!(g, Ground::Val(_)))
        .map(|(x, _)| x)
        .collect();
    for g in guards {
        for v in guard_vars(g) {
            if non_value.contains(&v) {
                return Ok(Vec::new());
            }
        }
    }

    let mut solutions = vec![seed];
    let mut pending: Vec<&GuardAtom> = guards.iter().collect();
    loop {
        let mut next_pending = Vec::new();
        let mut progressed = false;
        for g in pending {
            let mut new_solutions = Vec::new();
            let mut defer = false;
            for env in &solutions {
                match g {
                    GuardAtom::Range { lo, var, hi } => {
                        match (eval_term(lo, env), eval_term(hi, env)) {
                            (Some(lo), Some(hi)) => {
                                if let Some(v) = env.get(var) {
                                    if in_range(&lo, v, &hi) {
                                        new_solutions.push(env.clone());
                                    }
                                } else {
                                    for v in enumerate_range(&lo, &hi)? {
                                        let mut e = env.clone();
                                        e.insert(var.clone(), v);
                                        new_solutions.push(e);
                                    }
                                }
                            }
                            _ => {
                                defer = true;
                                break;
                            }
                        }
                    }
                    GuardAtom::Eq { lhs, rhs } => {
                        match (eval_term(lhs, env), eval_term(rhs, env)) {
                            (Some(a), Some(b)) => {
                                if a == b {
                                    new_solutions.push(env.clone());
                                }
                            }
                            (None, Some(b)) => {
                                if let GuardTerm::Var(x) = lhs {
                                    let mut e = env.clone();
                                    e.insert(x.clone(), b);
                                    new_solutions.push(e);
                                } else {
                                    defer = true;
                                    break;
                                }
                            }
                            (Some(a), None) => {
                                if let GuardTerm::Var(x) = rhs {
                                    let mut e = env.clone();
                                    e.insert(x.clone(), a);
                                    new_solutions.push(e);
                                } else {
                                    defer = true;
                                    break;
                                }
                            }
                            (None, None) => {
                                defer = true;
                                break;
                            }
                        }
                    }
                }
            }
            if defer {
                next_pending.push(g);
            } else {
                solutions = new_solutions;
                progressed = true;
            }
            if solutions.is_empty() {
                return Ok(Vec::new());
            }
        }
        if next_pending.is_empty() {
            return Ok(solutions);
        }
        if !progressed {
            return Err(NetError::GuardStuck(
                "guards cannot be ordered so that every variable gets bound".to_string(),
            ));
        }
        pending = next_pending;
    }
}

// ---------------------------------------------------------------------------
// instantiation

fn instantiate(pat: &Pat, env: &BTreeMap<String, Ground>) -> Result<Ground, NetError> {
    match pat {
        Pat::Var(x) => env
            .get(x)
            .cloned()
            .ok_or(NetError::NotGround("term (unbound variable)")),
        Pat::Val(v) => Ok(Ground::Val(v.clone())),
        Pat::OpenList(vs) => Ok(Ground::OpenList(vs.clone())),
        Pat::Place(name, args) => {
            let args = args
                .iter()
                .map(|a| instantiate(a, env))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Ground::Place(PlaceTerm {
                name: name.clone(),
                args,
            }))
        }
        Pat::Pair(a, b) => {
            let (a, b) = (instantiate_value(a, env)?, instantiate_value(b, env)?);
            Ok(Ground::Val(Value::Pair(Box::new(a), Box::new(b))))
        }
        Pat::Inl(a) => Ok(Ground::Val(Value::Inl(Box::new(instantiate_value(a, env)?)))),
        Pat::Inr(a) => Ok(Ground::Val(Value::Inr(Box::new(instantiate_value(a, env)?)))),
        Pat::Cons(h, t) => {
            let h = instantiate_value(h, env)?;
            match instantiate(t, env)? {
                Ground::Val(tl) => Ok(Ground::Val(Value::cons(h, tl))),
                Ground::OpenList(mut vs) => {
                    vs.insert(0, h);
                    Ok(Ground::OpenList(vs))
                }
                Ground::Place(_) => Err(NetError::NotGround("list tail")),
            }
        }
    }
}

fn instantiate_value(pat: &Pat, env: &BTreeMap<String, Ground>) -> Result<Value, NetError> {
    match instantiate(pat, env)? {
        Ground::Val(v) => Ok(v),
        _ => Err(NetError::NotGround("value")),
    }
}

fn instantiate_place(pat: &Pat, env: &BTreeMap<String, Ground>) -> Result<PlaceTerm, NetError> {
    match instantiate(pat, env)? {
        Ground::Place(p) => Ok(p),
        Ground::Val(_) | Ground::OpenList(_) => Err(NetError::NotGround("place")),
    }
}

fn merged_env(b: &Bindings, sol: &BTreeMap<String, Value>) -> BTreeMap<String, Ground> {
    let mut env = b.map.clone();
    for (x, v) in sol {
        env.insert(x.clone(), Ground::Val(v.clone()));
    }
    env
}

// ---------------------------------------------------------------------------
// firing

/// Candidate matches of a single pattern against the (distinct) places of a
/// marking, each paired with the marking minus one such token.
fn match_places(pat: &Pat, marking: &Marking) -> Vec<(Bindings, Marking, PlaceTerm)> {
    let mut out = Vec::new();
    for (p, _) in marking.places() {
        let mut b = Bindings::default();
        if match_pat(pat, &Target::G(Ground::Place(p.clone())), &mut b) {
            let mut rest = marking.clone();
            rest.remove(p);
            out.push((b, rest, p.clone()));
        }
    }
    out
}

/// A fired silent transition: the successor marking.
fn silent_instances(net: &Net, marking: &Marking) -> Result<Vec<Marking>, NetError> {
    let mut out = Vec::new();
    for rule in &net.rules {
        match &rule.kind {
            RuleKind::Split { pre, post1, post2 } => {
                for (b, rest, _) in match_places(pre, marking) {
                    for sol in solve_guards(&rule.guards, &b)? {
                        let env = merged_env(&b, &sol);
                        let q1 = instantiate_place(post1, &env)?;
                        let q2 = instantiate_place(post2, &env)?;
                        let mut m = rest.clone();
                        m.add(&q1);
                        m.add(&q2);
                        out.push(m);
                    }
                }
            }
            RuleKind::Join { pre1, pre2, post } => {
                for (b1, rest1, _) in match_places(pre1, marking) {
                    // the second token comes out of the remainder, which
                    // handles the p == q multiplicity case
                    for (p2, _) in rest1.places() {
                        let mut b = b1.clone();
                        if match_pat(pre2, &Target::G(Ground::Place(p2.clone())), &mut b) {
                            let mut rest = rest1.clone();
                            rest.remove(p2);
                            for sol in solve_guards(&rule.guards, &b)? {
                                let env = merged_env(&b, &sol);
                                let q = instantiate_place(post, &env)?;
                                let mut m = rest.clone();
                                m.add(&q);
                                out.push(m);
                            }
                        }
                    }
                }
            }
            RuleKind::Noop { pre, post } => {
                for (b, rest, _) in match_places(pre, marking) {
                    for sol in solve_guards(&rule.guards, &b)? {
                        let env = merged_env(&b, &sol);
                        let q = instantiate_place(post, &env)?;
                        let mut m = rest.clone();
                        m.add(&q);
                        out.push(m);
                    }
                }
            }
            RuleKind::Io { .. } => {}
        }
    }
    Ok(out)
}

/// The set of markings reachable from `markings` via at most `bound` silent
/// firings, plus a flag telling whether the frontier was still growing at
/// the bound.
pub fn silent_closure(
    net: &Net,
    markings: &BTreeSet<Marking>,
    bound: usize,
) -> Result<(BTreeSet<Marking>, bool), NetError> {
    let mut seen: BTreeSet<Marking> = markings.clone();
    let mut frontier: VecDeque<Marking> = markings.iter().cloned().collect();
    for _ in 0..bound {
        if frontier.is_empty() {
            return Ok((seen, false));
        }
        let mut next = VecDeque::new();
        for m in frontier {
            for succ in silent_instances(net, &m)? {
                if seen.insert(succ.clone()) {
                    next.push_back(succ);
                }
            }
        }
        frontier = next;
    }
    // truncated iff one more layer would still add markings
    let mut truncated = false;
    'outer: for m in &frontier {
        for succ in silent_instances(net, m)? {
            if !seen.contains(&succ) {
                truncated = true;
                break 'outer;
            }
        }
    }
    Ok((seen, truncated))
}

/// One enabled I/O firing: the action and the successor marking.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct IoFiring {
    pub action: IoAction,
    pub next: Marking,
}

/// Enumerates every enabled I/O rule instance from one marking (all tags,
/// all arguments). Requires argument patterns to become ground; open-ended
/// scripts must be pinned down by guards.
pub fn io_instances(net: &Net, marking: &Marking) -> Result<Vec<IoFiring>, NetError> {
    let mut out = Vec::new();
    for rule in &net.rules {
        if let RuleKind::Io {
            tag,
            pre,
            arg,
            result,
            post,
        } = &rule.kind
        {
            for (b, rest, _) in match_places(pre, marking) {
                for sol in solve_guards(&rule.guards, &b)? {
                    let env = merged_env(&b, &sol);
                    let arg_v = instantiate_value(arg, &env)
                        .map_err(|_| NetError::OpenEnumeration)?;
                    let result_v = instantiate_value(result, &env)?;
                    let q = instantiate_place(post, &env)?;
                    let mut m = rest.clone();
                    m.add(&q);
                    out.push(IoFiring {
                        action: IoAction::new(tag.clone(), arg_v, result_v),
                        next: m,
                    });
                }
            }
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

/// Matches of I/O rules for a *given* tag and argument from one marking.
fn io_instances_for(
    net: &Net,
    marking: &Marking,
    tag: &str,
    arg_value: &Value,
) -> Result<Vec<(Value, Marking)>, NetError> {
    let mut out = Vec::new();
    for rule in &net.rules {
        if let RuleKind::Io {
            tag: t,
            pre,
            arg,
            result,
            post,
        } = &rule.kind
        {
            if t != tag {
                continue;
            }
            for (b, rest, _) in match_places(pre, marking) {
                let mut b = b.clone();
                if !match_pat(arg, &Target::G(Ground::Val(arg_value.clone())), &mut b) {
                    continue;
                }
                for sol in solve_guards(&rule.guards, &b)? {
                    let env = merged_env(&b, &sol);
                    let result_v = instantiate_value(result, &env)?;
                    let q = instantiate_place(post, &env)?;
                    let mut m = rest.clone();
                    m.add(&q);
                    out.push((result_v, m));
                }
            }
        }
    }
    Ok(out)
}

/// Labeled successors: for each result value the action `tag(arg)` may
/// produce from `markings`, the set of markings reachable by silent closure
/// followed by one matching firing. Empty iff the action is not allowed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IoSuccessors {
    pub results: BTreeMap<Value, BTreeSet<Marking>>,
    pub truncated: bool,
}

pub fn io_successors(
    net: &Net,
    markings: &BTreeSet<Marking>,
    tag: &str,
    arg: &Value,
    bound: usize,
) -> Result<IoSuccessors, NetError> {
    let (closed, truncated) = silent_closure(net, markings, bound)?;
    let mut results: BTreeMap<Value, BTreeSet<Marking>> = BTreeMap::new();
    for m in &closed {
        for (v, next) in io_instances_for(net, m, tag, arg)? {
            results.entry(v).or_default().insert(next);
        }
    }
    Ok(IoSuccessors { results, truncated })
}

/// Brute-force oracle: exactly the traces of length at most `k` in
/// `Traces_N(V)`, by exhaustive firing. Exponential; meant for small `k`.
pub fn traces_upto(
    net: &Net,
    initial: &Marking,
    k: usize,
    bound: usize,
) -> Result<BTreeSet<Vec<IoAction>>, NetError> {
    let mut out: BTreeSet<Vec<IoAction>> = BTreeSet::new();
    // states: set of markings reachable via the current trace
    let start: BTreeSet<Marking> = [initial.clone()].into_iter().collect();
    let mut layer: BTreeMap<Vec<IoAction>, BTreeSet<Marking>> = BTreeMap::new();
    layer.insert(Vec::new(), start);
    out.insert(Vec::new());
    for _ in 0..k {
        let mut next_layer: BTreeMap<Vec<IoAction>, BTreeSet<Marking>> = BTreeMap::new();
        for (trace, markings) in &layer {
            let (closed, truncated) = silent_closure(net, markings, bound)?;
            if truncated {
                return Err(NetError::ClosureTruncated { bound });
            }
            for m in &closed {
                for firing in io_instances(net, m)? {
                    let mut t = trace.clone();
                    t.push(firing.action);
                    out.insert(t.clone());
                    next_layer.entry(t).or_default().insert(firing.next);
                }
            }
        }
        if next_layer.is_empty() {
            break;
        }
        layer = next_layer;
    }
    Ok(out)
}

/// Result-determinism check outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResDet {
    Ok,
    Counterexample {
        trace: Vec<IoAction>,
        tag: String,
        arg: Value,
        result1: Value,
        result2: Value,
    },
}

/// Checks that no trace of length < `k` from `initial` reaches a state from
/// which some `tag(arg)` admits two distinct results.
pub fn check_result_det(
    net: &Net,
    initial: &Marking,
    k: usize,
    bound: usize,
) -> Result<ResDet, NetError> {
    // BFS over trace derivatives: the state reached by a trace is the set
    // of markings reachable via it.
    let start: BTreeSet<Marking> = [initial.clone()].into_iter().collect();
    let mut visited: BTreeSet<BTreeSet<Marking>> = BTreeSet::new();
    let mut queue: VecDeque<(Vec<IoAction>, BTreeSet<Marking>)> = VecDeque::new();
    queue.push_back((Vec::new(), start));
    while let Some((trace, markings)) = queue.pop_front() {
        if trace.len() >= k {
            continue;
        }
        let (closed, truncated) = silent_closure(net, &markings, bound)?;
        if truncated {
            return Err(NetError::ClosureTruncated { bound });
        }
        if !visited.insert(closed.clone()) {
            continue;
        }
        // gather all firings, grouped by (tag, arg)
        let mut by_action: BTreeMap<(String, Value), BTreeMap<Value, BTreeSet<Marking>>> =
            BTreeMap::new();
        for m in &closed {
            for firing in io_instances(net, m)? {
                by_action
                    .entry((firing.action.tag.clone(), firing.action.arg.clone()))
                    .or_default()
                    .entry(firing.action.result.clone())
                    .or_default()
                    .insert(firing.next);
            }
        }
        for ((tag, arg), results) in &by_action {
            if results.len() > 1 {
                let mut it = results.keys();
                let r1 = it.next().unwrap().clone();
                let r2 = it.next().unwrap().clone();
                return Ok(ResDet::Counterexample {
                    trace,
                    tag: tag.clone(),
                    arg: arg.clone(),
                    result1: r1,
                    result2: r2,
                });
            }
        }
        for ((tag, arg), results) in by_action {
            for (result, markings) in results {
                let mut t = trace.clone();
                t.push(IoAction::new(tag.clone(), arg.clone(), result));
                queue.push_back((t, markings));
            }
        }
    }
    Ok(ResDet::Ok)
}

#[cfg(test)]
mod tests;
