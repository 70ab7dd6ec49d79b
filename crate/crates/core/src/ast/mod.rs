//! Core expression trees, values, substitution and evaluation-context
//! decomposition.
//!
//! The surface language (see [`parser`]) desugars completely into
//! [`CoreExpr`]; nothing below this layer knows about `let`, `if`, `match`,
//! records or loops. Characters and bounded signed 64-bit integers are
//! native value forms with a handful of primitive operators.

pub(crate) mod lexer;
pub(crate) mod parser;
mod print;

pub use lexer::{LexError, Span};
pub use parser::{parse_program, parse_value_literal, ParseError, TagSet};
pub use print::{print_expr, print_value};

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::Serialize;

use crate::prophecy::Constraint;

/// Heap location. Allocation always picks the smallest unused index, so
/// runs are reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Loc(pub usize);

/// Prophecy variable identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct PvarId(pub usize);

pub type Var = String;
pub type Tag = String;

/// One I/O action `t(v, v')`: tag, argument, result.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct IoAction {
    pub tag: Tag,
    pub arg: Value,
    pub result: Value,
}

impl IoAction {
    pub fn new(tag: impl Into<Tag>, arg: Value, result: Value) -> Self {
        IoAction {
            tag: tag.into(),
            arg,
            result,
        }
    }
}

impl std::fmt::Display for IoAction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}({}) -> {}",
            self.tag,
            print::print_value(&self.arg),
            print::print_value(&self.result)
        )
    }
}

/// Primitive operators over native characters and integers. `Append`
/// concatenates encoded lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum PrimOp {
    Add,
    Sub,
    Eq,
    Lt,
    Le,
    Append,
}

impl PrimOp {
    pub fn symbol(self) -> &'static str {
        match self {
            PrimOp::Add => "+",
            PrimOp::Sub => "-",
            PrimOp::Eq => "=",
            PrimOp::Lt => "<",
            PrimOp::Le => "<=",
            PrimOp::Append => "++",
        }
    }
}

/// The desugared expression language.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum CoreExpr {
    Unit,
    Char(char),
    Int(i64),
    Var(Var),
    Inl(Arc<CoreExpr>),
    Inr(Arc<CoreExpr>),
    Pair(Arc<CoreExpr>, Arc<CoreExpr>),
    Lambda(Var, Arc<CoreExpr>),
    Cases(Arc<CoreExpr>, Arc<CoreExpr>, Arc<CoreExpr>),
    Fst(Arc<CoreExpr>),
    Snd(Arc<CoreExpr>),
    App(Arc<CoreExpr>, Arc<CoreExpr>),
    Assert(Arc<CoreExpr>),
    Ref(Arc<CoreExpr>),
    Deref(Arc<CoreExpr>),
    Assign(Arc<CoreExpr>, Arc<CoreExpr>),
    Io(Tag, Arc<CoreExpr>),
    Fork(Arc<CoreExpr>),
    AtomicDeref(Arc<CoreExpr>),
    Cas(Arc<CoreExpr>, Arc<CoreExpr>, Arc<CoreExpr>),
    CreatePvar(Constraint),
    AssignPvar(Arc<CoreExpr>, Arc<CoreExpr>),
    Prim(PrimOp, Arc<CoreExpr>, Arc<CoreExpr>),
    /// Location literal. Unwritable in surface syntax; appears when values
    /// are injected back into expressions during reduction.
    Loc(Loc),
    /// Prophecy identifier literal, same story as `Loc`.
    Pvar(PvarId),
}

/// Irreducible results of evaluation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Value {
    Unit,
    Char(char),
    Int(i64),
    Inl(Box<Value>),
    Inr(Box<Value>),
    Pair(Box<Value>, Box<Value>),
    Closure(Var, Arc<CoreExpr>),
    Loc(Loc),
    Pvar(PvarId),
}

impl Value {
    pub fn truth(b: bool) -> Value {
        if b {
            Value::Inl(Box::new(Value::Unit))
        } else {
            Value::Inr(Box::new(Value::Unit))
        }
    }

    pub fn as_truth(&self) -> Option<bool> {
        match self {
            Value::Inl(v) if **v == Value::Unit => Some(true),
            Value::Inr(v) if **v == Value::Unit => Some(false),
            _ => None,
        }
    }

    pub fn nil() -> Value {
        Value::Inl(Box::new(Value::Unit))
    }

    pub fn cons(head: Value, tail: Value) -> Value {
        Value::Inr(Box::new(Value::Pair(Box::new(head), Box::new(tail))))
    }

    pub fn list(items: impl IntoIterator<Item = Value>) -> Value {
        let items: Vec<Value> = items.into_iter().collect();
        items
            .into_iter()
            .rev()
            .fold(Value::nil(), |tail, head| Value::cons(head, tail))
    }

    pub fn string(s: &str) -> Value {
        Value::list(s.chars().map(Value::Char))
    }

    /// Decodes a proper list spine; `None` if the value is not nil/cons
    /// shaped all the way down.
    pub fn as_list(&self) -> Option<Vec<&Value>> {
        let mut items = Vec::new();
        let mut cur = self;
        loop {
            match cur {
                Value::Inl(u) if **u == Value::Unit => return Some(items),
                Value::Inr(p) => match &**p {
                    Value::Pair(h, t) => {
                        items.push(h.as_ref());
                        cur = t;
                    }
                    _ => return None,
                },
                _ => return None,
            }
        }
    }

    /// First-order values: everything built without closures, locations or
    /// prophecy identifiers. Only these admit decidable equality, which is
    /// what CAS and the `=` primitive use.
    pub fn is_dataval(&self) -> bool {
        match self {
            Value::Unit | Value::Char(_) | Value::Int(_) => true,
            Value::Inl(v) | Value::Inr(v) => v.is_dataval(),
            Value::Pair(a, b) => a.is_dataval() && b.is_dataval(),
            Value::Closure(..) | Value::Loc(_) | Value::Pvar(_) => false,
        }
    }

    /// Decidable equality on `DataVals`; `None` when either side is outside
    /// the decidable fragment.
    pub fn data_eq(&self, other: &Value) -> Option<bool> {
        if self.is_dataval() && other.is_dataval() {
            Some(self == other)
        } else {
            None
        }
    }

    /// Injects the value back into the expression language.
    pub fn into_expr(&self) -> CoreExpr {
        match self {
            Value::Unit => CoreExpr::Unit,
            Value::Char(c) => CoreExpr::Char(*c),
            Value::Int(n) => CoreExpr::Int(*n),
            Value::Inl(v) => CoreExpr::Inl(Arc::new(v.into_expr())),
            Value::Inr(v) => CoreExpr::Inr(Arc::new(v.into_expr())),
            Value::Pair(a, b) => CoreExpr::Pair(Arc::new(a.into_expr()), Arc::new(b.into_expr())),
            Value::Closure(x, body) => CoreExpr::Lambda(x.clone(), body.clone()),
            Value::Loc(l) => CoreExpr::Loc(*l),
            Value::Pvar(i) => CoreExpr::Pvar(*i),
        }
    }
}

impl CoreExpr {
    /// Projects an expression built purely from value constructors.
    pub fn as_value(&self) -> Option<Value> {
        match self {
            CoreExpr::Unit => Some(Value::Unit),
            CoreExpr::Char(c) => Some(Value::Char(*c)),
            CoreExpr::Int(n) => Some(Value::Int(*n)),
            CoreExpr::Inl(e) => e.as_value().map(|v| Value::Inl(Box::new(v))),
            CoreExpr::Inr(e) => e.as_value().map(|v| Value::Inr(Box::new(v))),
            CoreExpr::Pair(a, b) => match (a.as_value(), b.as_value()) {
                (Some(va), Some(vb)) => Some(Value::Pair(Box::new(va), Box::new(vb))),
                _ => None,
            },
            CoreExpr::Lambda(x, body) => Some(Value::Closure(x.clone(), body.clone())),
            CoreExpr::Loc(l) => Some(Value::Loc(*l)),
            CoreExpr::Pvar(i) => Some(Value::Pvar(*i)),
            _ => None,
        }
    }

    pub fn is_value(&self) -> bool {
        self.as_value().is_some()
    }

    /// Free variables.
    pub fn free_vars(&self) -> BTreeSet<Var> {
        fn go(e: &CoreExpr, bound: &mut Vec<Var>, acc: &mut BTreeSet<Var>) {
            match e {
                CoreExpr::Var(x) => {
                    if !bound.iter().any(|b| b == x) {
                        acc.insert(x.clone());
                    }
                }
                CoreExpr::Lambda(x, body) => {
                    bound.push(x.clone());
                    go(body, bound, acc);
                    bound.pop();
                }
                CoreExpr::Unit
                | CoreExpr::Char(_)
                | CoreExpr::Int(_)
                | CoreExpr::Loc(_)
                | CoreExpr::Pvar(_)
                | CoreExpr::CreatePvar(_) => {}
                CoreExpr::Inl(a)
                | CoreExpr::Inr(a)
                | CoreExpr::Fst(a)
                | CoreExpr::Snd(a)
                | CoreExpr::Assert(a)
                | CoreExpr::Ref(a)
                | CoreExpr::Deref(a)
                | CoreExpr::AtomicDeref(a)
                | CoreExpr::Fork(a)
                | CoreExpr::Io(_, a) => go(a, bound, acc),
                CoreExpr::Pair(a, b)
                | CoreExpr::App(a, b)
                | CoreExpr::Assign(a, b)
                | CoreExpr::AssignPvar(a, b)
                | CoreExpr::Prim(_, a, b) => {
                    go(a, bound, acc);
                    go(b, bound, acc);
                }
                CoreExpr::Cases(a, b, c) | CoreExpr::Cas(a, b, c) => {
                    go(a, bound, acc);
                    go(b, bound, acc);
                    go(c, bound, acc);
                }
            }
        }
        let mut acc = BTreeSet::new();
        go(self, &mut Vec::new(), &mut acc);
        acc
    }
}

/// Capture-avoiding substitution of a value for a variable.
pub fn substitute(e: &CoreExpr, x: &str, v: &Value) -> CoreExpr {
    subst_expr(e, x, &v.into_expr())
}

/// Substitution of an arbitrary expression for a variable, renaming binders
/// that would capture free variables of the replacement. The desugarer uses
/// this with open replacement terms; reduction only ever substitutes closed
/// values.
pub fn subst_expr(e: &CoreExpr, x: &str, r: &CoreExpr) -> CoreExpr {
    let r_free = r.free_vars();
    let mut fresh = 0usize;
    subst_in(e, x, r, &r_free, &mut fresh)
}

fn subst_in(
    e: &CoreExpr,
    x: &str,
    r: &CoreExpr,
    r_free: &BTreeSet<Var>,
    fresh: &mut usize,
) -> CoreExpr {
    let rec1 = |a: &Arc<CoreExpr>, fresh: &mut usize| Arc::new(subst_in(a, x, r, r_free, fresh));
    match e {
        CoreExpr::Var(y) => {
            if y == x {
                r.clone()
            } else {
                e.clone()
            }
        }
        CoreExpr::Lambda(y, body) => {
            if y == x {
                e.clone()
            } else if r_free.contains(y) {
                // Rename the binder out of the way before descending.
                let body_free = body.free_vars();
                let mut y2 = format!("{y}_r{fresh}");
                while r_free.contains(&y2) || body_free.contains(&y2) {
                    *fresh += 1;
                    y2 = format!("{y}_r{fresh}");
                }
                *fresh += 1;
                let renamed = subst_expr(body, y, &CoreExpr::Var(y2.clone()));
                CoreExpr::Lambda(y2, Arc::new(subst_in(&renamed, x, r, r_free, fresh)))
            } else {
                CoreExpr::Lambda(y.clone(), rec1(body, fresh))
            }
        }
        CoreExpr::Unit
        | CoreExpr::Char(_)
        | CoreExpr::Int(_)
        | CoreExpr::Loc(_)
        | CoreExpr::Pvar(_)
        | CoreExpr::CreatePvar(_) => e.clone(),
        CoreExpr::Inl(a) => CoreExpr::Inl(rec1(a, fresh)),
        CoreExpr::Inr(a) => CoreExpr::Inr(rec1(a, fresh)),
        CoreExpr::Fst(a) => CoreExpr::Fst(rec1(a, fresh)),
        CoreExpr::Snd(a) => CoreExpr::Snd(rec1(a, fresh)),
        CoreExpr::Assert(a) => CoreExpr::Assert(rec1(a, fresh)),
        CoreExpr::Ref(a) => CoreExpr::Ref(rec1(a, fresh)),
        CoreExpr::Deref(a) => CoreExpr::Deref(rec1(a, fresh)),
        CoreExpr::AtomicDeref(a) => CoreExpr::AtomicDeref(rec1(a, fresh)),
        CoreExpr::Fork(a) => CoreExpr::Fork(rec1(a, fresh)),
        CoreExpr::Io(t, a) => CoreExpr::Io(t.clone(), rec1(a, fresh)),
        CoreExpr::Pair(a, b) => CoreExpr::Pair(rec1(a, fresh), rec1(b, fresh)),
        CoreExpr::App(a, b) => CoreExpr::App(rec1(a, fresh), rec1(b, fresh)),
        CoreExpr::Assign(a, b) => CoreExpr::Assign(rec1(a, fresh), rec1(b, fresh)),
        CoreExpr::AssignPvar(a, b) => CoreExpr::AssignPvar(rec1(a, fresh), rec1(b, fresh)),
        CoreExpr::Prim(op, a, b) => CoreExpr::Prim(*op, rec1(a, fresh), rec1(b, fresh)),
        CoreExpr::Cases(a, b, c) => CoreExpr::Cases(rec1(a, fresh), rec1(b, fresh), rec1(c, fresh)),
        CoreExpr::Cas(a, b, c) => CoreExpr::Cas(rec1(a, fresh), rec1(b, fresh), rec1(c, fresh)),
    }
}

/// One evaluation-context frame. A context is a stack of frames, outermost
/// first; the hole sits below the last frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Frame {
    InInl,
    InInr,
    PairL(Arc<CoreExpr>),
    PairR(Value),
    InCases(Arc<CoreExpr>, Arc<CoreExpr>),
    InFst,
    InSnd,
    AppL(Arc<CoreExpr>),
    AppR(Value),
    InAssert,
    InRef,
    InDeref,
    AssignL(Arc<CoreExpr>),
    AssignR(Value),
    InIo(Tag),
    InAtomic,
    CasA(Arc<CoreExpr>, Arc<CoreExpr>),
    CasB(Value, Arc<CoreExpr>),
    CasC(Value, Value),
    AssignPvarL(Arc<CoreExpr>),
    AssignPvarR(Value),
    PrimL(PrimOp, Arc<CoreExpr>),
    PrimR(PrimOp, Value),
}

/// Rebuilds `K[e/•]`.
pub fn plug(frames: &[Frame], e: CoreExpr) -> CoreExpr {
    frames.iter().rev().fold(e, |e, f| {
        let e = Arc::new(e);
        match f {
            Frame::InInl => CoreExpr::Inl(e),
            Frame::InInr => CoreExpr::Inr(e),
            Frame::PairL(rhs) => CoreExpr::Pair(e, rhs.clone()),
            Frame::PairR(v) => CoreExpr::Pair(Arc::new(v.into_expr()), e),
            Frame::InCases(b1, b2) => CoreExpr::Cases(e, b1.clone(), b2.clone()),
            Frame::InFst => CoreExpr::Fst(e),
            Frame::InSnd => CoreExpr::Snd(e),
            Frame::AppL(arg) => CoreExpr::App(e, arg.clone()),
            Frame::AppR(f) => CoreExpr::App(Arc::new(f.into_expr()), e),
            Frame::InAssert => CoreExpr::Assert(e),
            Frame::InRef => CoreExpr::Ref(e),
            Frame::InDeref => CoreExpr::Deref(e),
            Frame::AssignL(rhs) => CoreExpr::Assign(e, rhs.clone()),
            Frame::AssignR(l) => CoreExpr::Assign(Arc::new(l.into_expr()), e),
            Frame::InIo(t) => CoreExpr::Io(t.clone(), e),
            Frame::InAtomic => CoreExpr::AtomicDeref(e),
            Frame::CasA(b, c) => CoreExpr::Cas(e, b.clone(), c.clone()),
            Frame::CasB(a, c) => CoreExpr::Cas(Arc::new(a.into_expr()), e, c.clone()),
            Frame::CasC(a, b) => {
                CoreExpr::Cas(Arc::new(a.into_expr()), Arc::new(b.into_expr()), e)
            }
            Frame::AssignPvarL(rhs) => CoreExpr::AssignPvar(e, rhs.clone()),
            Frame::AssignPvarR(i) => CoreExpr::AssignPvar(Arc::new(i.into_expr()), e),
            Frame::PrimL(op, rhs) => CoreExpr::Prim(*op, e, rhs.clone()),
            Frame::PrimR(op, l) => CoreExpr::Prim(*op, Arc::new(l.into_expr()), e),
        }
    })
}

/// A head redex: every evaluated position holds a value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Head {
    Cases(Value, Arc<CoreExpr>, Arc<CoreExpr>),
    Fst(Value),
    Snd(Value),
    App(Value, Value),
    Assert(Value),
    Ref(Value),
    Deref(Value),
    Assign(Value, Value),
    Io(Tag, Value),
    Fork(Arc<CoreExpr>),
    AtomicDeref(Value),
    Cas(Value, Value, Value),
    CreatePvar(Constraint),
    AssignPvar(PvarId, Value),
    Prim(PrimOp, Value, Value),
}

/// Result of decomposing an expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decomposed {
    IsValue(Value),
    /// Unique context/head split.
    Redex(Vec<Frame>, Head),
    /// Irreducible non-value: no head rule can ever apply.
    Stuck,
}

/// Splits a closed expression into the unique evaluation context and head
/// redex, or classifies it as a value or as stuck.
///
/// Heads whose applicability is heap-independent are classified here (e.g.
/// `fst(())` is `Stuck`); heap-dependent failures surface from
/// [`crate::interp::head_step`].
pub fn decompose(e: &CoreExpr) -> Decomposed {
    let mut frames: Vec<Frame> = Vec::new();
    let mut cur: &CoreExpr = e;
    loop {
        if let Some(v) = cur.as_value() {
            if frames.is_empty() {
                return Decomposed::IsValue(v);
            }
            // A value under a context can only happen when the frame above
            // expected more evaluation; handled below by frame dispatch.
            unreachable!("descent never stops on a value");
        }
        macro_rules! descend {
            ($sub:expr, $frame:expr, $head:expr) => {
                match $sub.as_value() {
                    Some(v) => match classify($head(v)) {
                        Some(h) => return Decomposed::Redex(frames, h),
                        None => return Decomposed::Stuck,
                    },
                    None => {
                        frames.push($frame);
                        cur = $sub;
                    }
                }
            };
        }
        match cur {
            CoreExpr::Unit
            | CoreExpr::Char(_)
            | CoreExpr::Int(_)
            | CoreExpr::Lambda(..)
            | CoreExpr::Loc(_)
            | CoreExpr::Pvar(_) => unreachable!("values are handled above"),
            // A free variable has no reduction rule.
            CoreExpr::Var(_) => return Decomposed::Stuck,
            CoreExpr::Inl(a) => {
                frames.push(Frame::InInl);
                cur = a;
            }
            CoreExpr::Inr(a) => {
                frames.push(Frame::InInr);
                cur = a;
            }
            CoreExpr::Pair(a, b) => match a.as_value() {
                Some(va) => descend!(b, Frame::PairR(va), |_v| unreachable!("pair of values is a value")),
                None => {
                    frames.push(Frame::PairL(b.clone()));
                    cur = a;
                }
            },
            CoreExpr::Cases(s, b1, b2) => {
                descend!(s, Frame::InCases(b1.clone(), b2.clone()), |v| Head::Cases(
                    v,
                    b1.clone(),
                    b2.clone()
                ))
            }
            CoreExpr::Fst(a) => descend!(a, Frame::InFst, Head::Fst),
            CoreExpr::Snd(a) => descend!(a, Frame::InSnd, Head::Snd),
            CoreExpr::App(f, a) => match f.as_value() {
                Some(vf) => descend!(a, Frame::AppR(vf.clone()), |va| Head::App(vf.clone(), va)),
                None => {
                    frames.push(Frame::AppL(a.clone()));
                    cur = f;
                }
            },
            CoreExpr::Assert(a) => descend!(a, Frame::InAssert, Head::Assert),
            CoreExpr::Ref(a) => descend!(a, Frame::InRef, Head::Ref),
            CoreExpr::Deref(a) => descend!(a, Frame::InDeref, Head::Deref),
            CoreExpr::Assign(l, r) => match l.as_value() {
                Some(vl) => descend!(r, Frame::AssignR(vl.clone()), |vr| Head::Assign(
                    vl.clone(),
                    vr
                )),
                None => {
                    frames.push(Frame::AssignL(r.clone()));
                    cur = l;
                }
            },
            CoreExpr::Io(t, a) => {
                descend!(a, Frame::InIo(t.clone()), |v| Head::Io(t.clone(), v))
            }
            // fork(e) is a head redex for arbitrary e: the body runs in the
            // forked thread, not in the forking one.
            CoreExpr::Fork(body) => {
                return Decomposed::Redex(frames, Head::Fork(body.clone()));
            }
            CoreExpr::AtomicDeref(a) => descend!(a, Frame::InAtomic, Head::AtomicDeref),
            CoreExpr::Cas(a, b, c) => match (a.as_value(), b.as_value()) {
                (None, _) => {
                    frames.push(Frame::CasA(b.clone(), c.clone()));
                    cur = a;
                }
                (Some(va), None) => {
                    frames.push(Frame::CasB(va, c.clone()));
                    cur = b;
                }
                (Some(va), Some(vb)) => {
                    descend!(c, Frame::CasC(va.clone(), vb.clone()), |vc| Head::Cas(
                        va.clone(),
                        vb.clone(),
                        vc
                    ))
                }
            },
            CoreExpr::CreatePvar(c) => {
                return Decomposed::Redex(frames, Head::CreatePvar(c.clone()));
            }
            CoreExpr::AssignPvar(i, r) => match i.as_value() {
                Some(Value::Pvar(id)) => {
                    descend!(r, Frame::AssignPvarR(Value::Pvar(id)), |v| Head::AssignPvar(
                        id, v
                    ))
                }
                // The second operand only evaluates under an identifier.
                Some(_) => return Decomposed::Stuck,
                None => {
                    frames.push(Frame::AssignPvarL(r.clone()));
                    cur = i;
                }
            },
            CoreExpr::Prim(op, a, b) => match a.as_value() {
                Some(va) => descend!(b, Frame::PrimR(*op, va.clone()), |vb| Head::Prim(
                    *op,
                    va.clone(),
                    vb
                )),
                None => {
                    frames.push(Frame::PrimL(*op, b.clone()));
                    cur = a;
                }
            },
        }
    }
}

/// Rejects heads that no rule can ever reduce, independent of the heap.
fn classify(h: Head) -> Option<Head> {
    let viable = match &h {
        Head::Cases(v, b1, b2) => match v {
            Value::Inl(_) => matches!(**b1, CoreExpr::Lambda(..)),
            Value::Inr(_) => matches!(**b2, CoreExpr::Lambda(..)),
            _ => false,
        },
        Head::Fst(v) | Head::Snd(v) => matches!(v, Value::Pair(..)),
        Head::App(f, _) => matches!(f, Value::Closure(..)),
        Head::Assert(v) => v.as_truth() == Some(true),
        Head::Ref(_) => true,
        Head::Deref(v) | Head::AtomicDeref(v) => matches!(v, Value::Loc(_)),
        Head::Assign(l, _) => matches!(l, Value::Loc(_)),
        Head::Io(..) | Head::Fork(_) | Head::CreatePvar(_) => true,
        Head::Cas(l, old, _) => matches!(l, Value::Loc(_)) && old.is_dataval(),
        Head::AssignPvar(_, v) => v.is_dataval(),
        Head::Prim(op, a, b) => match op {
            PrimOp::Add => matches!(
                (a, b),
                (Value::Int(_), Value::Int(_))
                    | (Value::Char(_), Value::Int(_))
                    | (Value::Int(_), Value::Char(_))
            ),
            PrimOp::Sub => matches!(
                (a, b),
                (Value::Int(_), Value::Int(_))
                    | (Value::Char(_), Value::Char(_))
                    | (Value::Char(_), Value::Int(_))
            ),
            PrimOp::Eq => a.is_dataval() && b.is_dataval(),
            PrimOp::Lt | PrimOp::Le => matches!(
                (a, b),
                (Value::Int(_), Value::Int(_)) | (Value::Char(_), Value::Char(_))
            ),
            PrimOp::Append => a.as_list().is_some() && b.as_list().is_some(),
        },
    };
    viable.then_some(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arc(e: CoreExpr) -> Arc<CoreExpr> {
        Arc::new(e)
    }

    #[test]
    fn substitute_replaces_free_occurrences() {
        let e = CoreExpr::Var("x".into());
        assert_eq!(substitute(&e, "x", &Value::Unit), CoreExpr::Unit);
    }

    #[test]
    fn substitute_respects_shadowing() {
        let lam = CoreExpr::Lambda("x".into(), arc(CoreExpr::Var("x".into())));
        assert_eq!(substitute(&lam, "x", &Value::Unit), lam);
    }

    #[test]
    fn substitute_in_pair() {
        let e = CoreExpr::Pair(arc(CoreExpr::Var("x".into())), arc(CoreExpr::Var("y".into())));
        let got = substitute(&e, "x", &Value::Char('a'));
        assert_eq!(
            got,
            CoreExpr::Pair(arc(CoreExpr::Char('a')), arc(CoreExpr::Var("y".into())))
        );
    }

    #[test]
    fn subst_expr_avoids_capture() {
        // (λy. x)[y/x] must not capture: the result applied to anything
        // still yields the outer y, not the binder.
        let lam = CoreExpr::Lambda("y".into(), arc(CoreExpr::Var("x".into())));
        let got = subst_expr(&lam, "x", &CoreExpr::Var("y".into()));
        match got {
            CoreExpr::Lambda(b, body) => {
                assert_ne!(b, "y");
                assert_eq!(*body, CoreExpr::Var("y".into()));
            }
            other => panic!("expected lambda, got {other:?}"),
        }
    }

    #[test]
    fn decompose_value() {
        assert_eq!(decompose(&CoreExpr::Unit), Decomposed::IsValue(Value::Unit));
    }

    #[test]
    fn decompose_fst_of_pair_is_head_redex_with_empty_context() {
        let e = CoreExpr::Fst(arc(CoreExpr::Pair(arc(CoreExpr::Unit), arc(CoreExpr::Unit))));
        match decompose(&e) {
            Decomposed::Redex(frames, Head::Fst(v)) => {
                assert!(frames.is_empty());
                assert_eq!(v, Value::Pair(Box::new(Value::Unit), Box::new(Value::Unit)));
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn decompose_app_of_unit_is_stuck() {
        let e = CoreExpr::App(arc(CoreExpr::Unit), arc(CoreExpr::Unit));
        assert_eq!(decompose(&e), Decomposed::Stuck);
    }

    #[test]
    fn decompose_assert_false_is_stuck() {
        let e = CoreExpr::Assert(arc(Value::truth(false).into_expr()));
        assert_eq!(decompose(&e), Decomposed::Stuck);
    }

    #[test]
    fn plug_round_trips() {
        // fst((•, ())) with hole filled by snd pair
        let inner = CoreExpr::Snd(arc(CoreExpr::Pair(arc(CoreExpr::Unit), arc(CoreExpr::Unit))));
        let e = CoreExpr::Fst(arc(CoreExpr::Pair(arc(inner.clone()), arc(CoreExpr::Unit))));
        match decompose(&e) {
            Decomposed::Redex(frames, Head::Snd(_)) => {
                assert_eq!(plug(&frames, inner), e);
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn fork_is_head_redex_even_with_reducible_body() {
        let body = CoreExpr::Fst(arc(CoreExpr::Pair(arc(CoreExpr::Unit), arc(CoreExpr::Unit))));
        let e = CoreExpr::Fork(arc(body.clone()));
        match decompose(&e) {
            Decomposed::Redex(frames, Head::Fork(b)) => {
                assert!(frames.is_empty());
                assert_eq!(*b, body);
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn list_round_trip() {
        let v = Value::string("hi");
        let items = v.as_list().unwrap();
        assert_eq!(items, vec![&Value::Char('h'), &Value::Char('i')]);
        assert!(v.is_dataval());
    }
}
