//! Prophecy variables.
//!
//! Two executable flavors live here:
//!
//! - the *constrained* semantics, which is what the monitor and explorer
//!   run: a prophecy variable carries a constraint on the sequence of
//!   values that will be assigned to it, and each assignment replaces the
//!   constraint by its residual. An assignment whose residual is empty is
//!   *blocked* — the executable image of an infinite retry loop — which is
//!   safe but makes no progress. This realizes the derived proof rules for
//!   constrained incremental prophecy variables directly as runtime checks.
//! - the *instrumented* semantics, used by the erasure harness: each
//!   variable is bound at creation to a concrete finite sequence of
//!   predicted values, and an assignment either pops a matching head or
//!   self-loops.
//!
//! Simple assign-once prophecy variables are just the constrained flavor
//! with singleton length-1 sequences; there is no separate machinery.
//!
//! [`erasure_check`] explores both flavors exhaustively over a finite value
//! domain and reports whether instrumented-safety implies
//! constrained-safety, and whether every configuration reachable in the
//! constrained semantics is reachable in the instrumented one under every
//! prediction drawn from the domain.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::ast::{PvarId, Value};

/// A finite value sequence, closed (exactly these values) or open-ended
/// (these values and then anything).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct SeqLit {
    pub elems: Vec<Value>,
    pub open: bool,
}

impl SeqLit {
    pub fn closed(elems: Vec<Value>) -> Self {
        SeqLit { elems, open: false }
    }
}

/// Constraint on the sequence of values assigned to a prophecy variable.
///
/// `Union` is produced by residuals of `Interleave` and is not writable in
/// surface syntax.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Constraint {
    Universal,
    Literal(BTreeSet<SeqLit>),
    Interleave(Box<Constraint>, Box<Constraint>),
    SuffixAny(BTreeSet<Vec<Value>>),
    Union(Vec<Constraint>),
}

impl Constraint {
    pub fn empty() -> Constraint {
        Constraint::Literal(BTreeSet::new())
    }

    /// Whether the denoted sequence set is nonempty. Decidable for every
    /// constructor.
    pub fn nonempty(&self) -> bool {
        match self {
            Constraint::Universal => true,
            Constraint::Literal(s) => !s.is_empty(),
            Constraint::Interleave(a, b) => a.nonempty() && b.nonempty(),
            Constraint::SuffixAny(p) => !p.is_empty(),
            Constraint::Union(cs) => cs.iter().any(|c| c.nonempty()),
        }
    }

    /// Whether the empty sequence is a member.
    pub fn nullable(&self) -> bool {
        match self {
            Constraint::Universal => true,
            Constraint::Literal(s) => s.iter().any(|l| l.elems.is_empty()),
            Constraint::Interleave(a, b) => a.nullable() && b.nullable(),
            Constraint::SuffixAny(p) => p.contains(&Vec::new()),
            Constraint::Union(cs) => cs.iter().any(|c| c.nullable()),
        }
    }

    /// The residual after observing `v`: the set `{μ | v·μ ∈ C}`.
    pub fn residual(&self, v: &Value) -> Constraint {
        match self {
            Constraint::Universal => Constraint::Universal,
            Constraint::Literal(s) => {
                let mut out = BTreeSet::new();
                for l in s {
                    match l.elems.split_first() {
                        Some((h, rest)) if h == v => {
                            out.insert(SeqLit {
                                elems: rest.to_vec(),
                                open: l.open,
                            });
                        }
                        None if l.open => {
                            // open-ended and fully consumed: keeps accepting
                            out.insert(l.clone());
                        }
                        _ => {}
                    }
                }
                Constraint::Literal(out)
            }
            Constraint::Interleave(a, b) => {
                let mut branches = Vec::new();
                let ra = a.residual(v);
                if ra.nonempty() && b.nonempty() {
                    branches.push(Constraint::Interleave(Box::new(ra), b.clone()));
                }
                let rb = b.residual(v);
                if rb.nonempty() && a.nonempty() {
                    branches.push(Constraint::Interleave(a.clone(), Box::new(rb)));
                }
                match branches.len() {
                    0 => Constraint::empty(),
                    1 => branches.pop().unwrap(),
                    _ => Constraint::Union(branches),
                }
            }
            Constraint::SuffixAny(p) => {
                if p.contains(&Vec::new()) {
                    return Constraint::Universal;
                }
                let popped: BTreeSet<Vec<Value>> = p
                    .iter()
                    .filter_map(|pre| match pre.split_first() {
                        Some((h, rest)) if h == v => Some(rest.to_vec()),
                        _ => None,
                    })
                    .collect();
                if popped.is_empty() {
                    Constraint::empty()
                } else if popped.contains(&Vec::new()) {
                    // a fully consumed prefix admits any continuation
                    Constraint::Universal
                } else {
                    Constraint::SuffixAny(popped)
                }
            }
            Constraint::Union(cs) => {
                let mut branches: Vec<Constraint> = cs
                    .iter()
                    .map(|c| c.residual(v))
                    .filter(|c| c.nonempty())
                    .collect();
                match branches.len() {
                    0 => Constraint::empty(),
                    1 => branches.pop().unwrap(),
                    _ => Constraint::Union(branches),
                }
            }
        }
    }

    /// Exact membership via the derivative chain.
    pub fn accepts(&self, seq: &[Value]) -> bool {
        match seq.split_first() {
            None => self.nullable(),
            Some((h, rest)) => self.residual(h).accepts(rest),
        }
    }

    /// Prefix acceptance: every step of the residual chain stays nonempty.
    /// This is exactly the condition under which a program can perform the
    /// assignments `seq` one at a time without blocking.
    pub fn accepts_prefix(&self, seq: &[Value]) -> bool {
        let mut cur = self.clone();
        if !cur.nonempty() {
            return false;
        }
        for v in seq {
            cur = cur.residual(v);
            if !cur.nonempty() {
                return false;
            }
        }
        true
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn seq(l: &SeqLit, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            write!(f, "[")?;
            for (i, v) in l.elems.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}", crate::ast::print_value(v))?;
            }
            write!(f, "]")?;
            if l.open {
                write!(f, "..")?;
            }
            Ok(())
        }
        match self {
            Constraint::Universal => write!(f, "any"),
            Constraint::Literal(s) => {
                write!(f, "{{")?;
                for (i, l) in s.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    seq(l, f)?;
                }
                write!(f, "}}")
            }
            Constraint::Interleave(a, b) => write!(f, "interleave({a}, {b})"),
            Constraint::SuffixAny(p) => {
                write!(f, "prefix{{")?;
                for (i, pre) in p.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    seq(&SeqLit::closed(pre.clone()), f)?;
                }
                write!(f, "}}")
            }
            Constraint::Union(cs) => {
                write!(f, "union(")?;
                for (i, c) in cs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{c}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("prophecy constraint is unsatisfiable")]
pub struct UnsatisfiableConstraint;

/// Constrained prophecy state: the set of live identifiers with their
/// remaining constraints. Assignment pops the constraint to its residual;
/// identifiers stay live.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct PVarState {
    next: usize,
    pub live: BTreeMap<PvarId, Constraint>,
}

/// Outcome of a constrained assignment step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AssignOutcome {
    /// The step is enabled; new state.
    Stepped(PVarState),
    /// Residual is empty: the thread blocks (retries forever). Safe.
    Blocked,
    /// The identifier was never created: stuck.
    UnknownIdentifier,
}

impl PVarState {
    /// Creates a fresh constrained prophecy variable. Refused when the
    /// constraint is unsatisfiable.
    pub fn create_pvar_step(
        &self,
        constraint: Constraint,
    ) -> Result<(PVarState, PvarId), UnsatisfiableConstraint> {
        if !constraint.nonempty() {
            return Err(UnsatisfiableConstraint);
        }
        let id = PvarId(self.next);
        let mut st = self.clone();
        st.next += 1;
        st.live.insert(id, constraint);
        Ok((st, id))
    }

    /// Assigns `v`; enabled only when the residual stays satisfiable.
    pub fn assign_pvar_step(&self, id: PvarId, v: &Value) -> AssignOutcome {
        match self.live.get(&id) {
            None => AssignOutcome::UnknownIdentifier,
            Some(c) => {
                let r = c.residual(v);
                if r.nonempty() {
                    let mut st = self.clone();
                    st.live.insert(id, r);
                    AssignOutcome::Stepped(st)
                } else {
                    AssignOutcome::Blocked
                }
            }
        }
    }
}

/// Instrumented prophecy state: each live identifier holds the remaining
/// predicted sequence (a finite prefix of the conceptually infinite
/// prediction).
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ProphecyHeap {
    next: usize,
    pub heap: BTreeMap<PvarId, Vec<Value>>,
}

/// Outcome of an instrumented assignment step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InstrAssign {
    /// Head matched and was popped.
    Stepped(ProphecyHeap),
    /// Prediction mismatch (or exhausted prefix): self-loop.
    NoMatch,
    /// Identifier not in the prophecy heap: stuck.
    UnknownIdentifier,
}

impl ProphecyHeap {
    pub fn create(&self, prediction: Vec<Value>) -> (ProphecyHeap, PvarId) {
        let id = PvarId(self.next);
        let mut st = self.clone();
        st.next += 1;
        st.heap.insert(id, prediction);
        (st, id)
    }

    pub fn assign(&self, id: PvarId, v: &Value) -> InstrAssign {
        match self.heap.get(&id) {
            None => InstrAssign::UnknownIdentifier,
            Some(seq) => match seq.split_first() {
                Some((h, rest)) if h == v => {
                    let mut st = self.clone();
                    st.heap.insert(id, rest.to_vec());
                    InstrAssign::Stepped(st)
                }
                // An exhausted finite prefix stands for an unknown infinite
                // tail; treat it like a mismatch.
                _ => InstrAssign::NoMatch,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ch(c: char) -> Value {
        Value::Char(c)
    }

    fn lit(seqs: &[&[Value]]) -> Constraint {
        Constraint::Literal(seqs.iter().map(|s| SeqLit::closed(s.to_vec())).collect())
    }

    #[test]
    fn literal_residual_pops_heads() {
        let c = lit(&[&[ch('x'), ch('y')]]);
        let r = c.residual(&ch('x'));
        assert_eq!(r, lit(&[&[ch('y')]]));
    }

    #[test]
    fn universal_residual_is_universal() {
        assert_eq!(
            Constraint::Universal.residual(&ch('q')),
            Constraint::Universal
        );
    }

    #[test]
    fn interleave_residual_takes_either_side() {
        // {[A]} || {[B]} denotes {AB, BA}
        let c = Constraint::Interleave(
            Box::new(lit(&[&[ch('A')]])),
            Box::new(lit(&[&[ch('B')]])),
        );
        let after_b = c.residual(&ch('B'));
        assert!(after_b.nonempty());
        assert!(after_b.accepts(&[ch('A')]));
        assert!(!after_b.accepts(&[ch('B')]));
        // full chain: A then B exhausts the constraint
        let after_ab = c.residual(&ch('A')).residual(&ch('B'));
        assert!(after_ab.nullable());
        assert!(!after_ab.residual(&ch('A')).nonempty());
    }

    #[test]
    fn open_literal_accepts_any_tail() {
        let c = Constraint::Literal(
            [SeqLit {
                elems: vec![ch('a')],
                open: true,
            }]
            .into_iter()
            .collect(),
        );
        assert!(c.accepts(&[ch('a'), ch('z'), ch('q')]));
        assert!(!c.accepts(&[ch('b')]));
        assert!(!c.accepts(&[]));
    }

    #[test]
    fn open_literal_blocked_on_wrong_head() {
        let c = Constraint::Literal(
            [SeqLit {
                elems: vec![ch('A')],
                open: true,
            }]
            .into_iter()
            .collect(),
        );
        assert!(!c.residual(&ch('B')).nonempty());
    }

    #[test]
    fn suffix_any_residuals() {
        let c = Constraint::SuffixAny([vec![ch('a'), ch('b')]].into_iter().collect());
        assert!(c.accepts(&[ch('a'), ch('b'), ch('z')]));
        assert!(!c.accepts(&[ch('a')]));
        assert_eq!(
            c.residual(&ch('a')).residual(&ch('b')),
            Constraint::Universal
        );
        assert!(!c.residual(&ch('x')).nonempty());
    }

    #[test]
    fn create_requires_satisfiable_constraint() {
        let st = PVarState::default();
        assert_eq!(
            st.create_pvar_step(Constraint::empty()),
            Err(UnsatisfiableConstraint)
        );
        let (st, id) = st.create_pvar_step(Constraint::Universal).unwrap();
        assert!(st.live.contains_key(&id));
    }

    #[test]
    fn assign_blocks_on_empty_residual() {
        let st = PVarState::default();
        let (st, id) = st
            .create_pvar_step(lit(&[&[Value::Int(1), Value::Int(2)]]))
            .unwrap();
        assert!(matches!(
            st.assign_pvar_step(id, &Value::Int(2)),
            AssignOutcome::Blocked
        ));
        let st = match st.assign_pvar_step(id, &Value::Int(1)) {
            AssignOutcome::Stepped(st) => st,
            other => panic!("expected step, got {other:?}"),
        };
        assert!(matches!(
            st.assign_pvar_step(id, &Value::Int(2)),
            AssignOutcome::Stepped(_)
        ));
    }

    #[test]
    fn assign_unknown_identifier() {
        let st = PVarState::default();
        assert_eq!(
            st.assign_pvar_step(PvarId(7), &Value::Unit),
            AssignOutcome::UnknownIdentifier
        );
    }

    #[test]
    fn instrumented_pops_on_match_and_loops_otherwise() {
        let h = ProphecyHeap::default();
        let (h, id) = h.create(vec![Value::Int(1), Value::Int(2)]);
        assert_eq!(h.assign(id, &Value::Int(2)), InstrAssign::NoMatch);
        let h = match h.assign(id, &Value::Int(1)) {
            InstrAssign::Stepped(h) => h,
            other => panic!("unexpected {other:?}"),
        };
        let h = match h.assign(id, &Value::Int(2)) {
            InstrAssign::Stepped(h) => h,
            other => panic!("unexpected {other:?}"),
        };
        // exhausted prefix behaves like a mismatch
        assert_eq!(h.assign(id, &Value::Int(1)), InstrAssign::NoMatch);
    }

    #[test]
    fn display_is_parseable_shape() {
        let c = Constraint::Interleave(
            Box::new(Constraint::Literal(
                [SeqLit {
                    elems: vec![Value::string("n1 says 'a'")],
                    open: false,
                }]
                .into_iter()
                .collect(),
            )),
            Box::new(Constraint::Universal),
        );
        assert_eq!(c.to_string(), "interleave({[\"n1 says 'a'\"]}, any)");
    }
}
