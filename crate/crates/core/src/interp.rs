//! The labeled small-step semantics: head reduction, thread pools, heaps.
//!
//! A configuration is a heap, a prophecy state and a thread pool. Stepping
//! a thread is deterministic once three choices are fixed from outside:
//! which thread runs, which result an I/O action gets (the monitor's job),
//! and which sequence a prophecy variable predicts (only in the
//! instrumented semantics). I/O and prophecy redexes therefore surface as
//! `NeedsIo`/`NeedsPrediction` outcomes instead of being resolved here.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::ast::{
    decompose, plug, substitute, CoreExpr, Decomposed, Head, IoAction, Loc, PrimOp, PvarId, Tag,
    Value,
};
use crate::prophecy::{AssignOutcome, Constraint, InstrAssign, PVarState, ProphecyHeap};

/// Finite map from locations to values. Allocation picks the smallest
/// unused index.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Heap(BTreeMap<Loc, Value>);

impl Heap {
    pub fn new() -> Self {
        Heap::default()
    }

    pub fn get(&self, l: &Loc) -> Option<&Value> {
        self.0.get(l)
    }

    pub fn contains(&self, l: &Loc) -> bool {
        self.0.contains_key(l)
    }

    pub fn insert(&mut self, l: Loc, v: Value) {
        self.0.insert(l, v);
    }

    pub fn alloc(&mut self, v: Value) -> Loc {
        let mut idx = 0usize;
        for l in self.0.keys() {
            if l.0 == idx {
                idx += 1;
            } else {
                break;
            }
        }
        let l = Loc(idx);
        self.0.insert(l, v);
        l
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Loc, &Value)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Which prophecy semantics the configuration runs under.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum PvarMode {
    /// Constraints with residual checks (the default).
    Constrained(PVarState),
    /// Concrete predictions, popped on match (erasure harness).
    Instrumented(ProphecyHeap),
}

impl PvarMode {
    pub fn constrained() -> Self {
        PvarMode::Constrained(PVarState::default())
    }

    pub fn instrumented() -> Self {
        PvarMode::Instrumented(ProphecyHeap::default())
    }
}

/// Heap, prophecy state and thread pool.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Config {
    pub heap: Heap,
    pub pvars: PvarMode,
    pub threads: Vec<CoreExpr>,
}

impl Config {
    pub fn single(program: CoreExpr) -> Self {
        Config {
            heap: Heap::new(),
            pvars: PvarMode::constrained(),
            threads: vec![program],
        }
    }

    pub fn all_finished(&self) -> bool {
        self.threads.iter().all(|t| t.is_value())
    }

    pub fn runnable(&self) -> Vec<usize> {
        self.threads
            .iter()
            .enumerate()
            .filter(|(_, t)| !t.is_value())
            .map(|(i, _)| i)
            .collect()
    }
}

/// Outcome of reducing one head redex against a heap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HeadOutcome {
    Reduced {
        heap: Heap,
        expr: CoreExpr,
        forked: Vec<CoreExpr>,
    },
    NeedsIo {
        tag: Tag,
        arg: Value,
    },
    NeedsPvar(PvarRedex),
    Stuck,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PvarRedex {
    Create(Constraint),
    Assign(PvarId, Value),
}

pub(crate) fn prim_add(a: &Value, b: &Value) -> Option<Value> {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => x.checked_add(*y).map(Value::Int),
        (Value::Char(c), Value::Int(n)) | (Value::Int(n), Value::Char(c)) => {
            let code = (*c as u32) as i64 + n;
            u32::try_from(code).ok().and_then(char::from_u32).map(Value::Char)
        }
        _ => None,
    }
}

pub(crate) fn prim_sub(a: &Value, b: &Value) -> Option<Value> {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => x.checked_sub(*y).map(Value::Int),
        (Value::Char(c), Value::Char(d)) => Some(Value::Int(*c as i64 - *d as i64)),
        (Value::Char(c), Value::Int(n)) => {
            let code = (*c as u32) as i64 - n;
            u32::try_from(code).ok().and_then(char::from_u32).map(Value::Char)
        }
        _ => None,
    }
}

fn prim_step(op: PrimOp, a: &Value, b: &Value) -> Option<Value> {
    match op {
        PrimOp::Add => prim_add(a, b),
        PrimOp::Sub => prim_sub(a, b),
        PrimOp::Eq => a.data_eq(b).map(Value::truth),
        PrimOp::Lt => match (a, b) {
            (Value::Int(x), Value::Int(y)) => Some(Value::truth(x < y)),
            (Value::Char(x), Value::Char(y)) => Some(Value::truth(x < y)),
            _ => None,
        },
        PrimOp::Le => match (a, b) {
            (Value::Int(x), Value::Int(y)) => Some(Value::truth(x <= y)),
            (Value::Char(x), Value::Char(y)) => Some(Value::truth(x <= y)),
            _ => None,
        },
        PrimOp::Append => {
            let xs = a.as_list()?;
            let ys = b.as_list()?;
            Some(Value::list(xs.into_iter().chain(ys).cloned()))
        }
    }
}

/// Reduces one head redex. Pure rules rewrite heap and expression; I/O and
/// prophecy redexes are surfaced for the caller to resolve.
pub fn head_step(heap: &Heap, head: &Head) -> HeadOutcome {
    let reduced = |heap: Heap, expr: CoreExpr| HeadOutcome::Reduced {
        heap,
        expr,
        forked: Vec::new(),
    };
    match head {
        Head::Cases(v, b1, b2) => match v {
            Value::Inl(inner) => match &**b1 {
                CoreExpr::Lambda(x, body) => reduced(heap.clone(), substitute(body, x, inner)),
                _ => HeadOutcome::Stuck,
            },
            Value::Inr(inner) => match &**b2 {
                CoreExpr::Lambda(x, body) => reduced(heap.clone(), substitute(body, x, inner)),
                _ => HeadOutcome::Stuck,
            },
            _ => HeadOutcome::Stuck,
        },
        Head::Fst(Value::Pair(a, _)) => reduced(heap.clone(), a.into_expr()),
        Head::Snd(Value::Pair(_, b)) => reduced(heap.clone(), b.into_expr()),
        Head::Fst(_) | Head::Snd(_) => HeadOutcome::Stuck,
        Head::App(Value::Closure(x, body), arg) => {
            reduced(heap.clone(), substitute(body, x, arg))
        }
        Head::App(..) => HeadOutcome::Stuck,
        Head::Assert(v) => {
            if v.as_truth() == Some(true) {
                reduced(heap.clone(), CoreExpr::Unit)
            } else {
                HeadOutcome::Stuck
            }
        }
        Head::Ref(v) => {
            let mut h = heap.clone();
            let l = h.alloc(v.clone());
            reduced(h, CoreExpr::Loc(l))
        }
        Head::Deref(Value::Loc(l)) | Head::AtomicDeref(Value::Loc(l)) => match heap.get(l) {
            Some(v) => reduced(heap.clone(), v.into_expr()),
            None => HeadOutcome::Stuck,
        },
        Head::Deref(_) | Head::AtomicDeref(_) => HeadOutcome::Stuck,
        Head::Assign(Value::Loc(l), v) => {
            if heap.contains(l) {
                let mut h = heap.clone();
                h.insert(*l, v.clone());
                reduced(h, CoreExpr::Unit)
            } else {
                HeadOutcome::Stuck
            }
        }
        Head::Assign(..) => HeadOutcome::Stuck,
        Head::Io(tag, arg) => HeadOutcome::NeedsIo {
            tag: tag.clone(),
            arg: arg.clone(),
        },
        Head::Fork(body) => HeadOutcome::Reduced {
            heap: heap.clone(),
            expr: CoreExpr::Unit,
            forked: vec![(**body).clone()],
        },
        Head::Cas(Value::Loc(l), old, new) => match heap.get(l) {
            Some(cur) => match cur.data_eq(old) {
                Some(true) => {
                    let mut h = heap.clone();
                    h.insert(*l, new.clone());
                    reduced(h, Value::truth(true).into_expr())
                }
                Some(false) => reduced(heap.clone(), Value::truth(false).into_expr()),
                None => HeadOutcome::Stuck,
            },
            None => HeadOutcome::Stuck,
        },
        Head::Cas(..) => HeadOutcome::Stuck,
        Head::CreatePvar(c) => HeadOutcome::NeedsPvar(PvarRedex::Create(c.clone())),
        Head::AssignPvar(id, v) => HeadOutcome::NeedsPvar(PvarRedex::Assign(*id, v.clone())),
        Head::Prim(op, a, b) => match prim_step(*op, a, b) {
            Some(v) => reduced(heap.clone(), v.into_expr()),
            None => HeadOutcome::Stuck,
        },
    }
}

/// External resolution for a step whose head needs one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepInput {
    None,
    /// Result for an I/O redex.
    IoResult(Value),
    /// Predicted sequence for an instrumented prophecy creation.
    Prediction(Vec<Value>),
}

/// Result of `thread_step`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepResult {
    Stepped {
        config: Config,
        label: Option<IoAction>,
    },
    /// Call again with `StepInput::IoResult`.
    NeedsIo { tag: Tag, arg: Value },
    /// Instrumented creation: call again with `StepInput::Prediction`.
    NeedsPrediction { constraint: Constraint },
    /// Constrained assignment with empty residual, or instrumented
    /// mismatch: the thread retries forever. Safe, no progress.
    Blocked,
    /// Constrained creation with unsatisfiable constraint: refused.
    UnsatisfiableConstraint,
    /// No rule applies; feeds the failed predicate.
    Stuck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ThreadStepError {
    #[error("thread index out of range")]
    BadIndex,
    #[error("thread is already a value")]
    ThreadIsValue,
}

/// Rewrites exactly one thread. Forked threads are inserted directly after
/// it, before the original suffix.
pub fn thread_step(
    cfg: &Config,
    index: usize,
    input: StepInput,
) -> Result<StepResult, ThreadStepError> {
    let expr = cfg.threads.get(index).ok_or(ThreadStepError::BadIndex)?;
    let (frames, head) = match decompose(expr) {
        Decomposed::IsValue(_) => return Err(ThreadStepError::ThreadIsValue),
        Decomposed::Stuck => return Ok(StepResult::Stuck),
        Decomposed::Redex(frames, head) => (frames, head),
    };
    let finish = |heap: Heap,
                  pvars: PvarMode,
                  expr: CoreExpr,
                  forked: Vec<CoreExpr>,
                  label: Option<IoAction>| {
        let mut threads = cfg.threads.clone();
        threads[index] = plug(&frames, expr);
        threads.splice(index + 1..index + 1, forked);
        StepResult::Stepped {
            config: Config {
                heap,
                pvars,
                threads,
            },
            label,
        }
    };
    match head_step(&cfg.heap, &head) {
        HeadOutcome::Stuck => Ok(StepResult::Stuck),
        HeadOutcome::Reduced { heap, expr, forked } => {
            Ok(finish(heap, cfg.pvars.clone(), expr, forked, None))
        }
        HeadOutcome::NeedsIo { tag, arg } => match input {
            StepInput::IoResult(result) => {
                let action = IoAction::new(tag, arg, result.clone());
                Ok(finish(
                    cfg.heap.clone(),
                    cfg.pvars.clone(),
                    result.into_expr(),
                    Vec::new(),
                    Some(action),
                ))
            }
            _ => Ok(StepResult::NeedsIo { tag, arg }),
        },
        HeadOutcome::NeedsPvar(PvarRedex::Create(c)) => match &cfg.pvars {
            PvarMode::Constrained(st) => match st.create_pvar_step(c) {
                Ok((st, id)) => Ok(finish(
                    cfg.heap.clone(),
                    PvarMode::Constrained(st),
                    CoreExpr::Pvar(id),
                    Vec::new(),
                    None,
                )),
                Err(_) => Ok(StepResult::UnsatisfiableConstraint),
            },
            PvarMode::Instrumented(h) => match input {
                StepInput::Prediction(seq) => {
                    let (h, id) = h.create(seq);
                    Ok(finish(
                        cfg.heap.clone(),
                        PvarMode::Instrumented(h),
                        CoreExpr::Pvar(id),
                        Vec::new(),
                        None,
                    ))
                }
                _ => Ok(StepResult::NeedsPrediction { constraint: c }),
            },
        },
        HeadOutcome::NeedsPvar(PvarRedex::Assign(id, v)) => match &cfg.pvars {
            PvarMode::Constrained(st) => match st.assign_pvar_step(id, &v) {
                AssignOutcome::Stepped(st) => Ok(finish(
                    cfg.heap.clone(),
                    PvarMode::Constrained(st),
                    CoreExpr::Unit,
                    Vec::new(),
                    None,
                )),
                AssignOutcome::Blocked => Ok(StepResult::Blocked),
                AssignOutcome::UnknownIdentifier => Ok(StepResult::Stuck),
            },
            PvarMode::Instrumented(h) => match h.assign(id, &v) {
                InstrAssign::Stepped(h) => Ok(finish(
                    cfg.heap.clone(),
                    PvarMode::Instrumented(h),
                    CoreExpr::Unit,
                    Vec::new(),
                    None,
                )),
                InstrAssign::NoMatch => Ok(StepResult::Blocked),
                InstrAssign::UnknownIdentifier => Ok(StepResult::Stuck),
            },
        },
    }
}

/// What a thread is about to do.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ThreadStatus {
    Value,
    Stuck,
    /// A pure step (possibly forking).
    Pure,
    Io { tag: Tag, arg: Value },
    PvarCreate { constraint: Constraint },
    PvarAssign { id: PvarId, value: Value },
}

pub fn thread_status(cfg: &Config, index: usize) -> ThreadStatus {
    let expr = &cfg.threads[index];
    match decompose(expr) {
        Decomposed::IsValue(_) => ThreadStatus::Value,
        Decomposed::Stuck => ThreadStatus::Stuck,
        Decomposed::Redex(_, head) => match &head {
            Head::Io(tag, arg) => ThreadStatus::Io {
                tag: tag.clone(),
                arg: arg.clone(),
            },
            Head::CreatePvar(c) => ThreadStatus::PvarCreate {
                constraint: c.clone(),
            },
            Head::AssignPvar(id, v) => ThreadStatus::PvarAssign {
                id: *id,
                value: v.clone(),
            },
            _ => match head_step(&cfg.heap, &head) {
                HeadOutcome::Stuck => ThreadStatus::Stuck,
                _ => ThreadStatus::Pure,
            },
        },
    }
}

/// A configuration has failed when some thread is neither a value nor
/// reducible: structurally stuck, performing an I/O action the monitor
/// allows no result for, creating a prophecy variable with an
/// unsatisfiable constraint, or assigning an unknown identifier. Blocked
/// assignments do not fail: the retry loop is a (non-productive) step.
pub fn is_failed(cfg: &Config, mut io_allowed: impl FnMut(&Tag, &Value) -> bool) -> bool {
    (0..cfg.threads.len()).any(|i| match thread_status(cfg, i) {
        ThreadStatus::Value | ThreadStatus::Pure => false,
        ThreadStatus::Stuck => true,
        ThreadStatus::Io { tag, arg } => !io_allowed(&tag, &arg),
        ThreadStatus::PvarCreate { constraint } => match &cfg.pvars {
            PvarMode::Constrained(_) => !constraint.nonempty(),
            PvarMode::Instrumented(_) => false,
        },
        ThreadStatus::PvarAssign { id, .. } => match &cfg.pvars {
            PvarMode::Constrained(st) => !st.live.contains_key(&id),
            PvarMode::Instrumented(h) => !h.heap.contains_key(&id),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::parse_program;
    use std::collections::BTreeSet;
    use std::sync::Arc;

    fn tags(ts: &[&str]) -> BTreeSet<String> {
        ts.iter().map(|s| s.to_string()).collect()
    }

    fn step_to_end(mut cfg: Config, fuel: usize) -> Config {
        for _ in 0..fuel {
            let runnable = cfg.runnable();
            if runnable.is_empty() {
                break;
            }
            let i = runnable[0];
            match thread_step(&cfg, i, StepInput::None).unwrap() {
                StepResult::Stepped { config, .. } => cfg = config,
                other => panic!("unexpected step result: {other:?}"),
            }
        }
        cfg
    }

    #[test]
    fn cas_matching_dataval_swaps_and_returns_true() {
        let mut heap = Heap::new();
        let l = heap.alloc(Value::Int(1));
        let head = Head::Cas(Value::Loc(l), Value::Int(1), Value::Int(2));
        match head_step(&heap, &head) {
            HeadOutcome::Reduced { heap, expr, forked } => {
                assert_eq!(heap.get(&l), Some(&Value::Int(2)));
                assert_eq!(expr, Value::truth(true).into_expr());
                assert!(forked.is_empty());
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn cas_mismatch_leaves_heap_and_returns_false() {
        let mut heap = Heap::new();
        let l = heap.alloc(Value::Int(1));
        let head = Head::Cas(Value::Loc(l), Value::Int(9), Value::Int(2));
        match head_step(&heap, &head) {
            HeadOutcome::Reduced { heap, expr, .. } => {
                assert_eq!(heap.get(&l), Some(&Value::Int(1)));
                assert_eq!(expr, Value::truth(false).into_expr());
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn cas_on_non_dataval_is_stuck() {
        let mut heap = Heap::new();
        let clo = Value::Closure("x".into(), Arc::new(CoreExpr::Var("x".into())));
        let l = heap.alloc(clo.clone());
        let head = Head::Cas(Value::Loc(l), clo, Value::Int(2));
        assert_eq!(head_step(&heap, &head), HeadOutcome::Stuck);
    }

    #[test]
    fn fork_forks() {
        let heap = Heap::new();
        let body = Arc::new(CoreExpr::Unit);
        match head_step(&heap, &Head::Fork(body.clone())) {
            HeadOutcome::Reduced { expr, forked, .. } => {
                assert_eq!(expr, CoreExpr::Unit);
                assert_eq!(forked, vec![CoreExpr::Unit]);
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn ref_allocates_smallest_unused_index() {
        let mut heap = Heap::new();
        let l0 = heap.alloc(Value::Int(0));
        let l1 = heap.alloc(Value::Int(1));
        assert_eq!((l0, l1), (Loc(0), Loc(1)));
    }

    #[test]
    fn stepping_a_value_thread_is_a_precondition_violation() {
        let cfg = Config {
            heap: Heap::new(),
            pvars: PvarMode::constrained(),
            threads: vec![CoreExpr::Unit, CoreExpr::Fst(Arc::new(CoreExpr::Unit))],
        };
        assert_eq!(
            thread_step(&cfg, 0, StepInput::None),
            Err(ThreadStepError::ThreadIsValue)
        );
    }

    #[test]
    fn fork_inside_context_grows_pool_after_forking_thread() {
        let prog = parse_program("let x := fork(()) in x", &tags(&[])).unwrap();
        let cfg = Config::single(prog);
        match thread_step(&cfg, 0, StepInput::None).unwrap() {
            StepResult::Stepped { config, label } => {
                assert_eq!(label, None);
                assert_eq!(config.threads.len(), 2);
                assert_eq!(config.threads[1], CoreExpr::Unit);
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn assert_false_fails() {
        let prog = parse_program("assert(false)", &tags(&[])).unwrap();
        let cfg = Config::single(prog);
        assert!(is_failed(&cfg, |_, _| true));
    }

    #[test]
    fn finished_pool_is_not_failed() {
        let cfg = Config::single(CoreExpr::Unit);
        assert!(!is_failed(&cfg, |_, _| false));
    }

    #[test]
    fn io_with_no_allowed_result_is_failed() {
        let prog = parse_program("putchar('x')", &tags(&["putchar"])).unwrap();
        let cfg = Config::single(prog);
        assert!(is_failed(&cfg, |_, _| false));
        assert!(!is_failed(&cfg, |_, _| true));
    }

    #[test]
    fn to_upper_arithmetic() {
        let prog = parse_program("let c := 'c' in c - 'a' + 'A'", &tags(&[])).unwrap();
        let cfg = step_to_end(Config::single(prog), 10);
        assert_eq!(cfg.threads[0], CoreExpr::Char('C'));
    }

    #[test]
    fn heap_framing_assignment_touches_one_location() {
        let prog =
            parse_program("let a := ref(1) in let b := ref(2) in a <- 9", &tags(&[])).unwrap();
        let cfg = step_to_end(Config::single(prog), 20);
        assert_eq!(cfg.heap.get(&Loc(0)), Some(&Value::Int(9)));
        assert_eq!(cfg.heap.get(&Loc(1)), Some(&Value::Int(2)));
    }
}
