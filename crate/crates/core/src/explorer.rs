//! Bounded exhaustive exploration of monitored configurations.
//!
//! The explorer checks the safety predicate over every schedule and every
//! environment result the specification admits, up to a depth measured in
//! total steps across all threads. Branching at each node covers (a) the
//! runnable thread indices, (b) every admitted result of an I/O redex, and
//! (c) prophecy outcomes. The first counterexample in canonical branch
//! order (threads ascending, results in value order) is reported; a
//! depth-first walk with ordered children finds exactly that one.
//!
//! Revisits are pruned through canonical keys: locations and prophecy
//! identifiers are renumbered in first-use order, so configurations equal
//! up to allocation order collapse. A state is re-explored only when
//! reached with more remaining depth than before.
//!
//! Blocked prophecy assignments and busy-wait loops are not
//! counterexamples; they quiesce or cycle, and safety is all that is
//! checked here.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::ast::{CoreExpr, IoAction, Loc, PvarId, Tag, Value};
use crate::interp::{thread_step, Config, Heap, PvarMode, StepInput, StepResult};
use crate::monitor::SpecState;
use crate::petri::{Marking, Net, NetError};
use crate::prophecy::{Constraint, PVarState, ProphecyHeap, SeqLit};

#[derive(Debug, Clone, Copy)]
pub struct ExploreOptions {
    pub dedup: bool,
    pub closure_bound: usize,
    pub max_states: usize,
    pub parallel: bool,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        ExploreOptions {
            dedup: true,
            closure_bound: 64,
            max_states: 1_000_000,
            parallel: false,
        }
    }
}

/// One resolved choice along a branch: which thread stepped and, for I/O
/// steps, which result was taken (with a flag telling whether an
/// environment oracle would have been consulted, i.e. the action admitted
/// several results).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BranchChoice {
    pub thread: usize,
    pub io: Option<(Value, bool)>,
}

/// How a branch failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum FailKind {
    ProgramViolation { tag: Tag, arg: Value },
    Failure { thread: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum ExploreVerdict {
    SafeUpToDepth {
        depth: usize,
        states: usize,
    },
    Counterexample {
        branch: Vec<BranchChoice>,
        trace: Vec<IoAction>,
        failure: FailKind,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ExploreStats {
    pub states_visited: usize,
    pub dedup_hits: usize,
    pub max_pool: usize,
    /// Edges not taken because the assignment is constraint-blocked or the
    /// successor repeats the current configuration.
    pub blocked_hits: usize,
    /// Edges leaving nodes where one I/O redex admitted several results.
    pub env_branch_edges: usize,
    /// Edges leaving nodes with several runnable threads.
    pub schedule_branch_edges: usize,
    pub terminal_branches: usize,
    pub frontier_branches: usize,
    /// Quiescent leaves: every unfinished thread is constraint-blocked.
    pub constraint_blocked_branches: usize,
}

impl ExploreStats {
    fn absorb(&mut self, other: &ExploreStats) {
        self.states_visited += other.states_visited;
        self.dedup_hits += other.dedup_hits;
        self.max_pool = self.max_pool.max(other.max_pool);
        self.blocked_hits += other.blocked_hits;
        self.env_branch_edges += other.env_branch_edges;
        self.schedule_branch_edges += other.schedule_branch_edges;
        self.terminal_branches += other.terminal_branches;
        self.frontier_branches += other.frontier_branches;
        self.constraint_blocked_branches += other.constraint_blocked_branches;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Report {
    pub verdict: ExploreVerdict,
    pub stats: ExploreStats,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExploreError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("state budget of {budget} states exceeded")]
    StateBudgetExceeded { budget: usize },
}

/// Why the observer is being called.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisitKind {
    /// An interior node was entered.
    Node,
    /// All threads are values.
    Terminal,
    /// Depth bound reached.
    Frontier,
    /// No edges and not finished: every unfinished thread is blocked.
    Quiescent,
    /// Pruned by the visited set.
    Pruned,
}

/// Everything an observer sees at a visit.
pub struct VisitEvent<'a> {
    pub kind: VisitKind,
    pub config: &'a Config,
    pub trace: &'a [IoAction],
}

// ---------------------------------------------------------------------------
// canonical keys

fn collect_expr_ids(e: &CoreExpr, locs: &mut Vec<Loc>, pvars: &mut Vec<PvarId>) {
    match e {
        CoreExpr::Loc(l) => {
            if !locs.contains(l) {
                locs.push(*l);
            }
        }
        CoreExpr::Pvar(i) => {
            if !pvars.contains(i) {
                pvars.push(*i);
            }
        }
        CoreExpr::Unit
        | CoreExpr::Char(_)
        | CoreExpr::Int(_)
        | CoreExpr::Var(_)
        | CoreExpr::CreatePvar(_) => {}
        CoreExpr::Inl(a)
        | CoreExpr::Inr(a)
        | CoreExpr::Lambda(_, a)
        | CoreExpr::Fst(a)
        | CoreExpr::Snd(a)
        | CoreExpr::Assert(a)
        | CoreExpr::Ref(a)
        | CoreExpr::Deref(a)
        | CoreExpr::AtomicDeref(a)
        | CoreExpr::Fork(a)
        | CoreExpr::Io(_, a) => collect_expr_ids(a, locs, pvars),
        CoreExpr::Pair(a, b)
        | CoreExpr::App(a, b)
        | CoreExpr::Assign(a, b)
        | CoreExpr::AssignPvar(a, b)
        | CoreExpr::Prim(_, a, b) => {
            collect_expr_ids(a, locs, pvars);
            collect_expr_ids(b, locs, pvars);
        }
        CoreExpr::Cases(a, b, c) | CoreExpr::Cas(a, b, c) => {
            collect_expr_ids(a, locs, pvars);
            collect_expr_ids(b, locs, pvars);
            collect_expr_ids(c, locs, pvars);
        }
    }
}

fn collect_value_ids(v: &Value, locs: &mut Vec<Loc>, pvars: &mut Vec<PvarId>) {
    match v {
        Value::Loc(l) => {
            if !locs.contains(l) {
                locs.push(*l);
            }
        }
        Value::Pvar(i) => {
            if !pvars.contains(i) {
                pvars.push(*i);
            }
        }
        Value::Unit | Value::Char(_) | Value::Int(_) => {}
        Value::Inl(a) | Value::Inr(a) => collect_value_ids(a, locs, pvars),
        Value::Pair(a, b) => {
            collect_value_ids(a, locs, pvars);
            collect_value_ids(b, locs, pvars);
        }
        Value::Closure(_, body) => collect_expr_ids(body, locs, pvars),
    }
}

fn rename_expr(e: &CoreExpr, locs: &BTreeMap<Loc, Loc>, pvars: &BTreeMap<PvarId, PvarId>) -> CoreExpr {
    let r = |a: &Arc<CoreExpr>| Arc::new(rename_expr(a, locs, pvars));
    match e {
        CoreExpr::Loc(l) => CoreExpr::Loc(locs[l]),
        CoreExpr::Pvar(i) => CoreExpr::Pvar(pvars[i]),
        CoreExpr::Unit
        | CoreExpr::Char(_)
        | CoreExpr::Int(_)
        | CoreExpr::Var(_)
        | CoreExpr::CreatePvar(_) => e.clone(),
        CoreExpr::Inl(a) => CoreExpr::Inl(r(a)),
        CoreExpr::Inr(a) => CoreExpr::Inr(r(a)),
        CoreExpr::Lambda(x, a) => CoreExpr::Lambda(x.clone(), r(a)),
        CoreExpr::Fst(a) => CoreExpr::Fst(r(a)),
        CoreExpr::Snd(a) => CoreExpr::Snd(r(a)),
        CoreExpr::Assert(a) => CoreExpr::Assert(r(a)),
        CoreExpr::Ref(a) => CoreExpr::Ref(r(a)),
        CoreExpr::Deref(a) => CoreExpr::Deref(r(a)),
        CoreExpr::AtomicDeref(a) => CoreExpr::AtomicDeref(r(a)),
        CoreExpr::Fork(a) => CoreExpr::Fork(r(a)),
        CoreExpr::Io(t, a) => CoreExpr::Io(t.clone(), r(a)),
        CoreExpr::Pair(a, b) => CoreExpr::Pair(r(a), r(b)),
        CoreExpr::App(a, b) => CoreExpr::App(r(a), r(b)),
        CoreExpr::Assign(a, b) => CoreExpr::Assign(r(a), r(b)),
        CoreExpr::AssignPvar(a, b) => CoreExpr::AssignPvar(r(a), r(b)),
        CoreExpr::Prim(op, a, b) => CoreExpr::Prim(*op, r(a), r(b)),
        CoreExpr::Cases(a, b, c) => CoreExpr::Cases(r(a), r(b), r(c)),
        CoreExpr::Cas(a, b, c) => CoreExpr::Cas(r(a), r(b), r(c)),
    }
}

fn rename_value(v: &Value, locs: &BTreeMap<Loc, Loc>, pvars: &BTreeMap<PvarId, PvarId>) -> Value {
    match v {
        Value::Loc(l) => Value::Loc(locs[l]),
        Value::Pvar(i) => Value::Pvar(pvars[i]),
        Value::Unit | Value::Char(_) | Value::Int(_) => v.clone(),
        Value::Inl(a) => Value::Inl(Box::new(rename_value(a, locs, pvars))),
        Value::Inr(a) => Value::Inr(Box::new(rename_value(a, locs, pvars))),
        Value::Pair(a, b) => Value::Pair(
            Box::new(rename_value(a, locs, pvars)),
            Box::new(rename_value(b, locs, pvars)),
        ),
        Value::Closure(x, body) => {
            Value::Closure(x.clone(), Arc::new(rename_expr(body, locs, pvars)))
        }
    }
}

/// Renumbers locations and prophecy identifiers in first-use order
/// (threads left to right, then heap, then prophecy state), so that
/// configurations equal up to allocation order get equal keys.
pub(crate) fn canonicalize(cfg: &Config) -> Config {
    let mut loc_order: Vec<Loc> = Vec::new();
    let mut pvar_order: Vec<PvarId> = Vec::new();
    for t in &cfg.threads {
        collect_expr_ids(t, &mut loc_order, &mut pvar_order);
    }
    for (l, v) in cfg.heap.iter() {
        if !loc_order.contains(l) {
            loc_order.push(*l);
        }
        collect_value_ids(v, &mut loc_order, &mut pvar_order);
    }
    match &cfg.pvars {
        PvarMode::Constrained(st) => {
            for id in st.live.keys() {
                if !pvar_order.contains(id) {
                    pvar_order.push(*id);
                }
            }
        }
        PvarMode::Instrumented(h) => {
            for id in h.heap.keys() {
                if !pvar_order.contains(id) {
                    pvar_order.push(*id);
                }
            }
        }
    }
    let loc_map: BTreeMap<Loc, Loc> = loc_order
        .iter()
        .enumerate()
        .map(|(i, l)| (*l, Loc(i)))
        .collect();
    let pvar_map: BTreeMap<PvarId, PvarId> = pvar_order
        .iter()
        .enumerate()
        .map(|(i, p)| (*p, PvarId(i)))
        .collect();

    let threads = cfg
        .threads
        .iter()
        .map(|t| rename_expr(t, &loc_map, &pvar_map))
        .collect();
    let mut heap = Heap::new();
    // insert in renamed order so allocation stays lowest-unused-compatible
    let mut entries: Vec<(Loc, Value)> = cfg
        .heap
        .iter()
        .map(|(l, v)| (loc_map[l], rename_value(v, &loc_map, &pvar_map)))
        .collect();
    entries.sort_by_key(|(l, _)| *l);
    for (l, v) in entries {
        heap.insert(l, v);
    }
    let pvars = match &cfg.pvars {
        PvarMode::Constrained(st) => {
            let mut renamed = PVarState::default();
            for (id, c) in &st.live {
                let (next, fresh) = renamed.create_pvar_step(c.clone()).expect("live is nonempty");
                debug_assert_eq!(fresh, pvar_map[id]);
                renamed = next;
            }
            PvarMode::Constrained(renamed)
        }
        PvarMode::Instrumented(h) => {
            let mut renamed = ProphecyHeap::default();
            for (id, seq) in &h.heap {
                let (next, fresh) = renamed.create(seq.clone());
                debug_assert_eq!(fresh, pvar_map[id]);
                renamed = next;
            }
            PvarMode::Instrumented(renamed)
        }
    };
    Config {
        heap,
        pvars,
        threads,
    }
}

/// 128-bit structural key of a canonicalized configuration plus the
/// specification markings.
pub(crate) fn canonical_key(cfg: &Config, markings: &BTreeSet<Marking>) -> u128 {
    let canon = canonicalize(cfg);
    let mut h1 = DefaultHasher::new();
    canon.hash(&mut h1);
    markings.hash(&mut h1);
    let mut h2 = DefaultHasher::new();
    0xB5E5u16.hash(&mut h2);
    canon.hash(&mut h2);
    markings.hash(&mut h2);
    ((h1.finish() as u128) << 64) | h2.finish() as u128
}

// ---------------------------------------------------------------------------
// node expansion

enum Edge {
    Step {
        choice: BranchChoice,
        label: Option<IoAction>,
        config: Config,
        spec: SpecState,
    },
    Fail {
        choice: BranchChoice,
        failure: FailKind,
    },
}

struct Expansion {
    edges: Vec<Edge>,
    /// True when some unfinished thread exists but produced no edge
    /// (constraint-blocked).
    any_blocked: bool,
    /// Number of edges skipped as self-loops or blocked.
    blocked_hits: usize,
    multi_thread: bool,
}

fn expand(cfg: &Config, spec: &SpecState, closure_bound: usize) -> Result<Expansion, ExploreError> {
    let runnable = cfg.runnable();
    let mut edges = Vec::new();
    let mut any_blocked = false;
    let mut blocked_hits = 0usize;
    for &i in &runnable {
        match thread_step(cfg, i, StepInput::None).expect("runnable thread") {
            StepResult::Stepped { config, label } => {
                debug_assert!(label.is_none());
                edges.push(Edge::Step {
                    choice: BranchChoice {
                        thread: i,
                        io: None,
                    },
                    label: None,
                    config,
                    spec: spec.clone(),
                });
            }
            StepResult::NeedsIo { tag, arg } => {
                let (allowed, truncated) = spec
                    .allowed_results(&tag, &arg, closure_bound)
                    .map_err(ExploreError::Net)?;
                if truncated {
                    return Err(ExploreError::Net(NetError::ClosureTruncated {
                        bound: closure_bound,
                    }));
                }
                if allowed.is_empty() {
                    edges.push(Edge::Fail {
                        choice: BranchChoice {
                            thread: i,
                            io: None,
                        },
                        failure: FailKind::ProgramViolation { tag, arg },
                    });
                    continue;
                }
                let consulted = allowed.len() > 1;
                for (result, next_spec) in allowed {
                    match thread_step(cfg, i, StepInput::IoResult(result.clone()))
                        .expect("io thread steps")
                    {
                        StepResult::Stepped { config, label } => {
                            edges.push(Edge::Step {
                                choice: BranchChoice {
                                    thread: i,
                                    io: Some((result, consulted)),
                                },
                                label,
                                config,
                                spec: next_spec,
                            });
                        }
                        other => unreachable!("io resolution cannot yield {other:?}"),
                    }
                }
            }
            StepResult::Blocked => {
                any_blocked = true;
                blocked_hits += 1;
            }
            StepResult::UnsatisfiableConstraint | StepResult::Stuck => {
                edges.push(Edge::Fail {
                    choice: BranchChoice {
                        thread: i,
                        io: None,
                    },
                    failure: FailKind::Failure { thread: i },
                });
            }
            StepResult::NeedsPrediction { .. } => {
                unreachable!("exploration uses the constrained semantics")
            }
        }
    }
    Ok(Expansion {
        edges,
        any_blocked,
        blocked_hits,
        multi_thread: runnable.len() > 1,
    })
}

// ---------------------------------------------------------------------------
// sequential DFS

struct Dfs<'a, F: FnMut(&VisitEvent<'_>)> {
    opts: ExploreOptions,
    stats: ExploreStats,
    /// key -> largest remaining depth already explored from it
    visited: HashMap<u128, usize>,
    frozen: Option<&'a HashMap<u128, usize>>,
    observer: F,
}

struct NodeFrame {
    edges: Vec<Option<Edge>>,
    next: usize,
    remaining: usize,
    /// Backtracking bookkeeping for the edge that entered this node.
    pop_choice: bool,
    pop_trace: bool,
}

enum Entered {
    Leaf,
    Interior,
}

impl<'a, F: FnMut(&VisitEvent<'_>)> Dfs<'a, F> {
    /// Leaf classification, budget accounting and dedup for one node.
    fn enter(
        &mut self,
        cfg: &Config,
        spec: &SpecState,
        remaining: usize,
        trace: &[IoAction],
    ) -> Result<Entered, ExploreError> {
        self.stats.states_visited += 1;
        if self.stats.states_visited > self.opts.max_states {
            return Err(ExploreError::StateBudgetExceeded {
                budget: self.opts.max_states,
            });
        }
        self.stats.max_pool = self.stats.max_pool.max(cfg.threads.len());
        (self.observer)(&VisitEvent {
            kind: VisitKind::Node,
            config: cfg,
            trace,
        });
        if cfg.all_finished() {
            self.stats.terminal_branches += 1;
            (self.observer)(&VisitEvent {
                kind: VisitKind::Terminal,
                config: cfg,
                trace,
            });
            return Ok(Entered::Leaf);
        }
        if remaining == 0 {
            self.stats.frontier_branches += 1;
            (self.observer)(&VisitEvent {
                kind: VisitKind::Frontier,
                config: cfg,
                trace,
            });
            return Ok(Entered::Leaf);
        }
        if self.opts.dedup {
            let key = canonical_key(cfg, &spec.markings);
            let frozen_depth = self.frozen.and_then(|f| f.get(&key)).copied();
            let local_depth = self.visited.get(&key).copied();
            let best = frozen_depth.into_iter().chain(local_depth).max();
            if best.is_some_and(|d| d >= remaining) {
                self.stats.dedup_hits += 1;
                (self.observer)(&VisitEvent {
                    kind: VisitKind::Pruned,
                    config: cfg,
                    trace,
                });
                return Ok(Entered::Leaf);
            }
            self.visited.insert(key, remaining);
        }
        Ok(Entered::Interior)
    }

    /// Explores from one root. Returns the first counterexample in
    /// canonical branch order, if any.
    fn run(
        &mut self,
        root_cfg: Config,
        root_spec: SpecState,
        depth: usize,
        prefix_choices: &[BranchChoice],
        prefix_trace: &[IoAction],
    ) -> Result<Option<(Vec<BranchChoice>, Vec<IoAction>, FailKind)>, ExploreError> {
        let mut choices: Vec<BranchChoice> = prefix_choices.to_vec();
        let mut trace: Vec<IoAction> = prefix_trace.to_vec();
        let mut stack: Vec<NodeFrame> = Vec::new();

        match self.enter(&root_cfg, &root_spec, depth, &trace)? {
            Entered::Leaf => return Ok(None),
            Entered::Interior => {
                let exp = expand(&root_cfg, &root_spec, self.opts.closure_bound)?;
                self.note_expansion(&exp, &root_cfg, &trace);
                stack.push(NodeFrame {
                    edges: exp.edges.into_iter().map(Some).collect(),
                    next: 0,
                    remaining: depth,
                    pop_choice: false,
                    pop_trace: false,
                });
            }
        }

        loop {
            let Some(top) = stack.last_mut() else {
                break;
            };
            if top.next >= top.edges.len() {
                let f = stack.pop().expect("nonempty");
                if f.pop_choice {
                    choices.pop();
                }
                if f.pop_trace {
                    trace.pop();
                }
                continue;
            }
            let idx = top.next;
            top.next += 1;
            let remaining = top.remaining;
            let edge = top.edges[idx].take().expect("edge taken once");
            match edge {
                Edge::Fail { choice, failure } => {
                    let mut branch = choices.clone();
                    branch.push(choice);
                    return Ok(Some((branch, trace.clone(), failure)));
                }
                Edge::Step {
                    choice,
                    label,
                    config,
                    spec,
                } => {
                    choices.push(choice);
                    let has_label = label.is_some();
                    if let Some(a) = label {
                        trace.push(a);
                    }
                    match self.enter(&config, &spec, remaining - 1, &trace)? {
                        Entered::Leaf => {
                            choices.pop();
                            if has_label {
                                trace.pop();
                            }
                        }
                        Entered::Interior => {
                            let exp = expand(&config, &spec, self.opts.closure_bound)?;
                            self.note_expansion(&exp, &config, &trace);
                            stack.push(NodeFrame {
                                edges: exp.edges.into_iter().map(Some).collect(),
                                next: 0,
                                remaining: remaining - 1,
                                pop_choice: true,
                                pop_trace: has_label,
                            });
                        }
                    }
                }
            }
        }
        Ok(None)
    }

    fn note_expansion(&mut self, exp: &Expansion, cfg: &Config, trace: &[IoAction]) {
        self.stats.blocked_hits += exp.blocked_hits;
        if exp.multi_thread {
            self.stats.schedule_branch_edges += exp.edges.len();
        }
        // edges from io redexes with several results
        let mut by_thread: BTreeMap<usize, usize> = BTreeMap::new();
        for e in &exp.edges {
            if let Edge::Step { choice, .. } = e {
                if choice.io.is_some() {
                    *by_thread.entry(choice.thread).or_insert(0) += 1;
                }
            }
        }
        for (_, n) in by_thread {
            if n > 1 {
                self.stats.env_branch_edges += n;
            }
        }
        if exp.edges.is_empty() && exp.any_blocked {
            self.stats.constraint_blocked_branches += 1;
            (self.observer)(&VisitEvent {
                kind: VisitKind::Quiescent,
                config: cfg,
                trace,
            });
        }
    }
}

/// Explores all schedules and admitted environment results to `depth`
/// total steps.
pub fn explore(
    program: CoreExpr,
    net: Arc<Net>,
    depth: usize,
    opts: ExploreOptions,
) -> Result<Report, ExploreError> {
    explore_with_observer(program, net, depth, opts, |_| {})
}

/// Like [`explore`], invoking `observer` at every visit. The observer runs
/// in the sequential phase only; with `parallel` set, subtree exploration
/// below the split depth runs without observers, so property checks that
/// need observation should run sequentially.
pub fn explore_with_observer(
    program: CoreExpr,
    net: Arc<Net>,
    depth: usize,
    opts: ExploreOptions,
    observer: impl FnMut(&VisitEvent<'_>),
) -> Result<Report, ExploreError> {
    let (spec, truncated) =
        SpecState::initial(net, opts.closure_bound).map_err(ExploreError::Net)?;
    if truncated {
        return Err(ExploreError::Net(NetError::ClosureTruncated {
            bound: opts.closure_bound,
        }));
    }
    let cfg = Config::single(program);
    if opts.parallel {
        explore_parallel(cfg, spec, depth, opts)
    } else {
        let mut dfs = Dfs {
            opts,
            stats: ExploreStats::default(),
            visited: HashMap::new(),
            frozen: None,
            observer,
        };
        let found = dfs.run(cfg, spec, depth, &[], &[])?;
        Ok(finish_report(found, depth, dfs.stats))
    }
}

fn finish_report(
    found: Option<(Vec<BranchChoice>, Vec<IoAction>, FailKind)>,
    depth: usize,
    stats: ExploreStats,
) -> Report {
    match found {
        Some((branch, trace, failure)) => Report {
            verdict: ExploreVerdict::Counterexample {
                branch,
                trace,
                failure,
            },
            stats,
        },
        None => Report {
            verdict: ExploreVerdict::SafeUpToDepth {
                depth,
                states: stats.states_visited,
            },
            stats,
        },
    }
}

/// Parallel mode: a sequential shallow phase collects frontier nodes in
/// canonical order, then scoped threads explore the subtrees with the
/// shallow visited set frozen and shared read-only. The merge takes the
/// first counterexample in frontier order, so the result is independent of
/// worker scheduling.
fn explore_parallel(
    cfg: Config,
    spec: SpecState,
    depth: usize,
    opts: ExploreOptions,
) -> Result<Report, ExploreError> {
    let split = depth.min(6);
    struct FrontierNode {
        cfg: Config,
        spec: SpecState,
        remaining: usize,
        choices: Vec<BranchChoice>,
        trace: Vec<IoAction>,
    }
    // shallow phase: plain recursion to `split` steps, collecting leaves
    let mut stats = ExploreStats::default();
    let mut visited: HashMap<u128, usize> = HashMap::new();
    let mut frontier: Vec<FrontierNode> = Vec::new();

    fn shallow(
        cfg: Config,
        spec: SpecState,
        remaining: usize,
        full_remaining: usize,
        opts: &ExploreOptions,
        stats: &mut ExploreStats,
        visited: &mut HashMap<u128, usize>,
        frontier: &mut Vec<FrontierNode>,
        choices: &mut Vec<BranchChoice>,
        trace: &mut Vec<IoAction>,
    ) -> Result<Option<(Vec<BranchChoice>, Vec<IoAction>, FailKind)>, ExploreError> {
        stats.states_visited += 1;
        if stats.states_visited > opts.max_states {
            return Err(ExploreError::StateBudgetExceeded {
                budget: opts.max_states,
            });
        }
        stats.max_pool = stats.max_pool.max(cfg.threads.len());
        if cfg.all_finished() {
            stats.terminal_branches += 1;
            return Ok(None);
        }
        if full_remaining == 0 {
            stats.frontier_branches += 1;
            return Ok(None);
        }
        let key = canonical_key(&cfg, &spec.markings);
        if opts.dedup && visited.get(&key).is_some_and(|&d| d >= full_remaining) {
            stats.dedup_hits += 1;
            return Ok(None);
        }
        if remaining == 0 {
            // handed off to a worker; the key stays out of the frozen set
            // so the subtree root is not self-pruned
            frontier.push(FrontierNode {
                cfg,
                spec,
                remaining: full_remaining,
                choices: choices.clone(),
                trace: trace.clone(),
            });
            return Ok(None);
        }
        if opts.dedup {
            visited.insert(key, full_remaining);
        }
        let exp = expand(&cfg, &spec, opts.closure_bound)?;
        stats.blocked_hits += exp.blocked_hits;
        if exp.multi_thread {
            stats.schedule_branch_edges += exp.edges.len();
        }
        if exp.edges.is_empty() && exp.any_blocked {
            stats.constraint_blocked_branches += 1;
        }
        for edge in exp.edges {
            match edge {
                Edge::Fail { choice, failure } => {
                    let mut branch = choices.clone();
                    branch.push(choice);
                    return Ok(Some((branch, trace.clone(), failure)));
                }
                Edge::Step {
                    choice,
                    label,
                    config,
                    spec: next_spec,
                } => {
                    choices.push(choice);
                    let pushed = label.is_some();
                    if let Some(a) = label {
                        trace.push(a);
                    }
                    let found = shallow(
                        config,
                        next_spec,
                        remaining - 1,
                        full_remaining - 1,
                        opts,
                        stats,
                        visited,
                        frontier,
                        choices,
                        trace,
                    )?;
                    choices.pop();
                    if pushed {
                        trace.pop();
                    }
                    if found.is_some() {
                        return Ok(found);
                    }
                }
            }
        }
        Ok(None)
    }

    let mut choices = Vec::new();
    let mut trace = Vec::new();
    if let Some(found) = shallow(
        cfg,
        spec,
        split,
        depth,
        &opts,
        &mut stats,
        &mut visited,
        &mut frontier,
        &mut choices,
        &mut trace,
    )? {
        return Ok(finish_report(Some(found), depth, stats));
    }

    let frozen = Arc::new(visited);
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(2)
        .min(frontier.len().max(1));
    let mut results: Vec<Option<Result<(ExploreStats, Option<(Vec<BranchChoice>, Vec<IoAction>, FailKind)>), ExploreError>>> =
        Vec::new();
    results.resize_with(frontier.len(), || None);
    let jobs: Vec<(usize, FrontierNode)> = frontier.into_iter().enumerate().collect();
    let next_job = std::sync::atomic::AtomicUsize::new(0);
    let results_mx = std::sync::Mutex::new(&mut results);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next_job.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= jobs.len() {
                    break;
                }
                let job = &jobs[i].1;
                let mut dfs = Dfs {
                    opts: ExploreOptions {
                        parallel: false,
                        ..opts
                    },
                    stats: ExploreStats::default(),
                    visited: HashMap::new(),
                    frozen: Some(&frozen),
                    observer: |_: &VisitEvent<'_>| {},
                };
                let out = dfs
                    .run(
                        job.cfg.clone(),
                        job.spec.clone(),
                        job.remaining,
                        &job.choices,
                        &job.trace,
                    )
                    .map(|found| (dfs.stats, found));
                results_mx.lock().unwrap()[jobs[i].0] = Some(out);
            });
        }
    });

    let mut found = None;
    for r in results {
        let (sub_stats, sub_found) = r.expect("every job ran")?;
        stats.absorb(&sub_stats);
        if found.is_none() {
            found = sub_found;
        }
    }
    Ok(finish_report(found, depth, stats))
}

// ---------------------------------------------------------------------------
// chat harness

pub use chat::{explore_chat, ChannelVariant, ChatReport, ChatScripts};

mod chat {
    use super::*;

    /// Per-member nickname and raw message list.
    #[derive(Debug, Clone)]
    pub struct ChatScripts {
        pub members: [(String, Vec<String>); 2],
    }

    impl ChatScripts {
        pub fn quoted(&self, member: usize) -> Vec<Value> {
            let (nick, msgs) = &self.members[member];
            msgs.iter()
                .map(|m| Value::string(&format!("{nick} says '{m}'")))
                .collect()
        }

        fn noise(&self, member: usize) -> Value {
            let (nick, _) = &self.members[member];
            Value::string(&format!("{nick} says '!'"))
        }
    }

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum ChannelVariant {
        /// Sends append at the tail; receives pop the head.
        Queue,
        /// Mutant: sends push at the head, reordering deliveries.
        Stack,
    }

    /// Outcome of the chat exploration plus the outgoing-order property.
    #[derive(Debug)]
    pub struct ChatReport {
        pub report: Report,
        /// Every traversed branch kept each member's outgoing sequence a
        /// prefix of one common interleaving of the quoted scripts.
        pub property_ok: bool,
        /// Human-readable evidence for the first property failure.
        pub property_evidence: Option<String>,
        /// Branches that quiesced on a blocked constraint.
        pub constraint_blocked: usize,
        /// Longest outgoing sequence observed for any member (nonvacuity).
        pub max_outgoing: usize,
    }

    fn value_seq_literal(vs: &[Value]) -> String {
        let mut s = String::from("[");
        for (i, v) in vs.iter().enumerate() {
            if i > 0 {
                s.push_str(", ");
            }
            s.push_str(&crate::ast::print_value(v));
        }
        s.push(']');
        s
    }

    /// Builds the pumps-and-channel system of the chat example as surface
    /// text. Members with empty scripts get no pump thread.
    fn chat_program(
        scripts: &ChatScripts,
        variant: ChannelVariant,
        constrained: bool,
    ) -> String {
        let q1 = value_seq_literal(&scripts.quoted(0));
        let q2 = value_seq_literal(&scripts.quoted(1));
        let cpvar = if constrained {
            format!("cpvar(interleave({{{q1}}}, {{{q2}}}))")
        } else {
            "create_pvar()".to_string()
        };
        let push = match variant {
            ChannelVariant::Queue => "elems ++ [v]",
            ChannelVariant::Stack => "[v] ++ elems",
        };
        let n1 = &scripts.members[0].0;
        let n2 = &scripts.members[1].0;
        let fork1 = if scripts.members[0].1.is_empty() {
            String::new()
        } else {
            format!("fork(pumpFromNick(\"{n1}\", chan));\n")
        };
        let fork2 = if scripts.members[1].1.is_empty() {
            String::new()
        } else {
            format!("fork(pumpFromNick(\"{n2}\", chan));\n")
        };
        format!(
            "fn send(c, v) {{\n\
             \u{20} let q := c.queue in\n\
             \u{20} let elems := <!q> in\n\
             \u{20} if cas(q, elems, {push}) then () else send(c, v)\n\
             }}\n\
             fn receive(c) {{\n\
             \u{20} let q := c.queue in\n\
             \u{20} let elems := <!q> in\n\
             \u{20} match elems {{\n\
             \u{20}   nil => receive(c),\n\
             \u{20}   cons(v, vs) =>\n\
             \u{20}     if cas(q, elems, vs) then {{ assign_pvar(c.pvar, v); v }}\n\
             \u{20}     else receive(c)\n\
             \u{20} }}\n\
             }}\n\
             fn pumpFromNick(n, c) {{\n\
             \u{20} loop {{ let m := receiveFromNick(n) in send(c, m) }}\n\
             }}\n\
             fn pumpRoom(c) {{\n\
             \u{20} loop {{\n\
             \u{20}   let m := receive(c) in\n\
             \u{20}   sendToNick((\"{n1}\", m));\n\
             \u{20}   sendToNick((\"{n2}\", m))\n\
             \u{20} }}\n\
             }}\n\
             let chan := {{ pvar := {cpvar}; queue := ref(nil) }} in\n\
             {fork1}{fork2}pumpRoom(chan)\n"
        )
    }

    /// The network side: scripted receives (with a repeating noise message
    /// once the script runs dry) and outgoing sends that must walk some
    /// interleaving of the remaining quoted scripts, independently per
    /// member.
    fn chat_net(scripts: &ChatScripts) -> String {
        let n1 = &scripts.members[0].0;
        let n2 = &scripts.members[1].0;
        let q1 = value_seq_literal(&scripts.quoted(0));
        let q2 = value_seq_literal(&scripts.quoted(1));
        let noise1 = crate::ast::print_value(&scripts.noise(0));
        let noise2 = crate::ast::print_value(&scripts.noise(1));
        format!(
            "tags receiveFromNick, sendToNick;\n\
             init rcvone({q1}) + rcvtwo({q2}) + outone({q1}, {q2}) + outtwo({q1}, {q2});\n\
             io receiveFromNick(rcvone(M :: Ms), \"{n1}\", M, rcvone(Ms));\n\
             io receiveFromNick(rcvone([]), \"{n1}\", {noise1}, rcvone([]));\n\
             io receiveFromNick(rcvtwo(M :: Ms), \"{n2}\", M, rcvtwo(Ms));\n\
             io receiveFromNick(rcvtwo([]), \"{n2}\", {noise2}, rcvtwo([]));\n\
             io sendToNick(outone(M :: R1, R2), (\"{n1}\", M), unit, outone(R1, R2));\n\
             io sendToNick(outone(R1, M :: R2), (\"{n1}\", M), unit, outone(R1, R2));\n\
             io sendToNick(outtwo(M :: R1, R2), (\"{n2}\", M), unit, outtwo(R1, R2));\n\
             io sendToNick(outtwo(R1, M :: R2), (\"{n2}\", M), unit, outtwo(R1, R2));\n"
        )
    }

    fn interleavings(a: &[Value], b: &[Value]) -> Vec<Vec<Value>> {
        if a.is_empty() {
            return vec![b.to_vec()];
        }
        if b.is_empty() {
            return vec![a.to_vec()];
        }
        let mut out = Vec::new();
        for mut tail in interleavings(&a[1..], b) {
            tail.insert(0, a[0].clone());
            out.push(tail);
        }
        for mut tail in interleavings(a, &b[1..]) {
            tail.insert(0, b[0].clone());
            out.push(tail);
        }
        out
    }

    fn is_prefix(p: &[Value], full: &[Value]) -> bool {
        p.len() <= full.len() && p.iter().zip(full).all(|(a, b)| a == b)
    }

    /// Both members' outgoing sequences must be prefixes of one common
    /// interleaving of the quoted scripts.
    fn common_prefix_interleaving(
        out1: &[Value],
        out2: &[Value],
        merges: &[Vec<Value>],
    ) -> bool {
        merges
            .iter()
            .any(|mu| is_prefix(out1, mu) && is_prefix(out2, mu))
    }

    fn outgoing(trace: &[IoAction], nick: &str) -> Vec<Value> {
        trace
            .iter()
            .filter_map(|a| {
                if a.tag != "sendToNick" {
                    return None;
                }
                match &a.arg {
                    Value::Pair(n, m) if **n == Value::string(nick) => Some((**m).clone()),
                    _ => None,
                }
            })
            .collect()
    }

    /// Explores the chat system over all schedules and checks the
    /// outgoing-order property on every traversed node.
    pub fn explore_chat(
        scripts: &ChatScripts,
        depth: usize,
        variant: ChannelVariant,
        constrained: bool,
        opts: ExploreOptions,
    ) -> Result<ChatReport, ExploreError> {
        let net_src = chat_net(scripts);
        let prog_src = chat_program(scripts, variant, constrained);
        let net = Arc::new(crate::petri::parse_net(&net_src).expect("generated net parses"));
        let program =
            crate::ast::parse_program(&prog_src, &net.tags).expect("generated program parses");
        let merges = interleavings(&scripts.quoted(0), &scripts.quoted(1));
        let nick1 = scripts.members[0].0.clone();
        let nick2 = scripts.members[1].0.clone();

        let mut property_ok = true;
        let mut property_evidence = None;
        let mut max_outgoing = 0usize;
        let report = explore_with_observer(program, net, depth, opts, |ev| {
            let out1 = outgoing(ev.trace, &nick1);
            let out2 = outgoing(ev.trace, &nick2);
            max_outgoing = max_outgoing.max(out1.len()).max(out2.len());
            if property_ok && !common_prefix_interleaving(&out1, &out2, &merges) {
                property_ok = false;
                property_evidence = Some(format!(
                    "outgoing sequences diverge from every interleaving: {} got {}, {} got {}",
                    nick1,
                    value_seq_literal(&out1),
                    nick2,
                    value_seq_literal(&out2),
                ));
            }
        })?;
        // a counterexample on a send is itself an order violation: the
        // attempted action extends the outgoing sequence illegally
        if let ExploreVerdict::Counterexample { trace, failure, .. } = &report.verdict {
            if let FailKind::ProgramViolation { tag, arg } = failure {
                if tag == "sendToNick" {
                    if let Value::Pair(n, m) = arg {
                        let nick = match (**n == Value::string(&nick1), &nick2) {
                            (true, _) => nick1.clone(),
                            (false, n2) => n2.clone(),
                        };
                        let mut out = outgoing(trace, &nick);
                        out.push((**m).clone());
                        if property_ok {
                            property_ok = false;
                            property_evidence = Some(format!(
                                "{} would receive {} which no interleaving allows",
                                nick,
                                value_seq_literal(&out),
                            ));
                        }
                    }
                }
            }
        }
        let constraint_blocked = report.stats.constraint_blocked_branches;
        Ok(ChatReport {
            report,
            property_ok,
            property_evidence,
            constraint_blocked,
            max_outgoing,
        })
    }
}

// ---------------------------------------------------------------------------

/// Replays a counterexample branch against the monitor: scripted thread
/// choices plus a global queue of the consulted environment results.
pub fn replay_branch(
    program: CoreExpr,
    net: Arc<Net>,
    branch: &[BranchChoice],
    closure_bound: usize,
) -> Result<crate::monitor::RunOutcome, crate::monitor::RunError> {
    let schedule: Vec<usize> = branch.iter().map(|c| c.thread).collect();
    let queue: std::collections::VecDeque<Value> = branch
        .iter()
        .filter_map(|c| match &c.io {
            Some((v, true)) => Some(v.clone()),
            _ => None,
        })
        .collect();
    crate::monitor::monitored_run(
        program,
        net,
        crate::monitor::EnvOracle::Queue(queue),
        crate::monitor::Schedule::Scripted(schedule),
        usize::MAX,
        crate::monitor::MonitorOptions {
            closure_bound,
            strict_closure: true,
        },
    )
}

#[cfg(test)]
mod tests;
