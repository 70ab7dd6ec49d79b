//! The monitoring semantics.
//!
//! A monitored run carries the residual specification alongside the
//! configuration: a set of candidate markings of the net. Observing an
//! action advances the specification to its derivative — the markings
//! reachable by silent closure plus one matching labeled firing — and the
//! run halts with a verdict the moment the program performs an action the
//! net forbids (program violation) or the environment supplies a result
//! the net does not admit (environment violation).
//!
//! Environment results come from an [`EnvOracle`]; the net checks them.
//! When an action admits exactly one result the oracle is not consulted.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::ast::{parse_value_literal, print_value, IoAction, Tag, Value};
use crate::interp::{thread_step, Config, StepInput, StepResult};
use crate::petri::{io_successors, silent_closure, Marking, Net, NetError};

/// The residual specification: a net plus the current set of candidate
/// markings. The denoted trace set is the union over the markings of
/// `Traces_N(V)`.
#[derive(Debug, Clone)]
pub struct SpecState {
    pub net: Arc<Net>,
    pub markings: BTreeSet<Marking>,
}

impl PartialEq for SpecState {
    fn eq(&self, other: &Self) -> bool {
        self.markings == other.markings && Arc::ptr_eq(&self.net, &other.net)
    }
}
impl Eq for SpecState {}

impl SpecState {
    /// Starts from the silent closure of the net's initial candidate
    /// markings. The `truncated` flag follows the closure bound.
    pub fn initial(net: Arc<Net>, closure_bound: usize) -> Result<(SpecState, bool), NetError> {
        let start: BTreeSet<Marking> = net.init.iter().cloned().collect();
        let (markings, truncated) = silent_closure(&net, &start, closure_bound)?;
        Ok((SpecState { net, markings }, truncated))
    }

    /// For each result the net admits for `tag(arg)` from here, the
    /// derivative specification. Empty iff the action is forbidden.
    pub fn allowed_results(
        &self,
        tag: &Tag,
        arg: &Value,
        closure_bound: usize,
    ) -> Result<(BTreeMap<Value, SpecState>, bool), NetError> {
        let succ = io_successors(&self.net, &self.markings, tag, arg, closure_bound)?;
        let map = succ
            .results
            .into_iter()
            .map(|(v, markings)| {
                (
                    v,
                    SpecState {
                        net: self.net.clone(),
                        markings,
                    },
                )
            })
            .collect();
        Ok((map, succ.truncated))
    }
}

/// Outcome of observing one action against the specification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Observation {
    Advanced(SpecState),
    /// No result would make the action legal.
    ProgramViolation,
    /// The action is legal but not with this result.
    EnvironmentViolation { allowed: Vec<Value> },
}

/// Advances the specification by one observed action.
pub fn observe(
    spec: &SpecState,
    tag: &Tag,
    arg: &Value,
    result: &Value,
    closure_bound: usize,
) -> Result<Observation, NetError> {
    let (allowed, _) = spec.allowed_results(tag, arg, closure_bound)?;
    if allowed.is_empty() {
        return Ok(Observation::ProgramViolation);
    }
    match allowed.get(result) {
        Some(next) => Ok(Observation::Advanced(next.clone())),
        None => Ok(Observation::EnvironmentViolation {
            allowed: allowed.keys().cloned().collect(),
        }),
    }
}

/// Where environment results come from.
pub enum EnvOracle {
    /// Finite script, consumed FIFO per tag.
    Script(BTreeMap<Tag, VecDeque<Value>>),
    /// One global FIFO queue (used to replay explorer branches).
    Queue(VecDeque<Value>),
    /// Ask on standard input.
    Interactive,
}

impl EnvOracle {
    pub fn empty() -> Self {
        EnvOracle::Script(BTreeMap::new())
    }

    fn next(&mut self, tag: &Tag, arg: &Value) -> Result<Option<Value>, RunError> {
        match self {
            EnvOracle::Script(map) => Ok(map.get_mut(tag).and_then(|q| q.pop_front())),
            EnvOracle::Queue(q) => Ok(q.pop_front()),
            EnvOracle::Interactive => {
                let mut err = std::io::stderr();
                let _ = write!(err, "{tag}({}) ? ", print_value(arg));
                let _ = err.flush();
                let mut line = String::new();
                if std::io::stdin().lock().read_line(&mut line).unwrap_or(0) == 0 {
                    return Ok(None);
                }
                let v = parse_value_literal(line.trim())
                    .map_err(|e| RunError::BadInteractiveInput(e.to_string()))?;
                Ok(Some(v))
            }
        }
    }
}

/// Parses an env script: one `tag literal` per line, `#` comments.
pub fn parse_env_script(text: &str) -> Result<BTreeMap<Tag, VecDeque<Value>>, RunError> {
    let mut map: BTreeMap<Tag, VecDeque<Value>> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (tag, rest) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| RunError::BadEnvScript(format!("line {}: expected `tag literal`", lineno + 1)))?;
        let v = parse_value_literal(rest.trim())
            .map_err(|e| RunError::BadEnvScript(format!("line {}: {e}", lineno + 1)))?;
        map.entry(tag.to_string()).or_default().push_back(v);
    }
    Ok(map)
}

/// Scheduling policy for a monitored run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Schedule {
    RoundRobin,
    SeededRandom(u64),
    /// Fixed thread choice per step (replay).
    Scripted(Vec<usize>),
}

/// Verdict of a monitored run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Ok {
        final_markings: BTreeSet<Marking>,
    },
    ProgramViolation {
        tag: Tag,
        arg: Value,
    },
    EnvironmentViolation {
        tag: Tag,
        arg: Value,
        provided: Value,
        allowed: Vec<Value>,
    },
    Failure {
        thread: usize,
    },
    FuelExhausted,
}

/// A verdict plus the trace performed up to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunOutcome {
    pub verdict: Verdict,
    pub trace: Vec<IoAction>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("environment script has no entry left for tag `{tag}`")]
    EnvExhausted { tag: Tag },
    #[error("malformed env script: {0}")]
    BadEnvScript(String),
    #[error("malformed interactive input: {0}")]
    BadInteractiveInput(String),
    #[error("scripted schedule ended or picked an unrunnable thread at step {step}")]
    BadSchedule { step: usize },
}

/// Options shared by runs and exploration.
#[derive(Debug, Clone, Copy)]
pub struct MonitorOptions {
    pub closure_bound: usize,
    /// Closure truncation is an error when set, a warning otherwise.
    pub strict_closure: bool,
}

impl Default for MonitorOptions {
    fn default() -> Self {
        MonitorOptions {
            closure_bound: 64,
            strict_closure: false,
        }
    }
}

struct Scheduler {
    policy: Schedule,
    rng: Option<rand_chacha::ChaCha8Rng>,
    step: usize,
    cursor: usize,
}

impl Scheduler {
    fn new(policy: Schedule) -> Self {
        use rand::SeedableRng;
        let rng = match &policy {
            Schedule::SeededRandom(seed) => Some(rand_chacha::ChaCha8Rng::seed_from_u64(*seed)),
            _ => None,
        };
        Scheduler {
            policy,
            rng,
            step: 0,
            cursor: 0,
        }
    }

    fn pick(&mut self, runnable: &[usize]) -> Result<usize, RunError> {
        use rand::Rng;
        let choice = match &self.policy {
            Schedule::RoundRobin => {
                let i = runnable
                    .iter()
                    .copied()
                    .find(|&i| i >= self.cursor)
                    .unwrap_or(runnable[0]);
                self.cursor = i + 1;
                i
            }
            Schedule::SeededRandom(_) => {
                let rng = self.rng.as_mut().unwrap();
                runnable[rng.gen_range(0..runnable.len())]
            }
            Schedule::Scripted(script) => {
                let i = *script
                    .get(self.step)
                    .ok_or(RunError::BadSchedule { step: self.step })?;
                if !runnable.contains(&i) {
                    return Err(RunError::BadSchedule { step: self.step });
                }
                i
            }
        };
        self.step += 1;
        Ok(choice)
    }
}

/// Runs a program under the monitoring semantics.
///
/// I/O redexes resolve through the specification: a forbidden action is a
/// program violation; an off-spec environment result is an environment
/// violation, reported before any stuckness it would cause. Actions with
/// exactly one admitted result resolve without consulting the oracle.
pub fn monitored_run(
    program: crate::ast::CoreExpr,
    net: Arc<Net>,
    mut env: EnvOracle,
    schedule: Schedule,
    fuel: usize,
    opts: MonitorOptions,
) -> Result<RunOutcome, RunError> {
    let mut warnings = Vec::new();
    let (mut spec, truncated) = SpecState::initial(net, opts.closure_bound)?;
    if truncated {
        if opts.strict_closure {
            return Err(RunError::Net(NetError::ClosureTruncated {
                bound: opts.closure_bound,
            }));
        }
        warnings.push("silent closure truncated at the configured bound".to_string());
    }
    let mut cfg = Config::single(program);
    let mut trace: Vec<IoAction> = Vec::new();
    let mut sched = Scheduler::new(schedule);
    let mut steps = 0usize;

    loop {
        if cfg.all_finished() {
            return Ok(RunOutcome {
                verdict: Verdict::Ok {
                    final_markings: spec.markings.clone(),
                },
                trace,
                warnings,
            });
        }
        if steps >= fuel {
            return Ok(RunOutcome {
                verdict: Verdict::FuelExhausted,
                trace,
                warnings,
            });
        }
        let runnable = cfg.runnable();
        let i = sched.pick(&runnable)?;
        match thread_step(&cfg, i, StepInput::None).expect("picked thread is runnable") {
            StepResult::Stepped { config, label } => {
                debug_assert!(label.is_none());
                cfg = config;
            }
            StepResult::NeedsIo { tag, arg } => {
                let (allowed, truncated) = spec.allowed_results(&tag, &arg, opts.closure_bound)?;
                if truncated {
                    if opts.strict_closure {
                        return Err(RunError::Net(NetError::ClosureTruncated {
                            bound: opts.closure_bound,
                        }));
                    }
                    warnings.push(format!("closure truncated while resolving {tag}"));
                }
                if allowed.is_empty() {
                    return Ok(RunOutcome {
                        verdict: Verdict::ProgramViolation { tag, arg },
                        trace,
                        warnings,
                    });
                }
                let result = if allowed.len() == 1 {
                    allowed.keys().next().unwrap().clone()
                } else {
                    match env.next(&tag, &arg)? {
                        Some(v) => v,
                        None => return Err(RunError::EnvExhausted { tag }),
                    }
                };
                match allowed.get(&result) {
                    None => {
                        return Ok(RunOutcome {
                            verdict: Verdict::EnvironmentViolation {
                                tag,
                                arg,
                                provided: result,
                                allowed: allowed.keys().cloned().collect(),
                            },
                            trace,
                            warnings,
                        });
                    }
                    Some(next_spec) => {
                        spec = next_spec.clone();
                        match thread_step(&cfg, i, StepInput::IoResult(result))
                            .expect("io thread steps")
                        {
                            StepResult::Stepped { config, label } => {
                                cfg = config;
                                trace.push(label.expect("io step is labeled"));
                            }
                            other => unreachable!("io resolution cannot yield {other:?}"),
                        }
                    }
                }
            }
            StepResult::Blocked => {
                // constrained assignment retrying forever; consumes fuel
            }
            StepResult::UnsatisfiableConstraint | StepResult::Stuck => {
                return Ok(RunOutcome {
                    verdict: Verdict::Failure { thread: i },
                    trace,
                    warnings,
                });
            }
            StepResult::NeedsPrediction { .. } => {
                unreachable!("monitored runs use the constrained semantics")
            }
        }
        steps += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::parse_program;
    use crate::petri::parse_net;

    fn load(net_src: &str, prog_src: &str) -> (Arc<Net>, crate::ast::CoreExpr) {
        let net = Arc::new(parse_net(net_src).unwrap());
        let prog = parse_program(prog_src, &net.tags).unwrap();
        (net, prog)
    }

    fn run(net: Arc<Net>, prog: crate::ast::CoreExpr, env: EnvOracle, fuel: usize) -> RunOutcome {
        monitored_run(
            prog,
            net,
            env,
            Schedule::RoundRobin,
            fuel,
            MonitorOptions::default(),
        )
        .unwrap()
    }

    const HI_NET: &str = "tags putchar;\n\
         init p1;\n\
         io putchar(p1, 'h', unit, p2);\n\
         io putchar(p2, 'i', unit, p3);\n";

    const TOUPPER_NET: &str = "tags getchar, putchar;\n\
         init p1;\n\
         io getchar(p1, unit, C, p2(C)) where 'a' <= C <= 'z';\n\
         io putchar(p2(C), D, unit, p3) where D = C - 'a' + 'A';\n";

    #[test]
    fn hi_runs_ok_with_final_marking_p3() {
        let (net, prog) = load(HI_NET, "putchar('h'); putchar('i')");
        let out = run(net, prog, EnvOracle::empty(), 10_000);
        match &out.verdict {
            Verdict::Ok { final_markings } => {
                assert_eq!(
                    *final_markings,
                    [Marking::singleton(crate::petri::PlaceTerm::atom("p3"))]
                        .into_iter()
                        .collect()
                );
            }
            other => panic!("unexpected verdict {other:?}"),
        }
        let printed: Vec<String> = out.trace.iter().map(|a| a.to_string()).collect();
        assert_eq!(printed, vec!["putchar('h') -> ()", "putchar('i') -> ()"]);
    }

    #[test]
    fn hi_wrong_order_is_program_violation() {
        let (net, prog) = load(HI_NET, "putchar('i'); putchar('h')");
        let out = run(net, prog, EnvOracle::empty(), 10_000);
        assert_eq!(
            out.verdict,
            Verdict::ProgramViolation {
                tag: "putchar".into(),
                arg: Value::Char('i')
            }
        );
        assert!(out.trace.is_empty());
    }

    #[test]
    fn hi_third_action_violates() {
        let (net, prog) = load(HI_NET, "putchar('h'); putchar('i'); putchar('h')");
        let out = run(net, prog, EnvOracle::empty(), 10_000);
        assert!(matches!(out.verdict, Verdict::ProgramViolation { .. }));
        assert_eq!(out.trace.len(), 2);
    }

    #[test]
    fn toupper_ok_with_env_c() {
        let (net, prog) = load(TOUPPER_NET, "let ch := getchar() in putchar(ch - 'a' + 'A')");
        let mut script = BTreeMap::new();
        script.insert("getchar".to_string(), VecDeque::from([Value::Char('c')]));
        let out = run(net, prog, EnvOracle::Script(script), 10_000);
        assert!(matches!(out.verdict, Verdict::Ok { .. }));
        let printed: Vec<String> = out.trace.iter().map(|a| a.to_string()).collect();
        assert_eq!(printed, vec!["getchar(()) -> 'c'", "putchar('C') -> ()"]);
    }

    #[test]
    fn toupper_env_violation_on_digit() {
        let (net, prog) = load(TOUPPER_NET, "let ch := getchar() in putchar(ch - 'a' + 'A')");
        let mut script = BTreeMap::new();
        script.insert("getchar".to_string(), VecDeque::from([Value::Char('1')]));
        let out = run(net, prog, EnvOracle::Script(script), 10_000);
        match out.verdict {
            Verdict::EnvironmentViolation {
                tag,
                provided,
                allowed,
                ..
            } => {
                assert_eq!(tag, "getchar");
                assert_eq!(provided, Value::Char('1'));
                assert_eq!(allowed.len(), 26);
            }
            other => panic!("unexpected verdict {other:?}"),
        }
    }

    #[test]
    fn env_script_exhaustion_is_an_error() {
        let (net, prog) = load(TOUPPER_NET, "let ch := getchar() in putchar(ch - 'a' + 'A')");
        let err = monitored_run(
            prog,
            net,
            EnvOracle::empty(),
            Schedule::RoundRobin,
            10_000,
            MonitorOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, RunError::EnvExhausted { .. }));
    }

    #[test]
    fn observe_advances_and_classifies() {
        let net = Arc::new(parse_net(HI_NET).unwrap());
        let (spec, _) = SpecState::initial(net, 64).unwrap();
        let s2 = match observe(&spec, &"putchar".into(), &Value::Char('h'), &Value::Unit, 64)
            .unwrap()
        {
            Observation::Advanced(s) => s,
            other => panic!("unexpected {other:?}"),
        };
        match observe(&s2, &"putchar".into(), &Value::Char('h'), &Value::Unit, 64).unwrap() {
            Observation::ProgramViolation => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stuck_program_fails() {
        let (net, prog) = load(HI_NET, "assert(false)");
        let out = run(net, prog, EnvOracle::empty(), 10_000);
        assert_eq!(out.verdict, Verdict::Failure { thread: 0 });
    }

    #[test]
    fn busy_loop_exhausts_fuel() {
        let (net, prog) = load(HI_NET, "loop { () }");
        let out = run(net, prog, EnvOracle::empty(), 500);
        assert_eq!(out.verdict, Verdict::FuelExhausted);
    }

    #[test]
    fn env_script_parser() {
        let map = parse_env_script("# a comment\ngetchar 'x'\ngetchar 'y'\nrecv \"hi\"\n").unwrap();
        assert_eq!(
            map["getchar"],
            VecDeque::from([Value::Char('x'), Value::Char('y')])
        );
        assert_eq!(map["recv"], VecDeque::from([Value::string("hi")]));
    }

    #[test]
    fn blocked_assignment_spins_to_fuel() {
        let (net, prog) = load(HI_NET, "let x := cpvar({[1]}) in assign_pvar(x, 2)");
        let out = run(net, prog, EnvOracle::empty(), 200);
        assert_eq!(out.verdict, Verdict::FuelExhausted);
    }

    #[test]
    fn unsatisfiable_create_fails() {
        let (net, prog) = load(HI_NET, "let x := cpvar({}) in ()");
        let out = run(net, prog, EnvOracle::empty(), 200);
        assert_eq!(out.verdict, Verdict::Failure { thread: 0 });
    }

    #[test]
    fn auto_resolve_skips_oracle_for_singleton_results() {
        // putchar admits only (); an empty oracle suffices
        let (net, prog) = load(HI_NET, "putchar('h')");
        let out = run(net, prog, EnvOracle::empty(), 10_000);
        assert!(matches!(out.verdict, Verdict::Ok { .. }));
    }
}
