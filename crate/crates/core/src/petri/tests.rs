use super::*;
use crate::ast::Value;

fn hi_net() -> Net {
    parse_net(
        "tags putchar;\n\
         init p1;\n\
         io putchar(p1, 'h', unit, p2);\n\
         io putchar(p2, 'i', unit, p3);\n",
    )
    .unwrap()
}

fn toupper_net() -> Net {
    parse_net(
        "tags getchar, putchar;\n\
         init p1;\n\
         io getchar(p1, unit, C, p2(C)) where 'a' <= C <= 'z';\n\
         io putchar(p2(C), D, unit, p3) where D = C - 'a' + 'A';\n",
    )
    .unwrap()
}

/// The two-reads-two-writes net with a split and a join, specialized to
/// the inputs 'a' and 'b'.
fn cat2_fixed_net() -> Net {
    parse_net(
        "tags getchar, putchar;\n\
         init p1;\n\
         split(p1, p2, p5);\n\
         io getchar(p2, unit, 'a', p3);\n\
         io getchar(p3, unit, 'b', p4);\n\
         io putchar(p5, 'a', unit, p6);\n\
         io putchar(p6, 'b', unit, p7);\n\
         join(p4, p7, p8);\n",
    )
    .unwrap()
}

fn set(ms: &[Marking]) -> BTreeSet<Marking> {
    ms.iter().cloned().collect()
}

fn atom(n: &str) -> PlaceTerm {
    PlaceTerm::atom(n)
}

#[test]
fn hi_net_has_no_silent_rules() {
    let net = hi_net();
    let s = set(&[net.init[0].clone()]);
    let (closed, truncated) = silent_closure(&net, &s, 64).unwrap();
    assert_eq!(closed, s);
    assert!(!truncated);
}

#[test]
fn cat2_closure_includes_split_result() {
    let net = cat2_fixed_net();
    let s = set(&[Marking::singleton(atom("p1"))]);
    let (closed, _) = silent_closure(&net, &s, 64).unwrap();
    assert!(closed.contains(&Marking::from_places([atom("p2"), atom("p5")])));
}

#[test]
fn split_cycle_unrolls_and_truncates() {
    let net = parse_net("tags; init p; split(p, p, q);\n").unwrap();
    let s = set(&[Marking::singleton(atom("p"))]);
    let (closed, truncated) = silent_closure(&net, &s, 3).unwrap();
    let expect = |extra_q: u32| {
        let mut m = Marking::singleton(atom("p"));
        for _ in 0..extra_q {
            m.add(&atom("q"));
        }
        m
    };
    assert_eq!(closed, set(&[expect(0), expect(1), expect(2), expect(3)]));
    assert!(truncated);
}

#[test]
fn hi_io_successors_for_h() {
    let net = hi_net();
    let s = set(&[Marking::singleton(atom("p1"))]);
    let succ = io_successors(&net, &s, "putchar", &Value::Char('h'), 64).unwrap();
    assert!(!succ.truncated);
    assert_eq!(succ.results.len(), 1);
    let next = succ.results.get(&Value::Unit).unwrap();
    assert_eq!(*next, set(&[Marking::singleton(atom("p2"))]));
}

#[test]
fn hi_io_successors_for_i_at_start_is_empty() {
    let net = hi_net();
    let s = set(&[Marking::singleton(atom("p1"))]);
    let succ = io_successors(&net, &s, "putchar", &Value::Char('i'), 64).unwrap();
    assert!(succ.results.is_empty());
}

#[test]
fn toupper_getchar_has_26_results() {
    let net = toupper_net();
    let s = set(&[Marking::singleton(atom("p1"))]);
    let succ = io_successors(&net, &s, "getchar", &Value::Unit, 64).unwrap();
    assert_eq!(succ.results.len(), 26);
    for c in 'a'..='z' {
        let next = succ.results.get(&Value::Char(c)).unwrap();
        let expected = PlaceTerm {
            name: "p2".to_string(),
            args: vec![Ground::Val(Value::Char(c))],
        };
        assert_eq!(*next, set(&[Marking::singleton(expected)]));
    }
}

#[test]
fn toupper_putchar_applies_guard_arithmetic() {
    let net = toupper_net();
    let p2c = PlaceTerm {
        name: "p2".to_string(),
        args: vec![Ground::Val(Value::Char('c'))],
    };
    let s = set(&[Marking::singleton(p2c)]);
    let succ = io_successors(&net, &s, "putchar", &Value::Char('C'), 64).unwrap();
    assert_eq!(succ.results.len(), 1);
    let wrong = io_successors(&net, &s, "putchar", &Value::Char('D'), 64).unwrap();
    assert!(wrong.results.is_empty());
}

#[test]
fn traces_of_hi_up_to_two() {
    let net = hi_net();
    let traces = traces_upto(&net, &net.init[0], 2, 64).unwrap();
    let h = IoAction::new("putchar", Value::Char('h'), Value::Unit);
    let i = IoAction::new("putchar", Value::Char('i'), Value::Unit);
    let expected: BTreeSet<Vec<IoAction>> =
        [vec![], vec![h.clone()], vec![h, i]].into_iter().collect();
    assert_eq!(traces, expected);
}

#[test]
fn traces_k0_is_epsilon_only() {
    let net = cat2_fixed_net();
    let traces = traces_upto(&net, &net.init[0], 0, 64).unwrap();
    assert_eq!(traces.len(), 1);
    assert!(traces.contains(&Vec::new()));
}

#[test]
fn cat2_allows_both_orders_at_length_two() {
    let net = cat2_fixed_net();
    let traces = traces_upto(&net, &net.init[0], 2, 64).unwrap();
    let g = |c: char| IoAction::new("getchar", Value::Unit, Value::Char(c));
    let p = |c: char| IoAction::new("putchar", Value::Char(c), Value::Unit);
    assert!(traces.contains(&vec![g('a'), g('b')]));
    assert!(traces.contains(&vec![p('a'), p('b')]));
    assert!(traces.contains(&vec![g('a'), p('a')]));
    assert!(traces.contains(&vec![p('a'), g('a')]));
}

#[test]
fn traces_are_prefix_closed() {
    for net in [hi_net(), toupper_net(), cat2_fixed_net()] {
        for init in &net.init {
            let traces = traces_upto(&net, init, 3, 64).unwrap();
            for t in &traces {
                for k in 0..t.len() {
                    assert!(traces.contains(&t[..k].to_vec()), "prefix missing");
                }
            }
        }
    }
}

#[test]
fn token_accounting_per_firing_kind() {
    // split adds one token, join removes one, io and noop preserve
    let net = cat2_fixed_net();
    let m = Marking::singleton(atom("p1"));
    for succ in silent_instances(&net, &m).unwrap() {
        assert_eq!(succ.size(), m.size() + 1); // only the split fires here
    }
    let join_ready = Marking::from_places([atom("p4"), atom("p7")]);
    for succ in silent_instances(&net, &join_ready).unwrap() {
        assert_eq!(succ.size(), join_ready.size() - 1);
    }
    for firing in io_instances(&net, &Marking::from_places([atom("p2"), atom("p5")])).unwrap() {
        assert_eq!(firing.next.size(), 2);
    }
}

#[test]
fn marking_algebra() {
    let a = Marking::from_places([atom("p"), atom("q")]);
    let b = Marking::from_places([atom("q")]);
    assert_eq!(a.uplus(&b), b.uplus(&a));
    assert_eq!(a.uplus(&Marking::empty()), a);
    let c = Marking::singleton(atom("r"));
    assert_eq!(a.uplus(&b).uplus(&c), a.uplus(&b.uplus(&c)));
}

#[test]
fn resdet_hi_ok() {
    let net = hi_net();
    assert_eq!(check_result_det(&net, &net.init[0], 4, 64).unwrap(), ResDet::Ok);
}

#[test]
fn resdet_toupper_counterexample_at_start() {
    let net = toupper_net();
    match check_result_det(&net, &net.init[0], 4, 64).unwrap() {
        ResDet::Counterexample {
            trace,
            tag,
            arg,
            result1,
            result2,
        } => {
            assert!(trace.is_empty());
            assert_eq!(tag, "getchar");
            assert_eq!(arg, Value::Unit);
            assert_eq!(result1, Value::Char('a'));
            assert_eq!(result2, Value::Char('b'));
        }
        ResDet::Ok => panic!("expected a counterexample"),
    }
}

#[test]
fn resdet_no_io_rules_is_vacuously_ok() {
    let net = parse_net("tags; init p; noop(p, q);\n").unwrap();
    assert_eq!(check_result_det(&net, &net.init[0], 8, 64).unwrap(), ResDet::Ok);
}

#[test]
fn open_script_keeps_generating() {
    let net = parse_net(
        "tags getchar;\n\
         init g(\"ab\"..);\n\
         io getchar(g(C :: Cs), unit, C, g(Cs)) where 'a' <= C <= 'z';\n",
    )
    .unwrap();
    let s = set(&[net.init[0].clone()]);
    // scripted prefix pins the result down
    let succ = io_successors(&net, &s, "getchar", &Value::Unit, 64).unwrap();
    assert_eq!(succ.results.len(), 1);
    assert!(succ.results.contains_key(&Value::Char('a')));
    // after the prefix is exhausted the guard enumerates
    let exhausted = PlaceTerm {
        name: "g".to_string(),
        args: vec![Ground::OpenList(Vec::new())],
    };
    let s = set(&[Marking::singleton(exhausted)]);
    let succ = io_successors(&net, &s, "getchar", &Value::Unit, 64).unwrap();
    assert_eq!(succ.results.len(), 26);
}

#[test]
fn scope_check_rejects_unbound_result_variable() {
    let err = parse_net(
        "tags oops;\n\
         init p;\n\
         io oops(p, unit, X, q);\n",
    )
    .unwrap_err();
    assert!(matches!(err, NetError::IllScoped { .. }));
}

#[test]
fn undeclared_tag_rejected() {
    let err = parse_net("init p; io boom(p, unit, unit, q);\n").unwrap_err();
    assert!(matches!(err, NetError::Load(_)));
}

#[test]
fn arity_check() {
    let err = parse_net(
        "tags t;\n\
         place pc(1);\n\
         init pc;\n\
         io t(pc, unit, unit, pc);\n",
    )
    .unwrap_err();
    assert!(matches!(err, NetError::Load(_)));
}

#[test]
fn init_where_enumerates_candidates() {
    let net = parse_net("tags; init p(C) where 'a' <= C <= 'c';\n").unwrap();
    assert_eq!(net.init.len(), 3);
}

#[test]
fn join_requires_two_tokens_same_place() {
    let net = parse_net("tags; init p + p; join(p, p, q);\n").unwrap();
    let single = Marking::singleton(atom("p"));
    assert!(silent_instances(&net, &single).unwrap().is_empty());
    let double = Marking::from_places([atom("p"), atom("p")]);
    let succs = silent_instances(&net, &double).unwrap();
    assert_eq!(succs, vec![Marking::singleton(atom("q"))]);
}
