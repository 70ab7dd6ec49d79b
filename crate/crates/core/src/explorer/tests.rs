use super::*;
use crate::ast::parse_program;
use crate::monitor::Verdict;
use crate::petri::parse_net;

fn load(net_src: &str, prog_src: &str) -> (Arc<Net>, CoreExpr) {
    let net = Arc::new(parse_net(net_src).unwrap());
    let prog = parse_program(prog_src, &net.tags).unwrap();
    (net, prog)
}

const TRIVIAL_NET: &str = "tags; init done;\n";

const CAT2_NET: &str = "tags getchar, putchar;\n\
    init p1(C1, C2) where 'a' <= C1 <= 'b', 'a' <= C2 <= 'b';\n\
    split(p1(C1, C2), g0(C1, C2), w0(C1, C2));\n\
    io getchar(g0(C1, C2), unit, C1, g1(C2));\n\
    io getchar(g1(C2), unit, C2, g2);\n\
    io putchar(w0(C1, C2), C1, unit, w1(C2));\n\
    io putchar(w1(C2), C2, unit, w2);\n\
    join(g2, w2, done);\n";

const CAT2_PROG: &str = "let ch1 := getchar() in\n\
    let ch2 := getchar() in\n\
    fork(putchar(ch1); putchar(ch2));\n\
    ()\n";

#[test]
fn assert_false_is_a_counterexample_at_step_one() {
    let (net, prog) = load(TRIVIAL_NET, "assert(false)");
    let report = explore(prog, net, 16, ExploreOptions::default()).unwrap();
    match report.verdict {
        ExploreVerdict::Counterexample {
            branch,
            trace,
            failure,
        } => {
            assert_eq!(branch.len(), 1);
            assert!(trace.is_empty());
            assert_eq!(failure, FailKind::Failure { thread: 0 });
        }
        other => panic!("expected counterexample, got {other:?}"),
    }
}

#[test]
fn finished_program_is_safe() {
    let (net, prog) = load(TRIVIAL_NET, "let x := ref(1) in !x");
    let report = explore(prog, net, 32, ExploreOptions::default()).unwrap();
    assert!(matches!(
        report.verdict,
        ExploreVerdict::SafeUpToDepth { .. }
    ));
    assert_eq!(report.stats.terminal_branches, 1);
}

#[test]
fn cat2_explores_safely_with_env_and_schedule_branching() {
    let (net, prog) = load(CAT2_NET, CAT2_PROG);
    let report = explore(prog, net, 32, ExploreOptions::default()).unwrap();
    assert!(
        matches!(report.verdict, ExploreVerdict::SafeUpToDepth { .. }),
        "{:?}",
        report.verdict
    );
    assert!(report.stats.env_branch_edges >= 4, "{:?}", report.stats);
    assert!(report.stats.schedule_branch_edges >= 2, "{:?}", report.stats);
}

#[test]
fn program_violation_found_and_replayable() {
    let (net, prog) = load(
        "tags putchar; init p1; io putchar(p1, 'h', unit, p2);\n",
        "putchar('x')",
    );
    let report = explore(prog.clone(), net.clone(), 16, ExploreOptions::default()).unwrap();
    match &report.verdict {
        ExploreVerdict::Counterexample {
            branch, failure, ..
        } => {
            assert_eq!(
                *failure,
                FailKind::ProgramViolation {
                    tag: "putchar".into(),
                    arg: Value::Char('x')
                }
            );
            let out = replay_branch(prog, net, branch, 64).unwrap();
            assert_eq!(
                out.verdict,
                Verdict::ProgramViolation {
                    tag: "putchar".into(),
                    arg: Value::Char('x')
                }
            );
        }
        other => panic!("expected counterexample, got {other:?}"),
    }
}

#[test]
fn counterexample_replay_reproduces_failure_verdict() {
    let (net, prog) = load(TRIVIAL_NET, "let x := ref(0) in fork(assert(false)); !x");
    let report = explore(prog.clone(), net.clone(), 32, ExploreOptions::default()).unwrap();
    match &report.verdict {
        ExploreVerdict::Counterexample {
            branch, failure, ..
        } => {
            let FailKind::Failure { thread } = failure else {
                panic!("expected a stuck thread");
            };
            let out = replay_branch(prog, net, branch, 64).unwrap();
            assert_eq!(out.verdict, Verdict::Failure { thread: *thread });
        }
        other => panic!("expected counterexample, got {other:?}"),
    }
}

#[test]
fn dedup_on_and_off_agree() {
    let progs = [
        (TRIVIAL_NET, "let x := ref(0) in fork(x <- 1); fork(x <- 2); !x"),
        (TRIVIAL_NET, "let x := ref(0) in fork(assert(false)); !x"),
        (CAT2_NET, CAT2_PROG),
    ];
    for (net_src, prog_src) in progs {
        let (net, prog) = load(net_src, prog_src);
        let with = explore(
            prog.clone(),
            net.clone(),
            16,
            ExploreOptions {
                dedup: true,
                ..Default::default()
            },
        )
        .unwrap();
        let without = explore(
            prog,
            net,
            16,
            ExploreOptions {
                dedup: false,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(
            matches!(with.verdict, ExploreVerdict::SafeUpToDepth { .. }),
            matches!(without.verdict, ExploreVerdict::SafeUpToDepth { .. }),
            "verdicts disagree for {prog_src}"
        );
    }
}

#[test]
fn parallel_mode_agrees_with_sequential() {
    let (net, prog) = load(CAT2_NET, CAT2_PROG);
    let seq = explore(prog.clone(), net.clone(), 32, ExploreOptions::default()).unwrap();
    let par = explore(
        prog,
        net,
        32,
        ExploreOptions {
            parallel: true,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(seq.verdict, par.verdict);
}

#[test]
fn cas_increment_interleavings_all_end_at_two() {
    let src = "fn bump(c) { let v := <!c> in if cas(c, v, v + 1) then () else bump(c) }\n\
               let cell := ref(0) in\n\
               fork(bump(cell));\n\
               fork(bump(cell));\n\
               ()";
    let (net, prog) = load(TRIVIAL_NET, src);
    let mut finals: Vec<Value> = Vec::new();
    let report = explore_with_observer(
        prog,
        net,
        200,
        ExploreOptions::default(),
        |ev: &VisitEvent<'_>| {
            if ev.kind == VisitKind::Terminal {
                finals.push(ev.config.heap.get(&Loc(0)).cloned().unwrap());
            }
        },
    )
    .unwrap();
    assert!(matches!(
        report.verdict,
        ExploreVerdict::SafeUpToDepth { .. }
    ));
    assert!(!finals.is_empty());
    assert!(finals.iter().all(|v| *v == Value::Int(2)), "{finals:?}");
    // no frontier branches: the exploration was exhaustive
    assert_eq!(report.stats.frontier_branches, 0);
}

#[test]
fn blocked_constraint_is_not_a_counterexample() {
    let (net, prog) = load(
        TRIVIAL_NET,
        "let x := cpvar({[1]}) in assign_pvar(x, 2)",
    );
    let report = explore(prog, net, 64, ExploreOptions::default()).unwrap();
    assert!(matches!(
        report.verdict,
        ExploreVerdict::SafeUpToDepth { .. }
    ));
    assert!(report.stats.constraint_blocked_branches >= 1);
}

#[test]
fn canonical_key_identifies_renamed_locations() {
    // allocate two cells in different orders; the configurations agree up
    // to location names
    let (net, prog_a) = load(TRIVIAL_NET, "let a := ref(1) in let b := ref(2) in (a, b)");
    let (_, prog_b) = load(TRIVIAL_NET, "let b := ref(2) in let a := ref(1) in (a, b)");
    let run = |prog: CoreExpr| {
        let mut cfg = Config::single(prog);
        loop {
            let r = cfg.runnable();
            if r.is_empty() {
                break cfg;
            }
            match thread_step(&cfg, r[0], StepInput::None).unwrap() {
                StepResult::Stepped { config, .. } => cfg = config,
                other => panic!("unexpected {other:?}"),
            }
        }
    };
    let (spec, _) = SpecState::initial(net, 64).unwrap();
    let ka = canonical_key(&run(prog_a), &spec.markings);
    let kb = canonical_key(&run(prog_b), &spec.markings);
    // (a, b) binds a to loc0 in one run and loc1 in the other; renaming by
    // first use in the result pair makes them agree
    assert_eq!(ka, kb);
}

#[test]
fn chat_queue_constrained_is_safe_and_ordered() {
    let scripts = ChatScripts {
        members: [
            ("n1".to_string(), vec!["a".to_string()]),
            ("n2".to_string(), vec!["b".to_string()]),
        ],
    };
    let report = explore_chat(
        &scripts,
        64,
        ChannelVariant::Queue,
        true,
        ExploreOptions::default(),
    )
    .unwrap();
    assert!(
        matches!(report.report.verdict, ExploreVerdict::SafeUpToDepth { .. }),
        "{:?}",
        report.report.verdict
    );
    assert!(report.property_ok, "{:?}", report.property_evidence);
    assert!(report.max_outgoing >= 1, "no delivery observed within depth");
}

#[test]
fn chat_stack_mutant_blocks_constraint() {
    let scripts = ChatScripts {
        members: [
            ("n1".to_string(), vec!["a".to_string(), "c".to_string()]),
            ("n2".to_string(), vec![]),
        ],
    };
    let report = explore_chat(
        &scripts,
        120,
        ChannelVariant::Stack,
        true,
        ExploreOptions::default(),
    )
    .unwrap();
    assert!(
        matches!(report.report.verdict, ExploreVerdict::SafeUpToDepth { .. }),
        "{:?}",
        report.report.verdict
    );
    assert!(report.constraint_blocked >= 1, "{:?}", report.report.stats);
}

#[test]
fn chat_stack_mutant_fails_order_property_without_constraint() {
    let scripts = ChatScripts {
        members: [
            ("n1".to_string(), vec!["a".to_string(), "c".to_string()]),
            ("n2".to_string(), vec![]),
        ],
    };
    let report = explore_chat(
        &scripts,
        120,
        ChannelVariant::Stack,
        false,
        ExploreOptions::default(),
    )
    .unwrap();
    assert!(!report.property_ok);
    let evidence = report.property_evidence.unwrap();
    assert!(evidence.contains("says 'c'"), "{evidence}");
}
