//! Printers for values and core expressions.
//!
//! `print_expr` emits surface syntax that reparses to the same core tree
//! (given the same tag set), so printing is a section of parsing. Values are
//! printed in surface literal form; this is the format used in trace output
//! and env scripts.

use std::fmt::Write;

use super::{CoreExpr, Value};

fn escape_char(c: char, out: &mut String) {
    match c {
        '\n' => out.push_str("\\n"),
        '\t' => out.push_str("\\t"),
        '\\' => out.push_str("\\\\"),
        '\'' => out.push_str("\\'"),
        c => out.push(c),
    }
}

fn escape_in_string(c: char, out: &mut String) {
    match c {
        '\n' => out.push_str("\\n"),
        '\t' => out.push_str("\\t"),
        '\\' => out.push_str("\\\\"),
        '"' => out.push_str("\\\""),
        c => out.push(c),
    }
}

/// Surface literal form of a value.
pub fn print_value(v: &Value) -> String {
    let mut s = String::new();
    write_value(v, &mut s);
    s
}

fn write_value(v: &Value, out: &mut String) {
    match v {
        Value::Unit => out.push_str("()"),
        Value::Char(c) => {
            out.push('\'');
            escape_char(*c, out);
            out.push('\'');
        }
        Value::Int(n) => {
            let _ = write!(out, "{n}");
        }
        Value::Pair(a, b) => {
            out.push('(');
            write_value(a, out);
            out.push_str(", ");
            write_value(b, out);
            out.push(')');
        }
        Value::Closure(..) => out.push_str("<fun>"),
        Value::Loc(l) => {
            let _ = write!(out, "#loc{}", l.0);
        }
        Value::Pvar(i) => {
            let _ = write!(out, "#pvar{}", i.0);
        }
        _ => {
            if let Some(b) = v.as_truth() {
                // nil and true share the representation inl(()); both print
                // as `true`.
                out.push_str(if b { "true" } else { "false" });
                return;
            }
            if let Some(items) = v.as_list() {
                if !items.is_empty() && items.iter().all(|i| matches!(i, Value::Char(_))) {
                    out.push('"');
                    for i in &items {
                        if let Value::Char(c) = i {
                            escape_in_string(*c, out);
                        }
                    }
                    out.push('"');
                } else {
                    out.push('[');
                    for (k, i) in items.iter().enumerate() {
                        if k > 0 {
                            out.push_str(", ");
                        }
                        write_value(i, out);
                    }
                    out.push(']');
                }
                return;
            }
            match v {
                Value::Inl(i) => {
                    out.push_str("inl(");
                    write_value(i, out);
                    out.push(')');
                }
                Value::Inr(i) => {
                    out.push_str("inr(");
                    write_value(i, out);
                    out.push(')');
                }
                _ => unreachable!(),
            }
        }
    }
}

/// Prints a core expression as reparseable surface syntax. Conservative
/// about parentheses; not pretty, but stable.
pub fn print_expr(e: &CoreExpr) -> String {
    let mut s = String::new();
    write_expr(e, &mut s);
    s
}

fn write_expr(e: &CoreExpr, out: &mut String) {
    match e {
        CoreExpr::Unit => out.push_str("()"),
        CoreExpr::Char(c) => {
            out.push('\'');
            escape_char(*c, out);
            out.push('\'');
        }
        CoreExpr::Int(n) => {
            let _ = write!(out, "{n}");
        }
        CoreExpr::Var(x) => out.push_str(x),
        CoreExpr::Inl(a) => call1("inl", a, out),
        CoreExpr::Inr(a) => call1("inr", a, out),
        CoreExpr::Pair(a, b) => {
            out.push('(');
            write_expr(a, out);
            out.push_str(", ");
            write_expr(b, out);
            out.push(')');
        }
        CoreExpr::Lambda(x, b) => {
            let _ = write!(out, "fun ({x}) {{ ");
            write_expr(b, out);
            out.push_str(" }");
        }
        CoreExpr::Cases(a, b, c) => {
            out.push_str("cases(");
            write_expr(a, out);
            out.push_str(", ");
            write_expr(b, out);
            out.push_str(", ");
            write_expr(c, out);
            out.push(')');
        }
        CoreExpr::Fst(a) => call1("fst", a, out),
        CoreExpr::Snd(a) => call1("snd", a, out),
        CoreExpr::App(f, a) => {
            out.push('(');
            write_expr(f, out);
            out.push_str(")(");
            write_expr(a, out);
            out.push(')');
        }
        CoreExpr::Assert(a) => call1("assert", a, out),
        CoreExpr::Ref(a) => call1("ref", a, out),
        CoreExpr::Deref(a) => {
            out.push_str("!(");
            write_expr(a, out);
            out.push(')');
        }
        CoreExpr::Assign(a, b) => {
            out.push('(');
            write_expr(a, out);
            out.push_str(" <- ");
            write_expr(b, out);
            out.push(')');
        }
        CoreExpr::Io(t, a) => {
            out.push_str(t);
            out.push('(');
            match &**a {
                CoreExpr::Unit => {}
                a => write_expr(a, out),
            }
            out.push(')');
        }
        CoreExpr::Fork(a) => call1("fork", a, out),
        CoreExpr::AtomicDeref(a) => {
            out.push_str("<!(");
            write_expr(a, out);
            out.push_str(")>");
        }
        CoreExpr::Cas(a, b, c) => {
            out.push_str("cas(");
            write_expr(a, out);
            out.push_str(", ");
            write_expr(b, out);
            out.push_str(", ");
            write_expr(c, out);
            out.push(')');
        }
        CoreExpr::CreatePvar(c) => {
            if matches!(c, crate::prophecy::Constraint::Universal) {
                out.push_str("create_pvar()");
            } else {
                let _ = write!(out, "cpvar({c})");
            }
        }
        CoreExpr::AssignPvar(a, b) => {
            out.push_str("assign_pvar(");
            write_expr(a, out);
            out.push_str(", ");
            write_expr(b, out);
            out.push(')');
        }
        CoreExpr::Prim(op, a, b) => {
            out.push('(');
            write_expr(a, out);
            let _ = write!(out, " {} ", op.symbol());
            write_expr(b, out);
            out.push(')');
        }
        CoreExpr::Loc(l) => {
            let _ = write!(out, "#loc{}", l.0);
        }
        CoreExpr::Pvar(i) => {
            let _ = write!(out, "#pvar{}", i.0);
        }
    }
}

fn call1(name: &str, a: &CoreExpr, out: &mut String) {
    out.push_str(name);
    out.push('(');
    write_expr(a, out);
    out.push(')');
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::parse_program;
    use std::collections::BTreeSet;

    #[test]
    fn value_literals() {
        assert_eq!(print_value(&Value::Unit), "()");
        assert_eq!(print_value(&Value::Char('h')), "'h'");
        assert_eq!(print_value(&Value::truth(true)), "true");
        assert_eq!(print_value(&Value::string("hi")), "\"hi\"");
        assert_eq!(
            print_value(&Value::list(vec![Value::Int(1), Value::Int(2)])),
            "[1, 2]"
        );
        assert_eq!(print_value(&Value::Int(-3)), "-3");
    }

    #[test]
    fn print_parse_print_is_fixed_point() {
        let tags: BTreeSet<String> = ["putchar".to_string()].into_iter().collect();
        let srcs = [
            "putchar('h'); putchar('i')",
            "let x := ref(0) in x <- !x + 1",
            "fn f(a, b) { if a = b then a else f(b, a) } f(1, 2)",
            "match [1, 2] { nil => 0, cons(h, t) => h }",
        ];
        for src in srcs {
            let e1 = parse_program(src, &tags).unwrap();
            let t1 = print_expr(&e1);
            let e2 = parse_program(&t1, &tags).unwrap();
            let t2 = print_expr(&e2);
            assert_eq!(t1, t2, "printing is not a fixed point for {src}");
            assert_eq!(e1, e2, "reparse changed the tree for {src}");
        }
    }
}
