use std::fmt::Write;

use super::{Expr, ExprKind, FuncDef, InputKind, Literal, SourceUnit, Stmt, StmtKind, UnOp};

const INDENT: &str = "    ";

/// Canonical source text for a unit. Parsing the output yields an equal unit.
pub fn print_unit(unit: &SourceUnit) -> String {
    let mut out = String::new();
    writeln!(out, "app {}", quote(&unit.app_name)).unwrap();
    if !unit.inputs.is_empty() {
        out.push('\n');
    }
    for input in &unit.inputs {
        let kind = match &input.kind {
            InputKind::Device(cap) => format!("device.{cap}"),
            InputKind::Number => "number".to_string(),
            InputKind::Str => "string".to_string(),
            InputKind::Bool => "bool".to_string(),
            InputKind::Enum(values) => {
                format!("enum({})", values.iter().map(|v| quote(v)).collect::<Vec<_>>().join(", "))
            }
        };
        write!(out, "input {}: {kind}", input.name).unwrap();
        if let Some(t) = &input.title {
            write!(out, " title {}", quote(t)).unwrap();
        }
        out.push('\n');
    }
    for f in &unit.functions {
        out.push('\n');
        print_func(&mut out, f);
    }
    out
}

fn print_func(out: &mut String, f: &FuncDef) {
    writeln!(out, "def {}({}) {{", f.name, f.param.as_deref().unwrap_or("")).unwrap();
    let ev = f.param.as_deref().unwrap_or("evt");
    print_body(out, &f.body, 1, ev);
    out.push_str("}\n");
}

fn print_body(out: &mut String, body: &[Stmt], depth: usize, ev: &str) {
    for s in body {
        print_stmt(out, s, depth, ev);
    }
}

fn print_block_tail(out: &mut String, body: &[Stmt], depth: usize, ev: &str) {
    out.push_str("{\n");
    print_body(out, body, depth + 1, ev);
    out.push_str(&INDENT.repeat(depth));
    out.push('}');
}

fn print_stmt(out: &mut String, s: &Stmt, depth: usize, ev: &str) {
    let pad = INDENT.repeat(depth);
    out.push_str(&pad);
    match &s.kind {
        StmtKind::Subscribe { device, spec, handler } => {
            write!(out, "subscribe({device}, {}, {handler})", quote(spec)).unwrap();
        }
        StmtKind::RunIn { delay, handler } => write!(out, "runIn({}, {handler})", expr(delay, ev)).unwrap(),
        StmtKind::RunEvery { period, handler } => write!(out, "runEvery({}, {handler})", expr(period, ev)).unwrap(),
        StmtKind::Assign { target, value } => write!(out, "{target} = {}", expr(value, ev)).unwrap(),
        StmtKind::Command { device, command, args } => {
            write!(out, "{device}.{command}({})", args_text(args, ev)).unwrap()
        }
        StmtKind::Api { name, args } => write!(out, "api.{name}({})", args_text(args, ev)).unwrap(),
        StmtKind::Call { name } => write!(out, "{name}()").unwrap(),
        StmtKind::If { cond, then_body, else_body } => {
            write!(out, "if ({}) ", expr(cond, ev)).unwrap();
            print_block_tail(out, then_body, depth, ev);
            if let Some(e) = else_body {
                out.push_str(" else ");
                print_block_tail(out, e, depth, ev);
            }
        }
        StmtKind::Switch { scrutinee, cases, default } => {
            writeln!(out, "switch ({}) {{", expr(scrutinee, ev)).unwrap();
            for (lit, body) in cases {
                write!(out, "{pad}{INDENT}case {}: ", literal(lit)).unwrap();
                print_block_tail(out, body, depth + 1, ev);
                out.push('\n');
            }
            if let Some(d) = default {
                write!(out, "{pad}{INDENT}default: ").unwrap();
                print_block_tail(out, d, depth + 1, ev);
                out.push('\n');
            }
            out.push_str(&pad);
            out.push('}');
        }
    }
    out.push('\n');
}

fn args_text(args: &[Expr], ev: &str) -> String {
    args.iter().map(|a| expr(a, ev)).collect::<Vec<_>>().join(", ")
}

fn literal(l: &Literal) -> String {
    match l {
        Literal::Int(v) => v.to_string(),
        Literal::Str(s) => quote(s),
        Literal::Bool(b) => b.to_string(),
    }
}

pub(crate) fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

const UNARY_PREC: u8 = 7;

fn prec(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Binary(op, _, _) => op.precedence(),
        // A negative constant prints with a leading minus.
        ExprKind::Unary(..) | ExprKind::Int(i64::MIN..=-1) => UNARY_PREC,
        _ => u8::MAX,
    }
}

fn wrap(e: &Expr, min: u8, ev: &str) -> String {
    let text = expr(e, ev);
    if prec(e) < min {
        format!("({text})")
    } else {
        text
    }
}

pub(crate) fn expr(e: &Expr, ev: &str) -> String {
    match &e.kind {
        ExprKind::Int(v) => v.to_string(),
        ExprKind::Str(s) => quote(s),
        ExprKind::Bool(b) => b.to_string(),
        ExprKind::Var(v) => v.clone(),
        ExprKind::EventValue => format!("{ev}.value"),
        ExprKind::AttrRead { device, attribute } => format!("{device}.current({})", quote(attribute)),
        ExprKind::Unary(op, x) => {
            let sym = match op {
                UnOp::Not => "!",
                UnOp::Neg => "-",
            };
            format!("{sym}{}", wrap(x, UNARY_PREC, ev))
        }
        ExprKind::Binary(op, a, b) => {
            let p = op.precedence();
            format!("{} {} {}", wrap(a, p, ev), op.symbol(), wrap(b, p + 1, ev))
        }
    }
}
