//! SMT-LIB 2 export (QF_LIA). Strings become integer codes shared across
//! the whole problem; booleans stay booleans.

use std::collections::BTreeSet;
use std::fmt::Write;

use super::{Domain, Problem};
use crate::term::{ArithOp, CmpOp, ConstraintLit, Term};

fn symbol(name: &str) -> String {
    format!("|{}|", name.replace(['|', '\\'], "_"))
}

fn int(v: i64) -> String {
    if v < 0 {
        format!("(- {})", (v as i128).unsigned_abs())
    } else {
        v.to_string()
    }
}

fn term(t: &Term, codes: &[String]) -> String {
    match t {
        Term::Int(v) => int(*v),
        Term::Bool(b) => b.to_string(),
        Term::Str(s) => codes.iter().position(|c| c == s).map(|i| i.to_string()).unwrap_or_else(|| "(- 1)".into()),
        Term::Var(v) => symbol(v),
        Term::Arith(op, a, b) => {
            let op = match op {
                ArithOp::Add => "+",
                ArithOp::Sub => "-",
                ArithOp::Mul => "*",
            };
            format!("({op} {} {})", term(a, codes), term(b, codes))
        }
        Term::Attr { device, attribute } => symbol(&format!("{device}.{attribute}")),
        Term::Event => symbol("event"),
    }
}

fn lit(l: &ConstraintLit, codes: &[String]) -> String {
    let (a, b) = (term(&l.lhs, codes), term(&l.rhs, codes));
    match l.op {
        CmpOp::Eq => format!("(= {a} {b})"),
        CmpOp::Ne => format!("(not (= {a} {b}))"),
        op => format!("({} {a} {b})", op.symbol()),
    }
}

fn strings(t: &Term, out: &mut BTreeSet<String>) {
    match t {
        Term::Str(s) => {
            out.insert(s.clone());
        }
        Term::Arith(_, a, b) => {
            strings(a, out);
            strings(b, out);
        }
        _ => {}
    }
}

pub fn to_smtlib(p: &Problem) -> String {
    let mut all = BTreeSet::new();
    for v in &p.vars {
        if let Domain::EnumSet { values } = &v.domain {
            all.extend(values.iter().cloned());
        }
    }
    for c in &p.constraints {
        strings(&c.lhs, &mut all);
        strings(&c.rhs, &mut all);
    }
    let codes: Vec<String> = all.into_iter().collect();
    let mut out = String::from("(set-logic QF_LIA)\n");
    for (i, s) in codes.iter().enumerate() {
        let _ = writeln!(out, "; {i} = {s:?}");
    }
    for v in &p.vars {
        let s = symbol(&v.name);
        match &v.domain {
            Domain::Bool => {
                let _ = writeln!(out, "(declare-const {s} Bool)");
            }
            Domain::IntRange { lo, hi } => {
                let _ = writeln!(out, "(declare-const {s} Int)");
                let _ = writeln!(out, "(assert (and (<= {} {s}) (<= {s} {})))", int(*lo), int(*hi));
            }
            Domain::EnumSet { values } => {
                let _ = writeln!(out, "(declare-const {s} Int)");
                let alts: Vec<String> = values
                    .iter()
                    .map(|x| format!("(= {s} {})", codes.iter().position(|c| c == x).expect("collected")))
                    .collect();
                let _ = writeln!(out, "(assert (or {}))", alts.join(" "));
            }
        }
    }
    for c in &p.constraints {
        let _ = writeln!(out, "(assert {})", lit(c, &codes));
    }
    out.push_str("(check-sat)\n(get-model)\n");
    out
}
