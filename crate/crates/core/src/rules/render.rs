use super::{Rule, RuleFlag};
use crate::term::{CmpOp, ConstraintLit, DataConstraint, Term};

/// Replaces variables defined by `data` with their definitions, repeatedly.
pub fn substitute_definitions(term: &Term, data: &[DataConstraint]) -> Term {
    let mut t = term.clone();
    // Definitions are acyclic (SSA), so the depth is bounded by the data size.
    for _ in 0..=data.len() {
        let next = t.map(&mut |x| match x {
            Term::Var(name) => data.iter().find(|d| d.defined_name() == Some(name.as_str())).map(|d| d.source.clone()),
            _ => None,
        });
        if next == t {
            break;
        }
        t = next;
    }
    t.fold_constants()
}

fn term_text(t: &Term, nested: bool) -> String {
    match t {
        Term::Int(v) => v.to_string(),
        Term::Str(s) => s.clone(),
        Term::Bool(b) => b.to_string(),
        Term::Var(v) => v.clone(),
        Term::Attr { device, attribute } => format!("{device}.{attribute}"),
        Term::Event => "event".to_string(),
        Term::Arith(op, a, b) => {
            let s = format!("{} {} {}", term_text(a, true), op.symbol(), term_text(b, true));
            if nested {
                format!("({s})")
            } else {
                s
            }
        }
    }
}

pub fn render_term(t: &Term) -> String {
    term_text(t, false)
}

pub fn render_lit(l: &ConstraintLit) -> String {
    format!("{} {} {}", render_term(&l.lhs), l.op.symbol(), render_term(&l.rhs))
}

fn resolve(l: &ConstraintLit, data: &[DataConstraint]) -> ConstraintLit {
    ConstraintLit::new(substitute_definitions(&l.lhs, data), l.op, substitute_definitions(&l.rhs, data))
}

fn trigger_text(rule: &Rule) -> String {
    let t = &rule.trigger;
    if t.is_lifecycle() {
        return format!("WHEN app is {}", t.attribute);
    }
    let head = format!("{}.{}", t.subject, t.attribute);
    let own = Term::attr(t.subject.clone(), t.attribute.clone());
    let lits: Vec<ConstraintLit> = t.constraint.iter().map(|l| resolve(l, &rule.condition.data)).collect();
    match lits.as_slice() {
        [] => format!("WHEN {head} changes"),
        [l] if l.op == CmpOp::Eq && l.lhs == own && l.rhs.is_const() => {
            format!("WHEN {head} becomes {}", render_term(&l.rhs))
        }
        _ => {
            let mut parts: Vec<String> = lits.iter().map(render_lit).collect();
            parts.sort();
            format!("WHEN {head} changes to satisfy {}", parts.join(" AND "))
        }
    }
}

/// One-line WHEN/IF/THEN text of a rule. Locals and bound inputs are
/// substituted by their definitions; predicates are sorted by text.
pub fn render_rule(rule: &Rule) -> String {
    let mut out = trigger_text(rule);
    let mut preds: Vec<String> =
        rule.condition.predicates.iter().map(|l| render_lit(&resolve(l, &rule.condition.data))).collect();
    preds.sort();
    preds.dedup();
    if !preds.is_empty() {
        out.push_str(" IF ");
        out.push_str(&preds.join(" AND "));
    }
    let a = &rule.action;
    let args: Vec<String> = a.paras.iter().map(|p| render_term(&substitute_definitions(p, &a.data))).collect();
    out.push_str(&format!(" THEN {}.{}({})", a.subject, a.command, args.join(", ")));
    if a.when > 0 {
        out.push_str(&format!(" after {}s", a.when));
    }
    if a.period > 0 {
        out.push_str(&format!(" every {}s", a.period));
    }
    if rule.is_flagged(RuleFlag::OnUninstall) {
        out.push_str(" [on uninstall]");
    }
    if rule.is_flagged(RuleFlag::Unsatisfiable) {
        out.push_str(" [unsatisfiable]");
    }
    out
}
