use std::collections::{BTreeMap, BTreeSet};

use super::diagnostics::{DiagCode, Diagnostic, Span};
use super::{BinOp, Expr, ExprKind, FuncDef, InputKind, Literal, SourceUnit, Stmt, StmtKind, UnOp, BUILTIN_RECEIVERS};
use crate::catalog::Catalog;
use crate::value::Sort;

/// Built-in no-op calls accepted as `name()`.
const BUILTIN_CALLS: [&str; 1] = ["unsubscribe"];

/// Static checks that make a unit safe for path enumeration. Empty result
/// means the unit is analyzable.
pub fn validate(unit: &SourceUnit, catalog: &Catalog) -> Vec<Diagnostic> {
    let mut v = Validator { unit, catalog, diags: Vec::new() };
    v.declarations();
    for f in &unit.functions {
        v.function(f);
    }
    v.recursion();
    let mut diags = v.diags;
    diags.sort_by(|a, b| {
        (a.location.start.offset, a.code, &a.message).cmp(&(b.location.start.offset, b.code, &b.message))
    });
    diags.dedup_by(|a, b| a.code == b.code && a.message == b.message && a.location.start == b.location.start);
    diags
}

/// Inferred sort of an expression; `None` means not statically known.
type SortGuess = Option<Sort>;

struct Validator<'a> {
    unit: &'a SourceUnit,
    catalog: &'a Catalog,
    diags: Vec<Diagnostic>,
}

#[derive(Clone, Default)]
struct Scope {
    assigned: BTreeSet<String>,
    sorts: BTreeMap<String, SortGuess>,
}

impl<'a> Validator<'a> {
    fn err(&mut self, code: DiagCode, span: Span, msg: impl Into<String>) {
        self.diags.push(Diagnostic::error(code, span, msg));
    }

    fn declarations(&mut self) {
        for input in &self.unit.inputs {
            if BUILTIN_RECEIVERS.contains(&input.name.as_str()) {
                self.err(DiagCode::ReservedName, input.span, format!("`{}` is a built-in name", input.name));
            }
            match &input.kind {
                InputKind::Device(cap) if self.catalog.capability(cap).is_none() => {
                    self.err(DiagCode::UnknownCapability, input.span, format!("unknown capability `{cap}`"));
                }
                InputKind::Enum(values) => {
                    let distinct: BTreeSet<_> = values.iter().collect();
                    if distinct.len() != values.len() {
                        self.err(DiagCode::DuplicateName, input.span, format!("enum `{}` repeats a value", input.name));
                    }
                }
                _ => {}
            }
        }
        for f in &self.unit.functions {
            if BUILTIN_RECEIVERS.contains(&f.name.as_str()) || BUILTIN_CALLS.contains(&f.name.as_str()) {
                self.err(DiagCode::ReservedName, f.span, format!("`{}` is a built-in name", f.name));
            }
        }
    }

    /// Capability of a device-valued receiver, or a diagnostic-worthy reason.
    fn receiver_capability(&self, name: &str) -> Result<&'a str, String> {
        if let Some(cap) = self.catalog.builtin_capability(name) {
            return Ok(cap);
        }
        match self.unit.input(name).map(|i| &i.kind) {
            Some(InputKind::Device(cap)) => Ok(cap.as_str()),
            Some(_) => Err(format!("`{name}` is a value input, not a device")),
            None => Err(format!("`{name}` is not a declared device")),
        }
    }

    fn handler_exists(&mut self, name: &str, span: Span) {
        if self.unit.function(name).is_none() {
            self.err(DiagCode::UnknownHandler, span, format!("no function named `{name}`"));
        }
    }

    fn function(&mut self, f: &'a FuncDef) {
        let mut scope = Scope::default();
        self.block(f, &f.body, &mut scope);
    }

    fn block(&mut self, f: &'a FuncDef, body: &'a [Stmt], scope: &mut Scope) {
        for s in body {
            self.stmt(f, s, scope);
        }
    }

    /// Runs `body` in a copy of `scope` and returns the names it definitely assigns.
    fn branch(&mut self, f: &'a FuncDef, body: &'a [Stmt], scope: &Scope) -> Scope {
        let mut inner = scope.clone();
        self.block(f, body, &mut inner);
        inner
    }

    fn join(scope: &mut Scope, branches: &[Scope]) {
        let mut common: Option<BTreeSet<String>> = None;
        for b in branches {
            common = Some(match common {
                None => b.assigned.clone(),
                Some(c) => c.intersection(&b.assigned).cloned().collect(),
            });
            for (k, s) in &b.sorts {
                let merged = match scope.sorts.get(k) {
                    Some(prev) if prev != s => None,
                    _ => *s,
                };
                scope.sorts.insert(k.clone(), merged);
            }
        }
        if let Some(c) = common {
            scope.assigned.extend(c);
        }
    }

    fn stmt(&mut self, f: &'a FuncDef, s: &'a Stmt, scope: &mut Scope) {
        match &s.kind {
            StmtKind::Subscribe { device, spec, handler } => {
                self.handler_exists(handler, s.span);
                self.subscription(device, spec, s.span);
            }
            StmtKind::RunIn { delay: e, handler } | StmtKind::RunEvery { period: e, handler } => {
                self.handler_exists(handler, s.span);
                match e.const_int() {
                    Some(v) if v >= 0 => {}
                    Some(_) => self.err(DiagCode::NonConstantSchedule, e.span, "schedule delay must not be negative"),
                    None => self.err(
                        DiagCode::NonConstantSchedule,
                        e.span,
                        "schedule delay must be a constant integer expression",
                    ),
                }
            }
            StmtKind::Assign { target, value } => {
                if self.unit.input(target).is_some() || f.param.as_deref() == Some(target.as_str()) {
                    self.err(DiagCode::AssignToInput, s.span, format!("cannot assign to `{target}`"));
                } else if BUILTIN_RECEIVERS.contains(&target.as_str()) {
                    self.err(DiagCode::ReservedName, s.span, format!("`{target}` is a built-in name"));
                }
                let sort = self.value_expr(f, value, scope);
                scope.assigned.insert(target.clone());
                scope.sorts.insert(target.clone(), sort);
            }
            StmtKind::Command { device, command, args } => {
                let arg_sorts: Vec<SortGuess> = args.iter().map(|a| self.value_expr(f, a, scope)).collect();
                let cap = match self.receiver_capability(device) {
                    Ok(cap) => cap,
                    Err(msg) => {
                        let code = if self.unit.input(device).is_some() {
                            DiagCode::SortMismatch
                        } else {
                            DiagCode::UnboundVariable
                        };
                        self.err(code, s.span, msg);
                        return;
                    }
                };
                let Some(spec) = self.catalog.command(cap, command) else {
                    self.err(
                        DiagCode::UnknownCommand,
                        s.span,
                        format!("capability `{cap}` has no command `{command}`"),
                    );
                    return;
                };
                let params: Vec<Sort> = spec.params.iter().map(|p| p.sort).collect();
                self.check_args(&format!("{device}.{command}"), &params, &arg_sorts, s.span);
            }
            StmtKind::Api { name, args } => {
                let arg_sorts: Vec<SortGuess> = args.iter().map(|a| self.value_expr(f, a, scope)).collect();
                let Some(sink) = self.catalog.api_sink(name) else {
                    self.err(DiagCode::UnknownCommand, s.span, format!("unknown api sink `{name}`"));
                    return;
                };
                let params: Vec<Sort> = sink.params.iter().map(|p| p.sort).collect();
                self.check_args(&format!("api.{name}"), &params, &arg_sorts, s.span);
            }
            StmtKind::Call { name } => {
                if !BUILTIN_CALLS.contains(&name.as_str()) {
                    self.handler_exists(name, s.span);
                }
            }
            StmtKind::If { cond, then_body, else_body } => {
                self.condition(f, cond, scope);
                let t = self.branch(f, then_body, scope);
                let e = match else_body {
                    Some(b) => self.branch(f, b, scope),
                    None => scope.clone(),
                };
                Self::join(scope, &[t, e]);
            }
            StmtKind::Switch { scrutinee, cases, default } => {
                let sort = self.value_expr(f, scrutinee, scope);
                let mut seen = BTreeSet::new();
                let mut branches = Vec::new();
                for (lit, body) in cases {
                    let lit_sort = lit.to_value().sort();
                    if sort.is_some_and(|s| s != lit_sort) {
                        self.err(
                            DiagCode::SortMismatch,
                            s.span,
                            format!("case {lit:?} does not match the switch value"),
                        );
                    }
                    if !seen.insert(lit.clone()) {
                        self.err(DiagCode::DuplicateName, s.span, format!("duplicate case {}", lit_text(lit)));
                    }
                    branches.push(self.branch(f, body, scope));
                }
                match default {
                    Some(d) => branches.push(self.branch(f, d, scope)),
                    None => branches.push(scope.clone()),
                }
                Self::join(scope, &branches);
            }
        }
    }

    fn check_args(&mut self, what: &str, params: &[Sort], args: &[SortGuess], span: Span) {
        if params.len() != args.len() {
            self.err(
                DiagCode::ArityMismatch,
                span,
                format!("`{what}` takes {} argument(s), {} given", params.len(), args.len()),
            );
            return;
        }
        for (i, (p, a)) in params.iter().zip(args).enumerate() {
            if a.is_some_and(|a| a != *p) {
                self.err(DiagCode::SortMismatch, span, format!("argument {} of `{what}` must be {p}", i + 1));
            }
        }
    }

    fn subscription(&mut self, device: &str, spec: &str, span: Span) {
        let cap = match self.receiver_capability(device) {
            Ok(cap) => cap,
            Err(msg) => {
                self.err(DiagCode::UnboundVariable, span, msg);
                return;
            }
        };
        let (attr, value) = match spec.split_once('.') {
            Some((a, v)) => (a, Some(v)),
            None => (spec, None),
        };
        let Some(aspec) = self.catalog.attribute(cap, attr) else {
            self.err(DiagCode::UnknownAttribute, span, format!("capability `{cap}` has no attribute `{attr}`"));
            return;
        };
        let Some(v) = value else { return };
        let ok = match aspec.sort {
            Sort::Int => v.parse::<i64>().is_ok(),
            Sort::Bool => v == "true" || v == "false",
            Sort::Str => aspec.values.as_ref().is_none_or(|vals| vals.iter().any(|x| x == v)),
        };
        if !ok || v.is_empty() {
            self.err(DiagCode::SortMismatch, span, format!("`{v}` is not a value of `{cap}.{attr}`"));
        }
    }

    fn attr_read(&mut self, device: &str, attribute: &str, span: Span) -> SortGuess {
        if device == "state" {
            return None;
        }
        let cap = match self.receiver_capability(device) {
            Ok(cap) => cap,
            Err(msg) => {
                self.err(DiagCode::UnboundVariable, span, msg);
                return None;
            }
        };
        match self.catalog.attribute(cap, attribute) {
            Some(a) => Some(a.sort),
            None => {
                self.err(
                    DiagCode::UnknownAttribute,
                    span,
                    format!("capability `{cap}` has no attribute `{attribute}`"),
                );
                None
            }
        }
    }

    fn var_ref(&mut self, f: &FuncDef, name: &str, span: Span, scope: &Scope) -> SortGuess {
        if let Some(input) = self.unit.input(name) {
            return match &input.kind {
                InputKind::Number => Some(Sort::Int),
                InputKind::Str | InputKind::Enum(_) => Some(Sort::Str),
                InputKind::Bool => Some(Sort::Bool),
                InputKind::Device(_) => {
                    self.err(
                        DiagCode::UnsupportedExpression,
                        span,
                        format!("device `{name}` used as a value; read an attribute with `.current`"),
                    );
                    None
                }
            };
        }
        if scope.assigned.contains(name) {
            return scope.sorts.get(name).copied().flatten();
        }
        if f.param.as_deref() == Some(name) {
            self.err(DiagCode::UnsupportedExpression, span, format!("use `{name}.value` to read the event"));
            return None;
        }
        self.err(DiagCode::UnboundVariable, span, format!("`{name}` is not an input or a definitely assigned local"));
        None
    }

    /// A non-boolean expression: only arithmetic over atoms is allowed.
    fn value_expr(&mut self, f: &FuncDef, e: &Expr, scope: &Scope) -> SortGuess {
        match &e.kind {
            ExprKind::Int(_) => Some(Sort::Int),
            ExprKind::Str(_) => Some(Sort::Str),
            ExprKind::Bool(_) => Some(Sort::Bool),
            ExprKind::Var(v) => self.var_ref(f, v, e.span, scope),
            ExprKind::EventValue => {
                if f.param.is_none() {
                    self.err(DiagCode::UnboundVariable, e.span, format!("`{}` has no event parameter", f.name));
                }
                None
            }
            ExprKind::AttrRead { device, attribute } => self.attr_read(device, attribute, e.span),
            ExprKind::Unary(UnOp::Neg, x) => {
                let s = self.value_expr(f, x, scope);
                self.expect_int(s, x.span);
                Some(Sort::Int)
            }
            ExprKind::Binary(op @ (BinOp::Add | BinOp::Sub | BinOp::Mul), a, b) => {
                let (sa, sb) = (self.value_expr(f, a, scope), self.value_expr(f, b, scope));
                self.expect_int(sa, a.span);
                self.expect_int(sb, b.span);
                if *op == BinOp::Mul && a.const_int().is_none() && b.const_int().is_none() {
                    self.err(DiagCode::UnsupportedExpression, e.span, "multiplication needs a constant operand");
                }
                Some(Sort::Int)
            }
            ExprKind::Unary(UnOp::Not, _) | ExprKind::Binary(..) => {
                self.err(
                    DiagCode::UnsupportedExpression,
                    e.span,
                    "comparisons and logical operators are only allowed in `if` conditions",
                );
                None
            }
        }
    }

    fn expect_int(&mut self, s: SortGuess, span: Span) {
        if let Some(s) = s {
            if s != Sort::Int {
                self.err(DiagCode::SortMismatch, span, format!("arithmetic on a {s} value"));
            }
        }
    }

    fn condition(&mut self, f: &FuncDef, e: &Expr, scope: &Scope) {
        match &e.kind {
            ExprKind::Unary(UnOp::Not, x) => self.condition(f, x, scope),
            ExprKind::Binary(BinOp::And | BinOp::Or, a, b) => {
                self.condition(f, a, scope);
                self.condition(f, b, scope);
            }
            ExprKind::Binary(op, a, b) if op.is_comparison() => {
                let (sa, sb) = (self.value_expr(f, a, scope), self.value_expr(f, b, scope));
                if let (Some(x), Some(y)) = (sa, sb) {
                    if x != y {
                        self.err(DiagCode::SortMismatch, e.span, format!("comparing {x} with {y}"));
                        return;
                    }
                }
                let ordering = !matches!(op, BinOp::Eq | BinOp::Ne);
                if ordering && (sa.is_some_and(|s| s != Sort::Int) || sb.is_some_and(|s| s != Sort::Int)) {
                    self.err(DiagCode::SortMismatch, e.span, format!("`{}` needs integer operands", op.symbol()));
                }
            }
            _ => {
                let s = self.value_expr(f, e, scope);
                if s.is_some_and(|s| s != Sort::Bool) {
                    self.err(DiagCode::SortMismatch, e.span, "condition is not boolean");
                }
            }
        }
    }

    fn recursion(&mut self) {
        let mut edges: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for f in &self.unit.functions {
            let out = edges.entry(f.name.as_str()).or_default();
            super::walk_stmts(&f.body, &mut |s| match &s.kind {
                StmtKind::Call { name }
                | StmtKind::Subscribe { handler: name, .. }
                | StmtKind::RunIn { handler: name, .. }
                | StmtKind::RunEvery { handler: name, .. } => {
                    out.insert(name.as_str());
                }
                _ => {}
            });
        }
        let mut reported: BTreeSet<BTreeSet<&str>> = BTreeSet::new();
        for f in &self.unit.functions {
            let mut stack = vec![f.name.as_str()];
            if let Some(cycle) = find_cycle(&edges, &mut stack, &mut BTreeSet::new()) {
                let key: BTreeSet<&str> = cycle.iter().copied().collect();
                if reported.insert(key) {
                    let first = self.unit.function(cycle[0]).map(|f| f.span).unwrap_or_default();
                    self.err(
                        DiagCode::RecursionNotSupported,
                        first,
                        format!("recursive call chain: {}", cycle.join(" -> ")),
                    );
                }
            }
        }
    }
}

/// Depth-first search for a cycle through the last node of `stack` that
/// returns to `stack[0]`.
fn find_cycle<'a>(
    edges: &BTreeMap<&'a str, BTreeSet<&'a str>>,
    stack: &mut Vec<&'a str>,
    done: &mut BTreeSet<&'a str>,
) -> Option<Vec<&'a str>> {
    let here = *stack.last()?;
    for &next in edges.get(here).into_iter().flatten() {
        if next == stack[0] {
            let mut cycle = stack.clone();
            cycle.push(next);
            return Some(cycle);
        }
        if stack.contains(&next) || done.contains(next) {
            continue;
        }
        stack.push(next);
        if let Some(c) = find_cycle(edges, stack, done) {
            return Some(c);
        }
        stack.pop();
        done.insert(next);
    }
    None
}

fn lit_text(l: &Literal) -> String {
    match l {
        Literal::Int(v) => v.to_string(),
        Literal::Str(s) => format!("{s:?}"),
        Literal::Bool(b) => b.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    fn codes(src: &str) -> Vec<DiagCode> {
        let unit = parse(src).unwrap();
        validate(&unit, &Catalog::default_catalog()).into_iter().map(|d| d.code).collect()
    }

    #[test]
    fn mutual_recursion() {
        assert_eq!(codes("app \"A\" def a() { b() } def b() { a() }"), vec![DiagCode::RecursionNotSupported]);
    }

    #[test]
    fn subscription_ok() {
        let src = "app \"A\" input tv1: device.switch def installed() { subscribe(tv1, \"switch\", onHandler) } \
                   def onHandler(evt) { }";
        assert!(codes(src).is_empty());
    }

    #[test]
    fn sensor_has_no_commands() {
        let src = "app \"A\" input tSensor: device.temperatureMeasurement def installed() { tSensor.on() }";
        assert_eq!(codes(src), vec![DiagCode::UnknownCommand]);
    }

    #[test]
    fn unbound_and_maybe_unbound() {
        let src = "app \"A\" input s: device.switch def f() { if (s.current(\"switch\") == \"on\") { x = 1 } \
                   if (x > 0) { s.off() } if (y > 0) { s.on() } }";
        assert_eq!(codes(src), vec![DiagCode::UnboundVariable, DiagCode::UnboundVariable]);
    }

    #[test]
    fn both_branches_assign() {
        let src =
            "app \"A\" input s: device.switch def f() { if (s.current(\"switch\") == \"on\") { x = 1 } else { x = 2 } \
                   if (x > 0) { s.off() } }";
        assert!(codes(src).is_empty());
    }

    #[test]
    fn schedule_must_be_constant() {
        let src = "app \"A\" input n: number def f() { runIn(n * 60, g) runIn(5 * 60, g) } def g() { }";
        assert_eq!(codes(src), vec![DiagCode::NonConstantSchedule]);
    }

    #[test]
    fn misc_errors() {
        let src = "app \"A\" input s: device.switch input n: number def f(evt) { n = 3 s.on(1) \
                   if (evt.value > \"a\") { } foo() subscribe(s, \"level\", f) }";
        let got = codes(src);
        for c in [
            DiagCode::AssignToInput,
            DiagCode::ArityMismatch,
            DiagCode::SortMismatch,
            DiagCode::UnknownHandler,
            DiagCode::UnknownAttribute,
        ] {
            assert!(got.contains(&c), "{c:?} missing from {got:?}");
        }
    }

    #[test]
    fn builtins_resolve() {
        let src = "app \"A\" def f() { if (location.current(\"mode\") == \"away\" && clock.current(\"time\") < 300 \
                   && state.current(\"n\") > 2) { location.setMode(\"home\") api.sendSms(\"1\", \"hi\") unsubscribe() } }";
        assert!(codes(src).is_empty(), "{:?}", codes(src));
    }
}
