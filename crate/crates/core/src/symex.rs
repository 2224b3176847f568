//! Depth-first symbolic execution of HGL apps into TCA rules.
//!
//! Every path from a lifecycle method to a sink (device command or API call)
//! yields one rule. Local calls and scheduled handlers are inlined;
//! `subscribe` explores its handler separately under a new trigger.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::catalog::Catalog;
use crate::lang::{BinOp, Expr, ExprKind, FuncDef, InputKind, SourceUnit, Stmt, StmtKind, UnOp};
use crate::rules::{
    referenced_data, Action, Condition, InputType, Rule, RuleFlag, RuleSet, Trigger, LIFECYCLE_SUBJECT, STATE_PREFIX,
};
use crate::term::{ArithOp, CmpOp, ConstraintLit, DataConstraint, Term};
use crate::value::{Sort, Value};

pub const PATH_BUDGET: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SymexError {
    #[error("more than {0} execution paths")]
    PathBudgetExceeded(usize),
    #[error("function `{0}` is not defined")]
    UnknownFunction(String),
    #[error("`{0}` does not name a device or built-in receiver")]
    UnknownReceiver(String),
}

/// Where the current path's sinks get their trigger from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TriggerSource {
    Lifecycle(String),
    Subscription { device: String, spec: String },
}

/// Symbolic state along one path.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SymbolicEnv {
    /// Local name -> current SSA term, for the innermost function.
    pub bindings: BTreeMap<String, Term>,
    pub path_lits: Vec<ConstraintLit>,
    pub data: Vec<DataConstraint>,
    pub when: u64,
    pub period: u64,
    ssa: BTreeMap<String, u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinkHit {
    pub subject: String,
    pub command: String,
    pub params: Vec<Term>,
    pub when: u64,
    pub period: u64,
    pub path_lits: Vec<ConstraintLit>,
    pub data: Vec<DataConstraint>,
    pub trigger: TriggerSource,
    pub entry: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExploredPath {
    pub env: SymbolicEnv,
    pub hits: Vec<SinkHit>,
}

enum Frame<'a> {
    Stmts(&'a [Stmt], usize),
    RestoreBindings(BTreeMap<String, Term>),
    RestoreSchedule(u64, u64),
}

struct PathCursor<'a> {
    env: SymbolicEnv,
    hits: Vec<SinkHit>,
    frames: Vec<Frame<'a>>,
}

struct Explorer<'a> {
    unit: &'a SourceUnit,
    catalog: &'a Catalog,
    entry: &'a str,
    paths_started: usize,
}

/// Enumerates the paths of one entry function.
pub fn explore(unit: &SourceUnit, catalog: &Catalog, entry: &FuncDef) -> Result<Vec<ExploredPath>, SymexError> {
    let mut ex = Explorer { unit, catalog, entry: &entry.name, paths_started: 1 };
    ex.run(SymbolicEnv::default(), &entry.body, &TriggerSource::Lifecycle(entry.name.clone()))
}

/// Extracts the rule set of a validated unit.
pub fn extract_rules(unit: &SourceUnit, catalog: &Catalog) -> Result<RuleSet, SymexError> {
    let mut rules: Vec<Rule> = Vec::new();
    let mut seen = BTreeSet::new();
    let mut state_sorts: BTreeMap<String, Sort> = BTreeMap::new();
    for entry in crate::lang::ENTRY_POINTS {
        let Some(f) = unit.function(entry) else { continue };
        for path in explore(unit, catalog, f)? {
            for hit in &path.hits {
                note_state_sorts(hit, &mut state_sorts);
                let rule = build_rule(unit, catalog, hit);
                if seen.insert(rule.id.clone()) {
                    rules.push(rule);
                }
            }
        }
    }
    let mut inputs = BTreeMap::new();
    let mut devices = BTreeMap::new();
    for i in &unit.inputs {
        match &i.kind {
            InputKind::Device(cap) => {
                devices.insert(i.name.clone(), cap.clone());
            }
            InputKind::Number => {
                inputs.insert(i.name.clone(), InputType::Number);
            }
            InputKind::Str => {
                inputs.insert(i.name.clone(), InputType::String);
            }
            InputKind::Bool => {
                inputs.insert(i.name.clone(), InputType::Bool);
            }
            InputKind::Enum(v) => {
                inputs.insert(i.name.clone(), InputType::Enum(v.clone()));
            }
        }
    }
    for r in &rules {
        let mut vars = BTreeSet::new();
        for l in r.all_lits() {
            l.collect_vars(&mut vars);
        }
        for d in r.all_data() {
            d.source.collect_vars(&mut vars);
        }
        for v in vars.into_iter().filter(|v| v.starts_with(STATE_PREFIX)) {
            let t = match state_sorts.get(&v) {
                Some(Sort::Str) => InputType::String,
                Some(Sort::Bool) => InputType::Bool,
                _ => InputType::Number,
            };
            inputs.insert(v, t);
        }
        for d in r.device_vars() {
            if let Some(cap) = catalog.builtin_capability(&d) {
                devices.insert(d, cap.to_string());
            }
        }
    }
    Ok(RuleSet { app: unit.app_name.clone(), inputs, devices, rules })
}

/// `state.*` sources take the sort of whatever constant they are compared with.
fn note_state_sorts(hit: &SinkHit, out: &mut BTreeMap<String, Sort>) {
    for l in &hit.path_lits {
        for (a, b) in [(&l.lhs, &l.rhs), (&l.rhs, &l.lhs)] {
            if let (Term::Var(v), Some(c)) = (a, b.as_const()) {
                if v.starts_with(STATE_PREFIX) {
                    out.entry(v.clone()).or_insert(c.sort());
                }
            }
        }
    }
}

impl<'a> Explorer<'a> {
    fn run(
        &mut self,
        env: SymbolicEnv,
        body: &'a [Stmt],
        src: &TriggerSource,
    ) -> Result<Vec<ExploredPath>, SymexError> {
        let mut done = Vec::new();
        let mut work = vec![PathCursor { env, hits: Vec::new(), frames: vec![Frame::Stmts(body, 0)] }];
        while let Some(mut cur) = work.pop() {
            match self.step(&mut cur, src)? {
                Step::Continue => work.push(cur),
                Step::Fork(children) => {
                    self.paths_started += children.len().saturating_sub(1);
                    if self.paths_started > PATH_BUDGET {
                        return Err(SymexError::PathBudgetExceeded(PATH_BUDGET));
                    }
                    // Reverse so the first alternative is explored first.
                    work.extend(children.into_iter().rev());
                }
                Step::Done => done.push(ExploredPath { env: cur.env, hits: cur.hits }),
                Step::Pruned => {}
            }
        }
        Ok(done)
    }

    fn step(&mut self, cur: &mut PathCursor<'a>, src: &TriggerSource) -> Result<Step<'a>, SymexError> {
        let Some(frame) = cur.frames.pop() else { return Ok(Step::Done) };
        let stmt = match frame {
            Frame::RestoreBindings(b) => {
                cur.env.bindings = b;
                return Ok(Step::Continue);
            }
            Frame::RestoreSchedule(w, p) => {
                cur.env.when = w;
                cur.env.period = p;
                return Ok(Step::Continue);
            }
            Frame::Stmts(body, i) => {
                if i >= body.len() {
                    return Ok(Step::Continue);
                }
                cur.frames.push(Frame::Stmts(body, i + 1));
                &body[i]
            }
        };
        match &stmt.kind {
            StmtKind::Assign { target, value } => {
                let t = self.term(value, &cur.env);
                let n = cur.env.ssa.entry(target.clone()).or_insert(0);
                *n += 1;
                let name = if *n == 1 { target.clone() } else { format!("{target}#{n}") };
                cur.env.data.push(DataConstraint::new(Term::Var(name.clone()), t));
                cur.env.bindings.insert(target.clone(), Term::Var(name));
            }
            StmtKind::Command { device, command, args } => {
                let params = args.iter().map(|a| self.term(a, &cur.env)).collect();
                cur.hits.push(self.hit(device.clone(), command.clone(), params, &cur.env, src));
            }
            StmtKind::Api { name, args } => {
                let params = args.iter().map(|a| self.term(a, &cur.env)).collect();
                let (subject, command) = match self.catalog.api_sink(name).and_then(|s| s.target.as_ref()) {
                    Some(t) => (t.subject.clone(), t.command.clone()),
                    None => ("api".to_string(), name.clone()),
                };
                cur.hits.push(self.hit(subject, command, params, &cur.env, src));
            }
            StmtKind::Call { name } => {
                if crate::lang::BUILTIN_RECEIVERS.contains(&name.as_str()) || name == "unsubscribe" {
                    return Ok(Step::Continue);
                }
                let f = self.function(name)?;
                self.enter(cur, f);
            }
            StmtKind::RunIn { delay, handler } => {
                let f = self.function(handler)?;
                let d = delay.const_int().unwrap_or(0).max(0) as u64;
                cur.frames.push(Frame::RestoreSchedule(cur.env.when, cur.env.period));
                cur.env.when = cur.env.when.saturating_add(d);
                self.enter(cur, f);
            }
            StmtKind::RunEvery { period, handler } => {
                let f = self.function(handler)?;
                let p = period.const_int().unwrap_or(0).max(0) as u64;
                cur.frames.push(Frame::RestoreSchedule(cur.env.when, cur.env.period));
                if p > 0 {
                    cur.env.period = p;
                }
                self.enter(cur, f);
            }
            StmtKind::Subscribe { device, spec, handler } => {
                let f = self.function(handler)?;
                let mut env = cur.env.clone();
                env.bindings.clear();
                env.when = 0;
                env.period = 0;
                let sub = TriggerSource::Subscription { device: device.clone(), spec: spec.clone() };
                for p in self.run(env, &f.body, &sub)? {
                    cur.hits.extend(p.hits);
                }
            }
            StmtKind::If { cond, then_body, else_body } => {
                let mut children = Vec::new();
                for alt in self.alternatives(cond, true, &cur.env) {
                    if let Some(c) = fork(cur, &alt, then_body) {
                        children.push(c);
                    }
                }
                let empty: &[Stmt] = &[];
                for alt in self.alternatives(cond, false, &cur.env) {
                    if let Some(c) = fork(cur, &alt, else_body.as_deref().unwrap_or(empty)) {
                        children.push(c);
                    }
                }
                return Ok(if children.is_empty() { Step::Pruned } else { Step::Fork(children) });
            }
            StmtKind::Switch { scrutinee, cases, default } => {
                let s = self.term(scrutinee, &cur.env);
                let mut children = Vec::new();
                let mut others = Vec::new();
                for (lit, body) in cases {
                    let c = Term::constant(&lit.to_value());
                    let eq = ConstraintLit::normalized(s.clone(), CmpOp::Eq, c.clone());
                    others.push(ConstraintLit::normalized(s.clone(), CmpOp::Ne, c));
                    if let Some(alt) = simplify(vec![eq]) {
                        if let Some(child) = fork(cur, &alt, body) {
                            children.push(child);
                        }
                    }
                }
                if let Some(alt) = simplify(others) {
                    let empty: &[Stmt] = &[];
                    if let Some(child) = fork(cur, &alt, default.as_deref().unwrap_or(empty)) {
                        children.push(child);
                    }
                }
                return Ok(if children.is_empty() { Step::Pruned } else { Step::Fork(children) });
            }
        }
        Ok(Step::Continue)
    }

    fn function(&self, name: &str) -> Result<&'a FuncDef, SymexError> {
        self.unit.function(name).ok_or_else(|| SymexError::UnknownFunction(name.to_string()))
    }

    /// Inlines `f`: fresh local scope, restored on return.
    fn enter(&self, cur: &mut PathCursor<'a>, f: &'a FuncDef) {
        let saved = std::mem::take(&mut cur.env.bindings);
        cur.frames.push(Frame::RestoreBindings(saved));
        cur.frames.push(Frame::Stmts(&f.body, 0));
    }

    fn hit(
        &self,
        subject: String,
        command: String,
        params: Vec<Term>,
        env: &SymbolicEnv,
        src: &TriggerSource,
    ) -> SinkHit {
        SinkHit {
            subject,
            command,
            params,
            when: env.when,
            period: env.period,
            path_lits: env.path_lits.clone(),
            data: env.data.clone(),
            trigger: src.clone(),
            entry: self.entry.to_string(),
        }
    }

    fn term(&self, e: &Expr, env: &SymbolicEnv) -> Term {
        let t = match &e.kind {
            ExprKind::Int(v) => Term::Int(*v),
            ExprKind::Str(s) => Term::Str(s.clone()),
            ExprKind::Bool(b) => Term::Bool(*b),
            ExprKind::Var(v) => env.bindings.get(v).cloned().unwrap_or_else(|| Term::Var(v.clone())),
            ExprKind::EventValue => Term::Event,
            ExprKind::AttrRead { device, attribute } if device == "state" => {
                Term::Var(format!("{STATE_PREFIX}{attribute}"))
            }
            ExprKind::AttrRead { device, attribute } => Term::attr(device.clone(), attribute.clone()),
            ExprKind::Unary(UnOp::Neg, x) => {
                Term::Arith(ArithOp::Mul, Box::new(Term::Int(-1)), Box::new(self.term(x, env)))
            }
            ExprKind::Binary(op @ (BinOp::Add | BinOp::Sub | BinOp::Mul), a, b) => {
                let op = match op {
                    BinOp::Add => ArithOp::Add,
                    BinOp::Sub => ArithOp::Sub,
                    _ => ArithOp::Mul,
                };
                Term::Arith(op, Box::new(self.term(a, env)), Box::new(self.term(b, env)))
            }
            // Boolean structure outside a condition is rejected by validation.
            ExprKind::Unary(UnOp::Not, _) | ExprKind::Binary(..) => Term::Bool(false),
        };
        t.fold_constants()
    }

    /// Disjoint alternatives (each a conjunction) under which `e` has truth
    /// value `positive`. `a || b` becomes `a`, `!a && b`.
    fn alternatives(&self, e: &Expr, positive: bool, env: &SymbolicEnv) -> Vec<Vec<ConstraintLit>> {
        match &e.kind {
            ExprKind::Unary(UnOp::Not, x) => self.alternatives(x, !positive, env),
            ExprKind::Binary(op @ (BinOp::And | BinOp::Or), a, b) => {
                // For `&&` the "short" outcome is false; for `||` it is true.
                let short = *op == BinOp::Or;
                if positive == short {
                    let mut out = self.alternatives(a, short, env);
                    out.extend(product(&self.alternatives(a, !short, env), &self.alternatives(b, short, env)));
                    out
                } else {
                    product(&self.alternatives(a, !short, env), &self.alternatives(b, !short, env))
                }
            }
            ExprKind::Binary(op, a, b) if op.is_comparison() => {
                let cmp = op.cmp_op().expect("comparison");
                let cmp = if positive { cmp } else { cmp.negate() };
                let lit = ConstraintLit::normalized(self.term(a, env), cmp, self.term(b, env));
                match lit.eval_const() {
                    Some(true) => vec![vec![]],
                    Some(false) => vec![],
                    None => vec![vec![lit]],
                }
            }
            _ => {
                let t = self.term(e, env);
                let lit = ConstraintLit::normalized(t, CmpOp::Eq, Term::Bool(positive));
                match lit.eval_const() {
                    Some(true) => vec![vec![]],
                    Some(false) => vec![],
                    None => vec![vec![lit]],
                }
            }
        }
        .into_iter()
        .filter_map(simplify)
        .collect()
    }
}

enum Step<'a> {
    Continue,
    Fork(Vec<PathCursor<'a>>),
    Done,
    Pruned,
}

fn product(xs: &[Vec<ConstraintLit>], ys: &[Vec<ConstraintLit>]) -> Vec<Vec<ConstraintLit>> {
    let mut out = Vec::new();
    for x in xs {
        for y in ys {
            let mut c = x.clone();
            c.extend(y.iter().cloned());
            out.push(c);
        }
    }
    out
}

/// Dedupes a conjunction; `None` if it is syntactically contradictory.
fn simplify(lits: Vec<ConstraintLit>) -> Option<Vec<ConstraintLit>> {
    let mut out: Vec<ConstraintLit> = Vec::new();
    for l in lits {
        if conflicts(&out, &l) {
            return None;
        }
        if !out.contains(&l) {
            out.push(l);
        }
    }
    Some(out)
}

/// A literal conflicts with a conjunction if its negation is present, or it
/// pins the same term to a different constant.
fn conflicts(existing: &[ConstraintLit], l: &ConstraintLit) -> bool {
    let neg = l.negate();
    existing.iter().any(|e| {
        *e == neg
            || (e.op == CmpOp::Eq
                && l.op == CmpOp::Eq
                && e.lhs == l.lhs
                && e.rhs.is_const()
                && l.rhs.is_const()
                && e.rhs != l.rhs)
    })
}

fn fork<'a>(cur: &PathCursor<'a>, alt: &[ConstraintLit], body: &'a [Stmt]) -> Option<PathCursor<'a>> {
    let mut env = cur.env.clone();
    for l in alt {
        if conflicts(&env.path_lits, l) {
            return None;
        }
        if !env.path_lits.contains(l) {
            env.path_lits.push(l.clone());
        }
    }
    let mut frames: Vec<Frame<'a>> = cur
        .frames
        .iter()
        .map(|f| match f {
            Frame::Stmts(b, i) => Frame::Stmts(b, *i),
            Frame::RestoreBindings(b) => Frame::RestoreBindings(b.clone()),
            Frame::RestoreSchedule(w, p) => Frame::RestoreSchedule(*w, *p),
        })
        .collect();
    frames.push(Frame::Stmts(body, 0));
    Some(PathCursor { env, hits: cur.hits.clone(), frames })
}

/// Variables whose definitions (transitively) read the event value.
fn event_vars(data: &[DataConstraint]) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    loop {
        let before = out.len();
        for d in data {
            let Some(name) = d.defined_name() else { continue };
            let mut vars = BTreeSet::new();
            d.source.collect_vars(&mut vars);
            if d.source.mentions_event() || vars.iter().any(|v| out.contains(v)) {
                out.insert(name.to_string());
            }
        }
        if out.len() == before {
            return out;
        }
    }
}

/// Splits a subscription into trigger attribute and optional required value.
pub fn split_spec(spec: &str) -> (&str, Option<&str>) {
    match spec.split_once('.') {
        Some((a, v)) => (a, Some(v)),
        None => (spec, None),
    }
}

fn capability_of<'c>(unit: &'c SourceUnit, catalog: &'c Catalog, device: &str) -> Option<&'c str> {
    if let Some(c) = catalog.builtin_capability(device) {
        return Some(c);
    }
    match &unit.input(device)?.kind {
        InputKind::Device(c) => Some(c),
        _ => None,
    }
}

/// Folds event comparisons into the trigger. Returns the trigger, the
/// residual condition literals, rewritten data constraints, and whether the
/// trigger is self-contradictory.
pub fn fold_trigger(
    unit: &SourceUnit,
    catalog: &Catalog,
    src: &TriggerSource,
    lits: &[ConstraintLit],
    data: &[DataConstraint],
) -> (Trigger, Vec<ConstraintLit>, Vec<DataConstraint>, bool) {
    let (device, spec) = match src {
        TriggerSource::Lifecycle(entry) => {
            let t = Trigger { subject: LIFECYCLE_SUBJECT.into(), attribute: entry.clone(), constraint: vec![] };
            return (t, lits.to_vec(), data.to_vec(), false);
        }
        TriggerSource::Subscription { device, spec } => (device, spec),
    };
    let (attr, value) = split_spec(spec);
    let attr_term = Term::attr(device.clone(), attr);
    let evars = event_vars(data);
    let mut subst = |t: &Term| (*t == Term::Event).then(|| attr_term.clone());
    let data: Vec<DataConstraint> =
        data.iter().map(|d| DataConstraint::new(d.target.clone(), d.source.map(&mut subst))).collect();
    let mut constraint = Vec::new();
    let mut residual = Vec::new();
    for l in lits {
        let mut vars = BTreeSet::new();
        l.collect_vars(&mut vars);
        let from_event = l.mentions_event() || vars.iter().any(|v| evars.contains(v));
        let l = l.map_terms(&mut subst);
        if from_event {
            constraint.push(l);
        } else {
            residual.push(l);
        }
    }
    let mut contradictory = false;
    if let Some(v) = value {
        let sort = capability_of(unit, catalog, device)
            .and_then(|c| catalog.attribute(c, attr))
            .map(|a| a.sort)
            .unwrap_or(Sort::Str);
        let val = match sort {
            Sort::Int => v.parse::<i64>().map(Value::Int).unwrap_or_else(|_| Value::Str(v.to_string())),
            Sort::Bool => Value::parse_literal(v),
            Sort::Str => Value::Str(v.to_string()),
        };
        let pinned = Term::constant(&val);
        for l in &constraint {
            let check = l.map_terms(&mut |t| (*t == attr_term).then(|| pinned.clone()));
            if check.eval_const() == Some(false) {
                contradictory = true;
            }
        }
        constraint.insert(0, ConstraintLit::new(attr_term.clone(), CmpOp::Eq, pinned));
    }
    let trigger = Trigger { subject: device.clone(), attribute: attr.to_string(), constraint };
    (trigger, residual, data, contradictory)
}

fn build_rule(unit: &SourceUnit, catalog: &Catalog, hit: &SinkHit) -> Rule {
    let (trigger, predicates, data, contradictory) =
        fold_trigger(unit, catalog, &hit.trigger, &hit.path_lits, &hit.data);
    let mut cond_roots = BTreeSet::new();
    for l in trigger.constraint.iter().chain(&predicates) {
        l.collect_vars(&mut cond_roots);
    }
    let mut action_roots = BTreeSet::new();
    for p in &hit.params {
        p.collect_vars(&mut action_roots);
    }
    let mut flags = BTreeSet::new();
    if hit.entry == "uninstalled" {
        flags.insert(RuleFlag::OnUninstall);
    }
    if contradictory {
        flags.insert(RuleFlag::Unsatisfiable);
    }
    let mut rule = Rule {
        id: String::new(),
        app: unit.app_name.clone(),
        trigger,
        condition: Condition { data: referenced_data(&data, &cond_roots), predicates },
        action: Action {
            subject: hit.subject.clone(),
            command: hit.command.clone(),
            paras: hit.params.clone(),
            data: referenced_data(&data, &action_roots),
            when: hit.when,
            period: hit.period,
        },
        flags,
    };
    // A literal that folds to false once locals are inlined can never hold.
    let defs: Vec<DataConstraint> = rule.all_data().cloned().collect();
    let dead = rule.all_lits().any(|l| {
        let inlined = ConstraintLit::new(
            crate::rules::substitute_definitions(&l.lhs, &defs),
            l.op,
            crate::rules::substitute_definitions(&l.rhs, &defs),
        );
        inlined.eval_const() == Some(false)
    });
    if dead {
        rule.flags.insert(RuleFlag::Unsatisfiable);
    }
    rule.assign_id(None);
    rule
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse;

    fn rules(src: &str) -> RuleSet {
        let unit = parse(src).unwrap();
        let cat = Catalog::default_catalog();
        let diags = crate::lang::validate(&unit, &cat);
        assert!(diags.is_empty(), "{diags:?}");
        extract_rules(&unit, &cat).unwrap()
    }

    fn paths(src: &str, entry: &str) -> Vec<ExploredPath> {
        let unit = parse(src).unwrap();
        explore(&unit, &Catalog::default_catalog(), unit.function(entry).unwrap()).unwrap()
    }

    #[test]
    fn straight_line_single_path() {
        let p = paths("app \"A\" input a: device.switch def installed() { a.on() }", "installed");
        assert_eq!(p.len(), 1);
        assert!(p[0].env.path_lits.is_empty());
        assert_eq!(p[0].hits.len(), 1);
    }

    #[test]
    fn nested_ifs_give_four_paths() {
        let src = "app \"A\" input a: device.switch input n: number def installed() { \
                   if (n > 1) { if (n < 5) { a.on() } else { a.off() } } else { if (n == 0) { a.on() } else { a.off() } } }";
        let p = paths(src, "installed");
        assert_eq!(p.len(), 4);
        assert!(p.iter().all(|p| p.hits.len() == 1 && p.env.path_lits.len() == 2));
    }

    #[test]
    fn if_else_two_rules_with_negation() {
        let src =
            "app \"A\" input a: device.switch input c: bool def installed() { if (c) { a.on() } else { a.off() } }";
        let rs = rules(src);
        assert_eq!(rs.rules.len(), 2);
        let texts: Vec<String> = rs.rules.iter().map(|r| r.condition.predicates[0].to_string()).collect();
        assert_eq!(texts, vec!["(== (var c) true)", "(== (var c) false)"]);
    }

    #[test]
    fn run_in_sets_when() {
        let src = "app \"A\" input heater: device.heater def installed() { runIn(300, go) } def go() { heater.off() }";
        let rs = rules(src);
        assert_eq!(rs.rules.len(), 1);
        assert_eq!(rs.rules[0].action.when, 300);
    }

    #[test]
    fn nested_schedules_sum_and_keep_innermost_period() {
        let src = "app \"A\" input h: device.heater def installed() { runEvery(60, a) } \
                   def a() { runIn(10, b) h.on() } def b() { runEvery(5, c) } def c() { h.off() }";
        let rs = rules(src);
        let by_cmd: BTreeMap<_, _> =
            rs.rules.iter().map(|r| (r.action.command.clone(), (r.action.when, r.action.period))).collect();
        assert_eq!(by_cmd["on"], (0, 60));
        assert_eq!(by_cmd["off"], (10, 5));
    }

    #[test]
    fn switch_over_event_value() {
        let src = "app \"A\" input s: device.switch input m: device.motionSensor def installed() { subscribe(m, \"motion\", h) } \
                   def h(evt) { switch (evt.value) { case \"a\": { s.on() } case \"b\": { s.off() } case \"c\": { s.on() } \
                   default: { s.off() } } }";
        let p = paths(src, "installed");
        assert_eq!(p.len(), 1, "subscription hits attach to the one outer path");
        assert_eq!(p[0].hits.len(), 4);
        let lens: Vec<usize> = p[0].hits.iter().map(|h| h.path_lits.len()).collect();
        assert_eq!(lens, vec![1, 1, 1, 3]);
    }

    #[test]
    fn value_subscription_folds_into_trigger() {
        let src = "app \"A\" input door: device.contactSensor input s: device.switch \
                   def installed() { subscribe(door, \"contact.open\", h) } def h(evt) { s.on() }";
        let r = &rules(src).rules[0];
        assert_eq!(r.trigger.subject, "door");
        assert_eq!(r.trigger.constraint[0].to_string(), "(== (attr door contact) \"open\")");
    }

    #[test]
    fn any_change_trigger_has_no_constraint() {
        let src = "app \"A\" input m: device.motionSensor input s: device.switch \
                   def installed() { subscribe(m, \"motion\", h) } def h(evt) { s.on() }";
        let r = &rules(src).rules[0];
        assert!(r.trigger.constraint.is_empty());
    }

    #[test]
    fn contradictory_trigger_is_flagged() {
        let src = "app \"A\" input tv: device.switch input s: device.switch \
                   def installed() { subscribe(tv, \"switch.on\", h) } def h(evt) { if (evt.value == \"off\") { s.on() } }";
        let rs = rules(src);
        assert_eq!(rs.rules.len(), 1);
        assert!(rs.rules[0].is_flagged(RuleFlag::Unsatisfiable));
    }

    #[test]
    fn ssa_renames_reassignment() {
        let src = "app \"A\" input t: device.temperatureMeasurement input s: device.switch def installed() { \
                   x = t.current(\"temperature\") x = x + 1 if (x > 3) { s.on() } }";
        let r = &rules(src).rules[0];
        assert_eq!(r.condition.predicates[0].to_string(), "(> (var x#2) 3)");
        assert_eq!(r.condition.data.len(), 2);
    }

    #[test]
    fn or_conditions_are_disjoint() {
        let src = "app \"A\" input a: number input b: number input s: device.switch def installed() { \
                   if (a > 1 || b > 1) { s.on() } }";
        let rs = rules(src);
        let conds: Vec<usize> = rs.rules.iter().map(|r| r.condition.predicates.len()).collect();
        assert_eq!(conds, vec![1, 2]);
    }

    #[test]
    fn duplicate_subscriptions_dedupe() {
        let src = "app \"A\" input m: device.motionSensor input s: device.switch \
                   def installed() { subscribe(m, \"motion\", h) } def updated() { unsubscribe() subscribe(m, \"motion\", h) } \
                   def h(evt) { s.on() }";
        assert_eq!(rules(src).rules.len(), 1);
    }

    #[test]
    fn budget() {
        let mut body = String::new();
        for i in 0..15 {
            body.push_str(&format!("if (n > {i}) {{ s.on() }} "));
        }
        let src = format!("app \"A\" input n: number input s: device.switch def installed() {{ {body} }}");
        let unit = parse(&src).unwrap();
        let err = extract_rules(&unit, &Catalog::default_catalog()).unwrap_err();
        assert_eq!(err, SymexError::PathBudgetExceeded(PATH_BUDGET));
    }
}
