//! Builds one solver problem from constraint sets of several bound rules.
//!
//! Local variables are replaced by their definitions first. Device
//! attributes unify by bound device id; attributes that sense an
//! environment feature unify on the feature itself (unless disabled), so two
//! temperature sensors in one home read the same temperature. Anything else
//! is renamed apart with the rule's id prefix.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::catalog::Catalog;
use crate::config::DeviceId;
use crate::rules::{substitute_definitions, BoundRule};
use crate::solver::{Domain, Problem, SolveError};
use crate::term::{ConstraintLit, DataConstraint, Term};
use crate::value::Sort;

pub const DEFAULT_INT_DOMAIN: (i64, i64) = (-1_000_000, 1_000_000);

/// Stands for every string not mentioned by any constraint.
pub const OTHER_STRING: &str = "~other";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MergeOptions {
    pub env_unification: bool,
}

impl Default for MergeOptions {
    fn default() -> Self {
        MergeOptions { env_unification: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MergeError {
    #[error("constraint {0} is not linear")]
    NonLinear(String),
    #[error("constraint {0} compares values of different sorts")]
    SortMismatch(String),
    #[error("rule {rule} uses device `{device}` without a binding")]
    UnboundDevice { rule: String, device: String },
    #[error("`{device}.{attribute}` is not a known attribute")]
    UnknownAttribute { device: String, attribute: String },
    #[error("constraint {0} still refers to the event value")]
    Unsupported(String),
}

/// Constraints stated in the namespace of one bound rule.
#[derive(Debug, Clone)]
pub struct Part<'a> {
    pub rule: &'a BoundRule,
    pub lits: Vec<ConstraintLit>,
}

impl<'a> Part<'a> {
    pub fn new(rule: &'a BoundRule, lits: impl IntoIterator<Item = ConstraintLit>) -> Self {
        Part { rule, lits: lits.into_iter().collect() }
    }
}

#[derive(Debug, Clone)]
enum Pending {
    Known(Domain),
    OpenString,
    Unknown,
}

#[derive(Default)]
struct Names {
    order: Vec<String>,
    kinds: BTreeMap<String, Pending>,
    by_key: BTreeMap<(DeviceId, String), String>,
}

impl Names {
    fn add(&mut self, name: String, kind: Pending) -> String {
        if !self.kinds.contains_key(&name) {
            self.order.push(name.clone());
            self.kinds.insert(name.clone(), kind);
        }
        name
    }
}

/// Solver variable standing for a device attribute of a bound rule.
fn attr_var(
    names: &mut Names,
    rule: &BoundRule,
    device: &str,
    attribute: &str,
    catalog: &Catalog,
    opts: &MergeOptions,
) -> Result<String, MergeError> {
    let bound = rule
        .ctx
        .device(device)
        .ok_or_else(|| MergeError::UnboundDevice { rule: rule.id().to_string(), device: device.to_string() })?;
    let spec = catalog
        .attribute(&bound.capability, attribute)
        .ok_or_else(|| MergeError::UnknownAttribute { device: device.to_string(), attribute: attribute.to_string() })?;
    if opts.env_unification {
        if let Some(f) = &spec.feature {
            if let Some(d) = catalog.feature_domain(f) {
                return Ok(names.add(f.clone(), Pending::Known(Domain::IntRange { lo: d.min, hi: d.max })));
            }
        }
    }
    let key = (bound.id.clone(), attribute.to_string());
    if let Some(n) = names.by_key.get(&key) {
        return Ok(n.clone());
    }
    let mut name = format!("{device}.{attribute}");
    if names.kinds.contains_key(&name) {
        name = format!("{device}@{}.{attribute}", &bound.id.as_str()[..8]);
    }
    names.by_key.insert(key, name.clone());
    let kind = match spec.sort {
        Sort::Int => {
            let (lo, hi) = catalog.attribute_bounds(spec).unwrap_or(DEFAULT_INT_DOMAIN);
            Pending::Known(Domain::IntRange { lo, hi })
        }
        Sort::Bool => Pending::Known(Domain::Bool),
        Sort::Str => match &spec.values {
            Some(v) => Pending::Known(Domain::EnumSet { values: v.iter().cloned().collect() }),
            None => Pending::OpenString,
        },
    };
    Ok(names.add(name, kind))
}

/// Solver variable for a free symbol of a rule: the rule id prefix keeps
/// symbols of different rules apart.
pub fn free_var_name(rule_id: &str, name: &str) -> String {
    format!("{}:{name}", &rule_id[..rule_id.len().min(8)])
}

fn rename(
    t: &Term,
    rule: &BoundRule,
    names: &mut Names,
    catalog: &Catalog,
    opts: &MergeOptions,
    err: &mut Option<MergeError>,
) -> Term {
    t.map(&mut |x| match x {
        Term::Attr { device, attribute } => match attr_var(names, rule, device, attribute, catalog, opts) {
            Ok(n) => Some(Term::Var(n)),
            Err(e) => {
                err.get_or_insert(e);
                Some(x.clone())
            }
        },
        Term::Var(v) => Some(Term::Var(names.add(free_var_name(rule.id(), v), Pending::Unknown))),
        _ => None,
    })
}

fn term_sort(t: &Term, kinds: &BTreeMap<String, Pending>) -> Option<Sort> {
    match t {
        Term::Int(_) | Term::Arith(..) => Some(Sort::Int),
        Term::Str(_) => Some(Sort::Str),
        Term::Bool(_) => Some(Sort::Bool),
        Term::Var(v) => match kinds.get(v)? {
            Pending::Known(d) => Some(d.sort()),
            Pending::OpenString => Some(Sort::Str),
            Pending::Unknown => None,
        },
        _ => None,
    }
}

fn mark_arith_vars(t: &Term, out: &mut BTreeSet<String>) {
    if let Term::Arith(_, a, b) = t {
        for s in [a, b] {
            match &**s {
                Term::Var(v) => {
                    out.insert(v.clone());
                }
                other => mark_arith_vars(other, out),
            }
        }
    }
}

fn collect_strings(t: &Term, out: &mut BTreeSet<String>) {
    match t {
        Term::Str(s) => {
            out.insert(s.clone());
        }
        Term::Arith(_, a, b) => {
            collect_strings(a, out);
            collect_strings(b, out);
        }
        _ => {}
    }
}

/// Merges the parts into one problem. Variables are declared in order of
/// first appearance.
pub fn merge(parts: &[Part<'_>], catalog: &Catalog, opts: &MergeOptions) -> Result<Problem, MergeError> {
    let mut names = Names::default();
    let mut lits: Vec<(ConstraintLit, String)> = Vec::new();
    for part in parts {
        let data: Vec<DataConstraint> = part.rule.rule.all_data().cloned().collect();
        for l in &part.lits {
            if l.mentions_event() {
                return Err(MergeError::Unsupported(l.to_string()));
            }
            let resolved =
                ConstraintLit::new(substitute_definitions(&l.lhs, &data), l.op, substitute_definitions(&l.rhs, &data));
            let mut err = None;
            let renamed = ConstraintLit::new(
                rename(&resolved.lhs, part.rule, &mut names, catalog, opts, &mut err),
                resolved.op,
                rename(&resolved.rhs, part.rule, &mut names, catalog, opts, &mut err),
            );
            if let Some(e) = err {
                return Err(e);
            }
            lits.push((renamed, part.rule.id().to_string()));
        }
    }
    // Free symbols take the sort of whatever they are compared with.
    let mut arith = BTreeSet::new();
    for (l, _) in &lits {
        mark_arith_vars(&l.lhs, &mut arith);
        mark_arith_vars(&l.rhs, &mut arith);
    }
    loop {
        let mut changed = false;
        for (l, _) in &lits {
            for (a, b) in [(&l.lhs, &l.rhs), (&l.rhs, &l.lhs)] {
                if let Term::Var(v) = a {
                    if matches!(names.kinds.get(v), Some(Pending::Unknown)) {
                        let sort = if arith.contains(v) { Some(Sort::Int) } else { term_sort(b, &names.kinds) };
                        let kind = match sort {
                            Some(Sort::Str) => Pending::OpenString,
                            Some(Sort::Bool) => Pending::Known(Domain::Bool),
                            Some(Sort::Int) => Pending::Known(int_domain()),
                            None => continue,
                        };
                        names.kinds.insert(v.clone(), kind);
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut strings = BTreeSet::from([OTHER_STRING.to_string()]);
    for (l, _) in &lits {
        collect_strings(&l.lhs, &mut strings);
        collect_strings(&l.rhs, &mut strings);
    }
    let mut p = Problem::default();
    for n in &names.order {
        let domain = match &names.kinds[n] {
            Pending::Known(d) => d.clone(),
            Pending::OpenString => Domain::EnumSet { values: strings.clone() },
            Pending::Unknown => int_domain(),
        };
        p.declare(n.clone(), domain);
    }
    for (l, origin) in lits {
        p.assert(l, Some(&origin));
    }
    p.check().map_err(|e| match e {
        SolveError::NonLinear(s) => MergeError::NonLinear(s),
        SolveError::Unsupported(s) => MergeError::Unsupported(s),
        other => MergeError::SortMismatch(other.to_string()),
    })?;
    Ok(p)
}

fn int_domain() -> Domain {
    Domain::IntRange { lo: DEFAULT_INT_DOMAIN.0, hi: DEFAULT_INT_DOMAIN.1 }
}
