use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Direction, FindingKind, ThreatFinding};
use crate::catalog::Catalog;
use crate::rules::BoundRule;
use crate::term::{CmpOp, Term};

/// Maximum number of path extensions tried by [`detect_chains`].
pub const CHAIN_BUDGET: u64 = 10_000;

/// A directed trigger or enabling relation between two rules.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub kind: FindingKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("chain enumeration gave up after {0} path extensions")]
pub struct ChainBudgetExceeded(pub u64);

fn trigger_phrase(r: &BoundRule, catalog: &Catalog) -> String {
    let t = &r.rule.trigger;
    if t.is_lifecycle() {
        return format!("the app is {}", t.attribute);
    }
    let own = Term::attr(t.subject.clone(), t.attribute.clone());
    let value = match t.constraint.as_slice() {
        [l] if l.op == CmpOp::Eq && l.lhs == own => l.rhs.as_const(),
        [l] if l.op == CmpOp::Eq && l.rhs == own => l.lhs.as_const(),
        _ => None,
    };
    let spec = r.capability(&t.subject).and_then(|c| catalog.attribute(c, &t.attribute));
    match (value, spec) {
        (Some(v), Some(s)) => match s.phrases.get(&v.to_string()) {
            Some(p) => p.clone(),
            None => format!("{}.{} becomes {v}", t.subject, t.attribute),
        },
        (Some(v), None) => format!("{}.{} becomes {v}", t.subject, t.attribute),
        _ => format!("{}.{} changes", t.subject, t.attribute),
    }
}

fn action_phrase(r: &BoundRule, catalog: &Catalog) -> String {
    let a = &r.rule.action;
    r.capability(&a.subject)
        .and_then(|c| catalog.command(c, &a.command))
        .and_then(|c| c.phrase.clone())
        .unwrap_or_else(|| format!("runs {}.{}()", a.subject, a.command))
}

/// The rule a chain behaves like: the last action, fired by the first trigger.
pub fn covert_rule_text(first: &BoundRule, last: &BoundRule, catalog: &Catalog) -> String {
    format!("{} when {}", action_phrase(last, catalog), trigger_phrase(first, catalog))
}

struct Search<'a> {
    adj: BTreeMap<&'a str, BTreeMap<&'a str, bool>>,
    max_len: usize,
    steps: u64,
    found: Vec<(Vec<&'a str>, bool)>,
}

impl<'a> Search<'a> {
    fn extend(&mut self, path: &mut Vec<&'a str>, has_new: bool) -> Result<(), ChainBudgetExceeded> {
        if path.len() >= 3 && has_new {
            self.found.push((path.clone(), has_new));
        }
        if path.len() == self.max_len {
            return Ok(());
        }
        let last = *path.last().expect("non-empty path");
        let next: Vec<(&'a str, bool)> = match self.adj.get(last) {
            Some(m) => m.iter().map(|(k, v)| (*k, *v)).collect(),
            None => return Ok(()),
        };
        for (n, is_new) in next {
            if path.contains(&n) {
                continue;
            }
            self.steps += 1;
            if self.steps > CHAIN_BUDGET {
                return Err(ChainBudgetExceeded(CHAIN_BUDGET));
            }
            path.push(n);
            self.extend(path, has_new || is_new)?;
            path.pop();
        }
        Ok(())
    }
}

/// Enumerates simple rule paths of length 3 to `max_len` over CT and EC
/// edges, keeping those that use at least one edge from `new_findings`.
/// `allowed` holds edges among rules that are already installed.
pub fn detect_chains(
    new_findings: &[ThreatFinding],
    allowed: &[Edge],
    rules: &BTreeMap<String, BoundRule>,
    catalog: &Catalog,
    max_len: usize,
) -> Result<Vec<ThreatFinding>, ChainBudgetExceeded> {
    let chainable = |k: FindingKind| matches!(k, FindingKind::CT | FindingKind::EC);
    let mut adj: BTreeMap<&str, BTreeMap<&str, bool>> = BTreeMap::new();
    for e in allowed.iter().filter(|e| chainable(e.kind)) {
        adj.entry(e.from.as_str()).or_default().entry(e.to.as_str()).or_insert(false);
    }
    for f in new_findings.iter().filter(|f| chainable(f.kind)) {
        if let Some(d) = &f.direction {
            adj.entry(d.from.as_str()).or_default().insert(d.to.as_str(), true);
        }
    }
    let starts: Vec<&str> = adj.keys().copied().collect();
    let mut s = Search { adj, max_len, steps: 0, found: Vec::new() };
    for start in starts {
        s.extend(&mut vec![start], false)?;
    }
    let out = s
        .found
        .into_iter()
        .map(|(path, _)| {
            let names: Vec<String> = path
                .iter()
                .map(|id| rules.get(*id).map(|r| r.rule.app.clone()).unwrap_or_else(|| id.to_string()))
                .collect();
            let covert = match (rules.get(path[0]), rules.get(*path.last().expect("non-empty"))) {
                (Some(a), Some(b)) => covert_rule_text(a, b, catalog),
                _ => "unknown behaviour".to_string(),
            };
            ThreatFinding {
                kind: FindingKind::CHAIN,
                rules: path.iter().map(|s| s.to_string()).collect(),
                direction: Some(Direction { from: path[0].to_string(), to: path[path.len() - 1].to_string() }),
                witness: None,
                channel: None,
                explanation: format!("{} together behave as: {covert}", names.join(" -> ")),
                basis: None,
            }
        })
        .collect();
    Ok(out)
}
