//! Domain store, propagation and the depth-first search loop.

use std::collections::BTreeSet;

use super::{check_witness, Compiled, Domain, Linear, Outcome, Problem, Side, Witness};
use crate::term::CmpOp;
use crate::value::Value;

#[derive(Debug, Clone, PartialEq)]
enum Dom {
    Int { lo: i128, hi: i128, holes: BTreeSet<i128> },
    Fin(BTreeSet<Value>),
}

struct Conflict;

impl Dom {
    fn from_decl(d: &Domain) -> Dom {
        match d {
            Domain::IntRange { lo, hi } => Dom::Int { lo: *lo as i128, hi: *hi as i128, holes: BTreeSet::new() },
            Domain::EnumSet { values } => Dom::Fin(values.iter().map(|s| Value::Str(s.clone())).collect()),
            Domain::Bool => Dom::Fin([Value::Bool(false), Value::Bool(true)].into()),
        }
    }

    fn bounds(&self) -> (i128, i128) {
        match self {
            Dom::Int { lo, hi, .. } => (*lo, *hi),
            Dom::Fin(_) => unreachable!("linear constraint over a finite domain"),
        }
    }

    fn singleton(&self) -> Option<Value> {
        match self {
            Dom::Int { lo, hi, .. } if lo == hi => Some(Value::Int(*lo as i64)),
            Dom::Fin(s) if s.len() == 1 => s.first().cloned(),
            _ => None,
        }
    }

    /// Skips holes at the bounds; reports emptiness.
    fn tidy(&mut self) -> Result<(), Conflict> {
        match self {
            Dom::Int { lo, hi, holes } => {
                while *lo <= *hi && holes.remove(lo) {
                    *lo += 1;
                }
                while *lo <= *hi && holes.remove(hi) {
                    *hi -= 1;
                }
                if lo > hi {
                    return Err(Conflict);
                }
                let (l, h) = (*lo, *hi);
                holes.retain(|x| l < *x && *x < h);
                Ok(())
            }
            Dom::Fin(s) if s.is_empty() => Err(Conflict),
            Dom::Fin(_) => Ok(()),
        }
    }

    fn set_hi(&mut self, v: i128) -> Result<bool, Conflict> {
        let Dom::Int { hi, .. } = self else { unreachable!() };
        if v >= *hi {
            return Ok(false);
        }
        *hi = v;
        self.tidy()?;
        Ok(true)
    }

    fn set_lo(&mut self, v: i128) -> Result<bool, Conflict> {
        let Dom::Int { lo, .. } = self else { unreachable!() };
        if v <= *lo {
            return Ok(false);
        }
        *lo = v;
        self.tidy()?;
        Ok(true)
    }

    fn remove(&mut self, v: &Value) -> Result<bool, Conflict> {
        let changed = match (&mut *self, v) {
            (Dom::Int { lo, hi, holes }, Value::Int(x)) => {
                let x = *x as i128;
                *lo <= x && x <= *hi && holes.insert(x)
            }
            (Dom::Fin(s), v) => s.remove(v),
            _ => false,
        };
        if changed {
            self.tidy()?;
        }
        Ok(changed)
    }

    fn restrict_to(&mut self, keep: &BTreeSet<Value>) -> Result<bool, Conflict> {
        let Dom::Fin(s) = self else { unreachable!() };
        let before = s.len();
        s.retain(|v| keep.contains(v));
        let changed = s.len() != before;
        self.tidy()?;
        Ok(changed)
    }

    fn values(&self) -> &BTreeSet<Value> {
        match self {
            Dom::Fin(s) => s,
            Dom::Int { .. } => unreachable!(),
        }
    }

    /// Splits off the smallest value: `(that value only, the rest)`.
    fn split(&self) -> (Dom, Option<Dom>) {
        match self {
            Dom::Int { lo, hi, holes } => {
                let first = Dom::Int { lo: *lo, hi: *lo, holes: BTreeSet::new() };
                let mut rest = Dom::Int { lo: *lo + 1, hi: *hi, holes: holes.clone() };
                let rest = rest.tidy().ok().map(|_| rest);
                (first, rest)
            }
            Dom::Fin(s) => {
                let mut it = s.iter();
                let first = Dom::Fin([it.next().cloned().expect("non-empty")].into());
                let rest: BTreeSet<Value> = it.cloned().collect();
                (first, (!rest.is_empty()).then_some(Dom::Fin(rest)))
            }
        }
    }
}

fn floor_div(n: i128, d: i128) -> i128 {
    let q = n / d;
    if n % d != 0 && ((n < 0) != (d < 0)) {
        q - 1
    } else {
        q
    }
}

fn ceil_div(n: i128, d: i128) -> i128 {
    let q = n / d;
    if n % d != 0 && ((n < 0) == (d < 0)) {
        q + 1
    } else {
        q
    }
}

/// Bounds propagation for `sum(coef * x) + k <= 0`.
fn propagate_le(coefs: &[(usize, i128)], k: i128, doms: &mut [Dom]) -> Result<bool, Conflict> {
    let term_min = |a: i128, d: &Dom| {
        let (lo, hi) = d.bounds();
        if a > 0 {
            a.saturating_mul(lo)
        } else {
            a.saturating_mul(hi)
        }
    };
    let total: i128 = coefs.iter().fold(k, |acc, (i, a)| acc.saturating_add(term_min(*a, &doms[*i])));
    if total > 0 {
        return Err(Conflict);
    }
    let mut changed = false;
    for (i, a) in coefs {
        let others = total.saturating_sub(term_min(*a, &doms[*i]));
        let slack = others.saturating_neg();
        changed |=
            if *a > 0 { doms[*i].set_hi(floor_div(slack, *a))? } else { doms[*i].set_lo(ceil_div(slack, *a))? };
    }
    Ok(changed)
}

fn propagate_linear(l: &Linear, doms: &mut [Dom]) -> Result<bool, Conflict> {
    let neg: Vec<(usize, i128)> = l.coefs.iter().map(|(i, a)| (*i, -a)).collect();
    match l.op {
        CmpOp::Le => propagate_le(&l.coefs, l.k, doms),
        CmpOp::Lt => propagate_le(&l.coefs, l.k.saturating_add(1), doms),
        CmpOp::Ge => propagate_le(&neg, -l.k, doms),
        CmpOp::Gt => propagate_le(&neg, (-l.k).saturating_add(1), doms),
        CmpOp::Eq => Ok(propagate_le(&l.coefs, l.k, doms)? | propagate_le(&neg, -l.k, doms)?),
        CmpOp::Ne => {
            let mut free = None;
            let mut acc = l.k;
            for (i, a) in &l.coefs {
                match doms[*i].singleton() {
                    Some(Value::Int(v)) => acc = acc.saturating_add(a.saturating_mul(v as i128)),
                    _ if free.is_none() => free = Some((*i, *a)),
                    _ => return Ok(false),
                }
            }
            match free {
                None if acc == 0 => Err(Conflict),
                None => Ok(false),
                Some((i, a)) if acc % a == 0 => {
                    let v = -acc / a;
                    if v < i64::MIN as i128 || v > i64::MAX as i128 {
                        return Ok(false);
                    }
                    doms[i].remove(&Value::Int(v as i64))
                }
                Some(_) => Ok(false),
            }
        }
    }
}

fn propagate_finite(lhs: &Side, op: CmpOp, rhs: &Side, doms: &mut [Dom]) -> Result<bool, Conflict> {
    match (lhs, rhs) {
        (Side::Const(a), Side::Const(b)) => {
            if op.holds(a.cmp(b)) {
                Ok(false)
            } else {
                Err(Conflict)
            }
        }
        (Side::Var(i), Side::Const(c)) | (Side::Const(c), Side::Var(i)) => match op {
            CmpOp::Eq => doms[*i].restrict_to(&[c.clone()].into()),
            _ => doms[*i].remove(c),
        },
        (Side::Var(i), Side::Var(j)) => match op {
            CmpOp::Eq => {
                let a = doms[*i].values().clone();
                let b = doms[*j].values().clone();
                Ok(doms[*i].restrict_to(&b)? | doms[*j].restrict_to(&a)?)
            }
            _ if i == j => Err(Conflict),
            _ => {
                let mut changed = false;
                if let Some(v) = doms[*i].singleton() {
                    changed |= doms[*j].remove(&v)?;
                }
                if let Some(v) = doms[*j].singleton() {
                    changed |= doms[*i].remove(&v)?;
                }
                Ok(changed)
            }
        },
    }
}

/// Runs propagation to a fixpoint. Each round is charged to `work`.
fn propagate(cs: &[Compiled], doms: &mut [Dom], work: &mut u64, budget: u64) -> Result<(), Conflict> {
    loop {
        *work += 1;
        let mut changed = false;
        for c in cs {
            changed |= match c {
                Compiled::Linear(l) => propagate_linear(l, doms)?,
                Compiled::Finite { lhs, op, rhs } => propagate_finite(lhs, *op, rhs, doms)?,
            };
        }
        if !changed || *work > budget {
            return Ok(());
        }
    }
}

pub(super) fn search(p: &Problem, cs: &[Compiled], budget: u64) -> Outcome {
    let init: Vec<Dom> = p.vars.iter().map(|v| Dom::from_decl(&v.domain)).collect();
    let mut stack = vec![init];
    let mut work = 0u64;
    while let Some(mut doms) = stack.pop() {
        if work > budget {
            return Outcome::BudgetExceeded;
        }
        if propagate(cs, &mut doms, &mut work, budget).is_err() {
            continue;
        }
        match doms.iter().position(|d| d.singleton().is_none()) {
            None => {
                let w: Witness = p
                    .vars
                    .iter()
                    .zip(&doms)
                    .map(|(v, d)| (v.name.clone(), d.singleton().expect("all fixed")))
                    .collect();
                if check_witness(p, &w) {
                    return Outcome::Sat(w);
                }
            }
            Some(i) => {
                let (first, rest) = doms[i].split();
                if let Some(rest) = rest {
                    let mut r = doms.clone();
                    r[i] = rest;
                    stack.push(r);
                }
                doms[i] = first;
                stack.push(doms);
            }
        }
    }
    Outcome::Unsat
}
