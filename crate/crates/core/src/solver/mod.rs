//! Finite-domain constraint satisfaction over conjunctions of literals.
//!
//! Search is depth-first over variables in declaration order, trying values
//! in ascending order, with bounds propagation on linear integer constraints
//! and forward checking on the rest. The first solution found is therefore
//! the lexicographically smallest one, which the exhaustive oracle in
//! [`oracle_solve`] reproduces exactly.

mod oracle;
mod propagate;
mod smtlib;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::term::{ArithOp, CmpOp, ConstraintLit, Term};
use crate::value::{Sort, Value};

pub use oracle::{oracle_solve, OracleError, ORACLE_BUDGET};
pub use smtlib::to_smtlib;

/// Search nodes explored before giving up.
pub const NODE_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "kind")]
pub enum Domain {
    IntRange { lo: i64, hi: i64 },
    EnumSet { values: BTreeSet<String> },
    Bool,
}

impl Domain {
    pub fn sort(&self) -> Sort {
        match self {
            Domain::IntRange { .. } => Sort::Int,
            Domain::EnumSet { .. } => Sort::Str,
            Domain::Bool => Sort::Bool,
        }
    }

    pub fn size(&self) -> u128 {
        match self {
            Domain::IntRange { lo, hi } => (*hi as i128 - *lo as i128 + 1).max(0) as u128,
            Domain::EnumSet { values } => values.len() as u128,
            Domain::Bool => 2,
        }
    }

    pub fn contains(&self, v: &Value) -> bool {
        match (self, v) {
            (Domain::IntRange { lo, hi }, Value::Int(x)) => lo <= x && x <= hi,
            (Domain::EnumSet { values }, Value::Str(s)) => values.contains(s),
            (Domain::Bool, Value::Bool(_)) => true,
            _ => false,
        }
    }

    pub fn enumerate(values: &[&str]) -> Domain {
        Domain::EnumSet { values: values.iter().map(|s| s.to_string()).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarDecl {
    pub name: String,
    pub domain: Domain,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub vars: Vec<VarDecl>,
    pub constraints: Vec<ConstraintLit>,
    /// Rule id each constraint came from, parallel to `constraints`.
    #[serde(default)]
    pub provenance: Vec<Option<String>>,
}

impl Problem {
    pub fn declare(&mut self, name: impl Into<String>, domain: Domain) {
        self.vars.push(VarDecl { name: name.into(), domain });
    }

    pub fn assert(&mut self, lit: ConstraintLit, origin: Option<&str>) {
        self.constraints.push(lit);
        self.provenance.push(origin.map(str::to_string));
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    /// Checks declarations, sorts and linearity.
    pub fn check(&self) -> Result<(), SolveError> {
        let mut seen = BTreeSet::new();
        for v in &self.vars {
            if !seen.insert(v.name.as_str()) {
                return Err(SolveError::DuplicateVariable(v.name.clone()));
            }
            if v.domain.size() == 0 {
                return Err(SolveError::EmptyDomain(v.name.clone()));
            }
        }
        for c in &self.constraints {
            compile(self, c)?;
        }
        Ok(())
    }
}

pub type Witness = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "result", content = "witness")]
pub enum Outcome {
    Sat(Witness),
    Unsat,
    BudgetExceeded,
}

impl Outcome {
    pub fn is_sat(&self) -> bool {
        matches!(self, Outcome::Sat(_))
    }

    pub fn witness(&self) -> Option<&Witness> {
        match self {
            Outcome::Sat(w) => Some(w),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("variable `{0}` is not declared")]
    UndeclaredVariable(String),
    #[error("variable `{0}` is declared twice")]
    DuplicateVariable(String),
    #[error("variable `{0}` has an empty domain")]
    EmptyDomain(String),
    #[error("constraint {0} is not linear")]
    NonLinear(String),
    #[error("constraint {0} mixes sorts or orders non-integers")]
    SortMismatch(String),
    #[error("constraint {0} contains a device attribute or event term")]
    Unsupported(String),
}

/// A linear integer constraint `sum(coef * var) + k <op> 0`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Linear {
    pub coefs: Vec<(usize, i128)>,
    pub k: i128,
    pub op: CmpOp,
}

/// Operand of a string or boolean constraint.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Side {
    Var(usize),
    Const(Value),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Compiled {
    Linear(Linear),
    Finite { lhs: Side, op: CmpOp, rhs: Side },
}

fn sort_of(p: &Problem, t: &Term, lit: &ConstraintLit) -> Result<Sort, SolveError> {
    match t {
        Term::Int(_) => Ok(Sort::Int),
        Term::Str(_) => Ok(Sort::Str),
        Term::Bool(_) => Ok(Sort::Bool),
        Term::Var(v) => {
            let i = p.var_index(v).ok_or_else(|| SolveError::UndeclaredVariable(v.clone()))?;
            Ok(p.vars[i].domain.sort())
        }
        Term::Arith(_, a, b) => {
            if sort_of(p, a, lit)? == Sort::Int && sort_of(p, b, lit)? == Sort::Int {
                Ok(Sort::Int)
            } else {
                Err(SolveError::SortMismatch(lit.to_string()))
            }
        }
        Term::Attr { .. } | Term::Event => Err(SolveError::Unsupported(lit.to_string())),
    }
}

/// Linear form of an integer term: coefficients by variable index plus a constant.
fn linear_form(p: &Problem, t: &Term, lit: &ConstraintLit) -> Result<(BTreeMap<usize, i128>, i128), SolveError> {
    match t {
        Term::Int(v) => Ok((BTreeMap::new(), *v as i128)),
        Term::Var(v) => {
            let i = p.var_index(v).ok_or_else(|| SolveError::UndeclaredVariable(v.clone()))?;
            Ok((BTreeMap::from([(i, 1)]), 0))
        }
        Term::Arith(op, a, b) => {
            let (ca, ka) = linear_form(p, a, lit)?;
            let (cb, kb) = linear_form(p, b, lit)?;
            match op {
                ArithOp::Add | ArithOp::Sub => {
                    let sign = if *op == ArithOp::Add { 1 } else { -1 };
                    let mut c = ca;
                    for (i, x) in cb {
                        *c.entry(i).or_insert(0) += sign * x;
                    }
                    c.retain(|_, x| *x != 0);
                    Ok((c, ka + sign * kb))
                }
                ArithOp::Mul => {
                    let (vars, scale, k) = match (ca.is_empty(), cb.is_empty()) {
                        (true, _) => (cb, ka, kb),
                        (_, true) => (ca, kb, ka),
                        _ => return Err(SolveError::NonLinear(lit.to_string())),
                    };
                    let c: BTreeMap<usize, i128> =
                        vars.into_iter().map(|(i, x)| (i, x * scale)).filter(|(_, x)| *x != 0).collect();
                    Ok((c, k * scale))
                }
            }
        }
        _ => Err(SolveError::SortMismatch(lit.to_string())),
    }
}

fn side(p: &Problem, t: &Term) -> Result<Side, SolveError> {
    match t {
        Term::Var(v) => p.var_index(v).map(Side::Var).ok_or_else(|| SolveError::UndeclaredVariable(v.clone())),
        t => Ok(Side::Const(t.as_const().expect("non-int operand is a variable or constant"))),
    }
}

pub(crate) fn compile(p: &Problem, lit: &ConstraintLit) -> Result<Compiled, SolveError> {
    let (ls, rs) = (sort_of(p, &lit.lhs, lit)?, sort_of(p, &lit.rhs, lit)?);
    if ls != rs || (ls != Sort::Int && lit.op.is_ordering()) {
        return Err(SolveError::SortMismatch(lit.to_string()));
    }
    if ls == Sort::Int {
        let (cl, kl) = linear_form(p, &lit.lhs, lit)?;
        let (cr, kr) = linear_form(p, &lit.rhs, lit)?;
        let mut c = cl;
        for (i, x) in cr {
            *c.entry(i).or_insert(0) -= x;
        }
        c.retain(|_, x| *x != 0);
        Ok(Compiled::Linear(Linear { coefs: c.into_iter().collect(), k: kl - kr, op: lit.op }))
    } else {
        Ok(Compiled::Finite { lhs: side(p, &lit.lhs)?, op: lit.op, rhs: side(p, &lit.rhs)? })
    }
}

fn eval_int(t: &Term, w: &Witness) -> Option<i128> {
    match t {
        Term::Int(v) => Some(*v as i128),
        Term::Var(v) => w.get(v)?.as_int().map(i128::from),
        Term::Arith(op, a, b) => {
            let (a, b) = (eval_int(a, w)?, eval_int(b, w)?);
            match op {
                ArithOp::Add => a.checked_add(b),
                ArithOp::Sub => a.checked_sub(b),
                ArithOp::Mul => a.checked_mul(b),
            }
        }
        _ => None,
    }
}

fn eval_value(t: &Term, w: &Witness) -> Option<Value> {
    match t {
        Term::Var(v) => w.get(v).cloned(),
        t => t.as_const(),
    }
}

/// Concrete evaluation of a literal under an assignment. `None` when a
/// variable is unassigned or the sorts do not line up.
pub fn evaluate(lit: &ConstraintLit, w: &Witness) -> Option<bool> {
    if let (Some(a), Some(b)) = (eval_int(&lit.lhs, w), eval_int(&lit.rhs, w)) {
        return Some(lit.op.holds(a.cmp(&b)));
    }
    let (a, b) = (eval_value(&lit.lhs, w)?, eval_value(&lit.rhs, w)?);
    if a.sort() != b.sort() || (a.sort() != Sort::Int && lit.op.is_ordering()) {
        return None;
    }
    Some(lit.op.holds(a.cmp(&b)))
}

/// True when `w` assigns every variable a value of its domain and satisfies
/// every constraint.
pub fn check_witness(p: &Problem, w: &Witness) -> bool {
    p.vars.iter().all(|v| w.get(&v.name).is_some_and(|x| v.domain.contains(x)))
        && p.constraints.iter().all(|c| evaluate(c, w) == Some(true))
}

/// Solves `p`. The witness is the lexicographically smallest solution under
/// declaration order and ascending values.
pub fn solve(p: &Problem) -> Result<Outcome, SolveError> {
    solve_with_budget(p, NODE_BUDGET)
}

pub fn solve_with_budget(p: &Problem, budget: u64) -> Result<Outcome, SolveError> {
    p.check()?;
    let compiled: Vec<Compiled> = p.constraints.iter().map(|c| compile(p, c)).collect::<Result<_, _>>()?;
    Ok(propagate::search(p, &compiled, budget))
}
