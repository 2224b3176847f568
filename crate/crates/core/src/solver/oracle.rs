//! Exhaustive enumeration, used to cross-check [`super::solve`].

use thiserror::Error;

use super::{evaluate, Domain, Outcome, Problem, SolveError, Witness};
use crate::value::Value;

/// Largest search space the oracle will enumerate.
pub const ORACLE_BUDGET: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("search space of {0} assignments exceeds the oracle budget")]
    OracleBudgetExceeded(u128),
    #[error(transparent)]
    Invalid(#[from] SolveError),
}

fn values(d: &Domain) -> Vec<Value> {
    match d {
        Domain::IntRange { lo, hi } => (*lo..=*hi).map(Value::Int).collect(),
        Domain::EnumSet { values } => values.iter().map(|s| Value::Str(s.clone())).collect(),
        Domain::Bool => vec![Value::Bool(false), Value::Bool(true)],
    }
}

/// Tries every assignment in lexicographic order and returns the first
/// satisfying one.
pub fn oracle_solve(p: &Problem) -> Result<Outcome, OracleError> {
    p.check()?;
    let size = p.vars.iter().try_fold(1u128, |acc, v| acc.checked_mul(v.domain.size()));
    match size {
        Some(n) if n <= ORACLE_BUDGET => {}
        other => return Err(OracleError::OracleBudgetExceeded(other.unwrap_or(u128::MAX))),
    }
    let lists: Vec<Vec<Value>> = p.vars.iter().map(|v| values(&v.domain)).collect();
    let mut idx = vec![0usize; lists.len()];
    loop {
        let w: Witness =
            p.vars.iter().zip(&lists).zip(&idx).map(|((v, l), i)| (v.name.clone(), l[*i].clone())).collect();
        if p.constraints.iter().all(|c| evaluate(c, &w) == Some(true)) {
            return Ok(Outcome::Sat(w));
        }
        // Odometer with the last variable fastest.
        let mut k = idx.len();
        loop {
            if k == 0 {
                return Ok(Outcome::Unsat);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < lists[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}
