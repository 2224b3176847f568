use std::collections::BTreeSet;

use super::{is_analyzable, ActionInfo, DetectOptions, Direction, FindingKind, PairIndex, ThreatFinding};
use crate::catalog::{Catalog, ChannelEffect, Direction as Effect};
use crate::config::DeviceId;
use crate::merge::{merge, Part};
use crate::rules::{substitute_definitions, BoundRule};
use crate::solver::{solve, Outcome, Problem, Witness};
use crate::term::{CmpOp, ConstraintLit, DataConstraint, Term};
use crate::value::Value;

enum Check {
    Sat(Witness, Problem),
    Unsat,
    Undecided(String),
}

fn check(parts: &[Part<'_>], catalog: &Catalog, opts: &DetectOptions) -> Check {
    let p = match merge(parts, catalog, &opts.merge) {
        Ok(p) => p,
        Err(e) => return Check::Undecided(e.to_string()),
    };
    match solve(&p) {
        Ok(Outcome::Sat(w)) => Check::Sat(w, p),
        Ok(Outcome::Unsat) => Check::Unsat,
        Ok(Outcome::BudgetExceeded) => Check::Undecided("solver node budget exceeded".into()),
        Err(e) => Check::Undecided(e.to_string()),
    }
}

fn trig(r: &BoundRule) -> Vec<ConstraintLit> {
    r.rule.trigger.constraint.clone()
}

fn cond(r: &BoundRule) -> Vec<ConstraintLit> {
    r.rule.condition.predicates.clone()
}

fn both(r: &BoundRule) -> Vec<ConstraintLit> {
    r.rule.all_lits().cloned().collect()
}

fn label(r: &BoundRule) -> String {
    let a = &r.rule.action;
    format!("{}'s {}.{}()", r.rule.app, a.subject, a.command)
}

fn indeterminate(attempted: FindingKind, a: &BoundRule, b: &BoundRule, reason: &str) -> ThreatFinding {
    let mut rules = vec![a.id().to_string(), b.id().to_string()];
    if !attempted.is_directed() {
        rules.sort();
    }
    ThreatFinding {
        kind: FindingKind::INDETERMINATE,
        rules,
        direction: None,
        witness: None,
        channel: Some(attempted.to_string()),
        explanation: format!("{attempted} check between {} and {} was not decided: {reason}", label(a), label(b)),
        basis: None,
    }
}

fn finding(
    kind: FindingKind,
    a: &BoundRule,
    b: &BoundRule,
    witness: Option<(Witness, Problem)>,
    channel: Option<String>,
    explanation: String,
) -> ThreatFinding {
    let (w, basis) = match witness {
        Some((w, p)) => (Some(w), Some(p)),
        None => (None, None),
    };
    ThreatFinding {
        kind,
        rules: vec![a.id().to_string(), b.id().to_string()],
        direction: kind.is_directed().then(|| Direction { from: a.id().to_string(), to: b.id().to_string() }),
        witness: w,
        channel,
        explanation,
        basis,
    }
}

/// Same device, same capability, contradictory commands.
pub fn ar_candidate(a: &BoundRule, b: &BoundRule, catalog: &Catalog, index: &PairIndex) -> bool {
    let (x, y) = (index.action(a, catalog), index.action(b, catalog));
    match (&x.device, &y.device, &x.capability) {
        (Some(d1), Some(d2), Some(cap)) if d1 == d2 && y.capability.as_ref() == Some(cap) => {
            catalog.contradicts(cap, &x.command, &x.params, &y.command, &y.params)
        }
        _ => false,
    }
}

fn trigger_key(r: &BoundRule) -> Option<(DeviceId, String)> {
    let t = &r.rule.trigger;
    if t.is_lifecycle() {
        return None;
    }
    Some((r.device_id(&t.subject)?.clone(), t.attribute.clone()))
}

fn resolve(l: &ConstraintLit, data: &[DataConstraint]) -> ConstraintLit {
    ConstraintLit::new(substitute_definitions(&l.lhs, data), l.op, substitute_definitions(&l.rhs, data))
}

/// Whether a directional effect can satisfy `r`'s trigger constraint.
fn direction_compatible(eff: &ChannelEffect, r: &BoundRule) -> bool {
    let t = &r.rule.trigger;
    let own = Term::attr(t.subject.clone(), t.attribute.clone());
    let data: Vec<DataConstraint> = r.rule.all_data().cloned().collect();
    let setpoint = eff.setpoint.as_ref().and_then(Value::as_int);
    t.constraint.iter().all(|l| {
        let l = resolve(l, &data);
        let (op, other) = if l.lhs == own {
            (l.op, l.rhs)
        } else if l.rhs == own {
            (l.op.swap(), l.lhs)
        } else {
            return true;
        };
        let bound = other.as_const().and_then(|v| v.as_int());
        let fits = |sp: i64, c: i64| op.holds(sp.cmp(&c));
        match (eff.direction, op) {
            (Effect::Up, CmpOp::Gt | CmpOp::Ge) | (Effect::Down, CmpOp::Lt | CmpOp::Le) => {
                matches!((setpoint, bound), (None, _) | (_, None)) || fits(setpoint.unwrap(), bound.unwrap())
            }
            (_, CmpOp::Eq) => matches!((setpoint, bound), (Some(s), Some(c)) if s == c),
            _ => false,
        }
    })
}

enum Ct {
    No,
    Yes(String, Witness, Problem),
    Undecided(String),
}

fn covert_trigger(r1: &BoundRule, r2: &BoundRule, act: &ActionInfo, catalog: &Catalog, opts: &DetectOptions) -> Ct {
    let Some((t2dev, t2attr)) = trigger_key(r2) else { return Ct::No };
    let t = &r2.rule.trigger;
    let Some(cap1) = &act.capability else { return Ct::No };
    let mut channel = None;
    if act.device.as_ref() == Some(&t2dev) {
        let se = catalog.command(cap1, &act.command).and_then(|c| c.self_effect.as_ref());
        if let Some(se) = se.filter(|se| se.attribute == t2attr) {
            let value = match (&se.value, &se.param) {
                (Some(v), _) => Some(v.clone()),
                (None, Some(p)) => {
                    catalog.param_index(cap1, &act.command, p).and_then(|i| act.params.get(i).cloned().flatten())
                }
                _ => None,
            };
            let mut lits = trig(r2);
            if let Some(v) = value {
                lits.push(ConstraintLit::new(
                    Term::attr(t.subject.clone(), t2attr.clone()),
                    CmpOp::Eq,
                    Term::constant(&v),
                ));
            }
            match check(&[Part::new(r2, lits)], catalog, opts) {
                Check::Sat(..) => channel = Some(format!("{}.{}", t.subject, t2attr)),
                Check::Unsat => {}
                Check::Undecided(e) => return Ct::Undecided(e),
            }
        }
    }
    if channel.is_none() {
        let feature =
            r2.capability(&t.subject).and_then(|c| catalog.attribute(c, &t2attr)).and_then(|s| s.feature.clone());
        if let Some(f) = feature {
            let effects = catalog.channel_effects(cap1, &act.command, &act.params);
            if effects.iter().any(|e| e.feature == f && direction_compatible(e, r2)) {
                channel = Some(f);
            }
        }
    }
    let Some(channel) = channel else { return Ct::No };
    match check(&[Part::new(r1, cond(r1)), Part::new(r2, cond(r2))], catalog, opts) {
        Check::Sat(w, p) => Ct::Yes(channel, w, p),
        Check::Unsat => Ct::No,
        Check::Undecided(e) => Ct::Undecided(e),
    }
}

/// Attributes read by `r`'s condition, after inlining local definitions.
fn condition_attrs(r: &BoundRule) -> BTreeSet<(String, String)> {
    let data: Vec<DataConstraint> = r.rule.all_data().cloned().collect();
    let mut out = BTreeSet::new();
    for l in &r.rule.condition.predicates {
        resolve(l, &data).collect_attrs(&mut out);
    }
    out
}

/// Effect constraints of `r1`'s action, stated over `r2`'s condition
/// attributes. The flag is set when a saturated (setpoint-free) effect is used.
fn effect_constraints(
    r2: &BoundRule,
    act: &ActionInfo,
    skip_self: bool,
    catalog: &Catalog,
) -> (Vec<ConstraintLit>, Vec<String>, bool) {
    let mut lits = Vec::new();
    let mut via = Vec::new();
    let mut qualitative = false;
    let Some(cap1) = &act.capability else { return (lits, via, qualitative) };
    let trigger = trigger_key(r2);
    let attrs: Vec<(String, String)> = condition_attrs(r2)
        .into_iter()
        .filter(|(d, a)| r2.device_id(d).is_some_and(|id| trigger.as_ref() != Some(&(id.clone(), a.clone()))))
        .collect();
    if !skip_self {
        let se = catalog.command(cap1, &act.command).and_then(|c| c.self_effect.as_ref());
        if let (Some(se), Some(dev)) = (se, &act.device) {
            let value = match (&se.value, &se.param) {
                (Some(v), _) => Some(v.clone()),
                (None, Some(p)) => {
                    catalog.param_index(cap1, &act.command, p).and_then(|i| act.params.get(i).cloned().flatten())
                }
                _ => None,
            };
            if let Some(v) = value {
                for (d, a) in &attrs {
                    if r2.device_id(d) == Some(dev) && *a == se.attribute {
                        lits.push(ConstraintLit::new(Term::attr(d.clone(), a.clone()), CmpOp::Eq, Term::constant(&v)));
                        via.push(format!("{d}.{a}"));
                    }
                }
            }
        }
    }
    for eff in catalog.channel_effects(cap1, &act.command, &act.params) {
        let Some(domain) = catalog.feature_domain(&eff.feature) else { continue };
        for (d, a) in &attrs {
            let feature = r2.capability(d).and_then(|c| catalog.attribute(c, a)).and_then(|s| s.feature.as_deref());
            if feature != Some(eff.feature.as_str()) {
                continue;
            }
            let term = Term::attr(d.clone(), a.clone());
            let lit = match (&eff.setpoint, eff.direction) {
                (Some(Value::Int(t)), Effect::Up) => ConstraintLit::new(term, CmpOp::Ge, Term::Int(*t)),
                (Some(Value::Int(t)), Effect::Down) => ConstraintLit::new(term, CmpOp::Le, Term::Int(*t)),
                (Some(_), _) => continue,
                (None, Effect::Up) => {
                    qualitative = true;
                    ConstraintLit::new(term, CmpOp::Eq, Term::Int(domain.max))
                }
                (None, Effect::Down) => {
                    qualitative = true;
                    ConstraintLit::new(term, CmpOp::Eq, Term::Int(domain.min))
                }
            };
            lits.push(lit);
            via.push(eff.feature.clone());
        }
    }
    via.sort();
    via.dedup();
    (lits, via, qualitative)
}

fn condition_interference(
    r1: &BoundRule,
    r2: &BoundRule,
    act: &ActionInfo,
    contested: bool,
    catalog: &Catalog,
    opts: &DetectOptions,
) -> Option<ThreatFinding> {
    let (effects, via, qualitative) = effect_constraints(r2, act, contested, catalog);
    if effects.is_empty() {
        return None;
    }
    let (gate_w, gate_p) = match check(&[Part::new(r1, cond(r1)), Part::new(r2, cond(r2))], catalog, opts) {
        Check::Sat(w, p) => (w, p),
        Check::Unsat => return None,
        Check::Undecided(e) => return Some(indeterminate(FindingKind::EC, r1, r2, &e)),
    };
    let mut lits = cond(r2);
    lits.extend(effects);
    let channel = Some(via.join(","));
    let note = if qualitative { " (qualitative)" } else { "" };
    match check(&[Part::new(r2, lits)], catalog, opts) {
        Check::Sat(w, p) => Some(finding(
            FindingKind::EC,
            r1,
            r2,
            Some((w, p)),
            channel,
            format!("{} can make the condition of {} true via {}{note}", label(r1), label(r2), via.join(", ")),
        )),
        Check::Unsat => Some(finding(
            FindingKind::DC,
            r1,
            r2,
            Some((gate_w, gate_p)),
            channel,
            format!("{} makes the condition of {} false via {}{note}", label(r1), label(r2), via.join(", ")),
        )),
        Check::Undecided(e) => Some(indeterminate(FindingKind::EC, r1, r2, &e)),
    }
}

/// All interference findings between two bound rules, in both directions,
/// in canonical order.
pub fn detect_pair(
    r1: &BoundRule,
    r2: &BoundRule,
    catalog: &Catalog,
    index: &PairIndex,
    opts: &DetectOptions,
) -> Vec<ThreatFinding> {
    if !is_analyzable(r1) || !is_analyzable(r2) || r1.id() == r2.id() {
        return Vec::new();
    }
    let (lo, hi) = if r1.id() < r2.id() { (r1, r2) } else { (r2, r1) };
    let (act_lo, act_hi) = (index.action(lo, catalog), index.action(hi, catalog));
    let contested = ar_candidate(lo, hi, catalog, index);
    let mut out = Vec::new();

    // Actuator race: same trigger, overlapping conditions.
    if contested && trigger_key(lo).is_some() && trigger_key(lo) == trigger_key(hi) {
        match check(&[Part::new(lo, trig(lo)), Part::new(hi, trig(hi))], catalog, opts) {
            Check::Sat(..) => match check(&[Part::new(lo, cond(lo)), Part::new(hi, cond(hi))], catalog, opts) {
                Check::Sat(w, p) => out.push(finding(
                    FindingKind::AR,
                    lo,
                    hi,
                    Some((w, p)),
                    Some(format!("{}.{}", lo.rule.action.subject, lo.rule.action.command)),
                    format!(
                        "{} and {} issue contradictory commands to the same device on the same trigger",
                        label(lo),
                        label(hi)
                    ),
                )),
                Check::Unsat => {}
                Check::Undecided(e) => out.push(indeterminate(FindingKind::AR, lo, hi, &e)),
            },
            Check::Unsat => {}
            Check::Undecided(e) => out.push(indeterminate(FindingKind::AR, lo, hi, &e)),
        }
    }

    // Goal conflict: different devices pushing a feature in opposite directions.
    if act_lo.device != act_hi.device {
        let features: Vec<String> = act_lo
            .goal
            .iter()
            .filter(|(f, s)| act_hi.goal.get(*f).is_some_and(|t| s.opposes(*t)))
            .map(|(f, _)| f.clone())
            .collect();
        if !features.is_empty() {
            match check(&[Part::new(lo, both(lo)), Part::new(hi, both(hi))], catalog, opts) {
                Check::Sat(w, p) => out.push(finding(
                    FindingKind::GC,
                    lo,
                    hi,
                    Some((w, p)),
                    Some(features.join(",")),
                    format!("{} and {} push {} in opposite directions", label(lo), label(hi), features.join(", ")),
                )),
                Check::Unsat => {}
                Check::Undecided(e) => out.push(indeterminate(FindingKind::GC, lo, hi, &e)),
            }
        }
    }

    // Covert triggering in each direction, then its special cases.
    let mut ct = [false, false];
    for (k, (a, b, act)) in [(lo, hi, &act_lo), (hi, lo, &act_hi)].into_iter().enumerate() {
        match covert_trigger(a, b, act, catalog, opts) {
            Ct::Yes(channel, w, p) => {
                ct[k] = true;
                out.push(finding(
                    FindingKind::CT,
                    a,
                    b,
                    Some((w.clone(), p.clone())),
                    Some(channel.clone()),
                    format!("{} triggers the rule of {} through {channel}", label(a), b.rule.app),
                ));
                if contested {
                    out.push(finding(
                        FindingKind::SD,
                        a,
                        b,
                        Some((w, p)),
                        Some(channel),
                        format!("{} triggers {}, which undoes it", label(a), label(b)),
                    ));
                }
            }
            Ct::No => {}
            Ct::Undecided(e) => out.push(indeterminate(FindingKind::CT, a, b, &e)),
        }
    }
    if contested && ct == [true, true] {
        let basis = match check(&[Part::new(lo, cond(lo)), Part::new(hi, cond(hi))], catalog, opts) {
            Check::Sat(w, p) => Some((w, p)),
            _ => None,
        };
        out.push(finding(
            FindingKind::LT,
            lo,
            hi,
            basis,
            None,
            format!("{} and {} trigger each other with contradictory commands", label(lo), label(hi)),
        ));
    }

    // Condition interference in each direction.
    for (a, b, act) in [(lo, hi, &act_lo), (hi, lo, &act_hi)] {
        out.extend(condition_interference(a, b, act, contested, catalog, opts));
    }

    out.sort_by(|a, b| a.canonical_cmp(b));
    out.dedup();
    out
}
