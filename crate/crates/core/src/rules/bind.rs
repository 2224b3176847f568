use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use super::{referenced_data, InputType, Rule, RuleSet};
use crate::config::{Configuration, DeviceId};
use crate::term::{DataConstraint, Term};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BindError {
    #[error("configuration is for app `{found}`, rules are for `{expected}`")]
    AppMismatch { expected: String, found: String },
    #[error("no binding for `{0}`")]
    MissingBinding(String),
    #[error("binding for `{0}` has the wrong sort")]
    SortMismatch(String),
}

impl BindError {
    pub fn code(&self) -> &'static str {
        match self {
            BindError::AppMismatch { .. } => "AppMismatch",
            BindError::MissingBinding(_) => "MissingBinding",
            BindError::SortMismatch(_) => "SortMismatch",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundDevice {
    pub id: DeviceId,
    pub capability: String,
}

/// Resolved bindings of one app, shared by all its bound rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppContext {
    pub app: String,
    pub devices: BTreeMap<String, BoundDevice>,
    pub inputs: BTreeMap<String, Value>,
}

impl AppContext {
    pub fn device(&self, var: &str) -> Option<&BoundDevice> {
        self.devices.get(var)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundRule {
    pub rule: Rule,
    pub ctx: Arc<AppContext>,
}

impl BoundRule {
    pub fn id(&self) -> &str {
        &self.rule.id
    }

    pub fn device_id(&self, var: &str) -> Option<&DeviceId> {
        self.ctx.device(var).map(|d| &d.id)
    }

    pub fn capability(&self, var: &str) -> Option<&str> {
        self.ctx.device(var).map(|d| d.capability.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundRuleSet {
    pub app: String,
    pub binding: Configuration,
    pub context: Arc<AppContext>,
    pub rules: Vec<BoundRule>,
}

impl BoundRuleSet {
    /// The bound rules as a plain rule set (for serialization).
    pub fn to_rule_set(&self, unbound: &RuleSet) -> RuleSet {
        RuleSet {
            app: self.app.clone(),
            inputs: unbound.inputs.clone(),
            devices: unbound.devices.clone(),
            rules: self.rules.iter().map(|r| r.rule.clone()).collect(),
        }
    }
}

fn coerce(name: &str, ty: &InputType, v: &Value) -> Result<Value, BindError> {
    let mismatch = || BindError::SortMismatch(name.to_string());
    match (ty, v) {
        (InputType::Number, Value::Int(_)) | (InputType::Bool, Value::Bool(_)) => Ok(v.clone()),
        // URI values are typed by shape, so `42` may arrive for a string input.
        (InputType::String, _) => Ok(Value::Str(v.to_string())),
        (InputType::Enum(allowed), _) => {
            let s = v.to_string();
            if allowed.contains(&s) {
                Ok(Value::Str(s))
            } else {
                Err(mismatch())
            }
        }
        _ => Err(mismatch()),
    }
}

/// Binds `rules` to a configuration: resolves every device variable to a
/// device id and every user input to a constant, adds `input = constant`
/// data constraints where inputs are referenced, and recomputes ids over the
/// bound content.
pub fn bind_configuration(rules: &RuleSet, config: &Configuration) -> Result<BoundRuleSet, BindError> {
    if config.app_name != rules.app {
        return Err(BindError::AppMismatch { expected: rules.app.clone(), found: config.app_name.clone() });
    }
    let mut names: BTreeSet<&str> = rules.devices.keys().map(String::as_str).collect();
    names.extend(rules.inputs.keys().filter(|n| rules.is_user_input(n)).map(String::as_str));
    let mut devices = BTreeMap::new();
    let mut inputs = BTreeMap::new();
    for name in names {
        if let Some(cap) = rules.devices.get(name) {
            let id = if crate::lang::BUILTIN_RECEIVERS.contains(&name) {
                DeviceId::builtin(name)
            } else if let Some(id) = config.device_bindings.get(name) {
                id.clone()
            } else if config.value_bindings.contains_key(name) {
                return Err(BindError::SortMismatch(name.to_string()));
            } else {
                return Err(BindError::MissingBinding(name.to_string()));
            };
            devices.insert(name.to_string(), BoundDevice { id, capability: cap.clone() });
        } else {
            let ty = &rules.inputs[name];
            let v = match (config.value_bindings.get(name), config.device_bindings.get(name)) {
                (Some(v), _) => coerce(name, ty, v)?,
                (None, Some(id)) => coerce(name, ty, &Value::Str(id.to_string()))?,
                (None, None) => return Err(BindError::MissingBinding(name.to_string())),
            };
            inputs.insert(name.to_string(), v);
        }
    }
    let ctx = Arc::new(AppContext { app: rules.app.clone(), devices, inputs });
    let mut bound = Vec::new();
    let mut seen = BTreeSet::new();
    for r in &rules.rules {
        let rule = bind_rule(r, &ctx);
        if seen.insert(rule.id.clone()) {
            bound.push(BoundRule { rule, ctx: ctx.clone() });
        }
    }
    Ok(BoundRuleSet { app: rules.app.clone(), binding: config.clone(), context: ctx, rules: bound })
}

fn input_data(ctx: &AppContext) -> Vec<DataConstraint> {
    ctx.inputs.iter().map(|(n, v)| DataConstraint::new(Term::var(n), Term::constant(v))).collect()
}

fn bind_rule(r: &Rule, ctx: &AppContext) -> Rule {
    let mut rule = r.clone();
    let bindings = input_data(ctx);
    let mut cond_data = rule.condition.data.clone();
    cond_data.extend(bindings.iter().cloned());
    let mut roots = BTreeSet::new();
    for l in rule.all_lits() {
        l.collect_vars(&mut roots);
    }
    rule.condition.data = referenced_data(&cond_data, &roots);
    let mut act_data = rule.action.data.clone();
    act_data.extend(bindings);
    let mut roots = BTreeSet::new();
    for p in &rule.action.paras {
        p.collect_vars(&mut roots);
    }
    rule.action.data = referenced_data(&act_data, &roots);
    let devices: BTreeMap<String, String> =
        rule.device_vars().into_iter().filter_map(|v| ctx.device(&v).map(|d| (v, d.id.to_string()))).collect();
    rule.assign_id(Some(&devices));
    rule
}
