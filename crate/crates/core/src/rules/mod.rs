//! Trigger-condition-action rules, their canonical form and content ids.

mod bind;
mod render;
mod serial;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::term::{ConstraintLit, DataConstraint, Term};

pub use bind::{bind_configuration, AppContext, BindError, BoundDevice, BoundRule, BoundRuleSet};
pub use render::{render_lit, render_rule, render_term, substitute_definitions};
pub use serial::{deserialize, serialize, SchemaViolation, RULE_SCHEMA};

/// Trigger subject used for sinks reached directly from a lifecycle method.
pub const LIFECYCLE_SUBJECT: &str = "app";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Trigger {
    pub subject: String,
    pub attribute: String,
    /// Conjunction; empty means any change of the attribute.
    #[serde(default)]
    pub constraint: Vec<ConstraintLit>,
}

impl Trigger {
    pub fn is_lifecycle(&self) -> bool {
        self.subject == LIFECYCLE_SUBJECT
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Condition {
    #[serde(default)]
    pub data: Vec<DataConstraint>,
    #[serde(default)]
    pub predicates: Vec<ConstraintLit>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub subject: String,
    pub command: String,
    #[serde(default)]
    pub paras: Vec<Term>,
    #[serde(default)]
    pub data: Vec<DataConstraint>,
    pub when: u64,
    pub period: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RuleFlag {
    OnUninstall,
    Unsatisfiable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub id: String,
    #[serde(skip)]
    pub app: String,
    pub trigger: Trigger,
    pub condition: Condition,
    pub action: Action,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub flags: BTreeSet<RuleFlag>,
}

#[derive(Serialize)]
struct IdPayload<'a> {
    app: &'a str,
    trigger: &'a Trigger,
    condition: &'a Condition,
    action: &'a Action,
    #[serde(skip_serializing_if = "Option::is_none")]
    devices: Option<&'a BTreeMap<String, String>>,
}

impl Rule {
    pub fn is_flagged(&self, f: RuleFlag) -> bool {
        self.flags.contains(&f)
    }

    /// Sorts and dedupes every constraint list so that equivalent
    /// extractions reached through different path orders compare equal.
    pub fn canonicalize(&mut self) {
        sort_dedup(&mut self.trigger.constraint);
        sort_dedup(&mut self.condition.predicates);
        sort_dedup(&mut self.condition.data);
        sort_dedup(&mut self.action.data);
    }

    /// First 16 hex digits of SHA-256 over the canonical JSON of the rule
    /// content. `devices` adds the device bindings of a bound rule.
    pub fn content_id(&self, devices: Option<&BTreeMap<String, String>>) -> String {
        let payload = IdPayload {
            app: &self.app,
            trigger: &self.trigger,
            condition: &self.condition,
            action: &self.action,
            devices,
        };
        let json = serde_json::to_string(&payload).expect("rule serializes");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn assign_id(&mut self, devices: Option<&BTreeMap<String, String>>) {
        self.canonicalize();
        self.id = self.content_id(devices);
    }

    /// Device variables mentioned anywhere in the rule.
    pub fn device_vars(&self) -> BTreeSet<String> {
        let mut attrs = BTreeSet::new();
        for l in self.all_lits() {
            l.collect_attrs(&mut attrs);
        }
        for d in self.all_data() {
            d.target.collect_attrs(&mut attrs);
            d.source.collect_attrs(&mut attrs);
        }
        for p in &self.action.paras {
            p.collect_attrs(&mut attrs);
        }
        let mut out: BTreeSet<String> = attrs.into_iter().map(|(d, _)| d).collect();
        if !self.trigger.is_lifecycle() {
            out.insert(self.trigger.subject.clone());
        }
        if self.action.subject != "api" {
            out.insert(self.action.subject.clone());
        }
        out
    }

    pub fn all_lits(&self) -> impl Iterator<Item = &ConstraintLit> {
        self.trigger.constraint.iter().chain(&self.condition.predicates)
    }

    pub fn all_data(&self) -> impl Iterator<Item = &DataConstraint> {
        self.condition.data.iter().chain(&self.action.data)
    }
}

fn sort_dedup<T: ToString>(v: &mut Vec<T>) {
    let mut keyed: Vec<(String, T)> = v.drain(..).map(|x| (x.to_string(), x)).collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    keyed.dedup_by(|a, b| a.0 == b.0);
    v.extend(keyed.into_iter().map(|(_, x)| x));
}

/// Declared type of a value input in a rule file.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputType {
    Number,
    String,
    Bool,
    Enum(Vec<String>),
}

impl InputType {
    pub fn sort(&self) -> crate::value::Sort {
        use crate::value::Sort;
        match self {
            InputType::Number => Sort::Int,
            InputType::String | InputType::Enum(_) => Sort::Str,
            InputType::Bool => Sort::Bool,
        }
    }
}

/// Prefix of persistent-state sources; they are symbolic and never bound.
pub const STATE_PREFIX: &str = "state.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSet {
    pub app: String,
    /// Value inputs (including `state.*` sources) and their types.
    pub inputs: BTreeMap<String, InputType>,
    /// Device variables and their capabilities (built-in receivers included when used).
    pub devices: BTreeMap<String, String>,
    pub rules: Vec<Rule>,
}

impl RuleSet {
    pub fn rule(&self, id: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.id == id)
    }

    pub fn is_user_input(&self, name: &str) -> bool {
        self.inputs.contains_key(name) && !name.starts_with(STATE_PREFIX)
    }
}

/// Data constraints of `data` reachable from the variables in `roots`,
/// following definitions transitively. Keeps the input order.
pub fn referenced_data(data: &[DataConstraint], roots: &BTreeSet<String>) -> Vec<DataConstraint> {
    let mut wanted = roots.clone();
    loop {
        let before = wanted.len();
        for d in data {
            if d.defined_name().is_some_and(|n| wanted.contains(n)) {
                d.source.collect_vars(&mut wanted);
            }
        }
        if wanted.len() == before {
            break;
        }
    }
    data.iter().filter(|d| d.defined_name().is_some_and(|n| wanted.contains(n))).cloned().collect()
}
