use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{InputType, Rule, RuleSet};

pub const RULE_SCHEMA: &str = "hgrule/1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("rule file schema violation: {0}")]
pub struct SchemaViolation(pub String);

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleFile {
    schema: String,
    app: String,
    #[serde(default)]
    inputs: BTreeMap<String, InputType>,
    #[serde(default)]
    devices: BTreeMap<String, String>,
    rules: Vec<Rule>,
}

impl From<&RuleSet> for RuleFile {
    fn from(rules: &RuleSet) -> Self {
        RuleFile {
            schema: RULE_SCHEMA.to_string(),
            app: rules.app.clone(),
            inputs: rules.inputs.clone(),
            devices: rules.devices.clone(),
            rules: rules.rules.clone(),
        }
    }
}

/// Pretty-printed rule file with a trailing newline.
pub fn serialize(rules: &RuleSet) -> String {
    let mut s = serde_json::to_string_pretty(&RuleFile::from(rules)).expect("rule file serializes");
    s.push('\n');
    s
}

pub fn deserialize(bytes: &[u8]) -> Result<RuleSet, SchemaViolation> {
    let file: RuleFile = serde_json::from_slice(bytes).map_err(|e| SchemaViolation(e.to_string()))?;
    from_file(file)
}

fn from_file(file: RuleFile) -> Result<RuleSet, SchemaViolation> {
    if file.schema != RULE_SCHEMA {
        return Err(SchemaViolation(format!("expected schema `{RULE_SCHEMA}`, found `{}`", file.schema)));
    }
    if file.app.is_empty() {
        return Err(SchemaViolation("empty app name".into()));
    }
    let mut rules = file.rules;
    for r in &mut rules {
        if r.id.len() != 16 || !r.id.chars().all(|c| c.is_ascii_hexdigit()) {
            return Err(SchemaViolation(format!("rule id `{}` is not 16 hex digits", r.id)));
        }
        r.app = file.app.clone();
    }
    Ok(RuleSet { app: file.app, inputs: file.inputs, devices: file.devices, rules })
}

// A rule set embedded in another document uses the rule-file layout.
impl Serialize for RuleSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        RuleFile::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for RuleSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        from_file(RuleFile::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}
