//! Device capability knowledge base (schema `hgcat/1`).
//!
//! Holds command signatures, the attribute each command sets on its own
//! device, the environment features a command pushes up or down, goal-effect
//! signs and the contradiction table. Everything is data; see
//! `data/default_catalog.json` for the shipped table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::value::{Sort, Value};

pub const CATALOG_SCHEMA: &str = "hgcat/1";

const DEFAULT_CATALOG: &str = include_str!("../data/default_catalog.json");

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog schema violation: {0}")]
    SchemaViolation(String),
    #[error("feature `{feature}` referenced by {context} is not declared")]
    DanglingFeature { feature: String, context: String },
    #[error("cannot read catalog {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "+")]
    Up,
    #[serde(rename = "-")]
    Down,
}

impl Direction {
    pub fn sign(self) -> Sign {
        match self {
            Direction::Up => Sign::Up,
            Direction::Down => Sign::Down,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Up => "+",
            Direction::Down => "-",
        })
    }
}

/// Entry of the goal-effect map: increases, decreases, or leaves alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Up,
    #[serde(rename = "-")]
    Down,
    #[serde(rename = "#")]
    Neutral,
}

impl Sign {
    pub fn opposes(self, other: Sign) -> bool {
        matches!((self, other), (Sign::Up, Sign::Down) | (Sign::Down, Sign::Up))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDomain {
    pub min: i64,
    pub max: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AttributeSpec {
    pub sort: Sort,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<i64>,
    /// Environment feature this attribute senses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<String>,
    /// Prose for individual values, e.g. `active` -> "motion is detected".
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub phrases: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    pub name: String,
    pub sort: Sort,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SelfEffect {
    pub attribute: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Channel {
    pub feature: String,
    pub direction: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setpoint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CommandSpec {
    #[serde(default)]
    pub params: Vec<ParamSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub self_effect: Option<SelfEffect>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub channels: Vec<Channel>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub goal_effects: BTreeMap<String, Sign>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phrase: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CapabilityEntry {
    pub name: String,
    #[serde(default)]
    pub is_virtual: bool,
    #[serde(default)]
    pub attributes: BTreeMap<String, AttributeSpec>,
    #[serde(default)]
    pub commands: BTreeMap<String, CommandSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ContradictionRule {
    pub capability: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opposite: Option<[String; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param_clash: Option<String>,
}

/// Where an API sink acts, when it acts on a built-in receiver.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinkTarget {
    pub subject: String,
    pub command: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ApiSink {
    pub name: String,
    #[serde(default)]
    pub params: Vec<ParamSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<SinkTarget>,
}

/// Built-in receiver bound to a virtual capability, e.g. `location` -> `mode`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuiltinDevice {
    pub name: String,
    pub capability: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct CatalogFile {
    schema: String,
    goal_features: Vec<String>,
    environment: BTreeMap<String, FeatureDomain>,
    capabilities: Vec<CapabilityEntry>,
    #[serde(default)]
    contradictions: Vec<ContradictionRule>,
    #[serde(default)]
    api_sinks: Vec<ApiSink>,
    #[serde(default)]
    builtins: Vec<BuiltinDevice>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelEffect {
    pub feature: String,
    pub direction: Direction,
    pub setpoint: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Catalog {
    pub goal_features: Vec<String>,
    pub environment: BTreeMap<String, FeatureDomain>,
    pub capabilities: BTreeMap<String, CapabilityEntry>,
    pub contradictions: Vec<ContradictionRule>,
    pub api_sinks: BTreeMap<String, ApiSink>,
    pub builtins: BTreeMap<String, String>,
}

impl Catalog {
    pub fn default_catalog() -> Catalog {
        Catalog::from_json_str(DEFAULT_CATALOG).expect("shipped catalog is valid")
    }

    /// Loads a JSON or TOML catalog, chosen by file extension (`.toml` or anything else).
    pub fn load(path: &Path) -> Result<Catalog, CatalogError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| CatalogError::Io { path: path.display().to_string(), source })?;
        if path.extension().is_some_and(|e| e == "toml") {
            Catalog::from_toml_str(&text)
        } else {
            Catalog::from_json_str(&text)
        }
    }

    pub fn from_json_str(text: &str) -> Result<Catalog, CatalogError> {
        let file: CatalogFile = serde_json::from_str(text).map_err(|e| CatalogError::SchemaViolation(e.to_string()))?;
        Catalog::from_file(file)
    }

    pub fn from_toml_str(text: &str) -> Result<Catalog, CatalogError> {
        let file: CatalogFile = toml::from_str(text).map_err(|e| CatalogError::SchemaViolation(e.to_string()))?;
        Catalog::from_file(file)
    }

    pub fn to_json_string(&self) -> String {
        let file = self.to_file();
        let mut s = serde_json::to_string_pretty(&file).expect("catalog serializes");
        s.push('\n');
        s
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.to_file()).expect("catalog serializes")
    }

    fn to_file(&self) -> CatalogFile {
        CatalogFile {
            schema: CATALOG_SCHEMA.to_string(),
            goal_features: self.goal_features.clone(),
            environment: self.environment.clone(),
            capabilities: self.capabilities.values().cloned().collect(),
            contradictions: self.contradictions.clone(),
            api_sinks: self.api_sinks.values().cloned().collect(),
            builtins: self
                .builtins
                .iter()
                .map(|(name, capability)| BuiltinDevice { name: name.clone(), capability: capability.clone() })
                .collect(),
        }
    }

    fn from_file(file: CatalogFile) -> Result<Catalog, CatalogError> {
        let bad = |m: String| Err(CatalogError::SchemaViolation(m));
        if file.schema != CATALOG_SCHEMA {
            return bad(format!("unsupported schema `{}`", file.schema));
        }
        let goal: BTreeSet<&String> = file.goal_features.iter().collect();
        if goal.len() != file.goal_features.len() {
            return bad("duplicate goal feature".into());
        }
        for (f, d) in &file.environment {
            if d.min > d.max {
                return bad(format!("environment feature `{f}` has min > max"));
            }
        }
        for f in &file.goal_features {
            if !file.environment.contains_key(f) {
                return Err(CatalogError::DanglingFeature {
                    feature: f.clone(),
                    context: "goalFeatures (no environment domain)".into(),
                });
            }
        }
        let mut capabilities = BTreeMap::new();
        for cap in file.capabilities {
            validate_capability(&cap, &file.goal_features, &file.environment)?;
            let name = cap.name.clone();
            if capabilities.insert(name.clone(), cap).is_some() {
                return bad(format!("duplicate capability `{name}`"));
            }
        }
        for c in &file.contradictions {
            let Some(cap) = capabilities.get(&c.capability) else {
                return bad(format!("contradiction names unknown capability `{}`", c.capability));
            };
            let names: Vec<&String> = match (&c.opposite, &c.param_clash) {
                (Some([a, b]), None) if a != b => vec![a, b],
                (None, Some(cmd)) => vec![cmd],
                _ => {
                    return bad(format!("contradiction on `{}` needs exactly one of opposite/paramClash", c.capability))
                }
            };
            for n in names {
                if !cap.commands.contains_key(n) {
                    return bad(format!("contradiction names unknown command `{}.{n}`", c.capability));
                }
            }
        }
        let mut api_sinks = BTreeMap::new();
        for s in file.api_sinks {
            if let Some(t) = &s.target {
                let resolves = file
                    .builtins
                    .iter()
                    .find(|b| b.name == t.subject)
                    .and_then(|b| capabilities.get(&b.capability))
                    .is_some_and(|c| c.commands.contains_key(&t.command));
                if !resolves {
                    return bad(format!("api sink `{}` targets unknown `{}.{}`", s.name, t.subject, t.command));
                }
            }
            let name = s.name.clone();
            if api_sinks.insert(name.clone(), s).is_some() {
                return bad(format!("duplicate api sink `{name}`"));
            }
        }
        let mut builtins = BTreeMap::new();
        for b in file.builtins {
            if !capabilities.contains_key(&b.capability) {
                return bad(format!("builtin `{}` names unknown capability `{}`", b.name, b.capability));
            }
            builtins.insert(b.name, b.capability);
        }
        Ok(Catalog {
            goal_features: file.goal_features,
            environment: file.environment,
            capabilities,
            contradictions: file.contradictions,
            api_sinks,
            builtins,
        })
    }

    pub fn capability(&self, name: &str) -> Option<&CapabilityEntry> {
        self.capabilities.get(name)
    }

    pub fn command(&self, capability: &str, command: &str) -> Option<&CommandSpec> {
        self.capability(capability)?.commands.get(command)
    }

    pub fn attribute(&self, capability: &str, attribute: &str) -> Option<&AttributeSpec> {
        self.capability(capability)?.attributes.get(attribute)
    }

    pub fn api_sink(&self, name: &str) -> Option<&ApiSink> {
        self.api_sinks.get(name)
    }

    /// Capability of a built-in receiver such as `location`.
    pub fn builtin_capability(&self, receiver: &str) -> Option<&str> {
        self.builtins.get(receiver).map(String::as_str)
    }

    pub fn feature_domain(&self, feature: &str) -> Option<FeatureDomain> {
        self.environment.get(feature).copied()
    }

    /// Integer bounds of an attribute: explicit min/max, else its feature's domain.
    pub fn attribute_bounds(&self, spec: &AttributeSpec) -> Option<(i64, i64)> {
        let fd = spec.feature.as_deref().and_then(|f| self.feature_domain(f));
        let lo = spec.min.or(fd.map(|d| d.min))?;
        let hi = spec.max.or(fd.map(|d| d.max))?;
        Some((lo, hi))
    }

    /// Whether two commands on one device of `capability` contradict.
    /// `params_*` hold the concrete parameter values where known.
    pub fn contradicts(
        &self,
        capability: &str,
        cmd_a: &str,
        params_a: &[Option<Value>],
        cmd_b: &str,
        params_b: &[Option<Value>],
    ) -> bool {
        self.contradictions.iter().filter(|c| c.capability == capability).any(|c| {
            if let Some([x, y]) = &c.opposite {
                return (x == cmd_a && y == cmd_b) || (x == cmd_b && y == cmd_a);
            }
            match &c.param_clash {
                Some(cmd) if cmd == cmd_a && cmd == cmd_b => params_differ(params_a, params_b),
                _ => false,
            }
        })
    }

    /// Goal-effect row for a command: total over goal features, `#` by default.
    pub fn goal_effect(&self, capability: &str, command: &str) -> BTreeMap<String, Sign> {
        let mut row: BTreeMap<String, Sign> = self.goal_features.iter().map(|f| (f.clone(), Sign::Neutral)).collect();
        let Some(cap) = self.capability(capability) else { return row };
        if cap.is_virtual {
            return row;
        }
        if let Some(spec) = cap.commands.get(command) {
            for ch in &spec.channels {
                row.insert(ch.feature.clone(), ch.direction.sign());
            }
            for (f, s) in &spec.goal_effects {
                row.insert(f.clone(), *s);
            }
        }
        row
    }

    /// Environment channels of a command; setpoints are filled from `params`
    /// by position when the channel names a setpoint parameter.
    pub fn channel_effects(&self, capability: &str, command: &str, params: &[Option<Value>]) -> Vec<ChannelEffect> {
        let Some(spec) = self.command(capability, command) else { return Vec::new() };
        spec.channels
            .iter()
            .map(|ch| ChannelEffect {
                feature: ch.feature.clone(),
                direction: ch.direction,
                setpoint: ch
                    .setpoint
                    .as_ref()
                    .and_then(|p| spec.params.iter().position(|ps| &ps.name == p))
                    .and_then(|i| params.get(i).cloned().flatten()),
            })
            .collect()
    }

    /// Index of a command parameter by name.
    pub fn param_index(&self, capability: &str, command: &str, param: &str) -> Option<usize> {
        self.command(capability, command)?.params.iter().position(|p| p.name == param)
    }
}

// Unknown parameters cannot be shown to agree, so they count as differing.
fn params_differ(a: &[Option<Value>], b: &[Option<Value>]) -> bool {
    a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.is_none() || y.is_none() || x != y)
}

fn validate_capability(
    cap: &CapabilityEntry,
    goal_features: &[String],
    environment: &BTreeMap<String, FeatureDomain>,
) -> Result<(), CatalogError> {
    let bad = |m: String| Err(CatalogError::SchemaViolation(m));
    for (name, a) in &cap.attributes {
        if let Some(f) = &a.feature {
            if !environment.contains_key(f) {
                return Err(CatalogError::DanglingFeature {
                    feature: f.clone(),
                    context: format!("attribute `{}.{name}`", cap.name),
                });
            }
        }
        if let Some(vals) = &a.values {
            if vals.is_empty() || a.sort != Sort::Str {
                return bad(format!(
                    "attribute `{}.{name}` enum values need sort string and at least one value",
                    cap.name
                ));
            }
        }
        if let (Some(lo), Some(hi)) = (a.min, a.max) {
            if lo > hi {
                return bad(format!("attribute `{}.{name}` has min > max", cap.name));
            }
        }
    }
    for (cname, cmd) in &cap.commands {
        let ctx = format!("command `{}.{cname}`", cap.name);
        if let Some(se) = &cmd.self_effect {
            let Some(attr) = cap.attributes.get(&se.attribute) else {
                return bad(format!("{ctx} self effect names unknown attribute `{}`", se.attribute));
            };
            match (&se.value, &se.param) {
                (Some(v), None) => {
                    if v.sort() != attr.sort {
                        return bad(format!("{ctx} self effect value has the wrong sort"));
                    }
                }
                (None, Some(p)) => {
                    if !cmd.params.iter().any(|ps| &ps.name == p) {
                        return bad(format!("{ctx} self effect names unknown parameter `{p}`"));
                    }
                }
                _ => return bad(format!("{ctx} self effect needs exactly one of value/param")),
            }
        }
        if cap.is_virtual && (!cmd.channels.is_empty() || cmd.goal_effects.values().any(|s| *s != Sign::Neutral)) {
            return bad(format!("{ctx} is on a virtual capability and cannot carry goal effects"));
        }
        for ch in &cmd.channels {
            if !goal_features.contains(&ch.feature) {
                return Err(CatalogError::DanglingFeature { feature: ch.feature.clone(), context: ctx.clone() });
            }
            if let Some(p) = &ch.setpoint {
                if !cmd.params.iter().any(|ps| &ps.name == p && ps.sort == Sort::Int) {
                    return bad(format!("{ctx} channel setpoint `{p}` is not an integer parameter"));
                }
            }
            if let Some(s) = cmd.goal_effects.get(&ch.feature) {
                if *s != ch.direction.sign() {
                    return bad(format!("{ctx} goal effect on `{}` disagrees with its channel", ch.feature));
                }
            }
        }
        for f in cmd.goal_effects.keys() {
            if !goal_features.contains(f) {
                return Err(CatalogError::DanglingFeature { feature: f.clone(), context: ctx.clone() });
            }
        }
    }
    Ok(())
}
