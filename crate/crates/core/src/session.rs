//! Home state: installed apps with their configurations, and the ledger of
//! interference pairs the user chose to keep.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Configuration;
use crate::detector::{Edge, FindingKind, ThreatFinding};
use crate::rules::{bind_configuration, BindError, BoundRule, BoundRuleSet, RuleSet};

pub const STATE_SCHEMA: &str = "hgstate/1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error(transparent)]
    Bind(#[from] BindError),
    #[error("finding refers to rule {0}, which is not installed")]
    StaleFinding(String),
    #[error("allowed pair refers to rule {0}, which is not installed")]
    Integrity(String),
    #[error("state file: {0}")]
    Schema(String),
    #[error("state file I/O: {0}")]
    Io(String),
}

impl SessionError {
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::Bind(e) => e.code(),
            SessionError::StaleFinding(_) => "StaleFinding",
            SessionError::Integrity(_) => "IntegrityViolation",
            SessionError::Schema(_) => "SchemaViolation",
            SessionError::Io(_) => "Io",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Keep,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AllowedPair {
    pub rule_a: String,
    pub rule_b: String,
    pub kind: FindingKind,
    /// Seconds since the Unix epoch.
    pub decided_at: u64,
    pub decided_by: String,
}

impl AllowedPair {
    pub fn edge(&self) -> Edge {
        Edge { from: self.rule_a.clone(), to: self.rule_b.clone(), kind: self.kind }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstalledApp {
    pub rules: RuleSet,
    pub configuration: Configuration,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct HomeState {
    pub schema: String,
    pub installed_apps: BTreeMap<String, InstalledApp>,
    pub allowed: Vec<AllowedPair>,
}

impl Default for HomeState {
    fn default() -> Self {
        HomeState { schema: STATE_SCHEMA.to_string(), installed_apps: BTreeMap::new(), allowed: Vec::new() }
    }
}

/// Who decided and when; recorded on every kept pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionStamp {
    pub at: u64,
    pub by: String,
}

impl HomeState {
    pub fn from_json(bytes: &[u8]) -> Result<HomeState, SessionError> {
        let s: HomeState = serde_json::from_slice(bytes).map_err(|e| SessionError::Schema(e.to_string()))?;
        if s.schema != STATE_SCHEMA {
            return Err(SessionError::Schema(format!("expected schema `{STATE_SCHEMA}`, found `{}`", s.schema)));
        }
        for (name, app) in &s.installed_apps {
            if *name != app.rules.app || *name != app.configuration.app_name {
                return Err(SessionError::Schema(format!("entry `{name}` holds a different app")));
            }
        }
        s.check_integrity()?;
        Ok(s)
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("state serializes");
        s.push('\n');
        s
    }

    /// Loads a state file; a missing file is an empty home.
    pub fn load(path: &Path) -> Result<HomeState, SessionError> {
        match std::fs::read(path) {
            Ok(bytes) => HomeState::from_json(&bytes),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(HomeState::default()),
            Err(e) => Err(SessionError::Io(e.to_string())),
        }
    }

    /// Writes to a temporary file next to `path`, then renames it over `path`.
    pub fn save(&self, path: &Path) -> Result<(), SessionError> {
        let io = |e: std::io::Error| SessionError::Io(e.to_string());
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
        tmp.write_all(self.to_json().as_bytes()).map_err(io)?;
        tmp.as_file().sync_all().map_err(io)?;
        tmp.persist(path).map_err(|e| io(e.error))?;
        Ok(())
    }

    pub fn bound_app(&self, name: &str) -> Option<Result<BoundRuleSet, BindError>> {
        self.installed_apps.get(name).map(|a| bind_configuration(&a.rules, &a.configuration))
    }

    /// Bound rules of every installed app except `skip`, in app-name order.
    pub fn bound_rules(&self, skip: Option<&str>) -> Result<Vec<BoundRule>, SessionError> {
        let mut out = Vec::new();
        for (name, app) in &self.installed_apps {
            if Some(name.as_str()) != skip {
                out.extend(bind_configuration(&app.rules, &app.configuration)?.rules);
            }
        }
        Ok(out)
    }

    pub fn rule_ids(&self) -> Result<BTreeSet<String>, SessionError> {
        Ok(self.bound_rules(None)?.iter().map(|r| r.id().to_string()).collect())
    }

    pub fn check_integrity(&self) -> Result<(), SessionError> {
        let ids = self.rule_ids()?;
        for p in &self.allowed {
            for r in [&p.rule_a, &p.rule_b] {
                if !ids.contains(r) {
                    return Err(SessionError::Integrity(r.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn allowed_edges(&self) -> Vec<Edge> {
        self.allowed.iter().map(AllowedPair::edge).collect()
    }

    /// Installs or re-installs an app. Identical content is a no-op; changed
    /// content replaces the entry and drops allowed pairs whose rules vanished.
    pub fn record_install(&mut self, rules: RuleSet, config: Configuration) -> Result<(), SessionError> {
        bind_configuration(&rules, &config)?;
        let entry = InstalledApp { rules, configuration: config };
        let name = entry.rules.app.clone();
        if self.installed_apps.get(&name) == Some(&entry) {
            return Ok(());
        }
        self.installed_apps.insert(name, entry);
        let ids = self.rule_ids()?;
        self.allowed.retain(|p| ids.contains(&p.rule_a) && ids.contains(&p.rule_b));
        self.check_integrity()
    }

    /// Keep appends one allowed pair per pairwise finding; reject removes `app`.
    pub fn record_decision(
        &mut self,
        app: &str,
        findings: &[ThreatFinding],
        decision: Decision,
        stamp: &DecisionStamp,
    ) -> Result<(), SessionError> {
        match decision {
            Decision::Reject => {
                self.installed_apps.remove(app);
                let ids = self.rule_ids()?;
                self.allowed.retain(|p| ids.contains(&p.rule_a) && ids.contains(&p.rule_b));
            }
            Decision::Keep => {
                let ids = self.rule_ids()?;
                for f in findings {
                    if let Some(r) = f.rules.iter().find(|r| !ids.contains(*r)) {
                        return Err(SessionError::StaleFinding(r.clone()));
                    }
                }
                for f in findings.iter().filter(|f| f.rules.len() == 2 && f.kind != FindingKind::CHAIN) {
                    let (a, b) = (&f.rules[0], &f.rules[1]);
                    let known = self.allowed.iter().any(|p| p.rule_a == *a && p.rule_b == *b && p.kind == f.kind);
                    if !known {
                        self.allowed.push(AllowedPair {
                            rule_a: a.clone(),
                            rule_b: b.clone(),
                            kind: f.kind,
                            decided_at: stamp.at,
                            decided_by: stamp.by.clone(),
                        });
                    }
                }
            }
        }
        self.check_integrity()
    }
}
