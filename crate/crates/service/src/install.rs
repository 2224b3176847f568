//! Install sessions: one pending app at a time, committed or discarded by a
//! single decision. The pending session is kept in a file next to the home
//! state so the CLI can analyse and decide in separate runs.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use cai_core::config::{parse_config_uri, Configuration};
use cai_core::detector::ThreatFinding;
use cai_core::rules::RuleSet;
use cai_core::session::{Decision, DecisionStamp, HomeState, SessionError};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::pipeline::{Analyzer, ThreatReport};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct InstallRequest {
    pub app_source: String,
    #[serde(default)]
    pub config_uri: Option<String>,
    #[serde(default)]
    pub config: Option<Configuration>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DecisionRequest {
    pub decision_id: String,
    pub choice: Decision,
    #[serde(default)]
    pub decided_by: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DecisionAck {
    pub decision_id: String,
    pub app: String,
    pub choice: Decision,
    pub installed_apps: Vec<String>,
    pub allowed_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HomeSummary {
    pub installed_apps: BTreeMap<String, Vec<String>>,
    pub allowed_count: usize,
    pub allowed: Vec<cai_core::session::AllowedPair>,
    pub pending_decision_id: Option<String>,
}

#[derive(Debug, Error)]
pub enum InstallError {
    #[error("request must carry exactly one of configUri and config")]
    InvalidRequest,
    #[error("configuration URI: {0}")]
    Config(#[from] cai_core::config::ConfigError),
    #[error("decision {0} is still pending")]
    PendingSession(String),
    #[error("no pending decision with id {0}")]
    UnknownDecisionId(String),
    #[error("app `{0}` is not installed")]
    UnknownApp(String),
    #[error(transparent)]
    Session(#[from] SessionError),
}

impl InstallError {
    pub fn code(&self) -> &'static str {
        match self {
            InstallError::InvalidRequest => "InvalidRequest",
            InstallError::Config(e) => e.code(),
            InstallError::PendingSession(_) => "PendingSession",
            InstallError::UnknownDecisionId(_) => "UnknownDecisionId",
            InstallError::UnknownApp(_) => "UnknownApp",
            InstallError::Session(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Pending {
    decision_id: String,
    rules: RuleSet,
    configuration: Configuration,
    findings: Vec<ThreatFinding>,
    report: ThreatReport,
}

/// Owner of one home's state file. All mutations go through `&mut self`.
#[derive(Debug)]
pub struct InstallSession {
    home_path: PathBuf,
    state: HomeState,
    pending: Option<Pending>,
    reports: BTreeMap<String, ThreatReport>,
}

fn pending_path(home: &Path) -> PathBuf {
    let mut name = home.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".pending");
    home.with_file_name(name)
}

fn write_atomic(path: &Path, text: &str) -> Result<(), SessionError> {
    let io = |e: std::io::Error| SessionError::Io(e.to_string());
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(text.as_bytes()).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn resolve_config(req: &InstallRequest) -> Result<Configuration, InstallError> {
    match (&req.config_uri, &req.config) {
        (Some(uri), None) => Ok(parse_config_uri(uri.trim())?),
        (None, Some(c)) => Ok(c.clone()),
        _ => Err(InstallError::InvalidRequest),
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl InstallSession {
    pub fn open(home_path: impl Into<PathBuf>) -> Result<InstallSession, InstallError> {
        let home_path = home_path.into();
        let state = HomeState::load(&home_path)?;
        let pending = match std::fs::read(pending_path(&home_path)) {
            Ok(bytes) => {
                Some(serde_json::from_slice::<Pending>(&bytes).map_err(|e| SessionError::Schema(e.to_string()))?)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(SessionError::Io(e.to_string()).into()),
        };
        let mut reports = BTreeMap::new();
        if let Some(p) = &pending {
            reports.insert(p.decision_id.clone(), p.report.clone());
        }
        Ok(InstallSession { home_path, state, pending, reports })
    }

    pub fn state(&self) -> &HomeState {
        &self.state
    }

    pub fn pending_id(&self) -> Option<&str> {
        self.pending.as_ref().map(|p| p.decision_id.as_str())
    }

    pub fn report(&self, id: &str) -> Option<&ThreatReport> {
        self.reports.get(id)
    }

    pub fn summary(&self) -> HomeSummary {
        let installed_apps = self
            .state
            .installed_apps
            .iter()
            .map(|(name, app)| {
                let ids = match cai_core::rules::bind_configuration(&app.rules, &app.configuration) {
                    Ok(b) => b.rules.iter().map(|r| r.id().to_string()).collect(),
                    Err(_) => Vec::new(),
                };
                (name.clone(), ids)
            })
            .collect();
        HomeSummary {
            installed_apps,
            allowed_count: self.state.allowed.len(),
            allowed: self.state.allowed.clone(),
            pending_decision_id: self.pending_id().map(str::to_string),
        }
    }

    /// Analyses the app and, when its rules bind, holds it pending a decision.
    pub fn install(&mut self, analyzer: &Analyzer, req: &InstallRequest) -> Result<ThreatReport, InstallError> {
        if let Some(id) = self.pending_id() {
            return Err(InstallError::PendingSession(id.to_string()));
        }
        let config = resolve_config(req)?;
        let analysis = analyzer.analyze(&req.app_source, &config, &self.state);
        let mut report = analysis.report;
        let Some((rules, configuration)) = analysis.candidate else {
            return Ok(report);
        };
        let mut h = Sha256::new();
        h.update(self.state.to_json().as_bytes());
        h.update(serde_json::to_vec(req).expect("request serializes"));
        let id = hex::encode(&h.finalize()[..8]);
        report.pending_decision_ids = vec![id.clone()];
        let pending = Pending {
            decision_id: id.clone(),
            rules,
            configuration,
            findings: report.findings.clone(),
            report: report.clone(),
        };
        write_atomic(&pending_path(&self.home_path), &serde_json::to_string_pretty(&pending).expect("serializes"))?;
        self.pending = Some(pending);
        self.reports.insert(id, report.clone());
        Ok(report)
    }

    /// Commits (keep) or discards (reject) the pending app. Each id is
    /// accepted once.
    pub fn decide(&mut self, req: &DecisionRequest) -> Result<DecisionAck, InstallError> {
        let pending = match &self.pending {
            Some(p) if p.decision_id == req.decision_id => p.clone(),
            _ => return Err(InstallError::UnknownDecisionId(req.decision_id.clone())),
        };
        let app = pending.rules.app.clone();
        if req.choice == Decision::Keep {
            let stamp = DecisionStamp { at: now(), by: req.decided_by.clone().unwrap_or_else(|| "homeowner".into()) };
            let mut next = self.state.clone();
            next.record_install(pending.rules, pending.configuration)?;
            next.record_decision(&app, &pending.findings, Decision::Keep, &stamp)?;
            next.save(&self.home_path)?;
            self.state = next;
        }
        match std::fs::remove_file(pending_path(&self.home_path)) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(SessionError::Io(e.to_string()).into()),
        }
        self.pending = None;
        Ok(DecisionAck {
            decision_id: req.decision_id.clone(),
            app,
            choice: req.choice,
            installed_apps: self.state.installed_apps.keys().cloned().collect(),
            allowed_count: self.state.allowed.len(),
        })
    }

    /// Bound rule file of an installed app.
    pub fn rules_of(&self, app: &str) -> Result<RuleSet, InstallError> {
        let entry = self.state.installed_apps.get(app).ok_or_else(|| InstallError::UnknownApp(app.to_string()))?;
        let bound =
            cai_core::rules::bind_configuration(&entry.rules, &entry.configuration).map_err(SessionError::from)?;
        Ok(bound.to_rule_set(&entry.rules))
    }
}
