//! From app source and configuration to a threat report.

use std::collections::{BTreeMap, BTreeSet};

use cai_core::catalog::Catalog;
use cai_core::config::Configuration;
use cai_core::detector::{detect_all, detect_chains, DetectOptions, FindingKind, ThreatFinding};
use cai_core::lang;
use cai_core::rules::{bind_configuration, render_rule, BoundRule, RuleSet};
use cai_core::session::HomeState;
use cai_core::symex::extract_rules;
use serde::{Deserialize, Serialize};

use crate::cache::RuleCache;

pub const REPORT_SCHEMA: &str = "hgthreat/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: String,
    pub code: String,
    pub message: String,
}

impl StageError {
    fn new(stage: &str, code: impl Into<String>, message: impl Into<String>) -> Self {
        StageError { stage: stage.into(), code: code.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleCard {
    pub id: String,
    pub app: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ThreatReport {
    pub schema: String,
    pub app: String,
    pub rendered_rules: Vec<String>,
    /// Every rule a finding or chain refers to, new ones first.
    pub rules: Vec<RuleCard>,
    pub findings: Vec<ThreatFinding>,
    pub chains: Vec<ThreatFinding>,
    pub pending_decision_ids: Vec<String>,
    pub errors: Vec<StageError>,
}

impl ThreatReport {
    fn empty(app: &str) -> ThreatReport {
        ThreatReport {
            schema: REPORT_SCHEMA.into(),
            app: app.into(),
            rendered_rules: Vec::new(),
            rules: Vec::new(),
            findings: Vec::new(),
            chains: Vec::new(),
            pending_decision_ids: Vec::new(),
            errors: Vec::new(),
        }
    }

    pub fn has_findings(&self) -> bool {
        !self.findings.is_empty() || !self.chains.is_empty()
    }

    /// Errors that stopped the pipeline before detection.
    pub fn is_failed(&self) -> bool {
        self.errors.iter().any(|e| !matches!(e.stage.as_str(), "detect" | "chains"))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Outcome of analysing one app against a home.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub report: ThreatReport,
    /// Extracted rules and configuration, present when binding succeeded.
    pub candidate: Option<(RuleSet, Configuration)>,
}

#[derive(Debug, Clone)]
pub struct Analyzer {
    pub catalog: Catalog,
    pub options: DetectOptions,
    pub cache: Option<RuleCache>,
}

impl Analyzer {
    pub fn new(catalog: Catalog, options: DetectOptions, cache: Option<RuleCache>) -> Analyzer {
        Analyzer { catalog, options, cache }
    }

    /// Parse, validate and extract, going through the cache when there is one.
    pub fn extract(&self, source: &str) -> Result<RuleSet, Vec<StageError>> {
        let key = self.cache.as_ref().map(|_| RuleCache::key(source, &self.catalog.to_json_string()));
        if let (Some(c), Some(k)) = (&self.cache, &key) {
            if let Some(hit) = c.get(k) {
                return Ok(hit);
            }
        }
        let diag = |stage: &str, d: &lang::Diagnostic| {
            StageError::new(
                stage,
                d.code.to_string(),
                format!("{}:{}: {}", d.location.start.line, d.location.start.col, d.message),
            )
        };
        let unit = lang::parse(source).map_err(|ds| ds.iter().map(|d| diag("parse", d)).collect::<Vec<_>>())?;
        let errors: Vec<StageError> =
            lang::validate(&unit, &self.catalog).iter().filter(|d| d.is_error()).map(|d| diag("validate", d)).collect();
        if !errors.is_empty() {
            return Err(errors);
        }
        let rules = extract_rules(&unit, &self.catalog).map_err(|e| {
            let code = match e {
                cai_core::symex::SymexError::PathBudgetExceeded(_) => "PathBudgetExceeded",
                cai_core::symex::SymexError::UnknownFunction(_) => "UnknownFunction",
                cai_core::symex::SymexError::UnknownReceiver(_) => "UnknownReceiver",
            };
            vec![StageError::new("extract", code, e.to_string())]
        })?;
        if let (Some(c), Some(k)) = (&self.cache, &key) {
            c.put(k, &rules);
        }
        Ok(rules)
    }

    /// Runs the full pipeline for a new app against the apps installed in
    /// `home`. A re-installed app is compared against the others only.
    pub fn analyze(&self, source: &str, config: &Configuration, home: &HomeState) -> Analysis {
        let mut report = ThreatReport::empty(&config.app_name);
        let rules = match self.extract(source) {
            Ok(r) => r,
            Err(errors) => {
                report.errors = errors;
                return Analysis { report, candidate: None };
            }
        };
        report.app = rules.app.clone();
        report.rendered_rules = rules.rules.iter().map(render_rule).collect();
        let bound = match bind_configuration(&rules, config) {
            Ok(b) => b,
            Err(e) => {
                report.errors.push(StageError::new("bind", e.code(), e.to_string()));
                return Analysis { report, candidate: None };
            }
        };
        report.rendered_rules = bound.rules.iter().map(|r| render_rule(&r.rule)).collect();
        let installed = match home.bound_rules(Some(&rules.app)) {
            Ok(r) => r,
            Err(e) => {
                report.errors.push(StageError::new("bind", e.code(), format!("installed app: {e}")));
                return Analysis { report, candidate: None };
            }
        };
        let findings = detect_all(&bound.rules, &installed, &self.catalog, &self.options);
        for f in findings.iter().filter(|f| f.kind == FindingKind::INDETERMINATE) {
            report.errors.push(StageError::new("detect", "Indeterminate", f.explanation.clone()));
        }
        let lookup: BTreeMap<String, BoundRule> =
            bound.rules.iter().chain(&installed).map(|r| (r.id().to_string(), r.clone())).collect();
        // Edges of installed apps other than the one being replaced.
        let allowed: Vec<_> = home
            .allowed_edges()
            .into_iter()
            .filter(|e| lookup.contains_key(&e.from) && lookup.contains_key(&e.to))
            .collect();
        let chains = if self.options.max_chain_len >= 3 {
            match detect_chains(&findings, &allowed, &lookup, &self.catalog, self.options.max_chain_len) {
                Ok(c) => c,
                Err(e) => {
                    report.errors.push(StageError::new("chains", "ChainBudgetExceeded", e.to_string()));
                    Vec::new()
                }
            }
        } else {
            Vec::new()
        };
        let mut cards: Vec<RuleCard> = bound
            .rules
            .iter()
            .map(|r| RuleCard { id: r.id().to_string(), app: r.rule.app.clone(), text: render_rule(&r.rule) })
            .collect();
        let mut shown: BTreeSet<String> = cards.iter().map(|c| c.id.clone()).collect();
        for id in findings.iter().chain(&chains).flat_map(|f| f.rules.iter()) {
            if shown.insert(id.clone()) {
                let r = &lookup[id];
                cards.push(RuleCard { id: id.clone(), app: r.rule.app.clone(), text: render_rule(&r.rule) });
            }
        }
        report.rules = cards;
        report.findings = findings;
        report.chains = chains;
        Analysis { report, candidate: Some((rules, config.clone())) }
    }
}
