#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use cai_core::catalog::Catalog;
use cai_core::config::{parse_config_uri, Configuration};
use cai_core::lang::{self, SourceUnit};
use cai_core::rules::{bind_configuration, BoundRule, BoundRuleSet, RuleSet};
use cai_core::symex::extract_rules;

pub fn fixture_dir(dir: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(dir)
}

pub struct App {
    pub unit: SourceUnit,
    pub rules: RuleSet,
    pub config: Configuration,
    pub bound: BoundRuleSet,
}

pub fn source(dir: &str, app: &str) -> String {
    std::fs::read_to_string(fixture_dir(dir).join(format!("{app}.hgl"))).unwrap()
}

pub fn load(dir: &str, app: &str) -> App {
    let cat = Catalog::default_catalog();
    let unit = lang::parse(&source(dir, app)).unwrap();
    assert!(lang::validate(&unit, &cat).is_empty(), "{app} does not validate");
    let rules = extract_rules(&unit, &cat).unwrap();
    let uri = std::fs::read_to_string(fixture_dir(dir).join(format!("{app}.uri"))).unwrap();
    let config = parse_config_uri(uri.trim()).unwrap();
    let bound = bind_configuration(&rules, &config).unwrap();
    App { unit, rules, config, bound }
}

pub const CANONICAL: [&str; 5] = ["ComfortTV", "ColdDefender", "CatchLiveShow", "BurglarFinder", "NightCare"];
pub const CATEGORIES: [&str; 7] =
    ["WarmWelcome", "BrightDay", "CoolOnMotion", "PowerCap", "DuskLights", "DaylightSaver", "BedroomLight"];
pub const CHAIN: [&str; 3] = ["CurlingIron", "SwitchChangesMode", "MakeItSo"];

/// Every bindable fixture app with its directory.
pub fn corpus() -> Vec<(&'static str, &'static str)> {
    let mut v: Vec<_> = CANONICAL.iter().map(|a| ("canonical", *a)).collect();
    v.extend(CATEGORIES.iter().map(|a| ("categories", *a)));
    v.extend(CHAIN.iter().map(|a| ("chain", *a)));
    v
}

/// Every `.hgl` file under the fixture tree, including adversarial ones.
pub fn all_sources() -> Vec<(String, String)> {
    let mut out = Vec::new();
    for dir in ["canonical", "categories", "chain", "adversarial"] {
        let mut paths: Vec<_> = std::fs::read_dir(fixture_dir(dir))
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|e| e == "hgl"))
            .collect();
        paths.sort();
        for p in paths {
            out.push((p.file_stem().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap()));
        }
    }
    out
}

pub fn rules_of(apps: &[&App]) -> Vec<BoundRule> {
    apps.iter().flat_map(|a| a.bound.rules.iter().cloned()).collect()
}

/// Rule id to app name.
pub fn app_of(apps: &[&App]) -> BTreeMap<String, String> {
    rules_of(apps).iter().map(|r| (r.id().to_string(), r.rule.app.clone())).collect()
}
