mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use cai_core::catalog::Catalog;
use cai_core::detector::{
    ar_candidate, detect_all, detect_chains, detect_pair, DetectOptions, FindingKind, PairIndex, ThreatFinding,
};
use cai_core::rules::BoundRule;
use cai_core::session::{Decision, DecisionStamp, HomeState};
use cai_core::solver::{check_witness, oracle_solve, Outcome};
use cai_core::value::Value;
use common::*;

/// (kind, source app, target app) with apps sorted for undirected kinds.
fn summary(findings: &[ThreatFinding], apps: &BTreeMap<String, String>) -> BTreeSet<(FindingKind, String, String)> {
    findings.iter().map(|f| (f.kind, apps[&f.rules[0]].clone(), apps[&f.rules[1]].clone())).collect()
}

fn set(items: &[(FindingKind, &str, &str)]) -> BTreeSet<(FindingKind, String, String)> {
    items.iter().map(|(k, a, b)| (*k, a.to_string(), b.to_string())).collect()
}

fn detect(apps: &[&App]) -> Vec<ThreatFinding> {
    detect_all(&rules_of(apps), &[], &Catalog::default_catalog(), &DetectOptions::default())
}

fn sorted_pair(a: &str, b: &str) -> (String, String) {
    if a < b {
        (a.into(), b.into())
    } else {
        (b.into(), a.into())
    }
}

#[test]
fn canonical_five_apps() {
    let apps: Vec<App> = CANONICAL.iter().map(|n| load("canonical", n)).collect();
    let refs: Vec<&App> = apps.iter().collect();
    let start = Instant::now();
    let findings = detect(&refs);
    assert!(start.elapsed() < Duration::from_secs(5));
    let names = app_of(&refs);
    // AR is undirected, so its rule ids are sorted; ComfortTV's id sorts first.
    let ar = sorted_pair(apps[0].bound.rules[0].id(), apps[1].bound.rules[0].id());
    assert_eq!(names[&ar.0], "ComfortTV");
    assert_eq!(
        summary(&findings, &names),
        set(&[
            (FindingKind::AR, "ComfortTV", "ColdDefender"),
            (FindingKind::CT, "CatchLiveShow", "ComfortTV"),
            (FindingKind::CT, "CatchLiveShow", "ColdDefender"),
            (FindingKind::DC, "NightCare", "BurglarFinder"),
        ])
    );
    assert_eq!(findings.len(), 4);
    let ar = findings.iter().find(|f| f.kind == FindingKind::AR).unwrap();
    let w = ar.witness.as_ref().unwrap();
    assert_eq!(w["temperature"], Value::Int(31));
    assert_eq!(w["rainSensor.water"], Value::Str("wet".into()));
    let dc = findings.iter().find(|f| f.kind == FindingKind::DC).unwrap();
    assert_eq!(dc.channel.as_deref(), Some("floorLamp.switch"));
}

#[test]
fn each_pair_is_fast() {
    let cat = Catalog::default_catalog();
    let apps: Vec<App> = corpus().iter().map(|(d, n)| load(d, n)).collect();
    let rules = rules_of(&apps.iter().collect::<Vec<_>>());
    let index = PairIndex::build(&rules, &cat);
    for (i, a) in rules.iter().enumerate() {
        for b in &rules[i + 1..] {
            let start = Instant::now();
            detect_pair(a, b, &cat, &index, &DetectOptions::default());
            assert!(start.elapsed() <= Duration::from_millis(1156), "{} vs {}", a.rule.app, b.rule.app);
        }
    }
}

fn category(a: &str, b: &str) -> (Vec<ThreatFinding>, BTreeMap<String, String>) {
    let (a, b) = (load("categories", a), load("categories", b));
    let refs = [&a, &b];
    (detect(&refs), app_of(&refs))
}

fn assert_witness(f: &ThreatFinding) {
    let basis = f.basis.as_ref().expect("basis");
    let w = f.witness.as_ref().expect("witness");
    assert!(check_witness(basis, w), "{f:?}");
    assert_eq!(oracle_solve(basis).unwrap(), Outcome::Sat(w.clone()));
}

#[test]
fn goal_conflict() {
    let (f, names) = category("WarmWelcome", "BrightDay");
    assert_eq!(summary(&f, &names), set(&[(FindingKind::GC, "WarmWelcome", "BrightDay")]));
    assert_eq!(f[0].direction, None);
    assert_eq!(f[0].channel.as_deref(), Some("temperature"));
    let w = f[0].witness.as_ref().unwrap();
    assert_eq!(w["illuminance"], Value::Int(51));
    assert_eq!(w["person.presence"], Value::Str("present".into()));
    assert_witness(&f[0]);
}

#[test]
fn self_disabling() {
    let (f, names) = category("CoolOnMotion", "PowerCap");
    assert_eq!(
        summary(&f, &names),
        set(&[(FindingKind::CT, "CoolOnMotion", "PowerCap"), (FindingKind::SD, "CoolOnMotion", "PowerCap")])
    );
    let sd = f.iter().find(|f| f.kind == FindingKind::SD).unwrap();
    assert_eq!(sd.direction.as_ref().unwrap().from, sd.rules[0]);
    assert_eq!(sd.channel.as_deref(), Some("power"));
    assert_eq!(sd.witness.as_ref().unwrap()["temperature"], Value::Int(31));
    assert_witness(sd);
}

#[test]
fn loop_triggering() {
    let (f, names) = category("DuskLights", "DaylightSaver");
    assert_eq!(
        summary(&f, &names),
        set(&[
            (FindingKind::CT, "DuskLights", "DaylightSaver"),
            (FindingKind::CT, "DaylightSaver", "DuskLights"),
            (FindingKind::SD, "DuskLights", "DaylightSaver"),
            (FindingKind::SD, "DaylightSaver", "DuskLights"),
            (FindingKind::LT, "DuskLights", "DaylightSaver"),
        ])
    );
    let lt = f.iter().find(|f| f.kind == FindingKind::LT).unwrap();
    assert_eq!(lt.direction, None);
    assert!(lt.rules[0] < lt.rules[1]);
    assert_witness(lt);
}

#[test]
fn enabling_condition() {
    let a = load("categories", "BedroomLight");
    let b = load("canonical", "BurglarFinder");
    let refs = [&a, &b];
    let f = detect(&refs);
    assert_eq!(summary(&f, &app_of(&refs)), set(&[(FindingKind::EC, "BedroomLight", "BurglarFinder")]));
    let ec = &f[0];
    assert_eq!(ec.direction.as_ref().unwrap().from, a.bound.rules[0].id());
    assert_eq!(ec.channel.as_deref(), Some("floorLamp.switch"));
    let w = ec.witness.as_ref().unwrap();
    assert_eq!(w["floorLamp.switch"], Value::Str("on".into()));
    assert_eq!(w["time"], Value::Int(0));
    assert_witness(ec);
}

fn stamp() -> DecisionStamp {
    DecisionStamp { at: 1_700_000_000, by: "test".into() }
}

/// Installs `app` the way an install session does: detect against the
/// current home, then keep.
fn install_and_keep(home: &mut HomeState, app: &App) -> (Vec<ThreatFinding>, Vec<ThreatFinding>) {
    let cat = Catalog::default_catalog();
    let installed = home.bound_rules(Some(&app.rules.app)).unwrap();
    let findings = detect_all(&app.bound.rules, &installed, &cat, &DetectOptions::default());
    let lookup: BTreeMap<String, BoundRule> =
        installed.iter().chain(&app.bound.rules).map(|r| (r.id().to_string(), r.clone())).collect();
    let chains = detect_chains(&findings, &home.allowed_edges(), &lookup, &cat, 4).unwrap();
    home.record_install(app.rules.clone(), app.config.clone()).unwrap();
    home.record_decision(&app.rules.app, &findings, Decision::Keep, &stamp()).unwrap();
    (findings, chains)
}

#[test]
fn door_unlock_chain_after_keeps() {
    let apps: Vec<App> = CHAIN.iter().map(|n| load("chain", n)).collect();
    let mut home = HomeState::default();
    let (f, c) = install_and_keep(&mut home, &apps[0]);
    assert!(f.is_empty() && c.is_empty());
    let (f, c) = install_and_keep(&mut home, &apps[1]);
    assert_eq!(f.len(), 1);
    assert_eq!(f[0].kind, FindingKind::CT);
    assert!(c.is_empty());
    assert_eq!(home.allowed.len(), 1);
    let (f, c) = install_and_keep(&mut home, &apps[2]);
    assert_eq!(f.len(), 1);
    assert_eq!(c.len(), 1);
    let chain = &c[0];
    assert_eq!(chain.kind, FindingKind::CHAIN);
    let ids: Vec<&str> = apps.iter().map(|a| a.bound.rules[0].id()).collect();
    assert_eq!(chain.rules, ids);
    assert!(chain.explanation.ends_with("unlocks a door when motion is detected"), "{}", chain.explanation);
}

#[test]
fn no_chain_without_kept_edges() {
    let cat = Catalog::default_catalog();
    let apps: Vec<App> = CHAIN.iter().map(|n| load("chain", n)).collect();
    let installed = rules_of(&[&apps[0], &apps[1]]);
    let findings = detect_all(&apps[2].bound.rules, &installed, &cat, &DetectOptions::default());
    let lookup: BTreeMap<String, BoundRule> =
        rules_of(&apps.iter().collect::<Vec<_>>()).into_iter().map(|r| (r.id().to_string(), r)).collect();
    assert!(detect_chains(&findings, &[], &lookup, &cat, 4).unwrap().is_empty());
    // A chain length limit below three never reports anything.
    let all = detect(&apps.iter().collect::<Vec<_>>());
    assert_eq!(detect_chains(&all, &[], &lookup, &cat, 3).unwrap().len(), 1);
    assert!(detect_chains(&all, &[], &lookup, &cat, 2).unwrap().is_empty());
}

/// Structural invariants over every pair of rules in the fixture corpus.
#[test]
fn corpus_invariants() {
    let cat = Catalog::default_catalog();
    let opts = DetectOptions::default();
    let apps: Vec<App> = corpus().iter().map(|(d, n)| load(d, n)).collect();
    let rules = rules_of(&apps.iter().collect::<Vec<_>>());
    let index = PairIndex::build(&rules, &cat);
    let mut seen = 0;
    for (i, a) in rules.iter().enumerate() {
        for b in &rules[i + 1..] {
            let ab = detect_pair(a, b, &cat, &index, &opts);
            assert_eq!(ab, detect_pair(b, a, &cat, &index, &opts), "{} / {}", a.rule.app, b.rule.app);
            let has = |k: FindingKind, from: &str, to: &str| {
                ab.iter().any(|f| f.kind == k && f.rules[0] == from && f.rules[1] == to)
            };
            for f in &ab {
                seen += 1;
                assert!(f.involves(a.id()) && f.involves(b.id()));
                assert_eq!(f.rules.len(), 2);
                if f.kind.is_directed() {
                    let d = f.direction.as_ref().unwrap();
                    assert_eq!((&d.from, &d.to), (&f.rules[0], &f.rules[1]));
                } else {
                    assert!(f.direction.is_none());
                    assert!(f.rules[0] < f.rules[1]);
                }
                if let (Some(basis), Some(w)) = (&f.basis, &f.witness) {
                    assert!(check_witness(basis, w), "{f:?}");
                }
                let (x, y) = (&f.rules[0], &f.rules[1]);
                match f.kind {
                    FindingKind::SD => {
                        assert!(has(FindingKind::CT, x, y));
                        assert!(ar_candidate(a, b, &cat, &index));
                    }
                    FindingKind::LT => {
                        assert!(has(FindingKind::CT, x, y) && has(FindingKind::CT, y, x));
                        assert!(ar_candidate(a, b, &cat, &index));
                    }
                    FindingKind::AR | FindingKind::GC | FindingKind::CT | FindingKind::EC | FindingKind::DC => {
                        assert!(f.witness.is_some(), "{f:?}");
                    }
                    FindingKind::CHAIN | FindingKind::INDETERMINATE => panic!("unexpected {f:?}"),
                }
            }
        }
    }
    assert!(seen > 10);
}

#[test]
fn findings_serialize_without_the_basis() {
    let apps: Vec<App> = CANONICAL.iter().map(|n| load("canonical", n)).collect();
    let f = detect(&apps.iter().collect::<Vec<_>>());
    let text = serde_json::to_string(&f).unwrap();
    assert!(!text.contains("basis"));
    let back: Vec<ThreatFinding> = serde_json::from_str(&text).unwrap();
    assert_eq!(back, f);
}

#[test]
fn disabling_unification_keeps_device_level_findings() {
    let apps: Vec<App> = CANONICAL.iter().map(|n| load("canonical", n)).collect();
    let opts = DetectOptions { merge: cai_core::merge::MergeOptions { env_unification: false }, max_chain_len: 4 };
    let f = detect_all(&rules_of(&apps.iter().collect::<Vec<_>>()), &[], &Catalog::default_catalog(), &opts);
    let kinds: Vec<_> = f.iter().map(|f| f.kind).collect();
    assert_eq!(kinds, [FindingKind::AR, FindingKind::CT, FindingKind::CT, FindingKind::DC]);
    assert!(f[0].witness.as_ref().unwrap().contains_key("tSensor.temperature"));
}
