mod common;

use cai_core::catalog::Catalog;
use cai_core::config::parse_config_uri;
use cai_core::detector::{detect_all, DetectOptions};
use cai_core::session::{Decision, DecisionStamp, HomeState};
use common::*;
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Op {
    /// Install and keep, optionally with a changed threshold for ComfortTV.
    Keep(usize, Option<i64>),
    Reject(usize),
}

fn op() -> impl Strategy<Value = Op> {
    let n = corpus().len();
    prop_oneof![
        3 => (0..n, prop::option::of(20i64..40)).prop_map(|(i, t)| Op::Keep(i, t)),
        1 => (0..n).prop_map(Op::Reject),
    ]
}

fn apply(home: &mut HomeState, op: &Op, t: u64) {
    let cat = Catalog::default_catalog();
    let stamp = DecisionStamp { at: t, by: "prop".into() };
    match op {
        Op::Keep(i, threshold) => {
            let (dir, name) = corpus()[*i];
            let mut app = load(dir, name);
            if let (Some(th), "ComfortTV") = (threshold, name) {
                let uri = app.config.to_uri("http://my.com").replace("threshold1:30/", &format!("threshold1:{th}/"));
                app.config = parse_config_uri(&uri).unwrap();
                app.bound = cai_core::rules::bind_configuration(&app.rules, &app.config).unwrap();
            }
            let installed = home.bound_rules(Some(name)).unwrap();
            let findings = detect_all(&app.bound.rules, &installed, &cat, &DetectOptions::default());
            home.record_install(app.rules, app.config).unwrap();
            home.record_decision(name, &findings, Decision::Keep, &stamp).unwrap();
        }
        Op::Reject(i) => {
            home.record_decision(corpus()[*i].1, &[], Decision::Reject, &stamp).unwrap();
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn state_stays_consistent_and_round_trips(ops in prop::collection::vec(op(), 1..8)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("home.json");
        let mut home = HomeState::default();
        for (t, op) in ops.iter().enumerate() {
            apply(&mut home, op, t as u64);
            prop_assert!(home.check_integrity().is_ok());
            let mut keys: Vec<_> = home.allowed.iter().map(|p| (&p.rule_a, &p.rule_b, p.kind)).collect();
            let n = keys.len();
            keys.sort();
            keys.dedup();
            prop_assert_eq!(keys.len(), n);
            home.save(&path).unwrap();
            let loaded = HomeState::load(&path).unwrap();
            prop_assert_eq!(&loaded, &home);
            prop_assert_eq!(loaded.to_json(), std::fs::read_to_string(&path).unwrap());
        }
    }
}

#[test]
fn rejects_foreign_schema() {
    let text = HomeState::default().to_json().replace("hgstate/1", "hgstate/9");
    assert_eq!(HomeState::from_json(text.as_bytes()).unwrap_err().code(), "SchemaViolation");
}
