mod common;

use std::time::{Duration, Instant};

use cai_core::catalog::Catalog;
use cai_core::lang::{self, DiagCode};
use cai_core::rules::{self, Action, Condition, Rule, RuleFlag, RuleSet, Trigger};
use cai_core::symex::extract_rules;
use cai_core::term::{ArithOp, CmpOp, ConstraintLit, DataConstraint, Term};
use common::*;
use proptest::prelude::*;

#[test]
fn comfort_tv_matches_the_checked_in_rule_file() {
    let start = Instant::now();
    let app = load("canonical", "ComfortTV");
    let text = rules::serialize(&app.bound.to_rule_set(&app.rules));
    assert!(start.elapsed() < Duration::from_secs(2));
    let golden = std::fs::read_to_string(fixture_dir("canonical").join("ComfortTV.rules.json")).unwrap();
    assert_eq!(text, golden);
}

// Reads the golden file as plain JSON, independent of the rule types.
#[test]
fn golden_rule_has_the_expected_shape() {
    let golden = std::fs::read_to_string(fixture_dir("canonical").join("ComfortTV.rules.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&golden).unwrap();
    let rules = v["rules"].as_array().unwrap();
    assert_eq!(rules.len(), 1);
    let r = &rules[0];
    assert_eq!(r["trigger"]["subject"], "tv1");
    assert_eq!(r["trigger"]["attribute"], "switch");
    assert_eq!(r["trigger"]["constraint"], serde_json::json!(["(== (attr tv1 switch) \"on\")"]));
    assert_eq!(
        r["condition"]["predicates"],
        serde_json::json!(["(== (attr window1 switch) \"off\")", "(> (var t) (var threshold1))"])
    );
    assert_eq!(
        r["condition"]["data"],
        serde_json::json!(["(= (var t) (attr tSensor temperature))", "(= (var threshold1) 30)"])
    );
    assert_eq!(r["action"]["subject"], "window1");
    assert_eq!(r["action"]["command"], "on");
    assert_eq!(r["action"]["when"], 0);
    assert_eq!(r["action"]["period"], 0);
}

#[test]
fn comfort_tv_declares_four_inputs_and_four_functions() {
    let unit = lang::parse(&source("canonical", "ComfortTV")).unwrap();
    let inputs: Vec<_> = unit.inputs.iter().map(|i| i.name.as_str()).collect();
    assert_eq!(inputs, ["tv1", "tSensor", "threshold1", "window1"]);
    let funcs: Vec<_> = unit.functions.iter().map(|f| f.name.as_str()).collect();
    assert_eq!(funcs, ["installed", "updated", "onHandler", "turnOnWindow"]);
}

#[test]
fn canonical_renderings() {
    let expected = [
        ("ComfortTV", "WHEN tv1.switch becomes on IF tSensor.temperature > 30 AND window1.switch == off THEN window1.on()"),
        ("ColdDefender", "WHEN tv.switch becomes on IF rainSensor.water == wet THEN window.off()"),
        (
            "CatchLiveShow",
            "WHEN speaker.phraseSpoken becomes I am coming home IF clock.dayOfWeek == Thursday THEN tv.on()",
        ),
        (
            "BurglarFinder",
            "WHEN motion.motion becomes active IF clock.time < 300 AND floorLamp.switch == on THEN siren.siren() after 600s",
        ),
        (
            "NightCare",
            "WHEN floorLamp.switch becomes on IF location.mode == sleep THEN floorLamp.off() after 300s",
        ),
    ];
    for (name, text) in expected {
        let app = load("canonical", name);
        let rendered: Vec<_> = app.bound.rules.iter().map(|r| rules::render_rule(&r.rule)).collect();
        assert_eq!(rendered, [text], "{name}");
    }
}

#[test]
fn printing_then_parsing_gives_the_same_tree() {
    for (name, src) in all_sources() {
        let Ok(unit) = lang::parse(&src) else { continue };
        let printed = lang::print_unit(&unit);
        let again = lang::parse(&printed).unwrap_or_else(|d| panic!("{name}: {d:?}"));
        assert_eq!(unit, again, "{name}");
        assert_eq!(printed, lang::print_unit(&again), "{name}");
    }
}

#[test]
fn extraction_is_deterministic_and_fast() {
    let cat = Catalog::default_catalog();
    for (dir, name) in corpus() {
        let src = source(dir, name);
        let start = Instant::now();
        let unit = lang::parse(&src).unwrap();
        let a = extract_rules(&unit, &cat).unwrap();
        assert!(start.elapsed() <= Duration::from_millis(1341), "{name}");
        assert_eq!(a, extract_rules(&unit, &cat).unwrap());
        assert_eq!(lang::validate(&unit, &cat), lang::validate(&unit, &cat));
    }
}

#[test]
fn rule_files_round_trip_on_the_corpus() {
    for (dir, name) in corpus() {
        let app = load(dir, name);
        for set in [app.rules.clone(), app.bound.to_rule_set(&app.rules)] {
            let text = rules::serialize(&set);
            assert_eq!(rules::deserialize(text.as_bytes()).unwrap(), set, "{name}");
        }
    }
}

#[test]
fn indirection_does_not_hide_the_unlock() {
    let app = lang::parse(&source("adversarial", "Laundering")).unwrap();
    let cat = Catalog::default_catalog();
    assert!(lang::validate(&app, &cat).is_empty());
    let rs = extract_rules(&app, &cat).unwrap();
    let rendered: Vec<_> = rs.rules.iter().map(rules::render_rule).collect();
    assert_eq!(
        rendered,
        [
            "WHEN presence.presence becomes present IF 2 > 1 AND style == quiet THEN door.unlock()",
            "WHEN presence.presence becomes present IF style != quiet THEN door.lock()",
            "WHEN presence.presence changes to satisfy presence.presence != present IF 1 > 1 AND style == quiet THEN door.unlock() [unsatisfiable]",
            "WHEN presence.presence changes to satisfy presence.presence != present IF style != quiet THEN door.lock()",
        ]
    );
    assert_eq!(rs.rules.iter().filter(|r| r.is_flagged(RuleFlag::Unsatisfiable)).count(), 1);
}

#[test]
fn rejected_sources() {
    let cat = Catalog::default_catalog();
    let unit = lang::parse(&source("adversarial", "MutualRecursion")).unwrap();
    let codes: Vec<_> = lang::validate(&unit, &cat).iter().map(|d| d.code).collect();
    assert_eq!(codes, [DiagCode::RecursionNotSupported]);

    let unit = lang::parse(&source("adversarial", "SensorCommand")).unwrap();
    let codes: Vec<_> = lang::validate(&unit, &cat).iter().map(|d| d.code).collect();
    assert_eq!(codes, [DiagCode::UnknownCommand]);

    let src = source("adversarial", "Truncated");
    let diags = lang::parse(&src).unwrap_err();
    assert!(diags.iter().any(|d| d.is_error() && d.code == DiagCode::Syntax));
    let lines = src.lines().count() as u32 + 1;
    assert!(diags.iter().all(|d| d.location.start.line <= lines));

    assert_eq!(lang::parse("").unwrap_err()[0].code, DiagCode::MissingAppHeader);
}

fn ident() -> impl Strategy<Value = String> {
    "[a-z][a-zA-Z0-9]{0,5}"
}

fn term() -> impl Strategy<Value = Term> {
    let leaf = prop_oneof![
        any::<i64>().prop_map(Term::Int),
        "[ -~]{0,6}".prop_map(Term::Str),
        any::<bool>().prop_map(Term::Bool),
        ident().prop_map(Term::Var),
        (ident(), ident()).prop_map(|(d, a)| Term::attr(d, a)),
    ];
    leaf.prop_recursive(3, 12, 2, |inner| {
        (prop_oneof![Just(ArithOp::Add), Just(ArithOp::Sub), Just(ArithOp::Mul)], inner.clone(), inner)
            .prop_map(|(op, a, b)| Term::Arith(op, Box::new(a), Box::new(b)))
    })
}

fn lit() -> impl Strategy<Value = ConstraintLit> {
    let op = prop_oneof![
        Just(CmpOp::Eq),
        Just(CmpOp::Ne),
        Just(CmpOp::Lt),
        Just(CmpOp::Le),
        Just(CmpOp::Gt),
        Just(CmpOp::Ge)
    ];
    (term(), op, term()).prop_map(|(a, op, b)| ConstraintLit::new(a, op, b))
}

fn data() -> impl Strategy<Value = DataConstraint> {
    (ident(), term()).prop_map(|(n, t)| DataConstraint::new(Term::Var(n), t))
}

fn rule() -> impl Strategy<Value = Rule> {
    (
        (ident(), ident(), prop::collection::vec(lit(), 0..3)),
        (prop::collection::vec(data(), 0..3), prop::collection::vec(lit(), 0..3)),
        (ident(), ident(), prop::collection::vec(term(), 0..3), 0u64..10_000, 0u64..10_000),
        any::<bool>(),
    )
        .prop_map(|((ts, ta, tc), (cd, cp), (s, c, p, when, period), flagged)| {
            let mut r = Rule {
                id: String::new(),
                app: "Generated".into(),
                trigger: Trigger { subject: ts, attribute: ta, constraint: tc },
                condition: Condition { data: cd, predicates: cp },
                action: Action { subject: s, command: c, paras: p, data: vec![], when, period },
                flags: if flagged { [RuleFlag::OnUninstall].into() } else { Default::default() },
            };
            r.assign_id(None);
            r
        })
}

proptest! {
    #[test]
    fn parse_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..400)) {
        let _ = lang::parse_bytes(&bytes);
    }

    #[test]
    fn parse_never_panics_on_damaged_fixtures(idx in 0usize..100, cut in 0usize..2000, junk in "[ -~\n]{0,8}") {
        let sources = all_sources();
        let (_, src) = &sources[idx % sources.len()];
        let mut cut = cut.min(src.len());
        while !src.is_char_boundary(cut) {
            cut -= 1;
        }
        let damaged = format!("{}{junk}{}", &src[..cut], &src[cut..]);
        if let Err(d) = lang::parse(&damaged) {
            prop_assert!(!d.is_empty());
        }
    }

    #[test]
    fn generated_rule_files_round_trip(rules in prop::collection::vec(rule(), 0..4)) {
        let set = RuleSet { app: "Generated".into(), inputs: Default::default(), devices: Default::default(), rules };
        let text = rules::serialize(&set);
        prop_assert_eq!(rules::deserialize(text.as_bytes()).unwrap(), set);
    }
}
