mod common;

use std::collections::BTreeMap;

use cai_core::config::{parse_config_uri, Configuration, DeviceId};
use cai_core::value::Value;
use common::fixture_dir;
use proptest::prelude::*;

#[test]
fn listing_shape() {
    let uri = "http://my.com/appname:ComfortTV/tv1:0e0b4c1e-2a7f-4d4e-9a53-8c1f7b2e741b/threshold1:30/";
    let c = parse_config_uri(uri).unwrap();
    assert_eq!(c.app_name, "ComfortTV");
    assert_eq!(c.device_bindings["tv1"].as_str(), "0e0b4c1e2a7f4d4e9a538c1f7b2e741b");
    assert_eq!(c.value_bindings["threshold1"], Value::Int(30));
    assert_eq!(c.device_bindings.len(), 1);
    assert_eq!(c.value_bindings.len(), 1);
}

#[test]
fn literal_kinds() {
    let c = parse_config_uri(
        "https://example.org/appname:A/n:-4/b:true/s:I%20am%20home/h:ABCDEF0123456789abcdef0123456789/",
    )
    .unwrap();
    assert_eq!(c.value_bindings["n"], Value::Int(-4));
    assert_eq!(c.value_bindings["b"], Value::Bool(true));
    assert_eq!(c.value_bindings["s"], Value::Str("I am home".into()));
    assert_eq!(c.device_bindings["h"].as_str(), "abcdef0123456789abcdef0123456789");
}

#[test]
fn adversarial_uris_are_rejected() {
    let text = std::fs::read_to_string(fixture_dir("adversarial").join("uris.tsv")).unwrap();
    let mut n = 0;
    for line in text.lines().filter(|l| !l.starts_with('#')) {
        let (code, uri) = line.split_once('\t').unwrap();
        let err = parse_config_uri(uri).expect_err(uri);
        assert_eq!(err.code(), code, "{uri}");
        n += 1;
    }
    assert!(n >= 20);
}

fn value() -> impl Strategy<Value = Value> {
    prop_oneof![
        any::<i64>().prop_map(Value::Int),
        any::<bool>().prop_map(Value::Bool),
        "[^\u{0}-\u{1f}]{1,12}"
            .prop_filter("reads back as a string", |s| matches!(Value::parse_literal(s), Value::Str(_))
                && DeviceId::parse(s).is_none())
            .prop_map(Value::Str),
    ]
}

proptest! {
    #[test]
    fn configurations_round_trip(
        app in "[A-Za-z][A-Za-z0-9]{0,10}",
        devices in prop::collection::btree_map("d[a-z0-9_]{0,6}", prop::array::uniform16(any::<u8>()), 0..4),
        values in prop::collection::btree_map("v[a-z0-9_]{0,6}", value(), 0..4),
    ) {
        let c = Configuration {
            app_name: app,
            device_bindings: devices
                .into_iter()
                .map(|(k, b)| (k, DeviceId::parse(&hex::encode(b)).unwrap()))
                .collect::<BTreeMap<_, _>>(),
            value_bindings: values,
        };
        prop_assert_eq!(parse_config_uri(&c.to_uri("http://my.com")).unwrap(), c);
    }

    #[test]
    fn parser_never_panics(s in "\\PC{0,80}") {
        let _ = parse_config_uri(&s);
        let _ = parse_config_uri(&format!("http://my.com/appname:{s}/"));
    }
}
