use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cai_core::catalog::Catalog;
use cai_core::detector::DetectOptions;
use cai_service::cache::RuleCache;
use cai_service::pipeline::Analyzer;

fn fixture(dir: &str, file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(dir).join(file)
}

fn cai(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cai")).args(args).current_dir(cwd).env_remove("HG_CATALOG").output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn analyze(app: &str, home: &Path, cwd: &Path) -> (Output, String) {
    let hgl = fixture("canonical", &format!("{app}.hgl"));
    let uri = fixture("canonical", &format!("{app}.uri"));
    let out = cai(&["analyze", s(&hgl), "--config", s(&uri), "--home", s(home)], cwd);
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    let id = stderr.lines().find_map(|l| l.strip_prefix("pending decision: ")).unwrap_or_default().to_string();
    (out, id)
}

#[test]
fn exit_codes_follow_the_findings() {
    let dir = tempfile::tempdir().unwrap();
    let home = dir.path().join("home.json");

    let (out, id) = analyze("ColdDefender", &home, dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(cai(&["decide", &id, "keep", "--home", s(&home)], dir.path()).status.code(), Some(0));
    assert!(home.exists());

    let (out, id) = analyze("ComfortTV", &home, dir.path());
    assert_eq!(out.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["findings"][0]["kind"], "AR");

    // Pending: another analyze is refused.
    let (out, _) = analyze("NightCare", &home, dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pending"));

    assert_eq!(cai(&["decide", &id, "reject", "--home", s(&home)], dir.path()).status.code(), Some(0));
    assert_eq!(cai(&["decide", &id, "reject", "--home", s(&home)], dir.path()).status.code(), Some(1));

    let broken = dir.path().join("Broken.hgl");
    std::fs::write(&broken, "app Broken {").unwrap();
    let out = cai(&["analyze", s(&broken), "--config", "http://h/appname:Broken/", "--home", s(&home)], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn extract_writes_the_golden_rule_file() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("out.json");
    let hgl = fixture("canonical", "ComfortTV.hgl");
    let uri = fixture("canonical", "ComfortTV.uri");
    let out = cai(&["extract", s(&hgl), "--config", s(&uri), "-o", s(&out_path)], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let golden = std::fs::read_to_string(fixture("canonical", "ComfortTV.rules.json")).unwrap();
    assert_eq!(std::fs::read_to_string(out_path).unwrap(), golden);

    let bad = cai(&["extract", s(&fixture("adversarial", "SensorCommand.hgl"))], dir.path());
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("UnknownCommand"));
}

#[test]
fn reports_are_reproducible() {
    let mut reports = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let home = dir.path().join("home.json");
        let (_, id) = analyze("ColdDefender", &home, dir.path());
        cai(&["decide", &id, "keep", "--home", s(&home)], dir.path());
        let (out, id) = analyze("ComfortTV", &home, dir.path());
        reports.push((out.stdout, id));
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn cache_returns_what_extraction_produced() {
    let dir = tempfile::tempdir().unwrap();
    let src = std::fs::read_to_string(fixture("canonical", "BurglarFinder.hgl")).unwrap();
    let plain = Analyzer::new(Catalog::default_catalog(), DetectOptions::default(), None);
    let cached = Analyzer::new(Catalog::default_catalog(), DetectOptions::default(), Some(RuleCache::new(dir.path())));
    let expected = plain.extract(&src).unwrap();
    assert_eq!(cached.extract(&src).unwrap(), expected);
    let entries: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(entries.len(), 1);
    assert_eq!(cached.extract(&src).unwrap(), expected);

    // A different catalog text gives a different key.
    let key = RuleCache::key(&src, &Catalog::default_catalog().to_json_string());
    assert_ne!(key, RuleCache::key(&src, "{}"));
    assert_ne!(key, RuleCache::key(&format!("{src} "), &Catalog::default_catalog().to_json_string()));

    // A corrupt entry is a miss, not an error.
    std::fs::write(entries[0].as_ref().unwrap().path(), "garbage").unwrap();
    assert_eq!(cached.extract(&src).unwrap(), expected);
}
