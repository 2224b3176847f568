use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use cai_core::catalog::Catalog;
use cai_core::detector::DetectOptions;
use cai_service::http::{router, AppState};
use cai_service::install::InstallSession;
use cai_service::pipeline::Analyzer;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn fixture(dir: &str, app: &str, ext: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(dir).join(format!("{app}.{ext}"));
    std::fs::read_to_string(p).unwrap().trim_end().to_string()
}

fn install_body(dir: &str, app: &str) -> Value {
    json!({ "appSource": fixture(dir, app, "hgl"), "configUri": fixture(dir, app, "uri") })
}

struct Home {
    _dir: tempfile::TempDir,
    path: PathBuf,
    app: axum::Router,
}

fn home() -> Home {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("home.json");
    let session = InstallSession::open(&path).unwrap();
    let analyzer = Analyzer::new(Catalog::default_catalog(), DetectOptions::default(), None);
    let app = router(Arc::new(AppState { analyzer, session: tokio::sync::Mutex::new(session) }));
    Home { _dir: dir, path, app }
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn install_and_keep(app: &axum::Router, dir: &str, name: &str) -> Value {
    let (status, report) = call(app, "POST", "/install", Some(install_body(dir, name))).await;
    assert_eq!(status, StatusCode::OK, "{report}");
    let id = report["pendingDecisionIds"][0].as_str().unwrap().to_string();
    let (status, ack) = call(app, "POST", "/decision", Some(json!({ "decisionId": id, "choice": "keep" }))).await;
    assert_eq!(status, StatusCode::OK, "{ack}");
    report
}

fn kinds(report: &Value) -> Vec<String> {
    let mut k: Vec<String> =
        report["findings"].as_array().unwrap().iter().map(|f| f["kind"].as_str().unwrap().to_string()).collect();
    k.sort();
    k
}

#[tokio::test]
async fn install_keep_and_reject() {
    let h = home();
    let first = install_and_keep(&h.app, "canonical", "ColdDefender").await;
    assert!(kinds(&first).is_empty());
    let second = install_and_keep(&h.app, "canonical", "CatchLiveShow").await;
    assert_eq!(kinds(&second), ["CT"]);
    let (_, summary) = call(&h.app, "GET", "/home", None).await;
    assert_eq!(summary["allowedCount"], 1);

    let (status, report) = call(&h.app, "POST", "/install", Some(install_body("canonical", "ComfortTV"))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(report["schema"], "hgthreat/1");
    assert_eq!(kinds(&report), ["AR", "CT"]);
    let own: Vec<_> = report["rules"].as_array().unwrap().iter().filter(|c| c["app"] == "ComfortTV").collect();
    assert_eq!(own.len(), 1);
    assert_eq!(own[0]["id"], "5dff94e6ce82fb7d");
    assert!(report["chains"].as_array().unwrap().is_empty());
    let id = report["pendingDecisionIds"][0].as_str().unwrap().to_string();

    // A second install waits for the first decision.
    let (status, err) = call(&h.app, "POST", "/install", Some(install_body("canonical", "NightCare"))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["error"]["code"], "PendingSession");

    let (status, stored) = call(&h.app, "GET", &format!("/report/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(stored, report);

    let before = std::fs::read(&h.path).unwrap();
    let (status, ack) = call(&h.app, "POST", "/decision", Some(json!({ "decisionId": id, "choice": "reject" }))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ack["allowedCount"], 1);
    assert_eq!(std::fs::read(&h.path).unwrap(), before);

    let (status, err) = call(&h.app, "POST", "/decision", Some(json!({ "decisionId": id, "choice": "keep" }))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["error"]["code"], "UnknownDecisionId");

    // Keeping it this time records both pairwise findings.
    let (_, again) = call(&h.app, "POST", "/install", Some(install_body("canonical", "ComfortTV"))).await;
    let id = again["pendingDecisionIds"][0].as_str().unwrap().to_string();
    let (status, ack) =
        call(&h.app, "POST", "/decision", Some(json!({ "decisionId": id, "choice": "keep", "decidedBy": "tester" })))
            .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ack["allowedCount"], 3);
    assert_eq!(ack["installedApps"], json!(["CatchLiveShow", "ColdDefender", "ComfortTV"]));
    let (_, summary) = call(&h.app, "GET", "/home", None).await;
    assert!(summary["allowed"].as_array().unwrap().iter().any(|p| p["decidedBy"] == "tester"));
    assert_eq!(summary["pendingDecisionId"], Value::Null);

    let (status, file) = call(&h.app, "GET", "/rules/ComfortTV", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(file["rules"][0]["id"], "5dff94e6ce82fb7d");
    let (status, err) = call(&h.app, "GET", "/rules/Nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["error"]["code"], "UnknownApp");
}

#[tokio::test]
async fn state_survives_reopening() {
    let h = home();
    install_and_keep(&h.app, "canonical", "ColdDefender").await;
    let (_, report) = call(&h.app, "POST", "/install", Some(install_body("canonical", "ComfortTV"))).await;
    let reopened = InstallSession::open(&h.path).unwrap();
    assert_eq!(reopened.pending_id(), report["pendingDecisionIds"][0].as_str());
    assert_eq!(reopened.state().installed_apps.keys().collect::<Vec<_>>(), ["ColdDefender"]);
}

#[tokio::test]
async fn malformed_source_is_reported_without_a_pending_decision() {
    let h = home();
    let body =
        json!({ "appSource": "app Broken {\n  input x: capability.switch\n", "configUri": "http://h/appname:Broken/" });
    let (status, report) = call(&h.app, "POST", "/install", Some(body)).await;
    assert_eq!(status, StatusCode::OK);
    let errors = report["errors"].as_array().unwrap();
    assert!(!errors.is_empty());
    assert!(errors.iter().all(|e| e["stage"] == "parse"));
    assert!(report["pendingDecisionIds"].as_array().unwrap().is_empty());
    let (_, summary) = call(&h.app, "GET", "/home", None).await;
    assert_eq!(summary["pendingDecisionId"], Value::Null);
}

#[tokio::test]
async fn bad_requests() {
    let h = home();
    let mut both = install_body("canonical", "NightCare");
    both["config"] = json!({ "appName": "NightCare" });
    let (status, err) = call(&h.app, "POST", "/install", Some(both)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["error"]["code"], "InvalidRequest");

    let body = json!({ "appSource": fixture("canonical", "NightCare", "hgl") });
    let (status, _) = call(&h.app, "POST", "/install", Some(body)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let body = json!({ "appSource": "", "configUri": "http://h/floorLamp:x/" });
    let (status, err) = call(&h.app, "POST", "/install", Some(body)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["error"]["code"], "MissingAppName");

    let (status, err) = call(&h.app, "POST", "/decision", Some(json!({ "decisionId": "x", "choice": "maybe" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["error"]["code"], "InvalidRequest");
}

#[tokio::test]
async fn configuration_as_json_matches_the_uri() {
    let a = home();
    let b = home();
    install_and_keep(&a.app, "canonical", "ColdDefender").await;
    install_and_keep(&b.app, "canonical", "ColdDefender").await;
    let cfg = cai_core::config::parse_config_uri(&fixture("canonical", "ComfortTV", "uri")).unwrap();
    let body = json!({ "appSource": fixture("canonical", "ComfortTV", "hgl"), "config": cfg });
    let (_, via_json) = call(&a.app, "POST", "/install", Some(body)).await;
    let (_, via_uri) = call(&b.app, "POST", "/install", Some(install_body("canonical", "ComfortTV"))).await;
    assert_eq!(via_json["findings"], via_uri["findings"]);
    assert_eq!(via_json["rules"], via_uri["rules"]);
}
