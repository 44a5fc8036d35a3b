use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use nl2sql::critic::KnowledgeBase;
use nl2sql::fixtures;
use nl2sql::gateway::{Gateway, ScriptedGateway, ScriptedRule};
use nl2sql::pipeline::{Catalog, Gateways};
use nl2sql::{Pipeline, PipelineConfig};
use nl2sql_cli::server::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

fn echo_gateway() -> Arc<dyn Gateway> {
    Arc::new(ScriptedGateway::new(vec![
        ScriptedRule::contains("### Schema linking", "TABLES:\nsinger\nCOLUMNS:\nsinger.name\nREASONING:\nNames."),
        ScriptedRule::contains("### SQL generation", "```sql\nSELECT name FROM singer WHERE nationality = 'us'\n```"),
        ScriptedRule::contains("### SQL critic", "Answer: 1"),
    ]))
}

fn state(dir: &std::path::Path, kb_path: Option<std::path::PathBuf>) -> AppState {
    let db = fixtures::demo_db(dir).unwrap();
    let catalog: Catalog = [db].into_iter().collect();
    let cfg = PipelineConfig {
        mining: fixtures::demo_mining_config(),
        ..Default::default()
    };
    let pipeline = Pipeline::new(cfg, Gateways::single(echo_gateway()));
    AppState::new(pipeline, catalog, kb_path)
}

fn call(
    state: &AppState,
    method: &str,
    uri: &str,
    body: Option<&str>,
) -> impl std::future::Future<Output = (StatusCode, Value)> + Send + 'static {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty))
        .unwrap();
    let app = router(state.clone());
    async move {
        let resp = app.oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
        (status, value)
    }
}

#[tokio::test]
async fn health_and_databases() {
    let dir = tempfile::tempdir().unwrap();
    let s = state(dir.path(), None);
    assert_eq!(call(&s, "GET", "/v1/health", None).await, (StatusCode::OK, json!({"status": "ok"})));
    assert_eq!(call(&s, "GET", "/v1/databases", None).await, (StatusCode::OK, json!(["demo_db"])));
}

#[tokio::test]
async fn schema_card() {
    let dir = tempfile::tempdir().unwrap();
    let s = state(dir.path(), None);
    let (status, card) = call(&s, "GET", "/v1/schema/demo_db", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(card["tables"].as_array().unwrap().len(), 4);
    let (status, _) = call(&s, "GET", "/v1/schema/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn query_returns_trace() {
    let dir = tempfile::tempdir().unwrap();
    let s = state(dir.path(), None);
    let body = r#"{"question": "Names of singers from the US?", "database_id": "demo_db"}"#;
    let (status, trace) = call(&s, "POST", "/v1/query", Some(body)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(trace["chosen_sql"], "SELECT name FROM singer WHERE nationality = 'US'");
    assert_eq!(trace["verdict"]["method"], "parsed");
    assert_eq!(trace["result_rows"]["rows"], json!([["Ann"], ["Ann"]]));
    for stage in ["mining", "linking", "generation", "critic", "execution"] {
        assert!(trace["timings"].get(stage).is_some(), "missing timing {stage}");
    }
}

#[tokio::test]
async fn identical_requests_identical_traces() {
    let dir = tempfile::tempdir().unwrap();
    let s = state(dir.path(), None);
    let body = r#"{"question": "Names of singers from the US?", "database_id": "demo_db", "flags": {"use_critic": false}}"#;
    let (_, mut a) = call(&s, "POST", "/v1/query", Some(body)).await;
    let (_, mut b) = call(&s, "POST", "/v1/query", Some(body)).await;
    a.as_object_mut().unwrap().remove("timings");
    b.as_object_mut().unwrap().remove("timings");
    assert_eq!(a, b);
    assert_eq!(a["verdict"]["method"], "bypassed");
}

#[tokio::test]
async fn bad_requests() {
    let dir = tempfile::tempdir().unwrap();
    let s = state(dir.path(), None);
    for body in [
        r#"{"database_id": "demo_db"}"#,
        r#"{"question": "", "database_id": "demo_db"}"#,
        "not json",
        r#"{"question": "q", "database_id": "demo_db", "flags": {"use_magic": true}}"#,
    ] {
        let (status, v) = call(&s, "POST", "/v1/query", Some(body)).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert!(v["error"].is_string());
    }
    let (status, _) = call(&s, "POST", "/v1/query", Some(r#"{"question": "q", "database_id": "x"}"#)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn kb_ingest_persists() {
    let dir = tempfile::tempdir().unwrap();
    let kb_path = dir.path().join("kb.jsonl");
    let s = state(dir.path(), Some(kb_path.clone()));
    let body = json!({
        "database_id": "demo_db",
        "records": [
            {"question": "How many singers are there?", "good_answer": "SELECT count(*) FROM singer"},
            {"question": "Broken", "good_answer": "SELECT nosuch FROM singer"},
        ]
    })
    .to_string();
    let (status, report) = call(&s, "POST", "/v1/kb/ingest", Some(&body)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(report["added"], 1);
    assert_eq!(report["rejected"].as_array().unwrap().len(), 1);
    let kb = KnowledgeBase::load(&kb_path).unwrap();
    assert_eq!(kb.len(), 1);
    assert_eq!(kb.entries()[0].good_answer, "SELECT count(*) FROM singer");
}

#[tokio::test]
async fn concurrent_queries() {
    let dir = tempfile::tempdir().unwrap();
    let s = state(dir.path(), None);
    let body = r#"{"question": "Names of singers from the US?", "database_id": "demo_db"}"#;
    let calls = (0..8).map(|_| call(&s, "POST", "/v1/query", Some(body)));
    for (status, trace) in futures_join(calls).await {
        assert_eq!(status, StatusCode::OK);
        assert_eq!(trace["chosen_sql"], "SELECT name FROM singer WHERE nationality = 'US'");
    }
}

async fn futures_join<F: std::future::Future<Output = T> + Send + 'static, T: Send + 'static>(
    futs: impl Iterator<Item = F>,
) -> Vec<T> {
    let handles: Vec<_> = futs.map(tokio::spawn).collect();
    let mut out = Vec::new();
    for h in handles {
        out.push(h.await.unwrap());
    }
    out
}
