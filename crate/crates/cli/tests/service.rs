use std::path::Path;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use snipsearch_cli::server::{router, AppState};
use tower::ServiceExt;

fn twin_payload() -> Value {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/twin_pages.json");
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, Body::from))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, b) = call(app, method, uri, body.map(|v| v.to_string())).await;
    (s, serde_json::from_slice(&b).unwrap())
}

async fn app_with_twins() -> (Router, String) {
    let app = router(AppState::default(), false);
    let (s, v) = call_json(
        &app,
        "POST",
        "/corpora",
        Some(json!({ "format": "form", "alphabet_profile": "flamingo", "payload": twin_payload() })),
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["n_pages"], 2);
    (app, v["corpus_id"].as_str().unwrap().to_string())
}

fn full_page_query(corpus_id: &str) -> Value {
    json!({
        "corpus_id": corpus_id,
        "query": { "doc_id": "form-a", "page_no": 0, "bbox": [0, 0, 612, 792] },
        "targets": "all",
        "th_sim": 0.92
    })
}

#[tokio::test]
async fn ingest_then_search_round_trip() {
    let (app, id) = app_with_twins().await;
    let (s, v) = call_json(&app, "POST", "/search", Some(full_page_query(&id))).await;
    assert_eq!(s, StatusCode::OK);
    let m = v["matches"].as_array().unwrap();
    assert_eq!(m.len(), 1);
    assert_eq!(m[0]["doc_id"], "form-b");
    assert_eq!(m[0]["score"], 1.0);
    assert_eq!(v["query_lstr"], "TTWTWTW");
}

#[tokio::test]
async fn ingesting_the_same_payload_twice_keeps_one_corpus() {
    let (app, id) = app_with_twins().await;
    let (_, v) = call_json(
        &app,
        "POST",
        "/corpora",
        Some(json!({ "format": "form", "alphabet_profile": "flamingo", "payload": twin_payload().to_string() })),
    )
    .await;
    assert_eq!(v["corpus_id"], id);
    let (_, list) = call_json(&app, "GET", "/corpora", None).await;
    assert_eq!(list.as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn page_payload_carries_rendering_data() {
    let (app, id) = app_with_twins().await;
    let (s, v) = call_json(&app, "GET", &format!("/corpora/{id}/pages/1"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["doc_id"], "form-b");
    assert_eq!(v["width"], 612.0);
    assert_eq!(v["lstr"], "TTWTWTW");
    assert_eq!(v["elements"][0]["kind"], "text");
    assert_eq!(v["elements"][0]["text"], "Applicant details");
    assert!(v["elements"][2].get("text").is_none());

    let (s, v) = call_json(&app, "GET", &format!("/corpora/{id}/pages/2"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], "unknown_page");
}

#[tokio::test]
async fn stats_describe_the_corpus() {
    let (app, id) = app_with_twins().await;
    let (s, v) = call_json(&app, "GET", &format!("/corpora/{id}/stats"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v, json!({ "n_pairs": 2, "n_unique_layout_strings": 1, "length_histogram": { "7": 2 } }));
    let (s, v) = call_json(&app, "GET", "/corpora/ffff/stats", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], "unknown_corpus");
}

#[tokio::test]
async fn malformed_annotation_is_400() {
    let app = router(AppState::default(), false);
    let (s, v) = call_json(
        &app,
        "POST",
        "/corpora",
        Some(json!({ "format": "coco", "alphabet_profile": "publaynet", "payload": { "images": [] } })),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["code"], "malformed_annotation");
}

#[tokio::test]
async fn malformed_bodies_are_422_with_a_code() {
    let (app, id) = app_with_twins().await;
    for body in [
        "not json".to_string(),
        "[1, 2]".to_string(),
        json!({ "corpus_id": id }).to_string(),
        json!({ "corpus_id": id, "query": { "lstr": "TW" }, "surprise": 1 }).to_string(),
        json!({ "corpus_id": id, "query": { "lstr": "TW", "doc_id": "form-a" } }).to_string(),
        json!({ "corpus_id": id, "query": { "lstr": "TW" }, "targets": "some" }).to_string(),
    ] {
        let (s, b) = call(&app, "POST", "/search", Some(body.clone())).await;
        assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
        let v: Value = serde_json::from_slice(&b).unwrap();
        assert!(v["code"].is_string() && v["message"].is_string(), "{v}");
    }
}

#[tokio::test]
async fn search_errors_map_to_status_codes() {
    let (app, id) = app_with_twins().await;
    let cases = [
        (json!({ "doc_id": "nope", "page_no": 0, "bbox": [0, 0, 1, 1] }), StatusCode::NOT_FOUND, "unknown_document"),
        (json!({ "doc_id": "form-a", "page_no": 4, "bbox": [0, 0, 1, 1] }), StatusCode::NOT_FOUND, "unknown_page"),
        (
            json!({ "doc_id": "form-a", "page_no": 0, "bbox": [590, 700, 600, 710] }),
            StatusCode::UNPROCESSABLE_ENTITY,
            "empty_snippet",
        ),
        (json!({ "lstr": "" }), StatusCode::UNPROCESSABLE_ENTITY, "empty_query"),
    ];
    for (query, status, code) in cases {
        let (s, v) = call_json(&app, "POST", "/search", Some(json!({ "corpus_id": id, "query": query }))).await;
        assert_eq!((s, v["code"].as_str().unwrap()), (status, code));
    }
    let (s, v) = call_json(&app, "POST", "/search", Some(json!({ "corpus_id": "nope", "query": { "lstr": "T" } }))).await;
    assert_eq!((s, v["code"].as_str().unwrap()), (StatusCode::NOT_FOUND, "unknown_corpus"));
}

#[tokio::test]
async fn default_corpus_serves_requests_without_id() {
    let bytes = std::fs::read(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/twin_pages.json")).unwrap();
    let corpus = snipsearch::parse_layout(
        snipsearch::LayoutFormat::Form,
        &bytes,
        &snipsearch::Alphabet::flamingo(),
    )
    .unwrap();
    let app = router(AppState::with_corpus(corpus), true);
    let mut q = full_page_query("");
    q.as_object_mut().unwrap().remove("corpus_id");
    let (s, v) = call_json(&app, "POST", "/search", Some(q)).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["matches"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn timing_is_opt_in() {
    let (app, id) = app_with_twins().await;
    let mut q = full_page_query(&id);
    q["timing"] = json!(true);
    let (_, v) = call_json(&app, "POST", "/search", Some(q)).await;
    assert!(v["elapsed_ms"].as_f64().unwrap() >= 0.0);
}
