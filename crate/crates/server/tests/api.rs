mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use serde_json::{json, Value};
use tokio::sync::RwLock;
use tower::ServiceExt;
use wastemap_core::detect::SiteStatus;
use wastemap_server::api::{router, AppState};
use wastemap_server::store::{read_labels, FootprintSummary, Store, EVENTS_FILE, LABELS_FILE, SITES_SNAPSHOT};

use common::five_sites;

fn app(store: Store) -> (axum::Router, Arc<RwLock<Store>>) {
    let store = Arc::new(RwLock::new(store));
    let state = AppState {
        store: store.clone(),
        imagery_url: "https://example.invalid/{z}/{x}/{y}.png".into(),
    };
    (router(state), store)
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

fn ids(v: &Value) -> Vec<String> {
    v.as_array().unwrap().iter().map(|s| s["id"].as_str().unwrap().to_string()).collect()
}

#[tokio::test]
async fn empty_store_lists_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(Store::open(dir.path()).unwrap());
    let (status, body) = call(&app, "GET", "/sites", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!([]));
}

#[tokio::test]
async fn filters_are_conjunctive_and_ordered_by_id() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = Store::open(dir.path()).unwrap();
    let sites = five_sites();
    store.add_candidates(&sites).unwrap();
    let (app, _) = app(store);
    for s in &sites[..2] {
        let (status, _) = call(&app, "POST", &format!("/sites/{}/review", s.id), Some(json!({"decision": "confirm"}))).await;
        assert_eq!(status, StatusCode::OK);
    }

    let (_, all) = call(&app, "GET", "/sites", None).await;
    let mut expected: Vec<String> = sites.iter().map(|s| s.id.clone()).collect();
    expected.sort();
    assert_eq!(ids(&all), expected);

    let (_, confirmed) = call(&app, "GET", "/sites?status=confirmed", None).await;
    assert_eq!(confirmed.as_array().unwrap().len(), 2);
    let (_, candidates) = call(&app, "GET", "/sites?status=candidate", None).await;
    assert_eq!(candidates.as_array().unwrap().len(), 3);

    // sites 0, 2, 4 are high mode; 0 is also confirmed
    let (_, both) = call(&app, "GET", "/sites?status=confirmed&mode=high", None).await;
    assert_eq!(ids(&both), vec![sites[0].id.clone()]);

    let (_, west) = call(&app, "GET", "/sites?bbox=114.95,-8.6,115.15,-8.4", None).await;
    let mut want = vec![sites[0].id.clone(), sites[1].id.clone()];
    want.sort();
    assert_eq!(ids(&west), want);

    let (status, none) = call(&app, "GET", "/sites?bbox=0,0,1,1", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(none, json!([]));
}

#[tokio::test]
async fn malformed_bbox_is_a_bad_request() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(Store::open(dir.path()).unwrap());
    for q in ["bbox=1,2,3", "bbox=a,b,c,d", "bbox=3,0,1,1"] {
        let (status, body) = call(&app, "GET", &format!("/sites?{q}"), None).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{q}");
        assert!(body["error"].as_str().unwrap().contains("bbox"));
    }
}

#[tokio::test]
async fn unknown_site_is_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(Store::open(dir.path()).unwrap());
    for uri in ["/sites/nope", "/sites/nope/contours"] {
        let (status, _) = call(&app, "GET", uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
    }
    let (status, _) = call(&app, "POST", "/sites/nope/review", Some(json!({"decision": "reject"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

fn monthly_collection(months: &[&str]) -> geojson::FeatureCollection {
    let features = months
        .iter()
        .map(|m| {
            let mut props = geojson::JsonObject::new();
            props.insert("month".into(), (*m).into());
            geojson::Feature {
                bbox: None,
                geometry: Some(geojson::Geometry::new(geojson::Value::MultiPolygon(vec![vec![vec![
                    vec![115.0, -8.5],
                    vec![115.001, -8.5],
                    vec![115.001, -8.501],
                    vec![115.0, -8.5],
                ]]]))),
                id: None,
                properties: Some(props),
                foreign_members: None,
            }
        })
        .collect();
    geojson::FeatureCollection {
        bbox: None,
        features,
        foreign_members: None,
    }
}

#[tokio::test]
async fn contours_distinguish_empty_from_missing() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = Store::open(dir.path()).unwrap();
    let sites = five_sites();
    store.add_candidates(&sites).unwrap();
    let months = ["2020-01", "2020-02", "2020-03"];
    let summary = months
        .iter()
        .map(|m| FootprintSummary {
            month: m.parse().unwrap(),
            area_ha: 0.5,
        })
        .collect();
    store.set_monitoring(&sites[0].id, summary, monthly_collection(&months), None).unwrap();
    let (app, _) = app(store);

    let (status, body) = call(&app, "GET", &format!("/sites/{}/contours", sites[0].id), None).await;
    assert_eq!(status, StatusCode::OK);
    let got: Vec<&str> = body["features"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["properties"]["month"].as_str().unwrap())
        .collect();
    assert_eq!(got, months);

    let (status, body) = call(&app, "GET", &format!("/sites/{}/contours", sites[1].id), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["type"], "FeatureCollection");
    assert_eq!(body["features"], json!([]));

    let (_, rec) = call(&app, "GET", &format!("/sites/{}", sites[0].id), None).await;
    assert_eq!(rec["footprints"].as_array().unwrap().len(), 3);
}

#[tokio::test]
async fn confirm_with_polygon_gives_positive_label() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = Store::open(dir.path()).unwrap();
    let sites = five_sites();
    store.add_candidates(&sites).unwrap();
    let (app, _) = app(store);
    let ring = json!([[115.0, -8.5], [115.001, -8.5], [115.001, -8.501]]);
    let (status, body) = call(
        &app,
        "POST",
        &format!("/sites/{}/review", sites[0].id),
        Some(json!({"decision": "confirm", "note": "tarp piles", "polygon": ring})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["site"]["status"], "confirmed");
    assert_eq!(body["site"]["reviews"][0]["note"], "tarp piles");
    assert_eq!(body["label"]["class"], "positive");
    assert_eq!(body["label"]["polygon"], ring);
    assert_eq!(body["label"]["source"], "review");

    let labels = read_labels(dir.path()).unwrap();
    assert_eq!(labels.len(), 1);
    assert_eq!(labels[0].site_id, sites[0].id);
}

#[tokio::test]
async fn reject_gives_negative_label_at_site() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = Store::open(dir.path()).unwrap();
    let sites = five_sites();
    store.add_candidates(&sites).unwrap();
    let (app, _) = app(store);
    let (status, body) = call(&app, "POST", &format!("/sites/{}/review", sites[3].id), Some(json!({"decision": "reject"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["site"]["status"], "rejected");
    assert_eq!(body["label"]["class"], "negative");
    assert_eq!(body["label"]["center"], json!(sites[3].center));
    assert!(body["label"].get("polygon").is_none());
}

#[tokio::test]
async fn repeated_review_is_idempotent_and_conflict_changes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = Store::open(dir.path()).unwrap();
    let sites = five_sites();
    store.add_candidates(&sites).unwrap();
    let (app, shared) = app(store);
    let uri = format!("/sites/{}/review", sites[2].id);
    let review = json!({"decision": "confirm", "note": "yes"});

    let (s1, first) = call(&app, "POST", &uri, Some(review.clone())).await;
    let events = std::fs::read_to_string(dir.path().join(EVENTS_FILE)).unwrap();
    let labels = std::fs::read_to_string(dir.path().join(LABELS_FILE)).unwrap();
    let state = shared.read().await.state().clone();

    let (s2, second) = call(&app, "POST", &uri, Some(review)).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(first, second);

    let (s3, body) = call(&app, "POST", &uri, Some(json!({"decision": "reject"}))).await;
    assert_eq!(s3, StatusCode::CONFLICT);
    assert_eq!(body["existing_decision"], "confirm");

    assert_eq!(std::fs::read_to_string(dir.path().join(EVENTS_FILE)).unwrap(), events);
    assert_eq!(std::fs::read_to_string(dir.path().join(LABELS_FILE)).unwrap(), labels);
    assert_eq!(shared.read().await.state(), &state);
    let (_, rec) = call(&app, "GET", &format!("/sites/{}", sites[2].id), None).await;
    assert_eq!(rec["status"], "confirmed");
    assert_eq!(rec["reviews"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn replaying_the_log_reconstructs_the_store() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = Store::open(dir.path()).unwrap();
    let sites = five_sites();
    store.add_candidates(&sites).unwrap();
    store.set_monitoring(&sites[4].id, Vec::new(), monthly_collection(&["2020-05"]), None).unwrap();
    let (app, shared) = app(store);
    call(&app, "POST", &format!("/sites/{}/review", sites[0].id), Some(json!({"decision": "confirm"}))).await;
    call(&app, "POST", &format!("/sites/{}/review", sites[1].id), Some(json!({"decision": "reject", "note": "quarry"}))).await;
    // re-detection of a reviewed site leaves it alone
    assert_eq!(shared.write().await.add_candidates(&sites).unwrap(), 0);

    let live = shared.read().await.state().clone();
    let reopened = Store::open(dir.path()).unwrap();
    assert_eq!(reopened.state(), &live);
    assert_eq!(reopened.get(&sites[0].id).unwrap().site.status, SiteStatus::Confirmed);
    assert_eq!(reopened.get(&sites[1].id).unwrap().site.status, SiteStatus::Rejected);

    let snapshot: geojson::FeatureCollection =
        serde_json::from_slice(&std::fs::read(dir.path().join(SITES_SNAPSHOT)).unwrap()).unwrap();
    assert_eq!(snapshot.features.len(), 5);
}

#[tokio::test]
async fn site_records_round_trip_through_json() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = Store::open(dir.path()).unwrap();
    let sites = five_sites();
    store.add_candidates(&sites).unwrap();
    let (app, _) = app(store);
    call(&app, "POST", &format!("/sites/{}/review", sites[0].id), Some(json!({"decision": "confirm", "note": "n"}))).await;
    let (_, list) = call(&app, "GET", "/sites", None).await;
    let records: Vec<wastemap_server::store::SiteRecord> = serde_json::from_value(list.clone()).unwrap();
    let text = serde_json::to_string(&records).unwrap();
    let again: Vec<wastemap_server::store::SiteRecord> = serde_json::from_str(&text).unwrap();
    assert_eq!(again, records);
    let by_id: Vec<_> = records.iter().map(|r| r.site.clone()).collect();
    for s in &sites {
        let got = by_id.iter().find(|g| g.id == s.id).unwrap();
        assert_eq!(got.center, s.center);
        assert_eq!(got.pixel_score, s.pixel_score);
    }
}

#[tokio::test]
async fn client_config_exposes_imagery_template() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(Store::open(dir.path()).unwrap());
    let (status, body) = call(&app, "GET", "/config", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(body["imagery_url"].as_str().unwrap().contains("{z}"));
}
