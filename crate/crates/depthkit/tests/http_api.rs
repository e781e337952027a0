//! The annotation HTTP API, driven through the router without a socket and
//! once over a real listener.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use depthkit::core::benchmark::{LabelSource, Origin, PairLabel, Pixel, PointPair, Scenario};
use depthkit::service::{router, serve, Clock, Service};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn pair(id: &str, image: &str) -> PointPair {
    PointPair {
        pair_id: id.into(),
        image_id: image.into(),
        p1: Pixel::new(3, 4),
        p2: Pixel::new(10, 2),
        scenario: Scenario::Indoor,
        origin: Origin::AutoSampled,
        label: PairLabel::Unlabeled,
        label_source: LabelSource::None,
    }
}

struct Harness {
    app: Router,
    svc: Arc<Service>,
    now: Arc<AtomicU64>,
}

fn harness(pairs: &[&str]) -> Harness {
    let now = Arc::new(AtomicU64::new(0));
    let src = now.clone();
    let clock: Clock = Arc::new(move || src.load(Ordering::SeqCst));
    let svc = Service::in_memory(60_000, clock);
    svc.enqueue_new(pairs.iter().map(|p| pair(p, "img0")).collect())
        .unwrap();
    let svc = Arc::new(svc);
    Harness {
        app: router(svc.clone()),
        svc,
        now,
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

async fn register(app: &Router, who: &str) {
    let (s, _) = call(app, "POST", "/api/register", Some(json!({ "annotator": who }))).await;
    assert_eq!(s, StatusCode::OK);
}

async fn submit(app: &Router, who: &str, pair: &str, decision: &str) -> (StatusCode, Value) {
    call(
        app,
        "POST",
        "/api/submit",
        Some(json!({ "annotator": who, "pair_id": pair, "decision": decision })),
    )
    .await
}

#[tokio::test]
async fn triple_check_finalizes_through_http() {
    let h = harness(&["p0"]);
    for who in ["ann", "bob", "cy"] {
        register(&h.app, who).await;
    }
    let (s, v) = call(&h.app, "GET", "/api/next?annotator=ann", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "assigned");
    assert_eq!(v["role"], "primary");
    assert_eq!(v["pair"]["pair_id"], "p0");
    assert_eq!(v["lease_expiry"], 60_000);

    let (s, v) = submit(&h.app, "ann", "p0", "first_closer").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["state"]["status"], "awaiting_verification");

    // The primary annotator is never offered their own pair to verify.
    let (_, v) = call(&h.app, "GET", "/api/next?annotator=ann", None).await;
    assert_eq!(v["status"], "none_available");

    for who in ["bob", "cy"] {
        let (_, v) = call(&h.app, "GET", &format!("/api/next?annotator={who}"), None).await;
        assert_eq!(v["role"], "verifier");
        let (s, _) = submit(&h.app, who, "p0", "first_closer").await;
        assert_eq!(s, StatusCode::OK);
    }
    let (s, v) = call(&h.app, "GET", "/api/progress", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["total"]["finalized"], 1);
    assert_eq!(h.svc.snapshot().entry("p0").unwrap().records.len(), 3);
}

#[tokio::test]
async fn errors_map_to_status_codes() {
    let h = harness(&["p0", "p1"]);
    register(&h.app, "ann").await;
    register(&h.app, "bob").await;

    let (s, v) = call(&h.app, "GET", "/api/next?annotator=nobody", None).await;
    assert_eq!(
        (s, v["code"].as_str()),
        (StatusCode::FORBIDDEN, Some("unknown_annotator"))
    );

    let (s, v) = submit(&h.app, "ann", "nope", "skip").await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_pair")));

    // Submitting without holding the lease.
    let (s, v) = submit(&h.app, "ann", "p0", "first_closer").await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::CONFLICT, Some("lease_expired")));

    call(&h.app, "GET", "/api/next?annotator=ann", None).await;
    h.now.store(60_000, Ordering::SeqCst);
    let (s, v) = submit(&h.app, "ann", "p0", "first_closer").await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::CONFLICT, Some("lease_expired")));

    // The expired pair goes back to the queue and can be claimed again.
    let (_, v) = call(&h.app, "GET", "/api/next?annotator=bob", None).await;
    assert_eq!(v["pair"]["pair_id"], "p0");
    let (s, _) = submit(&h.app, "bob", "p0", "second_closer").await;
    assert_eq!(s, StatusCode::OK);
    let (s, v) = submit(&h.app, "bob", "p0", "second_closer").await;
    assert_eq!(
        (s, v["code"].as_str()),
        (StatusCode::CONFLICT, Some("duplicate_submission"))
    );

    let (s, v) = call(&h.app, "POST", "/api/submit", Some(json!({ "pair_id": "p0" }))).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::BAD_REQUEST, Some("bad_request")));
    let (s, v) = call(
        &h.app,
        "POST",
        "/api/submit",
        Some(json!({ "annotator": "ann", "pair_id": "p1", "decision": "maybe" })),
    )
    .await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::BAD_REQUEST, Some("bad_request")));
    let (s, _) = call(&h.app, "GET", "/api/next", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, v) = call(&h.app, "POST", "/api/register", Some(json!({ "annotator": "  " }))).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::BAD_REQUEST, Some("bad_request")));

    let (s, v) = call(&h.app, "GET", "/api/nothing", None).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::NOT_FOUND, Some("not_found")));
}

#[tokio::test]
async fn skip_and_contest_discard() {
    let h = harness(&["p0", "p1"]);
    for who in ["a", "b"] {
        register(&h.app, who).await;
    }
    call(&h.app, "GET", "/api/next?annotator=a", None).await;
    let (_, v) = submit(&h.app, "a", "p0", "skip").await;
    assert_eq!(v["state"], json!({ "status": "discarded", "reason": "skipped" }));

    call(&h.app, "GET", "/api/next?annotator=a", None).await;
    submit(&h.app, "a", "p1", "first_closer").await;
    call(&h.app, "GET", "/api/next?annotator=b", None).await;
    let (_, v) = submit(&h.app, "b", "p1", "second_closer").await;
    assert_eq!(v["state"], json!({ "status": "discarded", "reason": "contested" }));
}

#[tokio::test]
async fn pair_image_is_served_with_point_headers() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("img0.png");
    std::fs::write(&img, b"\x89PNG fake").unwrap();
    let clock: Clock = Arc::new(|| 0);
    let svc = Service::in_memory(1000, clock).with_images(HashMap::from([("img0".to_string(), img)]));
    svc.enqueue_new(vec![pair("p0", "img0"), pair("p1", "other")]).unwrap();
    let app = router(Arc::new(svc));

    let resp = app
        .clone()
        .oneshot(Request::get("/api/pair/p0/image").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let headers = resp.headers().clone();
    assert_eq!(headers["content-type"], "image/png");
    assert_eq!(headers["x-image-id"], "img0");
    assert_eq!(headers["x-p1"], "3,4");
    assert_eq!(headers["x-p2"], "10,2");
    let body = resp.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(&body[..], b"\x89PNG fake");

    let (s, v) = call(&app, "GET", "/api/pair/p1/image", None).await;
    assert_eq!(
        (s, v["code"].as_str()),
        (StatusCode::NOT_FOUND, Some("image_unavailable"))
    );
    let (s, v) = call(&app, "GET", "/api/pair/zz/image", None).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_pair")));
}

#[tokio::test]
async fn serves_over_tcp_and_persists_on_shutdown() {
    use tokio::io::{AsyncReadExt, AsyncWriteExt};

    let dir = tempfile::tempdir().unwrap();
    let svc = Service::open(dir.path(), 60_000, 1000, depthkit::service::system_clock()).unwrap();
    svc.register("ann").unwrap();
    svc.enqueue_new(vec![pair("p0", "img0")]).unwrap();
    let svc = Arc::new(svc);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(serve(svc.clone(), listener, async {
        let _ = stopped.await;
    }));

    let mut conn = tokio::net::TcpStream::connect(addr).await.unwrap();
    conn.write_all(b"GET /api/next?annotator=ann HTTP/1.1\r\nhost: x\r\nconnection: close\r\n\r\n")
        .await
        .unwrap();
    let mut text = String::new();
    conn.read_to_string(&mut text).await.unwrap();
    assert!(text.starts_with("HTTP/1.1 200"), "{text}");
    assert!(text.contains("\"status\":\"assigned\""), "{text}");

    stop.send(()).unwrap();
    server.await.unwrap().unwrap();
    drop(svc);
    let reopened = Service::open(dir.path(), 60_000, 1000, depthkit::service::system_clock()).unwrap();
    assert!(matches!(
        reopened.snapshot().entry("p0").unwrap().status,
        depthkit::core::annotation::PairStatus::Claimed { .. }
    ));
    assert!(dir.path().join("snapshot.json").exists());
}
