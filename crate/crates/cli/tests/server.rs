//! HTTP API against a small synthetic gallery.

use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use ringview::image::{ImageKind, ViewImage};
use ringview::pipeline::{synth_dataset, Pipeline, SynthSpec};
use ringview::sketch::sketchify_view;
use ringview_cli::server::{router, AppState, QueryResponse};
use tempfile::TempDir;
use tower::ServiceExt;

const BOUNDARY: &str = "ringview-test-boundary";

struct Fixture {
    _dir: TempDir,
    pipeline: Pipeline,
    state: Arc<AppState>,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            objects: 6,
            ..Default::default()
        };
        synth_dataset(dir.path(), &spec).unwrap();
        let pipeline = Pipeline::from_file(&dir.path().join("config.toml")).unwrap();
        pipeline.ingest().unwrap();
        pipeline.render().unwrap();
        pipeline.index().unwrap();
        let state = Arc::new(AppState::load(&pipeline).unwrap());
        Fixture {
            _dir: dir,
            pipeline,
            state,
        }
    })
}

fn app() -> Router {
    router(fixture().state.clone())
}

fn multipart(fields: &[(&str, &[u8])]) -> Vec<u8> {
    let mut body = Vec::new();
    for (name, data) in fields {
        body.extend_from_slice(format!("--{BOUNDARY}\r\n").as_bytes());
        if *name == "sketch" {
            body.extend_from_slice(
                b"Content-Disposition: form-data; name=\"sketch\"; filename=\"s.png\"\r\nContent-Type: image/png\r\n\r\n",
            );
        } else {
            body.extend_from_slice(
                format!("Content-Disposition: form-data; name=\"{name}\"\r\n\r\n").as_bytes(),
            );
        }
        body.extend_from_slice(data);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    body
}

async fn post_query(fields: &[(&str, &[u8])]) -> (StatusCode, serde_json::Value) {
    let req = Request::post("/api/query")
        .header(
            "content-type",
            format!("multipart/form-data; boundary={BOUNDARY}"),
        )
        .body(Body::from(multipart(fields)))
        .unwrap();
    let res = app().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

async fn get(uri: &str) -> (StatusCode, Vec<u8>, Option<String>) {
    let res = app()
        .oneshot(Request::get(uri).body(Body::empty()).unwrap())
        .await
        .unwrap();
    let status = res.status();
    let ctype = res
        .headers()
        .get("content-type")
        .map(|v| v.to_str().unwrap().to_string());
    let bytes = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes, ctype)
}

fn gallery_sketch_png(object_id: &str, ring: usize, view: usize) -> Vec<u8> {
    let p = &fixture().pipeline;
    let rings = p.load_rings(object_id).unwrap();
    let render = &rings.ring(ring).unwrap()[view].image;
    sketchify_view(render, &p.config.sketch)
        .to_png_bytes()
        .unwrap()
}

fn object_ids() -> Vec<String> {
    fixture().pipeline.load_index().unwrap().object_ids()
}

#[tokio::test]
async fn health_reports_ok() {
    let (status, body, _) = get("/api/health").await;
    assert_eq!(status, StatusCode::OK);
    let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v, serde_json::json!({"status": "ok"}));
}

#[tokio::test]
async fn gallery_view_sketch_finds_its_object() {
    for id in object_ids() {
        let png = gallery_sketch_png(&id, 2, 4);
        let (status, v) = post_query(&[("sketch", &png)]).await;
        assert_eq!(status, StatusCode::OK, "{v}");
        let r: QueryResponse = serde_json::from_value(v).unwrap();
        assert_eq!(r.scorer, "min_l2");
        assert_eq!(r.results[0].object_id, id);
        assert_eq!(r.results[0].rank, 1);
        assert_eq!(r.results[0].views.len(), 36);
    }
}

#[tokio::test]
async fn results_are_sorted_and_truncated() {
    let ids = object_ids();
    let png = gallery_sketch_png(&ids[1], 3, 7);
    for scorer in ["min_l2", "top6_sum_max"] {
        let (status, v) = post_query(&[
            ("sketch", &png),
            ("top_k", b"4"),
            ("scorer", scorer.as_bytes()),
        ])
        .await;
        assert_eq!(status, StatusCode::OK, "{v}");
        let r: QueryResponse = serde_json::from_value(v).unwrap();
        assert_eq!(r.scorer, scorer);
        assert_eq!(r.results.len(), 4);
        for w in r.results.windows(2) {
            assert!(w[0].score >= w[1].score);
            assert_eq!(w[0].rank + 1, w[1].rank);
        }
    }
    let (_, v) = post_query(&[("sketch", &png), ("top_k", b"50")]).await;
    assert_eq!(v["results"].as_array().unwrap().len(), ids.len());
}

#[tokio::test]
async fn blank_sketch_is_rejected() {
    let blank = ViewImage::filled(224, 224, 255, ImageKind::Sketch)
        .to_png_bytes()
        .unwrap();
    let (status, v) = post_query(&[("sketch", &blank)]).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "empty sketch");
}

#[tokio::test]
async fn bad_requests_are_rejected() {
    let (status, v) = post_query(&[("sketch", b"definitely not a png")]).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(
        v["error"].as_str().unwrap().starts_with("malformed image"),
        "{v}"
    );

    let png = gallery_sketch_png(&object_ids()[0], 3, 0);
    for fields in [
        vec![("top_k", b"3".as_slice())],
        vec![("sketch", png.as_slice()), ("top_k", b"0".as_slice())],
        vec![("sketch", png.as_slice()), ("top_k", b"many".as_slice())],
        vec![
            ("sketch", png.as_slice()),
            ("scorer", b"telepathy".as_slice()),
        ],
    ] {
        let (status, v) = post_query(&fields).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{v}");
        assert!(v["error"].is_string());
    }
}

#[tokio::test]
async fn gallery_views_are_served() {
    let id = &object_ids()[0];
    let (status, bytes, ctype) = get(&format!("/api/objects/{id}/views/3/0")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ctype.as_deref(), Some("image/png"));
    let img = ViewImage::from_encoded(&bytes, ImageKind::Shaded).unwrap();
    assert_eq!((img.width, img.height), (224, 224));

    for uri in [
        "/api/objects/no_such_object/views/3/0".to_string(),
        format!("/api/objects/{id}/views/6/0"),
        format!("/api/objects/{id}/views/3/12"),
    ] {
        let (status, body, _) = get(&uri).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
        assert!(v["error"].is_string());
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_queries_agree() {
    let ids = object_ids();
    let png = gallery_sketch_png(&ids[2], 4, 9);
    let expected = post_query(&[("sketch", &png)]).await;
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let png = png.clone();
            tokio::spawn(async move { post_query(&[("sketch", &png)]).await })
        })
        .collect();
    for h in handles {
        assert_eq!(h.await.unwrap(), expected);
    }
}
