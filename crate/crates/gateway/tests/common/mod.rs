#![allow(dead_code)]

use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use emotrail_core::affect::{write_fau_csv, FauFrame};
use emotrail_core::catalog::Catalog;
use emotrail_core::store::Store;
use emotrail_gateway::api::{router, AppState};
use emotrail_gateway::config::Config;
use serde_json::Value;
use tower::ServiceExt;

pub struct Harness {
    pub dir: tempfile::TempDir,
    pub state: Arc<AppState>,
    pub app: Router,
    pub clock: Arc<AtomicI64>,
}

pub struct Reply {
    pub status: StatusCode,
    pub content_type: Option<String>,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| {
            panic!("not JSON ({e}): {}", String::from_utf8_lossy(&self.body))
        })
    }

    pub fn text(&self) -> String {
        String::from_utf8(self.body.clone()).unwrap()
    }

    pub fn code(&self) -> String {
        self.json()["code"].as_str().unwrap_or_default().to_owned()
    }
}

impl Harness {
    pub fn new() -> Harness {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(Store::open(dir.path()).unwrap());
        let clock = Arc::new(AtomicI64::new(1_700_000_000_000));
        let tick = clock.clone();
        let state = Arc::new(
            AppState::new(
                Catalog::bundled(),
                store,
                Config::default(),
                Arc::new(move || tick.fetch_add(1_000, Ordering::SeqCst)),
                Some(11),
            )
            .unwrap(),
        );
        Harness {
            dir,
            app: router(state.clone()),
            state,
            clock,
        }
    }

    pub async fn send(&self, method: Method, uri: &str, body: Body, content_type: &str) -> Reply {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", content_type)
            .body(body)
            .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let content_type = resp
            .headers()
            .get("content-type")
            .map(|v| v.to_str().unwrap().to_owned());
        let body = to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec();
        Reply {
            status,
            content_type,
            body,
        }
    }

    pub async fn get(&self, uri: &str) -> Reply {
        self.send(Method::GET, uri, Body::empty(), "application/json").await
    }

    pub async fn post(&self, uri: &str, body: Value) -> Reply {
        self.send(Method::POST, uri, Body::from(body.to_string()), "application/json")
            .await
    }

    pub async fn post_empty(&self, uri: &str) -> Reply {
        self.send(Method::POST, uri, Body::empty(), "application/json").await
    }

    pub async fn post_csv(&self, uri: &str, csv: String) -> Reply {
        self.send(Method::POST, uri, Body::from(csv), "text/csv").await
    }

    /// Creates a session; returns (session_id, code, token_id).
    pub async fn create(&self) -> (String, String, String) {
        let r = self.post_empty("/sessions").await;
        assert_eq!(r.status, StatusCode::CREATED, "{}", r.text());
        let v = r.json();
        (
            v["session_id"].as_str().unwrap().to_owned(),
            v["code"].as_str().unwrap().to_owned(),
            v["token_id"].as_str().unwrap().to_owned(),
        )
    }

    /// Choose, listen and report one emotion.
    pub async fn visit(&self, id: &str, emotion: &str, v: i64, a: i64, c: i64, text: &str) {
        let r = self
            .post(&format!("/sessions/{id}/choice"), serde_json::json!({ "emotion_id": emotion }))
            .await;
        assert_eq!(r.status, StatusCode::OK, "{}", r.text());
        let r = self.post_empty(&format!("/sessions/{id}/script-played")).await;
        assert_eq!(r.status, StatusCode::OK, "{}", r.text());
        let r = self
            .post(
                &format!("/sessions/{id}/report"),
                serde_json::json!({
                    "emotion_id": emotion, "valence": v, "arousal": a, "control": c,
                    "free_text": text
                }),
            )
            .await;
        assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    }

    /// Scan, stream `frames` in one batch, end the call, print the postcard.
    pub async fn interview(&self, id: &str, code: &str, frames: &[FauFrame]) -> Reply {
        let r = self.post("/kiosk/scan", serde_json::json!({ "token": code })).await;
        assert_eq!(r.status, StatusCode::OK, "{}", r.text());
        if !frames.is_empty() {
            let r = self
                .post_csv(&format!("/sessions/{id}/fau"), write_fau_csv(frames))
                .await;
            assert_eq!(r.status, StatusCode::OK, "{}", r.text());
        }
        let r = self.post_empty(&format!("/sessions/{id}/interview-ended")).await;
        assert_eq!(r.status, StatusCode::OK, "{}", r.text());
        let r = self.post_empty(&format!("/sessions/{id}/postcard")).await;
        assert_eq!(r.status, StatusCode::OK, "{}", r.text());
        r
    }
}

/// `n` valid frames with constant AU intensities, 33 ms apart.
pub fn steady_frames(n: usize, au: f64) -> Vec<FauFrame> {
    (0..n)
        .map(|i| FauFrame {
            au06: au,
            au10: au,
            au12: au,
            au14: au,
            au17: au,
            ..FauFrame::neutral(i as i64 * 33)
        })
        .collect()
}

/// Every file under `dir` whose name or contents contain `needle`.
pub fn files_mentioning(dir: &std::path::Path, needle: &str) -> Vec<std::path::PathBuf> {
    let mut hits = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            hits.extend(files_mentioning(&path, needle));
            continue;
        }
        let bytes = std::fs::read(&path).unwrap();
        let in_body = bytes.windows(needle.len()).any(|w| w == needle.as_bytes());
        if in_body || path.to_string_lossy().contains(needle) {
            hits.push(path);
        }
    }
    hits
}
