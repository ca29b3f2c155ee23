mod common;

use axum::http::StatusCode;
use common::{files_mentioning, steady_frames, Harness};
use emotrail_core::affect::{write_fau_csv, FAU_CSV_HEADER};
use serde_json::json;

#[tokio::test]
async fn catalog_lists_six_emotions() {
    let h = Harness::new();
    let r = h.get("/catalog").await;
    assert_eq!(r.status, StatusCode::OK);
    let v = r.json();
    assert_eq!(v["entries"].as_array().unwrap().len(), 6);
    assert_eq!(v["videos"].as_array().unwrap().len(), 12);
}

#[tokio::test]
async fn unknown_session_is_not_found() {
    let h = Harness::new();
    let r = h
        .post(
            "/sessions/0123456789abcdef0123456789abcdef/report",
            json!({"emotion_id": "love", "valence": 1, "arousal": 2, "control": 3}),
        )
        .await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    assert_eq!(r.code(), "NotFound");
    let r = h.get("/sessions/../../etc").await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn happy_path_reaches_consent_resolved() {
    let h = Harness::new();
    let (id, code, _) = h.create().await;
    let v = h.get(&format!("/sessions/{id}")).await.json();
    assert_eq!(v["phase"], "Registered");
    assert_eq!(v["available_emotions"].as_array().unwrap().len(), 6);
    assert_eq!(v["can_scan"], false);

    let r = h
        .post(&format!("/sessions/{id}/choice"), json!({"emotion_id": "fear"}))
        .await;
    let v = r.json();
    assert_eq!(v["painting"]["id"], "scream");
    assert_eq!(v["session"]["step"], "Selected");
    assert!(v["script"]["story_text"].is_string());
    h.post_empty(&format!("/sessions/{id}/script-played")).await;
    let r = h
        .post(
            &format!("/sessions/{id}/report"),
            json!({"emotion_id": "fear", "valence": 20, "arousal": 90, "control": 40, "free_text": "tense"}),
        )
        .await;
    assert_eq!(r.json()["step"], "Reporting");
    h.visit(&id, "love", 80, 40, 60, "warm").await;
    let v = h.get(&format!("/sessions/{id}")).await.json();
    assert_eq!(v["report_count"], 2);
    assert_eq!(v["available_emotions"].as_array().unwrap().len(), 4);
    assert_eq!(v["can_scan"], true);

    let r = h.post("/kiosk/scan", json!({"token": code})).await;
    assert_eq!(r.status, StatusCode::OK);
    let scan = r.json();
    assert_eq!(scan["video"]["painting_id"], "scream");
    assert_eq!(scan["video"]["polarity"], "negative");
    assert_eq!(scan["media_ref"], "assets/interviews/scream-negative.mp4");

    let frames = steady_frames(60, 2.5);
    for half in frames.chunks(30) {
        let r = h
            .post_csv(&format!("/sessions/{id}/fau"), write_fau_csv(half))
            .await;
        assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    }
    let r = h.post_empty(&format!("/sessions/{id}/interview-ended")).await;
    let ended = r.json();
    assert_eq!(ended["scores"]["valid_frame_count"], 60);
    assert_eq!(ended["levels"]["enjoyment_level"], 2);

    let r = h.post_empty(&format!("/sessions/{id}/postcard")).await;
    assert_eq!(r.content_type.as_deref(), Some("image/svg+xml"));
    let svg = r.text();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let dots = doc
        .descendants()
        .filter(|n| n.has_tag_name("circle") && n.attribute("class") == Some("point"))
        .count();
    assert_eq!(dots, 2);
    assert_eq!(h.get(&format!("/sessions/{id}/postcard")).await.text(), svg);

    let r = h
        .post(&format!("/sessions/{id}/consent"), json!({"decision": "donated"}))
        .await;
    assert_eq!(r.json()["retained"], true);
    let v = h.get(&format!("/sessions/{id}")).await.json();
    assert_eq!(v["phase"], "ConsentResolved");
    assert_eq!(v["consent"], "donated");

    let stats = h.get("/aggregates/stats").await.json();
    assert_eq!(stats["completed"], 1);
    assert_eq!(stats["strongest"]["scream"], 1);
    assert_eq!(stats["first_choice"]["scream"], 1);
    let map = h.get("/aggregates/emotion-map.svg").await;
    assert_eq!(map.content_type.as_deref(), Some("image/svg+xml"));
    assert_eq!(map.text().matches("class=\"bin\"").count(), 2);

    // Every successful mutation appended exactly one record, except the
    // scan which appends two (card scanned, interview started).
    let records = h.state.store.load_records(&id).unwrap();
    let kinds: Vec<&str> = records.iter().map(|r| r.kind.as_str()).collect();
    assert_eq!(
        kinds,
        [
            "SessionCreated",
            "EmotionChosen",
            "ScriptPlayed",
            "SelfReportSubmitted",
            "EmotionChosen",
            "ScriptPlayed",
            "SelfReportSubmitted",
            "CardScanned",
            "InterviewStarted",
            "FauBatchIngested",
            "FauBatchIngested",
            "InterviewEnded",
            "PostcardRendered",
            "ConsentRecorded",
        ]
    );
}

#[tokio::test]
async fn scan_rules() {
    let h = Harness::new();
    let r = h.post("/kiosk/scan", json!({"token": "999"})).await;
    assert_eq!((r.status, r.code().as_str()), (StatusCode::NOT_FOUND, "UnknownToken"));

    let (id, code, token_id) = h.create().await;
    let r = h.post("/kiosk/scan", json!({"token": code})).await;
    assert_eq!((r.status, r.code().as_str()), (StatusCode::CONFLICT, "NoReports"));

    h.visit(&id, "sadness", 30, 60, 50, "").await;
    // The RFID id works as well as the printed code.
    let r = h.post("/kiosk/scan", json!({"token": token_id})).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    assert_eq!(r.json()["video"]["painting_id"], "sick-child");

    let r = h.post("/kiosk/scan", json!({"token": code})).await;
    assert_eq!(r.code(), "AlreadyInterviewed");
    let r = h
        .post(&format!("/sessions/{id}/choice"), json!({"emotion_id": "love"}))
        .await;
    assert_eq!(r.code(), "InvalidTransition");
}

#[tokio::test]
async fn report_validation() {
    let h = Harness::new();
    let (id, _, _) = h.create().await;
    let r = h
        .post(&format!("/sessions/{id}/choice"), json!({"emotion_id": "envy"}))
        .await;
    assert_eq!(r.code(), "UnknownEmotion");
    let r = h
        .send(
            axum::http::Method::POST,
            &format!("/sessions/{id}/choice"),
            "{not json".into(),
            "application/json",
        )
        .await;
    assert_eq!((r.status, r.code().as_str()), (StatusCode::BAD_REQUEST, "InvalidBody"));

    h.post(&format!("/sessions/{id}/choice"), json!({"emotion_id": "love"}))
        .await;
    let report = |v: i64, text: &str| json!({"emotion_id": "love", "valence": v, "arousal": 5, "control": 5, "free_text": text});
    // Reporting before the script has played.
    let r = h.post(&format!("/sessions/{id}/report"), report(50, "")).await;
    assert_eq!(r.code(), "InvalidTransition");
    h.post_empty(&format!("/sessions/{id}/script-played")).await;
    let r = h.post(&format!("/sessions/{id}/report"), report(101, "")).await;
    assert_eq!(r.code(), "SliderOutOfRange");
    let r = h
        .post(&format!("/sessions/{id}/report"), report(50, &"x".repeat(281)))
        .await;
    assert_eq!(r.code(), "TextTooLong");
    let r = h
        .post(
            &format!("/sessions/{id}/report"),
            json!({"emotion_id": "fear", "valence": 1, "arousal": 1, "control": 1}),
        )
        .await;
    assert_eq!(r.code(), "ReportMismatch");
    let r = h.post(&format!("/sessions/{id}/report"), report(50, &"x".repeat(280))).await;
    assert_eq!(r.status, StatusCode::OK);
    let r = h
        .post(&format!("/sessions/{id}/choice"), json!({"emotion_id": "love"}))
        .await;
    assert_eq!(r.code(), "EmotionReuse");
    // Only the accepted requests were logged.
    assert_eq!(h.state.store.load_records(&id).unwrap().len(), 4);
}

#[tokio::test]
async fn fau_batches_are_checked() {
    let h = Harness::new();
    let (id, code, _) = h.create().await;
    h.visit(&id, "love", 60, 60, 60, "").await;
    h.post("/kiosk/scan", json!({"token": code})).await;
    let url = format!("/sessions/{id}/fau");
    let r = h.post_csv(&url, "ts,valid\n1,1\n".into()).await;
    assert_eq!(r.code(), "FauHeaderMismatch");
    let r = h
        .post_csv(&url, format!("{FAU_CSV_HEADER}\n0,1,0.9,6,0,0,0,0,0,0,0\n"))
        .await;
    assert_eq!(r.code(), "FauRange");
    let frames = steady_frames(10, 1.0);
    assert_eq!(h.post_csv(&url, write_fau_csv(&frames)).await.status, StatusCode::OK);
    // The second batch must continue after the first.
    let r = h.post_csv(&url, write_fau_csv(&frames[5..])).await;
    assert_eq!(r.code(), "FauNonMonotoneTimestamp");

    // Too few frames: the call still ends and the postcard falls back.
    let ended = h.post_empty(&format!("/sessions/{id}/interview-ended")).await.json();
    assert!(ended["scores"].is_null());
    let svg = h.post_empty(&format!("/sessions/{id}/postcard")).await.text();
    assert!(svg.contains("could not read your expressions"));
    let r = h.post_csv(&url, write_fau_csv(&steady_frames(1, 0.0))).await;
    assert_eq!(r.code(), "InvalidTransition");
}

#[tokio::test]
async fn withheld_session_disappears_from_the_wire() {
    let h = Harness::new();
    let (id, code, _) = h.create().await;
    h.visit(&id, "passion", 70, 70, 70, "a private thought").await;
    let consent = format!("/sessions/{id}/consent");
    let r = h.post(&consent, json!({"decision": "withheld"})).await;
    assert_eq!(r.code(), "NotReady");
    h.interview(&id, &code, &steady_frames(40, 1.0)).await;
    let r = h.post(&consent, json!({"decision": "withheld"})).await;
    assert_eq!(r.json()["retained"], false);

    for uri in [format!("/sessions/{id}"), format!("/sessions/{id}/postcard")] {
        assert_eq!(h.get(&uri).await.status, StatusCode::NOT_FOUND);
    }
    let r = h
        .post(&format!("/sessions/{id}/choice"), json!({"emotion_id": "love"}))
        .await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    let r = h.post(&consent, json!({"decision": "donated"})).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    let r = h.post("/kiosk/scan", json!({"token": code})).await;
    assert_eq!(r.code(), "UnknownToken");
    let stats = h.get("/aggregates/stats").await.json();
    assert_eq!((stats["completed"].as_u64(), stats["donated"].as_u64()), (Some(1), Some(0)));
    assert!(files_mentioning(h.dir.path(), &id).is_empty());
    assert!(files_mentioning(h.dir.path(), "a private thought").is_empty());
}

#[tokio::test]
async fn consent_is_recorded_once() {
    let h = Harness::new();
    let (id, code, _) = h.create().await;
    h.visit(&id, "obsession", 10, 10, 10, "").await;
    h.interview(&id, &code, &[]).await;
    let consent = format!("/sessions/{id}/consent");
    assert_eq!(h.post(&consent, json!({"decision": "donated"})).await.status, StatusCode::OK);
    let r = h.post(&consent, json!({"decision": "withheld"})).await;
    assert_eq!((r.status, r.code().as_str()), (StatusCode::CONFLICT, "AlreadyDecided"));
    let r = h.post(&consent, json!({"decision": "maybe"})).await;
    assert_eq!(r.code(), "InvalidBody");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_writes_to_one_session_serialize() {
    let h = std::sync::Arc::new(Harness::new());
    let (id, _, _) = h.create().await;
    let emotions = ["love", "self-confidence", "passion", "fear", "sadness", "obsession"];
    let mut tasks = Vec::new();
    for e in emotions {
        let h = h.clone();
        let id = id.clone();
        tasks.push(tokio::spawn(async move {
            h.post(&format!("/sessions/{id}/choice"), json!({"emotion_id": e}))
                .await
                .status
        }));
    }
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::OK);
    }
    let records = h.state.store.load_records(&id).unwrap();
    assert_eq!(records.len(), 7);
    assert!(records.iter().enumerate().all(|(i, r)| r.seq == i as u64 + 1));
    let v = h.get(&format!("/sessions/{id}")).await.json();
    assert_eq!(v["used_emotions"].as_array().unwrap().len(), 6);
    assert!(v["available_emotions"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn codes_survive_restart() {
    let h = Harness::new();
    let (id, code, _) = h.create().await;
    h.visit(&id, "love", 60, 60, 60, "").await;
    let store = h.state.store.clone();
    let state = std::sync::Arc::new(
        emotrail_gateway::api::AppState::new(
            emotrail_core::catalog::Catalog::bundled(),
            store,
            Default::default(),
            emotrail_gateway::api::system_clock(),
            Some(5),
        )
        .unwrap(),
    );
    let app = emotrail_gateway::api::router(state);
    let restarted = Harness { app, ..h };
    let r = restarted.post("/kiosk/scan", json!({"token": code})).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
}
