//! HTTP surface for visitor phones, the interview kiosk and the front desk.
//!
//! Every mutating request loads the session by replaying its log, applies
//! the new events in memory, and persists them before answering. Requests
//! for one session are serialized by a per-session lock.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use emotrail_core::affect::{parse_fau_csv, quantize_levels, score, AffectLevels, AffectScores};
use emotrail_core::aggregate::{
    emotion_map_panels, render_emotion_map, summary_stats, OutcomeCounts, SummaryStats,
};
use emotrail_core::catalog::{Catalog, Painting, Script};
use emotrail_core::postcard::{compose_postcard, render_postcard_svg_with, PostcardError};
use emotrail_core::selection::{select_interview_video, VideoChoice};
use emotrail_core::selfreport::ReportSubmission;
use emotrail_core::session::{
    create_session_avoiding, is_valid_code, Consent, EventBody, Phase, Session, TouringStep,
    MAX_EMOTIONS,
};
use emotrail_core::store::{ConsentDecision, EventRecord, Retention, Store, StoreError};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{ApiError, ErrorCode};

pub type Clock = Arc<dyn Fn() -> i64 + Send + Sync>;

/// Wall clock in milliseconds since the epoch.
pub fn system_clock() -> Clock {
    Arc::new(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as i64)
            .unwrap_or(0)
    })
}

type SessionLock = Arc<tokio::sync::Mutex<()>>;

pub struct AppState {
    pub catalog: Catalog,
    pub store: Arc<Store>,
    pub config: Config,
    clock: Clock,
    rng: Mutex<ChaCha20Rng>,
    locks: Mutex<HashMap<String, SessionLock>>,
    /// Card code -> newest session carrying it.
    codes: Mutex<HashMap<String, String>>,
}

fn guard<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl AppState {
    /// `seed` fixes token generation; `None` seeds from the OS.
    pub fn new(
        catalog: Catalog,
        store: Arc<Store>,
        config: Config,
        clock: Clock,
        seed: Option<u64>,
    ) -> Result<AppState, StoreError> {
        let rng = match seed {
            Some(s) => ChaCha20Rng::seed_from_u64(s),
            None => ChaCha20Rng::from_os_rng(),
        };
        let mut newest: HashMap<String, (i64, String)> = HashMap::new();
        for id in store.session_ids() {
            let s = store.load_session(&id)?;
            let slot = newest
                .entry(s.token.code.clone())
                .or_insert((s.created_ts, id.clone()));
            if s.created_ts > slot.0 {
                *slot = (s.created_ts, id);
            }
        }
        Ok(AppState {
            catalog,
            store,
            config,
            clock,
            rng: Mutex::new(rng),
            locks: Mutex::new(HashMap::new()),
            codes: Mutex::new(newest.into_iter().map(|(c, (_, id))| (c, id)).collect()),
        })
    }

    fn now(&self) -> i64 {
        (self.clock)()
    }

    fn session_lock(&self, session_id: &str) -> SessionLock {
        guard(&self.locks)
            .entry(session_id.to_owned())
            .or_default()
            .clone()
    }

    fn forget(&self, session_id: &str) {
        guard(&self.locks).remove(session_id);
        guard(&self.codes).retain(|_, id| id != session_id);
    }

    fn load(&self, session_id: &str) -> Result<Session, ApiError> {
        self.store.load_session(session_id).map_err(|e| match e {
            StoreError::NotFound(_) | StoreError::InvalidSessionId(_) => {
                ApiError::not_found(session_id)
            }
            other => ApiError::from(other).for_session(session_id),
        })
    }

    /// Applies `bodies` in order and persists them as one batch. The
    /// caller must hold the session lock.
    fn commit(&self, session: &mut Session, bodies: Vec<EventBody>) -> Result<(), ApiError> {
        let id = session.id();
        let ts = self.now().max(session.last_ts);
        let mut records = Vec::with_capacity(bodies.len());
        for body in bodies {
            let event = session.next_event(ts, body);
            session
                .apply(&event)
                .map_err(|e| ApiError::from(e).for_session(&id))?;
            records.push(EventRecord::from_event(&id, &event));
        }
        self.store
            .append_batch(&records)
            .map_err(|e| ApiError::from(e).for_session(&id))
    }

    /// Load, build events, apply and persist under the session lock.
    async fn mutate<F>(&self, session_id: &str, build: F) -> Result<Session, ApiError>
    where
        F: FnOnce(&Session) -> Result<Vec<EventBody>, ApiError>,
    {
        let lock = self.session_lock(session_id);
        let _held = lock.lock().await;
        let mut session = self.load(session_id)?;
        let bodies = build(&session).map_err(|e| e.for_session(session_id))?;
        self.commit(&mut session, bodies)?;
        Ok(session)
    }

    fn resolve_token(&self, token: &str) -> Option<String> {
        let token = token.trim();
        if is_valid_code(token) {
            return guard(&self.codes).get(token).cloned();
        }
        let id = token.parse::<uuid::Uuid>().ok()?.simple().to_string();
        self.store.retention(&id).map(|_| id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub code: String,
    pub phase: Phase,
    pub step: Option<TouringStep>,
    pub current_emotion: Option<String>,
    pub used_emotions: Vec<String>,
    /// Emotions that can still be chosen, in catalog order.
    pub available_emotions: Vec<String>,
    pub report_count: usize,
    /// True once the kiosk would accept this card.
    pub can_scan: bool,
    pub consent: Option<Consent>,
}

impl SessionView {
    pub fn of(session: &Session, catalog: &Catalog) -> SessionView {
        // Choosing mid-painting is legal: it skips that painting's report.
        let touring = matches!(session.phase(), Phase::Registered | Phase::Touring);
        let can_choose = touring && session.emotions_used.len() < MAX_EMOTIONS;
        SessionView {
            session_id: session.id(),
            code: session.token.code.clone(),
            phase: session.phase(),
            step: session.state.touring_sub,
            current_emotion: session.state.current_emotion.clone(),
            used_emotions: session.emotions_used.iter().cloned().collect(),
            available_emotions: if can_choose {
                catalog
                    .emotions()
                    .filter(|e| !session.emotions_used.contains(&e.id))
                    .map(|e| e.id.clone())
                    .collect()
            } else {
                Vec::new()
            },
            report_count: session.reports.len(),
            can_scan: touring && !session.reports.is_empty(),
            consent: session.state.consent,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session_id: String,
    pub code: String,
    pub token_id: String,
    pub session: SessionView,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChoiceRequest {
    pub emotion_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChoiceResponse {
    pub session: SessionView,
    pub painting: Painting,
    pub script: Script,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanRequest {
    pub token: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanResponse {
    pub session_id: String,
    pub video: VideoChoice,
    pub painting_title: String,
    pub media_ref: String,
    pub transcript: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FauAck {
    pub session_id: String,
    pub accepted_frames: usize,
    pub total_frames: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InterviewEndedResponse {
    pub session: SessionView,
    /// `None` when too few frames were usable.
    pub scores: Option<AffectScores>,
    pub levels: Option<AffectLevels>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsentRequest {
    pub decision: Consent,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsentResponse {
    pub session_id: String,
    pub decision: Consent,
    pub retained: bool,
}

type Shared = State<Arc<AppState>>;
type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/catalog", get(get_catalog))
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(view))
        .route("/sessions/{id}/choice", post(choose))
        .route("/sessions/{id}/script-played", post(script_played))
        .route("/sessions/{id}/report", post(report))
        .route("/kiosk/scan", post(scan))
        .route("/sessions/{id}/fau", post(fau))
        .route("/sessions/{id}/interview-ended", post(interview_ended))
        .route("/sessions/{id}/postcard", post(postcard).get(get_postcard))
        .route("/sessions/{id}/consent", post(consent))
        .route("/aggregates/stats", get(stats))
        .route("/aggregates/emotion-map.svg", get(emotion_map))
        .with_state(state)
}

async fn get_catalog(State(st): Shared) -> Json<Catalog> {
    Json(st.catalog.clone())
}

async fn create(State(st): Shared) -> Result<(StatusCode, Json<CreatedSession>), ApiError> {
    let now = st.now();
    // The code table stays locked until the session is durable so two
    // concurrent registrations cannot draw the same live code.
    let mut codes = guard(&st.codes);
    let (session, event) = {
        let mut rng = guard(&st.rng);
        create_session_avoiding(now, &mut *rng, |code| {
            codes
                .get(code)
                .is_some_and(|id| st.store.retention(id) == Some(Retention::Undetermined))
        })
    };
    let id = session.id();
    st.store.append(&EventRecord::from_event(&id, &event))?;
    codes.insert(session.token.code.clone(), id.clone());
    drop(codes);
    Ok((
        StatusCode::CREATED,
        Json(CreatedSession {
            session_id: id,
            code: session.token.code.clone(),
            token_id: session.token.token_id.to_string(),
            session: SessionView::of(&session, &st.catalog),
        }),
    ))
}

async fn view(State(st): Shared, Path(id): Path<String>) -> ApiResult<SessionView> {
    Ok(Json(SessionView::of(&st.load(&id)?, &st.catalog)))
}

async fn choose(
    State(st): Shared,
    Path(id): Path<String>,
    body: Result<Json<ChoiceRequest>, JsonRejection>,
) -> ApiResult<ChoiceResponse> {
    let Json(req) = body?;
    let entry = st.catalog.entry_for_emotion(&req.emotion_id)?.clone();
    let session = st
        .mutate(&id, |_| {
            Ok(vec![EventBody::EmotionChosen {
                emotion_id: req.emotion_id,
            }])
        })
        .await?;
    Ok(Json(ChoiceResponse {
        session: SessionView::of(&session, &st.catalog),
        painting: entry.painting,
        script: entry.script,
    }))
}

async fn script_played(State(st): Shared, Path(id): Path<String>) -> ApiResult<SessionView> {
    let session = st
        .mutate(&id, |_| Ok(vec![EventBody::ScriptPlayed {}]))
        .await?;
    Ok(Json(SessionView::of(&session, &st.catalog)))
}

async fn report(
    State(st): Shared,
    Path(id): Path<String>,
    body: Result<Json<ReportSubmission>, JsonRejection>,
) -> ApiResult<SessionView> {
    let Json(submission) = body?;
    let now = st.now();
    let session = st
        .mutate(&id, |s| {
            let order = s.reports.len() as u32 + 1;
            let report = submission.into_report(order, now.max(s.last_ts), &st.catalog)?;
            Ok(vec![EventBody::SelfReportSubmitted { report }])
        })
        .await?;
    Ok(Json(SessionView::of(&session, &st.catalog)))
}

async fn scan(
    State(st): Shared,
    body: Result<Json<ScanRequest>, JsonRejection>,
) -> ApiResult<ScanResponse> {
    let Json(req) = body?;
    let id = st.resolve_token(&req.token).ok_or_else(|| {
        ApiError::new(ErrorCode::UnknownToken, format!("no session for card `{}`", req.token))
    })?;
    let session = st
        .mutate(&id, |s| {
            if s.phase() >= Phase::InterviewReady {
                return Err(ApiError::new(
                    ErrorCode::AlreadyInterviewed,
                    "this card has already been used for the interview",
                ));
            }
            let video = select_interview_video(&s.reports).map_err(|_| {
                ApiError::new(ErrorCode::NoReports, "no self-reports yet; visit a painting first")
            })?;
            Ok(vec![EventBody::CardScanned {}, EventBody::InterviewStarted { video }])
        })
        .await?;
    let video = session.chosen_video.clone().expect("set by InterviewStarted");
    let clip = st.catalog.video(&video.painting_id, video.polarity)?;
    let title = st.catalog.painting(&video.painting_id)?.title.clone();
    Ok(Json(ScanResponse {
        session_id: id,
        painting_title: title,
        media_ref: clip.media_ref.clone(),
        transcript: clip.transcript.clone(),
        video,
    }))
}

async fn fau(State(st): Shared, Path(id): Path<String>, body: Bytes) -> ApiResult<FauAck> {
    let stream = parse_fau_csv(&id, &body).map_err(|e| ApiError::from(e).for_session(&id))?;
    let accepted = stream.frames.len();
    let session = st
        .mutate(&id, |_| {
            Ok(vec![EventBody::FauBatchIngested {
                frames: stream.frames,
            }])
        })
        .await?;
    Ok(Json(FauAck {
        session_id: id,
        accepted_frames: accepted,
        total_frames: session.fau_frames.len(),
    }))
}

async fn interview_ended(
    State(st): Shared,
    Path(id): Path<String>,
) -> ApiResult<InterviewEndedResponse> {
    let session = st
        .mutate(&id, |s| {
            let scores = score(&s.fau_frames, &st.config.scoring).ok();
            Ok(vec![EventBody::InterviewEnded { scores }])
        })
        .await?;
    Ok(Json(InterviewEndedResponse {
        session: SessionView::of(&session, &st.catalog),
        scores: session.scores,
        levels: session.scores.as_ref().map(quantize_levels),
    }))
}

fn svg_response(svg: String) -> Response {
    ([(header::CONTENT_TYPE, "image/svg+xml")], svg).into_response()
}

async fn postcard(State(st): Shared, Path(id): Path<String>) -> Result<Response, ApiError> {
    let lock = st.session_lock(&id);
    let _held = lock.lock().await;
    let mut session = st.load(&id)?;
    let data = compose_postcard(&session, session.scores.as_ref(), &st.catalog).map_err(
        |PostcardError::NoReports| {
            ApiError::new(ErrorCode::NoReports, "no self-reports to put on a postcard")
                .for_session(&id)
        },
    )?;
    let svg = render_postcard_svg_with(&data, &st.catalog, &st.config.postcard);
    st.commit(
        &mut session,
        vec![EventBody::PostcardRendered {
            front_painting_id: data.front_painting_id.clone(),
        }],
    )?;
    st.store
        .write_postcard(&id, &svg, &data.sidecar_json())
        .map_err(|e| ApiError::from(e).for_session(&id))?;
    Ok(svg_response(svg))
}

async fn get_postcard(State(st): Shared, Path(id): Path<String>) -> Result<Response, ApiError> {
    st.load(&id)?;
    let (svg_path, _) = st.store.postcard_paths(&id);
    let svg = std::fs::read_to_string(svg_path).map_err(|_| {
        ApiError::new(ErrorCode::NotFound, "no postcard rendered yet").for_session(&id)
    })?;
    Ok(svg_response(svg))
}

async fn consent(
    State(st): Shared,
    Path(id): Path<String>,
    body: Result<Json<ConsentRequest>, JsonRejection>,
) -> ApiResult<ConsentResponse> {
    let Json(req) = body?;
    let lock = st.session_lock(&id);
    {
        let _held = lock.lock().await;
        st.store.record_consent(&ConsentDecision {
            session_id: id.clone(),
            decision: req.decision,
            ts: st.now(),
        })?;
    }
    if req.decision == Consent::Withheld {
        st.forget(&id);
    }
    Ok(Json(ConsentResponse {
        session_id: id,
        decision: req.decision,
        retained: req.decision == Consent::Donated,
    }))
}

/// Statistics over a snapshot of donated sessions. `partial` counts every
/// session still awaiting a decision, including visits in progress.
pub fn current_stats(store: &Store, catalog: &Catalog) -> Result<SummaryStats, StoreError> {
    let dataset = store.donated_records()?;
    let counts = store.counts();
    let outcomes = OutcomeCounts {
        withheld: counts.withheld as usize,
        partial: counts.undetermined,
    };
    Ok(summary_stats(&dataset, outcomes, catalog))
}

async fn stats(State(st): Shared) -> ApiResult<SummaryStats> {
    Ok(Json(current_stats(&st.store, &st.catalog)?))
}

async fn emotion_map(State(st): Shared) -> Result<Response, ApiError> {
    let dataset = st.store.donated_records()?;
    let panels = emotion_map_panels(&dataset, &st.catalog);
    Ok(svg_response(render_emotion_map(&panels, &st.config.emotion_map)))
}
