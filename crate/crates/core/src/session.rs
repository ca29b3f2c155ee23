//! Event-sourced visitor session.
//!
//! A session is the fold of its event log. [`Session::apply`] validates one
//! event against the current state and either advances the state or leaves
//! it untouched and reports why the event is illegal. The canonical route:
//!
//! ```text
//! Registered -> Touring(Selected -> Listening -> Reporting)* -> InterviewReady
//!            -> InCall -> PostcardIssued -> ConsentResolved
//! ```

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::affect::{check_monotone, AffectScores, FauFrame, FauParseError};
use crate::selection::VideoChoice;
use crate::selfreport::SelfReport;

/// Most emotions a visitor can choose in one visit.
pub const MAX_EMOTIONS: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisitorToken {
    /// Three decimal digits printed on the card.
    pub code: String,
    pub token_id: Uuid,
}

pub fn format_code(n: u16) -> String {
    format!("{:03}", n % 1000)
}

pub fn is_valid_code(code: &str) -> bool {
    code.len() == 3 && code.bytes().all(|b| b.is_ascii_digit())
}

impl VisitorToken {
    pub fn generate<R: Rng + ?Sized>(rng: &mut R) -> VisitorToken {
        VisitorToken {
            code: format_code(rng.random_range(0..1000)),
            token_id: uuid::Builder::from_random_bytes(rng.random()).into_uuid(),
        }
    }

    /// Session identifier derived from the token id (32 lowercase hex digits).
    pub fn session_id(&self) -> String {
        self.token_id.simple().to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    Registered,
    Touring,
    InterviewReady,
    InCall,
    PostcardIssued,
    ConsentResolved,
}

impl Phase {
    pub const ALL: [Phase; 6] = [
        Phase::Registered,
        Phase::Touring,
        Phase::InterviewReady,
        Phase::InCall,
        Phase::PostcardIssued,
        Phase::ConsentResolved,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TouringStep {
    /// Painting chosen, script not yet played.
    Selected,
    /// Script played; awaiting the self-report.
    Listening,
    /// Self-report submitted for the current painting.
    Reporting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Consent {
    Donated,
    Withheld,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionState {
    pub phase: Phase,
    pub touring_sub: Option<TouringStep>,
    pub current_emotion: Option<String>,
    pub consent: Option<Consent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    SessionCreated,
    EmotionChosen,
    ScriptPlayed,
    SelfReportSubmitted,
    CardScanned,
    InterviewStarted,
    FauBatchIngested,
    InterviewEnded,
    PostcardRendered,
    ConsentRecorded,
}

impl EventKind {
    pub const ALL: [EventKind; 10] = [
        EventKind::SessionCreated,
        EventKind::EmotionChosen,
        EventKind::ScriptPlayed,
        EventKind::SelfReportSubmitted,
        EventKind::CardScanned,
        EventKind::InterviewStarted,
        EventKind::FauBatchIngested,
        EventKind::InterviewEnded,
        EventKind::PostcardRendered,
        EventKind::ConsentRecorded,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::SessionCreated => "SessionCreated",
            EventKind::EmotionChosen => "EmotionChosen",
            EventKind::ScriptPlayed => "ScriptPlayed",
            EventKind::SelfReportSubmitted => "SelfReportSubmitted",
            EventKind::CardScanned => "CardScanned",
            EventKind::InterviewStarted => "InterviewStarted",
            EventKind::FauBatchIngested => "FauBatchIngested",
            EventKind::InterviewEnded => "InterviewEnded",
            EventKind::PostcardRendered => "PostcardRendered",
            EventKind::ConsentRecorded => "ConsentRecorded",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Event payloads. Serialized as `{"kind": ..., "payload": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", deny_unknown_fields)]
pub enum EventBody {
    SessionCreated { code: String, token_id: Uuid },
    EmotionChosen { emotion_id: String },
    ScriptPlayed {},
    SelfReportSubmitted { report: SelfReport },
    CardScanned {},
    InterviewStarted { video: VideoChoice },
    FauBatchIngested { frames: Vec<FauFrame> },
    /// `scores` is `None` when the stream had too little valid data.
    InterviewEnded { scores: Option<AffectScores> },
    PostcardRendered { front_painting_id: String },
    ConsentRecorded { decision: Consent },
}

impl EventBody {
    pub fn kind(&self) -> EventKind {
        match self {
            EventBody::SessionCreated { .. } => EventKind::SessionCreated,
            EventBody::EmotionChosen { .. } => EventKind::EmotionChosen,
            EventBody::ScriptPlayed {} => EventKind::ScriptPlayed,
            EventBody::SelfReportSubmitted { .. } => EventKind::SelfReportSubmitted,
            EventBody::CardScanned {} => EventKind::CardScanned,
            EventBody::InterviewStarted { .. } => EventKind::InterviewStarted,
            EventBody::FauBatchIngested { .. } => EventKind::FauBatchIngested,
            EventBody::InterviewEnded { .. } => EventKind::InterviewEnded,
            EventBody::PostcardRendered { .. } => EventKind::PostcardRendered,
            EventBody::ConsentRecorded { .. } => EventKind::ConsentRecorded,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub ts: i64,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransitionError {
    #[error("expected seq {expected}, got {got}")]
    SequenceMismatch { expected: u64, got: u64 },
    #[error("{kind} is not allowed in phase {phase:?}")]
    InvalidTransition { phase: Phase, kind: EventKind },
    #[error("emotion `{0}` already used")]
    EmotionReuse(String),
    #[error("card scanned before any self-report")]
    NoReports,
    #[error("report does not match the current selection: {0}")]
    ReportMismatch(String),
    #[error("FAU batch rejected: {0}")]
    Fau(#[from] FauParseError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReplayError {
    #[error("empty event log")]
    Empty,
    #[error("event log does not start with SessionCreated at seq 1")]
    NotCreated,
    #[error("event seq {seq} rejected: {source}")]
    Rejected {
        seq: u64,
        #[source]
        source: TransitionError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub token: VisitorToken,
    pub state: SessionState,
    pub reports: Vec<SelfReport>,
    pub emotions_used: BTreeSet<String>,
    pub scores: Option<AffectScores>,
    pub chosen_video: Option<VideoChoice>,
    pub fau_frames: Vec<FauFrame>,
    pub interview_ended: bool,
    pub created_ts: i64,
    pub last_seq: u64,
    pub last_ts: i64,
}

/// Starts a new session; returns it with its `SessionCreated` event.
pub fn create_session<R: Rng + ?Sized>(now: i64, rng: &mut R) -> (Session, Event) {
    create_session_avoiding(now, rng, |_| false)
}

/// Like [`create_session`], redrawing the card code while `code_taken`
/// reports a clash. Falls back to any code once all 1000 are taken.
pub fn create_session_avoiding<R, F>(now: i64, rng: &mut R, code_taken: F) -> (Session, Event)
where
    R: Rng + ?Sized,
    F: Fn(&str) -> bool,
{
    let mut token = VisitorToken::generate(rng);
    for _ in 0..4096 {
        if !code_taken(&token.code) {
            break;
        }
        token = VisitorToken::generate(rng);
    }
    let event = Event {
        seq: 1,
        ts: now,
        body: EventBody::SessionCreated {
            code: token.code.clone(),
            token_id: token.token_id,
        },
    };
    let session = Session::from_created(&event).expect("fresh SessionCreated");
    (session, event)
}

impl Session {
    pub fn from_created(event: &Event) -> Result<Session, ReplayError> {
        match &event.body {
            EventBody::SessionCreated { code, token_id } if event.seq == 1 => Ok(Session {
                token: VisitorToken {
                    code: code.clone(),
                    token_id: *token_id,
                },
                state: SessionState {
                    phase: Phase::Registered,
                    touring_sub: None,
                    current_emotion: None,
                    consent: None,
                },
                reports: Vec::new(),
                emotions_used: BTreeSet::new(),
                scores: None,
                chosen_video: None,
                fau_frames: Vec::new(),
                interview_ended: false,
                created_ts: event.ts,
                last_seq: 1,
                last_ts: event.ts,
            }),
            _ => Err(ReplayError::NotCreated),
        }
    }

    pub fn id(&self) -> String {
        self.token.session_id()
    }

    pub fn phase(&self) -> Phase {
        self.state.phase
    }

    fn reject(&self, kind: EventKind) -> TransitionError {
        TransitionError::InvalidTransition {
            phase: self.state.phase,
            kind,
        }
    }

    /// Applies one event in place. On error the session is unchanged.
    pub fn apply(&mut self, event: &Event) -> Result<(), TransitionError> {
        let expected = self.last_seq + 1;
        if event.seq != expected {
            return Err(TransitionError::SequenceMismatch {
                expected,
                got: event.seq,
            });
        }
        let kind = event.body.kind();
        let phase = self.state.phase;
        let sub = self.state.touring_sub;
        match &event.body {
            EventBody::SessionCreated { .. } => return Err(self.reject(kind)),
            EventBody::EmotionChosen { emotion_id } => {
                if !matches!(phase, Phase::Registered | Phase::Touring) {
                    return Err(self.reject(kind));
                }
                if self.emotions_used.contains(emotion_id) {
                    return Err(TransitionError::EmotionReuse(emotion_id.clone()));
                }
                if self.emotions_used.len() >= MAX_EMOTIONS {
                    return Err(self.reject(kind));
                }
                self.emotions_used.insert(emotion_id.clone());
                self.state.phase = Phase::Touring;
                self.state.touring_sub = Some(TouringStep::Selected);
                self.state.current_emotion = Some(emotion_id.clone());
            }
            EventBody::ScriptPlayed {} => {
                if sub != Some(TouringStep::Selected) {
                    return Err(self.reject(kind));
                }
                self.state.touring_sub = Some(TouringStep::Listening);
            }
            EventBody::SelfReportSubmitted { report } => {
                if sub != Some(TouringStep::Listening) {
                    return Err(self.reject(kind));
                }
                if self.state.current_emotion.as_deref() != Some(report.emotion_id.as_str()) {
                    return Err(TransitionError::ReportMismatch(format!(
                        "report is for `{}`, current emotion is `{}`",
                        report.emotion_id,
                        self.state.current_emotion.as_deref().unwrap_or("")
                    )));
                }
                let next_index = self.reports.len() as u32 + 1;
                if report.order_index != next_index {
                    return Err(TransitionError::ReportMismatch(format!(
                        "order_index {} but {} reports accepted",
                        report.order_index,
                        self.reports.len()
                    )));
                }
                self.reports.push(report.clone());
                self.state.touring_sub = Some(TouringStep::Reporting);
            }
            EventBody::CardScanned {} => {
                if !matches!(phase, Phase::Registered | Phase::Touring) {
                    return Err(self.reject(kind));
                }
                if self.reports.is_empty() {
                    return Err(TransitionError::NoReports);
                }
                self.state.phase = Phase::InterviewReady;
                self.state.touring_sub = None;
                self.state.current_emotion = None;
            }
            EventBody::InterviewStarted { video } => {
                if phase != Phase::InterviewReady {
                    return Err(self.reject(kind));
                }
                self.state.phase = Phase::InCall;
                self.chosen_video = Some(video.clone());
            }
            EventBody::FauBatchIngested { frames } => {
                if phase != Phase::InCall || self.interview_ended {
                    return Err(self.reject(kind));
                }
                check_monotone(self.fau_frames.last().map(|f| f.ts_ms), frames)?;
                self.fau_frames.extend_from_slice(frames);
            }
            EventBody::InterviewEnded { scores } => {
                if phase != Phase::InCall || self.interview_ended {
                    return Err(self.reject(kind));
                }
                self.interview_ended = true;
                self.scores = *scores;
            }
            EventBody::PostcardRendered { .. } => {
                if phase != Phase::InCall || !self.interview_ended {
                    return Err(self.reject(kind));
                }
                self.state.phase = Phase::PostcardIssued;
            }
            EventBody::ConsentRecorded { decision } => {
                if phase != Phase::PostcardIssued {
                    return Err(self.reject(kind));
                }
                self.state.phase = Phase::ConsentResolved;
                self.state.consent = Some(*decision);
            }
        }
        self.last_seq = event.seq;
        self.last_ts = event.ts;
        Ok(())
    }

    /// Builds the next event for this session with the given body.
    pub fn next_event(&self, ts: i64, body: EventBody) -> Event {
        Event {
            seq: self.last_seq + 1,
            ts,
            body,
        }
    }
}

/// Pure form of [`Session::apply`].
pub fn apply_event(session: &Session, event: &Event) -> Result<Session, TransitionError> {
    let mut next = session.clone();
    next.apply(event)?;
    Ok(next)
}

pub fn replay(events: &[Event]) -> Result<Session, ReplayError> {
    let (first, rest) = events.split_first().ok_or(ReplayError::Empty)?;
    let mut session = Session::from_created(first)?;
    for event in rest {
        session
            .apply(event)
            .map_err(|source| ReplayError::Rejected {
                seq: event.seq,
                source,
            })?;
    }
    Ok(session)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affect::FauFrame;
    use crate::catalog::Polarity;
    use crate::selfreport::AffectSliders;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn report(emotion: &str, idx: u32) -> SelfReport {
        SelfReport {
            emotion_id: emotion.into(),
            painting_id: format!("p-{emotion}"),
            sliders: AffectSliders::default(),
            free_text: "x".into(),
            order_index: idx,
            ts: 0,
        }
    }

    fn push(s: &mut Session, log: &mut Vec<Event>, body: EventBody) -> Result<(), TransitionError> {
        let ev = s.next_event(s.last_ts + 1, body);
        s.apply(&ev)?;
        log.push(ev);
        Ok(())
    }

    fn happy_path() -> (Session, Vec<Event>) {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (mut s, created) = create_session(1_000, &mut rng);
        let mut log = vec![created];
        let frames = |start: i64| -> Vec<FauFrame> {
            (0..20).map(|i| FauFrame::neutral(start + i * 33)).collect()
        };
        for body in [
            EventBody::EmotionChosen { emotion_id: "love".into() },
            EventBody::ScriptPlayed {},
            EventBody::SelfReportSubmitted { report: report("love", 1) },
            EventBody::CardScanned {},
            EventBody::InterviewStarted {
                video: VideoChoice {
                    painting_id: "p-love".into(),
                    polarity: Polarity::Positive,
                    source_report_index: 1,
                },
            },
            EventBody::FauBatchIngested { frames: frames(0) },
            EventBody::FauBatchIngested { frames: frames(1000) },
            EventBody::InterviewEnded { scores: None },
            EventBody::PostcardRendered { front_painting_id: "p-love".into() },
            EventBody::ConsentRecorded { decision: Consent::Donated },
        ] {
            push(&mut s, &mut log, body).unwrap();
        }
        (s, log)
    }

    #[test]
    fn create_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, ev) = create_session(5, &mut rng);
        assert_eq!(a.phase(), Phase::Registered);
        assert!(a.reports.is_empty());
        assert_eq!(ev.seq, 1);
        assert!(is_valid_code(&a.token.code));
        let (b, _) = create_session(5, &mut rng);
        assert_ne!(a.token.token_id, b.token.token_id);
        assert_eq!(format_code(7), "007");
        assert_eq!(a.id().len(), 32);
    }

    #[test]
    fn code_clash_is_redrawn() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (s, _) = create_session_avoiding(0, &mut rng, |c| c != "042");
        assert_eq!(s.token.code, "042");
    }

    #[test]
    fn first_transition_and_reuse() {
        let (s, _) = happy_path();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (fresh, _) = create_session(0, &mut rng);
        let chosen = apply_event(
            &fresh,
            &fresh.next_event(1, EventBody::EmotionChosen { emotion_id: "love".into() }),
        )
        .unwrap();
        assert_eq!(chosen.phase(), Phase::Touring);
        assert_eq!(chosen.state.touring_sub, Some(TouringStep::Selected));
        assert_eq!(chosen.emotions_used, BTreeSet::from(["love".to_string()]));
        let again = apply_event(
            &chosen,
            &chosen.next_event(2, EventBody::EmotionChosen { emotion_id: "love".into() }),
        );
        assert_eq!(again, Err(TransitionError::EmotionReuse("love".into())));
        assert_eq!(s.phase(), Phase::ConsentResolved);
    }

    #[test]
    fn card_scan_without_reports() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (fresh, _) = create_session(0, &mut rng);
        let r = apply_event(&fresh, &fresh.next_event(1, EventBody::CardScanned {}));
        assert_eq!(r, Err(TransitionError::NoReports));
    }

    #[test]
    fn replay_examples() {
        assert_eq!(replay(&[]), Err(ReplayError::Empty));
        let (live, log) = happy_path();
        assert_eq!(log.len(), 11);
        let replayed = replay(&log).unwrap();
        assert_eq!(replayed, live);
        assert_eq!(replayed.state.consent, Some(Consent::Donated));
        assert_eq!(replayed.fau_frames.len(), 40);

        let mut broken = log.clone();
        broken.remove(3);
        assert!(matches!(
            replay(&broken),
            Err(ReplayError::Rejected { seq: 5, source: TransitionError::SequenceMismatch { .. } })
        ));
        assert_eq!(replay(&log[1..]), Err(ReplayError::NotCreated));
    }

    #[test]
    fn second_scan_after_interview_is_invalid() {
        let (live, log) = happy_path();
        let after_end = replay(&log[..8]).unwrap();
        assert_eq!(after_end.phase(), Phase::InCall);
        assert!(matches!(
            after_end.clone().apply(&after_end.next_event(0, EventBody::CardScanned {})),
            Err(TransitionError::InvalidTransition { kind: EventKind::CardScanned, .. })
        ));
        assert!(live.clone().apply(&live.next_event(0, EventBody::CardScanned {})).is_err());
    }

    #[test]
    fn fau_batches_must_continue_in_time() {
        let (_, log) = happy_path();
        let mut s = replay(&log[..7]).unwrap();
        let stale = s.next_event(0, EventBody::FauBatchIngested { frames: vec![FauFrame::neutral(5)] });
        assert!(matches!(s.apply(&stale), Err(TransitionError::Fau(_))));
        assert_eq!(s.fau_frames.len(), 20);
    }

    #[test]
    fn report_must_match_current_emotion() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (mut s, created) = create_session(0, &mut rng);
        let mut log = vec![created];
        push(&mut s, &mut log, EventBody::EmotionChosen { emotion_id: "fear".into() }).unwrap();
        // No report before the script has played.
        assert!(push(&mut s, &mut log, EventBody::SelfReportSubmitted { report: report("fear", 1) }).is_err());
        push(&mut s, &mut log, EventBody::ScriptPlayed {}).unwrap();
        assert!(matches!(
            push(&mut s, &mut log, EventBody::SelfReportSubmitted { report: report("love", 1) }),
            Err(TransitionError::ReportMismatch(_))
        ));
        assert!(matches!(
            push(&mut s, &mut log, EventBody::SelfReportSubmitted { report: report("fear", 2) }),
            Err(TransitionError::ReportMismatch(_))
        ));
        push(&mut s, &mut log, EventBody::SelfReportSubmitted { report: report("fear", 1) }).unwrap();
        assert!(push(&mut s, &mut log, EventBody::SelfReportSubmitted { report: report("fear", 2) }).is_err());
    }

    #[test]
    fn event_serialization_shape() {
        let ev = Event {
            seq: 2,
            ts: 10,
            body: EventBody::EmotionChosen { emotion_id: "love".into() },
        };
        let v = serde_json::to_value(&ev).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"seq": 2, "ts": 10, "kind": "EmotionChosen", "payload": {"emotion_id": "love"}})
        );
        let unit = serde_json::to_value(EventBody::ScriptPlayed {}).unwrap();
        assert_eq!(unit, serde_json::json!({"kind": "ScriptPlayed", "payload": {}}));
        let back: Event = serde_json::from_value(v).unwrap();
        assert_eq!(back, ev);
    }
}
