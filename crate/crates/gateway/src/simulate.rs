//! Seeded synthetic deployments.
//!
//! `default` draws visits at random. `paper-2019` reproduces the published
//! deployment tallies exactly: 131 donated visits, one withheld and 65
//! abandoned part-way. Every donated visit covers five of the six paintings;
//! the first choice, strongest response and skipped painting of each visit
//! are assigned so the per-painting counts come out right.

use std::str::FromStr;

use emotrail_core::affect::{score, FauFrame};
use emotrail_core::catalog::Catalog;
use emotrail_core::postcard::{compose_postcard, render_postcard_svg_with};
use emotrail_core::selection::select_interview_video;
use emotrail_core::selfreport::{AffectSliders, SelfReport};
use emotrail_core::session::{create_session, Consent, Event, EventBody, TransitionError};
use emotrail_core::store::{ConsentDecision, EventRecord, Store, StoreError};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::Config;

/// 2019-08-28T10:00:00Z, opening of the first deployment day.
pub const DEPLOYMENT_START_MS: i64 = 1_566_986_400_000;
const DAY_MS: i64 = 86_400_000;
const FRAME_MS: i64 = 33;
const FRAMES_PER_BATCH: usize = 45;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown profile `{0}` (expected `default` or `paper-2019`)")]
    UnknownProfile(String),
    #[error("catalog lacks painting `{0}`")]
    MissingPainting(String),
    #[error("could not assign skipped paintings")]
    Unassignable,
    #[error("generated event rejected: {0}")]
    Transition(#[from] TransitionError),
    #[error("store: {0}")]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Default,
    Paper2019,
}

impl FromStr for Profile {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Profile, SimError> {
        match s {
            "default" => Ok(Profile::Default),
            "paper-2019" => Ok(Profile::Paper2019),
            other => Err(SimError::UnknownProfile(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimSummary {
    pub donated: usize,
    pub withheld: usize,
    pub partial: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Consent(Consent),
    /// Abandoned after this many events.
    Partial(usize),
}

#[derive(Debug, Clone)]
struct Stop {
    emotion_id: String,
    valence: u8,
    arousal: u8,
    control: u8,
}

#[derive(Debug, Clone)]
struct Visit {
    start_ts: i64,
    stops: Vec<Stop>,
    /// Share of camera frames that are usable.
    fau_quality: f64,
    outcome: Outcome,
}

const FREE_TEXTS: [&str; 10] = [
    "",
    "calm",
    "uneasy, a little cold",
    "warm and nostalgic",
    "restless",
    "curious about the colours",
    "sad for the family",
    "nothing much",
    "tense",
    "it reminded me of home",
];

/// Populates `store`. `n_sessions` is ignored by `paper-2019`, whose size
/// is fixed.
pub fn simulate(
    store: &Store,
    catalog: &Catalog,
    config: &Config,
    n_sessions: usize,
    seed: u64,
    profile: Profile,
) -> Result<SimSummary, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let visits = match profile {
        Profile::Default => default_visits(catalog, n_sessions, &mut rng),
        Profile::Paper2019 => paper_2019_visits(catalog, &mut rng)?,
    };
    let mut summary = SimSummary::default();
    for visit in &visits {
        run_visit(store, catalog, config, visit, &mut rng)?;
        match visit.outcome {
            Outcome::Consent(Consent::Donated) => summary.donated += 1,
            Outcome::Consent(Consent::Withheld) => summary.withheld += 1,
            Outcome::Partial(_) => summary.partial += 1,
        }
    }
    Ok(summary)
}

fn start_ts(i: usize, rng: &mut impl Rng) -> i64 {
    let day = (i % 4) as i64;
    DEPLOYMENT_START_MS + day * DAY_MS + rng.random_range(0..6 * 3_600_000)
}

fn tens(rng: &mut impl Rng, lo: u8, hi: u8) -> u8 {
    rng.random_range(lo / 10..=hi / 10) * 10
}

fn random_stops(catalog: &Catalog, count: usize, rng: &mut impl Rng) -> Vec<Stop> {
    let mut ids: Vec<String> = catalog.emotions().map(|e| e.id.clone()).collect();
    ids.shuffle(rng);
    ids.truncate(count);
    ids.into_iter()
        .map(|emotion_id| Stop {
            emotion_id,
            valence: rng.random_range(0..=100),
            arousal: rng.random_range(0..=100),
            control: rng.random_range(0..=100),
        })
        .collect()
}

/// Number of events a visit with `stops` produces before consent.
fn event_count(stops: usize) -> usize {
    // created, 3 per stop, scan + start, 2 FAU batches, end, postcard.
    1 + 3 * stops + 2 + 2 + 1 + 1
}

fn default_visits(catalog: &Catalog, n: usize, rng: &mut impl Rng) -> Vec<Visit> {
    (0..n)
        .map(|i| {
            let start_ts = start_ts(i, rng);
            let stops = random_stops(catalog, rng.random_range(1..=6), rng);
            let roll: f64 = rng.random();
            let outcome = if roll < 0.80 {
                Outcome::Consent(Consent::Donated)
            } else if roll < 0.85 {
                Outcome::Consent(Consent::Withheld)
            } else {
                Outcome::Partial(rng.random_range(1..event_count(stops.len())))
            };
            Visit {
                start_ts,
                stops,
                fau_quality: rng.random_range(0.2..1.0),
                outcome,
            }
        })
        .collect()
}

// Published tallies, by painting id.
const FIRST_CHOICE: [(&str, usize); 6] = [
    ("vampire", 105),
    ("self-portrait", 15),
    ("madonna", 6),
    ("scream", 2),
    ("sick-child", 2),
    ("christian-munch", 1),
];
const STRONGEST: [(&str, usize); 6] = [
    ("sick-child", 37),
    ("scream", 28),
    ("self-portrait", 23),
    ("vampire", 18),
    ("christian-munch", 17),
    ("madonna", 8),
];
/// Donated visits minus engagements. Vampire and Christian Munch are
/// published (119 and 98); the rest are split evenly.
const SKIPPED: [(&str, usize); 6] = [
    ("vampire", 12),
    ("christian-munch", 33),
    ("self-portrait", 21),
    ("madonna", 22),
    ("scream", 21),
    ("sick-child", 22),
];
const PAPER_DONATED: usize = 131;
const PAPER_WITHHELD: usize = 1;
const PAPER_PARTIAL: usize = 65;

fn expand(counts: &[(&str, usize)]) -> Vec<String> {
    counts
        .iter()
        .flat_map(|(id, n)| std::iter::repeat_n(id.to_string(), *n))
        .collect()
}

/// Assigns one skip slot to each visit so that no visit skips its first
/// or strongest painting (bipartite matching by augmenting paths).
fn assign_skips(first: &[String], strongest: &[String], slots: &[String]) -> Option<Vec<usize>> {
    let n = first.len();
    let allowed = |v: usize, s: usize| slots[s] != first[v] && slots[s] != strongest[v];
    let mut slot_owner: Vec<Option<usize>> = vec![None; slots.len()];

    fn augment(
        v: usize,
        seen: &mut [bool],
        owner: &mut [Option<usize>],
        allowed: &dyn Fn(usize, usize) -> bool,
    ) -> bool {
        for s in 0..owner.len() {
            if seen[s] || !allowed(v, s) {
                continue;
            }
            seen[s] = true;
            if owner[s].is_none_or(|w| augment(w, seen, owner, allowed)) {
                owner[s] = Some(v);
                return true;
            }
        }
        false
    }

    for v in 0..n {
        let mut seen = vec![false; slots.len()];
        if !augment(v, &mut seen, &mut slot_owner, &allowed) {
            return None;
        }
    }
    let mut skip_of = vec![0; n];
    for (s, owner) in slot_owner.iter().enumerate() {
        if let Some(v) = owner {
            skip_of[*v] = s;
        }
    }
    Some(skip_of)
}

fn paper_2019_visits(catalog: &Catalog, rng: &mut impl Rng) -> Result<Vec<Visit>, SimError> {
    let emotion_of = |painting: &str| -> Result<String, SimError> {
        catalog
            .entries()
            .iter()
            .find(|e| e.painting.id == painting)
            .map(|e| e.emotion.id.clone())
            .ok_or_else(|| SimError::MissingPainting(painting.to_owned()))
    };
    let paintings: Vec<String> = catalog.paintings().map(|p| p.id.clone()).collect();

    let first = expand(&FIRST_CHOICE);
    let slots = expand(&SKIPPED);
    let mut strongest = expand(&STRONGEST);
    let mut skips = None;
    for _ in 0..100 {
        strongest.shuffle(rng);
        skips = assign_skips(&first, &strongest, &slots);
        if skips.is_some() {
            break;
        }
    }
    let skips = skips.ok_or(SimError::Unassignable)?;

    let mut visits = Vec::new();
    for v in 0..PAPER_DONATED {
        let skip = &slots[skips[v]];
        let mut rest: Vec<&String> = paintings
            .iter()
            .filter(|p| **p != first[v] && *p != skip)
            .collect();
        rest.shuffle(rng);
        let top = tens(rng, 70, 100);
        let mut stops = Vec::with_capacity(5);
        for painting in std::iter::once(&first[v]).chain(rest) {
            let arousal = if *painting == strongest[v] {
                top
            } else {
                tens(rng, 0, top - 10)
            };
            stops.push(Stop {
                emotion_id: emotion_of(painting)?,
                valence: tens(rng, 0, 100),
                arousal,
                control: tens(rng, 0, 100),
            });
        }
        visits.push(Visit {
            start_ts: 0,
            stops,
            fau_quality: rng.random_range(0.2..1.0),
            outcome: Outcome::Consent(Consent::Donated),
        });
    }
    for _ in 0..PAPER_WITHHELD {
        visits.push(Visit {
            start_ts: 0,
            stops: random_stops(catalog, 5, rng),
            fau_quality: 0.9,
            outcome: Outcome::Consent(Consent::Withheld),
        });
    }
    for _ in 0..PAPER_PARTIAL {
        let stops = random_stops(catalog, rng.random_range(1..=6), rng);
        let stop_after = rng.random_range(1..event_count(stops.len()));
        visits.push(Visit {
            start_ts: 0,
            stops,
            fau_quality: 0.9,
            outcome: Outcome::Partial(stop_after),
        });
    }
    visits.shuffle(rng);
    for (i, visit) in visits.iter_mut().enumerate() {
        visit.start_ts = start_ts(i, rng);
    }
    Ok(visits)
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

fn fau_batch(first_index: usize, quality: f64, pose: &mut [f64; 3], rng: &mut impl Rng) -> Vec<FauFrame> {
    (first_index..first_index + FRAMES_PER_BATCH)
        .map(|k| {
            for p in pose.iter_mut() {
                *p = round3(*p + rng.random_range(-0.02..0.02));
            }
            let valid = rng.random_bool(quality);
            FauFrame {
                ts_ms: k as i64 * FRAME_MS,
                valid,
                confidence: if valid {
                    round3(rng.random_range(0.6..1.0))
                } else {
                    0.0
                },
                au06: round3(rng.random_range(0.0..5.0)),
                au10: round3(rng.random_range(0.0..3.0)),
                au12: round3(rng.random_range(0.0..5.0)),
                au14: round3(rng.random_range(0.0..3.0)),
                au17: round3(rng.random_range(0.0..3.0)),
                pitch: pose[0],
                yaw: pose[1],
                roll: pose[2],
            }
        })
        .collect()
}

fn push(
    session: &mut emotrail_core::session::Session,
    events: &mut Vec<Event>,
    ts: i64,
    body: EventBody,
) -> Result<(), TransitionError> {
    let event = session.next_event(ts, body);
    session.apply(&event)?;
    events.push(event);
    Ok(())
}

fn run_visit(
    store: &Store,
    catalog: &Catalog,
    config: &Config,
    visit: &Visit,
    rng: &mut impl Rng,
) -> Result<(), SimError> {
    let (mut session, created) = create_session(visit.start_ts, rng);
    let id = session.id();
    let mut events: Vec<Event> = vec![created];
    let mut ts = visit.start_ts;
    for stop in &visit.stops {
        ts += rng.random_range(120_000..600_000);
        push(&mut session, &mut events, ts, EventBody::EmotionChosen {
            emotion_id: stop.emotion_id.clone(),
        })?;
        let script = &catalog
            .entry_for_emotion(&stop.emotion_id)
            .map_err(|_| SimError::MissingPainting(stop.emotion_id.clone()))?
            .script;
        ts += (script.total_duration_s() * 1000.0) as i64;
        push(&mut session, &mut events, ts, EventBody::ScriptPlayed {})?;
        ts += rng.random_range(30_000..150_000);
        let report = SelfReport {
            emotion_id: stop.emotion_id.clone(),
            painting_id: catalog
                .painting_for_emotion(&stop.emotion_id)
                .map_err(|_| SimError::MissingPainting(stop.emotion_id.clone()))?
                .id
                .clone(),
            sliders: AffectSliders {
                valence: stop.valence,
                arousal: stop.arousal,
                control: stop.control,
            },
            free_text: FREE_TEXTS[rng.random_range(0..FREE_TEXTS.len())].to_owned(),
            order_index: session.reports.len() as u32 + 1,
            ts,
        };
        push(&mut session, &mut events, ts, EventBody::SelfReportSubmitted { report })?;
    }

    ts += rng.random_range(60_000..300_000);
    let video = select_interview_video(&session.reports).expect("at least one stop");
    push(&mut session, &mut events, ts, EventBody::CardScanned {})?;
    push(&mut session, &mut events, ts, EventBody::InterviewStarted { video })?;
    let mut pose = [0.0; 3];
    for batch in 0..2 {
        ts += 90_000;
        let frames = fau_batch(batch * FRAMES_PER_BATCH, visit.fau_quality, &mut pose, rng);
        push(&mut session, &mut events, ts, EventBody::FauBatchIngested { frames })?;
    }
    ts += 30_000;
    let scores = score(&session.fau_frames, &config.scoring).ok();
    push(&mut session, &mut events, ts, EventBody::InterviewEnded { scores })?;
    let postcard = compose_postcard(&session, session.scores.as_ref(), catalog)
        .expect("at least one report");
    ts += 60_000;
    push(&mut session, &mut events, ts, EventBody::PostcardRendered {
        front_painting_id: postcard.front_painting_id.clone(),
    })?;

    let keep = match visit.outcome {
        Outcome::Partial(n) => n.min(events.len()),
        Outcome::Consent(_) => events.len(),
    };
    let records: Vec<EventRecord> = events[..keep]
        .iter()
        .map(|e| EventRecord::from_event(&id, e))
        .collect();
    store.append_batch(&records)?;
    if keep == events.len() {
        let svg = render_postcard_svg_with(&postcard, catalog, &config.postcard);
        store.write_postcard(&id, &svg, &postcard.sidecar_json())?;
    }
    if let Outcome::Consent(decision) = visit.outcome {
        store.record_consent(&ConsentDecision {
            session_id: id,
            decision,
            ts: ts + 120_000,
        })?;
    }
    Ok(())
}
