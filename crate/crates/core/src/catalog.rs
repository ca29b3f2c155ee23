//! Exhibit catalog: the fixed binding of emotions to paintings, scripts and
//! interview videos.
//!
//! A catalog is loaded once from a TOML document and is immutable afterwards.
//! Validation enforces the shape the rest of the system relies on: six
//! entries, a bijection between emotions and paintings, and exactly one
//! interview video per (painting, polarity) pair.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of emotion entries in a valid catalog.
pub const CATALOG_SIZE: usize = 6;

const DEFAULT_CATALOG: &str = include_str!("../assets/default_catalog.toml");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CatalogError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("unknown emotion `{0}`")]
    UnknownEmotion(String),
    #[error("unknown painting `{0}`")]
    UnknownPainting(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Emotion {
    pub id: String,
    pub display_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Painting {
    pub id: String,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    pub image_ref: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
}

impl Painting {
    /// True if `name` is the title or one of the recorded aliases.
    pub fn is_known_as(&self, name: &str) -> bool {
        self.title == name || self.aliases.iter().any(|a| a == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Script {
    pub story_text: String,
    pub fact_text: String,
    pub question_text: String,
    pub story_duration_s: f64,
    pub fact_duration_s: f64,
    pub question_duration_s: f64,
}

impl Script {
    pub fn total_duration_s(&self) -> f64 {
        self.story_duration_s + self.fact_duration_s + self.question_duration_s
    }
}

/// Framing of an interview video.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub const ALL: [Polarity; 2] = [Polarity::Positive, Polarity::Negative];

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterviewVideo {
    pub painting_id: String,
    pub polarity: Polarity,
    pub media_ref: String,
    pub transcript: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub emotion: Emotion,
    pub painting: Painting,
    pub script: Script,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Catalog {
    entries: Vec<CatalogEntry>,
    videos: Vec<InterviewVideo>,
}

// On-disk schema. Field names are part of the external interface.

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCatalog {
    emotions: Vec<RawEmotion>,
    #[serde(default)]
    videos: Vec<InterviewVideo>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEmotion {
    id: String,
    display_name: String,
    painting: Painting,
    script: RawScript,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScript {
    story_text: String,
    fact_text: String,
    question_text: String,
    durations: RawDurations,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDurations {
    story_s: f64,
    fact_s: f64,
    question_s: f64,
}

/// Lowercase token: `[a-z0-9]` plus `-` and `_`, non-empty.
pub fn is_token(s: &str) -> bool {
    !s.is_empty()
        && s
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-' || b == b'_')
}

fn invalid(msg: impl Into<String>) -> CatalogError {
    CatalogError::Validation(msg.into())
}

impl Catalog {
    /// Parses and validates a catalog document.
    pub fn load(config: &[u8]) -> Result<Catalog, CatalogError> {
        let text = std::str::from_utf8(config).map_err(|e| CatalogError::Parse(e.to_string()))?;
        let raw: RawCatalog = toml::from_str(text).map_err(|e| CatalogError::Parse(e.to_string()))?;
        let entries = raw
            .emotions
            .into_iter()
            .map(|e| CatalogEntry {
                emotion: Emotion {
                    id: e.id,
                    display_name: e.display_name,
                },
                painting: e.painting,
                script: Script {
                    story_text: e.script.story_text,
                    fact_text: e.script.fact_text,
                    question_text: e.script.question_text,
                    story_duration_s: e.script.durations.story_s,
                    fact_duration_s: e.script.durations.fact_s,
                    question_duration_s: e.script.durations.question_s,
                },
            })
            .collect();
        Catalog::from_parts(entries, raw.videos)
    }

    /// The catalog bundled with the crate.
    pub fn bundled() -> Catalog {
        Catalog::load(DEFAULT_CATALOG.as_bytes()).expect("bundled catalog is valid")
    }

    pub fn bundled_source() -> &'static str {
        DEFAULT_CATALOG
    }

    pub fn from_parts(
        entries: Vec<CatalogEntry>,
        videos: Vec<InterviewVideo>,
    ) -> Result<Catalog, CatalogError> {
        let catalog = Catalog { entries, videos };
        catalog.validate()?;
        Ok(catalog)
    }

    fn validate(&self) -> Result<(), CatalogError> {
        if self.entries.len() != CATALOG_SIZE {
            return Err(invalid(format!(
                "entry count: expected {CATALOG_SIZE}, found {}",
                self.entries.len()
            )));
        }
        let mut emotion_ids = HashSet::new();
        let mut painting_ids = HashSet::new();
        for entry in &self.entries {
            let e = &entry.emotion;
            let p = &entry.painting;
            if !is_token(&e.id) {
                return Err(invalid(format!("emotion id `{}` is not a lowercase token", e.id)));
            }
            if !emotion_ids.insert(e.id.as_str()) {
                return Err(invalid(format!("duplicate emotion `{}`", e.id)));
            }
            if !is_token(&p.id) {
                return Err(invalid(format!("painting id `{}` is not a lowercase token", p.id)));
            }
            if !painting_ids.insert(p.id.as_str()) {
                return Err(invalid(format!("duplicate painting `{}`", p.id)));
            }
            if p.title.trim().is_empty() {
                return Err(invalid(format!("empty title for painting `{}`", p.id)));
            }
            let s = &entry.script;
            for (name, text) in [
                ("story_text", &s.story_text),
                ("fact_text", &s.fact_text),
                ("question_text", &s.question_text),
            ] {
                if text.trim().is_empty() {
                    return Err(invalid(format!("empty script {name} for emotion `{}`", e.id)));
                }
            }
            for (name, d) in [
                ("story", s.story_duration_s),
                ("fact", s.fact_duration_s),
                ("question", s.question_duration_s),
            ] {
                if !(d.is_finite() && d > 0.0) {
                    return Err(invalid(format!(
                        "non-positive {name} duration for emotion `{}`",
                        e.id
                    )));
                }
            }
        }

        let mut seen = BTreeSet::new();
        for v in &self.videos {
            if !painting_ids.contains(v.painting_id.as_str()) {
                return Err(invalid(format!(
                    "video references unknown painting `{}`",
                    v.painting_id
                )));
            }
            if !seen.insert((v.painting_id.as_str(), v.polarity)) {
                return Err(invalid(format!(
                    "duplicate video for ({}, {})",
                    v.painting_id, v.polarity
                )));
            }
        }
        for entry in &self.entries {
            for polarity in Polarity::ALL {
                if !seen.contains(&(entry.painting.id.as_str(), polarity)) {
                    return Err(invalid(format!(
                        "missing polarity: no {polarity} video for `{}`",
                        entry.painting.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Entries in grid order.
    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn videos(&self) -> &[InterviewVideo] {
        &self.videos
    }

    pub fn emotions(&self) -> impl Iterator<Item = &Emotion> {
        self.entries.iter().map(|e| &e.emotion)
    }

    pub fn paintings(&self) -> impl Iterator<Item = &Painting> {
        self.entries.iter().map(|e| &e.painting)
    }

    pub fn entry_for_emotion(&self, emotion_id: &str) -> Result<&CatalogEntry, CatalogError> {
        self.entries
            .iter()
            .find(|e| e.emotion.id == emotion_id)
            .ok_or_else(|| CatalogError::UnknownEmotion(emotion_id.to_owned()))
    }

    pub fn painting_for_emotion(&self, emotion_id: &str) -> Result<&Painting, CatalogError> {
        self.entry_for_emotion(emotion_id).map(|e| &e.painting)
    }

    pub fn painting(&self, painting_id: &str) -> Result<&Painting, CatalogError> {
        self.paintings()
            .find(|p| p.id == painting_id)
            .ok_or_else(|| CatalogError::UnknownPainting(painting_id.to_owned()))
    }

    pub fn video(&self, painting_id: &str, polarity: Polarity) -> Result<&InterviewVideo, CatalogError> {
        self.videos
            .iter()
            .find(|v| v.painting_id == painting_id && v.polarity == polarity)
            .ok_or_else(|| CatalogError::UnknownPainting(painting_id.to_owned()))
    }

    pub fn contains_emotion(&self, emotion_id: &str) -> bool {
        self.entries.iter().any(|e| e.emotion.id == emotion_id)
    }
}
