//! Affective-slider self-reports and their circumplex coordinates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, CatalogError};

/// Highest slider level; sliders take the integer levels `0..=SLIDER_MAX`.
pub const SLIDER_MAX: u8 = 100;

/// Slider midpoint (rest position).
pub const SLIDER_MID: u8 = 50;

/// Maximum free-text length, in characters.
pub const MAX_FREE_TEXT_CHARS: usize = 280;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelfReportError {
    #[error("raw slider value {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("slider `{field}` value {value} outside 0..={SLIDER_MAX}")]
    SliderOutOfRange { field: &'static str, value: i64 },
    #[error("free text has {0} characters, limit is {MAX_FREE_TEXT_CHARS}")]
    TextTooLong(usize),
    #[error("painting `{painting_id}` does not belong to emotion `{emotion_id}`")]
    MappingMismatch {
        emotion_id: String,
        painting_id: String,
    },
    #[error("unknown emotion `{0}`")]
    UnknownEmotion(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AffectSliders {
    pub valence: u8,
    pub arousal: u8,
    pub control: u8,
}

impl AffectSliders {
    pub fn new(valence: i64, arousal: i64, control: i64) -> Result<Self, SelfReportError> {
        Ok(AffectSliders {
            valence: check_level("valence", valence)?,
            arousal: check_level("arousal", arousal)?,
            control: check_level("control", control)?,
        })
    }

    pub fn validate(&self) -> Result<(), SelfReportError> {
        check_level("valence", self.valence.into())?;
        check_level("arousal", self.arousal.into())?;
        check_level("control", self.control.into())?;
        Ok(())
    }
}

impl Default for AffectSliders {
    fn default() -> Self {
        AffectSliders {
            valence: SLIDER_MID,
            arousal: SLIDER_MID,
            control: SLIDER_MID,
        }
    }
}

fn check_level(field: &'static str, value: i64) -> Result<u8, SelfReportError> {
    if (0..=i64::from(SLIDER_MAX)).contains(&value) {
        Ok(value as u8)
    } else {
        Err(SelfReportError::SliderOutOfRange { field, value })
    }
}

/// Quantizes a raw slider position in `[0, 1]` to a level in `0..=100`,
/// rounding halves up.
pub fn quantize_slider(raw: f64) -> Result<u8, SelfReportError> {
    if !(0.0..=1.0).contains(&raw) {
        return Err(SelfReportError::OutOfRange(raw));
    }
    // The epsilon absorbs binary representation error so that decimal
    // halves such as 0.285 land on the upper level.
    let level = (raw * f64::from(SLIDER_MAX) + 0.5 + 1e-9).floor();
    Ok(level.min(f64::from(SLIDER_MAX)) as u8)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelfReport {
    pub emotion_id: String,
    pub painting_id: String,
    pub sliders: AffectSliders,
    pub free_text: String,
    /// 1-based position among the session's accepted reports.
    pub order_index: u32,
    pub ts: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircumplexPoint {
    pub x: f64,
    pub y: f64,
    pub label: u32,
}

/// Maps a slider level to `[-1, 1]`.
pub fn level_to_axis(level: u8) -> f64 {
    2.0 * (f64::from(level) / f64::from(SLIDER_MAX)) - 1.0
}

/// Inverse of [`level_to_axis`] on grid points.
pub fn axis_to_level(axis: f64) -> u8 {
    ((axis + 1.0) / 2.0 * f64::from(SLIDER_MAX)).round() as u8
}

/// Valence on x, arousal on y. Control is not plotted.
pub fn to_circumplex(s: &AffectSliders) -> (f64, f64) {
    (level_to_axis(s.valence), level_to_axis(s.arousal))
}

impl CircumplexPoint {
    pub fn from_report(r: &SelfReport) -> CircumplexPoint {
        let (x, y) = to_circumplex(&r.sliders);
        CircumplexPoint {
            x,
            y,
            label: r.order_index,
        }
    }
}

pub fn validate_report(r: &SelfReport, catalog: &Catalog) -> Result<(), SelfReportError> {
    r.sliders.validate()?;
    let chars = r.free_text.chars().count();
    if chars > MAX_FREE_TEXT_CHARS {
        return Err(SelfReportError::TextTooLong(chars));
    }
    let painting = catalog
        .painting_for_emotion(&r.emotion_id)
        .map_err(|e| match e {
            CatalogError::UnknownEmotion(id) => SelfReportError::UnknownEmotion(id),
            other => SelfReportError::UnknownEmotion(other.to_string()),
        })?;
    if painting.id != r.painting_id {
        return Err(SelfReportError::MappingMismatch {
            emotion_id: r.emotion_id.clone(),
            painting_id: r.painting_id.clone(),
        });
    }
    Ok(())
}

/// Wire form of a report submission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSubmission {
    pub emotion_id: String,
    pub valence: i64,
    pub arousal: i64,
    pub control: i64,
    #[serde(default)]
    pub free_text: String,
}

impl ReportSubmission {
    /// Resolves the painting from the catalog and validates the result.
    pub fn into_report(
        self,
        order_index: u32,
        ts: i64,
        catalog: &Catalog,
    ) -> Result<SelfReport, SelfReportError> {
        let sliders = AffectSliders::new(self.valence, self.arousal, self.control)?;
        let painting_id = catalog
            .painting_for_emotion(&self.emotion_id)
            .map_err(|_| SelfReportError::UnknownEmotion(self.emotion_id.clone()))?
            .id
            .clone();
        let report = SelfReport {
            emotion_id: self.emotion_id,
            painting_id,
            sliders,
            free_text: self.free_text,
            order_index,
            ts,
        };
        validate_report(&report, catalog)?;
        Ok(report)
    }
}
