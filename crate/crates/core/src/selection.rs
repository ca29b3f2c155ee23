//! Interview video selection.
//!
//! The winning report is the one with the highest arousal. Arousal ties are
//! broken by extremity (distance from the slider midpoint) of the configured
//! tie keys, valence first and control second by default, and finally by
//! earliest visit order. Polarity follows the winner's valence.

use std::cmp::{Ordering, Reverse};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Polarity;
use crate::selfreport::{SelfReport, SLIDER_MID};

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum SelectionError {
    #[error("no self-reports to select from")]
    EmptyReports,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoChoice {
    pub painting_id: String,
    pub polarity: Polarity,
    pub source_report_index: u32,
}

/// Secondary comparator key used when arousal ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieKey {
    ValenceExtremity,
    ControlExtremity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub tie_keys: Vec<TieKey>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            tie_keys: vec![TieKey::ValenceExtremity, TieKey::ControlExtremity],
        }
    }
}

fn extremity(level: u8) -> u8 {
    level.abs_diff(SLIDER_MID)
}

impl TieKey {
    fn value(self, r: &SelfReport) -> u8 {
        match self {
            TieKey::ValenceExtremity => extremity(r.sliders.valence),
            TieKey::ControlExtremity => extremity(r.sliders.control),
        }
    }
}

/// Total order on reports; the greatest report wins.
fn compare(a: &SelfReport, b: &SelfReport, config: &SelectionConfig) -> Ordering {
    a.sliders
        .arousal
        .cmp(&b.sliders.arousal)
        .then_with(|| {
            config
                .tie_keys
                .iter()
                .map(|k| k.value(a).cmp(&k.value(b)))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
        .then_with(|| Reverse(a.order_index).cmp(&Reverse(b.order_index)))
}

pub fn strongest_report(reports: &[SelfReport]) -> Result<&SelfReport, SelectionError> {
    strongest_report_with(reports, &SelectionConfig::default())
}

pub fn strongest_report_with<'a>(
    reports: &'a [SelfReport],
    config: &SelectionConfig,
) -> Result<&'a SelfReport, SelectionError> {
    reports
        .iter()
        .reduce(|best, r| {
            if compare(r, best, config) == Ordering::Greater {
                r
            } else {
                best
            }
        })
        .ok_or(SelectionError::EmptyReports)
}

/// Midpoint valence counts as positive.
pub fn polarity_for_valence(valence: u8) -> Polarity {
    if valence >= SLIDER_MID {
        Polarity::Positive
    } else {
        Polarity::Negative
    }
}

pub fn select_interview_video(reports: &[SelfReport]) -> Result<VideoChoice, SelectionError> {
    select_interview_video_with(reports, &SelectionConfig::default())
}

pub fn select_interview_video_with(
    reports: &[SelfReport],
    config: &SelectionConfig,
) -> Result<VideoChoice, SelectionError> {
    let winner = strongest_report_with(reports, config)?;
    Ok(VideoChoice {
        painting_id: winner.painting_id.clone(),
        polarity: polarity_for_valence(winner.sliders.valence),
        source_report_index: winner.order_index,
    })
}
