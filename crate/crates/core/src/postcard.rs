//! Souvenir postcard composition and SVG rendering.
//!
//! The back of the card carries a circumplex plot of the visitor's
//! self-reports numbered in visit order, one sentence per painting, a
//! sentence summarizing the camera's reading, and a closing question. The
//! front shows the painting with the strongest reported reaction.

use std::f64::consts::PI;
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affect::{quantize_levels, AffectLevels, AffectScores};
use crate::catalog::Catalog;
use crate::selection::strongest_report;
use crate::selfreport::{CircumplexPoint, SelfReport};
use crate::session::Session;
use crate::svg::{escape, num, wrap, wrapped_text};

pub const CLOSING_QUESTION: &str = "Do you think this is actually what you felt?";

/// Printed when the camera stream had too little valid data to score.
pub const CV_FALLBACK_SENTENCE: &str =
    "The camera could not read your expressions well enough to say.";

/// Substituted for an empty free-text answer.
pub const EMPTY_ANSWER: &str = "\u{2026}";

const DEGREE_WORDS: [&str; 4] = ["not at all", "a little", "somewhat", "very"];
const ENJOYMENT_WORDS: [&str; 4] = ["not at all", "a little", "somewhat", "a lot"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PostcardError {
    #[error("session has no self-reports")]
    NoReports,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostcardData {
    pub front_painting_id: String,
    pub points: Vec<CircumplexPoint>,
    pub sentences: Vec<String>,
    pub cv_sentence: String,
    pub closing_question: String,
}

/// Structured companion written next to the SVG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostcardSidecar {
    pub front_painting_id: String,
    pub points: Vec<CircumplexPoint>,
    pub sentences: Vec<String>,
    pub cv_sentence: String,
}

impl PostcardData {
    pub fn sidecar(&self) -> PostcardSidecar {
        PostcardSidecar {
            front_painting_id: self.front_painting_id.clone(),
            points: self.points.clone(),
            sentences: self.sentences.clone(),
            cv_sentence: self.cv_sentence.clone(),
        }
    }

    pub fn sidecar_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.sidecar()).expect("sidecar serializes");
        s.push('\n');
        s
    }
}

pub fn sentence_for_report(r: &SelfReport, catalog: &Catalog) -> String {
    let title = catalog
        .painting(&r.painting_id)
        .map(|p| p.title.as_str())
        .unwrap_or(r.painting_id.as_str());
    let felt = if r.free_text.is_empty() {
        EMPTY_ANSWER
    } else {
        r.free_text.as_str()
    };
    format!("At the \"{title}\" you felt {felt}")
}

pub fn sentence_for_levels(l: &AffectLevels) -> String {
    let word = |words: &[&'static str; 4], level: u8| words[usize::from(level.min(3))];
    format!(
        "It seems like this experience has left you {} frustrated, {} engaged, and you enjoyed it {}.",
        word(&DEGREE_WORDS, l.frustration_level),
        word(&DEGREE_WORDS, l.engagement_level),
        word(&ENJOYMENT_WORDS, l.enjoyment_level),
    )
}

pub fn cv_sentence(scores: Option<&AffectScores>) -> String {
    match scores {
        Some(s) => sentence_for_levels(&quantize_levels(s)),
        None => CV_FALLBACK_SENTENCE.to_owned(),
    }
}

/// Composes the postcard from the session's reports. `scores` is `None`
/// when scoring reported insufficient data.
pub fn compose_postcard(
    session: &Session,
    scores: Option<&AffectScores>,
    catalog: &Catalog,
) -> Result<PostcardData, PostcardError> {
    compose_from_reports(&session.reports, scores, catalog)
}

pub fn compose_from_reports(
    reports: &[SelfReport],
    scores: Option<&AffectScores>,
    catalog: &Catalog,
) -> Result<PostcardData, PostcardError> {
    let front = strongest_report(reports).map_err(|_| PostcardError::NoReports)?;
    let mut ordered: Vec<&SelfReport> = reports.iter().collect();
    ordered.sort_by_key(|r| r.order_index);
    Ok(PostcardData {
        front_painting_id: front.painting_id.clone(),
        points: ordered.iter().map(|r| CircumplexPoint::from_report(r)).collect(),
        sentences: ordered.iter().map(|r| sentence_for_report(r, catalog)).collect(),
        cv_sentence: cv_sentence(scores),
        closing_question: CLOSING_QUESTION.to_owned(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostcardStyle {
    pub heading: String,
    pub camera_heading: String,
    pub valence_low: String,
    pub valence_high: String,
    pub arousal_low: String,
    pub arousal_high: String,
    pub dot_color: String,
}

impl Default for PostcardStyle {
    fn default() -> Self {
        PostcardStyle {
            heading: "The emotions you shared with us, on the circumplex model:".into(),
            camera_heading: "What the camera read from your face during the call:".into(),
            valence_low: "unpleasant".into(),
            valence_high: "pleasant".into(),
            arousal_low: "calm".into(),
            arousal_high: "excited".into(),
            dot_color: "#d62728".into(),
        }
    }
}

/// Plot square in pixels on the back panel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotRect {
    pub left: f64,
    pub top: f64,
    pub size: f64,
}

pub const POSTCARD_PLOT: PlotRect = PlotRect {
    left: 750.0,
    top: 80.0,
    size: 300.0,
};

const PANEL_WIDTH: f64 = 600.0;
const DOT_RADIUS: f64 = 7.0;
const OVERLAP_OFFSET: f64 = 10.0;
const LINE_HEIGHT: f64 = 20.0;
const WRAP_CHARS: usize = 72;

impl PlotRect {
    /// Affine map of `[-1, 1]²` onto the square, y pointing up.
    pub fn to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.left + (x + 1.0) / 2.0 * self.size,
            self.top + (1.0 - y) / 2.0 * self.size,
        )
    }

    pub fn contains(&self, px: f64, py: f64) -> bool {
        (self.left..=self.left + self.size).contains(&px)
            && (self.top..=self.top + self.size).contains(&py)
    }

    /// Mirrors an out-of-bounds position back into the square.
    fn reflect(&self, px: f64, py: f64) -> (f64, f64) {
        let fold = |v: f64, lo: f64, hi: f64| {
            let v = if v < lo { 2.0 * lo - v } else { v };
            let v = if v > hi { 2.0 * hi - v } else { v };
            v.clamp(lo, hi)
        };
        (
            fold(px, self.left, self.left + self.size),
            fold(py, self.top, self.top + self.size),
        )
    }
}

/// Pixel positions for the points. A point that coincides with an earlier
/// one is pushed out radially, at an angle fixed by its label, so labels
/// stay legible.
pub fn dot_positions(points: &[CircumplexPoint], plot: &PlotRect) -> Vec<(f64, f64)> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (px, py) = plot.to_pixel(p.x, p.y);
            let earlier = points[..i].iter().filter(|q| q.x == p.x && q.y == p.y).count();
            if earlier == 0 {
                return (px, py);
            }
            let angle = f64::from(p.label) * PI / 3.0;
            let r = OVERLAP_OFFSET * earlier as f64;
            plot.reflect(px + r * angle.cos(), py - r * angle.sin())
        })
        .collect()
}

pub fn render_postcard_svg(data: &PostcardData, catalog: &Catalog) -> String {
    render_postcard_svg_with(data, catalog, &PostcardStyle::default())
}

pub fn render_postcard_svg_with(data: &PostcardData, catalog: &Catalog, style: &PostcardStyle) -> String {
    let plot = POSTCARD_PLOT;
    let back_x = PANEL_WIDTH + 40.0;

    // Lay out the text blocks first to size the canvas.
    let sentence_blocks: Vec<Vec<String>> = data
        .sentences
        .iter()
        .enumerate()
        .map(|(i, s)| wrap(&format!("{}) {}", i + 1, s), WRAP_CHARS))
        .collect();
    let cv_lines = wrap(&data.cv_sentence, WRAP_CHARS);
    let question_lines = wrap(&data.closing_question, WRAP_CHARS);
    let mut y = plot.top + plot.size + 50.0;
    let mut sentence_ys = Vec::with_capacity(sentence_blocks.len());
    for block in &sentence_blocks {
        sentence_ys.push(y);
        y += LINE_HEIGHT * block.len() as f64 + 6.0;
    }
    let camera_heading_y = y + 20.0;
    let cv_y = camera_heading_y + LINE_HEIGHT + 4.0;
    let question_y = cv_y + LINE_HEIGHT * cv_lines.len() as f64 + 20.0;
    let height = (question_y + LINE_HEIGHT * question_lines.len() as f64 + 30.0).max(520.0);
    let width = 2.0 * PANEL_WIDTH;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = num(width),
        h = num(height)
    );
    out.push_str("<style>text{font-family:sans-serif;font-size:14px;fill:#222}.label{font-size:11px;font-weight:bold}.axis-caption{font-size:11px;fill:#666}.heading{font-weight:bold}</style>\n");
    let _ = writeln!(
        out,
        r##"<rect x="0" y="0" width="{}" height="{}" fill="#ffffff"/>"##,
        num(width),
        num(height)
    );

    // Front: painting reference.
    let front = catalog.painting(&data.front_painting_id).ok();
    let (title, image_ref) = match front {
        Some(p) => (p.title.as_str(), p.image_ref.as_str()),
        None => (data.front_painting_id.as_str(), ""),
    };
    let _ = writeln!(
        out,
        r#"<g id="front" data-painting="{}">"#,
        escape(&data.front_painting_id)
    );
    let _ = writeln!(
        out,
        r##"<rect x="20.00" y="20.00" width="{}" height="{}" fill="#f4f1ea" stroke="#999"/>"##,
        num(PANEL_WIDTH - 40.0),
        num(height - 40.0)
    );
    let _ = writeln!(
        out,
        r#"<image href="{}" x="40.00" y="40.00" width="{}" height="{}" preserveAspectRatio="xMidYMid meet"/>"#,
        escape(image_ref),
        num(PANEL_WIDTH - 80.0),
        num(height - 120.0)
    );
    let _ = writeln!(
        out,
        r#"<text class="front-title" x="{}" y="{}" text-anchor="middle">{}</text>"#,
        num(PANEL_WIDTH / 2.0),
        num(height - 45.0),
        escape(title)
    );
    out.push_str("</g>\n");

    // Back.
    out.push_str("<g id=\"back\">\n");
    wrapped_text(&mut out, "heading", back_x, 50.0, LINE_HEIGHT, std::slice::from_ref(&style.heading));

    let (cx, cy) = plot.to_pixel(0.0, 0.0);
    let right = plot.left + plot.size;
    let bottom = plot.top + plot.size;
    let _ = writeln!(
        out,
        r##"<rect class="plot" x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        num(plot.left),
        num(plot.top),
        num(plot.size),
        num(plot.size)
    );
    let _ = writeln!(
        out,
        r##"<line class="axis" x1="{}" y1="{}" x2="{}" y2="{}" stroke="#888"/>"##,
        num(plot.left),
        num(cy),
        num(right),
        num(cy)
    );
    let _ = writeln!(
        out,
        r##"<line class="axis" x1="{}" y1="{}" x2="{}" y2="{}" stroke="#888"/>"##,
        num(cx),
        num(plot.top),
        num(cx),
        num(bottom)
    );
    for (x, y, anchor, caption) in [
        (plot.left, cy + 14.0, "start", &style.valence_low),
        (right, cy + 14.0, "end", &style.valence_high),
        (cx + 4.0, bottom - 4.0, "start", &style.arousal_low),
        (cx + 4.0, plot.top + 12.0, "start", &style.arousal_high),
    ] {
        let _ = writeln!(
            out,
            r#"<text class="axis-caption" x="{}" y="{}" text-anchor="{anchor}">{}</text>"#,
            num(x),
            num(y),
            escape(caption)
        );
    }

    for (p, (px, py)) in data.points.iter().zip(dot_positions(&data.points, &plot)) {
        let _ = writeln!(
            out,
            r#"<circle class="point" data-label="{}" cx="{}" cy="{}" r="{}" fill="{}"/>"#,
            p.label,
            num(px),
            num(py),
            num(DOT_RADIUS),
            escape(&style.dot_color)
        );
        let _ = writeln!(
            out,
            r#"<text class="label" x="{}" y="{}">{}</text>"#,
            num(px + DOT_RADIUS + 1.0),
            num(py - DOT_RADIUS - 1.0),
            p.label
        );
    }

    for (block, y) in sentence_blocks.iter().zip(&sentence_ys) {
        wrapped_text(&mut out, "sentence", back_x, *y, LINE_HEIGHT, block);
    }
    wrapped_text(
        &mut out,
        "heading",
        back_x,
        camera_heading_y,
        LINE_HEIGHT,
        std::slice::from_ref(&style.camera_heading),
    );
    wrapped_text(&mut out, "cv-sentence", back_x, cv_y, LINE_HEIGHT, &cv_lines);
    wrapped_text(&mut out, "closing-question", back_x, question_y, LINE_HEIGHT, &question_lines);
    out.push_str("</g>\n</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selfreport::AffectSliders;

    fn rep(idx: u32, emotion: &str, painting: &str, v: u8, a: u8, text: &str) -> SelfReport {
        SelfReport {
            emotion_id: emotion.into(),
            painting_id: painting.into(),
            sliders: AffectSliders {
                valence: v,
                arousal: a,
                control: 50,
            },
            free_text: text.into(),
            order_index: idx,
            ts: 0,
        }
    }

    #[test]
    fn report_sentences() {
        let c = Catalog::bundled();
        assert_eq!(
            sentence_for_report(&rep(2, "love", "vampire", 50, 50, "Relieved, I now know how not to feel"), &c),
            "At the \"Vampire\" you felt Relieved, I now know how not to feel"
        );
        assert_eq!(
            sentence_for_report(&rep(1, "fear", "scream", 50, 50, ""), &c),
            "At the \"Scream\" you felt \u{2026}"
        );
        assert_eq!(
            sentence_for_report(
                &rep(6, "sadness", "sick-child", 50, 50, "Lego, upstairs, rain, save, imagination going wild"),
                &c
            ),
            "At the \"Sick Child\" you felt Lego, upstairs, rain, save, imagination going wild"
        );
    }

    /// Fills each slot independently from its own word list.
    fn levels_oracle(enj: u8, eng: u8, fru: u8) -> String {
        let degree = ["not at all", "a little", "somewhat", "very"];
        let enjoy = ["not at all", "a little", "somewhat", "a lot"];
        let mut s = String::from("It seems like this experience has left you ");
        s += degree[fru as usize];
        s += " frustrated, ";
        s += degree[eng as usize];
        s += " engaged, and you enjoyed it ";
        s += enjoy[enj as usize];
        s += ".";
        s
    }

    #[test]
    fn level_sentences() {
        let l = |enjoyment_level, engagement_level, frustration_level| AffectLevels {
            enjoyment_level,
            engagement_level,
            frustration_level,
        };
        assert_eq!(
            sentence_for_levels(&l(2, 3, 3)),
            "It seems like this experience has left you very frustrated, very engaged, and you enjoyed it somewhat."
        );
        assert!(sentence_for_levels(&l(0, 0, 0))
            .ends_with("not at all frustrated, not at all engaged, and you enjoyed it not at all."));
        assert_eq!(levels_oracle(3, 0, 1), sentence_for_levels(&l(3, 0, 1)));
        assert!(sentence_for_levels(&l(3, 0, 1))
            .ends_with("a little frustrated, not at all engaged, and you enjoyed it a lot."));
        for e in 0..4 {
            for g in 0..4 {
                for f in 0..4 {
                    assert_eq!(sentence_for_levels(&l(e, g, f)), levels_oracle(e, g, f));
                }
            }
        }
    }

    #[test]
    fn compose_single_and_fallback() {
        let c = Catalog::bundled();
        let reports = vec![rep(1, "fear", "scream", 10, 90, "cold")];
        let card = compose_from_reports(&reports, None, &c).unwrap();
        assert_eq!(card.front_painting_id, "scream");
        assert_eq!(card.points.len(), 1);
        assert_eq!(card.cv_sentence, CV_FALLBACK_SENTENCE);
        assert_eq!(card.closing_question, CLOSING_QUESTION);
        assert_eq!(compose_from_reports(&[], None, &c), Err(PostcardError::NoReports));
    }

    #[test]
    fn center_point_lands_on_plot_center() {
        let plot = POSTCARD_PLOT;
        let pts = [CircumplexPoint { x: 0.0, y: 0.0, label: 1 }];
        assert_eq!(
            dot_positions(&pts, &plot),
            vec![(plot.left + plot.size / 2.0, plot.top + plot.size / 2.0)]
        );
        assert_eq!(plot.to_pixel(-1.0, 1.0), (plot.left, plot.top));
        assert_eq!(plot.to_pixel(1.0, -1.0), (plot.left + plot.size, plot.top + plot.size));
    }

    #[test]
    fn coinciding_points_are_separated_and_stay_inside() {
        let plot = POSTCARD_PLOT;
        let pts: Vec<_> = (1..=6).map(|label| CircumplexPoint { x: 1.0, y: 1.0, label }).collect();
        let pos = dot_positions(&pts, &plot);
        for (i, a) in pos.iter().enumerate() {
            assert!(plot.contains(a.0, a.1));
            for b in &pos[i + 1..] {
                assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn render_is_deterministic_and_escaped() {
        let c = Catalog::bundled();
        let reports = vec![
            rep(1, "love", "vampire", 80, 30, "<b>warm & \"safe\"</b>"),
            rep(2, "fear", "scream", 10, 90, ""),
        ];
        let card = compose_from_reports(&reports, None, &c).unwrap();
        let a = render_postcard_svg(&card, &c);
        let b = render_postcard_svg(&card, &c);
        assert_eq!(a, b);
        assert!(a.contains("&lt;b&gt;warm &amp; &quot;safe&quot;&lt;/b&gt;"));
        assert_eq!(a.matches("<circle").count(), 2);
    }
}
