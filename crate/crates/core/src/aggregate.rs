//! Deployment-level statistics and the per-painting emotion map.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Catalog;
use crate::postcard::PlotRect;
use crate::selection::strongest_report;
use crate::selfreport::level_to_axis;
use crate::store::ExportRecord;
use crate::svg::{escape, num};

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("dataset is not valid UTF-8")]
    Encoding,
    #[error("line {line}: {reason}")]
    Line { line: usize, reason: String },
}

/// Parses a newline-delimited export. Blank lines are skipped.
pub fn parse_dataset(bytes: &[u8]) -> Result<Vec<ExportRecord>, DatasetError> {
    let text = std::str::from_utf8(bytes).map_err(|_| DatasetError::Encoding)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| DatasetError::Line {
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmotionBin {
    pub painting_id: String,
    pub valence: u8,
    pub arousal: u8,
    pub x: f64,
    pub y: f64,
    pub count: u32,
}

/// Counts reports on `painting_id` per distinct (valence, arousal) pair.
/// Bins come back ordered by valence, then arousal.
pub fn bin_reports(dataset: &[ExportRecord], painting_id: &str) -> Vec<EmotionBin> {
    let mut counts: BTreeMap<(u8, u8), u32> = BTreeMap::new();
    for r in dataset.iter().flat_map(|s| &s.reports) {
        if r.painting_id == painting_id {
            *counts.entry((r.sliders.valence, r.sliders.arousal)).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .map(|((valence, arousal), count)| EmotionBin {
            painting_id: painting_id.to_owned(),
            valence,
            arousal,
            x: level_to_axis(valence),
            y: level_to_axis(arousal),
            count,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapPanel {
    pub painting_id: String,
    pub title: String,
    pub bins: Vec<EmotionBin>,
}

/// One panel per catalog painting, in catalog order.
pub fn emotion_map_panels(dataset: &[ExportRecord], catalog: &Catalog) -> Vec<MapPanel> {
    catalog
        .paintings()
        .map(|p| MapPanel {
            painting_id: p.id.clone(),
            title: p.title.clone(),
            bins: bin_reports(dataset, &p.id),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapStyle {
    pub columns: usize,
    pub panel_size: f64,
    pub gap: f64,
    pub r_min: f64,
    pub r_max: f64,
    /// Fill at count 1.
    pub color_low: [u8; 3],
    /// Fill at the largest count.
    pub color_high: [u8; 3],
}

impl Default for MapStyle {
    fn default() -> Self {
        MapStyle {
            columns: 3,
            panel_size: 240.0,
            gap: 50.0,
            r_min: 3.0,
            r_max: 18.0,
            color_low: [255, 255, 178],
            color_high: [215, 25, 28],
        }
    }
}

impl MapStyle {
    pub fn radius(&self, count: u32, max_count: u32) -> f64 {
        let ratio = f64::from(count) / f64::from(max_count.max(1));
        self.r_min + (self.r_max - self.r_min) * ratio.sqrt()
    }

    pub fn fill(&self, count: u32, max_count: u32) -> String {
        let t = if max_count <= 1 {
            1.0
        } else {
            f64::from(count.saturating_sub(1)) / f64::from(max_count - 1)
        };
        let t = t.clamp(0.0, 1.0);
        let mix = |a: u8, b: u8| (f64::from(a) + (f64::from(b) - f64::from(a)) * t).round() as u8;
        let [r, g, b] = [0, 1, 2].map(|i| mix(self.color_low[i], self.color_high[i]));
        format!("#{r:02x}{g:02x}{b:02x}")
    }
}

/// Renders the panels as one SVG. Radius and colour share a single scale
/// across panels so they can be compared.
pub fn render_emotion_map(panels: &[MapPanel], style: &MapStyle) -> String {
    let columns = style.columns.max(1);
    let rows = panels.len().div_ceil(columns).max(1);
    let cell = style.panel_size + style.gap;
    let width = style.gap + cell * columns as f64;
    let height = style.gap + cell * rows as f64;
    let max_count = panels
        .iter()
        .flat_map(|p| &p.bins)
        .map(|b| b.count)
        .max()
        .unwrap_or(1);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = num(width),
        h = num(height)
    );
    out.push_str("<style>text{font-family:sans-serif;font-size:13px;fill:#222}.axis-caption{font-size:10px;fill:#666}</style>\n");
    let _ = writeln!(
        out,
        r##"<rect x="0" y="0" width="{}" height="{}" fill="#ffffff"/>"##,
        num(width),
        num(height)
    );

    for (i, panel) in panels.iter().enumerate() {
        let plot = PlotRect {
            left: style.gap + cell * (i % columns) as f64,
            top: style.gap + cell * (i / columns) as f64,
            size: style.panel_size,
        };
        let (cx, cy) = plot.to_pixel(0.0, 0.0);
        let right = plot.left + plot.size;
        let bottom = plot.top + plot.size;
        let _ = writeln!(
            out,
            r#"<g class="panel" data-painting="{}">"#,
            escape(&panel.painting_id)
        );
        let _ = writeln!(
            out,
            r#"<text class="panel-title" x="{}" y="{}" text-anchor="middle">{}</text>"#,
            num(cx),
            num(plot.top - 12.0),
            escape(&panel.title)
        );
        let _ = writeln!(
            out,
            r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
            num(plot.left),
            num(plot.top),
            num(plot.size),
            num(plot.size)
        );
        let _ = writeln!(
            out,
            r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#aaa"/>"##,
            num(plot.left),
            num(cy),
            num(right),
            num(cy)
        );
        let _ = writeln!(
            out,
            r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#aaa"/>"##,
            num(cx),
            num(plot.top),
            num(cx),
            num(bottom)
        );
        let _ = writeln!(
            out,
            r#"<text class="axis-caption" x="{}" y="{}" text-anchor="end">valence</text>"#,
            num(right - 4.0),
            num(cy - 4.0)
        );
        let _ = writeln!(
            out,
            r#"<text class="axis-caption" x="{}" y="{}">arousal</text>"#,
            num(cx + 4.0),
            num(plot.top + 12.0)
        );

        // Big circles first so small ones stay visible on top.
        let mut bins: Vec<&EmotionBin> = panel.bins.iter().collect();
        bins.sort_by(|a, b| {
            b.count
                .cmp(&a.count)
                .then(a.valence.cmp(&b.valence))
                .then(a.arousal.cmp(&b.arousal))
        });
        for bin in bins {
            let (px, py) = plot.to_pixel(bin.x, bin.y);
            let _ = writeln!(
                out,
                r##"<circle class="bin" data-count="{}" cx="{}" cy="{}" r="{}" fill="{}" fill-opacity="0.85" stroke="#7f0000" stroke-width="0.5"/>"##,
                bin.count,
                num(px),
                num(py),
                num(style.radius(bin.count, max_count)),
                style.fill(bin.count, max_count)
            );
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}

/// Session outcomes that the donated export cannot show.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OutcomeCounts {
    /// Finished the visit but withheld their data.
    pub withheld: usize,
    /// Never reached a consent decision.
    pub partial: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    /// Donated plus withheld.
    pub completed: usize,
    pub donated: usize,
    pub withheld: usize,
    pub partial: usize,
    /// Over donated sessions, as are all maps below.
    pub mean_paintings_per_visitor: f64,
    /// Sessions with at least one report on the painting.
    pub engagements: BTreeMap<String, usize>,
    /// Painting of each session's first report.
    pub first_choice: BTreeMap<String, usize>,
    /// Painting of each session's strongest report.
    pub strongest: BTreeMap<String, usize>,
    /// Mean time from card issue to last event, in seconds.
    pub mean_session_duration_s: Option<f64>,
}

/// Statistics over donated sessions. Every catalog painting gets an entry
/// in each map, zero if unseen.
pub fn summary_stats(
    dataset: &[ExportRecord],
    outcomes: OutcomeCounts,
    catalog: &Catalog,
) -> SummaryStats {
    let zeroed: BTreeMap<String, usize> = catalog.paintings().map(|p| (p.id.clone(), 0)).collect();
    let mut engagements = zeroed.clone();
    let mut first_choice = zeroed.clone();
    let mut strongest = zeroed;
    let mut paintings_total = 0usize;

    for session in dataset {
        let mut seen: Vec<&str> = session.reports.iter().map(|r| r.painting_id.as_str()).collect();
        seen.sort_unstable();
        seen.dedup();
        paintings_total += seen.len();
        for p in seen {
            *engagements.entry(p.to_owned()).or_default() += 1;
        }
        if let Some(first) = session.reports.iter().min_by_key(|r| r.order_index) {
            *first_choice.entry(first.painting_id.clone()).or_default() += 1;
        }
        if let Ok(top) = strongest_report(&session.reports) {
            *strongest.entry(top.painting_id.clone()).or_default() += 1;
        }
    }

    let donated = dataset.len();
    let mean = |total: f64| if donated == 0 { 0.0 } else { total / donated as f64 };
    let mean_session_duration_s = (donated > 0).then(|| {
        mean(dataset
            .iter()
            .map(|s| (s.completed_ts - s.created_ts) as f64 / 1000.0)
            .sum())
    });
    SummaryStats {
        completed: donated + outcomes.withheld,
        donated,
        withheld: outcomes.withheld,
        partial: outcomes.partial,
        mean_paintings_per_visitor: mean(paintings_total as f64),
        engagements,
        first_choice,
        strongest,
        mean_session_duration_s,
    }
}
