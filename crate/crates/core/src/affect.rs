//! Facial action unit streams and affect scoring.
//!
//! Input is a CSV export of per-frame AU intensities (FACS 0..5 scale) with a
//! validity flag, a detector confidence and head pose angles. Scoring keeps
//! the frames that are flagged valid and confident enough, normalizes the
//! intensities to `[0, 1]`, derives a per-frame head activity from the pose
//! change rate, and averages a convex combination of those channels for each
//! affect state.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FAU_CSV_HEADER: &str = "ts_ms,valid,confidence,au06,au10,au12,au14,au17,pitch,yaw,roll";

const FIELD_NAMES: [&str; 11] = [
    "ts_ms",
    "valid",
    "confidence",
    "au06",
    "au10",
    "au12",
    "au14",
    "au17",
    "pitch",
    "yaw",
    "roll",
];

/// Upper bound of the FACS intensity scale.
pub const AU_MAX: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FauParseError {
    #[error("input is not valid UTF-8")]
    Encoding,
    #[error("header mismatch: expected `{FAU_CSV_HEADER}`")]
    HeaderMismatch,
    #[error("line {line}: {reason}")]
    RowParse { line: usize, reason: String },
    #[error("line {line}: field `{field}` out of range")]
    Range { line: usize, field: &'static str },
    #[error("line {line}: timestamp not strictly increasing")]
    NonMonotoneTimestamp { line: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FauFrame {
    pub ts_ms: i64,
    pub valid: bool,
    pub confidence: f64,
    pub au06: f64,
    pub au10: f64,
    pub au12: f64,
    pub au14: f64,
    pub au17: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub roll: f64,
}

impl FauFrame {
    /// A valid, fully confident frame with neutral face and head pose.
    pub fn neutral(ts_ms: i64) -> FauFrame {
        FauFrame {
            ts_ms,
            valid: true,
            confidence: 1.0,
            au06: 0.0,
            au10: 0.0,
            au12: 0.0,
            au14: 0.0,
            au17: 0.0,
            pitch: 0.0,
            yaw: 0.0,
            roll: 0.0,
        }
    }

    fn intensities(&self) -> [(&'static str, f64); 5] {
        [
            ("au06", self.au06),
            ("au10", self.au10),
            ("au12", self.au12),
            ("au14", self.au14),
            ("au17", self.au17),
        ]
    }

    /// Checks the range invariants; returns the offending field name.
    pub fn check(&self) -> Result<(), &'static str> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err("confidence");
        }
        for (name, v) in self.intensities() {
            if !(0.0..=AU_MAX).contains(&v) {
                return Err(name);
            }
        }
        for (name, v) in [("pitch", self.pitch), ("yaw", self.yaw), ("roll", self.roll)] {
            if !v.is_finite() {
                return Err(name);
            }
        }
        Ok(())
    }

    fn pose(&self) -> [f64; 3] {
        [self.pitch, self.yaw, self.roll]
    }
}

impl fmt::Display for FauFrame {
    /// One CSV row, without line terminator.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.ts_ms,
            u8::from(self.valid),
            self.confidence,
            self.au06,
            self.au10,
            self.au12,
            self.au14,
            self.au17,
            self.pitch,
            self.yaw,
            self.roll
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FauStream {
    pub session_id: String,
    pub frames: Vec<FauFrame>,
}

impl FauStream {
    /// Appends a batch, keeping timestamps strictly increasing across batches.
    pub fn extend(&mut self, batch: &[FauFrame]) -> Result<(), FauParseError> {
        check_monotone(self.frames.last().map(|f| f.ts_ms), batch)?;
        self.frames.extend_from_slice(batch);
        Ok(())
    }
}

/// Verifies that `batch` continues strictly after `previous`. Line numbers
/// in the error are 1-based positions within the batch.
pub fn check_monotone(previous: Option<i64>, batch: &[FauFrame]) -> Result<(), FauParseError> {
    let mut last = previous;
    for (i, frame) in batch.iter().enumerate() {
        if last.is_some_and(|t| frame.ts_ms <= t) {
            return Err(FauParseError::NonMonotoneTimestamp { line: i + 1 });
        }
        last = Some(frame.ts_ms);
    }
    Ok(())
}

/// Serializes frames in the CSV ingest format (LF line endings).
pub fn write_fau_csv(frames: &[FauFrame]) -> String {
    let mut out = String::with_capacity(64 * (frames.len() + 1));
    out.push_str(FAU_CSV_HEADER);
    out.push('\n');
    for frame in frames {
        out.push_str(&frame.to_string());
        out.push('\n');
    }
    out
}

/// Plain decimal: optional leading `-`, digits, optional `.` and digits.
fn parse_decimal(s: &str) -> Option<f64> {
    let digits = s.strip_prefix('-').unwrap_or(s);
    let (int, frac) = match digits.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (digits, None),
    };
    let all_digits = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit());
    if !all_digits(int) || frac.is_some_and(|f| !all_digits(f)) {
        return None;
    }
    s.parse().ok()
}

fn parse_integer(s: &str) -> Option<i64> {
    let digits = s.strip_prefix('-').unwrap_or(s);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

fn parse_row(line_no: usize, line: &str) -> Result<FauFrame, FauParseError> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != FIELD_NAMES.len() {
        return Err(FauParseError::RowParse {
            line: line_no,
            reason: format!("expected {} fields, found {}", FIELD_NAMES.len(), fields.len()),
        });
    }
    let bad = |i: usize| FauParseError::RowParse {
        line: line_no,
        reason: format!("malformed `{}` value `{}`", FIELD_NAMES[i], fields[i]),
    };
    let ts_ms = parse_integer(fields[0]).ok_or_else(|| bad(0))?;
    let valid = match fields[1] {
        "0" => false,
        "1" => true,
        _ => return Err(bad(1)),
    };
    let mut reals = [0.0f64; 9];
    for (k, slot) in reals.iter_mut().enumerate() {
        *slot = parse_decimal(fields[k + 2]).ok_or_else(|| bad(k + 2))?;
    }
    let frame = FauFrame {
        ts_ms,
        valid,
        confidence: reals[0],
        au06: reals[1],
        au10: reals[2],
        au12: reals[3],
        au14: reals[4],
        au17: reals[5],
        pitch: reals[6],
        yaw: reals[7],
        roll: reals[8],
    };
    frame
        .check()
        .map_err(|field| FauParseError::Range { line: line_no, field })?;
    Ok(frame)
}

/// Parses the CSV ingest format. Accepts LF or CRLF line endings and an
/// optional trailing newline; blank lines elsewhere are rejected.
pub fn parse_fau_csv(session_id: &str, bytes: &[u8]) -> Result<FauStream, FauParseError> {
    let text = std::str::from_utf8(bytes).map_err(|_| FauParseError::Encoding)?;
    let text = text.strip_suffix('\n').unwrap_or(text);
    let mut lines = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l));
    if lines.next() != Some(FAU_CSV_HEADER) {
        return Err(FauParseError::HeaderMismatch);
    }
    let mut frames: Vec<FauFrame> = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let frame = parse_row(line_no, line)?;
        if frames.last().is_some_and(|prev| frame.ts_ms <= prev.ts_ms) {
            return Err(FauParseError::NonMonotoneTimestamp { line: line_no });
        }
        frames.push(frame);
    }
    Ok(FauStream {
        session_id: session_id.to_owned(),
        frames,
    })
}

/// Per-frame head activity in `[0, 1]` for time-ordered frames: zero for
/// the first frame, then the Euclidean pose change rate divided by
/// `omega_max` (rad/s), clipped at 1.
pub fn head_activity(frames: &[FauFrame], omega_max: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(frames.len());
    for (i, frame) in frames.iter().enumerate() {
        if i == 0 {
            out.push(0.0);
            continue;
        }
        let prev = &frames[i - 1];
        let dt = (frame.ts_ms - prev.ts_ms) as f64 / 1000.0;
        let delta = frame
            .pose()
            .iter()
            .zip(prev.pose())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let h = if dt > 0.0 { delta / dt / omega_max } else { 1.0 };
        out.push(h.min(1.0));
    }
    out
}

/// Convex weights over the channels `[au06, au10, au12, au14, au17, head]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelWeights(pub [f64; 6]);

impl ChannelWeights {
    fn apply(&self, channels: &[f64; 6]) -> f64 {
        self.0.iter().zip(channels).map(|(w, c)| w * c).sum()
    }

    fn is_convex(&self) -> bool {
        self.0.iter().all(|w| w.is_finite() && *w >= 0.0)
            && (self.0.iter().sum::<f64>() - 1.0).abs() < 1e-9
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffectWeights {
    pub enjoyment: ChannelWeights,
    pub engagement: ChannelWeights,
    pub frustration: ChannelWeights,
}

impl Default for AffectWeights {
    fn default() -> Self {
        const THIRD: f64 = 1.0 / 3.0;
        AffectWeights {
            // (a6 + a12) / 2
            enjoyment: ChannelWeights([0.5, 0.0, 0.5, 0.0, 0.0, 0.0]),
            // ((a6 + a10 + a12 + a14 + a17) / 5 + h) / 2
            engagement: ChannelWeights([0.1, 0.1, 0.1, 0.1, 0.1, 0.5]),
            // (a10 + a17 + h) / 3
            frustration: ChannelWeights([0.0, THIRD, 0.0, 0.0, THIRD, THIRD]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringConfig {
    pub min_confidence: f64,
    pub min_valid_frames: usize,
    pub omega_max: f64,
    pub weights: AffectWeights,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            min_confidence: 0.75,
            min_valid_frames: 30,
            omega_max: 1.0,
            weights: AffectWeights::default(),
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err("min_confidence must lie in [0, 1]".into());
        }
        if !(self.omega_max.is_finite() && self.omega_max > 0.0) {
            return Err("omega_max must be positive".into());
        }
        let w = &self.weights;
        for (name, cw) in [
            ("enjoyment", w.enjoyment),
            ("engagement", w.engagement),
            ("frustration", w.frustration),
        ] {
            if !cw.is_convex() {
                return Err(format!("{name} weights must be non-negative and sum to 1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum ScoreError {
    #[error("only {valid} valid frames, need {required}")]
    InsufficientData { valid: usize, required: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffectScores {
    pub enjoyment: f64,
    pub engagement: f64,
    pub frustration: f64,
    pub valid_frame_count: usize,
    pub total_frame_count: usize,
    pub coverage: f64,
}

pub fn is_valid_frame(frame: &FauFrame, min_confidence: f64) -> bool {
    frame.valid && frame.confidence >= min_confidence
}

pub fn score(frames: &[FauFrame], config: &ScoringConfig) -> Result<AffectScores, ScoreError> {
    let valid: Vec<FauFrame> = frames
        .iter()
        .filter(|f| is_valid_frame(f, config.min_confidence))
        .copied()
        .collect();
    if valid.is_empty() || valid.len() < config.min_valid_frames {
        return Err(ScoreError::InsufficientData {
            valid: valid.len(),
            required: config.min_valid_frames.max(1),
        });
    }
    let heads = head_activity(&valid, config.omega_max);
    let (mut enj, mut eng, mut fru) = (0.0, 0.0, 0.0);
    for (frame, h) in valid.iter().zip(&heads) {
        let channels = [
            frame.au06 / AU_MAX,
            frame.au10 / AU_MAX,
            frame.au12 / AU_MAX,
            frame.au14 / AU_MAX,
            frame.au17 / AU_MAX,
            *h,
        ];
        enj += config.weights.enjoyment.apply(&channels);
        eng += config.weights.engagement.apply(&channels);
        fru += config.weights.frustration.apply(&channels);
    }
    let n = valid.len() as f64;
    let clamp = |x: f64| x.clamp(0.0, 1.0);
    Ok(AffectScores {
        enjoyment: clamp(enj / n),
        engagement: clamp(eng / n),
        frustration: clamp(fru / n),
        valid_frame_count: valid.len(),
        total_frame_count: frames.len(),
        coverage: valid.len() as f64 / frames.len() as f64,
    })
}

pub fn score_stream(stream: &FauStream, config: &ScoringConfig) -> Result<AffectScores, ScoreError> {
    score(&stream.frames, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AffectLevels {
    pub enjoyment_level: u8,
    pub engagement_level: u8,
    pub frustration_level: u8,
}

/// Four-point scale with half-open bins `[0, .25) [.25, .5) [.5, .75)` and
/// a closed top bin `[.75, 1]`.
pub fn quantize_level(score: f64) -> u8 {
    if score < 0.25 {
        0
    } else if score < 0.5 {
        1
    } else if score < 0.75 {
        2
    } else {
        3
    }
}

pub fn quantize_levels(s: &AffectScores) -> AffectLevels {
    AffectLevels {
        enjoyment_level: quantize_level(s.enjoyment),
        engagement_level: quantize_level(s.engagement),
        frustration_level: quantize_level(s.frustration),
    }
}
