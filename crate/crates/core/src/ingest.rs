//! Frame sequence loading and annotation/landmark file parsing.
//!
//! File formats (all UTF-8, LF, header mandatory):
//!
//! * annotations: `video_id,onset,apex,offset,type` with `type` one of
//!   `macro`/`micro` and `apex` optionally empty;
//! * landmarks: `pass,index,x,y` with `pass` 1 or 2 and `index` 1..=68, or a
//!   JSON object `{"pass1": [[x, y], ...], "pass2": [[x, y], ...]}` where
//!   `pass2` may be omitted. The video id of a landmark file is its file stem.
//!
//! Frame indices are 1-based; an annotation with `onset = 1` starts at the
//! first frame of the video.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One grayscale frame, 8-bit intensity, row-major.
pub type Frame = image::GrayImage;

/// Ordered grayscale frames of one video.
///
/// All frames share identical dimensions and there is at least one frame.
/// Frames are addressed 1-based: `frame(1)` is the first frame.
#[derive(Debug, Clone)]
pub struct FrameSequence {
    pub video_id: String,
    pub fps: u32,
    frames: Vec<Frame>,
}

impl FrameSequence {
    pub fn new(video_id: impl Into<String>, fps: u32, frames: Vec<Frame>) -> Result<Self> {
        let video_id = video_id.into();
        if fps == 0 {
            return Err(Error::InvalidParam("fps must be positive".into()));
        }
        let first = frames
            .first()
            .ok_or(Error::EmptyInput { op: "FrameSequence::new" })?;
        let (w, h) = first.dimensions();
        for (i, f) in frames.iter().enumerate() {
            if f.dimensions() != (w, h) {
                return Err(Error::InconsistentDimensions {
                    frame: format!("{video_id}[{}]", i + 1),
                    want_w: w,
                    want_h: h,
                    got_w: f.width(),
                    got_h: f.height(),
                });
            }
        }
        Ok(Self { video_id, fps, frames })
    }

    /// Number of frames `n`.
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// (width, height) shared by every frame.
    pub fn dimensions(&self) -> (u32, u32) {
        self.frames[0].dimensions()
    }

    /// 1-based frame access; panics when `index` is 0 or greater than `n`.
    pub fn frame(&self, index: usize) -> &Frame {
        &self.frames[index - 1]
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }
}

/// Expression kind the spotting passes and annotations distinguish.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpressionKind {
    Macro,
    Micro,
}

impl ExpressionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExpressionKind::Macro => "macro",
            ExpressionKind::Micro => "micro",
        }
    }
}

impl fmt::Display for ExpressionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExpressionKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "macro" => Ok(ExpressionKind::Macro),
            "micro" => Ok(ExpressionKind::Micro),
            other => Err(format!("unknown expression type `{other}`")),
        }
    }
}

/// One annotated expression: `[onset, offset]` frame range with optional apex.
///
/// An `offset` of 0 in the source file means the expression had not ended
/// when labeling stopped; [`normalize_ground_truth`] rewrites it to the apex.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthInterval {
    pub video_id: String,
    pub onset: usize,
    pub apex: Option<usize>,
    pub offset: usize,
    pub kind: ExpressionKind,
}

/// 68-point landmark sets for one video: first-pass points in frame
/// coordinates and optional second-pass points in crop-box coordinates.
///
/// Coordinates follow the image convention: x grows rightward, y downward.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    pub video_id: String,
    pub pass1: Vec<(f64, f64)>,
    pub pass2: Option<Vec<(f64, f64)>>,
}

impl LandmarkSet {
    pub fn new(
        video_id: impl Into<String>,
        pass1: Vec<(f64, f64)>,
        pass2: Option<Vec<(f64, f64)>>,
    ) -> Result<Self> {
        validate_points(&pass1)?;
        if let Some(p2) = &pass2 {
            validate_points(p2)?;
        }
        Ok(Self { video_id: video_id.into(), pass1, pass2 })
    }
}

pub const LANDMARK_COUNT: usize = 68;

fn validate_points(points: &[(f64, f64)]) -> Result<()> {
    if points.len() != LANDMARK_COUNT {
        return Err(Error::WrongLandmarkCount { got: points.len() });
    }
    for (i, &(x, y)) in points.iter().enumerate() {
        if x < 0.0 || y < 0.0 || !x.is_finite() || !y.is_finite() {
            return Err(Error::NegativeLandmark { index: i + 1, x, y });
        }
    }
    Ok(())
}

/// Per-dataset parameter bundle: frame rate, frame offsets `k` per kind,
/// interval length bounds, block grid and direction count, crop size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetProfile {
    pub name: String,
    pub fps: u32,
    pub k_macro: usize,
    pub k_micro: usize,
    pub micro_len_min: usize,
    pub micro_len_max: usize,
    pub macro_len_min: usize,
    /// Blocks per side of the facial grid (`b`).
    pub block_grid: usize,
    /// Number of direction bins (`a`).
    pub direction_count: usize,
    /// Side of the square the face crop is resized to.
    pub crop_size: u32,
}

impl DatasetProfile {
    pub fn k_for(&self, kind: ExpressionKind) -> usize {
        match kind {
            ExpressionKind::Macro => self.k_macro,
            ExpressionKind::Micro => self.k_micro,
        }
    }
}

/// The two shipped dataset profiles, keyed by name.
pub fn builtin_profiles() -> BTreeMap<String, DatasetProfile> {
    let mut map = BTreeMap::new();
    map.insert(
        "casme2".to_string(),
        DatasetProfile {
            name: "casme2".into(),
            fps: 30,
            k_macro: 39,
            k_micro: 12,
            micro_len_min: 7,
            micro_len_max: 16,
            macro_len_min: 17,
            block_grid: 6,
            direction_count: 4,
            crop_size: 227,
        },
    );
    map.insert(
        "samm".to_string(),
        DatasetProfile {
            name: "samm".into(),
            fps: 200,
            k_macro: 260,
            k_micro: 80,
            micro_len_min: 47,
            micro_len_max: 105,
            macro_len_min: 106,
            block_grid: 6,
            direction_count: 4,
            crop_size: 227,
        },
    );
    map
}

/// Look one profile up by name.
pub fn builtin_profile(name: &str) -> Result<DatasetProfile> {
    builtin_profiles()
        .remove(name)
        .ok_or_else(|| Error::UnknownProfile(name.to_string()))
}

const FRAME_EXTENSIONS: [&str; 5] = ["png", "pgm", "pnm", "jpg", "bmp"];

/// Load every image file of `dir` as one video, in lexicographic file order.
///
/// Color inputs are converted to grayscale with fixed luma weights
/// (0.299 R + 0.587 G + 0.114 B, rounded to nearest) so flow inputs are
/// identical across platforms.
pub fn load_frame_sequence(dir: &Path, video_id: &str, fps: u32) -> Result<FrameSequence> {
    let mut paths = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let is_frame = path.extension().and_then(|e| e.to_str()).is_some_and(|ext| {
            FRAME_EXTENSIONS.iter().any(|f| ext.eq_ignore_ascii_case(f))
        });
        if is_frame {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(Error::EmptyDirectory(dir.to_path_buf()));
    }
    paths.sort();

    let mut frames = Vec::with_capacity(paths.len());
    for path in &paths {
        let img = image::open(path).map_err(|e| Error::Image { path: path.clone(), source: e })?;
        frames.push(to_grayscale(&img));
    }
    FrameSequence::new(video_id, fps, frames)
}

/// Grayscale conversion with the fixed luma weights.
pub fn to_grayscale(img: &image::DynamicImage) -> Frame {
    match img {
        image::DynamicImage::ImageLuma8(g) => g.clone(),
        other => {
            let rgb = other.to_rgb8();
            let mut out = Frame::new(rgb.width(), rgb.height());
            for (src, dst) in rgb.pixels().zip(out.pixels_mut()) {
                let [r, g, b] = src.0;
                let luma = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
                dst.0 = [luma.round() as u8];
            }
            out
        }
    }
}

/// Parse an annotation CSV into un-normalized ground-truth records.
pub fn parse_annotations(path: &Path) -> Result<Vec<GroundTruthInterval>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Csv { path: path.to_path_buf(), source: e })?;

    {
        let headers = reader
            .headers()
            .map_err(|e| Error::Csv { path: path.to_path_buf(), source: e })?;
        let expected = ["video_id", "onset", "apex", "offset", "type"];
        if headers.iter().ne(expected) {
            return Err(Error::parse(
                path,
                1,
                format!("bad header `{}`, expected `{}`", headers.iter().collect::<Vec<_>>().join(","), expected.join(",")),
            ));
        }
    }

    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv { path: path.to_path_buf(), source: e })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 5 {
            return Err(Error::parse(path, line, format!("expected 5 fields, got {}", record.len())));
        }
        let field = |i: usize| record.get(i).unwrap_or("");
        let parse_idx = |i: usize, name: &str| -> Result<usize> {
            field(i)
                .parse::<usize>()
                .map_err(|_| Error::parse(path, line, format!("non-integer {name} `{}`", field(i))))
        };
        let apex = if field(2).is_empty() { None } else { Some(parse_idx(2, "apex")?) };
        let kind = ExpressionKind::from_str(field(4)).map_err(|msg| Error::parse(path, line, msg))?;
        out.push(GroundTruthInterval {
            video_id: field(0).to_string(),
            onset: parse_idx(1, "onset")?,
            apex,
            offset: parse_idx(3, "offset")?,
            kind,
        });
    }
    Ok(out)
}

/// Write annotations in the same CSV schema `parse_annotations` reads.
pub fn write_annotations(path: &Path, records: &[GroundTruthInterval]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::Csv { path: path.to_path_buf(), source: e })?;
    let mut emit = || -> csv::Result<()> {
        w.write_record(["video_id", "onset", "apex", "offset", "type"])?;
        for r in records {
            w.write_record([
                r.video_id.as_str(),
                &r.onset.to_string(),
                &r.apex.map_or(String::new(), |a| a.to_string()),
                &r.offset.to_string(),
                r.kind.as_str(),
            ])?;
        }
        w.flush()?;
        Ok(())
    };
    emit().map_err(|e| Error::Csv { path: path.to_path_buf(), source: e })
}

/// Resolve the `offset = 0` convention for unterminated expressions.
///
/// When the offset is 0 and an apex exists, the true interval becomes
/// `[onset, apex]`. The result always satisfies `offset >= onset >= 1`.
pub fn normalize_ground_truth(g: &GroundTruthInterval) -> Result<GroundTruthInterval> {
    let mut out = g.clone();
    if out.offset == 0 {
        match out.apex {
            Some(apex) => out.offset = apex,
            None => {
                return Err(Error::InvalidGroundTruth {
                    video_id: out.video_id,
                    msg: "offset is 0 and no apex is given".into(),
                })
            }
        }
    }
    if out.onset == 0 {
        return Err(Error::InvalidGroundTruth {
            video_id: out.video_id,
            msg: "onset must be >= 1".into(),
        });
    }
    if out.offset < out.onset {
        return Err(Error::InvalidGroundTruth {
            video_id: out.video_id,
            msg: format!("offset {} before onset {}", out.offset, out.onset),
        });
    }
    Ok(out)
}

/// Parse a landmark file (`.json` by extension, CSV otherwise).
pub fn parse_landmarks(path: &Path) -> Result<LandmarkSet> {
    let video_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("unknown")
        .to_string();
    let is_json = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        parse_landmarks_json(path, video_id)
    } else {
        parse_landmarks_csv(path, video_id)
    }
}

#[derive(Deserialize)]
struct LandmarkJson {
    pass1: Vec<(f64, f64)>,
    #[serde(default)]
    pass2: Option<Vec<(f64, f64)>>,
}

fn parse_landmarks_json(path: &Path, video_id: String) -> Result<LandmarkSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parsed: LandmarkJson =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line() as u64, e.to_string()))?;
    LandmarkSet::new(video_id, parsed.pass1, parsed.pass2)
}

fn parse_landmarks_csv(path: &Path, video_id: String) -> Result<LandmarkSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Csv { path: path.to_path_buf(), source: e })?;

    // (pass, index) -> point; validates the index range, duplicates win last.
    let mut passes: [Vec<Option<(f64, f64)>>; 2] = [vec![None; LANDMARK_COUNT], vec![None; LANDMARK_COUNT]];
    let mut seen = [false, false];
    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv { path: path.to_path_buf(), source: e })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 4 {
            return Err(Error::parse(path, line, format!("expected 4 fields, got {}", record.len())));
        }
        let field = |i: usize| record.get(i).unwrap_or("");
        let pass: usize = field(0)
            .parse()
            .map_err(|_| Error::parse(path, line, format!("bad pass `{}`", field(0))))?;
        if pass != 1 && pass != 2 {
            return Err(Error::parse(path, line, format!("pass must be 1 or 2, got {pass}")));
        }
        let index: usize = field(1)
            .parse()
            .map_err(|_| Error::parse(path, line, format!("bad index `{}`", field(1))))?;
        if !(1..=LANDMARK_COUNT).contains(&index) {
            return Err(Error::parse(path, line, format!("index must be 1..=68, got {index}")));
        }
        let x: f64 = field(2)
            .parse()
            .map_err(|_| Error::parse(path, line, format!("bad x `{}`", field(2))))?;
        let y: f64 = field(3)
            .parse()
            .map_err(|_| Error::parse(path, line, format!("bad y `{}`", field(3))))?;
        passes[pass - 1][index - 1] = Some((x, y));
        seen[pass - 1] = true;
    }

    let collect = |slots: &[Option<(f64, f64)>]| -> Result<Vec<(f64, f64)>> {
        let points: Vec<(f64, f64)> = slots.iter().filter_map(|p| *p).collect();
        if points.len() != LANDMARK_COUNT {
            return Err(Error::WrongLandmarkCount { got: points.len() });
        }
        Ok(points)
    };

    if !seen[0] {
        return Err(Error::WrongLandmarkCount { got: 0 });
    }
    let pass1 = collect(&passes[0])?;
    let pass2 = if seen[1] { Some(collect(&passes[1])?) } else { None };
    LandmarkSet::new(video_id, pass1, pass2)
}

/// Write a landmark set in the CSV schema `parse_landmarks` reads.
pub fn write_landmarks(path: &Path, lm: &LandmarkSet) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::Csv { path: path.to_path_buf(), source: e })?;
    let mut emit = || -> csv::Result<()> {
        w.write_record(["pass", "index", "x", "y"])?;
        for (pass_no, points) in [(1usize, Some(&lm.pass1)), (2, lm.pass2.as_ref())] {
            if let Some(points) = points {
                for (i, (x, y)) in points.iter().enumerate() {
                    w.write_record([
                        pass_no.to_string(),
                        (i + 1).to_string(),
                        x.to_string(),
                        y.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    };
    emit().map_err(|e| Error::Csv { path: path.to_path_buf(), source: e })
}
